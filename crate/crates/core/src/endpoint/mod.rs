//! Transport addresses, timers, transactions, subscriptions and the
//! simulated network.

mod addr;
mod sim;
mod subscription;
mod time;
mod timers;
mod topology;
mod transaction;

pub use addr::{AddressError, NetAddress};
pub use sim::{Disposition, LossConfig, SimNetwork, WireEvent, DEFAULT_LATENCY_MS};
pub use subscription::{DialogId, SubState, Subscription};
pub use time::Instant;
pub use timers::TimerConfig;
pub use topology::{Link, NodeSpec, Role, Topology, TopologyError};
pub use transaction::{
    ClientTransaction, EndpointError, Inbound, ResponseMatch, TimeoutIndication, TimerAction,
    TransactionLayer, TxKey, TxState,
};
