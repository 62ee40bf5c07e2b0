//! CSCF state machines, trigger evaluation and the standalone proxy and
//! redirect servers.

mod forward;
mod icscf;
mod ifc;
mod pcscf;
mod scscf;
mod standalone;

pub use icscf::Icscf;
pub use ifc::{evaluate_ifc, TriggerCondition, TriggerRule};
pub use pcscf::{Pcscf, UaRoute};
pub use scscf::{Binding, Scscf, ScscfConfig, EXAM_EVENT, MAX_EXPIRES};
pub use standalone::{LocationTable, ProxyServer, RedirectServer};
