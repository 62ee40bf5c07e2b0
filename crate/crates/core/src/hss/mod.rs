//! Home subscriber store and the Cx-lite query protocol.

mod cx;
mod profile;
mod store;

pub use cx::{Assignment, CxClient, CxError, CxMessage, CxOp, CxResult, LocalCx};
pub use profile::{PasskeyHash, ProfileRole, RegistrationState, SubscriberProfile};
pub use store::{HssError, HssFile, HssStore, DEFAULT_SCSCF};
