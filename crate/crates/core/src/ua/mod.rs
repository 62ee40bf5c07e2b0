//! User agents: the IMS student/teacher client and a plain SIP caller/callee
//! for the standalone proxy and redirect flows.

mod agent;
mod simple;

pub use agent::{
    InboxItem, RegFailure, Registration, SubmitOutcome, UaConfig, UaError, UaNode,
    EXAM_SERVICE_USER,
};
pub use simple::{CallState, SimpleUa};
