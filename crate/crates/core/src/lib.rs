//! Core of the imsbed signaling testbed.
//!
//! Everything here is sans-IO: SIP parsing and serialization, the transaction
//! layer, the CSCF/HSS/XDMS/application-server/user-agent state machines and
//! the virtual-time simulator that drives them. Nodes implement [`node::Node`]
//! and emit [`node::Effect`]s; the `imsbed` crate supplies sockets, files and
//! command-line front ends.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod endpoint;
pub mod exam;
pub mod harness;
pub mod hss;
pub mod http;
pub mod ims;
pub mod node;
pub mod sip;
pub mod ua;
pub mod xdms;

mod digest;

/// Home domain used by the bundled fixtures.
pub const HOME_DOMAIN: &str = "ims.kau.test";
