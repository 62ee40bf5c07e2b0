//! Sockets, files and command-line front ends for the imsbed testbed.
//!
//! The protocol logic lives in `imsbed-core`; this crate drives it on real
//! UDP and TCP sockets, reads and writes scenario, trace and subscriber
//! files, and hosts the `harness`, `ua`, `exam-as`, `hss` and `imsnode`
//! binaries.

pub mod cx_net;
pub mod deploy;
pub mod files;
pub mod http_net;
pub mod live;

pub use imsbed_core as core;
