//! Measurement as entanglement with ancillas followed by isolation of a copy.
//!
//! [`qstate`] holds registers and states, [`gates`] the rotation and
//! standard gates, [`mms`] the single readout. Repeated weak readouts live
//! in [`collapse`] and multi-event histories in [`history`]. The `mms`
//! binary is a thin wrapper over [`cli`].

pub mod cli;
pub mod collapse;
pub mod error;
pub mod gates;
pub mod history;
pub mod mms;
pub mod qstate;

pub use error::{Error, Result};
