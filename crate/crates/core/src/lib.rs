//! Analytic performance model of 802.11 DCF uplink contention at a roadside
//! access point, with a slotted simulator to check it against and a
//! retry-limit optimizer on top.

pub mod cli;
pub mod dcf;
pub mod error;
pub mod optimize;
pub mod pipeline;
pub mod queue;
pub mod scenario;
pub mod sim;
pub mod traffic;

pub use error::{Error, Result};
