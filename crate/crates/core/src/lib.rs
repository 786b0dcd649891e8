//! Uplink model of an aerial cell-free network: ground users reach UAV-mounted
//! relays (UxNBs) over a sub-6 GHz access link, and the relays forward to a
//! high-altitude platform (HAPS) over a THz backhaul.
//!
//! The crate evaluates the closed-form SINR, validates it with a Monte Carlo
//! link chain, and optimises UxNB power split and placement for max-min SINR.

pub mod baselines;
pub mod channel;
pub mod error;
pub mod experiment;
pub mod linkchain;
pub mod optimizer;
pub mod rate;
pub mod rng;
pub mod scenario;
pub mod serde_num;
pub mod socp;

pub use error::{Error, Result};
