//! Deterministic simulation of federated learning secured by BB84 key
//! agreement and pairwise additive masking.
//!
//! - [`qkd`]: BB84 sessions, QBER, privacy amplification.
//! - [`masking`]: pairwise KDF, `±γ` masks, secure aggregation, leakage proxies.
//! - [`tasks`]: synthetic channel-estimation and radar-segmentation tasks,
//!   their models, the local trainer and metrics.
//! - [`fl`]: federated rounds with QBER-gated aborts.
//! - [`experiment`]: declarative experiment runs and CSV reports.

pub mod bits;
pub mod experiment;
pub mod fl;

pub mod hashing;
pub mod masking;
pub mod params;
pub mod qkd;
pub mod rng;
pub mod tasks;

pub use bits::BitString;
pub use params::{ParamVec, Tensor};
