//! Distributed DC optimal power flow.
//!
//! Each bus runs local multiplier, angle and dispatch updates driven by its
//! own balance residual and messages from adjacent buses. A centralized
//! solver provides reference optima, and the dense form of the iteration
//! supports contraction analysis.

pub mod cases;
pub mod cert;
pub mod engine;
pub mod export;
pub mod matrices;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod report;
