//! Multi-realization analyses built on the reservoir: SNR curves, the
//! closed-form laws they are compared to, and the figure experiments.

pub mod experiment;
pub mod laws;
pub mod runner;
pub mod sim;
pub mod snr;
