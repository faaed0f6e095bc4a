//! Sparse conditional Granger causality networks and their decomposition into
//! a causal hierarchy (node potentials) and a circular flow.

pub mod cli;
pub mod data;
pub mod error;
pub mod export;
pub mod granger;
pub mod hhkd;
pub mod netmetrics;
pub mod regress;
pub mod synth;

pub use data::{load_panel, pca_denoise, prices_to_returns, slice_window, IngestConfig, ReturnPanel, WindowSelector, YearMonth};
pub use error::{Error, Result};
pub use granger::{estimate_network, CausalityNetwork, NetworkConfig};
pub use hhkd::{decompose, from_bidirectional, FlowDecomposition, FlowGraph};
pub use netmetrics::{connectivity, flux_sums, null_model, NullConfig, NullEnsemble, WindowReport};
pub use synth::{simulate, validate, DetectionResult, SyntheticSpec};
