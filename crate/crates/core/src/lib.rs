//! From-scratch dense-network training engine comparing three regimes:
//! backpropagation, the Forward-Forward algorithm, and FFA-pretrain +
//! backprop-refine, with label-overlay data synthesis and ROC-AUC /
//! error-rate evaluation. Deterministic from a single root seed.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod history;
pub mod hybrid;
pub mod math;
pub mod metrics;
pub mod network;
pub mod optim;
pub mod train_bp;
pub mod train_ffa;

pub use error::{Error, Result};
