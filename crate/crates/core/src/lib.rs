//! Matrix-free estimation of the trace and diagonal of cubical N-order tensors.
//!
//! The tensor is only touched through all-but-last-mode contraction queries
//! ([`TensorOracle::contract_all_but_last`]). Each query with random probes
//! yields an unbiased estimate of every diagonal entry `a_{i,...,i}` and of the
//! trace; [`analysis`] evaluates the exact variances of those estimates and the
//! corresponding upper bounds, and [`experiment`] reproduces the synthetic
//! studies (MARE vs. sample count, bound tightness on all-ones tensors).

pub mod analysis;
pub mod cli;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod format;
pub mod numeric;
pub mod plot;
pub mod probes;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use estimators::{EstimateKind, EstimateSeries};
pub use probes::{derive_run_seed, sample_probe_set, ProbeDistribution, ProbeSet};
pub use tensor::{CpTensor, DenseTensor, QueryOracle, TensorOracle};
