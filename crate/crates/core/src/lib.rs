//! Adaptive sup-norm estimation and adaptive confidence bands for fixed-design
//! Gaussian regression, with Monte Carlo drivers that check the theory.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod band;
pub mod concentration;
pub mod error;
pub mod harness;
pub mod lepski;
pub mod local_poly;
pub mod model;
pub mod rng;
pub mod stats;
pub mod testing;
pub mod wavelet;

pub use band::{build_band, BandParams, ConfidenceBand, Regime};
pub use error::{AcbError, Result};
pub use harness::{Experiment, ExperimentConfig, Format, RunManifest, RunOutput, Table};
pub use lepski::{adaptive_estimate, LepskiParams, LepskiResult};
pub use local_poly::{CurveEstimate, EvalGrid, Kernel, LocalPolyConfig};
pub use model::{rate, simulate, FixedDesignSample, TruthFunction};
pub use wavelet::{HolderBall, WaveletCoefficients, WaveletFamily};
