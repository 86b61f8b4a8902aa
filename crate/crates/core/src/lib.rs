//! Parallel cyclic reduction (PCR) for Markovian sequential computations.
//!
//! A sequence `z_l = f_l(z_{l-1})` is collated into one nonlinear system whose
//! Newton linearization is block bidiagonal with identity diagonal blocks.
//! That system is solved in `ceil(log2 L)` parallel reduction steps instead of
//! `L` sequential substitutions.
//!
//! The numerical core is generic over the scalar type ([`Scalar`]); the
//! aliases below fix it to `f64`, which is what the benchmarks and training
//! loop use.

pub mod data;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod newton;
pub mod nn;
pub mod parallel;
pub mod pcr;
pub mod scalar;
pub mod sequences;

pub use error::{Error, Result};
pub use linalg::{DenseMatrix, DenseVector};
pub use newton::{newton_solve, NewtonConfig, NewtonReport, StopReason};
pub use parallel::Workers;
pub use pcr::{
    forward_substitution_solve, pcr_reduce_step, pcr_solve, BlockBidiagSystem, PcrTrace,
};
pub use scalar::Scalar;
pub use sequences::MarkovSequence;

/// Library version, stamped into every CSV metadata line.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type Matrix = DenseMatrix<f64>;
pub type Vector = DenseVector<f64>;
pub type System = BlockBidiagSystem<f64>;
pub type Report = NewtonReport<f64>;
pub type Config = NewtonConfig<f64>;
pub type Mlp = nn::MlpParams<f64>;
pub type ResNet = nn::ResNetParams<f64>;

pub type Matrix32 = DenseMatrix<f32>;
pub type Vector32 = DenseVector<f32>;
pub type System32 = BlockBidiagSystem<f32>;
pub type Mlp32 = nn::MlpParams<f32>;
