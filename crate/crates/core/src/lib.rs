//! Monte-Carlo and analytic toolkit for the Ising ferromagnet used as a
//! self-correcting classical memory.
//!
//! A bit is stored by aligning every spin of a free-boundary chain or square
//! lattice; single-spin-flip Glauber dynamics then corrupt it and a majority
//! vote reads it back. The crate estimates the fidelity `F(t)` of that memory,
//! fits the effective-spin Gaussian model `(N_eff, λ)` to it, and checks the
//! sampler against exact propagation of the full master equation on small
//! lattices.

pub mod curve;
pub mod dynamics;
pub mod error;
pub mod fidelity;
pub mod fitting;
pub mod lattice;
pub mod models;
pub mod oracle;
pub mod sweep;

pub use curve::{CurveMeta, FidelityCurve};
pub use dynamics::{
    flip_probability, mc_step, run_trajectory, Glauber, ReadoutRecord, Temperature,
    TrajectoryConfig, ONSAGER_CRITICAL_KT,
};
pub use error::{Error, Result};
pub use fidelity::{estimate_fidelity, sigma_f, SampleGrid};
pub use fitting::{
    chi_squared, classify_lambda_scaling, fit_exponential_model, fit_gaussian_model, fit_linear,
    fit_through_origin, Interval, LinearFit, ModelFit, ModelKind, ScalingClassification,
    ScalingVerdict,
};
pub use lattice::{Bit, Couplings, Dimension, Geometry, Readout, ReadoutPolicy, SpinState};
pub use models::{binomial_fidelity, exponential_fidelity, gaussian_fidelity, ModelParams};
