//! Time-resolved return of a monostatic lidar sounding a stratified
//! elastic-scattering medium.
//!
//! The crate computes the particle return rate per emitted particle in the
//! single- and double-scattering approximations (closed form plus adaptive
//! quadrature) and cross-validates both against an independent, order-tagged
//! Monte Carlo transport oracle that makes none of the analytic
//! approximations.
//!
//! Modules:
//! - [`medium`]: extinction profile and phase function of the half-space.
//! - [`geometry`]: source/detector geometry, time grid, validity checks.
//! - [`single_scatter`]: attenuation kernel and the lidar equation `I1(t)`.
//! - [`double_scatter`]: the `(z1, z2)` double-scattering integral `I21(t)`
//!   with corner handling, plus `I22`/`I23` bounds.
//! - [`montecarlo`]: analog and next-event photon transport with
//!   reproducible parallel tallies.
//! - [`config`] / [`runner`]: file-driven orchestration used by the CLI.

// Guards are written `!(x > y)` on purpose: the negation also rejects NaN,
// which `x <= y` would silently accept.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod double_scatter;
pub mod error;
pub mod geometry;
pub mod medium;
pub mod montecarlo;
pub mod quad2d;
pub mod runner;
pub mod single_scatter;

pub use config::{load_config, RunConfig, RunMode};
pub use double_scatter::{
    d0_contains, double_attenuation, double_scatter_integrand, double_scatter_return, i22_bound,
    i23_bound, D0Point, DoubleScatter, QuadratureConfig,
};
pub use error::{ConfigError, Error};
pub use geometry::{
    check_double_scatter_validity, check_far_field, DetectorGeometry, FarField, TimeGrid,
};
pub use medium::{
    ExtinctionProfile, MediumModel, MediumSpec, PhaseApproximationMode, PhaseFunction,
};
pub use montecarlo::{estimate_returns, EstimatorMode, McConfig, McTally, OrderClass, RngStream};
pub use runner::{run, ReturnSignal};
pub use single_scatter::{attenuation, single_scatter_return, AttenuationQuery};
