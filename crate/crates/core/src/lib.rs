//! Learning feature-based newsvendor ordering policies under Gaussian
//! differential privacy.
//!
//! The non-smooth newsvendor cost is replaced by its convolution with a
//! scaled kernel ([`kernels`]), which makes the empirical risk ([`model`])
//! twice differentiable. Policies are fit by noisy gradient descent on clipped
//! covariates ([`optimizer`]) with the noise calibrated by the GDP accountant
//! in [`privacy`]. [`data`] generates benchmark demand and loads CSVs, and
//! [`evaluation`] runs seeded replication studies.

// Parameter checks are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod kernels;
pub mod model;
pub mod normal;
pub mod optimizer;
pub mod privacy;
pub mod quadrature;

pub use error::{Error, Result};
pub use kernels::{Kernel, KernelConstants};
pub use model::{Dataset, LinearPolicy, Problem};
pub use optimizer::{FitResult, HyperParams, UpdateMode};
pub use privacy::{EpsDelta, GdpBudget, PrivacyCertificate};
