//! Smoothing kernels and the convolution-smoothed check loss.
//!
//! Every kernel here is a symmetric probability density `K`. For a bandwidth
//! `h > 0` the scaled kernel is `K_h(u) = K(u / h) / h`, and the smoothed
//! check loss is `l_h = rho_tau * K_h`. Writing `rho_tau(u) = (tau - 1/2) u +
//! |u| / 2` gives
//!
//! ```text
//! l_h(u) = rho_tau(u) + (h / 2) * gap(|u| / h),   gap(s) = E|s + Z| - |s|,  Z ~ K
//! ```
//!
//! `gap` is non-negative, decreasing on `[0, inf)` and equals `kappa_1` at the
//! origin, which is where the bound `rho <= l_h <= rho + kappa_1 h / 2` comes
//! from. All five kernels have closed forms for `gap`; the quadrature route in
//! [`smoothed_check_loss_quadrature`] evaluates the convolution integral
//! directly and is kept as a cross-check.

use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::check_loss;
use crate::normal;
use crate::quadrature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Gaussian,
    Laplacian,
    Logistic,
    Uniform,
    Epanechnikov,
}

/// Moment and shape constants of a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelConstants {
    /// `sup_u K(u)`.
    pub kappa_u: f64,
    /// `int |u| K(u) du`.
    pub kappa_1: f64,
    /// `int u^2 K(u) du`.
    pub kappa_2: f64,
    /// `min_{|u| <= 1} K(u)`.
    pub kappa_l: f64,
}

impl Kernel {
    pub const ALL: [Kernel; 5] =
        [Kernel::Gaussian, Kernel::Laplacian, Kernel::Logistic, Kernel::Uniform, Kernel::Epanechnikov];

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Gaussian => "gaussian",
            Kernel::Laplacian => "laplacian",
            Kernel::Logistic => "logistic",
            Kernel::Uniform => "uniform",
            Kernel::Epanechnikov => "epanechnikov",
        }
    }

    pub fn density(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => normal::pdf(u),
            Kernel::Laplacian => 0.5 * (-u.abs()).exp(),
            Kernel::Logistic => {
                let e = (-u.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
            Kernel::Uniform => {
                if u.abs() <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            Kernel::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
        }
    }

    /// Distribution function `int_{-inf}^u K(v) dv`.
    pub fn cdf(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => normal::cdf(u),
            Kernel::Laplacian => {
                if u < 0.0 {
                    0.5 * u.exp()
                } else {
                    1.0 - 0.5 * (-u).exp()
                }
            }
            Kernel::Logistic => {
                if u >= 0.0 {
                    1.0 / (1.0 + (-u).exp())
                } else {
                    let e = u.exp();
                    e / (1.0 + e)
                }
            }
            Kernel::Uniform => (0.5 * (u + 1.0)).clamp(0.0, 1.0),
            Kernel::Epanechnikov => {
                if u <= -1.0 {
                    0.0
                } else if u >= 1.0 {
                    1.0
                } else {
                    0.5 + 0.75 * u - 0.25 * u * u * u
                }
            }
        }
    }

    pub fn scaled_density(self, bandwidth: f64, u: f64) -> Result<f64> {
        check_bandwidth(bandwidth)?;
        Ok(self.density(u / bandwidth) / bandwidth)
    }

    pub fn scaled_cdf(self, bandwidth: f64, u: f64) -> Result<f64> {
        check_bandwidth(bandwidth)?;
        Ok(self.cdf(u / bandwidth))
    }

    /// `E|s + Z| - |s|` for `Z ~ K`, evaluated at `|s|`.
    fn gap(self, s: f64) -> f64 {
        let s = s.abs();
        match self {
            Kernel::Gaussian => {
                // 2 phi(s) - 2 s Phi(-s); positive but subject to cancellation far out
                (2.0 * (normal::pdf(s) - s * normal::sf(s))).max(0.0)
            }
            Kernel::Laplacian => (-s).exp(),
            Kernel::Logistic => 2.0 * (-s).exp().ln_1p(),
            Kernel::Uniform => {
                if s < 1.0 {
                    0.5 * (1.0 - s) * (1.0 - s)
                } else {
                    0.0
                }
            }
            Kernel::Epanechnikov => {
                if s < 1.0 {
                    let r = 1.0 - s;
                    r * r * r * (3.0 + s) / 8.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Convolution-smoothed check loss `(rho_tau * K_h)(u)`.
    pub fn smoothed_check_loss(self, bandwidth: f64, tau: f64, u: f64) -> Result<f64> {
        check_bandwidth(bandwidth)?;
        check_tau(tau)?;
        Ok(check_loss(tau, u) + 0.5 * bandwidth * self.gap(u / bandwidth))
    }

    /// First derivative of the smoothed check loss: `Kbar_h(u) - (1 - tau)`.
    pub fn smoothed_check_loss_derivative(self, bandwidth: f64, tau: f64, u: f64) -> Result<f64> {
        check_bandwidth(bandwidth)?;
        check_tau(tau)?;
        Ok(self.cdf(u / bandwidth) - (1.0 - tau))
    }

    /// Half-width beyond which the kernel's remaining mass is below ~1e-16.
    pub fn effective_support(self) -> f64 {
        match self {
            Kernel::Gaussian => 12.0,
            Kernel::Laplacian | Kernel::Logistic => 45.0,
            Kernel::Uniform | Kernel::Epanechnikov => 1.0,
        }
    }

    pub fn constants(self) -> KernelConstants {
        let e1 = (-1.0f64).exp();
        match self {
            Kernel::Gaussian => KernelConstants {
                kappa_u: normal::INV_SQRT_2PI,
                kappa_1: (2.0 / PI).sqrt(),
                kappa_2: 1.0,
                kappa_l: normal::pdf(1.0),
            },
            Kernel::Laplacian => KernelConstants { kappa_u: 0.5, kappa_1: 1.0, kappa_2: 2.0, kappa_l: 0.5 * e1 },
            Kernel::Logistic => KernelConstants {
                kappa_u: 0.25,
                kappa_1: 2.0 * LN_2,
                kappa_2: PI * PI / 3.0,
                kappa_l: e1 / ((1.0 + e1) * (1.0 + e1)),
            },
            Kernel::Uniform => KernelConstants { kappa_u: 0.5, kappa_1: 0.5, kappa_2: 1.0 / 3.0, kappa_l: 0.5 },
            Kernel::Epanechnikov => KernelConstants { kappa_u: 0.75, kappa_1: 0.375, kappa_2: 0.2, kappa_l: 0.0 },
        }
    }
}

/// Smoothed check loss by direct Gauss–Legendre evaluation of
/// `int rho_tau(u - v) K_h(v) dv` on the kernel's effective support.
pub fn smoothed_check_loss_quadrature(kernel: Kernel, bandwidth: f64, tau: f64, u: f64) -> Result<f64> {
    check_bandwidth(bandwidth)?;
    check_tau(tau)?;
    let half = kernel.effective_support() * bandwidth;
    let f = |v: f64| check_loss(tau, u - v) * kernel.density(v / bandwidth) / bandwidth;
    Ok(quadrature::integrate_with_breaks(f, -half, half, &[u, 0.0], 1e-12))
}

fn check_bandwidth(bandwidth: f64) -> Result<()> {
    if bandwidth > 0.0 && bandwidth.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveBandwidth(bandwidth))
    }
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("tau must lie in (0, 1), got {tau}")))
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Kernel::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "unknown kernel `{s}` (expected one of gaussian, laplacian, logistic, uniform, epanechnikov)"
            ))
        })
    }
}
