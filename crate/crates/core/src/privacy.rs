//! Gaussian differential privacy: trade-off curves, composition, noise
//! calibration for noisy smoothed gradient descent, and the conversion to
//! `(epsilon, delta)`-DP.
//!
//! Accounting is static. A run of `T` noisy steps with clip radius `B` and
//! noise scale `sigma` is `mu`-GDP whenever `sigma >= 2 tau_bar B sqrt(T) / mu`;
//! each step then spends `mu / sqrt(T)` and the steps compose to `mu`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

/// `mu`-GDP budget.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct GdpBudget(f64);

impl GdpBudget {
    pub fn new(mu: f64) -> Result<Self> {
        if mu >= 0.0 && mu.is_finite() {
            Ok(Self(mu))
        } else {
            Err(Error::NegativeBudget(mu))
        }
    }

    pub fn mu(self) -> f64 {
        self.0
    }

    pub fn tradeoff(self, alpha: f64) -> Result<f64> {
        gdp_tradeoff(self.0, alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsDelta {
    pub epsilon: f64,
    pub delta: f64,
}

impl EpsDelta {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be non-negative, got {epsilon}")));
        }
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::InvalidParameter(format!("delta must lie in [0, 1], got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::AlphaOutOfRange(alpha))
    }
}

/// `G_mu(alpha) = Phi(Phi^{-1}(1 - alpha) - mu)`, the smallest type II error
/// any level-`alpha` test can achieve against a `mu`-GDP mechanism.
pub fn gdp_tradeoff(mu: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(mu >= 0.0) {
        return Err(Error::NegativeBudget(mu));
    }
    if alpha == 0.0 {
        return Ok(1.0);
    }
    if alpha == 1.0 {
        return Ok(0.0);
    }
    // Phi^{-1}(1 - alpha) = -Phi^{-1}(alpha) avoids rounding 1 - alpha
    Ok(normal::cdf(-normal::quantile(alpha) - mu))
}

/// Composition of GDP mechanisms: `sqrt(mu_1^2 + ... + mu_k^2)`.
pub fn compose_gdp(mus: &[f64]) -> Result<f64> {
    if let Some(&bad) = mus.iter().find(|m| !(**m >= 0.0)) {
        return Err(Error::NegativeBudget(bad));
    }
    Ok(mus.iter().map(|m| m * m).sum::<f64>().sqrt())
}

/// Noise scale `2 tau_bar B sqrt(T) / mu` that makes `T` clipped noisy steps
/// `mu`-GDP. With `round_up` the value is rounded up to an integer.
pub fn calibrate_sigma(mu: f64, clip: f64, iterations: usize, tau_bar: f64, round_up: bool) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::NonPositiveMu(mu));
    }
    if !(clip >= 1.0 && clip.is_finite()) {
        return Err(Error::InvalidParameter(format!("clip radius must be finite and >= 1, got {clip}")));
    }
    if iterations == 0 {
        return Err(Error::InvalidParameter("iterations must be at least 1".into()));
    }
    if !(0.5..1.0).contains(&tau_bar) {
        return Err(Error::InvalidParameter(format!("tau_bar must lie in [0.5, 1), got {tau_bar}")));
    }
    let sigma = required_sigma(mu, clip, iterations, tau_bar);
    Ok(if round_up { sigma.ceil() } else { sigma })
}

fn required_sigma(mu: f64, clip: f64, iterations: usize, tau_bar: f64) -> f64 {
    2.0 * tau_bar * clip * (iterations as f64).sqrt() / mu
}

/// Privacy level actually delivered by noise `sigma`: `2 tau_bar B sqrt(T) / sigma`.
pub fn mu_from_sigma(sigma: f64, clip: f64, iterations: usize, tau_bar: f64) -> f64 {
    2.0 * tau_bar * clip * (iterations as f64).sqrt() / sigma
}

/// l2 sensitivity `2 tau_bar B eta0 / n` of one update, measured in the
/// `Sigma^{1/2}` metric, when a single observation changes.
pub fn one_step_sensitivity(eta0: f64, clip: f64, tau_bar: f64, n: usize) -> f64 {
    2.0 * tau_bar * clip * eta0 / n as f64
}

/// `delta` such that `mu`-GDP implies `(epsilon, delta)`-DP:
/// `Phi(-epsilon / mu + mu / 2) - e^epsilon Phi(-epsilon / mu - mu / 2)`.
pub fn gdp_delta(mu: f64, epsilon: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::NonPositiveMu(mu));
    }
    let a = -epsilon / mu;
    let delta = normal::cdf(a + mu / 2.0) - epsilon.exp() * normal::cdf(a - mu / 2.0);
    Ok(delta.clamp(0.0, 1.0))
}

/// The `(mu, delta(mu))` point of the GDP privacy profile.
pub fn gdp_to_eps_delta(mu: f64) -> Result<EpsDelta> {
    let delta = gdp_delta(mu, mu)?;
    Ok(EpsDelta { epsilon: mu, delta })
}

/// Trade-off function of `(epsilon, delta)`-DP:
/// `max{0, 1 - e^eps alpha - delta, e^-eps (1 - alpha - delta)}`.
pub fn eps_delta_tradeoff(ed: EpsDelta, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let a = 1.0 - ed.epsilon.exp() * alpha - ed.delta;
    let b = (-ed.epsilon).exp() * (1.0 - alpha - ed.delta);
    Ok(a.max(b).max(0.0))
}

/// Attests that a fit with the recorded `(sigma, T, B, tau_bar)` is `mu`-GDP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyCertificate {
    pub mu: f64,
    pub sigma: f64,
    #[serde(rename = "T")]
    pub iterations: usize,
    #[serde(rename = "B")]
    pub clip: f64,
    pub tau_bar: f64,
    pub eps_delta_at_mu: EpsDelta,
}

impl PrivacyCertificate {
    /// Rejects the certificate when `sigma < 2 tau_bar B sqrt(T) / mu`.
    pub fn new(mu: f64, sigma: f64, iterations: usize, clip: f64, tau_bar: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::NonPositiveMu(mu));
        }
        if iterations == 0 || !(clip > 0.0 && clip.is_finite()) || !(0.5..1.0).contains(&tau_bar) {
            return Err(Error::InvalidParameter(format!(
                "certificate needs T >= 1, finite B > 0 and tau_bar in [0.5, 1); got T = {iterations}, B = {clip}, tau_bar = {tau_bar}"
            )));
        }
        let required = required_sigma(mu, clip, iterations, tau_bar);
        // relative slack for sigma computed through the same formula
        if !(sigma >= required * (1.0 - 4.0 * f64::EPSILON)) {
            return Err(Error::InsufficientNoise { sigma, required });
        }
        Ok(Self { mu, sigma, iterations, clip, tau_bar, eps_delta_at_mu: gdp_to_eps_delta(mu)? })
    }

    /// Budget spent per iteration, `mu / sqrt(T)`.
    pub fn per_step_mu(&self) -> f64 {
        self.mu / (self.iterations as f64).sqrt()
    }

    pub fn is_valid(&self) -> bool {
        self.sigma >= required_sigma(self.mu, self.clip, self.iterations, self.tau_bar) * (1.0 - 4.0 * f64::EPSILON)
    }
}
