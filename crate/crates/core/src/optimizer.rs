//! Noisy smoothed gradient descent with covariate clipping, plus the
//! non-private smoothed ERM baseline and its line search.
//!
//! One iteration of the private update reads
//!
//! ```text
//! beta <- beta - (eta0 / n) * P * [ sum_i {Kbar_h(x_i' beta - d_i) - tau} clip_B(w_i) + sigma g ]
//! ```
//!
//! where, in [`UpdateMode::KnownCovariance`], `w_i = Sigma^{-1/2} x_i` and
//! `P = Sigma^{-1/2}`; in [`UpdateMode::Raw`], `w_i = x_i` and `P = I`.
//! Exactly `T` iterations always run.

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Whitener;
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::model::{Dataset, Problem, SmoothedObjective};
use crate::privacy::{calibrate_sigma, PrivacyCertificate};

const MAX_HALVINGS: usize = 60;

/// `u / max(1, |u|_2 / B)`. `B = inf` disables clipping.
pub fn clip(u: &DVector<f64>, radius: f64) -> DVector<f64> {
    let norm = u.norm();
    if norm <= radius {
        u.clone()
    } else {
        u * (radius / norm)
    }
}

/// Source of i.i.d. standard normal vectors for the gradient perturbation.
pub trait NoiseSource {
    fn standard_normal(&mut self, p: usize) -> DVector<f64>;
}

/// Reproducible noise: ChaCha20 keyed by the seed, mapped to normals with
/// `rand_distr`'s ziggurat sampler.
#[derive(Debug, Clone)]
pub struct SeededNoise {
    rng: ChaCha20Rng,
}

impl SeededNoise {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha20Rng::seed_from_u64(seed) }
    }
}

impl NoiseSource for SeededNoise {
    fn standard_normal(&mut self, p: usize) -> DVector<f64> {
        DVector::from_fn(p, |_, _| self.rng.sample(StandardNormal))
    }
}

/// Noise from an OS-seeded CSPRNG. Runs are not reproducible.
#[derive(Debug)]
pub struct SecureNoise {
    rng: StdRng,
}

impl SecureNoise {
    pub fn new() -> Self {
        Self { rng: StdRng::from_os_rng() }
    }
}

impl Default for SecureNoise {
    fn default() -> Self {
        Self::new()
    }
}

impl NoiseSource for SecureNoise {
    fn standard_normal(&mut self, p: usize) -> DVector<f64> {
        DVector::from_fn(p, |_, _| self.rng.sample(StandardNormal))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// Clip and precondition with a known `Sigma^{-1/2}`.
    KnownCovariance,
    /// Clip raw covariates; no preconditioning.
    #[default]
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub bandwidth: f64,
    pub eta0: f64,
    /// Clip radius `B`; may be infinite for non-private runs.
    pub clip: f64,
    pub iterations: usize,
    /// Target GDP level. `None` skips certification.
    pub mu: Option<f64>,
    pub sigma: f64,
    pub seed: u64,
    pub kernel: Kernel,
    pub mode: UpdateMode,
    #[serde(default)]
    pub step_rule: StepRule,
    #[serde(default)]
    pub record_trajectory: bool,
}

/// How the step size of each iteration is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StepRule {
    /// `eta0` on every iteration.
    #[default]
    Fixed,
    /// Armijo backtracking on the noise-free smoothed risk along each
    /// iteration's clipped update direction. The first trial step is `eta0`,
    /// later ones start from twice the previous accepted step. The search
    /// reads the data, so the step sizes themselves are not covered by the
    /// privacy certificate (the per-step noise-to-sensitivity ratio, and hence
    /// the GDP level of the noisy gradients, does not depend on the step).
    Backtracking { shrink: f64, c: f64 },
}

impl HyperParams {
    /// Private settings with `sigma` rounded up from `2 tau_bar B sqrt(T) / mu`.
    #[allow(clippy::too_many_arguments)]
    pub fn private(
        prob: &Problem,
        mu: f64,
        bandwidth: f64,
        eta0: f64,
        clip: f64,
        iterations: usize,
        kernel: Kernel,
        seed: u64,
    ) -> Result<Self> {
        let sigma = calibrate_sigma(mu, clip, iterations, prob.tau_bar(), true)?;
        Ok(Self {
            bandwidth,
            eta0,
            clip,
            iterations,
            mu: Some(mu),
            sigma,
            seed,
            kernel,
            mode: UpdateMode::Raw,
            step_rule: StepRule::Fixed,
            record_trajectory: false,
        })
    }

    /// Noise-free, unclipped gradient descent.
    pub fn noiseless(bandwidth: f64, eta0: f64, iterations: usize, kernel: Kernel) -> Self {
        Self {
            bandwidth,
            eta0,
            clip: f64::INFINITY,
            iterations,
            mu: None,
            sigma: 0.0,
            seed: 0,
            kernel,
            mode: UpdateMode::Raw,
            step_rule: StepRule::Fixed,
            record_trajectory: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::NonPositiveBandwidth(self.bandwidth));
        }
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(Error::InvalidParameter(format!("step size must be positive, got {}", self.eta0)));
        }
        if !(self.clip >= 1.0) {
            return Err(Error::InvalidParameter(format!("clip radius must be >= 1, got {}", self.clip)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be finite and non-negative, got {}", self.sigma)));
        }
        if let StepRule::Backtracking { shrink, c } = self.step_rule {
            check_line_search(shrink, c)?;
        }
        if let Some(mu) = self.mu {
            if !(mu > 0.0) {
                return Err(Error::NonPositiveMu(mu));
            }
        }
        Ok(())
    }
}

/// Outcome of the privacy check attached to a fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CertificateStatus {
    NotRequested,
    Certified,
    /// `sigma` was below what the requested `mu` needs.
    Unavailable {
        required_sigma: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub beta_final: DVector<f64>,
    pub trajectory: Option<Vec<DVector<f64>>>,
    pub certificate: Option<PrivacyCertificate>,
    pub certificate_status: CertificateStatus,
    /// `|n^{-1} sum_i r_i clip(w_i)|_2` at each iteration, before noise.
    pub gradient_norms: Vec<f64>,
    /// Step size used at each iteration.
    pub step_sizes: Vec<f64>,
}

/// Precomputed clipped covariates for one dataset and setting.
struct StepPlan<'a> {
    objective: SmoothedObjective<'a>,
    clipped: Vec<DVector<f64>>,
    precondition: Option<DMatrix<f64>>,
    sigma: f64,
}

impl<'a> StepPlan<'a> {
    fn new(data: &'a Dataset, prob: &Problem, hp: &HyperParams, whitener: Option<&Whitener>) -> Result<Self> {
        hp.validate()?;
        let objective = SmoothedObjective::new(data, prob.tau(), hp.kernel, hp.bandwidth)?;
        let precondition = match hp.mode {
            UpdateMode::Raw => None,
            UpdateMode::KnownCovariance => {
                let w = whitener.ok_or(Error::MissingWhitener)?;
                if w.dim() != data.p() {
                    return Err(Error::DimensionMismatch { expected: data.p(), found: w.dim() });
                }
                Some(w.inv_sqrt.clone())
            }
        };
        let clipped = (0..data.n())
            .map(|i| {
                let x = data.row(i);
                let w = match &precondition {
                    Some(m) => m * x,
                    None => x,
                };
                clip(&w, hp.clip)
            })
            .collect();
        Ok(Self { objective, clipped, precondition, sigma: hp.sigma })
    }

    /// Noise-free update direction `n^{-1} P sum_i r_i clip(w_i)` and the
    /// unpreconditioned clipped sum.
    fn direction(&self, beta: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let data = self.objective.data();
        data.check_dim(beta.len())?;
        let mut sum = DVector::zeros(beta.len());
        for (i, w) in self.clipped.iter().enumerate() {
            sum.axpy(self.objective.score(i, beta), w, 1.0);
        }
        let dir = match &self.precondition {
            Some(m) => m * &sum,
            None => sum.clone(),
        } / data.n() as f64;
        Ok((dir, sum))
    }

    /// Returns the next iterate and the norm of the clipped mean gradient.
    fn step(&self, beta: &DVector<f64>, g: &DVector<f64>, eta: f64) -> Result<(DVector<f64>, f64)> {
        let data = self.objective.data();
        data.check_dim(g.len())?;
        let (_, mut sum) = self.direction(beta)?;
        let n = data.n() as f64;
        let grad_norm = sum.norm() / n;
        if self.sigma != 0.0 {
            sum.axpy(self.sigma, g, 1.0);
        }
        let direction = match &self.precondition {
            Some(m) => m * sum,
            None => sum,
        };
        Ok((beta - direction * (eta / n), grad_norm))
    }

    fn line_search(&self, beta: &DVector<f64>, start: f64, shrink: f64, c: f64) -> Result<f64> {
        let (dir, _) = self.direction(beta)?;
        let value = self.objective.value(beta)?;
        let grad = self.objective.gradient(beta)?;
        armijo(&self.objective, beta, value, &grad, &dir, start, shrink, c)
    }
}

/// A single noisy update from `state` with the given normal draw `g`.
pub fn noisy_step(
    state: &DVector<f64>,
    data: &Dataset,
    prob: &Problem,
    hp: &HyperParams,
    whitener: Option<&Whitener>,
    g: &DVector<f64>,
) -> Result<DVector<f64>> {
    Ok(StepPlan::new(data, prob, hp, whitener)?.step(state, g, hp.eta0)?.0)
}

/// Runs exactly `hp.iterations` noisy steps from `beta0` with noise seeded by
/// `hp.seed`.
pub fn fit(
    data: &Dataset,
    prob: &Problem,
    hp: &HyperParams,
    beta0: &DVector<f64>,
    whitener: Option<&Whitener>,
) -> Result<FitResult> {
    fit_with_noise(data, prob, hp, beta0, whitener, &mut SeededNoise::new(hp.seed))
}

pub fn fit_with_noise(
    data: &Dataset,
    prob: &Problem,
    hp: &HyperParams,
    beta0: &DVector<f64>,
    whitener: Option<&Whitener>,
    noise: &mut dyn NoiseSource,
) -> Result<FitResult> {
    data.check_dim(beta0.len())?;
    if hp.kernel.constants().kappa_l == 0.0 {
        log::warn!(
            "kernel `{}` vanishes at the edge of [-1, 1]; the estimation-error guarantees assume min |u|<=1 K(u) > 0",
            hp.kernel
        );
    }
    let plan = StepPlan::new(data, prob, hp, whitener)?;
    let p = data.p();

    let mut beta = beta0.clone();
    let mut trajectory = hp.record_trajectory.then(|| vec![beta.clone()]);
    let mut gradient_norms = Vec::with_capacity(hp.iterations);
    let mut step_sizes: Vec<f64> = Vec::with_capacity(hp.iterations);
    for _ in 0..hp.iterations {
        let eta = match hp.step_rule {
            StepRule::Fixed => hp.eta0,
            StepRule::Backtracking { shrink, c } => {
                let start = step_sizes.last().map_or(hp.eta0, |e| 2.0 * e);
                plan.line_search(&beta, start, shrink, c)?
            }
        };
        let g = noise.standard_normal(p);
        let (next, gn) = plan.step(&beta, &g, eta)?;
        beta = next;
        gradient_norms.push(gn);
        step_sizes.push(eta);
        if let Some(t) = trajectory.as_mut() {
            t.push(beta.clone());
        }
    }

    let (certificate, certificate_status) = match hp.mu {
        None => (None, CertificateStatus::NotRequested),
        Some(mu) => match PrivacyCertificate::new(mu, hp.sigma, hp.iterations, hp.clip, prob.tau_bar()) {
            Ok(c) => (Some(c), CertificateStatus::Certified),
            Err(Error::InsufficientNoise { required, .. }) => {
                (None, CertificateStatus::Unavailable { required_sigma: required })
            }
            Err(Error::InvalidParameter(_)) => (None, CertificateStatus::Unavailable { required_sigma: f64::INFINITY }),
            Err(e) => return Err(e),
        },
    };

    Ok(FitResult { beta_final: beta, trajectory, certificate, certificate_status, gradient_norms, step_sizes })
}

/// A point drawn uniformly from the unit sphere in `R^p`.
pub fn random_unit_sphere(p: usize, seed: u64) -> DVector<f64> {
    let mut noise = SeededNoise::new(seed);
    loop {
        let v = noise.standard_normal(p);
        let norm = v.norm();
        if norm > 0.0 {
            return v / norm;
        }
    }
}

/// `sqrt(tau (1 - tau)) * ((p + ln n) / n)^(2/5)`.
pub fn default_bandwidth(tau: f64, n: usize, p: usize) -> f64 {
    let n = n as f64;
    (tau * (1.0 - tau)).sqrt() * ((p as f64 + n.ln()) / n).powf(0.4)
}

fn check_line_search(shrink: f64, c: f64) -> Result<()> {
    if !(shrink > 0.0 && shrink < 1.0 && c > 0.0 && c < 1.0) {
        return Err(Error::InvalidParameter(format!("line search needs shrink and c in (0, 1), got {shrink} and {c}")));
    }
    Ok(())
}

/// Backtracks along `-dir` until
/// `Q(beta - eta dir) <= Q(beta) - c eta grad . dir`.
#[allow(clippy::too_many_arguments)]
fn armijo(
    obj: &SmoothedObjective<'_>,
    beta: &DVector<f64>,
    value: f64,
    grad: &DVector<f64>,
    dir: &DVector<f64>,
    start: f64,
    shrink: f64,
    c: f64,
) -> Result<f64> {
    let slope = grad.dot(dir);
    if slope <= 0.0 {
        return Ok(start);
    }
    // Below this the decrease in Q is lost to rounding; fall back to the
    // slope test of the approximate Wolfe condition.
    let noise_floor = 1e-13 * value.abs().max(f64::MIN_POSITIVE);
    let mut eta = start;
    for _ in 0..=MAX_HALVINGS {
        let trial = beta - dir * eta;
        let trial_value = obj.value(&trial)?;
        if trial_value <= value - c * eta * slope {
            return Ok(eta);
        }
        if (trial_value - value).abs() <= noise_floor && obj.gradient(&trial)?.dot(dir) >= -(1.0 - 2.0 * c) * slope {
            return Ok(eta);
        }
        eta *= shrink;
    }
    Err(Error::LineSearchFailed(MAX_HALVINGS))
}

/// Largest `eta` in `{1, shrink, shrink^2, ...}` with
/// `Q(beta - eta grad) <= Q(beta) - c eta |grad|^2`, for the scale-free
/// smoothed risk `Q`. Once the decrease drops below rounding level the
/// approximate Wolfe slope test `grad Q(trial) . grad >= -(1 - 2c) |grad|^2`
/// is used instead.
pub fn backtracking_step_size(
    data: &Dataset,
    prob: &Problem,
    kernel: Kernel,
    bandwidth: f64,
    beta: &DVector<f64>,
    shrink: f64,
    c: f64,
) -> Result<f64> {
    check_line_search(shrink, c)?;
    let obj = SmoothedObjective::new(data, prob.tau(), kernel, bandwidth)?;
    let value = obj.value(beta)?;
    let grad = obj.gradient(beta)?;
    armijo(&obj, beta, value, &grad, &grad, 1.0, shrink, c)
}

/// Non-private minimizer of the smoothed empirical cost, started from zero.
///
/// Runs gradient descent in the metric of the empirical second moment
/// `S = X'X / n` (direction `S^{-1} grad`) with Armijo backtracking
/// (`c = 0.3`, halving); each search starts from twice the previously
/// accepted step. Falls back to plain gradients when `S` is singular. Stops
/// once `|grad|_2 <= tol`.
pub fn smoothed_erm(
    data: &Dataset,
    prob: &Problem,
    kernel: Kernel,
    bandwidth: f64,
    tol: f64,
    max_iter: usize,
) -> Result<DVector<f64>> {
    let obj = SmoothedObjective::new(data, prob.tau(), kernel, bandwidth)?;
    let x = data.features();
    let second_moment = x.transpose() * x / data.n() as f64;
    let metric = second_moment.cholesky();
    let mut beta = DVector::zeros(data.p());
    let mut eta: f64 = 1.0;
    let mut grad_norm = f64::INFINITY;
    for _ in 0..max_iter {
        let grad = obj.gradient(&beta)?;
        grad_norm = grad.norm();
        if grad_norm <= tol {
            return Ok(beta);
        }
        let dir = match &metric {
            Some(ch) => ch.solve(&grad),
            None => grad.clone(),
        };
        let value = obj.value(&beta)?;
        eta = armijo(&obj, &beta, value, &grad, &dir, (2.0 * eta).min(1e4), 0.5, 0.3)?;
        beta -= dir * eta;
    }
    if obj.gradient(&beta)?.norm() <= tol {
        return Ok(beta);
    }
    Err(Error::MaxIterExceeded { iterations: max_iter, grad_norm })
}
