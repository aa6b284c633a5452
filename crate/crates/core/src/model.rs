//! Newsvendor cost structure, linear ordering policies and the (smoothed)
//! empirical risks used for fitting.

use nalgebra::{DMatrix, DVector, DVectorView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{check_tau, Kernel};

/// Per-unit lost-sales penalty `b` and holding cost `h`; the cost-minimizing
/// order is the `tau = b / (b + h)` quantile of demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    b: f64,
    h: f64,
    tau: f64,
}

impl Problem {
    pub fn new(b: f64, h: f64) -> Result<Self> {
        if !(b >= 0.0 && h >= 0.0 && b.is_finite() && h.is_finite()) || b + h <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "costs must be finite and non-negative with b + h > 0, got b = {b}, h = {h}"
            )));
        }
        Ok(Self { b, h, tau: b / (b + h) })
    }

    /// Quantile-level parameterization with `b + h = 1`.
    pub fn from_quantile(tau: f64) -> Result<Self> {
        check_tau(tau)?;
        Ok(Self { b: tau, h: 1.0 - tau, tau })
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `max(tau, 1 - tau)`, the bound on `|Kbar - tau|` that drives sensitivity.
    pub fn tau_bar(&self) -> f64 {
        self.tau.max(1.0 - self.tau)
    }

    pub fn scale(&self) -> f64 {
        self.b + self.h
    }
}

/// Demand observations with their feature rows. The first feature column is
/// the intercept and is identically one.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    demands: DVector<f64>,
    features: DMatrix<f64>,
}

impl Dataset {
    pub fn new(demands: DVector<f64>, features: DMatrix<f64>) -> Result<Self> {
        let n = demands.len();
        if n == 0 {
            return Err(Error::InvalidDataset("at least one observation is required".into()));
        }
        if features.nrows() != n {
            return Err(Error::DimensionMismatch { expected: n, found: features.nrows() });
        }
        if features.ncols() == 0 {
            return Err(Error::InvalidDataset("at least the intercept column is required".into()));
        }
        if features.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::InvalidDataset("first feature column must be all ones".into()));
        }
        if demands.iter().chain(features.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite entry".into()));
        }
        Ok(Self { demands, features })
    }

    /// Builds a dataset from raw (non-intercept) feature rows, prepending the
    /// intercept column.
    pub fn from_raw_rows(demands: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let n = demands.len();
        if rows.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: rows.len() });
        }
        let q = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != q) {
            return Err(Error::DimensionMismatch { expected: q, found: bad.len() });
        }
        let features = DMatrix::from_fn(n, q + 1, |i, j| if j == 0 { 1.0 } else { rows[i][j - 1] });
        Self::new(DVector::from_vec(demands), features)
    }

    pub fn n(&self) -> usize {
        self.demands.len()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    pub fn demands(&self) -> &DVector<f64> {
        &self.demands
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn demand(&self, i: usize) -> f64 {
        self.demands[i]
    }

    /// Feature row `i` as a column vector.
    pub fn row(&self, i: usize) -> DVector<f64> {
        self.features.row(i).transpose()
    }

    /// `x_i' beta`.
    pub fn predict(&self, i: usize, beta: &DVector<f64>) -> f64 {
        self.features.row(i).iter().zip(beta.iter()).map(|(x, b)| x * b).sum()
    }

    /// Rows selected by `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let demands = DVector::from_iterator(indices.len(), indices.iter().map(|&i| self.demands[i]));
        let features = self.features.select_rows(indices);
        Dataset { demands, features }
    }

    pub(crate) fn from_parts_unchecked(demands: DVector<f64>, features: DMatrix<f64>) -> Self {
        Dataset { demands, features }
    }

    pub(crate) fn check_dim(&self, len: usize) -> Result<()> {
        if len == self.p() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.p(), found: len })
        }
    }
}

/// Linear ordering rule `q(x) = x' beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPolicy {
    pub beta: DVector<f64>,
}

impl LinearPolicy {
    pub fn new(beta: DVector<f64>) -> Self {
        Self { beta }
    }

    pub fn zeros(p: usize) -> Self {
        Self { beta: DVector::zeros(p) }
    }

    pub fn order_quantity(&self, x: DVectorView<'_, f64>) -> f64 {
        x.dot(&self.beta)
    }
}

impl From<DVector<f64>> for LinearPolicy {
    fn from(beta: DVector<f64>) -> Self {
        Self::new(beta)
    }
}

/// `h (q - d)^+ + b (d - q)^+`.
pub fn newsvendor_cost(prob: &Problem, q: f64, d: f64) -> f64 {
    prob.h * (q - d).max(0.0) + prob.b * (d - q).max(0.0)
}

/// Check loss `u (tau - 1{u < 0})`.
pub fn check_loss(tau: f64, u: f64) -> f64 {
    if u < 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

/// `(b + h) / n * sum rho_tau(d_i - x_i' beta)`.
pub fn empirical_cost(prob: &Problem, data: &Dataset, policy: &LinearPolicy) -> Result<f64> {
    data.check_dim(policy.beta.len())?;
    let total: f64 = (0..data.n()).map(|i| check_loss(prob.tau, data.demand(i) - data.predict(i, &policy.beta))).sum();
    Ok(prob.scale() * total / data.n() as f64)
}

/// `(b + h) / n * sum (rho_tau * K_h)(d_i - x_i' beta)`.
pub fn smoothed_empirical_cost(
    prob: &Problem,
    data: &Dataset,
    policy: &LinearPolicy,
    kernel: Kernel,
    bandwidth: f64,
) -> Result<f64> {
    let obj = SmoothedObjective::new(data, prob.tau, kernel, bandwidth)?;
    Ok(prob.scale() * obj.value(&policy.beta)?)
}

/// Gradient of `smoothed_empirical_cost / (b + h)`.
pub fn smoothed_gradient(
    prob: &Problem,
    data: &Dataset,
    policy: &LinearPolicy,
    kernel: Kernel,
    bandwidth: f64,
) -> Result<DVector<f64>> {
    SmoothedObjective::new(data, prob.tau, kernel, bandwidth)?.gradient(&policy.beta)
}

/// Hessian of `smoothed_empirical_cost / (b + h)`.
pub fn smoothed_hessian(
    prob: &Problem,
    data: &Dataset,
    policy: &LinearPolicy,
    kernel: Kernel,
    bandwidth: f64,
) -> Result<DMatrix<f64>> {
    SmoothedObjective::new(data, prob.tau, kernel, bandwidth)?.hessian(&policy.beta)
}

/// The scale-free smoothed risk
/// `Q(beta) = 1/n sum (rho_tau * K_h)(d_i - x_i' beta)` bound to a dataset.
///
/// Sums run sequentially over observations in index order so results are
/// reproducible bit for bit.
#[derive(Debug, Clone, Copy)]
pub struct SmoothedObjective<'a> {
    data: &'a Dataset,
    tau: f64,
    kernel: Kernel,
    bandwidth: f64,
}

impl<'a> SmoothedObjective<'a> {
    pub fn new(data: &'a Dataset, tau: f64, kernel: Kernel, bandwidth: f64) -> Result<Self> {
        check_tau(tau)?;
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::NonPositiveBandwidth(bandwidth));
        }
        Ok(Self { data, tau, kernel, bandwidth })
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn value(&self, beta: &DVector<f64>) -> Result<f64> {
        self.data.check_dim(beta.len())?;
        let total: f64 = (0..self.data.n())
            .map(|i| {
                let u = self.data.demand(i) - self.data.predict(i, beta);
                self.kernel.smoothed_check_loss(self.bandwidth, self.tau, u).expect("validated in constructor")
            })
            .sum();
        Ok(total / self.data.n() as f64)
    }

    /// Residual weight `Kbar_h(x_i' beta - d_i) - tau` of observation `i`.
    pub fn score(&self, i: usize, beta: &DVector<f64>) -> f64 {
        self.kernel.cdf((self.data.predict(i, beta) - self.data.demand(i)) / self.bandwidth) - self.tau
    }

    pub fn gradient(&self, beta: &DVector<f64>) -> Result<DVector<f64>> {
        self.data.check_dim(beta.len())?;
        let mut grad = DVector::zeros(self.data.p());
        for i in 0..self.data.n() {
            let s = self.score(i, beta);
            for (g, x) in grad.iter_mut().zip(self.data.features.row(i).iter()) {
                *g += s * x;
            }
        }
        Ok(grad / self.data.n() as f64)
    }

    pub fn hessian(&self, beta: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.data.check_dim(beta.len())?;
        let p = self.data.p();
        let mut hess = DMatrix::zeros(p, p);
        for i in 0..self.data.n() {
            let u = self.data.demand(i) - self.data.predict(i, beta);
            let w = self.kernel.density(u / self.bandwidth) / self.bandwidth;
            if w == 0.0 {
                continue;
            }
            let x = self.data.features.row(i);
            for a in 0..p {
                for c in a..p {
                    hess[(a, c)] += w * x[a] * x[c];
                }
            }
        }
        hess.fill_lower_triangle_with_upper_triangle();
        Ok(hess / self.data.n() as f64)
    }
}
