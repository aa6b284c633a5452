//! Synthetic demand generation, the clairvoyant policy, CSV ingestion,
//! whitening and splitting.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::check_tau;
use crate::model::Dataset;
use crate::normal;

/// Law of the additive demand noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorDist {
    /// Standard normal.
    Normal,
    /// Student t with three degrees of freedom.
    StudentT3,
    /// Finite mixture of normals.
    GaussianMixture { weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64> },
}

impl ErrorDist {
    /// `0.9 N(0, 1) + 0.1 N(0, 100)`.
    pub fn contaminated_normal() -> Self {
        ErrorDist::GaussianMixture { weights: vec![0.9, 0.1], means: vec![0.0, 0.0], variances: vec![1.0, 100.0] }
    }

    pub fn validate(&self) -> Result<()> {
        if let ErrorDist::GaussianMixture { weights, means, variances } = self {
            if weights.is_empty() || weights.len() != means.len() || weights.len() != variances.len() {
                return Err(Error::InvalidParameter("mixture components must have matching, non-zero lengths".into()));
            }
            if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter("mixture weights must be non-negative and sum to 1".into()));
            }
            if variances.iter().any(|v| !(*v > 0.0 && v.is_finite())) || means.iter().any(|m| !m.is_finite()) {
                return Err(Error::InvalidParameter("mixture variances must be positive and means finite".into()));
            }
        }
        Ok(())
    }

    /// Short label used in CLI flags and reports.
    pub fn label(&self) -> &'static str {
        match self {
            ErrorDist::Normal => "normal",
            ErrorDist::StudentT3 => "t3",
            ErrorDist::GaussianMixture { .. } => "mixture",
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            ErrorDist::Normal => normal::cdf(x),
            ErrorDist::StudentT3 => {
                let s3 = 3f64.sqrt();
                0.5 + ((x / s3).atan() + s3 * x / (x * x + 3.0)) / std::f64::consts::PI
            }
            ErrorDist::GaussianMixture { weights, means, variances } => {
                weights.iter().zip(means).zip(variances).map(|((w, m), v)| w * normal::cdf((x - m) / v.sqrt())).sum()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ErrorDist::Normal => rng.sample(StandardNormal),
            ErrorDist::StudentT3 => StudentT::new(3.0).expect("valid dof").sample(rng),
            ErrorDist::GaussianMixture { weights, means, variances } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = weights.len() - 1;
                for (j, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        pick = j;
                        break;
                    }
                }
                let z: f64 = rng.sample(StandardNormal);
                means[pick] + variances[pick].sqrt() * z
            }
        }
    }
}

impl fmt::Display for ErrorDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ErrorDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(ErrorDist::Normal),
            "t3" => Ok(ErrorDist::StudentT3),
            "mixture" => Ok(ErrorDist::contaminated_normal()),
            other => Err(Error::InvalidParameter(format!(
                "unknown error distribution `{other}` (expected one of normal, t3, mixture)"
            ))),
        }
    }
}

/// `tau`-quantile of the noise law. Closed form for the normal; bisection on
/// the CDF over `[-1000, 1000]` otherwise.
pub fn error_quantile(dist: &ErrorDist, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    dist.validate()?;
    if let ErrorDist::Normal = dist {
        return Ok(normal::quantile(tau));
    }
    let (mut lo, mut hi) = (-1e3, 1e3);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if dist.cdf(mid) < tau {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q = 0.5 * (lo + hi);
    // snap symmetric medians to exactly zero
    Ok(if q.abs() < 1e-11 { 0.0 } else { q })
}

/// Linear demand model `d = x' theta + eps` with `x = (1, z)`,
/// `z ~ N(0, covariance)` and `eps` independent of `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub theta_star: Vec<f64>,
    /// Covariance of the non-intercept features, row-major `(p-1) x (p-1)`.
    pub covariance: Vec<Vec<f64>>,
    pub error_dist: ErrorDist,
    pub n: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    /// `theta* = (1.5, 1, -2.5, -1.5, 3)` with feature covariance `0.5^|j-k|`.
    pub fn benchmark(error_dist: ErrorDist, n: usize, seed: u64) -> Self {
        let covariance = (0..4).map(|j: i32| (0..4).map(|k: i32| 0.5f64.powi((j - k).abs())).collect()).collect();
        Self { theta_star: vec![1.5, 1.0, -2.5, -1.5, 3.0], covariance, error_dist, n, seed }
    }

    pub fn p(&self) -> usize {
        self.theta_star.len()
    }

    pub fn covariance_matrix(&self) -> Result<DMatrix<f64>> {
        let q = self.p().saturating_sub(1);
        if self.covariance.len() != q || self.covariance.iter().any(|r| r.len() != q) {
            return Err(Error::InvalidCovariance(format!("expected a {q} x {q} matrix")));
        }
        Ok(DMatrix::from_fn(q, q, |i, j| self.covariance[i][j]))
    }

    /// `E[x x']`: the intercept block is 1 and the feature block is the covariance.
    pub fn second_moment(&self) -> Result<DMatrix<f64>> {
        let cov = self.covariance_matrix()?;
        let p = self.p();
        Ok(DMatrix::from_fn(p, p, |i, j| match (i, j) {
            (0, 0) => 1.0,
            (0, _) | (_, 0) => 0.0,
            _ => cov[(i - 1, j - 1)],
        }))
    }

    fn cholesky(&self) -> Result<DMatrix<f64>> {
        let cov = self.covariance_matrix()?;
        if (&cov - cov.transpose()).amax() > 1e-12 {
            return Err(Error::InvalidCovariance("matrix is not symmetric".into()));
        }
        if cov.nrows() > 0 {
            let eig = cov.clone().symmetric_eigenvalues();
            if !(eig.min() > 0.0) {
                return Err(Error::InvalidCovariance(format!("minimum eigenvalue {} is not positive", eig.min())));
            }
        }
        Cholesky::new(cov)
            .map(|c| c.l())
            .ok_or_else(|| Error::InvalidCovariance("Cholesky factorization failed".into()))
    }
}

/// Draws `spec.n` observations; identical specs give identical datasets.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.n == 0 || spec.p() == 0 {
        return Err(Error::InvalidParameter("n and p must be positive".into()));
    }
    spec.error_dist.validate()?;
    let chol = spec.cholesky()?;
    let p = spec.p();
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut features = DMatrix::zeros(spec.n, p);
    let mut demands = DVector::zeros(spec.n);
    let mut z = DVector::zeros(p - 1);
    for i in 0..spec.n {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let x = &chol * &z;
        features[(i, 0)] = 1.0;
        let mut mean = spec.theta_star[0];
        for j in 1..p {
            features[(i, j)] = x[j - 1];
            mean += x[j - 1] * spec.theta_star[j];
        }
        demands[i] = mean + spec.error_dist.sample(&mut rng);
    }
    Ok(Dataset::from_parts_unchecked(demands, features))
}

/// Population-optimal coefficients: `theta*` with the noise quantile added to
/// the intercept.
pub fn true_beta_star(spec: &SyntheticSpec, tau: f64) -> Result<DVector<f64>> {
    let mut beta = DVector::from_column_slice(&spec.theta_star);
    beta[0] += error_quantile(&spec.error_dist, tau)?;
    Ok(beta)
}

/// `Sigma = E[x x']` together with `Sigma^{-1/2}`, `Sigma^{1/2}` and `Sigma^{-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Whitener {
    pub sigma_matrix: DMatrix<f64>,
    pub sqrt: DMatrix<f64>,
    pub inv_sqrt: DMatrix<f64>,
    pub inv: DMatrix<f64>,
}

pub enum WhitenerSource<'a> {
    TrueCovariance(&'a SyntheticSpec),
    Empirical(&'a Dataset),
}

impl Whitener {
    pub fn from_second_moment(sigma: DMatrix<f64>) -> Result<Self> {
        if !sigma.is_square() {
            return Err(Error::DimensionMismatch { expected: sigma.nrows(), found: sigma.ncols() });
        }
        let sym = (&sigma + sigma.transpose()) * 0.5;
        let eig = sym.clone().symmetric_eigen();
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if !(max > 0.0) || min < 1e-10 * max {
            return Err(Error::SingularCovariance { min_eigenvalue: min, max_eigenvalue: max });
        }
        let v = &eig.eigenvectors;
        let build = |f: &dyn Fn(f64) -> f64| {
            let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
            let m = v * d * v.transpose();
            (&m + m.transpose()) * 0.5
        };
        Ok(Self {
            sqrt: build(&|l| l.sqrt()),
            inv_sqrt: build(&|l| 1.0 / l.sqrt()),
            inv: build(&|l| 1.0 / l),
            sigma_matrix: sym,
        })
    }

    pub fn dim(&self) -> usize {
        self.sigma_matrix.nrows()
    }

    /// `sqrt(v' Sigma v)`.
    pub fn norm(&self, v: &DVector<f64>) -> f64 {
        (v.transpose() * &self.sigma_matrix * v)[(0, 0)].max(0.0).sqrt()
    }
}

pub fn whitener_from(source: WhitenerSource<'_>) -> Result<Whitener> {
    let sigma = match source {
        WhitenerSource::TrueCovariance(spec) => {
            spec.cholesky()?;
            spec.second_moment()?
        }
        WhitenerSource::Empirical(data) => {
            let x = data.features();
            x.transpose() * x / data.n() as f64
        }
    };
    Whitener::from_second_moment(sigma)
}

/// Reads a header-bearing CSV. The demand column is pulled out and every other
/// column becomes a feature, in file order, after a prepended intercept.
pub fn load_csv(path: impl AsRef<Path>, demand_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let demand_idx = headers
        .iter()
        .position(|h| h == demand_column)
        .ok_or_else(|| Error::MissingColumn(demand_column.to_owned()))?;

    let mut demands = Vec::new();
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(headers.len().saturating_sub(1));
        for (c, cell) in record.iter().enumerate() {
            let value: f64 =
                cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| Error::NonNumericCell {
                    row: r + 1,
                    column: headers.get(c).cloned().unwrap_or_else(|| c.to_string()),
                    value: cell.to_owned(),
                })?;
            if c == demand_idx {
                demands.push(value);
            } else {
                row.push(value);
            }
        }
        rows.push(row);
    }
    Dataset::from_raw_rows(demands, &rows)
}

/// Writes `demand` followed by the non-intercept features `x1..x{p-1}`.
pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let p = data.p();
    let mut header = vec!["demand".to_owned()];
    header.extend((1..p).map(|j| format!("x{j}")));
    writer.write_record(&header)?;
    for i in 0..data.n() {
        let mut rec = vec![data.demand(i).to_string()];
        rec.extend((1..p).map(|j| data.features()[(i, j)].to_string()));
        writer.write_record(&rec)?;
    }
    writer.flush()?;
    Ok(())
}

/// Uniformly random partition into `n_train` training rows and the rest.
pub fn train_test_split(data: &Dataset, n_train: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = data.n();
    if n_train == 0 || n_train >= n {
        return Err(Error::SplitTooLarge { n_train, n });
    }
    let (train, test) = split_indices(n, n_train, seed);
    Ok((data.subset(&train), data.subset(&test)))
}

pub(crate) fn split_indices(n: usize, n_train: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    let test = idx.split_off(n_train);
    (idx, test)
}

/// Centers every non-intercept column; returns the column means (0 for the
/// intercept) so the shift can be undone.
pub fn demean_features(data: &Dataset) -> (Dataset, DVector<f64>) {
    let mut means = data.features().row_mean().transpose();
    means[0] = 0.0;
    let mut features = data.features().clone();
    for j in 1..data.p() {
        let m = means[j];
        features.column_mut(j).add_scalar_mut(-m);
    }
    (Dataset::from_parts_unchecked(data.demands().clone(), features), means)
}
