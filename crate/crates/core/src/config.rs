//! Experiment configuration.
//!
//! Configs are TOML documents with four sections; see the README for the
//! full grammar. Unknown keys are rejected and reported by name.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::data::ErrorDist;
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::model::Problem;
use crate::optimizer::UpdateMode;

/// A hyperparameter that is either fixed or resolved from the data (`"auto"`).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Tunable {
    #[default]
    Auto,
    Fixed(f64),
}

impl Serialize for Tunable {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Tunable::Auto => s.serialize_str("auto"),
            Tunable::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Tunable {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct TunableVisitor;
        impl Visitor<'_> for TunableVisitor {
            type Value = Tunable;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a positive number or \"auto\"")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Tunable, E> {
                if v == "auto" {
                    Ok(Tunable::Auto)
                } else {
                    v.parse::<f64>().map(Tunable::Fixed).map_err(|_| E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Tunable, E> {
                Ok(Tunable::Fixed(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Tunable, E> {
                Ok(Tunable::Fixed(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Tunable, E> {
                Ok(Tunable::Fixed(v as f64))
            }
        }
        d.deserialize_any(TunableVisitor)
    }
}

impl fmt::Display for Tunable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tunable::Auto => f.write_str("auto"),
            Tunable::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl std::str::FromStr for Tunable {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Tunable::Auto);
        }
        s.parse::<f64>()
            .map(Tunable::Fixed)
            .map_err(|_| Error::InvalidParameter(format!("expected a number or `auto`, got `{s}`")))
    }
}

/// Cost structure: either explicit `(b, h)` or a list of quantile levels with
/// `b = tau`, `h = 1 - tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub taus: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    #[default]
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default)]
    pub source: DataSource,
    /// Synthetic: error laws by label (`normal`, `t3`, `mixture`).
    #[serde(default = "default_dists")]
    pub dists: Vec<String>,
    /// Synthetic: training sample sizes.
    #[serde(default = "default_ns")]
    pub ns: Vec<usize>,
    /// Synthetic: size of the held-out set used for regret.
    #[serde(default = "default_eval_size")]
    pub eval_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv_path: Option<PathBuf>,
    #[serde(default = "default_demand_column")]
    pub demand_column: String,
    /// CSV: rows used for training in each random split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_train: Option<usize>,
    /// CSV: center features by training-split means.
    #[serde(default)]
    pub demean: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            dists: default_dists(),
            ns: default_ns(),
            eval_size: default_eval_size(),
            csv_path: None,
            demand_column: default_demand_column(),
            n_train: None,
            demean: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InitialValue {
    #[default]
    Zero,
    Sphere,
}

/// Step-size schedule for private fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StepSchedule {
    /// One step size for all iterations; `eta0 = "auto"` runs the line
    /// search once at `beta0` with trial steps `1, shrink, shrink^2, ...`.
    #[default]
    Frozen,
    /// Line search at every iteration along the clipped update direction;
    /// `eta0` is the first trial step (`"auto"` = 1).
    Backtracking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    #[serde(default)]
    pub kernel: Kernel,
    #[serde(default)]
    pub bandwidth: Tunable,
    #[serde(default)]
    pub eta0: Tunable,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_clip")]
    pub clip: f64,
    #[serde(default)]
    pub mode: UpdateMode,
    #[serde(default)]
    pub beta0: InitialValue,
    #[serde(default)]
    pub step_schedule: StepSchedule,
    #[serde(default = "default_shrink")]
    pub shrink: f64,
    /// Armijo sufficient-decrease constant.
    #[serde(default = "default_armijo")]
    pub armijo_c: f64,
    /// Gradient-norm tolerance for the non-private smoothed ERM.
    #[serde(default = "default_erm_tol")]
    pub erm_tol: f64,
    #[serde(default = "default_erm_max_iter")]
    pub erm_max_iter: usize,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            kernel: Kernel::Gaussian,
            bandwidth: Tunable::Auto,
            eta0: Tunable::Auto,
            iterations: default_iterations(),
            clip: default_clip(),
            mode: UpdateMode::Raw,
            beta0: InitialValue::Zero,
            step_schedule: StepSchedule::Frozen,
            shrink: default_shrink(),
            armijo_c: default_armijo(),
            erm_tol: default_erm_tol(),
            erm_max_iter: default_erm_max_iter(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacySection {
    #[serde(default = "default_mus")]
    pub mus: Vec<f64>,
    /// Also fit the non-private smoothed ERM baseline.
    #[serde(default = "default_true")]
    pub nonprivate: bool,
}

impl Default for PrivacySection {
    fn default() -> Self {
        Self { mus: default_mus(), nonprivate: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    #[serde(default)]
    pub jobs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregates: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { reps: default_reps(), seed: 0, jobs: 0, rows: None, aggregates: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub problem: ProblemSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub privacy: PrivacySection,
    #[serde(default)]
    pub run: RunSection,
}

fn default_dists() -> Vec<String> {
    vec!["normal".into()]
}
fn default_ns() -> Vec<usize> {
    vec![400]
}
fn default_eval_size() -> usize {
    1_000_000
}
fn default_demand_column() -> String {
    "demand".into()
}
fn default_iterations() -> usize {
    10
}
fn default_clip() -> f64 {
    2.0
}
fn default_shrink() -> f64 {
    0.5
}
fn default_armijo() -> f64 {
    0.3
}
fn default_erm_tol() -> f64 {
    1e-8
}
fn default_erm_max_iter() -> usize {
    100_000
}
fn default_mus() -> Vec<f64> {
    vec![0.9, 0.5, 0.3]
}
fn default_true() -> bool {
    true
}
fn default_reps() -> usize {
    1
}

impl ExperimentConfig {
    /// The settings behind the synthetic regret study: `tau = 1/2`, normal
    /// noise, `n = 400`, `T = 10`, `B = 2`, `mu` in {0.9, 0.5, 0.3}, known
    /// covariance, per-iteration line search.
    pub fn benchmark() -> Self {
        Self {
            problem: ProblemSection { b: None, h: None, taus: vec![0.5] },
            fit: FitSection {
                mode: UpdateMode::KnownCovariance,
                step_schedule: StepSchedule::Backtracking,
                ..FitSection::default()
            },
            ..Self::default()
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_owned()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::FileNotFound(path.to_path_buf()));
        }
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.problems()?;
        if let Some(bad) = self.privacy.mus.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
            return Err(Error::NonPositiveMu(*bad));
        }
        if self.privacy.mus.is_empty() && !self.privacy.nonprivate {
            return Err(Error::Config("nothing to fit: `mus` is empty and `nonprivate` is false".into()));
        }
        if self.run.reps == 0 {
            return Err(Error::Config("`reps` must be at least 1".into()));
        }
        if self.fit.iterations == 0 {
            return Err(Error::Config("`iterations` must be at least 1".into()));
        }
        if !(self.fit.clip >= 1.0) {
            return Err(Error::Config(format!("`clip` must be >= 1, got {}", self.fit.clip)));
        }
        if !(self.fit.shrink > 0.0 && self.fit.shrink < 1.0 && self.fit.armijo_c > 0.0 && self.fit.armijo_c < 1.0) {
            return Err(Error::Config("`shrink` and `armijo_c` must lie in (0, 1)".into()));
        }
        for t in [self.fit.bandwidth, self.fit.eta0] {
            if let Tunable::Fixed(v) = t {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!("fixed bandwidth and step size must be positive, got {v}")));
                }
            }
        }
        match self.data.source {
            DataSource::Synthetic => {
                self.error_dists()?;
                if self.data.ns.is_empty() || self.data.ns.iter().any(|&n| n < 2) {
                    return Err(Error::Config("`ns` must list sample sizes of at least 2".into()));
                }
                if self.data.eval_size == 0 {
                    return Err(Error::Config("`eval_size` must be positive".into()));
                }
            }
            DataSource::Csv => {
                if self.data.csv_path.is_none() {
                    return Err(Error::Config("`csv_path` is required when source = \"csv\"".into()));
                }
                if self.data.n_train.is_none() {
                    return Err(Error::Config("`n_train` is required when source = \"csv\"".into()));
                }
            }
        }
        Ok(())
    }

    /// One problem per configured cost setting.
    pub fn problems(&self) -> Result<Vec<Problem>> {
        let p = &self.problem;
        match (p.b, p.h, p.taus.is_empty()) {
            (Some(b), Some(h), true) => Ok(vec![Problem::new(b, h)?]),
            (None, None, false) => p.taus.iter().map(|&t| Problem::from_quantile(t)).collect(),
            (None, None, true) => Err(Error::Config("[problem] needs either `b` and `h` or `taus`".into())),
            _ => Err(Error::Config("[problem] takes either both `b` and `h`, or `taus`, not a mix".into())),
        }
    }

    pub fn error_dists(&self) -> Result<Vec<ErrorDist>> {
        self.data.dists.iter().map(|d| d.parse().map_err(|e: Error| Error::Config(e.to_string()))).collect()
    }
}
