use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dpnv_core::config::{DataSource, ExperimentConfig, StepSchedule, Tunable};
use dpnv_core::data::{
    generate_synthetic, load_csv, whitener_from, write_csv, ErrorDist, SyntheticSpec, WhitenerSource,
};
use dpnv_core::evaluation::{derive_seed, out_of_sample_cost, run_replications};
use dpnv_core::model::{empirical_cost, smoothed_empirical_cost};
use dpnv_core::optimizer::{
    backtracking_step_size, default_bandwidth, random_unit_sphere, smoothed_erm, CertificateStatus, StepRule,
};
use dpnv_core::privacy::{calibrate_sigma, gdp_to_eps_delta};
use dpnv_core::{optimizer, Error, HyperParams, Kernel, LinearPolicy, PrivacyCertificate, Problem, UpdateMode};
use nalgebra::DVector;
use serde_json::{json, Value};

use crate::{BenchArgs, CostArgs, DistArg, EvaluateArgs, FitArgs, PrivacyArgs, SimulateArgs};

const ERM_TOL: f64 = 1e-8;
const ERM_MAX_ITER: usize = 100_000;

/// Maps an error chain to the process exit code.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return core_code(e);
        }
        if cause.downcast_ref::<std::io::Error>().is_some() || cause.downcast_ref::<serde_json::Error>().is_some() {
            return 3;
        }
    }
    2
}

fn core_code(e: &Error) -> u8 {
    match e {
        Error::FileNotFound(_)
        | Error::Io(_)
        | Error::Csv(_)
        | Error::MissingColumn(_)
        | Error::NonNumericCell { .. } => 3,
        Error::InsufficientNoise { .. } => 4,
        Error::Replication { source, .. } => core_code(source),
        _ => 2,
    }
}

impl CostArgs {
    fn problem(&self) -> Result<Option<Problem>> {
        Ok(match (self.b, self.h, self.tau) {
            (Some(b), Some(h), None) => Some(Problem::new(b, h)?),
            (None, None, Some(tau)) => Some(Problem::from_quantile(tau)?),
            (None, None, None) => None,
            _ => return Err(Error::InvalidParameter("give both --b and --h, or --tau".into()).into()),
        })
    }

    fn required(&self) -> Result<Problem> {
        self.problem()?
            .ok_or_else(|| Error::InvalidParameter("a cost structure is required: --b and --h, or --tau".into()).into())
    }
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let dist = match a.dist {
        DistArg::Normal => ErrorDist::Normal,
        DistArg::T3 => ErrorDist::StudentT3,
        DistArg::Mixture => ErrorDist::contaminated_normal(),
    };
    if a.n == 0 {
        return Err(Error::InvalidParameter("--n must be positive".into()).into());
    }
    let data = generate_synthetic(&SyntheticSpec::benchmark(dist, a.n, a.seed))?;
    write_csv(&data, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn problem_json(prob: &Problem) -> Value {
    json!({ "b": prob.b(), "h": prob.h(), "tau": prob.tau() })
}

pub fn fit(a: FitArgs) -> Result<()> {
    let prob = a.cost.required()?;
    if let Some(mu) = a.mu {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::NonPositiveMu(mu).into());
        }
    }
    let data = load_csv(&a.input, &a.demand_column)?;
    let kernel: Kernel = a.kernel.into();
    let bandwidth = match a.bandwidth {
        Tunable::Fixed(v) => v,
        Tunable::Auto => default_bandwidth(prob.tau(), data.n().max(2), data.p()),
    };

    let report = if a.nonprivate {
        let beta = smoothed_erm(&data, &prob, kernel, bandwidth, ERM_TOL, ERM_MAX_ITER)?;
        let policy = LinearPolicy::new(beta.clone());
        json!({
            "method": "smoothed_erm",
            "beta": beta.as_slice(),
            "certificate": Value::Null,
            "problem": problem_json(&prob),
            "diagnostics": {
                "n": data.n(),
                "p": data.p(),
                "kernel": kernel.name(),
                "bandwidth": bandwidth,
                "tolerance": ERM_TOL,
                "smoothed_cost": smoothed_empirical_cost(&prob, &data, &policy, kernel, bandwidth)?,
                "empirical_cost": empirical_cost(&prob, &data, &policy)?,
            },
        })
    } else {
        let mu = a.mu.expect("clap requires --mu without --nonprivate");
        let beta0 = if a.sphere_init {
            random_unit_sphere(data.p(), derive_seed(a.seed, &[1]))
        } else {
            DVector::zeros(data.p())
        };
        let schedule: StepSchedule = a.step_schedule.into();
        let eta0 = match (a.eta0, schedule) {
            (Tunable::Fixed(v), _) => v,
            (Tunable::Auto, StepSchedule::Frozen) => {
                log::warn!("eta0 = auto runs a line search on the private data; the step size is not covered by the certificate");
                backtracking_step_size(&data, &prob, kernel, bandwidth, &beta0, 0.5, 0.3)?
            }
            (Tunable::Auto, StepSchedule::Backtracking) => 1.0,
        };
        let mut hp = HyperParams::private(&prob, mu, bandwidth, eta0, a.clip, a.iterations, kernel, a.seed)?;
        if let Some(s) = a.sigma {
            hp.sigma = s;
        }
        hp.mode = a.mode.into();
        if schedule == StepSchedule::Backtracking {
            hp.step_rule = StepRule::Backtracking { shrink: 0.5, c: 0.3 };
        }
        let whitener = match hp.mode {
            UpdateMode::KnownCovariance => {
                log::warn!("known_covariance mode on a CSV uses the empirical second moment of the input");
                Some(whitener_from(WhitenerSource::Empirical(&data))?)
            }
            UpdateMode::Raw => None,
        };
        let res = optimizer::fit(&data, &prob, &hp, &beta0, whitener.as_ref())?;
        let certificate = match res.certificate_status {
            CertificateStatus::Certified => res.certificate,
            CertificateStatus::Unavailable { required_sigma } => {
                return Err(Error::InsufficientNoise { sigma: hp.sigma, required: required_sigma }.into())
            }
            CertificateStatus::NotRequested => None,
        };
        let policy = LinearPolicy::new(res.beta_final.clone());
        json!({
            "method": "noisy_gradient_descent",
            "beta": res.beta_final.as_slice(),
            "certificate": certificate,
            "problem": problem_json(&prob),
            "diagnostics": {
                "n": data.n(),
                "p": data.p(),
                "kernel": kernel.name(),
                "bandwidth": bandwidth,
                "eta0": eta0,
                "step_schedule": schedule,
                "mode": hp.mode,
                "iterations": hp.iterations,
                "clip": hp.clip,
                "sigma": hp.sigma,
                "seed": hp.seed,
                "beta0": beta0.as_slice(),
                "step_sizes": res.step_sizes,
                "gradient_norms": res.gradient_norms,
                "smoothed_cost": smoothed_empirical_cost(&prob, &data, &policy, kernel, bandwidth)?,
                "empirical_cost": empirical_cost(&prob, &data, &policy)?,
            },
        })
    };
    let text = serde_json::to_string_pretty(&report)?;
    fs::write(&a.out, text + "\n").with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    if !a.fit.exists() {
        return Err(Error::FileNotFound(a.fit.clone()).into());
    }
    let fitted: Value =
        serde_json::from_str(&fs::read_to_string(&a.fit)?).with_context(|| format!("parsing {}", a.fit.display()))?;
    let beta: Vec<f64> = serde_json::from_value(fitted["beta"].clone())
        .with_context(|| format!("{} has no numeric `beta` array", a.fit.display()))?;
    let prob = match a.cost.problem()? {
        Some(p) => p,
        None => {
            let b = fitted["problem"]["b"].as_f64();
            let h = fitted["problem"]["h"].as_f64();
            match (b, h) {
                (Some(b), Some(h)) => Problem::new(b, h)?,
                _ => {
                    return Err(
                        Error::InvalidParameter("no cost structure given and none in the fit file".into()).into()
                    )
                }
            }
        }
    };
    let data = load_csv(&a.input, &a.demand_column)?;
    let policy = LinearPolicy::new(DVector::from_vec(beta));
    let report = json!({
        "n": data.n(),
        "problem": problem_json(&prob),
        "oos_cost": out_of_sample_cost(&prob, &policy, &data)?,
    });
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match a.out {
        Some(path) => fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn privacy(a: PrivacyArgs) -> Result<()> {
    let prob = a.cost.problem()?.unwrap_or(Problem::from_quantile(0.5)?);
    let tau_bar = prob.tau_bar();
    let sigma = match a.sigma {
        Some(s) => s,
        None => calibrate_sigma(a.mu, a.clip, a.iterations, tau_bar, true)?,
    };
    PrivacyCertificate::new(a.mu, sigma, a.iterations, a.clip, tau_bar)?;
    let ed = gdp_to_eps_delta(a.mu)?;
    let out = json!({
        "mu": a.mu,
        "sigma": sigma,
        "T": a.iterations,
        "B": a.clip,
        "tau_bar": tau_bar,
        "epsilon": ed.epsilon,
        "delta": ed.delta,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn default_output(config: &Path, suffix: &str) -> PathBuf {
    let stem = config.file_stem().and_then(|s| s.to_str()).unwrap_or("bench");
    PathBuf::from(format!("{stem}_{suffix}.csv"))
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(r) = a.reps {
        cfg.run.reps = r;
    }
    if let Some(n) = a.n {
        cfg.data.ns = vec![n];
    }
    if let Some(s) = a.seed {
        cfg.run.seed = s;
    }
    if let Some(j) = a.jobs {
        cfg.run.jobs = j;
    }
    if let Some(e) = a.eval_size {
        cfg.data.eval_size = e;
    }
    if cfg.data.source == DataSource::Csv {
        if let Some(p) = cfg.data.csv_path.as_mut() {
            if p.is_relative() {
                let base = a.config.parent().unwrap_or(Path::new("."));
                *p = base.join(&*p);
            }
        }
    }
    cfg.validate()?;
    let rows_path = a.rows.or(cfg.run.rows.clone()).unwrap_or_else(|| default_output(&a.config, "rows"));
    let agg_path =
        a.aggregates.or(cfg.run.aggregates.clone()).unwrap_or_else(|| default_output(&a.config, "aggregates"));

    let report = run_replications(&cfg)?;
    report.write_rows_file(&rows_path).with_context(|| format!("writing {}", rows_path.display()))?;
    report.write_table_file(&agg_path).with_context(|| format!("writing {}", agg_path.display()))?;

    let summary = json!({
        "rows": rows_path,
        "aggregates": agg_path,
        "reps": cfg.run.reps,
        "seed": cfg.run.seed,
        "resolved": report.resolved,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
