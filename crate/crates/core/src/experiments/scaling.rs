use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::{
    collect_trials, fit_power_law, interpolated_quantile, EtaPolicy, ExperimentSpec, MeanSe, PowerLawFit, SweepVariable,
};
use crate::distnn::{DistNn, NeighborPolicy};
use crate::empdist::{EmpiricalDistribution, Summaries};
use crate::error::{Error, Result};
use crate::matrix::{apply_mcar, MaskSpec};
use crate::rng::{derive_seed, rng_for};
use crate::synthetic::{generate, CellLaw, DgpSpec};
use crate::tuning::{tune_eta, TuneConfig};

const MASK_STREAM: u64 = 0x6d61_736b;
const BASELINE_STREAM: u64 = 0x6261_7365;

struct Setting {
    dgp: DgpSpec,
    n_rows: usize,
    policy: NeighborPolicy,
    /// Samples per entry in the target column.
    n_target: usize,
}

fn setting(spec: &ExperimentSpec, value: usize) -> Setting {
    let mut dgp = spec.dgp.clone();
    let mut n_rows = spec.n_rows;
    let mut policy = spec.policy;
    match spec.sweep.variable {
        SweepVariable::NSamples => dgp.n_per_entry = vec![value],
        SweepVariable::NRows => n_rows = value,
        SweepVariable::NTimesNeighbors => {
            policy.min_neighbors = Some(value);
            policy.max_neighbors = Some(value);
        }
    }
    let j = spec.target.1;
    let n_target = if dgp.n_per_entry.len() == 1 {
        dgp.n_per_entry[0]
    } else {
        dgp.n_per_entry[j]
    };
    Setting {
        dgp,
        n_rows,
        policy,
        n_target,
    }
}

struct Trial {
    error: f64,
    baseline: Option<f64>,
    neighbors: usize,
    eta: f64,
    law: CellLaw,
    estimate: Summaries<f64>,
    own: Summaries<f64>,
}

fn run_trial(spec: &ExperimentSpec, s: &Setting, seed: u64, var_alpha: f64) -> Result<Trial> {
    let dgp = DgpSpec { seed, ..s.dgp.clone() };
    let (full, truth) = generate::<f64>(&dgp, s.n_rows, spec.n_cols)?;
    let (i, j) = spec.target;
    let observed = if spec.observe_p < 1.0 {
        let mask = MaskSpec::new(spec.observe_p, derive_seed(seed, &[MASK_STREAM]))?;
        apply_mcar(&full, mask, Some((i, j)))
    } else {
        full.without(i, j)
    };
    let eta = match spec.eta {
        EtaPolicy::Fixed { eta } => eta,
        EtaPolicy::Tuned { budget, search } => {
            let cfg = TuneConfig {
                budget,
                search,
                eta_range: None,
                seed,
                policy: s.policy,
            };
            tune_eta(&observed, i, j, &cfg)?.best_eta
        }
    };
    let result = DistNn::new(eta)?
        .with_policy(s.policy)
        .with_var_alpha(var_alpha)?
        .impute(&observed, i, j)?;
    let law = *truth.law(i, j);
    let error = law.w2_sq_to(&result.estimate.distribution());
    let baseline = if spec.baseline_resamples > 0 {
        let mut rng = rng_for(seed, &[BASELINE_STREAM]);
        let mut total = 0.0;
        for _ in 0..spec.baseline_resamples {
            let draw = EmpiricalDistribution::from_vec(law.sample_sorted(s.n_target, &mut rng))?;
            total += law.w2_sq_to(&draw);
        }
        Some(total / spec.baseline_resamples as f64)
    } else {
        None
    };
    let own = full
        .get(i, j)
        .expect("generated matrices are complete")
        .summaries(var_alpha)?;
    Ok(Trial {
        error,
        baseline,
        neighbors: result.neighbors.len(),
        eta,
        law,
        estimate: result.summaries,
        own,
    })
}

/// Sweep value, its setting, the successful trials and the failure count.
type SweepPoint = (usize, Setting, Vec<Trial>, usize);

/// Runs every trial at every sweep value. Trial `t` uses the same derived
/// seed at each sweep value, so sweep points share latent factors.
fn run_sweep(spec: &ExperimentSpec, var_alpha: f64) -> Result<Vec<SweepPoint>> {
    spec.validate()?;
    spec.sweep
        .values
        .iter()
        .map(|&value| {
            let s = setting(spec, value);
            let results: Vec<Result<Trial>> = (0..spec.trials)
                .into_par_iter()
                .map(|t| run_trial(spec, &s, derive_seed(spec.seed, &[t as u64]), var_alpha))
                .collect();
            let (trials, failed) = collect_trials(results)?;
            Ok((value, s, trials, failed))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub value: usize,
    /// Abscissa used in the fit: the sweep value, or `n * |N|`.
    pub x: f64,
    pub trials: usize,
    pub failed: usize,
    pub error: MeanSe,
    pub baseline: Option<MeanSe>,
    pub mean_neighbors: f64,
    pub mean_eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingResult {
    pub spec: ExperimentSpec,
    pub points: Vec<ScalingPoint>,
    /// Fit of mean error against `x`; needs two or more sweep values.
    pub fit: Option<PowerLawFit>,
    pub baseline_fit: Option<PowerLawFit>,
    /// Fit of mean error against the effective sample size `n * |N|`, with
    /// `|N|` the mean neighborhood size at each sweep value.
    pub effective_fit: Option<PowerLawFit>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    value: usize,
    x: f64,
    method: &'a str,
    trials: usize,
    failed: usize,
    mean_error: f64,
    std_error: f64,
    mean_neighbors: f64,
}

impl ScalingResult {
    /// One row per sweep value and method.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for p in &self.points {
            let mut rows = vec![("dist_nn", p.error)];
            if let Some(b) = p.baseline {
                rows.push(("single_entry", b));
            }
            for (method, stats) in rows {
                out.serialize(CsvRow {
                    value: p.value,
                    x: p.x,
                    method,
                    trials: p.trials,
                    failed: p.failed,
                    mean_error: stats.mean,
                    std_error: stats.std_error,
                    mean_neighbors: p.mean_neighbors,
                })
                .map_err(csv_error)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::invalid(format!("csv: {other:?}")),
    }
}

/// Mean W2^2 error of the imputed target against its true law across the
/// sweep, with a power-law fit.
pub fn run_scaling(spec: &ExperimentSpec) -> Result<ScalingResult> {
    let sweep = run_sweep(spec, 0.05)?;
    let points: Vec<ScalingPoint> = sweep
        .iter()
        .map(|(value, s, trials, failed)| {
            let errors: Vec<f64> = trials.iter().map(|t| t.error).collect();
            let baselines: Option<Vec<f64>> = trials.iter().map(|t| t.baseline).collect();
            let k = trials.len().max(1) as f64;
            let x = match spec.sweep.variable {
                SweepVariable::NTimesNeighbors => (s.n_target * value) as f64,
                _ => *value as f64,
            };
            ScalingPoint {
                value: *value,
                x,
                trials: trials.len() + failed,
                failed: *failed,
                error: MeanSe::of(&errors),
                baseline: baselines.filter(|b| !b.is_empty()).map(|b| MeanSe::of(&b)),
                mean_neighbors: trials.iter().map(|t| t.neighbors as f64).sum::<f64>() / k,
                mean_eta: trials.iter().map(|t| t.eta).sum::<f64>() / k,
            }
        })
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let fit = if points.len() >= 2 {
        Some(fit_power_law(
            &xs,
            &points.iter().map(|p| p.error.mean).collect::<Vec<_>>(),
        )?)
    } else {
        None
    };
    let baseline_fit = match points
        .iter()
        .map(|p| p.baseline.map(|b| b.mean))
        .collect::<Option<Vec<_>>>()
    {
        Some(ys) if ys.len() >= 2 => Some(fit_power_law(&xs, &ys)?),
        _ => None,
    };
    let effective: Vec<f64> = sweep
        .iter()
        .zip(&points)
        .map(|((_, s, _, _), p)| s.n_target as f64 * p.mean_neighbors)
        .collect();
    let effective_fit = if points.len() >= 2 && effective.iter().all(|&x| x > 0.0) {
        Some(fit_power_law(
            &effective,
            &points.iter().map(|p| p.error.mean).collect::<Vec<_>>(),
        )?)
    } else {
        None
    };
    Ok(ScalingResult {
        spec: spec.clone(),
        points,
        fit,
        baseline_fit,
        effective_fit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DenoisingRow {
    pub value: usize,
    pub estimator: MeanSe,
    pub single_entry: MeanSe,
    /// Estimator mean error over single-entry mean error.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DenoisingTable {
    pub spec: ExperimentSpec,
    pub rows: Vec<DenoisingRow>,
}

/// Compares the imputed target with a fresh single-entry sample of the same
/// size, each scored against the true law.
pub fn run_denoising(spec: &ExperimentSpec) -> Result<DenoisingTable> {
    if spec.baseline_resamples == 0 {
        return Err(Error::invalid("denoising needs baseline_resamples > 0"));
    }
    let result = run_scaling(spec)?;
    let rows = result
        .points
        .iter()
        .map(|p| {
            let single_entry = p.baseline.expect("baseline requested");
            DenoisingRow {
                value: p.value,
                estimator: p.error,
                single_entry,
                ratio: p.error.mean / single_entry.mean,
            }
        })
        .collect();
    Ok(DenoisingTable {
        spec: spec.clone(),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Mean,
    Median,
    Std,
    ValueAtRisk,
}

impl Quantity {
    pub const ALL: [Quantity; 4] = [Quantity::Mean, Quantity::Median, Quantity::Std, Quantity::ValueAtRisk];

    fn of_summaries(&self, s: &Summaries<f64>) -> f64 {
        match self {
            Quantity::Mean => s.mean,
            Quantity::Median => s.median,
            Quantity::Std => s.std,
            Quantity::ValueAtRisk => s.var_at_risk,
        }
    }

    fn of_law(&self, law: &CellLaw, var_alpha: f64) -> f64 {
        match self {
            Quantity::Mean => law.mean(),
            Quantity::Median => law.quantile(0.5),
            Quantity::Std => law.std(),
            Quantity::ValueAtRisk => -law.quantile(var_alpha),
        }
    }
}

/// Distribution of relative errors `|estimate - truth| / |truth|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantityRow {
    pub value: usize,
    pub quantity: Quantity,
    pub method: String,
    pub cells: usize,
    /// Trials skipped because `|truth| < 1e-9`.
    pub excluded: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantityTable {
    pub spec: ExperimentSpec,
    pub var_alpha: f64,
    pub rows: Vec<QuantityRow>,
}

impl QuantityTable {
    pub fn row(&self, value: usize, quantity: Quantity, method: &str) -> Option<&QuantityRow> {
        self.rows
            .iter()
            .find(|r| r.value == value && r.quantity == quantity && r.method == method)
    }
}

fn relative_errors(value: usize, quantity: Quantity, method: &str, pairs: &[(f64, f64)]) -> QuantityRow {
    let mut errs: Vec<f64> = pairs
        .iter()
        .filter(|(_, truth)| truth.abs() >= 1e-9)
        .map(|(est, truth)| (est - truth).abs() / truth.abs())
        .collect();
    errs.sort_by(f64::total_cmp);
    let excluded = pairs.len() - errs.len();
    let q = |p: f64| {
        if errs.is_empty() {
            f64::NAN
        } else {
            interpolated_quantile(&errs, p)
        }
    };
    QuantityRow {
        value,
        quantity,
        method: method.to_string(),
        cells: errs.len(),
        excluded,
        min: q(0.0),
        q1: q(0.25),
        median: q(0.5),
        q3: q(0.75),
        max: q(1.0),
        mean: MeanSe::of(&errs).mean,
    }
}

/// Relative errors of summary quantities of the imputed target (`dist_nn`)
/// and of the target's own hidden samples (`single_entry`).
pub fn run_quantity_eval(spec: &ExperimentSpec, quantities: &[Quantity], var_alpha: f64) -> Result<QuantityTable> {
    let sweep = run_sweep(spec, var_alpha)?;
    let mut rows = Vec::new();
    for (value, _, trials, _) in &sweep {
        for &q in quantities {
            let truth = |t: &Trial| q.of_law(&t.law, var_alpha);
            let est: Vec<(f64, f64)> = trials.iter().map(|t| (q.of_summaries(&t.estimate), truth(t))).collect();
            let own: Vec<(f64, f64)> = trials.iter().map(|t| (q.of_summaries(&t.own), truth(t))).collect();
            rows.push(relative_errors(*value, q, "dist_nn", &est));
            rows.push(relative_errors(*value, q, "single_entry", &own));
        }
    }
    Ok(QuantityTable {
        spec: spec.clone(),
        var_alpha,
        rows,
    })
}
