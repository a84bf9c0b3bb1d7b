use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::collect_trials;
use crate::distnn::{DistNn, NeighborPolicy};
use crate::error::{Error, Result};
use crate::inference::{asymptotic_band, SigmaFunction};
use crate::rng::derive_seed;
use crate::synthetic::{generate, BaseFamily, DgpSpec};

/// Coverage study of the oracle asymptotic band for cell `(0, 0)` of a
/// heteroscedastic matrix. Column 0 holds `n_target` samples per entry and
/// the other columns `n_other`, so row distances can be measured more
/// precisely than the target column is sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSpec {
    pub base: BaseFamily,
    pub n_rows: usize,
    pub n_cols: usize,
    pub n_target: usize,
    pub n_other: usize,
    #[serde(with = "crate::serde_float")]
    pub eta: f64,
    pub max_neighbors: Option<usize>,
    pub alpha: f64,
    pub levels: Vec<f64>,
    pub simultaneous: bool,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageResult {
    pub spec: CoverageSpec,
    pub trials: usize,
    pub failed: usize,
    /// Fraction of successful trials whose band covers the true quantile,
    /// per level.
    pub coverage: Vec<f64>,
    /// Fraction covering at every level at once.
    pub joint_coverage: f64,
    pub mean_neighbors: f64,
    pub mean_half_width: Vec<f64>,
}

struct Outcome {
    covered: Vec<bool>,
    half_width: Vec<f64>,
    neighbors: usize,
}

pub fn run_band_coverage(spec: &CoverageSpec) -> Result<CoverageResult> {
    if spec.trials == 0 || spec.n_cols < 2 || spec.n_rows < 2 {
        return Err(Error::invalid("coverage needs trials, two rows and two columns"));
    }
    let policy = NeighborPolicy {
        max_neighbors: spec.max_neighbors,
        ..NeighborPolicy::default()
    };
    let estimator = DistNn::new(spec.eta)?.with_policy(policy);
    let mut counts = vec![spec.n_other; spec.n_cols];
    counts[0] = spec.n_target;
    let results: Vec<Result<Outcome>> = (0..spec.trials)
        .into_par_iter()
        .map(|t| {
            let dgp = DgpSpec {
                n_per_entry: counts.clone(),
                ..DgpSpec::heteroscedastic(spec.base, spec.n_target, derive_seed(spec.seed, &[t as u64]))
            };
            let (full, truth) = generate::<f64>(&dgp, spec.n_rows, spec.n_cols)?;
            let observed = full.without(0, 0);
            let result = estimator.impute(&observed, 0, 0)?;
            let sigma = SigmaFunction::oracle(&truth, &result.neighbors);
            let band = asymptotic_band(
                &result,
                &sigma,
                spec.n_target,
                spec.alpha,
                &spec.levels,
                spec.simultaneous,
            )?;
            let law = truth.law(0, 0);
            Ok(Outcome {
                covered: spec
                    .levels
                    .iter()
                    .enumerate()
                    .map(|(k, &t)| band.covers(k, law.quantile(t)))
                    .collect(),
                half_width: (0..spec.levels.len()).map(|k| band.upper[k] - band.point[k]).collect(),
                neighbors: result.neighbors.len(),
            })
        })
        .collect();
    let (ok, failed) = collect_trials(results)?;
    let k = ok.len().max(1) as f64;
    let per_level = |f: &dyn Fn(&Outcome, usize) -> f64| -> Vec<f64> {
        (0..spec.levels.len())
            .map(|l| ok.iter().map(|o| f(o, l)).sum::<f64>() / k)
            .collect()
    };
    Ok(CoverageResult {
        spec: spec.clone(),
        trials: spec.trials,
        failed,
        coverage: per_level(&|o, l| o.covered[l] as u8 as f64),
        joint_coverage: ok.iter().filter(|o| o.covered.iter().all(|&c| c)).count() as f64 / k,
        mean_neighbors: ok.iter().map(|o| o.neighbors as f64).sum::<f64>() / k,
        mean_half_width: per_level(&|o, l| o.half_width[l]),
    })
}
