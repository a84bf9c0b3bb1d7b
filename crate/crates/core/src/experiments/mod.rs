//! Monte-Carlo studies on synthetic matrices.
//!
//! Every study is deterministic given its seed: trials run in parallel on
//! seeds derived from the master seed and are aggregated in trial order.
//! Trials whose target finds no neighbors are dropped from the averages and
//! counted; more than 20% of them aborts the study.

mod appendix;
mod coverage;
mod powerlaw;
mod scaling;

pub use appendix::{
    simulate_uniform_barycenter, verify_appendix_d, verify_barycenter_rate, AppendixRow, RatePoint, RateSurface,
};
pub use coverage::{run_band_coverage, CoverageResult, CoverageSpec};
pub use powerlaw::{fit_power_law, PowerLawFit};
pub use scaling::{
    run_denoising, run_quantity_eval, run_scaling, DenoisingRow, DenoisingTable, Quantity, QuantityRow, QuantityTable,
    ScalingPoint, ScalingResult,
};

use serde::{Deserialize, Serialize};

use crate::distnn::NeighborPolicy;
use crate::error::{Error, Result};
use crate::synthetic::DgpSpec;
use crate::tuning::SearchStrategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Samples per entry.
    NSamples,
    /// Matrix rows.
    NRows,
    /// Exact neighborhood size; the abscissa is `n * |N|`.
    NTimesNeighbors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EtaPolicy {
    Fixed {
        #[serde(with = "crate::serde_float")]
        eta: f64,
    },
    /// Re-tuned on every trial by leave-one-out validation.
    Tuned { budget: usize, search: SearchStrategy },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub dgp: DgpSpec,
    pub n_rows: usize,
    pub n_cols: usize,
    /// Observation probability of the non-target cells.
    #[serde(default = "default_observe_p")]
    pub observe_p: f64,
    pub sweep: Sweep,
    pub trials: usize,
    pub eta: EtaPolicy,
    #[serde(default)]
    pub policy: NeighborPolicy,
    /// Fresh draws used to estimate a single entry's expected error.
    #[serde(default = "default_baseline_resamples")]
    pub baseline_resamples: usize,
    #[serde(default)]
    pub target: (usize, usize),
    pub seed: u64,
}

fn default_observe_p() -> f64 {
    1.0
}

fn default_baseline_resamples() -> usize {
    100
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let values = &self.sweep.values;
        if values.is_empty() || values.windows(2).any(|w| w[0] >= w[1]) || values[0] == 0 {
            return Err(Error::invalid("sweep values must be positive and strictly increasing"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("at least one trial is required"));
        }
        if !(self.observe_p > 0.0 && self.observe_p <= 1.0) {
            return Err(Error::invalid(format!(
                "observation probability {} not in (0, 1]",
                self.observe_p
            )));
        }
        let min_rows = match self.sweep.variable {
            SweepVariable::NRows => values[0],
            _ => self.n_rows,
        };
        if self.target.0 >= min_rows || self.target.1 >= self.n_cols || min_rows < 2 {
            return Err(Error::invalid("target cell outside the matrix or fewer than two rows"));
        }
        if let EtaPolicy::Fixed { eta } = self.eta {
            if !(eta >= 0.0) {
                return Err(Error::invalid(format!("threshold eta = {eta} must be >= 0")));
            }
        }
        self.dgp.validate(self.n_cols)
    }
}

/// Mean and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub std_error: f64,
    pub count: usize,
}

impl MeanSe {
    pub fn of(xs: &[f64]) -> Self {
        let k = xs.len();
        if k == 0 {
            return Self {
                mean: f64::NAN,
                std_error: f64::NAN,
                count: 0,
            };
        }
        let mean = xs.iter().sum::<f64>() / k as f64;
        let std_error = if k > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
            (var / k as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            std_error,
            count: k,
        }
    }
}

/// Linear-interpolation quantile of a sorted sample.
pub(crate) fn interpolated_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn is_trial_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::NoNeighbors { .. } | Error::AllTrialsFailed | Error::NoObservedCells { .. }
    )
}

/// Splits trial results into successes and a failure count, aborting when
/// more than 20% failed or when an error is not a recognized trial failure.
pub(crate) fn collect_trials<T>(results: Vec<Result<T>>) -> Result<(Vec<T>, usize)> {
    let total = results.len();
    let mut ok = Vec::with_capacity(total);
    let mut failed = 0;
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) if is_trial_failure(&e) => failed += 1,
            Err(e) => return Err(e),
        }
    }
    if failed * 5 > total {
        return Err(Error::ExperimentAborted { failed, total });
    }
    Ok((ok, failed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abort_threshold() {
        let mk = |failures: usize| -> Vec<Result<u8>> {
            (0..10)
                .map(|k| {
                    if k < failures {
                        Err(Error::AllTrialsFailed)
                    } else {
                        Ok(0)
                    }
                })
                .collect()
        };
        assert_eq!(collect_trials(mk(2)).unwrap().1, 2);
        assert!(matches!(
            collect_trials(mk(3)),
            Err(Error::ExperimentAborted { failed: 3, total: 10 })
        ));
        let other: Vec<Result<u8>> = vec![Ok(1), Err(Error::EmptyInput)];
        assert!(matches!(collect_trials(other), Err(Error::EmptyInput)));
    }

    #[test]
    fn mean_and_quantiles() {
        let s = MeanSe::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.std_error - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(interpolated_quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert_eq!(interpolated_quantile(&[1.0, 2.0, 3.0], 0.25), 1.5);
    }
}
