//! Threshold selection by leave-one-out validation along the target row.
//!
//! For a target cell `(i, j)`, each observed cell `(i, v)` with `v != j` is
//! held out in turn and imputed from the rest of the matrix; a candidate
//! threshold is scored by the mean squared W2 distance between those
//! imputations and the held-out entries. The target entry itself is removed
//! before any scoring.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distnn::{row_distance, CandidatePool, DistNn, NeighborPolicy};
use crate::empdist::{w2_sq_general, EmpiricalDistribution};
use crate::error::{Error, Result};
use crate::matrix::DistributionalMatrix;
use crate::rng::rng_for;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStrategy {
    LogGrid,
    RandomLogUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TuneConfig<T> {
    pub budget: usize,
    pub search: SearchStrategy,
    /// `(eta_min, eta_max)`; derived from the target row's distances when
    /// absent.
    pub eta_range: Option<(T, T)>,
    pub seed: u64,
    pub policy: NeighborPolicy,
}

impl<T: Scalar> Default for TuneConfig<T> {
    fn default() -> Self {
        Self {
            budget: 50,
            search: SearchStrategy::LogGrid,
            eta_range: None,
            seed: 0,
            policy: NeighborPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct TuneTrial<T> {
    pub eta: T,
    /// Mean validation loss with abstaining cells charged the worst finite
    /// loss at this threshold; infinite when no cell found neighbors.
    pub loss: T,
    pub n_valid: usize,
    pub n_no_neighbor: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct TuneReport<T> {
    pub best_eta: T,
    pub best_loss: T,
    /// Ascending by threshold.
    pub trials: Vec<TuneTrial<T>>,
}

/// The 1% and 99% step quantiles of the finite distances from row `i` to
/// the rows observed in column `j`, or `None` when no distance is finite.
pub fn default_eta_range<T: Scalar>(m: &DistributionalMatrix<T>, i: usize, j: usize) -> Result<Option<(T, T)>> {
    m.check_row(i)?;
    m.check_col(j)?;
    let mut finite = Vec::new();
    for u in (0..m.n_rows()).filter(|&u| u != i) {
        let d = row_distance(m, i, u, j)?;
        if d.is_finite() {
            finite.push(d);
        }
    }
    if finite.is_empty() {
        return Ok(None);
    }
    let dist = EmpiricalDistribution::from_vec(finite)?;
    Ok(Some((dist.quantile(T::lit(0.01))?, dist.quantile(T::lit(0.99))?)))
}

fn candidates<T: Scalar>(cfg: &TuneConfig<T>, range: (T, T)) -> Vec<T> {
    let (lo, hi) = range;
    if cfg.budget == 1 || lo >= hi {
        return vec![hi];
    }
    let (l0, l1) = (lo.ln(), hi.ln());
    let mut out: Vec<T> = match cfg.search {
        SearchStrategy::LogGrid => {
            let steps = T::from_count(cfg.budget - 1);
            (0..cfg.budget)
                .map(|k| (l0 + (l1 - l0) * T::from_count(k) / steps).exp())
                .collect()
        }
        SearchStrategy::RandomLogUniform => {
            let mut rng = rng_for(cfg.seed, &[0x7475_6e65]);
            (0..cfg.budget)
                .map(|_| (l0 + (l1 - l0) * T::lit(rng.random::<f64>())).exp())
                .collect()
        }
    };
    out.sort_by(|a, b| a.partial_cmp(b).expect("finite candidates"));
    out.dedup();
    out
}

fn resolve_range<T: Scalar>(cfg: &TuneConfig<T>, m: &DistributionalMatrix<T>, i: usize, j: usize) -> Result<Vec<T>> {
    if cfg.budget == 0 {
        return Err(Error::invalid("tuning budget must be at least 1"));
    }
    if let Some((lo, hi)) = cfg.eta_range {
        if !(lo > T::zero() && lo < hi && hi.is_finite()) {
            return Err(Error::invalid(format!(
                "eta range ({lo}, {hi}) needs 0 < eta_min < eta_max"
            )));
        }
        return Ok(candidates(cfg, (lo, hi)));
    }
    match default_eta_range(m, i, j)? {
        None => Err(Error::AllTrialsFailed),
        Some((_, hi)) if hi <= T::zero() => Ok(vec![T::zero()]),
        Some((lo, hi)) => {
            let floor = hi * T::lit(1e-3);
            Ok(candidates(cfg, (lo.max(floor), hi)))
        }
    }
}

struct HeldOut<'a, T> {
    truth: &'a EmpiricalDistribution<T>,
    pool: CandidatePool<T>,
}

fn score<T: Scalar>(m: &DistributionalMatrix<T>, cells: &[HeldOut<'_, T>], est: &DistNn<T>) -> Result<TuneTrial<T>> {
    let mut losses = Vec::with_capacity(cells.len());
    let mut n_no_neighbor = 0;
    for cell in cells {
        let neighbors = cell.pool.select(est.eta(), est.policy());
        if neighbors.is_empty() {
            n_no_neighbor += 1;
            continue;
        }
        let result = est.impute_with_neighbors(m, neighbors)?;
        losses.push(w2_sq_general(&result.estimate.distribution(), cell.truth));
    }
    let n_valid = losses.len();
    let loss = match losses.iter().copied().reduce(T::max) {
        None => T::infinity(),
        Some(worst) => {
            let total: T = losses.iter().copied().sum::<T>() + worst * T::from_count(n_no_neighbor);
            total / T::from_count(cells.len())
        }
    };
    Ok(TuneTrial {
        eta: est.eta(),
        loss,
        n_valid,
        n_no_neighbor,
    })
}

/// Chooses the threshold for imputing `(i, j)`.
pub fn tune_eta<T: Scalar>(
    m: &DistributionalMatrix<T>,
    i: usize,
    j: usize,
    cfg: &TuneConfig<T>,
) -> Result<TuneReport<T>> {
    m.check_row(i)?;
    m.check_col(j)?;
    let work = m.without(i, j);
    let held: Vec<usize> = work.observed_cols(i).collect();
    if held.is_empty() {
        return Err(Error::NoObservedCells { row: i });
    }
    let etas = resolve_range(cfg, &work, i, j)?;
    let cells = held
        .par_iter()
        .map(|&v| {
            Ok(HeldOut {
                truth: work.get(i, v).expect("held-out cell is observed"),
                pool: CandidatePool::new(&work, i, v, cfg.policy.min_overlap)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let base = DistNn::new(T::zero())?.with_policy(cfg.policy);
    let trials = etas
        .par_iter()
        .map(|&eta| score(&work, &cells, &base.with_eta(eta)?))
        .collect::<Result<Vec<_>>>()?;
    let best = trials
        .iter()
        .filter(|t| t.n_valid > 0)
        .fold(None::<&TuneTrial<T>>, |best, t| match best {
            Some(b) if b.loss <= t.loss => Some(b),
            _ => Some(t),
        })
        .ok_or(Error::AllTrialsFailed)?;
    Ok(TuneReport {
        best_eta: best.eta,
        best_loss: best.loss,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(shift: f64, wiggle: f64, cols: usize) -> Vec<Option<Vec<f64>>> {
        (0..cols)
            .map(|v| Some(vec![shift + v as f64, shift + v as f64 + 1.0 + wiggle]))
            .collect()
    }

    #[test]
    fn identical_rows_pick_the_smallest_candidate() {
        let m = DistributionalMatrix::from_rows(vec![row(0.0, 0.0, 4); 5]).unwrap();
        let report = tune_eta(&m, 0, 0, &TuneConfig::default()).unwrap();
        assert_eq!(report.best_eta, 0.0);
        assert_eq!(report.best_loss, 0.0);
        let cfg = TuneConfig {
            eta_range: Some((0.1, 1.0)),
            budget: 5,
            ..TuneConfig::default()
        };
        let report = tune_eta(&m, 0, 0, &cfg).unwrap();
        assert_eq!(report.trials.len(), 5);
        assert!(report.trials.iter().all(|t| t.loss == 0.0));
        assert!((report.best_eta - 0.1).abs() < 1e-12);
    }

    #[test]
    fn budget_one_uses_the_upper_end() {
        let m = DistributionalMatrix::from_rows(vec![row(0.0, 0.0, 3), row(0.5, 0.0, 3), row(1.0, 0.0, 3)]).unwrap();
        let cfg = TuneConfig {
            budget: 1,
            eta_range: Some((0.5, 2.0)),
            ..TuneConfig::default()
        };
        let report = tune_eta(&m, 0, 0, &cfg).unwrap();
        assert_eq!(report.trials.len(), 1);
        assert_eq!(report.best_eta, 2.0);
    }

    #[test]
    fn two_clusters_are_separated() {
        // Cluster B is cluster A shifted by c = 3, so cross-cluster distances
        // are close to c^2 = 9 while within-cluster distances are below 0.1.
        let mut rows = Vec::new();
        for k in 0..4 {
            rows.push(row(0.0, 0.1 * k as f64, 5));
            rows.push(row(3.0, 0.1 * k as f64, 5));
        }
        let m = DistributionalMatrix::from_rows(rows).unwrap();
        let cfg = TuneConfig {
            budget: 9,
            eta_range: Some((0.01, 100.0)),
            ..TuneConfig::default()
        };
        let report = tune_eta(&m, 0, 0, &cfg).unwrap();
        assert!(report.best_eta < 9.0, "{report:?}");
        let best = report.best_loss;
        for t in report.trials.iter().filter(|t| t.eta >= 10.0) {
            assert!(best < t.loss, "{t:?}");
        }
        let est = DistNn::new(report.best_eta)
            .unwrap()
            .find_neighbors(&m.without(0, 0), 0, 1)
            .unwrap();
        assert!(est.rows().iter().all(|u| u % 2 == 0));
    }

    #[test]
    fn no_held_out_cells() {
        let m = DistributionalMatrix::from_rows(vec![
            vec![None, Some(vec![1.0]), None],
            vec![Some(vec![1.0]), Some(vec![1.0]), Some(vec![1.0])],
        ])
        .unwrap();
        assert!(matches!(
            tune_eta(&m, 0, 1, &TuneConfig::default()),
            Err(Error::NoObservedCells { row: 0 })
        ));
    }

    #[test]
    fn abstaining_everywhere_fails() {
        let m = DistributionalMatrix::from_rows(vec![
            vec![Some(vec![0.0]), Some(vec![0.0]), None],
            vec![Some(vec![50.0]), Some(vec![60.0]), Some(vec![0.0])],
        ])
        .unwrap();
        let cfg = TuneConfig {
            budget: 3,
            eta_range: Some((0.001, 0.01)),
            ..TuneConfig::default()
        };
        assert!(matches!(tune_eta(&m, 0, 2, &cfg), Err(Error::AllTrialsFailed)));
    }

    #[test]
    fn abstentions_are_charged_the_worst_loss() {
        // Target (0, 3) at eta = 4. Held-out column 0: row 1 at distance 4,
        // loss 1. Column 2: row 1 at distance 1, loss 4. Column 1: only row 2,
        // at distance 100, so it abstains and is charged 4.
        let m = DistributionalMatrix::<f64>::from_rows(vec![
            vec![Some(vec![0.0]), Some(vec![0.0]), Some(vec![0.0]), None],
            vec![Some(vec![1.0]), None, Some(vec![2.0]), Some(vec![0.0])],
            vec![None, Some(vec![10.0]), Some(vec![10.0]), Some(vec![0.0])],
        ])
        .unwrap();
        let cfg = TuneConfig {
            budget: 1,
            eta_range: Some((0.5, 4.0)),
            ..TuneConfig::default()
        };
        let report = tune_eta(&m, 0, 3, &cfg).unwrap();
        let t = report.trials[0];
        assert_eq!((t.n_valid, t.n_no_neighbor), (2, 1));
        assert!((t.loss - 3.0).abs() < 1e-12, "{t:?}");
    }

    #[test]
    fn random_search_is_seeded() {
        let rows: Vec<_> = (0..6).map(|k| row(0.3 * k as f64, 0.0, 4)).collect();
        let m = DistributionalMatrix::from_rows(rows).unwrap();
        let cfg = TuneConfig {
            search: SearchStrategy::RandomLogUniform,
            budget: 7,
            seed: 3,
            ..TuneConfig::default()
        };
        let a = tune_eta(&m, 0, 0, &cfg).unwrap();
        assert_eq!(a, tune_eta(&m, 0, 0, &cfg).unwrap());
        let b = tune_eta(&m, 0, 0, &TuneConfig { seed: 4, ..cfg }).unwrap();
        assert_ne!(a.trials, b.trials);
    }

    #[test]
    fn target_entry_is_ignored() {
        let rows: Vec<_> = (0..5).map(|k| row(0.2 * k as f64, 0.05 * k as f64, 4)).collect();
        let mut m = DistributionalMatrix::from_rows(rows).unwrap();
        let cfg = TuneConfig::default();
        let a = tune_eta(&m, 0, 1, &cfg).unwrap();
        m.set(
            0,
            1,
            Some(EmpiricalDistribution::from_samples(&[100.0, 200.0]).unwrap()),
        );
        assert_eq!(a, tune_eta(&m, 0, 1, &cfg).unwrap());
    }

    #[test]
    fn held_out_samples_do_not_move_their_estimate() {
        let rows: Vec<_> = (0..5).map(|k| row(0.2 * k as f64, 0.05 * k as f64, 4)).collect();
        let m = DistributionalMatrix::from_rows(rows).unwrap();
        let mut changed = m.clone();
        changed.set(0, 2, Some(EmpiricalDistribution::from_samples(&[-40.0, 40.0]).unwrap()));
        let a = CandidatePool::new(&m, 0, 2, 1).unwrap();
        let b = CandidatePool::new(&changed, 0, 2, 1).unwrap();
        assert_eq!(a.candidates, b.candidates);
        let est = DistNn::new(1.0).unwrap();
        assert_eq!(
            est.impute_from_pool(&m, &a).unwrap(),
            est.impute_from_pool(&changed, &b).unwrap()
        );
    }

    #[test]
    fn bad_configs() {
        let m = DistributionalMatrix::from_rows(vec![row(0.0, 0.0, 3); 3]).unwrap();
        for cfg in [
            TuneConfig {
                budget: 0,
                ..TuneConfig::default()
            },
            TuneConfig {
                eta_range: Some((0.0, 1.0)),
                ..TuneConfig::default()
            },
            TuneConfig {
                eta_range: Some((2.0, 1.0)),
                ..TuneConfig::default()
            },
        ] {
            assert!(matches!(tune_eta(&m, 0, 0, &cfg), Err(Error::InvalidParameter(_))));
        }
    }
}
