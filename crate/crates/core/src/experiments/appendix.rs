use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use super::{fit_power_law, MeanSe, PowerLawFit};
use crate::empdist::{barycenter, EmpiricalDistribution};
use crate::error::{Error, Result};
use crate::oracle::uniform_barycenter_expected_w2_sq;
use crate::rng::{derive_seed, rng_for};
use crate::synthetic::{BaseFamily, CellLaw};

fn uniform_law(a: f64, b: f64) -> CellLaw {
    CellLaw {
        base: BaseFamily::Uniform,
        loc: (a + b) / 2.0,
        scale: (b - a) / (2.0 * 3f64.sqrt()),
    }
}

/// Monte-Carlo mean of the barycenter error for fixed uniform intervals next
/// to its closed form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppendixRow {
    pub m: usize,
    pub n: usize,
    pub trials: usize,
    pub simulated: MeanSe,
    pub closed_form: f64,
    /// `(simulated - closed_form) / std_error`, zero when the standard error
    /// vanishes and the two agree.
    pub z: f64,
}

/// Draws `n` samples from each `U(a_i, b_i)` per trial and scores the
/// empirical barycenter against `U(mean a, mean b)`.
pub fn simulate_uniform_barycenter(
    intervals: &[(f64, f64)],
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<AppendixRow> {
    let closed_form = uniform_barycenter_expected_w2_sq(intervals, n)?;
    if trials < 2 {
        return Err(Error::invalid("at least two trials are required"));
    }
    let laws: Vec<CellLaw> = intervals.iter().map(|&(a, b)| uniform_law(a, b)).collect();
    let truth = CellLaw::barycenter(&laws)?;
    let errors = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for(seed, &[t as u64]);
            let draws = laws
                .iter()
                .map(|l| EmpiricalDistribution::from_vec(l.sample_sorted(n, &mut rng)))
                .collect::<Result<Vec<_>>>()?;
            Ok(truth.w2_sq_to(&barycenter(&draws)?))
        })
        .collect::<Result<Vec<f64>>>()?;
    let simulated = MeanSe::of(&errors);
    let gap = simulated.mean - closed_form;
    let z = if simulated.std_error > 0.0 {
        gap / simulated.std_error
    } else if gap.abs() <= 1e-12 * (1.0 + closed_form) {
        0.0
    } else {
        f64::INFINITY.copysign(gap)
    };
    Ok(AppendixRow {
        m: intervals.len(),
        n,
        trials,
        simulated,
        closed_form,
        z,
    })
}

/// Runs [`simulate_uniform_barycenter`] on each `(m, n)` pair with `m`
/// intervals drawn once per pair: left ends uniform on `(-5, 5)` and one
/// common width uniform on `(1, 5)`.
///
/// The closed form is exact only for intervals of equal width. With unequal
/// widths the sampling term becomes `mean(w_i^2) / (6m(n+1))`, which exceeds
/// `(b̄ - ā)^2 / (6m(n+1))` whenever the widths differ.
pub fn verify_appendix_d(m_list: &[usize], n_list: &[usize], trials: usize, seed: u64) -> Result<Vec<AppendixRow>> {
    let mut rows = Vec::new();
    for &m in m_list {
        for &n in n_list {
            let cell = [m as u64, n as u64];
            let mut rng = rng_for(seed, &cell);
            let width = rng.random_range(1.0..5.0);
            let intervals: Vec<(f64, f64)> = (0..m)
                .map(|_| {
                    let a = rng.random_range(-5.0..5.0);
                    (a, a + width)
                })
                .collect();
            rows.push(simulate_uniform_barycenter(
                &intervals,
                n,
                trials,
                derive_seed(seed, &[m as u64, n as u64, 1]),
            )?);
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatePoint {
    pub k: usize,
    pub n: usize,
    pub simulated: MeanSe,
    pub closed_form: f64,
}

/// Barycenter error over a `(k, n)` grid of `k` unit-width uniforms with
/// random locations and `n` samples each.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSurface {
    pub trials: usize,
    pub points: Vec<RatePoint>,
}

impl RateSurface {
    pub fn point(&self, k: usize, n: usize) -> Option<&RatePoint> {
        self.points.iter().find(|p| p.k == k && p.n == n)
    }

    /// Ratios of mean error between consecutive `k` values at fixed `n`.
    pub fn k_ratios(&self, n: usize) -> Vec<(usize, usize, f64)> {
        let mut row: Vec<&RatePoint> = self.points.iter().filter(|p| p.n == n).collect();
        row.sort_by_key(|p| p.k);
        row.windows(2)
            .map(|w| (w[0].k, w[1].k, w[0].simulated.mean / w[1].simulated.mean))
            .collect()
    }

    /// Power-law fit of mean error against `n` at fixed `k`.
    pub fn n_fit(&self, k: usize) -> Result<PowerLawFit> {
        let mut col: Vec<&RatePoint> = self.points.iter().filter(|p| p.k == k).collect();
        col.sort_by_key(|p| p.n);
        let xs: Vec<f64> = col.iter().map(|p| p.n as f64).collect();
        let ys: Vec<f64> = col.iter().map(|p| p.simulated.mean).collect();
        fit_power_law(&xs, &ys)
    }
}

pub fn verify_barycenter_rate(k_list: &[usize], n_list: &[usize], trials: usize, seed: u64) -> Result<RateSurface> {
    let mut points = Vec::new();
    for &k in k_list {
        for &n in n_list {
            let cell_seed = derive_seed(seed, &[k as u64, n as u64]);
            let errors = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = rng_for(cell_seed, &[t as u64]);
                    let laws: Vec<CellLaw> = (0..k)
                        .map(|_| {
                            let a = rng.random_range(-5.0..5.0);
                            uniform_law(a, a + 1.0)
                        })
                        .collect();
                    let draws = laws
                        .iter()
                        .map(|l| EmpiricalDistribution::from_vec(l.sample_sorted(n, &mut rng)))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(CellLaw::barycenter(&laws)?.w2_sq_to(&barycenter(&draws)?))
                })
                .collect::<Result<Vec<f64>>>()?;
            points.push(RatePoint {
                k,
                n,
                simulated: MeanSe::of(&errors),
                closed_form: uniform_barycenter_expected_w2_sq(&vec![(0.0, 1.0); k], n)?,
            });
        }
    }
    Ok(RateSurface { trials, points })
}
