//! Confidence bands for an imputed quantile function.
//!
//! The asymptotic band at level `t` is
//! `q(t) +- z * sigma(t) / sqrt(n_j * |N|)` where
//! `sigma^2(t) = mean_u (t - t^2) / f_u(F_u^{-1}(t))^2` over the neighbors `u`.
//! The bootstrap band resamples the neighbor set and each neighbor's samples
//! and reads percentiles of the replicated barycenter quantiles. Simultaneous
//! bands split `alpha` evenly over the levels.

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::distnn::{DistNn, ImputationResult, NeighborSet};
use crate::empdist::{validate_levels, EmpiricalDistribution};
use crate::error::{Error, Result};
use crate::matrix::DistributionalMatrix;
use crate::rng::rng_for;
use crate::scalar::Scalar;
use crate::synthetic::{CellLaw, TrueDistributions};

/// A law that can report its density at its own `t`-quantile.
pub trait QuantileDensity: Send + Sync {
    fn density_at_quantile(&self, t: f64) -> f64;
}

impl QuantileDensity for CellLaw {
    fn density_at_quantile(&self, t: f64) -> f64 {
        CellLaw::density_at_quantile(self, t)
    }
}

/// Gaussian kernel density estimate with Silverman's rule-of-thumb bandwidth,
/// evaluated at the sample's own step quantiles.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelDensity {
    samples: Vec<f64>,
    bandwidth: f64,
}

impl KernelDensity {
    pub fn new<T: Scalar>(d: &EmpiricalDistribution<T>) -> Self {
        let samples: Vec<f64> = d.samples().iter().map(|x| x.as_f64()).collect();
        let n = samples.len() as f64;
        let sd = d.std().as_f64() * (n / (n - 1.0).max(1.0)).sqrt();
        let q = |t: f64| d.quantile(T::lit(t)).expect("interior level").as_f64();
        let iqr = q(0.75) - q(0.25);
        let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
        Self {
            bandwidth: 0.9 * spread * n.powf(-0.2),
            samples,
        }
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let reach = 9.0 * h;
        let lo = self.samples.partition_point(|&s| s < x - reach);
        let hi = self.samples.partition_point(|&s| s <= x + reach);
        let sum: f64 = self.samples[lo..hi]
            .iter()
            .map(|&s| (-0.5 * ((x - s) / h).powi(2)).exp())
            .sum();
        sum / (self.samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt())
    }
}

impl QuantileDensity for KernelDensity {
    fn density_at_quantile(&self, t: f64) -> f64 {
        let n = self.samples.len();
        let k = ((t * n as f64).ceil() as usize).clamp(1, n);
        self.density(self.samples[k - 1])
    }
}

/// `mean_u (t - t^2) / f_u(F_u^{-1}(t))^2`.
pub fn sigma_sq(densities: &[&dyn QuantileDensity], t: f64) -> Result<f64> {
    if densities.is_empty() {
        return Err(Error::EmptyCollection);
    }
    crate::empdist::check_level("t", t)?;
    let mut total = 0.0;
    for d in densities {
        let f = d.density_at_quantile(t);
        if !(f > 0.0 && f.is_finite()) {
            return Err(Error::DegenerateDensity { level: t });
        }
        total += (t - t * t) / (f * f);
    }
    Ok(total / densities.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BandMethod {
    AsymptoticOracle,
    AsymptoticKde,
    Bootstrap,
}

/// Per-neighbor densities for the variance function.
pub enum SigmaFunction {
    Oracle(Vec<CellLaw>),
    Kde(Vec<KernelDensity>),
}

impl SigmaFunction {
    /// True laws of the neighbors' target-column cells.
    pub fn oracle(truth: &TrueDistributions, neighbors: &NeighborSet<impl Scalar>) -> Self {
        let j = neighbors.target_col;
        SigmaFunction::Oracle(neighbors.members.iter().map(|n| *truth.law(n.row, j)).collect())
    }

    /// Kernel estimates from the neighbors' target-column samples.
    pub fn kde<T: Scalar>(m: &DistributionalMatrix<T>, neighbors: &NeighborSet<T>) -> Self {
        let j = neighbors.target_col;
        SigmaFunction::Kde(
            neighbors
                .members
                .iter()
                .map(|n| KernelDensity::new(m.get(n.row, j).expect("neighbors are observed")))
                .collect(),
        )
    }

    pub fn method(&self) -> BandMethod {
        match self {
            SigmaFunction::Oracle(_) => BandMethod::AsymptoticOracle,
            SigmaFunction::Kde(_) => BandMethod::AsymptoticKde,
        }
    }

    pub fn sigma_sq(&self, t: f64) -> Result<f64> {
        let refs: Vec<&dyn QuantileDensity> = match self {
            SigmaFunction::Oracle(v) => v.iter().map(|d| d as &dyn QuantileDensity).collect(),
            SigmaFunction::Kde(v) => v.iter().map(|d| d as &dyn QuantileDensity).collect(),
        };
        sigma_sq(&refs, t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceBand {
    pub levels: Vec<f64>,
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub alpha: f64,
    /// Significance used at each level; `alpha / levels` when simultaneous.
    pub per_level_alpha: f64,
    pub method: BandMethod,
    pub simultaneous: bool,
}

impl ConfidenceBand {
    pub fn covers(&self, k: usize, value: f64) -> bool {
        self.lower[k] <= value && value <= self.upper[k]
    }
}

fn per_level_alpha(alpha: f64, levels: &[f64], simultaneous: bool) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("alpha = {alpha} not in (0, 1]")));
    }
    validate_levels(levels)?;
    Ok(if simultaneous {
        alpha / levels.len() as f64
    } else {
        alpha
    })
}

fn point_values<T: Scalar>(result: &ImputationResult<T>, levels: &[f64]) -> Result<Vec<f64>> {
    levels
        .iter()
        .map(|&t| result.estimate.quantile(T::lit(t)).map(|q| q.as_f64()))
        .collect()
}

/// Normal-approximation band around `result`, `n_j` being the per-entry
/// sample count in the target column.
pub fn asymptotic_band<T: Scalar>(
    result: &ImputationResult<T>,
    sigma: &SigmaFunction,
    n_j: usize,
    alpha: f64,
    levels: &[f64],
    simultaneous: bool,
) -> Result<ConfidenceBand> {
    let neighbors = &result.neighbors;
    if neighbors.is_empty() {
        return Err(Error::NoNeighbors {
            row: neighbors.target_row,
            col: neighbors.target_col,
        });
    }
    if n_j == 0 {
        return Err(Error::invalid("n_j must be positive"));
    }
    let a = per_level_alpha(alpha, levels, simultaneous)?;
    let z = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(1.0 - a / 2.0);
    let root_n = ((n_j * neighbors.len()) as f64).sqrt();
    let point = point_values(result, levels)?;
    let half = levels
        .iter()
        .map(|&t| Ok(z * sigma.sigma_sq(t)?.sqrt() / root_n))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConfidenceBand {
        levels: levels.to_vec(),
        lower: point.iter().zip(&half).map(|(p, h)| p - h).collect(),
        upper: point.iter().zip(&half).map(|(p, h)| p + h).collect(),
        point,
        alpha,
        per_level_alpha: a,
        method: sigma.method(),
        simultaneous,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct BootstrapConfig {
    pub reps_samples: usize,
    pub reps_neighbors: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            reps_samples: 10,
            reps_neighbors: 10,
            seed: 0,
        }
    }
}

fn step_quantile(sorted: &[f64], t: f64) -> f64 {
    let n = sorted.len();
    let k = ((t * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

/// Percentile bootstrap band for the imputation of `(i, j)`.
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_band<T: Scalar>(
    m: &DistributionalMatrix<T>,
    i: usize,
    j: usize,
    estimator: &DistNn<T>,
    alpha: f64,
    levels: &[f64],
    simultaneous: bool,
    cfg: &BootstrapConfig,
) -> Result<ConfidenceBand> {
    if cfg.reps_samples == 0 || cfg.reps_neighbors == 0 {
        return Err(Error::invalid("bootstrap replicate counts must be positive"));
    }
    let a = per_level_alpha(alpha, levels, simultaneous)?;
    let result = estimator.impute(m, i, j)?;
    let entries: Vec<Vec<f64>> = result
        .neighbors
        .members
        .iter()
        .map(|n| {
            let d = m.get(n.row, j).expect("neighbors are observed");
            d.samples().iter().map(|x| x.as_f64()).collect()
        })
        .collect();
    let k = entries.len();
    let pairs: Vec<(usize, usize)> = (0..cfg.reps_neighbors)
        .flat_map(|r| (0..cfg.reps_samples).map(move |s| (r, s)))
        .collect();
    let replicates: Vec<Vec<f64>> = pairs
        .into_par_iter()
        .map(|(r, s)| {
            let mut pick = rng_for(cfg.seed, &[0x6e62_7273, r as u64]);
            let chosen: Vec<usize> = (0..k).map(|_| pick.random_range(0..k)).collect();
            let mut draw = rng_for(cfg.seed, &[0x736d_706c, r as u64, s as u64]);
            let resampled: Vec<Vec<f64>> = chosen
                .iter()
                .map(|&u| {
                    let src = &entries[u];
                    let mut v: Vec<f64> = (0..src.len()).map(|_| src[draw.random_range(0..src.len())]).collect();
                    v.sort_by(f64::total_cmp);
                    v
                })
                .collect();
            levels
                .iter()
                .map(|&t| resampled.iter().map(|v| step_quantile(v, t)).sum::<f64>() / k as f64)
                .collect()
        })
        .collect();
    let point = point_values(&result, levels)?;
    let mut lower = Vec::with_capacity(levels.len());
    let mut upper = Vec::with_capacity(levels.len());
    for l in 0..levels.len() {
        let mut column: Vec<f64> = replicates.iter().map(|r| r[l]).collect();
        column.sort_by(f64::total_cmp);
        lower.push(step_quantile(&column, a / 2.0));
        upper.push(step_quantile(&column, 1.0 - a / 2.0));
    }
    Ok(ConfidenceBand {
        levels: levels.to_vec(),
        point,
        lower,
        upper,
        alpha,
        per_level_alpha: a,
        method: BandMethod::Bootstrap,
        simultaneous,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::empdist::QuantileGrid;
    use crate::synthetic::BaseFamily;

    fn uniform(lo: f64, hi: f64) -> CellLaw {
        CellLaw {
            base: BaseFamily::Uniform,
            loc: (lo + hi) / 2.0,
            scale: (hi - lo) / (2.0 * 3f64.sqrt()),
        }
    }

    #[test]
    fn sigma_sq_examples() {
        let u = uniform(1.0, 4.0);
        for t in [0.1, 0.3, 0.5] {
            let got = sigma_sq(&[&u], t).unwrap();
            assert!((got - (t - t * t) * 9.0).abs() < 1e-12);
        }
        let u01 = uniform(0.0, 1.0);
        assert!((sigma_sq(&[&u01, &u01], 0.5).unwrap() - 0.25).abs() < 1e-12);
        let pair = [&u as &dyn QuantileDensity, &u01];
        let r = sigma_sq(&pair, 0.5).unwrap() / 0.25;
        assert!((r - sigma_sq(&pair, 0.25).unwrap() / 0.1875).abs() < 1e-12);
        let point = CellLaw { scale: 0.0, ..u };
        assert!(matches!(sigma_sq(&[&point], 0.5), Err(Error::DegenerateDensity { .. })));
    }

    fn setup() -> (DistributionalMatrix<f64>, ImputationResult<f64>) {
        let rows = vec![
            vec![None, Some(vec![0.0, 1.0])],
            vec![Some(vec![0.0, 1.0, 2.0, 3.0]), Some(vec![0.0, 1.0])],
            vec![Some(vec![1.0, 2.0, 3.0, 4.0]), Some(vec![0.0, 1.0])],
        ];
        let m = DistributionalMatrix::from_rows(rows).unwrap();
        let r = DistNn::new(1.0).unwrap().impute(&m, 0, 0).unwrap();
        (m, r)
    }

    #[test]
    fn asymptotic_band_scaling() {
        let (_, r) = setup();
        let sigma = SigmaFunction::Oracle(vec![uniform(0.0, 3.0), uniform(1.0, 4.0)]);
        let levels = [0.25, 0.5, 0.75];
        let b1 = asymptotic_band(&r, &sigma, 100, 0.05, &levels, false).unwrap();
        let b2 = asymptotic_band(&r, &sigma, 200, 0.05, &levels, false).unwrap();
        for (k, &t) in levels.iter().enumerate() {
            let h1 = b1.upper[k] - b1.point[k];
            let h2 = b2.upper[k] - b2.point[k];
            assert!((h1 / h2 - 2f64.sqrt()).abs() < 1e-12);
            assert!((b1.point[k] - b1.lower[k] - h1).abs() < 1e-12);
            let expected = 1.959963984540054 * (9.0 * (t - t * t)).sqrt() / (200f64).sqrt();
            assert!((h1 - expected).abs() < 1e-9, "{h1} vs {expected}");
        }
        let flat = asymptotic_band(&r, &sigma, 100, 1.0, &levels, false).unwrap();
        assert_eq!(flat.lower, flat.point);
        assert_eq!(flat.upper, flat.point);
        assert_eq!(b1.method, BandMethod::AsymptoticOracle);
    }

    #[test]
    fn bonferroni_split() {
        let (_, r) = setup();
        let sigma = SigmaFunction::Oracle(vec![uniform(0.0, 3.0), uniform(1.0, 4.0)]);
        let levels = QuantileGrid::<f64>::evenly_spaced_levels(20);
        let b = asymptotic_band(&r, &sigma, 10, 0.05, &levels, true).unwrap();
        assert!((b.per_level_alpha - 0.0025).abs() < 1e-15);
        let levels99 = QuantileGrid::<f64>::evenly_spaced_levels(99);
        let b = asymptotic_band(&r, &sigma, 10, 0.05, &levels99, true).unwrap();
        assert_eq!(b.per_level_alpha, 0.05 / 99.0);
        assert!(asymptotic_band(&r, &sigma, 10, 0.0, &levels, true).is_err());
    }

    #[test]
    fn empty_neighborhood_rejected() {
        let (_, mut r) = setup();
        r.neighbors.members.clear();
        let sigma = SigmaFunction::Oracle(vec![]);
        assert!(matches!(
            asymptotic_band(&r, &sigma, 10, 0.05, &[0.5], false),
            Err(Error::NoNeighbors { .. })
        ));
    }

    #[test]
    fn bootstrap_degenerate_cases() {
        let rows = vec![
            vec![None, Some(vec![0.0])],
            vec![Some(vec![2.0, 2.0, 2.0]), Some(vec![0.0])],
            vec![Some(vec![2.0, 2.0, 2.0]), Some(vec![0.0])],
        ];
        let m = DistributionalMatrix::from_rows(rows).unwrap();
        let est = DistNn::new(1.0).unwrap();
        let b = bootstrap_band(
            &m,
            0,
            0,
            &est,
            0.05,
            &[0.2, 0.5, 0.9],
            false,
            &BootstrapConfig::default(),
        )
        .unwrap();
        assert_eq!(b.lower, vec![2.0; 3]);
        assert_eq!(b.upper, vec![2.0; 3]);

        let (m, _) = setup();
        let one = BootstrapConfig {
            reps_samples: 1,
            reps_neighbors: 1,
            seed: 4,
        };
        let b = bootstrap_band(&m, 0, 0, &est, 0.05, &[0.3, 0.6], false, &one).unwrap();
        assert_eq!(b.lower, b.upper);
    }

    #[test]
    fn bootstrap_is_seeded_and_nested() {
        let (m, _) = setup();
        let est = DistNn::new(1.0).unwrap();
        let levels = [0.2, 0.5, 0.8];
        let cfg = BootstrapConfig {
            seed: 7,
            ..Default::default()
        };
        let a = bootstrap_band(&m, 0, 0, &est, 0.1, &levels, false, &cfg).unwrap();
        assert_eq!(a, bootstrap_band(&m, 0, 0, &est, 0.1, &levels, false, &cfg).unwrap());
        let wide = bootstrap_band(&m, 0, 0, &est, 0.01, &levels, false, &cfg).unwrap();
        for k in 0..3 {
            assert!(wide.lower[k] <= a.lower[k] && a.upper[k] <= wide.upper[k]);
        }
        assert_eq!(a.method, BandMethod::Bootstrap);
    }

    #[test]
    fn kde_recovers_a_uniform_density() {
        let n = 20_000;
        let samples: Vec<f64> = (0..n).map(|k| (k as f64 + 0.5) / n as f64 * 4.0).collect();
        let d = EmpiricalDistribution::from_vec(samples).unwrap();
        let kde = KernelDensity::new(&d);
        assert!((kde.density_at_quantile(0.5) - 0.25).abs() < 0.01);
        let constant = EmpiricalDistribution::from_samples(&[1.0, 1.0]).unwrap();
        let flat = KernelDensity::new(&constant);
        assert!(matches!(sigma_sq(&[&flat], 0.5), Err(Error::DegenerateDensity { .. })));
    }
}
