//! Synthetic distributional matrices from latent factor models.
//!
//! Every cell law is a location-scale transform `loc + scale * B` of a
//! standardized base `B` (mean 0, symmetric). Two models are provided:
//!
//! * homoscedastic: `loc = <x_row, x_col>`, `scale = sigma^2`, with factors
//!   uniform on `[0, 1]^d`;
//! * heteroscedastic: one-dimensional factors, `loc` mapped linearly from the
//!   row factor onto `location_range` and `scale` from the column factor onto
//!   `scale_range`.
//!
//! Samples are drawn by inverse transform, so the exact laws are retained in
//! [`TrueDistributions`] for scoring.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::distr::Open01;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::empdist::EmpiricalDistribution;
use crate::error::{Error, Result};
use crate::matrix::DistributionalMatrix;
use crate::oracle::{uniform_w2_sq, UniformPair};
use crate::rng::rng_for;
use crate::scalar::Scalar;

const SQRT_3: f64 = 1.732_050_807_568_877_2;
const FACTOR_STREAM: u64 = 0x6661_6374;
const SAMPLE_STREAM: u64 = 0x7361_6d70;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

fn phi(z: f64) -> f64 {
    if z.is_infinite() {
        0.0
    } else {
        (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
    }
}

fn z_phi(z: f64) -> f64 {
    if z.is_infinite() {
        0.0
    } else {
        z * phi(z)
    }
}

fn big_phi(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z * FRAC_1_SQRT_2)
}

/// Standardized base law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BaseFamily {
    /// Uniform on `(-sqrt 3, sqrt 3)`.
    Uniform,
    Gaussian,
    /// Standard normal conditioned on `|z| <= bound`.
    TruncatedGaussian {
        bound: f64,
    },
}

impl BaseFamily {
    pub const DEFAULT_TRUNCATION: f64 = 4.0;

    pub fn truncated() -> Self {
        BaseFamily::TruncatedGaussian {
            bound: Self::DEFAULT_TRUNCATION,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            BaseFamily::TruncatedGaussian { bound } if !(bound > 0.0 && bound.is_finite()) => {
                Err(Error::invalid(format!("truncation bound {bound} must be positive")))
            }
            _ => Ok(()),
        }
    }

    fn tail_mass(bound: f64) -> (f64, f64) {
        let p0 = big_phi(-bound);
        (p0, 1.0 - 2.0 * p0)
    }

    /// Quantile function on `[0, 1]`; the endpoints give the support bounds.
    pub fn quantile(&self, t: f64) -> f64 {
        match *self {
            BaseFamily::Uniform => SQRT_3 * (2.0 * t - 1.0),
            BaseFamily::Gaussian => std_normal().inverse_cdf(t),
            BaseFamily::TruncatedGaussian { bound } => {
                let (p0, z) = Self::tail_mass(bound);
                let n = std_normal();
                if t <= 0.5 {
                    n.inverse_cdf(p0 + t * z).max(-bound)
                } else {
                    (-n.inverse_cdf(p0 + (1.0 - t) * z)).min(bound)
                }
            }
        }
    }

    pub fn density(&self, z: f64) -> f64 {
        match *self {
            BaseFamily::Uniform => {
                if z.abs() <= SQRT_3 {
                    1.0 / (2.0 * SQRT_3)
                } else {
                    0.0
                }
            }
            BaseFamily::Gaussian => phi(z),
            BaseFamily::TruncatedGaussian { bound } => {
                if z.abs() <= bound {
                    phi(z) / Self::tail_mass(bound).1
                } else {
                    0.0
                }
            }
        }
    }

    pub fn cdf(&self, z: f64) -> f64 {
        match *self {
            BaseFamily::Uniform => ((z + SQRT_3) / (2.0 * SQRT_3)).clamp(0.0, 1.0),
            BaseFamily::Gaussian => big_phi(z),
            BaseFamily::TruncatedGaussian { bound } => {
                let (p0, mass) = Self::tail_mass(bound);
                ((big_phi(z.clamp(-bound, bound)) - p0) / mass).clamp(0.0, 1.0)
            }
        }
    }

    /// `E[B^2]`; the mean is zero for every family.
    pub fn second_moment(&self) -> f64 {
        match *self {
            BaseFamily::Uniform | BaseFamily::Gaussian => 1.0,
            BaseFamily::TruncatedGaussian { bound } => 1.0 - 2.0 * z_phi(bound) / Self::tail_mass(bound).1,
        }
    }

    /// For the quantile function on `[t0, t1]`: its integral, and the integral
    /// of its squared deviation from the segment mean.
    fn segment_moments(&self, t0: f64, t1: f64) -> (f64, f64) {
        let dt = t1 - t0;
        match *self {
            BaseFamily::Uniform => (SQRT_3 * dt * (t0 + t1 - 1.0), dt * dt * dt),
            BaseFamily::Gaussian | BaseFamily::TruncatedGaussian { .. } => {
                let mass = match *self {
                    BaseFamily::TruncatedGaussian { bound } => Self::tail_mass(bound).1,
                    _ => 1.0,
                };
                let z0 = self.quantile(t0);
                let z1 = self.quantile(t1);
                let m1 = (phi(z0) - phi(z1)) / mass;
                let m2 = dt - (z_phi(z1) - z_phi(z0)) / mass;
                (m1, (m2 - m1 * m1 / dt).max(0.0))
            }
        }
    }
}

/// `loc + scale * B` for a base family `B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellLaw {
    pub base: BaseFamily,
    pub loc: f64,
    pub scale: f64,
}

impl CellLaw {
    pub fn quantile(&self, t: f64) -> f64 {
        self.loc + self.scale * self.base.quantile(t)
    }

    /// Density at the `t`-quantile; infinite for a point mass.
    pub fn density_at_quantile(&self, t: f64) -> f64 {
        self.base.density(self.base.quantile(t)) / self.scale
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if self.scale == 0.0 {
            if x >= self.loc {
                1.0
            } else {
                0.0
            }
        } else {
            self.base.cdf((x - self.loc) / self.scale)
        }
    }

    pub fn mean(&self) -> f64 {
        self.loc
    }

    pub fn std(&self) -> f64 {
        self.scale * self.base.second_moment().sqrt()
    }

    /// Support endpoints when the base is uniform.
    pub fn uniform_support(&self) -> Option<(f64, f64)> {
        match self.base {
            BaseFamily::Uniform => Some((self.loc - SQRT_3 * self.scale, self.loc + SQRT_3 * self.scale)),
            _ => None,
        }
    }

    /// Squared W2 distance to another law of the same family.
    pub fn w2_sq(&self, other: &CellLaw) -> Result<f64> {
        if self.base != other.base {
            return Err(Error::invalid("laws from different base families"));
        }
        if let (Some((a, b)), Some((c, d))) = (self.uniform_support(), other.uniform_support()) {
            if a < b && c < d {
                return Ok(uniform_w2_sq(&UniformPair { a, b, c, d }));
            }
        }
        let dl = self.loc - other.loc;
        let ds = self.scale - other.scale;
        Ok(dl * dl + ds * ds * self.base.second_moment())
    }

    /// Exact squared W2 distance to an empirical distribution, integrating
    /// the law's quantile function against each step.
    pub fn w2_sq_to<T: Scalar>(&self, d: &EmpiricalDistribution<T>) -> f64 {
        let n = d.n();
        let step = 1.0 / n as f64;
        d.samples()
            .iter()
            .enumerate()
            .map(|(k, x)| {
                let (t0, t1) = (k as f64 / n as f64, (k + 1) as f64 / n as f64);
                let (m1, spread) = self.base.segment_moments(t0, t1);
                let gap = self.loc + self.scale * m1 / step - x.as_f64();
                step * gap * gap + self.scale * self.scale * spread
            })
            .sum()
    }

    /// Barycenter of laws sharing a base family.
    pub fn barycenter(laws: &[CellLaw]) -> Result<CellLaw> {
        let first = laws.first().ok_or(Error::EmptyCollection)?;
        if laws.iter().any(|l| l.base != first.base) {
            return Err(Error::invalid("laws from different base families"));
        }
        let m = laws.len() as f64;
        Ok(CellLaw {
            base: first.base,
            loc: laws.iter().map(|l| l.loc).sum::<f64>() / m,
            scale: laws.iter().map(|l| l.scale).sum::<f64>() / m,
        })
    }

    /// `n` samples in ascending order, drawn by pushing sorted uniforms
    /// through the quantile function.
    pub fn sample_sorted(&self, n: usize, rng: &mut crate::rng::Rng) -> Vec<f64> {
        sorted_uniforms(n, rng).into_iter().map(|u| self.quantile(u)).collect()
    }
}

/// Order statistics of `n` uniforms from normalized exponential spacings.
fn sorted_uniforms(n: usize, rng: &mut crate::rng::Rng) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = (0..n)
        .map(|_| {
            acc += -rng.sample::<f64, _>(Open01).ln();
            acc
        })
        .collect();
    let total = acc - rng.sample::<f64, _>(Open01).ln();
    let hi = 1.0 - f64::EPSILON / 2.0;
    for u in &mut out {
        *u = (*u / total).clamp(f64::MIN_POSITIVE, hi);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum DgpKind {
    /// `loc = <x_row, x_col>` over `dim`-dimensional factors, `scale = sigma^2`.
    Homoscedastic { sigma: f64, dim: usize },
    /// Row location, column scale.
    Heteroscedastic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub base: BaseFamily,
    pub location_range: (f64, f64),
    pub scale_range: (f64, f64),
    /// Samples per entry, one value per column or a single value for all.
    pub n_per_entry: Vec<usize>,
    /// When set, only this many distinct row factors are drawn and row `i`
    /// reuses factor `i % k`, so rows repeat.
    #[serde(default)]
    pub row_clusters: Option<usize>,
    pub seed: u64,
}

impl DgpSpec {
    pub fn heteroscedastic(base: BaseFamily, n: usize, seed: u64) -> Self {
        Self {
            kind: DgpKind::Heteroscedastic,
            base,
            location_range: (-5.0, 5.0),
            scale_range: (1.0, 5.0),
            n_per_entry: vec![n],
            row_clusters: None,
            seed,
        }
    }

    pub fn homoscedastic(base: BaseFamily, sigma: f64, dim: usize, n: usize, seed: u64) -> Self {
        Self {
            kind: DgpKind::Homoscedastic { sigma, dim },
            ..Self::heteroscedastic(base, n, seed)
        }
    }

    pub fn validate(&self, n_cols: usize) -> Result<()> {
        self.base.validate()?;
        match self.kind {
            DgpKind::Homoscedastic { sigma, dim } => {
                if !(sigma >= 0.0 && sigma.is_finite()) {
                    return Err(Error::invalid(format!("sigma = {sigma} must be finite and >= 0")));
                }
                if dim == 0 {
                    return Err(Error::invalid("latent dimension must be positive"));
                }
            }
            DgpKind::Heteroscedastic => {
                let (l0, l1) = self.location_range;
                let (s0, s1) = self.scale_range;
                if !(l0.is_finite() && l1.is_finite() && l0 <= l1) {
                    return Err(Error::invalid("location range must be a finite interval"));
                }
                if !(s0 > 0.0 && s1.is_finite() && s0 <= s1) {
                    return Err(Error::invalid("scale range must be a positive finite interval"));
                }
            }
        }
        if self.row_clusters == Some(0) {
            return Err(Error::invalid("row_clusters must be positive"));
        }
        let counts_ok = self.n_per_entry.len() == 1 || self.n_per_entry.len() == n_cols;
        if !counts_ok || self.n_per_entry.contains(&0) {
            return Err(Error::invalid(format!(
                "n_per_entry needs 1 or {n_cols} positive values, got {:?}",
                self.n_per_entry
            )));
        }
        Ok(())
    }

    fn samples_in(&self, col: usize) -> usize {
        if self.n_per_entry.len() == 1 {
            self.n_per_entry[0]
        } else {
            self.n_per_entry[col]
        }
    }
}

/// Latent row and column factors, every coordinate in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentFactors {
    pub row_factors: Vec<Vec<f64>>,
    pub col_factors: Vec<Vec<f64>>,
}

impl LatentFactors {
    pub fn draw(n_rows: usize, n_cols: usize, dim: usize, seed: u64) -> Self {
        Self::draw_clustered(n_rows, n_cols, dim, None, seed)
    }

    /// Like [`LatentFactors::draw`], with row `i` copying distinct factor
    /// `i % k` when `clusters` is `Some(k)`.
    pub fn draw_clustered(n_rows: usize, n_cols: usize, dim: usize, clusters: Option<usize>, seed: u64) -> Self {
        let mut rng = rng_for(seed, &[FACTOR_STREAM]);
        let mut block = |count: usize| -> Vec<Vec<f64>> {
            (0..count)
                .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
                .collect()
        };
        let distinct = block(clusters.unwrap_or(n_rows).min(n_rows));
        let col_factors = block(n_cols);
        let row_factors = (0..n_rows).map(|i| distinct[i % distinct.len()].clone()).collect();
        Self {
            row_factors,
            col_factors,
        }
    }

    pub fn dim(&self) -> usize {
        self.row_factors.first().map_or(0, Vec::len)
    }
}

/// Exact laws behind a generated matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueDistributions {
    n_rows: usize,
    n_cols: usize,
    laws: Vec<CellLaw>,
    factors: LatentFactors,
}

impl TrueDistributions {
    pub fn from_factors(spec: &DgpSpec, factors: LatentFactors) -> Result<Self> {
        let n_rows = factors.row_factors.len();
        let n_cols = factors.col_factors.len();
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::invalid("matrix dimensions must be positive"));
        }
        spec.validate(n_cols)?;
        let lerp = |(lo, hi): (f64, f64), x: f64| lo + (hi - lo) * x;
        let mut laws = Vec::with_capacity(n_rows * n_cols);
        for xr in &factors.row_factors {
            for xc in &factors.col_factors {
                let (loc, scale) = match spec.kind {
                    DgpKind::Homoscedastic { sigma, .. } => {
                        (xr.iter().zip(xc).map(|(a, b)| a * b).sum(), sigma * sigma)
                    }
                    DgpKind::Heteroscedastic => (lerp(spec.location_range, xr[0]), lerp(spec.scale_range, xc[0])),
                };
                laws.push(CellLaw {
                    base: spec.base,
                    loc,
                    scale,
                });
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            laws,
            factors,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn factors(&self) -> &LatentFactors {
        &self.factors
    }

    /// Panics on out-of-range indices.
    pub fn law(&self, i: usize, j: usize) -> &CellLaw {
        assert!(i < self.n_rows && j < self.n_cols, "cell ({i}, {j}) out of range");
        &self.laws[i * self.n_cols + j]
    }

    pub fn true_w2_sq(&self, a: (usize, usize), b: (usize, usize)) -> f64 {
        self.law(a.0, a.1)
            .w2_sq(self.law(b.0, b.1))
            .expect("one base family per matrix")
    }

    pub fn true_w2(&self, a: (usize, usize), b: (usize, usize)) -> f64 {
        self.true_w2_sq(a, b).sqrt()
    }
}

/// Draws factors and samples for an `n_rows x n_cols` matrix with every
/// entry observed.
pub fn generate<T: Scalar>(
    spec: &DgpSpec,
    n_rows: usize,
    n_cols: usize,
) -> Result<(DistributionalMatrix<T>, TrueDistributions)> {
    spec.validate(n_cols)?;
    let dim = match spec.kind {
        DgpKind::Homoscedastic { dim, .. } => dim,
        DgpKind::Heteroscedastic => 1,
    };
    let factors = LatentFactors::draw_clustered(n_rows, n_cols, dim, spec.row_clusters, spec.seed);
    let truth = TrueDistributions::from_factors(spec, factors)?;
    let matrix = sample_matrix(spec, &truth)?;
    Ok((matrix, truth))
}

/// Draws entries for given laws; cell `(i, j)` uses its own seeded stream.
pub fn sample_matrix<T: Scalar>(spec: &DgpSpec, truth: &TrueDistributions) -> Result<DistributionalMatrix<T>> {
    let n_cols = truth.n_cols;
    let entries = (0..truth.n_rows * n_cols)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / n_cols, k % n_cols);
            let mut rng = rng_for(spec.seed, &[SAMPLE_STREAM, i as u64, j as u64]);
            let samples = truth
                .law(i, j)
                .sample_sorted(spec.samples_in(j), &mut rng)
                .into_iter()
                .map(T::lit)
                .collect();
            EmpiricalDistribution::from_vec(samples).map(Some)
        })
        .collect::<Result<Vec<_>>>()?;
    DistributionalMatrix::from_entries(truth.n_rows, n_cols, entries)
}
