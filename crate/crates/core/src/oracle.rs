//! Closed-form expectations for uniform distributions and a brute-force
//! discrete transport reference.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::empdist::{w2_sq_equal_n, w2_sq_general, EmpiricalDistribution};
use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::scalar::Scalar;

/// Largest sample count accepted by [`brute_force_w2_sq`].
pub const BRUTE_FORCE_MAX_N: usize = 6;

/// Two uniform laws `U(a, b)` and `U(c, d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformPair {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl UniformPair {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        check_interval(a, b)?;
        check_interval(c, d)?;
        Ok(Self { a, b, c, d })
    }
}

fn check_interval(lo: f64, hi: f64) -> Result<()> {
    if lo.is_finite() && hi.is_finite() && lo < hi {
        Ok(())
    } else {
        Err(Error::invalid(format!("interval ({lo}, {hi}) is not a valid support")))
    }
}

/// Squared W2 distance between `U(a, b)` and `U(c, d)`.
pub fn uniform_w2_sq(p: &UniformPair) -> f64 {
    let lo = p.a - p.c;
    let hi = p.b - p.d;
    (lo * lo + hi * hi + lo * hi) / 3.0
}

/// Expected squared W2 distance between `U(a, b)` and an empirical measure of
/// `n` independent draws from it.
pub fn uniform_empirical_expected_w2_sq(a: f64, b: f64, n: usize) -> Result<f64> {
    check_interval(a, b)?;
    check_count(n)?;
    Ok((b - a).powi(2) / (6.0 * n as f64))
}

/// Expected squared W2 distance between independent `n`-sample empirical
/// measures of `U(a, b)` and `U(c, d)`.
pub fn uniform_pair_empirical_expected_w2_sq(p: &UniformPair, n: usize) -> Result<f64> {
    check_count(n)?;
    Ok(uniform_w2_sq(p) + (p.b - p.a) * (p.d - p.c) / (3.0 * (n as f64 + 1.0)))
}

/// Expected squared W2 distance between the empirical barycenter of `m`
/// independent `n`-sample draws, one from each `U(a_i, b_i)`, and the true
/// barycenter `U(mean a, mean b)`.
///
/// Degenerate intervals (`a_i == b_i`) are accepted.
pub fn uniform_barycenter_expected_w2_sq(intervals: &[(f64, f64)], n: usize) -> Result<f64> {
    check_count(n)?;
    if intervals.is_empty() {
        return Err(Error::EmptyCollection);
    }
    if let Some(&(a, b)) = intervals
        .iter()
        .find(|(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite())
    {
        return Err(Error::invalid(format!("interval ({a}, {b}) is not a valid support")));
    }
    let m = intervals.len() as f64;
    let a_bar = intervals.iter().map(|p| p.0).sum::<f64>() / m;
    let b_bar = intervals.iter().map(|p| p.1).sum::<f64>() / m;
    let w2 = (b_bar - a_bar).powi(2);
    let n = n as f64;
    Ok(w2 / (6.0 * m * (n + 1.0)) + w2 / (6.0 * n * (n + 1.0)))
}

fn check_count(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::invalid("sample count must be positive"))
    } else {
        Ok(())
    }
}

/// Optimal transport cost between two equal-size uniform discrete measures,
/// found by trying every matching.
pub fn brute_force_w2_sq<T: Scalar>(a: &EmpiricalDistribution<T>, b: &EmpiricalDistribution<T>) -> Result<f64> {
    let n = a.n();
    if n != b.n() {
        return Err(Error::SizeMismatch { left: n, right: b.n() });
    }
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::TooLarge {
            n,
            max: BRUTE_FORCE_MAX_N,
        });
    }
    let x: Vec<f64> = a.samples().iter().map(|v| v.as_f64()).collect();
    let y: Vec<f64> = b.samples().iter().map(|v| v.as_f64()).collect();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let cost: f64 = p.iter().enumerate().map(|(k, &l)| (x[k] - y[l]).powi(2)).sum();
        best = best.min(cost);
    });
    Ok(best / n as f64)
}

/// Agreement of the closed-form distances with enumeration on random
/// instances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BruteForceCheck {
    pub instances: usize,
    /// Largest relative gap between the sorted matching and enumeration.
    pub max_rel_gap_equal_n: f64,
    /// Largest relative gap between the general-size and equal-size formulas.
    pub max_rel_gap_general: f64,
}

fn rel_gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Draws `instances` random pairs with a common size in `1..=6`. Half the
/// instances use small integers so that ties are frequent.
pub fn check_brute_force(instances: usize, seed: u64) -> Result<BruteForceCheck> {
    let mut out = BruteForceCheck {
        instances,
        max_rel_gap_equal_n: 0.0,
        max_rel_gap_general: 0.0,
    };
    for k in 0..instances {
        let mut rng = rng_for(seed, &[k as u64]);
        let n = rng.random_range(1..=BRUTE_FORCE_MAX_N);
        let draw = |rng: &mut crate::rng::Rng| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    if k % 2 == 0 {
                        rng.random_range(-10.0..10.0)
                    } else {
                        rng.random_range(-3i32..=3) as f64
                    }
                })
                .collect()
        };
        let a = EmpiricalDistribution::from_vec(draw(&mut rng))?;
        let b = EmpiricalDistribution::from_vec(draw(&mut rng))?;
        let sorted = w2_sq_equal_n(&a, &b)?;
        out.max_rel_gap_equal_n = out.max_rel_gap_equal_n.max(rel_gap(sorted, brute_force_w2_sq(&a, &b)?));
        out.max_rel_gap_general = out.max_rel_gap_general.max(rel_gap(w2_sq_general(&a, &b), sorted));
    }
    Ok(out)
}

fn permute(p: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        visit(p);
        return;
    }
    for l in k..p.len() {
        p.swap(k, l);
        permute(p, k + 1, visit);
        p.swap(k, l);
    }
}
