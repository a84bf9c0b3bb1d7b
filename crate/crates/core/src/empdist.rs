//! Empirical one-dimensional distributions and the optimal transport
//! primitives built on them.
//!
//! An [`EmpiricalDistribution`] places mass `1/n` on each of its samples and
//! keeps them sorted, so the `k`-th stored value is the `k`-th order
//! statistic. Its quantile function is the step function
//!
//! ```text
//! Q(t) = X(k)   for t in ((k-1)/n, k/n],   i.e. k = ceil(t n)
//! ```
//!
//! In one dimension the 2-Wasserstein distance is the `L2(0,1)` distance
//! between quantile functions, and the barycenter of a collection is the
//! measure whose quantile function is the pointwise mean of the members'
//! quantile functions. Both reduce to order-statistic arithmetic when the
//! sample counts agree; for ragged counts the distance is integrated exactly
//! over the merged breakpoint grid `{k/n_a} ∪ {k/n_b}`.

use std::borrow::Borrow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{compensated_mean, CompensatedSum, Scalar};

/// Sorted sample array with uniform mass per atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>", bound = "T: Scalar")]
pub struct EmpiricalDistribution<T> {
    samples: Vec<T>,
}

impl<T: Scalar> EmpiricalDistribution<T> {
    /// Copies and sorts `raw`. Input order is irrelevant; ties are kept.
    pub fn from_samples(raw: &[T]) -> Result<Self> {
        Self::from_vec(raw.to_vec())
    }

    pub fn from_vec(mut samples: Vec<T>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(index) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteSample { index });
        }
        // All values are finite, so the comparison is total.
        samples.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
        Ok(Self { samples })
    }

    /// Skips validation; `samples` must be non-empty, finite and sorted.
    pub(crate) fn from_sorted_unchecked(samples: Vec<T>) -> Self {
        debug_assert!(!samples.is_empty());
        debug_assert!(samples.windows(2).all(|w| w[0] <= w[1]));
        Self { samples }
    }

    /// Order statistics, ascending.
    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    /// Step quantile `X(ceil(t n))` for `t` in `(0, 1)`.
    pub fn quantile(&self, t: T) -> Result<T> {
        check_level("t", t)?;
        Ok(self.quantile_unchecked(t))
    }

    #[inline]
    pub(crate) fn quantile_unchecked(&self, t: T) -> T {
        let n = self.samples.len();
        let k = (t * T::from_count(n)).ceil().to_usize().unwrap_or(1);
        self.samples[k.clamp(1, n) - 1]
    }

    /// Empirical CDF: fraction of samples `<= x`.
    pub fn cdf(&self, x: T) -> T {
        let count = self.samples.partition_point(|&s| s <= x);
        T::from_count(count) / T::from_count(self.n())
    }

    pub fn mean(&self) -> T {
        compensated_mean(&self.samples)
    }

    /// Population standard deviation (divides by `n`); zero for a singleton.
    pub fn std(&self) -> T {
        let mean = self.mean();
        let ss: CompensatedSum<T> = self.samples.iter().map(|&x| (x - mean) * (x - mean)).collect();
        (ss.total() / T::from_count(self.n())).sqrt()
    }

    /// Distribution of `-X`.
    pub fn negated(&self) -> Self {
        Self::from_sorted_unchecked(self.samples.iter().rev().map(|&x| -x).collect())
    }

    /// Distribution of `X + c`.
    pub fn shifted(&self, c: T) -> Self {
        Self::from_sorted_unchecked(self.samples.iter().map(|&x| x + c).collect())
    }

    /// Mean, median, population std and value-at-risk at level `var_alpha`.
    ///
    /// The value-at-risk is `Q_{-X}(1 - alpha)`, the upper `alpha` loss
    /// quantile expressed on the negated scale.
    pub fn summaries(&self, var_alpha: T) -> Result<Summaries<T>> {
        check_level("var_alpha", var_alpha)?;
        Ok(Summaries {
            mean: self.mean(),
            median: self.quantile_unchecked(T::lit(0.5)),
            std: self.std(),
            var_at_risk: self.negated().quantile_unchecked(T::one() - var_alpha),
        })
    }
}

impl<T: Scalar> TryFrom<Vec<T>> for EmpiricalDistribution<T> {
    type Error = Error;

    fn try_from(v: Vec<T>) -> Result<Self> {
        Self::from_vec(v)
    }
}

impl<T> From<EmpiricalDistribution<T>> for Vec<T> {
    fn from(d: EmpiricalDistribution<T>) -> Self {
        d.samples
    }
}

/// Scalar summaries of a distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Summaries<T> {
    pub mean: T,
    pub median: T,
    pub std: T,
    pub var_at_risk: T,
}

/// A quantile function tabulated on a grid of levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileGrid<T> {
    levels: Vec<T>,
    values: Vec<T>,
}

impl<T: Scalar> QuantileGrid<T> {
    pub fn new(levels: Vec<T>, values: Vec<T>) -> Result<Self> {
        validate_levels(&levels)?;
        if values.len() != levels.len() {
            return Err(Error::SizeMismatch {
                left: levels.len(),
                right: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample { index });
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("quantile values must be non-decreasing"));
        }
        Ok(Self { levels, values })
    }

    pub fn levels(&self) -> &[T] {
        &self.levels
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Midpoints `(k - 1/2) / m`, `k = 1..=m`. A grid tabulated at these
    /// levels carries mass `1/m` per value.
    pub fn midpoint_levels(m: usize) -> Vec<T> {
        let m_t = T::from_count(m);
        (1..=m).map(|k| (T::from_count(k) - T::lit(0.5)) / m_t).collect()
    }

    /// `k / (count + 1)`, `k = 1..=count`: 99 levels gives `0.01, ..., 0.99`.
    pub fn evenly_spaced_levels(count: usize) -> Vec<T> {
        let d = T::from_count(count + 1);
        (1..=count).map(|k| T::from_count(k) / d).collect()
    }
}

pub(crate) fn check_level<T: Scalar>(name: &'static str, t: T) -> Result<()> {
    if t > T::zero() && t < T::one() {
        Ok(())
    } else {
        Err(Error::OutOfDomain {
            name,
            value: t.to_f64().unwrap_or(f64::NAN),
        })
    }
}

pub(crate) fn validate_levels<T: Scalar>(levels: &[T]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::invalid("level grid is empty"));
    }
    for &t in levels {
        check_level("level", t)?;
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("levels must be strictly increasing"));
    }
    Ok(())
}

/// Squared 2-Wasserstein distance between equal-size empirical measures:
/// the mean squared gap between matching order statistics.
pub fn w2_sq_equal_n<T: Scalar>(a: &EmpiricalDistribution<T>, b: &EmpiricalDistribution<T>) -> Result<T> {
    if a.n() != b.n() {
        return Err(Error::SizeMismatch {
            left: a.n(),
            right: b.n(),
        });
    }
    let acc: CompensatedSum<T> = a
        .samples
        .iter()
        .zip(&b.samples)
        .map(|(&x, &y)| (x - y) * (x - y))
        .collect();
    Ok(acc.total() / T::from_count(a.n()))
}

pub fn w2_equal_n<T: Scalar>(a: &EmpiricalDistribution<T>, b: &EmpiricalDistribution<T>) -> Result<T> {
    w2_sq_equal_n(a, b).map(|d| d.sqrt())
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Squared 2-Wasserstein distance for arbitrary sample counts.
///
/// Both step quantile functions are constant between consecutive points of
/// the merged grid `{k/n_a} ∪ {l/n_b}`. Breakpoints are tracked as integers
/// over the common denominator `lcm(n_a, n_b)` so segment weights are exact;
/// when `n_a == n_b` every weight is one and the result is bit-identical to
/// [`w2_sq_equal_n`].
pub fn w2_sq_general<T: Scalar>(a: &EmpiricalDistribution<T>, b: &EmpiricalDistribution<T>) -> T {
    let (na, nb) = (a.n() as u64, b.n() as u64);
    let denom = na / gcd(na, nb) * nb;
    let (step_a, step_b) = (denom / na, denom / nb);
    let (xs, ys) = (&a.samples, &b.samples);

    let mut acc = CompensatedSum::new();
    let (mut i, mut j, mut pos) = (0usize, 0usize, 0u64);
    while i < xs.len() && j < ys.len() {
        let next_a = (i as u64 + 1) * step_a;
        let next_b = (j as u64 + 1) * step_b;
        let next = next_a.min(next_b);
        let d = xs[i] - ys[j];
        acc.add(T::from_u64(next - pos).expect("segment weight") * (d * d));
        pos = next;
        if next_a == next {
            i += 1;
        }
        if next_b == next {
            j += 1;
        }
    }
    acc.total() / T::from_u64(denom).expect("common denominator")
}

pub fn w2_general<T: Scalar>(a: &EmpiricalDistribution<T>, b: &EmpiricalDistribution<T>) -> T {
    w2_sq_general(a, b).sqrt()
}

/// Barycenter of equal-size empirical distributions: the `k`-th order
/// statistic of the result is the mean of the inputs' `k`-th order statistics.
pub fn barycenter<T: Scalar, D: Borrow<EmpiricalDistribution<T>>>(ds: &[D]) -> Result<EmpiricalDistribution<T>> {
    let first = ds.first().ok_or(Error::EmptyCollection)?.borrow();
    let n = first.n();
    if let Some(bad) = ds
        .iter()
        .map(Borrow::borrow)
        .find(|d: &&EmpiricalDistribution<T>| d.n() != n)
    {
        return Err(Error::SizeMismatch {
            left: n,
            right: bad.n(),
        });
    }
    let count = T::from_count(ds.len());
    let mut out = vec![T::zero(); n];
    for d in ds {
        for (o, &x) in out.iter_mut().zip(&d.borrow().samples) {
            *o += x;
        }
    }
    for o in &mut out {
        *o /= count;
    }
    // A mean of sorted sequences is sorted.
    Ok(EmpiricalDistribution::from_sorted_unchecked(out))
}

/// Barycenter quantile function tabulated at `levels`; sample counts may
/// differ between members.
pub fn general_barycenter<T: Scalar, D: Borrow<EmpiricalDistribution<T>>>(
    ds: &[D],
    levels: &[T],
) -> Result<QuantileGrid<T>> {
    if ds.is_empty() {
        return Err(Error::EmptyCollection);
    }
    validate_levels(levels)?;
    let count = T::from_count(ds.len());
    let values = levels
        .iter()
        .map(|&t| {
            ds.iter()
                .map(|d| d.borrow().quantile_unchecked(t))
                .fold(T::zero(), |s, q| s + q)
                / count
        })
        .collect();
    QuantileGrid::new(levels.to_vec(), values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(xs: &[f64]) -> EmpiricalDistribution<f64> {
        EmpiricalDistribution::from_samples(xs).unwrap()
    }

    #[test]
    fn construction_sorts_and_keeps_ties() {
        assert_eq!(d(&[3.0, 1.0, 2.0]).samples(), &[1.0, 2.0, 3.0]);
        assert_eq!(d(&[5.0]).n(), 1);
        assert_eq!(d(&[1.0, 1.0, 1.0]).samples(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(
            EmpiricalDistribution::<f64>::from_samples(&[]),
            Err(Error::EmptyInput)
        ));
        assert!(matches!(
            EmpiricalDistribution::from_samples(&[1.0, f64::NAN]),
            Err(Error::NonFiniteSample { index: 1 })
        ));
        assert!(matches!(
            EmpiricalDistribution::from_samples(&[f64::NEG_INFINITY]),
            Err(Error::NonFiniteSample { index: 0 })
        ));
    }

    #[test]
    fn step_quantile() {
        assert_eq!(d(&[1.0, 2.0, 3.0, 4.0]).quantile(0.5).unwrap(), 2.0);
        for t in [0.01, 0.5, 0.99] {
            assert_eq!(d(&[7.0]).quantile(t).unwrap(), 7.0);
        }
        // Enumerate the two steps of [0, 10]: (0, 0.5] -> 0, (0.5, 1) -> 10.
        let two = d(&[0.0, 10.0]);
        assert_eq!(two.quantile(0.5).unwrap(), 0.0);
        assert_eq!(two.quantile(0.5000001).unwrap(), 10.0);
        assert_eq!(two.quantile(0.75).unwrap(), 10.0);
    }

    #[test]
    fn quantile_domain() {
        let x = d(&[1.0]);
        for t in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(x.quantile(t), Err(Error::OutOfDomain { .. })));
        }
    }

    #[test]
    fn cdf_counts_ties() {
        let x = d(&[1.0, 2.0, 2.0, 3.0]);
        assert_eq!(x.cdf(0.0), 0.0);
        assert_eq!(x.cdf(2.0), 0.75);
        assert_eq!(x.cdf(3.0), 1.0);
    }

    #[test]
    fn equal_n_distance_examples() {
        assert_eq!(w2_equal_n(&d(&[1.0, 2.0, 3.0]), &d(&[1.0, 2.0, 3.0])).unwrap(), 0.0);
        assert_eq!(w2_equal_n(&d(&[0.0, 0.0]), &d(&[2.0, 2.0])).unwrap(), 2.0);
        assert_eq!(w2_equal_n(&d(&[0.0, 1.0]), &d(&[1.0, 3.0])).unwrap(), 2.5f64.sqrt());
        assert!(matches!(
            w2_equal_n(&d(&[0.0]), &d(&[0.0, 1.0])),
            Err(Error::SizeMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn general_distance_examples() {
        assert_eq!(w2_general(&d(&[0.0, 1.0]), &d(&[0.0, 1.0])), 0.0);
        let (a, b) = (d(&[0.0, 1.0]), d(&[1.0, 3.0]));
        assert_eq!(w2_general(&a, &b), w2_equal_n(&a, &b).unwrap());
        assert_eq!(w2_general(&a, &b), 2.5f64.sqrt());
        // Breakpoints {0.5, 1}: 0.5 * 0^2 + 0.5 * 2^2.
        assert_eq!(w2_general(&d(&[0.0]), &d(&[0.0, 2.0])), 2f64.sqrt());
    }

    #[test]
    fn general_distance_coprime_sizes() {
        // n = 2 and n = 3: segments (0,1/3],(1/3,1/2],(1/2,2/3],(2/3,1].
        let a = d(&[0.0, 6.0]);
        let b = d(&[0.0, 3.0, 6.0]);
        let expected = (0.0 + 9.0 + 9.0 + 0.0) / 6.0;
        assert!((w2_sq_general(&a, &b) - expected).abs() < 1e-15);
    }

    #[test]
    fn shifted_uniform_ordering() {
        let u01 = d(&[0.0, 1.0]);
        assert!(w2_general(&u01, &d(&[2.0, 3.0])) < w2_general(&u01, &d(&[4.0, 5.0])));
    }

    #[test]
    fn barycenter_examples() {
        let b = barycenter(&[d(&[1.0, 3.0]), d(&[5.0, 7.0])]).unwrap();
        assert_eq!(b.samples(), &[3.0, 5.0]);
        let single = d(&[1.0, 4.0, 9.0]);
        assert_eq!(barycenter(&[&single]).unwrap(), single);
        let b = barycenter(&[d(&[0.0, 0.0]), d(&[0.0, 2.0]), d(&[0.0, 4.0])]).unwrap();
        assert_eq!(b.samples(), &[0.0, 2.0]);
    }

    #[test]
    fn barycenter_errors() {
        let empty: [EmpiricalDistribution<f64>; 0] = [];
        assert!(matches!(barycenter(&empty), Err(Error::EmptyCollection)));
        assert!(matches!(
            barycenter(&[d(&[1.0]), d(&[1.0, 2.0])]),
            Err(Error::SizeMismatch { .. })
        ));
    }

    #[test]
    fn general_barycenter_examples() {
        let g = general_barycenter(&[d(&[0.0, 2.0])], &[0.25, 0.75]).unwrap();
        assert_eq!(g.values(), &[0.0, 2.0]);
        let g = general_barycenter(&[d(&[0.0]), d(&[4.0])], &[0.5]).unwrap();
        assert_eq!(g.values(), &[2.0]);
        let x = d(&[0.0, 2.0]);
        let levels = [0.1, 0.3, 0.5, 0.7, 0.9];
        let g = general_barycenter(&[&x, &x], &levels).unwrap();
        for (t, v) in levels.iter().zip(g.values()) {
            assert_eq!(*v, x.quantile(*t).unwrap());
        }
        let empty: [EmpiricalDistribution<f64>; 0] = [];
        assert!(matches!(
            general_barycenter(&empty, &[0.5]),
            Err(Error::EmptyCollection)
        ));
        assert!(general_barycenter(&[&x], &[0.5, 0.5]).is_err());
        assert!(general_barycenter(&[&x], &[0.0]).is_err());
    }

    #[test]
    fn summaries_examples() {
        let s = d(&[1.0, 1.0, 1.0]).summaries(0.05).unwrap();
        assert_eq!((s.mean, s.median, s.std, s.var_at_risk), (1.0, 1.0, 0.0, -1.0));
        let s = d(&[-2.0, 2.0]).summaries(0.05).unwrap();
        assert_eq!((s.mean, s.std), (0.0, 2.0));
    }

    #[test]
    fn value_at_risk_matches_brute_force_negation() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = d(&xs).summaries(0.05).unwrap();
        // Negate, sort, and take the ceil(0.95 * 100) = 95th smallest.
        let mut neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        neg.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(neg[94], -6.0);
        assert_eq!(s.var_at_risk, -6.0);
        assert!(d(&xs).summaries(1.0).is_err());
    }

    #[test]
    fn quantile_grid_validation() {
        assert!(QuantileGrid::new(vec![0.2, 0.4], vec![1.0, 0.5]).is_err());
        assert!(QuantileGrid::new(vec![0.4, 0.2], vec![0.0, 1.0]).is_err());
        assert!(QuantileGrid::new(vec![0.2], vec![0.0, 1.0]).is_err());
        assert!(QuantileGrid::new(vec![0.2, 0.4], vec![0.0, 0.0]).is_ok());
        let levels: Vec<f64> = QuantileGrid::<f64>::evenly_spaced_levels(99);
        assert_eq!(levels.len(), 99);
        assert!((levels[0] - 0.01).abs() < 1e-15 && (levels[98] - 0.99).abs() < 1e-15);
        assert_eq!(QuantileGrid::<f64>::midpoint_levels(2), vec![0.25, 0.75]);
    }

    #[test]
    fn works_in_single_precision() {
        let a = EmpiricalDistribution::from_samples(&[0.0f32, 1.0]).unwrap();
        let b = EmpiricalDistribution::from_samples(&[1.0f32, 3.0]).unwrap();
        assert_eq!(w2_sq_equal_n(&a, &b).unwrap(), 2.5f32);
        assert_eq!(w2_sq_general(&a, &b), 2.5f32);
    }

    #[test]
    fn serde_round_trip_validates() {
        let x = d(&[2.0, 1.0]);
        let json = serde_json::to_string(&x).unwrap();
        assert_eq!(json, "[1.0,2.0]");
        let back: EmpiricalDistribution<f64> = serde_json::from_str("[3.0,1.0]").unwrap();
        assert_eq!(back.samples(), &[1.0, 3.0]);
        assert!(serde_json::from_str::<EmpiricalDistribution<f64>>("[]").is_err());
    }
}
