//! Wasserstein nearest-neighbor imputation of a single matrix cell.
//!
//! For a target cell `(i, j)` every other row `u` observed in column `j` is
//! scored by the mean squared 2-Wasserstein distance between rows `i` and `u`
//! over the columns both rows observe, column `j` excluded. Rows within the
//! threshold `eta` form the neighborhood, and the estimate is the Wasserstein
//! barycenter of the neighbors' column-`j` entries.
//!
//! The target row never neighbors itself, and column `j` never enters a
//! distance, so an observed target entry has no influence on its own
//! estimate.

use rayon::prelude::*;
use serde::Serialize;

use crate::empdist::{barycenter, general_barycenter, w2_sq_general, EmpiricalDistribution, QuantileGrid, Summaries};
use crate::error::{Error, Result};
use crate::matrix::DistributionalMatrix;
use crate::scalar::Scalar;

/// Restrictions applied when turning row distances into a neighborhood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct NeighborPolicy {
    /// Rows sharing fewer observed columns with the target row are treated
    /// as infinitely far. The plain estimator uses 1.
    pub min_overlap: usize,
    /// Keep only the closest rows within the threshold.
    pub max_neighbors: Option<usize>,
    /// If fewer rows fall within the threshold, take this many closest
    /// finite-distance rows instead.
    pub min_neighbors: Option<usize>,
}

impl Default for NeighborPolicy {
    fn default() -> Self {
        Self {
            min_overlap: 1,
            max_neighbors: None,
            min_neighbors: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct Neighbor<T> {
    pub row: usize,
    pub distance: T,
    pub overlap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct NeighborSet<T> {
    pub target_row: usize,
    pub target_col: usize,
    pub eta: T,
    /// Ascending by row index.
    pub members: Vec<Neighbor<T>>,
}

impl<T: Scalar> NeighborSet<T> {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn rows(&self) -> Vec<usize> {
        self.members.iter().map(|n| n.row).collect()
    }
}

/// Mean squared W2 distance between rows `i` and `u` over shared columns
/// other than `exclude`, with the number of shared columns. The distance is
/// infinite when nothing is shared.
pub fn row_distance_with_overlap<T: Scalar>(
    m: &DistributionalMatrix<T>,
    i: usize,
    u: usize,
    exclude: usize,
) -> Result<(T, usize)> {
    m.check_row(i)?;
    m.check_row(u)?;
    m.check_col(exclude)?;
    let mut total = T::zero();
    let mut overlap = 0usize;
    for v in (0..m.n_cols()).filter(|&v| v != exclude) {
        if let (Some(a), Some(b)) = (m.get(i, v), m.get(u, v)) {
            total += w2_sq_general(a, b);
            overlap += 1;
        }
    }
    if overlap == 0 {
        Ok((T::infinity(), 0))
    } else {
        Ok((total / T::from_count(overlap), overlap))
    }
}

pub fn row_distance<T: Scalar>(m: &DistributionalMatrix<T>, i: usize, u: usize, exclude: usize) -> Result<T> {
    row_distance_with_overlap(m, i, u, exclude).map(|(d, _)| d)
}

/// Row distances from a target row to every row observed in the target
/// column, computed once and reusable across thresholds.
#[derive(Debug, Clone)]
pub struct CandidatePool<T> {
    pub target_row: usize,
    pub target_col: usize,
    /// Ascending by row index; rows below the overlap guard carry an
    /// infinite distance.
    pub candidates: Vec<Neighbor<T>>,
}

impl<T: Scalar> CandidatePool<T> {
    pub fn new(m: &DistributionalMatrix<T>, i: usize, j: usize, min_overlap: usize) -> Result<Self> {
        m.check_row(i)?;
        m.check_col(j)?;
        let candidates = (0..m.n_rows())
            .filter(|&u| u != i && m.is_observed(u, j))
            .map(|u| {
                let (d, overlap) = row_distance_with_overlap(m, i, u, j)?;
                let distance = if overlap >= min_overlap.max(1) {
                    d
                } else {
                    T::infinity()
                };
                Ok(Neighbor {
                    row: u,
                    distance,
                    overlap,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            target_row: i,
            target_col: j,
            candidates,
        })
    }

    /// Finite distances, in row order.
    pub fn finite_distances(&self) -> Vec<T> {
        self.candidates
            .iter()
            .map(|c| c.distance)
            .filter(|d| d.is_finite())
            .collect()
    }

    fn nearest_finite(&self, k: usize) -> Vec<Neighbor<T>> {
        let mut finite: Vec<_> = self
            .candidates
            .iter()
            .filter(|c| c.distance.is_finite())
            .copied()
            .collect();
        sort_by_distance(&mut finite);
        finite.truncate(k);
        finite
    }

    /// Rows with distance `<= eta`, adjusted by the policy's size limits.
    pub fn select(&self, eta: T, policy: &NeighborPolicy) -> NeighborSet<T> {
        let mut members: Vec<_> = self
            .candidates
            .iter()
            .filter(|c| c.distance.is_finite() && c.distance <= eta)
            .copied()
            .collect();
        if let Some(k) = policy.max_neighbors {
            if members.len() > k {
                sort_by_distance(&mut members);
                members.truncate(k);
            }
        }
        if let Some(k) = policy.min_neighbors {
            if members.len() < k {
                members = self.nearest_finite(k);
            }
        }
        members.sort_by_key(|n| n.row);
        NeighborSet {
            target_row: self.target_row,
            target_col: self.target_col,
            eta,
            members,
        }
    }
}

fn sort_by_distance<T: Scalar>(v: &mut [Neighbor<T>]) {
    v.sort_by(|a, b| {
        a.distance
            .partial_cmp(&b.distance)
            .expect("finite distances")
            .then(a.row.cmp(&b.row))
    });
}

/// Barycenter of the neighbors' entries: an order-statistic average when all
/// entries share a sample count, otherwise a quantile grid at the midpoint
/// levels `(k - 1/2) / m` with `m` the largest count.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub enum Estimate<T> {
    OrderStatistics(EmpiricalDistribution<T>),
    Grid(QuantileGrid<T>),
}

impl<T: Scalar> Estimate<T> {
    pub fn from_entries(entries: &[&EmpiricalDistribution<T>]) -> Result<Self> {
        let first = entries.first().ok_or(Error::EmptyCollection)?;
        if entries.iter().all(|e| e.n() == first.n()) {
            return barycenter(entries).map(Estimate::OrderStatistics);
        }
        let m = entries.iter().map(|e| e.n()).max().unwrap_or(1);
        general_barycenter(entries, &QuantileGrid::midpoint_levels(m)).map(Estimate::Grid)
    }

    /// The estimate as an equal-mass discrete distribution.
    pub fn distribution(&self) -> EmpiricalDistribution<T> {
        match self {
            Estimate::OrderStatistics(d) => d.clone(),
            Estimate::Grid(g) => EmpiricalDistribution::from_sorted_unchecked(g.values().to_vec()),
        }
    }

    pub fn quantile(&self, t: T) -> Result<T> {
        match self {
            Estimate::OrderStatistics(d) => d.quantile(t),
            Estimate::Grid(g) => {
                crate::empdist::check_level("t", t)?;
                let m = g.values().len();
                let k = (t * T::from_count(m)).ceil().to_usize().unwrap_or(1);
                Ok(g.values()[k.clamp(1, m) - 1])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct ImputationResult<T> {
    pub estimate: Estimate<T>,
    pub neighbors: NeighborSet<T>,
    pub summaries: Summaries<T>,
}

/// Which cells a batch run imputes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetCells {
    MissingOnly,
    All,
}

#[derive(Debug)]
pub struct CellImputation<T> {
    pub row: usize,
    pub col: usize,
    pub outcome: Result<ImputationResult<T>>,
}

/// Distributional nearest-neighbor estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistNn<T> {
    eta: T,
    policy: NeighborPolicy,
    var_alpha: T,
}

impl<T: Scalar> DistNn<T> {
    pub fn new(eta: T) -> Result<Self> {
        check_eta(eta)?;
        Ok(Self {
            eta,
            policy: NeighborPolicy::default(),
            var_alpha: T::lit(0.05),
        })
    }

    pub fn with_policy(mut self, policy: NeighborPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_var_alpha(mut self, var_alpha: T) -> Result<Self> {
        crate::empdist::check_level("var_alpha", var_alpha)?;
        self.var_alpha = var_alpha;
        Ok(self)
    }

    pub fn with_eta(mut self, eta: T) -> Result<Self> {
        check_eta(eta)?;
        self.eta = eta;
        Ok(self)
    }

    pub fn eta(&self) -> T {
        self.eta
    }

    pub fn policy(&self) -> &NeighborPolicy {
        &self.policy
    }

    pub fn var_alpha(&self) -> T {
        self.var_alpha
    }

    pub fn find_neighbors(&self, m: &DistributionalMatrix<T>, i: usize, j: usize) -> Result<NeighborSet<T>> {
        let pool = CandidatePool::new(m, i, j, self.policy.min_overlap)?;
        Ok(pool.select(self.eta, &self.policy))
    }

    pub fn impute(&self, m: &DistributionalMatrix<T>, i: usize, j: usize) -> Result<ImputationResult<T>> {
        let pool = CandidatePool::new(m, i, j, self.policy.min_overlap)?;
        self.impute_from_pool(m, &pool)
    }

    /// Imputes using precomputed row distances.
    pub fn impute_from_pool(
        &self,
        m: &DistributionalMatrix<T>,
        pool: &CandidatePool<T>,
    ) -> Result<ImputationResult<T>> {
        let neighbors = pool.select(self.eta, &self.policy);
        self.impute_with_neighbors(m, neighbors)
    }

    pub fn impute_with_neighbors(
        &self,
        m: &DistributionalMatrix<T>,
        neighbors: NeighborSet<T>,
    ) -> Result<ImputationResult<T>> {
        let (i, j) = (neighbors.target_row, neighbors.target_col);
        if neighbors.is_empty() {
            return Err(Error::NoNeighbors { row: i, col: j });
        }
        let entries: Vec<_> = neighbors
            .members
            .iter()
            .map(|n| m.get(n.row, j).expect("neighbors are observed in the target column"))
            .collect();
        let estimate = Estimate::from_entries(&entries)?;
        let summaries = estimate.distribution().summaries(self.var_alpha)?;
        Ok(ImputationResult {
            estimate,
            neighbors,
            summaries,
        })
    }

    /// Imputes every target cell independently. Failures are recorded per
    /// cell; results are in row-major order whatever the thread schedule.
    pub fn impute_all(&self, m: &DistributionalMatrix<T>, targets: TargetCells) -> Vec<CellImputation<T>> {
        let eta = self.eta;
        self.impute_all_with(m, targets, |_, _| eta)
    }

    /// Like [`DistNn::impute_all`] with a threshold chosen per cell.
    pub fn impute_all_with<F>(
        &self,
        m: &DistributionalMatrix<T>,
        targets: TargetCells,
        eta_for: F,
    ) -> Vec<CellImputation<T>>
    where
        F: Fn(usize, usize) -> T + Sync,
    {
        let cells: Vec<(usize, usize)> = (0..m.n_rows())
            .flat_map(|i| (0..m.n_cols()).map(move |j| (i, j)))
            .filter(|&(i, j)| targets == TargetCells::All || !m.is_observed(i, j))
            .collect();
        cells
            .into_par_iter()
            .map(|(row, col)| {
                let outcome = self.with_eta(eta_for(row, col)).and_then(|est| est.impute(m, row, col));
                CellImputation { row, col, outcome }
            })
            .collect()
    }
}

fn check_eta<T: Scalar>(eta: T) -> Result<()> {
    if eta >= T::zero() {
        Ok(())
    } else {
        Err(Error::invalid(format!("threshold eta = {eta} must be >= 0")))
    }
}
