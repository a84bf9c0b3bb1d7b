//! Partially observed matrix of empirical distributions.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::empdist::EmpiricalDistribution;
use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::scalar::Scalar;

/// Dense grid of optional sample arrays. A cell is observed exactly when it
/// holds an entry, so the observation mask cannot drift from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DistributionalMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<Option<EmpiricalDistribution<T>>>,
}

impl<T: Scalar> DistributionalMatrix<T> {
    /// All-missing matrix.
    pub fn empty(n_rows: usize, n_cols: usize) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::invalid("matrix dimensions must be positive"));
        }
        Ok(Self {
            n_rows,
            n_cols,
            entries: vec![None; n_rows * n_cols],
        })
    }

    /// Builds from row-major entries.
    pub fn from_entries(n_rows: usize, n_cols: usize, entries: Vec<Option<EmpiricalDistribution<T>>>) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::invalid("matrix dimensions must be positive"));
        }
        if entries.len() != n_rows * n_cols {
            return Err(Error::SizeMismatch {
                left: n_rows * n_cols,
                right: entries.len(),
            });
        }
        Ok(Self {
            n_rows,
            n_cols,
            entries,
        })
    }

    /// Builds from nested rows; `None` marks a missing cell.
    pub fn from_rows(rows: Vec<Vec<Option<Vec<T>>>>) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut entries = Vec::with_capacity(n_rows * n_cols);
        for row in rows {
            if row.len() != n_cols {
                return Err(Error::SizeMismatch {
                    left: n_cols,
                    right: row.len(),
                });
            }
            for cell in row {
                entries.push(cell.map(EmpiricalDistribution::from_vec).transpose()?);
            }
        }
        Self::from_entries(n_rows, n_cols, entries)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub(crate) fn check_row(&self, i: usize) -> Result<()> {
        if i < self.n_rows {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                what: "row",
                index: i,
                len: self.n_rows,
            })
        }
    }

    pub(crate) fn check_col(&self, j: usize) -> Result<()> {
        if j < self.n_cols {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                what: "column",
                index: j,
                len: self.n_cols,
            })
        }
    }

    /// Panics on out-of-range indices.
    pub fn get(&self, i: usize, j: usize) -> Option<&EmpiricalDistribution<T>> {
        assert!(i < self.n_rows && j < self.n_cols, "cell ({i}, {j}) out of range");
        self.entries[i * self.n_cols + j].as_ref()
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.get(i, j).is_some()
    }

    pub fn set(&mut self, i: usize, j: usize, entry: Option<EmpiricalDistribution<T>>) {
        assert!(i < self.n_rows && j < self.n_cols, "cell ({i}, {j}) out of range");
        self.entries[i * self.n_cols + j] = entry;
    }

    /// Copy of the matrix with cell `(i, j)` marked missing.
    pub fn without(&self, i: usize, j: usize) -> Self {
        let mut m = self.clone();
        m.set(i, j, None);
        m
    }

    /// Row-major observation mask.
    pub fn mask(&self) -> Vec<bool> {
        self.entries.iter().map(Option::is_some).collect()
    }

    pub fn observed_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_some()).count()
    }

    pub fn observed_cols(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_cols).filter(move |&v| self.is_observed(i, v))
    }

    /// Iterates `(row, col, entry)` over observed cells in row-major order.
    pub fn iter_observed(&self) -> impl Iterator<Item = (usize, usize, &EmpiricalDistribution<T>)> {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(k, e)| e.as_ref().map(|d| (k / self.n_cols, k % self.n_cols, d)))
    }
}

/// Observation probability and seed of an MCAR mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    p: f64,
    seed: u64,
}

impl MaskSpec {
    pub fn new(p: f64, seed: u64) -> Result<Self> {
        if p > 0.0 && p <= 1.0 {
            Ok(Self { p, seed })
        } else {
            Err(Error::invalid(format!("observation probability {p} not in (0, 1]")))
        }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Keeps each cell independently with probability `p`.
///
/// One uniform draw is consumed per cell in row-major order, including the
/// protected cell, so the mask of every other cell does not depend on whether
/// a cell is protected. Cells already missing in `full` stay missing.
pub fn apply_mcar<T: Scalar>(
    full: &DistributionalMatrix<T>,
    spec: MaskSpec,
    protect: Option<(usize, usize)>,
) -> DistributionalMatrix<T> {
    let mut rng = rng_for(spec.seed, &[0x6d63_6172]);
    let n_cols = full.n_cols;
    let entries = full
        .entries
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let keep = rng.random::<f64>() < spec.p;
            let protected = protect == Some((k / n_cols, k % n_cols));
            if keep && !protected {
                e.clone()
            } else {
                None
            }
        })
        .collect();
    DistributionalMatrix {
        n_rows: full.n_rows,
        n_cols,
        entries,
    }
}

/// Columns other than `exclude` that are observed in both rows `i` and `u`.
pub fn shared_columns<T: Scalar>(
    m: &DistributionalMatrix<T>,
    i: usize,
    u: usize,
    exclude: usize,
) -> Result<Vec<usize>> {
    m.check_row(i)?;
    m.check_row(u)?;
    m.check_col(exclude)?;
    Ok((0..m.n_cols)
        .filter(|&v| v != exclude && m.is_observed(i, v) && m.is_observed(u, v))
        .collect())
}
