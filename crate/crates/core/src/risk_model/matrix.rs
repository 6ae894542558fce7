use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScrError};

/// Eigenvalues below this are treated as a genuine loss of semidefiniteness.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Square correlation matrix attached to an internal node. Row `k` refers to
/// the node's `k`-th child.
///
/// Construction only checks that the matrix is square; the correlation
/// invariants (symmetry, unit diagonal, range) are reported by
/// [`CorrelationMatrix::check`] so that a tree can be inspected even when they
/// fail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct CorrelationMatrix {
    order: usize,
    entries: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> std::result::Result<Self, RaggedMatrix> {
        let order = rows.len();
        let mut entries = Vec::with_capacity(order * order);
        for (row_index, row) in rows.into_iter().enumerate() {
            if row.len() != order {
                return Err(RaggedMatrix {
                    row: row_index,
                    expected: order,
                    found: row.len(),
                });
            }
            entries.extend(row);
        }
        Ok(Self { order, entries })
    }

    pub fn identity(order: usize) -> Self {
        Self::uniform(order, 0.0)
    }

    /// Unit diagonal with every off-diagonal entry equal to `rho`.
    pub fn uniform(order: usize, rho: f64) -> Self {
        let mut entries = vec![rho; order * order];
        for i in 0..order {
            entries[i * order + i] = 1.0;
        }
        Self { order, entries }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.order + j]
    }

    /// Sets a single entry. Does not touch `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.entries[i * self.order + j] = value;
    }

    pub fn set_symmetric(&mut self, i: usize, j: usize, value: f64) {
        self.set(i, j, value);
        self.set(j, i, value);
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.order..(i + 1) * self.order]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.order).map(|i| self.row(i).to_vec()).collect()
    }

    /// `P · s`
    pub fn mul_vec(&self, s: &[f64]) -> Vec<f64> {
        (0..self.order)
            .map(|i| self.row(i).iter().zip(s).map(|(r, x)| r * x).sum())
            .collect()
    }

    /// `sᵀ · P · s`
    pub fn quadratic_form(&self, s: &[f64]) -> f64 {
        self.mul_vec(s).iter().zip(s).map(|(ps, x)| ps * x).sum()
    }

    pub fn off_diagonal(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.order;
        (0..n).flat_map(move |i| {
            (0..n)
                .filter(move |&j| j != i)
                .map(move |j| (i, j, self.get(i, j)))
        })
    }

    pub fn all_non_negative(&self) -> bool {
        self.entries.iter().all(|&v| v >= 0.0)
    }

    /// Hard invariants: symmetry, unit diagonal, entries in `[-1, 1]`.
    /// `node` is used only to label the errors.
    pub fn check(&self, node: &str) -> Vec<ScrError> {
        let mut errors = Vec::new();
        let n = self.order;
        for i in 0..n {
            let d = self.get(i, i);
            if !d.is_finite() {
                errors.push(ScrError::NonFinite(format!("{node}[{i}][{i}]")));
            } else if d != 1.0 {
                errors.push(ScrError::DiagonalNotOne {
                    node: node.to_string(),
                    i,
                    value: d,
                });
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let v = self.get(i, j);
                if !v.is_finite() {
                    errors.push(ScrError::NonFinite(format!("{node}[{i}][{j}]")));
                    continue;
                }
                if !(-1.0..=1.0).contains(&v) {
                    errors.push(ScrError::CorrelationOutOfRange {
                        node: node.to_string(),
                        i,
                        j,
                        value: v,
                    });
                }
                if j > i && self.get(j, i) != v {
                    errors.push(ScrError::AsymmetricMatrix {
                        node: node.to_string(),
                        i,
                        j,
                        upper: v,
                        lower: self.get(j, i),
                    });
                }
            }
        }
        errors
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.order).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Smallest eigenvalue of the (symmetric) matrix. `None` for an empty or
    /// asymmetric matrix.
    pub fn min_eigenvalue(&self) -> Option<f64> {
        if self.order == 0 || !self.is_symmetric() {
            return None;
        }
        let m = DMatrix::from_row_slice(self.order, self.order, &self.entries);
        SymmetricEigen::new(m)
            .eigenvalues
            .iter()
            .copied()
            .reduce(f64::min)
    }

    pub fn is_positive_semidefinite(&self) -> bool {
        self.min_eigenvalue().is_some_and(|e| e >= -PSD_TOLERANCE)
    }

    /// Block-diagonal assembly; entries across blocks are zero.
    pub fn block_diagonal(blocks: &[&CorrelationMatrix]) -> Self {
        let order: usize = blocks.iter().map(|b| b.order).sum();
        let mut out = Self {
            order,
            entries: vec![0.0; order * order],
        };
        let mut offset = 0;
        for block in blocks {
            for i in 0..block.order {
                for j in 0..block.order {
                    out.set(offset + i, offset + j, block.get(i, j));
                }
            }
            offset += block.order;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RaggedMatrix {
    pub row: usize,
    pub expected: usize,
    pub found: usize,
}

impl std::fmt::Display for RaggedMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "row {} has {} entries, expected {}",
            self.row, self.found, self.expected
        )
    }
}

impl TryFrom<Vec<Vec<f64>>> for CorrelationMatrix {
    type Error = String;

    fn try_from(rows: Vec<Vec<f64>>) -> std::result::Result<Self, Self::Error> {
        Self::from_rows(rows).map_err(|e| e.to_string())
    }
}

impl From<CorrelationMatrix> for Vec<Vec<f64>> {
    fn from(m: CorrelationMatrix) -> Self {
        m.rows()
    }
}

pub(crate) fn ensure_len(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(ScrError::LengthMismatch { left, right });
    }
    Ok(())
}
