//! Square-root aggregation.
//!
//! Every internal node aggregates its children as `sqrt(sᵀ P s)` with its own
//! correlation matrix `P`; nesting these level by level up to the root gives the
//! BSCR. Also here: the single-matrix ("full base") alternative, leave-one-out
//! recomputation, diversification effects and the pairwise ρ calibration.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Result, ScrError};
use crate::risk_model::{ensure_len, CorrelationMatrix, RiskTree};

/// Negative quadratic forms smaller in magnitude than this fraction of
/// `Σ|sᵢ sⱼ ρᵢⱼ|` are rounding noise and read as zero. Anything beyond is a
/// genuinely indefinite aggregation.
pub const QUADRATIC_FORM_NOISE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NodeAggregate {
    pub aggregated_scr: f64,
    pub diversification_effect: f64,
}

/// Aggregated SCR and diversification effect for every node of a tree.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationResult {
    root: String,
    ids: Vec<String>,
    lookup: HashMap<String, usize>,
    values: Vec<NodeAggregate>,
}

impl AggregationResult {
    pub fn root_id(&self) -> &str {
        &self.root
    }

    /// Aggregated value at the root.
    pub fn bscr(&self) -> f64 {
        self.get(&self.root).map(|v| v.aggregated_scr).unwrap_or(0.0)
    }

    pub fn get(&self, id: &str) -> Option<&NodeAggregate> {
        self.lookup.get(id).map(|&i| &self.values[i])
    }

    pub fn scr(&self, id: &str) -> Option<f64> {
        self.get(id).map(|v| v.aggregated_scr)
    }

    /// Entries in the tree's node (document) order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &NodeAggregate)> {
        self.ids.iter().map(String::as_str).zip(&self.values)
    }

    pub(crate) fn scr_at(&self, i: usize) -> f64 {
        self.values[i].aggregated_scr
    }
}

fn checked_sqrt(q: f64, s: &[f64], corr: &CorrelationMatrix) -> Result<f64> {
    if q >= 0.0 {
        return Ok(q.sqrt());
    }
    let scale: f64 = (0..s.len())
        .map(|i| {
            corr.row(i)
                .iter()
                .zip(s)
                .map(|(r, x)| (r * x * s[i]).abs())
                .sum::<f64>()
        })
        .sum();
    if q >= -QUADRATIC_FORM_NOISE * scale {
        Ok(0.0)
    } else {
        Err(ScrError::IndefiniteAggregation {
            node: String::new(),
            value: q,
        })
    }
}

/// `sqrt(Σₓ Σᵧ sₓ sᵧ ρₓᵧ)`.
pub fn aggregate_level(child_scrs: &[f64], corr: &CorrelationMatrix) -> Result<f64> {
    ensure_len(child_scrs.len(), corr.order())?;
    let q = corr.quadratic_form(child_scrs);
    checked_sqrt(q, child_scrs, corr)
}

/// `Σ child_scrs − aggregated`.
pub fn diversification_effect(child_scrs: &[f64], aggregated: f64) -> f64 {
    child_scrs.iter().sum::<f64>() - aggregated
}

/// Post-order evaluation of the whole tree. `zeroed` forces one node (and so
/// its subtree's contribution) to zero inside its parent.
fn evaluate(tree: &RiskTree, zeroed: Option<usize>) -> Result<Vec<f64>> {
    let mut values = vec![0.0; tree.len()];
    let mut scratch = Vec::new();
    for &v in tree.preorder_idx().iter().rev() {
        if Some(v) == zeroed {
            continue;
        }
        let kids = tree.children_at(v);
        let node = tree.node_at(v);
        if kids.is_empty() {
            values[v] = node.scr.ok_or_else(|| ScrError::MissingScr(node.id.clone()))?;
            continue;
        }
        let corr = tree
            .matrix_at(v)
            .ok_or_else(|| ScrError::MissingMatrix(node.id.clone()))?;
        scratch.clear();
        scratch.extend(kids.iter().map(|&c| values[c]));
        values[v] = aggregate_level(&scratch, corr).map_err(|e| match e {
            ScrError::LengthMismatch { .. } => ScrError::MatrixOrderMismatch {
                node: node.id.clone(),
                expected: kids.len(),
                found: corr.order(),
            },
            other => other.at_node(&node.id),
        })?;
    }
    Ok(values)
}

/// Nested square-root aggregation of every node; the root value is the BSCR.
pub fn aggregate_tree(tree: &RiskTree) -> Result<AggregationResult> {
    let scrs = evaluate(tree, None)?;
    let values = (0..tree.len())
        .map(|v| {
            let kids = tree.children_at(v);
            let de = if kids.is_empty() {
                0.0
            } else {
                kids.iter().map(|&c| scrs[c]).sum::<f64>() - scrs[v]
            };
            NodeAggregate {
                aggregated_scr: scrs[v],
                diversification_effect: de,
            }
        })
        .collect();
    let ids: Vec<String> = tree.nodes().map(|n| n.id.clone()).collect();
    let lookup = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
    Ok(AggregationResult {
        root: tree.root_id().to_string(),
        ids,
        lookup,
        values,
    })
}

/// Root value with `excluded` set to zero inside its parent's aggregation.
pub fn aggregate_excluding(tree: &RiskTree, excluded: &str) -> Result<f64> {
    let v = tree.idx(excluded)?;
    if v == tree.root_idx() {
        return Err(ScrError::ExcludeRoot(excluded.to_string()));
    }
    Ok(evaluate(tree, Some(v))?[tree.root_idx()])
}

/// `sqrt(Aᵀ B A)` over all leaves at once with a single base matrix.
pub fn aggregate_full_base(leaf_scrs: &[f64], base_matrix: &CorrelationMatrix) -> Result<f64> {
    aggregate_level(leaf_scrs, base_matrix).map_err(|e| e.at_node("full base"))
}

/// Leaf SCRs in the canonical (depth-first) order used by full base matrices.
pub fn leaf_scrs(tree: &RiskTree) -> Vec<f64> {
    tree.leaves()
        .into_iter()
        .map(|id| tree.node(id).and_then(|n| n.scr).unwrap_or(0.0))
        .collect()
}

/// Full base matrix that keeps each sibling group's correlations and sets
/// every cross-group entry to zero. When every node above the leaf parents
/// carries an identity matrix, aggregating with it reproduces the nested value.
pub fn sibling_base_matrix(tree: &RiskTree) -> CorrelationMatrix {
    let leaves = tree.leaves();
    let mut base = CorrelationMatrix::identity(leaves.len());
    let position: Vec<(Option<&str>, usize)> = leaves
        .iter()
        .map(|leaf| {
            let parent = tree.parent(leaf);
            let k = parent
                .and_then(|p| tree.children(p))
                .and_then(|kids| kids.iter().position(|c| c == leaf))
                .unwrap_or(0);
            (parent, k)
        })
        .collect();
    for x in 0..leaves.len() {
        for y in 0..leaves.len() {
            if x == y {
                continue;
            }
            let ((px, kx), (py, ky)) = (position[x], position[y]);
            if let (Some(p), true) = (px, px == py) {
                if let Some(m) = tree.matrix(p) {
                    base.set(x, y, m.get(kx, ky));
                }
            }
        }
    }
    base
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibratedRho {
    /// Clamped to `[-1, 1]`.
    pub rho: f64,
    pub raw: f64,
    pub clamped: bool,
}

/// The ρ that makes two-element square-root aggregation reproduce the joint
/// VaR exactly: `(var_xy² − var_x² − var_y²) / (2 var_x var_y)`.
pub fn calibrate_rho(var_x: f64, var_y: f64, var_xy: f64) -> Result<CalibratedRho> {
    for (name, v) in [("var_x", var_x), ("var_y", var_y), ("var_xy", var_xy)] {
        if !v.is_finite() || v < 0.0 {
            return Err(ScrError::InvalidCalibration(format!("{name} = {v}")));
        }
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(ScrError::ZeroMarginalVar);
    }
    let raw = (var_xy * var_xy - var_x * var_x - var_y * var_y) / (2.0 * var_x * var_y);
    let rho = raw.clamp(-1.0, 1.0);
    Ok(CalibratedRho {
        rho,
        raw,
        clamped: rho != raw,
    })
}
