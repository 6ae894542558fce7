//! Top-down capital allocation.
//!
//! The Euler allocation of a square-root aggregate has a closed form: child
//! `i` of a node with total `S` receives `sᵢ · (Σⱼ ρᵢⱼ sⱼ) / S`, and the
//! allocation ratio `(Σⱼ ρᵢⱼ sⱼ) / S` is exactly `∂S/∂sᵢ`. Through several
//! levels the ratios multiply along the root path, so every node's share of the
//! BSCR is its standalone SCR times the product of the ratios above it.
//!
//! Haircut, marginal (leave-one-out), covariance and market-driven rules are
//! provided for comparison.

use std::collections::HashMap;

use serde::Serialize;

use crate::aggregation::{aggregate_excluding, aggregate_level, aggregate_tree, AggregationResult};
use crate::error::{Result, ScrError};
use crate::risk_model::{ensure_len, CorrelationMatrix, Cut, Principle, PrincipleSpec, RiskTree};

/// Allocation of one parent among its children.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelAllocation {
    pub allocated: Vec<f64>,
    /// `∂parent/∂childᵢ`, equal to `allocatedᵢ / childᵢ` for non-zero children.
    pub ratios: Vec<f64>,
}

/// Euler allocation of `parent_total = sqrt(sᵀPs)` among its children.
///
/// A zero total (all children zero, or perfectly offsetting) allocates zero to
/// everyone with zero ratios.
pub fn euler_allocate_level(
    child_scrs: &[f64],
    corr: &CorrelationMatrix,
    parent_total: f64,
) -> Result<LevelAllocation> {
    ensure_len(child_scrs.len(), corr.order())?;
    if parent_total == 0.0 {
        return Ok(LevelAllocation {
            allocated: vec![0.0; child_scrs.len()],
            ratios: vec![0.0; child_scrs.len()],
        });
    }
    let ratios: Vec<f64> = corr
        .mul_vec(child_scrs)
        .into_iter()
        .map(|ps| ps / parent_total)
        .collect();
    let allocated = child_scrs.iter().zip(&ratios).map(|(s, r)| s * r).collect();
    Ok(LevelAllocation { allocated, ratios })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NodeAllocation {
    pub allocated: f64,
    /// Allocated over standalone (aggregated) SCR: the product of the level
    /// ratios on the root path. SFEP only.
    pub allocation_ratio: Option<f64>,
    /// This node's own level ratio `∂parent/∂node`. SFEP only; 1 at the root.
    pub level_ratio: Option<f64>,
    /// Share of the parent's allocated amount, when the parent's is non-zero.
    pub parent_share: Option<f64>,
}

/// Per-node allocated capital under one principle.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationResult {
    pub principle: PrincipleSpec,
    ids: Vec<String>,
    lookup: HashMap<String, usize>,
    values: Vec<NodeAllocation>,
}

impl AllocationResult {
    fn new(principle: PrincipleSpec, entries: Vec<(String, NodeAllocation)>) -> Self {
        let (ids, values): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
        let lookup = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        Self {
            principle,
            ids,
            lookup,
            values,
        }
    }

    pub fn get(&self, id: &str) -> Option<&NodeAllocation> {
        self.lookup.get(id).map(|&i| &self.values[i])
    }

    pub fn allocated(&self, id: &str) -> Option<f64> {
        self.get(id).map(|v| v.allocated)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &NodeAllocation)> {
        self.ids.iter().map(String::as_str).zip(&self.values)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// One pass from the root down, splitting each node's allocated amount among
/// its children with `split(child_scrs, matrix, node_scr, node_allocated)`.
fn top_down<F>(tree: &RiskTree, agg: &AggregationResult, mut split: F) -> Result<Vec<(f64, f64, f64)>>
where
    F: FnMut(&[f64], &CorrelationMatrix, f64, f64) -> Result<(Vec<f64>, Vec<f64>)>,
{
    // (allocated, cumulative ratio, level ratio) per tree index
    let mut out = vec![(0.0, 0.0, 0.0); tree.len()];
    let root = tree.root_idx();
    out[root] = (agg.scr_at(root), 1.0, 1.0);
    let mut scratch = Vec::new();
    for &v in tree.preorder_idx() {
        let kids = tree.children_at(v);
        if kids.is_empty() {
            continue;
        }
        let node = tree.node_at(v);
        let corr = tree
            .matrix_at(v)
            .ok_or_else(|| ScrError::MissingMatrix(node.id.clone()))?;
        scratch.clear();
        scratch.extend(kids.iter().map(|&c| agg.scr_at(c)));
        let (allocated, level) =
            split(&scratch, corr, agg.scr_at(v), out[v].0).map_err(|e| e.at_node(&node.id))?;
        let cumulative = out[v].1;
        for (k, &c) in kids.iter().enumerate() {
            out[c] = (allocated[k], cumulative * level[k], level[k]);
        }
    }
    Ok(out)
}

/// Euler allocation of the BSCR to every node of the tree.
pub fn euler_allocate_tree(tree: &RiskTree, agg: &AggregationResult) -> Result<AllocationResult> {
    let values = top_down(tree, agg, |s, corr, node_scr, node_alloc| {
        let level = euler_allocate_level(s, corr, node_scr)?;
        // node_alloc / node_scr is the cumulative ratio of the parent
        let scale = if node_scr == 0.0 {
            0.0
        } else {
            node_alloc / node_scr
        };
        let allocated = level.allocated.iter().map(|a| a * scale).collect();
        Ok((allocated, level.ratios))
    })?;
    Ok(AllocationResult::new(
        PrincipleSpec::sfep(),
        collect_entries(tree, &values, true),
    ))
}

fn collect_entries(
    tree: &RiskTree,
    values: &[(f64, f64, f64)],
    ratios: bool,
) -> Vec<(String, NodeAllocation)> {
    (0..tree.len())
        .map(|i| {
            let (allocated, cumulative, level) = values[i];
            let parent_share = tree
                .parent_at(i)
                .map(|p| values[p].0)
                .filter(|&pa| pa != 0.0)
                .map(|pa| allocated / pa);
            (
                tree.node_at(i).id.clone(),
                NodeAllocation {
                    allocated,
                    allocation_ratio: ratios.then_some(cumulative),
                    level_ratio: ratios.then_some(level),
                    parent_share,
                },
            )
        })
        .collect()
}

fn check_weights(what: &'static str, weights: &[f64]) -> Result<f64> {
    for (index, &value) in weights.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(ScrError::NegativeWeight { what, index, value });
        }
    }
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return Err(ScrError::ZeroWeights(what));
    }
    Ok(sum)
}

fn proportional(total: f64, weights: &[f64], sum: f64) -> Vec<f64> {
    weights.iter().map(|w| total * w / sum).collect()
}

/// Proportional to standalone SCR.
pub fn haircut_allocate(standalone: &[f64], total: f64) -> Result<Vec<f64>> {
    let sum = check_weights("haircut", standalone)?;
    Ok(proportional(total, standalone, sum))
}

/// Proportional to each node's leave-one-out reduction of the root aggregate,
/// `BSCR − BSCR(without s)`, rescaled to `total`.
pub fn marginal_allocate(tree: &RiskTree, level_nodes: &[String], total: f64) -> Result<Vec<f64>> {
    let bscr = aggregate_tree(tree)?.bscr();
    let mut increments = Vec::with_capacity(level_nodes.len());
    for id in level_nodes {
        increments.push(bscr - aggregate_excluding(tree, id)?);
    }
    let sum: f64 = increments.iter().sum();
    if sum.is_nan() || sum <= 0.0 {
        return Err(ScrError::NonPositiveDenominator(sum));
    }
    Ok(increments.iter().map(|d| total * d / sum).collect())
}

/// Covariance principle with standalone SCRs standing in for standard
/// deviations: `Cov(Xᵢ, X) ∝ sᵢ Σⱼ ρᵢⱼ sⱼ`, `Var(X) ∝ sᵀPs`.
pub fn covariance_allocate(total: f64, standalone: &[f64], corr: &CorrelationMatrix) -> Result<Vec<f64>> {
    ensure_len(standalone.len(), corr.order())?;
    let covariances: Vec<f64> = corr
        .mul_vec(standalone)
        .iter()
        .zip(standalone)
        .map(|(ps, s)| s * ps)
        .collect();
    let composite = aggregate_level(standalone, corr)?;
    covariance_allocate_explicit(total, &covariances, composite * composite)
}

/// Covariance principle with user-supplied `Cov(Xᵢ, X)` and `Var(X)`.
pub fn covariance_allocate_explicit(total: f64, covariances: &[f64], variance: f64) -> Result<Vec<f64>> {
    if variance == 0.0 || !variance.is_finite() {
        return Err(ScrError::ZeroVariance);
    }
    Ok(covariances.iter().map(|c| total * c / variance).collect())
}

/// Proportional to an external risk driver.
pub fn market_driven_allocate(total: f64, drivers: &[f64]) -> Result<Vec<f64>> {
    let sum = check_weights("market drivers", drivers)?;
    Ok(proportional(total, drivers, sum))
}

/// `BSCR + Adj + OP`.
pub fn scr_total(bscr: f64, adj: f64, op_risk: f64) -> f64 {
    bscr + adj + op_risk
}

/// Allocation of one cut of the tree under one principle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutAllocation {
    pub principle: Principle,
    /// Amount being split: the SFEP allocation summed over the cut. Equals the
    /// BSCR for complete cuts.
    pub total: f64,
    pub nodes: Vec<String>,
    pub standalone: Vec<f64>,
    pub allocated: Vec<f64>,
    /// SFEP cumulative allocation ratios; `None` for the other principles.
    pub ratios: Option<Vec<f64>>,
}

/// Covariance proxy applied level by level from the root.
pub fn covariance_allocate_tree(tree: &RiskTree, agg: &AggregationResult) -> Result<AllocationResult> {
    let values = top_down(tree, agg, |s, corr, _node_scr, node_alloc| {
        let allocated = if node_alloc == 0.0 {
            vec![0.0; s.len()]
        } else {
            covariance_allocate(node_alloc, s, corr)?
        };
        Ok((allocated, vec![0.0; s.len()]))
    })?;
    Ok(AllocationResult::new(
        Principle::Covariance.into(),
        collect_entries(tree, &values, false),
    ))
}

fn lookup_param(
    map: Option<&std::collections::BTreeMap<String, f64>>,
    fallback: impl Fn(&str) -> Option<f64>,
    param: &'static str,
    ids: &[String],
) -> Result<Vec<f64>> {
    ids.iter()
        .map(|id| {
            map.and_then(|m| m.get(id).copied())
                .or_else(|| fallback(id))
                .ok_or_else(|| ScrError::MissingParameter {
                    param,
                    node: id.clone(),
                })
        })
        .collect()
}

/// Allocates a cut of the tree with the given principle.
pub fn allocate_cut(
    tree: &RiskTree,
    agg: &AggregationResult,
    spec: &PrincipleSpec,
    cut: &Cut,
) -> Result<CutAllocation> {
    let nodes = tree.resolve_cut(cut)?;
    let sfep = euler_allocate_tree(tree, agg)?;
    let standalone: Vec<f64> = nodes.iter().map(|id| agg.scr(id).unwrap_or(0.0)).collect();
    let sfep_alloc: Vec<f64> = nodes.iter().map(|id| sfep.allocated(id).unwrap_or(0.0)).collect();
    let total: f64 = sfep_alloc.iter().sum();

    let mut ratios = None;
    let allocated = match spec.principle {
        Principle::Sfep => {
            ratios = Some(
                nodes
                    .iter()
                    .map(|id| sfep.get(id).and_then(|a| a.allocation_ratio).unwrap_or(0.0))
                    .collect(),
            );
            sfep_alloc
        }
        Principle::Haircut => haircut_allocate(&standalone, total)?,
        Principle::Marginal => marginal_allocate(tree, &nodes, total)?,
        Principle::Covariance => match &spec.covariances {
            Some(map) => {
                let cov = lookup_param(Some(map), |_| None, "covariance", &nodes)?;
                let variance = spec.variance.unwrap_or_else(|| cov.iter().sum());
                covariance_allocate_explicit(total, &cov, variance)?
            }
            None => {
                let by_level = covariance_allocate_tree(tree, agg)?;
                nodes
                    .iter()
                    .map(|id| by_level.allocated(id).unwrap_or(0.0))
                    .collect()
            }
        },
        Principle::Market => {
            let drivers = lookup_param(
                spec.drivers.as_ref(),
                |id| tree.node(id).and_then(|n| n.driver),
                "driver",
                &nodes,
            )?;
            market_driven_allocate(total, &drivers)?
        }
    };
    Ok(CutAllocation {
        principle: spec.principle,
        total,
        nodes,
        standalone,
        allocated,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk_model::RiskNode;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn level_examples() {
        let l = euler_allocate_level(&[3.0, 4.0], &CorrelationMatrix::identity(2), 5.0).unwrap();
        assert!(close(&l.allocated, &[1.8, 3.2], 1e-12));
        assert!(close(&l.ratios, &[0.6, 0.8], 1e-12));

        let l = euler_allocate_level(&[60.0, 70.0], &CorrelationMatrix::uniform(2, 1.0), 130.0).unwrap();
        assert!(close(&l.allocated, &[60.0, 70.0], 1e-12));

        let l = euler_allocate_level(&[0.0, 0.0], &CorrelationMatrix::identity(2), 0.0).unwrap();
        assert_eq!(l.allocated, vec![0.0, 0.0]);

        assert!(euler_allocate_level(&[1.0], &CorrelationMatrix::identity(2), 1.0).is_err());
    }

    #[test]
    fn haircut_and_market_examples() {
        assert_eq!(haircut_allocate(&[5.0, 5.0], 8.0).unwrap(), vec![4.0, 4.0]);
        assert_eq!(
            haircut_allocate(&[0.0, 0.0], 8.0).unwrap_err(),
            ScrError::ZeroWeights("haircut")
        );
        assert_eq!(market_driven_allocate(10.0, &[1.0, 4.0]).unwrap(), vec![2.0, 8.0]);
        assert_eq!(
            market_driven_allocate(100.0, &[0.0, 0.0, 5.0]).unwrap(),
            vec![0.0, 0.0, 100.0]
        );
        let lapse = market_driven_allocate(12_137.0, &[1.0; 9]).unwrap();
        assert!(lapse.iter().all(|v| (v - 1_348.555_555).abs() < 0.1));
        assert!(market_driven_allocate(1.0, &[0.0]).is_err());
        assert!(matches!(
            market_driven_allocate(1.0, &[1.0, -1.0]),
            Err(ScrError::NegativeWeight { index: 1, .. })
        ));
    }

    #[test]
    fn covariance_examples() {
        assert_eq!(
            covariance_allocate_explicit(8.0, &[1.0, 3.0], 4.0).unwrap(),
            vec![2.0, 6.0]
        );
        assert_eq!(
            covariance_allocate_explicit(8.0, &[1.0], 0.0).unwrap_err(),
            ScrError::ZeroVariance
        );
        let a = covariance_allocate(130.0, &[60.0, 70.0], &CorrelationMatrix::uniform(2, 1.0)).unwrap();
        assert!(close(&a, &[60.0, 70.0], 1e-12));
    }

    #[test]
    fn scr_total_examples() {
        assert_eq!(scr_total(29_647_059.0, 0.0, 0.0), 29_647_059.0);
        assert_eq!(scr_total(100.0, -10.0, 5.0), 95.0);
        assert_eq!(scr_total(0.0, 0.0, 0.0), 0.0);
    }

    fn chain(x: f64) -> RiskTree {
        RiskTree::new(
            "r",
            vec![
                RiskNode::internal("r", "r", ["a"]),
                RiskNode::internal("a", "a", ["x"]),
                RiskNode::leaf("x", "x", x),
            ],
            [
                ("r".to_string(), CorrelationMatrix::identity(1)),
                ("a".to_string(), CorrelationMatrix::identity(1)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn single_child_chain_is_identity() {
        let t = chain(17.0);
        let agg = aggregate_tree(&t).unwrap();
        let alloc = euler_allocate_tree(&t, &agg).unwrap();
        assert_eq!(alloc.allocated("x"), Some(17.0));
        assert_eq!(alloc.get("x").unwrap().allocation_ratio, Some(1.0));
        assert_eq!(alloc.get("x").unwrap().parent_share, Some(1.0));
        let m = marginal_allocate(&t, &["a".to_string()], 17.0).unwrap();
        assert_eq!(m, vec![17.0]);
    }

    #[test]
    fn missing_market_driver_is_named() {
        let t = chain(1.0);
        let agg = aggregate_tree(&t).unwrap();
        let err = allocate_cut(&t, &agg, &Principle::Market.into(), &Cut::Leaves).unwrap_err();
        assert_eq!(
            err,
            ScrError::MissingParameter {
                param: "driver",
                node: "x".into()
            }
        );
    }
}
