//! Cross-principle comparison and property checks.

mod properties;
mod random;

use serde::Serialize;

use crate::aggregation::aggregate_tree;
use crate::allocation::allocate_cut;
use crate::error::Result;
use crate::risk_model::{Cut, Principle, PrincipleSpec, RiskTree};

pub use properties::{
    check_tree, run_property_suite, Property, PropertyFinding, PropertyOutcome, Status, Tolerances,
};
pub use random::{jitter_correlations, random_correlation, random_tree, scale_leaves, RandomTreeConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub node: String,
    pub name: String,
    pub standalone: f64,
    /// One entry per principle, in report order.
    pub allocated: Vec<f64>,
    /// `allocated / sfep − 1`; `None` where the SFEP allocation is zero.
    pub deviation_vs_sfep: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub principles: Vec<Principle>,
    pub rows: Vec<ComparisonRow>,
    /// Column sums, one per principle.
    pub totals: Vec<f64>,
    /// Amount every column should sum to.
    pub total: f64,
}

impl ComparisonReport {
    pub fn column(&self, principle: Principle) -> Option<Vec<f64>> {
        let k = self.principles.iter().position(|&p| p == principle)?;
        Some(self.rows.iter().map(|r| r.allocated[k]).collect())
    }

    pub fn deviations(&self, principle: Principle) -> Option<Vec<Option<f64>>> {
        let k = self.principles.iter().position(|&p| p == principle)?;
        Some(self.rows.iter().map(|r| r.deviation_vs_sfep[k]).collect())
    }
}

/// Allocates one cut under each principle and lines the results up against
/// SFEP.
pub fn compare_principles(
    tree: &RiskTree,
    principles: &[PrincipleSpec],
    cut: &Cut,
) -> Result<ComparisonReport> {
    let agg = aggregate_tree(tree)?;
    let reference = allocate_cut(tree, &agg, &PrincipleSpec::sfep(), cut)?;
    let columns = principles
        .iter()
        .map(|spec| allocate_cut(tree, &agg, spec, cut))
        .collect::<Result<Vec<_>>>()?;

    let rows = reference
        .nodes
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let base = reference.allocated[i];
            let allocated: Vec<f64> = columns.iter().map(|c| c.allocated[i]).collect();
            let deviation_vs_sfep = allocated
                .iter()
                .map(|&a| (base != 0.0).then(|| a / base - 1.0))
                .collect();
            ComparisonRow {
                node: id.clone(),
                name: tree.node(id).map(|n| n.name.clone()).unwrap_or_default(),
                standalone: reference.standalone[i],
                allocated,
                deviation_vs_sfep,
            }
        })
        .collect();
    Ok(ComparisonReport {
        principles: principles.iter().map(|p| p.principle).collect(),
        rows,
        totals: columns.iter().map(|c| c.allocated.iter().sum()).collect(),
        total: reference.total,
    })
}
