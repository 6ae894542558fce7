use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{validate_tree, CorrelationMatrix, RiskNode, RiskTree};
use crate::error::{Result, ScrError};

pub type NodeDocument = RiskNode;

/// On-disk JSON layout of a tree.
///
/// ```json
/// { "root": "bscr",
///   "nodes": [ { "id": "bscr", "name": "BSCR", "children": ["a", "b"] },
///              { "id": "a", "name": "A", "scr": 3 },
///              { "id": "b", "name": "B", "scr": 4, "driver": 1.5 } ],
///   "matrices": { "bscr": [[1, 0], [0, 1]] } }
/// ```
///
/// `notes` is free text carried along for provenance and ignored by the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDocument {
    pub root: String,
    pub nodes: Vec<NodeDocument>,
    #[serde(default)]
    pub matrices: BTreeMap<String, Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl TreeDocument {
    /// Builds the tree and rejects it on the first error-level finding.
    pub fn into_tree(self) -> Result<RiskTree> {
        let mut matrices = Vec::with_capacity(self.matrices.len());
        for (id, rows) in self.matrices {
            let m = CorrelationMatrix::from_rows(rows).map_err(|e| ScrError::MatrixOrderMismatch {
                node: format!("{id} row {}", e.row),
                expected: e.expected,
                found: e.found,
            })?;
            matrices.push((id, m));
        }
        let tree = RiskTree::new(&self.root, self.nodes, matrices)?;
        if let Some(err) = validate_tree(&tree).into_iter().find_map(|f| f.error) {
            return Err(err);
        }
        Ok(tree)
    }

    pub fn from_tree(tree: &RiskTree) -> Self {
        Self {
            root: tree.root_id().to_string(),
            nodes: tree.nodes().cloned().collect(),
            matrices: tree
                .matrices()
                .into_iter()
                .map(|(id, m)| (id.to_string(), m.rows()))
                .collect(),
            notes: Vec::new(),
        }
    }
}

/// Parses and validates a JSON tree document.
pub fn parse_tree(document: &str) -> Result<RiskTree> {
    let doc: TreeDocument =
        serde_json::from_str(document).map_err(|e| ScrError::MalformedDocument(e.to_string()))?;
    doc.into_tree()
}

/// Pretty-printed JSON in the same layout [`parse_tree`] reads.
pub fn serialize_tree(tree: &RiskTree) -> String {
    serde_json::to_string_pretty(&TreeDocument::from_tree(tree))
        .expect("tree documents contain only strings and finite numbers")
}
