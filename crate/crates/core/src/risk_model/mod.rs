//! Risk-tree data model: nodes, correlation matrices, cuts and principle
//! selectors, plus the JSON document format they are read from.

mod document;
mod matrix;
mod validate;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScrError};

pub use document::{parse_tree, serialize_tree, NodeDocument, TreeDocument};
pub use matrix::{CorrelationMatrix, RaggedMatrix, PSD_TOLERANCE};
pub use validate::{validate_tree, Finding, Severity};

pub(crate) use matrix::ensure_len;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Leaf,
    Internal,
}

/// One node of the aggregation scheme. Leaves carry their standalone SCR as
/// input; internal values are produced by aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskNode {
    pub id: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub driver: Option<f64>,
}

impl RiskNode {
    pub fn leaf(id: impl Into<String>, name: impl Into<String>, scr: f64) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            children: Vec::new(),
            scr: Some(scr),
            driver: None,
        }
    }

    pub fn internal<I, S>(id: impl Into<String>, name: impl Into<String>, children: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            id: id.into(),
            name: name.into(),
            children: children.into_iter().map(Into::into).collect(),
            scr: None,
            driver: None,
        }
    }

    pub fn with_driver(mut self, driver: f64) -> Self {
        self.driver = Some(driver);
        self
    }

    pub fn kind(&self) -> NodeKind {
        if self.children.is_empty() {
            NodeKind::Leaf
        } else {
            NodeKind::Internal
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// The full multilevel aggregation scheme.
///
/// Structure (single root, unique ids, one parent per node, every node
/// reachable, no cycles) is enforced on construction. Content invariants
/// (leaf SCRs, matrix shapes and entries) are reported by [`validate_tree`];
/// [`parse_tree`] refuses documents that fail them.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskTree {
    root: usize,
    nodes: Vec<RiskNode>,
    index: HashMap<String, usize>,
    child_idx: Vec<Vec<usize>>,
    parent: Vec<Option<usize>>,
    depth: Vec<usize>,
    matrices: Vec<Option<CorrelationMatrix>>,
    /// Depth-first pre-order from the root, children in document order.
    preorder: Vec<usize>,
}

impl RiskTree {
    pub fn new(
        root: &str,
        nodes: Vec<RiskNode>,
        matrices: impl IntoIterator<Item = (String, CorrelationMatrix)>,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, node) in nodes.iter().enumerate() {
            if index.insert(node.id.clone(), i).is_some() {
                return Err(ScrError::DuplicateId(node.id.clone()));
            }
        }
        let root_idx = *index
            .get(root)
            .ok_or_else(|| ScrError::MissingRoot(root.to_string()))?;

        let mut child_idx = Vec::with_capacity(nodes.len());
        let mut parent: Vec<Option<usize>> = vec![None; nodes.len()];
        for (i, node) in nodes.iter().enumerate() {
            let mut kids = Vec::with_capacity(node.children.len());
            for child in &node.children {
                let c = *index
                    .get(child)
                    .ok_or_else(|| ScrError::UnknownNode(child.clone()))?;
                if c == i || c == root_idx {
                    return Err(ScrError::Cycle(child.clone()));
                }
                if let Some(p) = parent[c] {
                    return Err(ScrError::MultipleParents {
                        node: child.clone(),
                        first: nodes[p].id.clone(),
                        second: node.id.clone(),
                    });
                }
                parent[c] = Some(i);
                kids.push(c);
            }
            child_idx.push(kids);
        }

        // Walk from the root. With one parent per node and the root parentless,
        // anything left unvisited sits on a detached component (possibly a cycle).
        let mut depth = vec![usize::MAX; nodes.len()];
        let mut preorder = Vec::with_capacity(nodes.len());
        let mut stack = vec![(root_idx, 0usize)];
        while let Some((v, d)) = stack.pop() {
            depth[v] = d;
            preorder.push(v);
            for &c in child_idx[v].iter().rev() {
                stack.push((c, d + 1));
            }
        }
        if let Some(orphan) = (0..nodes.len()).find(|&i| depth[i] == usize::MAX) {
            let mut v = orphan;
            let mut seen = vec![false; nodes.len()];
            while let Some(p) = parent[v] {
                if seen[p] {
                    return Err(ScrError::Cycle(nodes[p].id.clone()));
                }
                seen[p] = true;
                v = p;
            }
            return Err(ScrError::Disconnected(nodes[orphan].id.clone()));
        }

        let mut mats: Vec<Option<CorrelationMatrix>> = vec![None; nodes.len()];
        for (id, m) in matrices {
            let i = *index.get(&id).ok_or(ScrError::UnknownNode(id.clone()))?;
            if child_idx[i].is_empty() {
                return Err(ScrError::UnexpectedMatrix(id));
            }
            mats[i] = Some(m);
        }

        Ok(Self {
            root: root_idx,
            nodes,
            index,
            child_idx,
            parent,
            depth,
            matrices: mats,
            preorder,
        })
    }

    pub fn root_id(&self) -> &str {
        &self.nodes[self.root].id
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn node(&self, id: &str) -> Option<&RiskNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    /// Nodes in document order.
    pub fn nodes(&self) -> impl Iterator<Item = &RiskNode> {
        self.nodes.iter()
    }

    /// Node ids in depth-first pre-order.
    pub fn depth_first(&self) -> impl Iterator<Item = &str> {
        self.preorder.iter().map(|&i| self.nodes[i].id.as_str())
    }

    /// Leaf ids in depth-first document order: the canonical ordering of the
    /// full base correlation matrix.
    pub fn leaves(&self) -> Vec<&str> {
        self.preorder
            .iter()
            .filter(|&&i| self.child_idx[i].is_empty())
            .map(|&i| self.nodes[i].id.as_str())
            .collect()
    }

    pub fn internal_nodes(&self) -> Vec<&str> {
        self.preorder
            .iter()
            .filter(|&&i| !self.child_idx[i].is_empty())
            .map(|&i| self.nodes[i].id.as_str())
            .collect()
    }

    pub fn children(&self, id: &str) -> Option<&[String]> {
        self.node(id).map(|n| n.children.as_slice())
    }

    pub fn parent(&self, id: &str) -> Option<&str> {
        let i = *self.index.get(id)?;
        self.parent[i].map(|p| self.nodes[p].id.as_str())
    }

    pub fn depth(&self, id: &str) -> Option<usize> {
        self.index.get(id).map(|&i| self.depth[i])
    }

    pub fn max_depth(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    pub fn matrix(&self, id: &str) -> Option<&CorrelationMatrix> {
        self.index.get(id).and_then(|&i| self.matrices[i].as_ref())
    }

    /// Direct access for tools that need to edit a tree in place. Edits are not
    /// checked; run [`validate_tree`] afterwards.
    pub fn matrix_mut(&mut self, id: &str) -> Option<&mut CorrelationMatrix> {
        let i = *self.index.get(id)?;
        self.matrices[i].as_mut()
    }

    pub fn matrices(&self) -> BTreeMap<&str, &CorrelationMatrix> {
        self.matrices
            .iter()
            .enumerate()
            .filter_map(|(i, m)| m.as_ref().map(|m| (self.nodes[i].id.as_str(), m)))
            .collect()
    }

    /// Replaces a leaf's standalone SCR.
    pub fn set_leaf_scr(&mut self, id: &str, scr: f64) -> Result<()> {
        let i = self.idx(id)?;
        if !self.child_idx[i].is_empty() {
            return Err(ScrError::InternalScr(id.to_string()));
        }
        self.nodes[i].scr = Some(scr);
        Ok(())
    }

    /// Replaces (or attaches) the matrix of an internal node.
    pub fn set_matrix(&mut self, id: &str, matrix: CorrelationMatrix) -> Result<()> {
        let i = self.idx(id)?;
        if self.child_idx[i].is_empty() {
            return Err(ScrError::UnexpectedMatrix(id.to_string()));
        }
        self.matrices[i] = Some(matrix);
        Ok(())
    }

    /// True when `ancestor` lies on the root path of `id` (a node is not its
    /// own ancestor).
    pub fn is_ancestor(&self, ancestor: &str, id: &str) -> bool {
        let (Some(&a), Some(&v)) = (self.index.get(ancestor), self.index.get(id)) else {
            return false;
        };
        let mut cur = self.parent[v];
        while let Some(p) = cur {
            if p == a {
                return true;
            }
            cur = self.parent[p];
        }
        false
    }

    /// Resolves a cut to node ids in depth-first order.
    pub fn resolve_cut(&self, cut: &Cut) -> Result<Vec<String>> {
        let ids: Vec<String> = match cut {
            Cut::Depth(d) => self
                .preorder
                .iter()
                .filter(|&&i| self.depth[i] == *d || (self.depth[i] < *d && self.child_idx[i].is_empty()))
                .map(|&i| self.nodes[i].id.clone())
                .collect(),
            Cut::Leaves => self.leaves().into_iter().map(String::from).collect(),
            Cut::ChildrenOf(id) => {
                let i = self.idx(id)?;
                if self.child_idx[i].is_empty() {
                    return Err(ScrError::InvalidCut(format!("`{id}` is a leaf")));
                }
                self.nodes[i].children.clone()
            }
            Cut::Nodes(list) => {
                for id in list {
                    self.idx(id)?;
                }
                for a in list {
                    for b in list {
                        if a == b {
                            continue;
                        }
                        if self.is_ancestor(a, b) {
                            return Err(ScrError::InvalidCut(format!("`{a}` is an ancestor of `{b}`")));
                        }
                    }
                }
                let mut ordered = list.clone();
                ordered.sort_by_key(|id| self.preorder.iter().position(|&i| self.nodes[i].id == *id));
                ordered.dedup();
                ordered
            }
        };
        if ids.is_empty() {
            return Err(ScrError::InvalidCut(format!("{cut} selects no nodes")));
        }
        Ok(ids)
    }

    /// True when the cut covers every leaf exactly once.
    pub fn is_complete_cut(&self, ids: &[String]) -> bool {
        self.leaves().iter().all(|leaf| {
            ids.iter()
                .filter(|c| c.as_str() == *leaf || self.is_ancestor(c, leaf))
                .count()
                == 1
        })
    }

    // index-level helpers used by the numeric modules

    pub(crate) fn idx(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| ScrError::UnknownNode(id.to_string()))
    }

    pub(crate) fn root_idx(&self) -> usize {
        self.root
    }

    pub(crate) fn node_at(&self, i: usize) -> &RiskNode {
        &self.nodes[i]
    }

    pub(crate) fn children_at(&self, i: usize) -> &[usize] {
        &self.child_idx[i]
    }

    pub(crate) fn parent_at(&self, i: usize) -> Option<usize> {
        self.parent[i]
    }

    pub(crate) fn matrix_at(&self, i: usize) -> Option<&CorrelationMatrix> {
        self.matrices[i].as_ref()
    }

    pub(crate) fn preorder_idx(&self) -> &[usize] {
        &self.preorder
    }
}

/// A set of nodes, none an ancestor of another, at which results are reported.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Cut {
    /// Every node at this depth, plus shallower leaves. Always complete.
    Depth(usize),
    /// The children of one internal node.
    ChildrenOf(String),
    Leaves,
    Nodes(Vec<String>),
}

impl FromStr for Cut {
    type Err = ScrError;

    /// `leaves`, a depth such as `2`, a comma-separated node list, or a single
    /// node id (meaning its children).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(ScrError::InvalidCut("empty".into()));
        }
        if s.eq_ignore_ascii_case("leaves") {
            return Ok(Cut::Leaves);
        }
        if let Ok(d) = s.parse::<usize>() {
            return Ok(Cut::Depth(d));
        }
        if s.contains(',') {
            return Ok(Cut::Nodes(
                s.split(',')
                    .map(|p| p.trim().to_string())
                    .filter(|p| !p.is_empty())
                    .collect(),
            ));
        }
        Ok(Cut::ChildrenOf(s.to_string()))
    }
}

impl fmt::Display for Cut {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cut::Depth(d) => write!(f, "depth {d}"),
            Cut::ChildrenOf(id) => write!(f, "children of `{id}`"),
            Cut::Leaves => f.write_str("leaves"),
            Cut::Nodes(ids) => write!(f, "nodes [{}]", ids.join(", ")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Principle {
    Sfep,
    Haircut,
    Marginal,
    Covariance,
    Market,
}

impl Principle {
    pub const ALL: [Principle; 5] = [
        Principle::Sfep,
        Principle::Haircut,
        Principle::Marginal,
        Principle::Covariance,
        Principle::Market,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Principle::Sfep => "sfep",
            Principle::Haircut => "haircut",
            Principle::Marginal => "marginal",
            Principle::Covariance => "covariance",
            Principle::Market => "market",
        }
    }
}

impl fmt::Display for Principle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Principle {
    type Err = ScrError;

    fn from_str(s: &str) -> Result<Self> {
        Principle::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ScrError::UnknownPrinciple(s.to_string()))
    }
}

/// Allocation principle plus whatever parameters it needs.
///
/// `drivers` feed the market-driven rule; nodes missing from the map fall back
/// to the node's own `driver`. `covariances` switch the covariance principle
/// from the SCR-as-σ proxy to explicit mode; `variance` defaults to the sum of
/// the covariances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipleSpec {
    pub principle: Principle,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drivers: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariances: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
}

impl PrincipleSpec {
    pub fn new(principle: Principle) -> Self {
        Self {
            principle,
            drivers: None,
            covariances: None,
            variance: None,
        }
    }

    pub fn sfep() -> Self {
        Self::new(Principle::Sfep)
    }

    pub fn market(drivers: BTreeMap<String, f64>) -> Self {
        Self {
            drivers: Some(drivers),
            ..Self::new(Principle::Market)
        }
    }

    pub fn explicit_covariance(covariances: BTreeMap<String, f64>, variance: Option<f64>) -> Self {
        Self {
            covariances: Some(covariances),
            variance,
            ..Self::new(Principle::Covariance)
        }
    }
}

impl From<Principle> for PrincipleSpec {
    fn from(p: Principle) -> Self {
        Self::new(p)
    }
}
