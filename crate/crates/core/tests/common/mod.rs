//! Naive reference implementations used as oracles. They read the tree only
//! through its public accessors and redo every sum with plain loops.
#![allow(dead_code)]

use std::collections::BTreeMap;

use scr_core::RiskTree;

pub fn close(actual: f64, expected: f64, tol: f64) -> bool {
    (actual - expected).abs() <= tol
}

#[track_caller]
pub fn assert_close(actual: f64, expected: f64, tol: f64) {
    assert!(close(actual, expected, tol), "{actual} vs {expected} (±{tol})");
}

#[track_caller]
pub fn assert_all_close(actual: &[f64], expected: &[f64], tol: f64) {
    assert_eq!(actual.len(), expected.len());
    for (a, e) in actual.iter().zip(expected) {
        assert_close(*a, *e, tol);
    }
}

fn rows(tree: &RiskTree, id: &str) -> Vec<Vec<f64>> {
    tree.matrix(id).map(|m| m.rows()).unwrap_or_default()
}

/// Bottom-up square-root aggregation, recursive.
pub fn naive_scrs(tree: &RiskTree) -> BTreeMap<String, f64> {
    fn go(tree: &RiskTree, id: &str, out: &mut BTreeMap<String, f64>) -> f64 {
        let kids = tree.children(id).unwrap_or_default();
        let v = if kids.is_empty() {
            tree.node(id).unwrap().scr.unwrap()
        } else {
            let s: Vec<f64> = kids.iter().map(|c| go(tree, c, out)).collect();
            let p = rows(tree, id);
            let mut q = 0.0;
            for i in 0..s.len() {
                for j in 0..s.len() {
                    q += s[i] * s[j] * p[i][j];
                }
            }
            q.max(0.0).sqrt()
        };
        out.insert(id.to_string(), v);
        v
    }
    let mut out = BTreeMap::new();
    go(tree, tree.root_id(), &mut out);
    out
}

/// Per-node (allocated, cumulative ratio) from the product of level ratios
/// `(P s)_i / S` along the root path.
pub fn naive_euler(tree: &RiskTree) -> BTreeMap<String, (f64, f64)> {
    let scr = naive_scrs(tree);
    let mut out = BTreeMap::new();
    let mut stack = vec![(tree.root_id().to_string(), 1.0)];
    while let Some((id, ratio)) = stack.pop() {
        out.insert(id.clone(), (scr[&id] * ratio, ratio));
        let kids = tree.children(&id).unwrap_or_default();
        if kids.is_empty() {
            continue;
        }
        let p = rows(tree, &id);
        let total = scr[&id];
        for (i, c) in kids.iter().enumerate() {
            let ps: f64 = kids.iter().enumerate().map(|(j, d)| p[i][j] * scr[d]).sum();
            let level = if total == 0.0 { 0.0 } else { ps / total };
            stack.push((c.clone(), ratio * level));
        }
    }
    out
}
