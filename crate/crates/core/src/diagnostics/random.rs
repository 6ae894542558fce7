use rand::Rng;

use crate::risk_model::{CorrelationMatrix, RiskNode, RiskTree};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomTreeConfig {
    /// Deepest leaf depth (the root is depth 0).
    pub max_depth: usize,
    pub max_fanout: usize,
    /// Chance that a non-root node above `max_depth` becomes a leaf.
    pub leaf_probability: f64,
    /// Chance that a leaf SCR is exactly zero.
    pub zero_leaf_probability: f64,
    pub scr_range: (f64, f64),
}

impl Default for RandomTreeConfig {
    fn default() -> Self {
        Self {
            max_depth: 4,
            max_fanout: 6,
            leaf_probability: 0.4,
            zero_leaf_probability: 0.05,
            scr_range: (1.0, 1000.0),
        }
    }
}

/// Random correlation matrix with entries in `[0, 1]`, built as the Gram matrix
/// of normalised non-negative vectors and therefore positive semidefinite.
pub fn random_correlation<R: Rng + ?Sized>(rng: &mut R, order: usize) -> CorrelationMatrix {
    const DIM: usize = 4;
    let vectors: Vec<[f64; DIM]> = (0..order)
        .map(|_| loop {
            let mut v = [0.0; DIM];
            for x in v.iter_mut() {
                if rng.gen_bool(0.6) {
                    *x = rng.gen_range(0.0..1.0);
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-3 {
                v.iter_mut().for_each(|x| *x /= norm);
                break v;
            }
        })
        .collect();
    let mut m = CorrelationMatrix::identity(order);
    for i in 0..order {
        for j in 0..i {
            let dot: f64 = vectors[i].iter().zip(&vectors[j]).map(|(a, b)| a * b).sum();
            m.set_symmetric(i, j, dot.clamp(0.0, 1.0));
        }
    }
    m
}

pub fn random_tree<R: Rng + ?Sized>(rng: &mut R, config: &RandomTreeConfig) -> RiskTree {
    let mut nodes = Vec::new();
    let mut matrices = Vec::new();
    let mut counter = 0usize;
    build(rng, config, 0, &mut counter, &mut nodes, &mut matrices);
    RiskTree::new("n0", nodes, matrices).expect("generated trees are well formed")
}

fn build<R: Rng + ?Sized>(
    rng: &mut R,
    config: &RandomTreeConfig,
    depth: usize,
    counter: &mut usize,
    nodes: &mut Vec<RiskNode>,
    matrices: &mut Vec<(String, CorrelationMatrix)>,
) -> String {
    let id = format!("n{}", *counter);
    *counter += 1;
    let is_leaf = depth >= config.max_depth
        || config.max_fanout == 0
        || (depth > 0 && rng.gen_bool(config.leaf_probability));
    if is_leaf {
        let scr = if rng.gen_bool(config.zero_leaf_probability) {
            0.0
        } else {
            rng.gen_range(config.scr_range.0..=config.scr_range.1)
        };
        nodes.push(RiskNode::leaf(id.clone(), id.clone(), scr));
        return id;
    }
    let slot = nodes.len();
    nodes.push(RiskNode::internal(id.clone(), id.clone(), Vec::<String>::new()));
    let fanout = rng.gen_range(1..=config.max_fanout);
    let children: Vec<String> = (0..fanout)
        .map(|_| build(rng, config, depth + 1, counter, nodes, matrices))
        .collect();
    nodes[slot].children = children;
    matrices.push((id.clone(), random_correlation(rng, fanout)));
    id
}

/// Multiplies every leaf SCR by an independent factor drawn from `range`.
pub fn scale_leaves<R: Rng + ?Sized>(rng: &mut R, tree: &mut RiskTree, range: (f64, f64)) {
    let leaves: Vec<String> = tree.leaves().into_iter().map(String::from).collect();
    for leaf in leaves {
        let s = tree.node(&leaf).and_then(|n| n.scr).unwrap_or(0.0);
        let factor = rng.gen_range(range.0..=range.1);
        tree.set_leaf_scr(&leaf, s * factor)
            .expect("leaf ids come from the tree");
    }
}

/// Moves every correlation matrix part of the way toward a random
/// non-negative PSD correlation matrix. The convex combination keeps unit
/// diagonal, symmetry, and semidefiniteness of the original.
pub fn jitter_correlations<R: Rng + ?Sized>(rng: &mut R, tree: &mut RiskTree, max_weight: f64) {
    let internal: Vec<String> = tree.internal_nodes().into_iter().map(String::from).collect();
    for id in internal {
        let Some(order) = tree.matrix(&id).map(|m| m.order()) else {
            continue;
        };
        let target = random_correlation(rng, order);
        let w = rng.gen_range(0.0..=max_weight);
        let m = tree.matrix_mut(&id).expect("checked above");
        for i in 0..order {
            for j in 0..i {
                let v = (1.0 - w) * m.get(i, j) + w * target.get(i, j);
                m.set_symmetric(i, j, v.clamp(-1.0, 1.0));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk_model::validate_tree;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_trees_are_valid_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = RandomTreeConfig::default();
        for _ in 0..50 {
            let t = random_tree(&mut rng, &cfg);
            assert!(validate_tree(&t).is_empty());
            assert!(t.max_depth() <= cfg.max_depth);
            for id in t.internal_nodes() {
                let m = t.matrix(id).unwrap();
                assert!(m.order() <= cfg.max_fanout);
                assert!(m.all_non_negative());
            }
        }
    }

    #[test]
    fn same_seed_same_tree() {
        let cfg = RandomTreeConfig::default();
        let a = random_tree(&mut ChaCha8Rng::seed_from_u64(9), &cfg);
        let b = random_tree(&mut ChaCha8Rng::seed_from_u64(9), &cfg);
        assert_eq!(a, b);
    }
}
