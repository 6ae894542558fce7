use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::random::{jitter_correlations, scale_leaves};
use crate::aggregation::{
    aggregate_full_base, aggregate_level, aggregate_tree, calibrate_rho, leaf_scrs, sibling_base_matrix,
    AggregationResult,
};
use crate::allocation::{
    allocate_cut, covariance_allocate, covariance_allocate_tree, euler_allocate_level, euler_allocate_tree,
    haircut_allocate, marginal_allocate, AllocationResult,
};
use crate::risk_model::{validate_tree, CorrelationMatrix, Cut, Principle, PrincipleSpec, RiskTree};

/// Thresholds used by the property checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// Relative gap between a parent and the sum of its children's allocations.
    pub full_allocation: f64,
    /// Closed-form Euler contribution vs central finite difference, relative
    /// to the parent total.
    pub gradient: f64,
    /// Relative step of the central difference.
    pub gradient_step: f64,
    pub homogeneity: f64,
    pub covariance_proxy: f64,
    pub comonotonic: f64,
    pub calibration: f64,
    /// Slack on inequalities (subadditivity, AR bounds, monotonicity).
    pub inequality: f64,
    pub nested_genuine: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            full_allocation: 1e-9,
            gradient: 1e-6,
            gradient_step: 1e-6,
            homogeneity: 1e-12,
            covariance_proxy: 1e-12,
            comonotonic: 1e-12,
            calibration: 1e-12,
            inequality: 1e-12,
            nested_genuine: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Aggregation,
    FullAllocation,
    EulerGradient,
    Homogeneity,
    Subadditivity,
    StandaloneBound,
    RatioBounds,
    NoUndercut,
    CovarianceProxy,
    ComonotonicFixedPoint,
    CalibrationInverse,
    CorrelationMonotonicity,
    NestedEqualsGenuine,
}

impl Property {
    pub const ALL: [Property; 13] = [
        Property::Aggregation,
        Property::FullAllocation,
        Property::EulerGradient,
        Property::Homogeneity,
        Property::Subadditivity,
        Property::StandaloneBound,
        Property::RatioBounds,
        Property::NoUndercut,
        Property::CovarianceProxy,
        Property::ComonotonicFixedPoint,
        Property::CalibrationInverse,
        Property::CorrelationMonotonicity,
        Property::NestedEqualsGenuine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Property::Aggregation => "aggregation",
            Property::FullAllocation => "full allocation",
            Property::EulerGradient => "euler gradient",
            Property::Homogeneity => "homogeneity",
            Property::Subadditivity => "subadditivity",
            Property::StandaloneBound => "standalone bound",
            Property::RatioBounds => "allocation ratio bounds",
            Property::NoUndercut => "no undercut",
            Property::CovarianceProxy => "covariance proxy equals sfep",
            Property::ComonotonicFixedPoint => "comonotonic fixed point",
            Property::CalibrationInverse => "calibration inverse",
            Property::CorrelationMonotonicity => "correlation monotonicity",
            Property::NestedEqualsGenuine => "nested equals genuine",
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Passed,
    Failed,
    Skipped,
}

/// Result of one property on one tree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyOutcome {
    pub property: Property,
    pub status: Status,
    /// Individual comparisons made.
    pub checks: usize,
    /// Counterexample on failure, reason when skipped.
    pub detail: Option<String>,
}

/// One property merged over the base tree and every perturbed trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyFinding {
    pub property: String,
    pub status: Status,
    pub checks: usize,
    pub detail: Option<String>,
}

impl PropertyFinding {
    pub fn failed(&self) -> bool {
        self.status == Status::Failed
    }
}

impl fmt::Display for PropertyFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = match self.status {
            Status::Passed => "PASS",
            Status::Failed => "FAIL",
            Status::Skipped => "SKIP",
        };
        write!(f, "{status} {} ({} checks)", self.property, self.checks)?;
        if let Some(d) = &self.detail {
            write!(f, ": {d}")?;
        }
        Ok(())
    }
}

#[derive(Default)]
struct Tally {
    checks: usize,
    failure: Option<String>,
}

impl Tally {
    fn check(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok && self.failure.is_none() {
            self.failure = Some(detail());
        }
    }

    fn fail(&mut self, detail: String) {
        self.check(false, || detail);
    }

    fn finish(self, property: Property) -> PropertyOutcome {
        PropertyOutcome {
            property,
            status: if self.failure.is_some() {
                Status::Failed
            } else {
                Status::Passed
            },
            checks: self.checks,
            detail: self.failure,
        }
    }
}

fn skipped(property: Property, why: &str) -> PropertyOutcome {
    PropertyOutcome {
        property,
        status: Status::Skipped,
        checks: 0,
        detail: Some(why.to_string()),
    }
}

fn within(actual: f64, expected: f64, tol: f64, scale: f64) -> bool {
    (actual - expected).abs() <= tol * scale
}

struct Context<'a> {
    tree: &'a RiskTree,
    agg: AggregationResult,
    sfep: AllocationResult,
    tol: Tolerances,
    non_negative: bool,
    psd: bool,
}

impl Context<'_> {
    fn bscr(&self) -> f64 {
        self.agg.bscr()
    }

    fn children_scrs(&self, id: &str) -> Vec<f64> {
        self.tree
            .children(id)
            .unwrap_or_default()
            .iter()
            .map(|c| self.agg.scr(c).unwrap_or(0.0))
            .collect()
    }

    fn internal(&self) -> Vec<(&str, &CorrelationMatrix)> {
        self.tree
            .internal_nodes()
            .into_iter()
            .filter_map(|id| self.tree.matrix(id).map(|m| (id, m)))
            .collect()
    }
}

/// Runs every property on a single tree (no perturbation).
pub fn check_tree(tree: &RiskTree, tol: &Tolerances) -> Vec<PropertyOutcome> {
    let agg = match aggregate_tree(tree) {
        Ok(agg) => agg,
        Err(e) => {
            let mut t = Tally::default();
            t.fail(e.to_string());
            return vec![t.finish(Property::Aggregation)];
        }
    };
    let sfep = match euler_allocate_tree(tree, &agg) {
        Ok(a) => a,
        Err(e) => {
            let mut t = Tally::default();
            t.fail(e.to_string());
            return vec![t.finish(Property::FullAllocation)];
        }
    };
    let mats = tree.matrices();
    let ctx = Context {
        tree,
        non_negative: mats.values().all(|m| m.all_non_negative()),
        psd: mats.values().all(|m| m.is_positive_semidefinite()),
        agg,
        sfep,
        tol: *tol,
    };
    let mut aggregation = Tally::default();
    aggregation.check(true, String::new);
    vec![
        aggregation.finish(Property::Aggregation),
        full_allocation(&ctx),
        euler_gradient(&ctx),
        homogeneity(&ctx),
        subadditivity(&ctx),
        standalone_bound(&ctx),
        ratio_bounds(&ctx),
        no_undercut(&ctx),
        covariance_proxy(&ctx),
        comonotonic(&ctx),
        calibration_inverse(&ctx),
        monotonicity(&ctx),
        nested_genuine(&ctx),
    ]
}

fn full_allocation(ctx: &Context) -> PropertyOutcome {
    let tol = ctx.tol.full_allocation;
    let mut t = Tally::default();
    for (id, _) in ctx.internal() {
        let parent = ctx.sfep.allocated(id).unwrap_or(0.0);
        let kids: Vec<f64> = ctx
            .tree
            .children(id)
            .unwrap_or_default()
            .iter()
            .map(|c| ctx.sfep.allocated(c).unwrap_or(0.0))
            .collect();
        let sum: f64 = kids.iter().sum();
        let scale = parent.abs().max(kids.iter().map(|k| k.abs()).sum());
        t.check(within(sum, parent, tol, scale), || {
            format!("sfep children of `{id}` sum to {sum}, parent allocated {parent}")
        });
    }
    let bscr = ctx.bscr();
    if bscr == 0.0 {
        return t.finish(Property::FullAllocation);
    }
    let drivers: BTreeMap<String, f64> = ctx
        .tree
        .depth_first()
        .enumerate()
        .map(|(i, id)| (id.to_string(), 1.0 + (i % 7) as f64))
        .collect();
    let specs = [
        PrincipleSpec::sfep(),
        Principle::Haircut.into(),
        Principle::Marginal.into(),
        Principle::Covariance.into(),
        PrincipleSpec::market(drivers),
    ];
    for depth in 1..=ctx.tree.max_depth() {
        let cut = Cut::Depth(depth);
        for spec in &specs {
            match allocate_cut(ctx.tree, &ctx.agg, spec, &cut) {
                Ok(a) => {
                    let sum: f64 = a.allocated.iter().sum();
                    t.check(within(sum, bscr, tol, bscr), || {
                        format!("{} at {cut} sums to {sum}, BSCR {bscr}", spec.principle)
                    });
                }
                // degenerate weights (all-zero standalone etc.) are not a
                // full-allocation failure
                Err(crate::ScrError::ZeroWeights(_)) | Err(crate::ScrError::NonPositiveDenominator(_)) => {}
                Err(e) => t.fail(format!("{} at {cut}: {e}", spec.principle)),
            }
        }
    }
    t.finish(Property::FullAllocation)
}

fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

const MAX_GRADIENT_LEAVES: usize = 64;

fn euler_gradient(ctx: &Context) -> PropertyOutcome {
    let tol = ctx.tol.gradient;
    let step = ctx.tol.gradient_step;
    let mut t = Tally::default();

    // one level at a time against the level aggregate
    for (id, m) in ctx.internal() {
        let s = ctx.children_scrs(id);
        let total = ctx.agg.scr(id).unwrap_or(0.0);
        if total == 0.0 {
            continue;
        }
        let level = match euler_allocate_level(&s, m, total) {
            Ok(l) => l,
            Err(e) => {
                t.fail(format!("`{id}`: {e}"));
                continue;
            }
        };
        for i in 0..s.len() {
            if s[i] == 0.0 {
                continue;
            }
            let fd = central_difference(
                |x| {
                    let mut v = s.clone();
                    v[i] = x;
                    aggregate_level(&v, m).unwrap_or(f64::NAN)
                },
                s[i],
                step * s[i],
            );
            let expected = s[i] * fd;
            t.check(within(level.allocated[i], expected, tol, total), || {
                format!(
                    "child {i} of `{id}`: closed form {} vs finite difference {expected}",
                    level.allocated[i]
                )
            });
        }
    }

    // whole tree: leaf allocation vs derivative of the root aggregate
    let bscr = ctx.bscr();
    if bscr > 0.0 {
        let leaves: Vec<&str> = ctx.tree.leaves();
        let stride = leaves.len().div_ceil(MAX_GRADIENT_LEAVES).max(1);
        let mut work = ctx.tree.clone();
        for leaf in leaves.into_iter().step_by(stride) {
            let s = ctx.agg.scr(leaf).unwrap_or(0.0);
            if s == 0.0 {
                continue;
            }
            let mut eval = |x: f64| {
                work.set_leaf_scr(leaf, x).expect("leaf");
                aggregate_tree(&work).map(|a| a.bscr()).unwrap_or(f64::NAN)
            };
            let h = step * s;
            let fd = (eval(s + h) - eval(s - h)) / (2.0 * h);
            work.set_leaf_scr(leaf, s).expect("leaf");
            let allocated = ctx.sfep.allocated(leaf).unwrap_or(0.0);
            let expected = s * fd;
            t.check(within(allocated, expected, tol, bscr), || {
                format!("leaf `{leaf}`: allocated {allocated} vs s·∂BSCR/∂s {expected}")
            });
        }
    }
    t.finish(Property::EulerGradient)
}

const SCALES: [f64; 3] = [0.37, 3.9, 1234.5];

fn scaled(tree: &RiskTree, lambda: f64) -> RiskTree {
    let mut out = tree.clone();
    for leaf in tree.leaves() {
        let s = tree.node(leaf).and_then(|n| n.scr).unwrap_or(0.0);
        out.set_leaf_scr(leaf, lambda * s).expect("leaf");
    }
    out
}

fn homogeneity(ctx: &Context) -> PropertyOutcome {
    let tol = ctx.tol.homogeneity;
    let mut t = Tally::default();
    for lambda in SCALES {
        let tree = scaled(ctx.tree, lambda);
        let (agg, alloc) =
            match aggregate_tree(&tree).and_then(|a| euler_allocate_tree(&tree, &a).map(|b| (a, b))) {
                Ok(v) => v,
                Err(e) => {
                    t.fail(format!("λ = {lambda}: {e}"));
                    continue;
                }
            };
        for id in ctx.tree.depth_first() {
            let base = ctx.agg.scr(id).unwrap_or(0.0);
            let got = agg.scr(id).unwrap_or(0.0);
            t.check(within(got, lambda * base, tol, (lambda * base).abs()), || {
                format!("aggregate of `{id}` at λ = {lambda}: {got} vs {}", lambda * base)
            });
            let a0 = ctx.sfep.get(id).copied();
            let a1 = alloc.get(id).copied();
            if let (Some(a0), Some(a1)) = (a0, a1) {
                t.check(
                    within(
                        a1.allocated,
                        lambda * a0.allocated,
                        tol,
                        (lambda * a0.allocated).abs(),
                    ),
                    || {
                        format!(
                            "allocation of `{id}` at λ = {lambda}: {} vs {}",
                            a1.allocated,
                            lambda * a0.allocated
                        )
                    },
                );
                let (r0, r1) = (
                    a0.allocation_ratio.unwrap_or(0.0),
                    a1.allocation_ratio.unwrap_or(0.0),
                );
                t.check(within(r1, r0, tol, r0.abs().max(1.0)), || {
                    format!("ratio of `{id}` at λ = {lambda}: {r1} vs {r0}")
                });
            }
        }
    }
    t.finish(Property::Homogeneity)
}

fn subadditivity(ctx: &Context) -> PropertyOutcome {
    let slack = ctx.tol.inequality;
    let mut t = Tally::default();
    for (id, _) in ctx.internal() {
        let sum: f64 = ctx.children_scrs(id).iter().sum();
        let total = ctx.agg.scr(id).unwrap_or(0.0);
        let de = ctx.agg.get(id).map(|a| a.diversification_effect).unwrap_or(0.0);
        t.check(total <= sum + slack * sum && de >= -slack * sum, || {
            format!("`{id}`: aggregate {total} exceeds the children's sum {sum} (DE {de})")
        });
    }
    t.finish(Property::Subadditivity)
}

fn standalone_bound(ctx: &Context) -> PropertyOutcome {
    let slack = ctx.tol.inequality;
    let full = ctx.tol.full_allocation;
    let mut t = Tally::default();
    for (id, m) in ctx.internal() {
        let s = ctx.children_scrs(id);
        let total = ctx.agg.scr(id).unwrap_or(0.0);
        let allocated_sum: f64 = match euler_allocate_level(&s, m, total) {
            Ok(l) => l.allocated.iter().sum(),
            Err(e) => {
                t.fail(format!("`{id}`: {e}"));
                continue;
            }
        };
        let standalone_sum: f64 = s.iter().sum();
        // Σ allocated = total ≤ Σ standalone
        t.check(
            within(allocated_sum, total, full, total.max(standalone_sum)),
            || format!("`{id}`: level allocations sum to {allocated_sum}, aggregate {total}"),
        );
        t.check(allocated_sum <= standalone_sum * (1.0 + slack), || {
            format!("`{id}`: Σ allocated {allocated_sum} exceeds Σ standalone {standalone_sum}")
        });
        // each child's standalone splits fully among its own children
        let kids = ctx.tree.children(id).unwrap_or_default();
        for (k, child) in kids.iter().enumerate() {
            let (Some(cm), false) = (ctx.tree.matrix(child), s[k] == 0.0) else {
                continue;
            };
            let grand = ctx.children_scrs(child);
            if let Ok(l) = euler_allocate_level(&grand, cm, s[k]) {
                let inner: f64 = l.allocated.iter().sum();
                t.check(within(inner, s[k], full, s[k]), || {
                    format!(
                        "`{child}`: Σ within-module allocations {inner} vs standalone {}",
                        s[k]
                    )
                });
            }
        }
    }
    t.finish(Property::StandaloneBound)
}

fn regular(ctx: &Context) -> Option<&'static str> {
    if !ctx.non_negative {
        Some("negative correlations present")
    } else if !ctx.psd {
        Some("a correlation matrix is not positive semidefinite")
    } else {
        None
    }
}

fn ratio_bounds(ctx: &Context) -> PropertyOutcome {
    if let Some(why) = regular(ctx) {
        return skipped(Property::RatioBounds, why);
    }
    let slack = ctx.tol.inequality;
    let mut t = Tally::default();
    for (id, a) in ctx.sfep.iter() {
        for (what, r) in [("level", a.level_ratio), ("cumulative", a.allocation_ratio)] {
            let r = r.unwrap_or(0.0);
            t.check((-slack..=1.0 + slack).contains(&r), || {
                format!("{what} ratio of `{id}` is {r}")
            });
        }
    }
    t.finish(Property::RatioBounds)
}

fn no_undercut(ctx: &Context) -> PropertyOutcome {
    if let Some(why) = regular(ctx) {
        return skipped(Property::NoUndercut, why);
    }
    let slack = ctx.tol.inequality;
    let mut t = Tally::default();
    for (id, m) in ctx.internal() {
        let s = ctx.children_scrs(id);
        let total = ctx.agg.scr(id).unwrap_or(0.0);
        if let Ok(l) = euler_allocate_level(&s, m, total) {
            for (i, (&a, &x)) in l.allocated.iter().zip(&s).enumerate() {
                t.check(a <= x + slack * total, || {
                    format!("child {i} of `{id}` allocated {a} above its standalone {x}")
                });
            }
        }
    }
    t.finish(Property::NoUndercut)
}

fn covariance_proxy(ctx: &Context) -> PropertyOutcome {
    let tol = ctx.tol.covariance_proxy;
    let mut t = Tally::default();
    for (id, m) in ctx.internal() {
        let s = ctx.children_scrs(id);
        let total = ctx.agg.scr(id).unwrap_or(0.0);
        if total == 0.0 {
            continue;
        }
        match (
            covariance_allocate(total, &s, m),
            euler_allocate_level(&s, m, total),
        ) {
            (Ok(cov), Ok(euler)) => {
                for (i, (c, e)) in cov.iter().zip(&euler.allocated).enumerate() {
                    t.check(within(*c, *e, tol, total), || {
                        format!("child {i} of `{id}`: covariance {c} vs sfep {e}")
                    });
                }
            }
            (Err(e), _) | (_, Err(e)) => t.fail(format!("`{id}`: {e}")),
        }
    }
    let bscr = ctx.bscr();
    if bscr > 0.0 {
        match covariance_allocate_tree(ctx.tree, &ctx.agg) {
            Ok(cov) => {
                for (id, a) in ctx.sfep.iter() {
                    let c = cov.allocated(id).unwrap_or(0.0);
                    t.check(within(c, a.allocated, tol, bscr), || {
                        format!("`{id}`: top-down covariance {c} vs sfep {}", a.allocated)
                    });
                }
            }
            Err(e) => t.fail(e.to_string()),
        }
    }
    t.finish(Property::CovarianceProxy)
}

fn comonotonic(ctx: &Context) -> PropertyOutcome {
    let tol = ctx.tol.comonotonic;
    let mut tree = ctx.tree.clone();
    for (id, m) in ctx.internal() {
        tree.set_matrix(id, CorrelationMatrix::uniform(m.order(), 1.0))
            .expect("internal");
    }
    let mut t = Tally::default();
    let agg = match aggregate_tree(&tree) {
        Ok(a) => a,
        Err(e) => {
            t.fail(e.to_string());
            return t.finish(Property::ComonotonicFixedPoint);
        }
    };
    let leaves: Vec<String> = tree.leaves().into_iter().map(String::from).collect();
    let standalone = leaf_scrs(&tree);
    let bscr = agg.bscr();
    let sum: f64 = standalone.iter().sum();
    t.check(within(bscr, sum, tol, sum), || {
        format!("BSCR {bscr} vs plain sum {sum}")
    });
    if bscr == 0.0 {
        return t.finish(Property::ComonotonicFixedPoint);
    }

    let mut compare = |label: &str, got: Vec<f64>| {
        for (i, (&g, &s)) in got.iter().zip(&standalone).enumerate() {
            t.check(within(g, s, tol, bscr), || {
                format!("{label}: leaf `{}` allocated {g}, standalone {s}", leaves[i])
            });
        }
    };
    match euler_allocate_tree(&tree, &agg) {
        Ok(a) => compare(
            "sfep",
            leaves.iter().map(|l| a.allocated(l).unwrap_or(0.0)).collect(),
        ),
        Err(e) => compare(&format!("sfep ({e})"), vec![f64::NAN; leaves.len()]),
    }
    match haircut_allocate(&standalone, bscr) {
        Ok(a) => compare("haircut", a),
        Err(e) => compare(&format!("haircut ({e})"), vec![f64::NAN; leaves.len()]),
    }
    match covariance_allocate_tree(&tree, &agg) {
        Ok(a) => compare(
            "covariance",
            leaves.iter().map(|l| a.allocated(l).unwrap_or(0.0)).collect(),
        ),
        Err(e) => compare(&format!("covariance ({e})"), vec![f64::NAN; leaves.len()]),
    }
    match marginal_allocate(&tree, &leaves, bscr) {
        Ok(a) => compare("marginal", a),
        Err(e) => compare(&format!("marginal ({e})"), vec![f64::NAN; leaves.len()]),
    }
    t.finish(Property::ComonotonicFixedPoint)
}

/// Pairs further apart than this lose digits to cancellation in the
/// calibration formula; they are not used for the round trip.
const CALIBRATION_MAX_RATIO: f64 = 100.0;

fn calibration_inverse(ctx: &Context) -> PropertyOutcome {
    let tol = ctx.tol.calibration;
    let mut t = Tally::default();
    for (id, m) in ctx.internal() {
        let s = ctx.children_scrs(id);
        if s.len() < 2 {
            continue;
        }
        let (a, b) = (s[0], s[1]);
        if a <= 0.0 || b <= 0.0 || a.max(b) / a.min(b) > CALIBRATION_MAX_RATIO {
            continue;
        }
        for rho in [m.get(0, 1), -1.0, -0.5, 0.0, 0.3, 1.0] {
            let joint = match aggregate_level(&[a, b], &CorrelationMatrix::uniform(2, rho)) {
                Ok(v) => v,
                Err(e) => {
                    t.fail(format!("`{id}` ρ = {rho}: {e}"));
                    continue;
                }
            };
            match calibrate_rho(a, b, joint) {
                Ok(c) => t.check(within(c.rho, rho, tol, rho.abs().max(1.0)), || {
                    format!("`{id}`: ({a}, {b}) at ρ = {rho} calibrates back to {}", c.rho)
                }),
                Err(e) => t.fail(format!("`{id}` ρ = {rho}: {e}")),
            }
        }
    }
    t.finish(Property::CalibrationInverse)
}

const MONOTONICITY_NODES: usize = 24;

fn monotonicity(ctx: &Context) -> PropertyOutcome {
    if !ctx.non_negative {
        return skipped(Property::CorrelationMonotonicity, "negative correlations present");
    }
    let slack = ctx.tol.inequality;
    let bscr = ctx.bscr();
    let mut t = Tally::default();
    for (id, m) in ctx.internal().into_iter().take(MONOTONICITY_NODES) {
        let mut raised = m.clone();
        let n = m.order();
        for i in 0..n {
            for j in 0..i {
                raised.set_symmetric(i, j, 0.75 * m.get(i, j) + 0.25);
            }
        }
        let mut tree = ctx.tree.clone();
        tree.set_matrix(id, raised).expect("internal");
        match aggregate_tree(&tree) {
            Ok(a) => t.check(a.bscr() >= bscr * (1.0 - slack), || {
                format!(
                    "raising correlations at `{id}` lowered the BSCR from {bscr} to {}",
                    a.bscr()
                )
            }),
            Err(e) => t.fail(format!("`{id}`: {e}")),
        }
    }
    t.finish(Property::CorrelationMonotonicity)
}

fn nested_genuine(ctx: &Context) -> PropertyOutcome {
    let tol = ctx.tol.nested_genuine;
    let mut tree = ctx.tree.clone();
    for (id, m) in ctx.internal() {
        let has_internal_child = ctx
            .tree
            .children(id)
            .unwrap_or_default()
            .iter()
            .any(|c| ctx.tree.node(c).is_some_and(|n| !n.is_leaf()));
        if has_internal_child {
            tree.set_matrix(id, CorrelationMatrix::identity(m.order()))
                .expect("internal");
        }
    }
    let mut t = Tally::default();
    let nested = aggregate_tree(&tree).map(|a| a.bscr());
    let genuine = aggregate_full_base(&leaf_scrs(&tree), &sibling_base_matrix(&tree));
    match (nested, genuine) {
        (Ok(n), Ok(g)) => t.check(within(n, g, tol, n.abs().max(g.abs())), || {
            format!("nested {n} vs full base {g}")
        }),
        (Err(e), _) | (_, Err(e)) => t.fail(e.to_string()),
    }
    t.finish(Property::NestedEqualsGenuine)
}

/// Validates the tree, then checks every property on it and on `trials`
/// perturbed copies (leaf SCRs scaled by factors in [0.5, 2], correlations
/// pulled toward random non-negative PSD matrices). Deterministic in `seed`.
pub fn run_property_suite(tree: &RiskTree, seed: u64, trials: usize) -> Vec<PropertyFinding> {
    let errors: Vec<PropertyFinding> = validate_tree(tree)
        .into_iter()
        .filter(|f| f.is_error())
        .map(|f| PropertyFinding {
            property: "validation".into(),
            status: Status::Failed,
            checks: 1,
            detail: Some(f.to_string()),
        })
        .collect();
    if !errors.is_empty() {
        return errors;
    }

    let tol = Tolerances::default();
    let mut runs = vec![("base tree".to_string(), check_tree(tree, &tol))];
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64 + 1);
        let mut perturbed = tree.clone();
        scale_leaves(&mut rng, &mut perturbed, (0.5, 2.0));
        jitter_correlations(&mut rng, &mut perturbed, 0.5);
        runs.push((format!("trial {trial}"), check_tree(&perturbed, &tol)));
    }
    merge(&runs)
}

fn merge(runs: &[(String, Vec<PropertyOutcome>)]) -> Vec<PropertyFinding> {
    Property::ALL
        .iter()
        .filter_map(|&p| {
            let outcomes: Vec<(&str, &PropertyOutcome)> = runs
                .iter()
                .flat_map(|(label, os)| {
                    os.iter()
                        .filter(move |o| o.property == p)
                        .map(move |o| (label.as_str(), o))
                })
                .collect();
            if outcomes.is_empty() {
                return None;
            }
            let checks = outcomes.iter().map(|(_, o)| o.checks).sum();
            let failure = outcomes.iter().find(|(_, o)| o.status == Status::Failed);
            let all_skipped = outcomes.iter().all(|(_, o)| o.status == Status::Skipped);
            let (status, detail) = match (failure, all_skipped) {
                (Some((label, o)), _) => (Status::Failed, o.detail.as_ref().map(|d| format!("{label}: {d}"))),
                (None, true) => (Status::Skipped, outcomes[0].1.detail.clone()),
                (None, false) => (Status::Passed, None),
            };
            Some(PropertyFinding {
                property: p.name().to_string(),
                status,
                checks,
                detail,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn toy_fixture_passes_everything() {
        let t = fixtures::toy_3x2().unwrap();
        let findings = run_property_suite(&t, 7, 10);
        for f in &findings {
            assert_eq!(f.status, Status::Passed, "{f}");
        }
        assert_eq!(findings.len(), Property::ALL.len());
    }

    #[test]
    fn asymmetric_tree_stops_at_validation() {
        let mut t = fixtures::toy_3x2().unwrap();
        t.matrix_mut("m1").unwrap().set(0, 1, 0.3);
        let findings = run_property_suite(&t, 1, 5);
        assert!(!findings.is_empty());
        assert!(findings.iter().all(|f| f.property == "validation" && f.failed()));
    }

    #[test]
    fn negative_correlations_skip_the_bounds() {
        let mut t = fixtures::toy_3x2().unwrap();
        t.set_matrix("m1", CorrelationMatrix::uniform(2, -0.5)).unwrap();
        let out = check_tree(&t, &Tolerances::default());
        let bounds = out.iter().find(|o| o.property == Property::RatioBounds).unwrap();
        assert_eq!(bounds.status, Status::Skipped);
        assert!(out
            .iter()
            .filter(|o| o.status != Status::Skipped)
            .all(|o| o.status == Status::Passed));
    }

    #[test]
    fn suite_is_deterministic() {
        let t = fixtures::toy_3x2().unwrap();
        assert_eq!(run_property_suite(&t, 3, 4), run_property_suite(&t, 3, 4));
    }

    #[test]
    fn broken_allocation_would_be_caught() {
        // The gradient check is independent of the closed form: a wrong
        // derivative (ignoring correlations) must fail it.
        let s = [60.0, 70.0];
        let m = CorrelationMatrix::uniform(2, 0.5);
        let total = aggregate_level(&s, &m).unwrap();
        let wrong = s[0] * s[0] / total;
        let fd = central_difference(|x| aggregate_level(&[x, s[1]], &m).unwrap(), s[0], 1e-6 * s[0]);
        assert!(!within(wrong, s[0] * fd, 1e-6, total));
    }
}
