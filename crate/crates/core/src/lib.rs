//! Solvency II standard-formula capital aggregation and allocation.
//!
//! A [`RiskTree`] holds the aggregation scheme: leaves carry standalone SCRs,
//! internal nodes carry the correlation matrix used to combine their children
//! with the square-root formula. [`aggregate_tree`] produces the BSCR and every
//! intermediate value; [`euler_allocate_tree`] pushes the BSCR back down so
//! that each node's allocated capital is its Euler contribution. The
//! [`diagnostics`] module compares this against haircut, marginal, covariance
//! and market-driven allocation and runs the property checks.

pub mod aggregation;
pub mod allocation;
pub mod diagnostics;
pub mod error;
pub mod fixtures;
pub mod risk_model;

pub use aggregation::{
    aggregate_excluding, aggregate_full_base, aggregate_level, aggregate_tree, calibrate_rho,
    diversification_effect, AggregationResult, CalibratedRho, NodeAggregate,
};
pub use allocation::{
    allocate_cut, covariance_allocate, covariance_allocate_explicit, euler_allocate_level,
    euler_allocate_tree, haircut_allocate, marginal_allocate, market_driven_allocate, scr_total,
    AllocationResult, CutAllocation, LevelAllocation, NodeAllocation,
};
pub use diagnostics::{compare_principles, run_property_suite, ComparisonReport, PropertyFinding};
pub use error::{Result, ScrError};
pub use risk_model::{
    parse_tree, serialize_tree, validate_tree, CorrelationMatrix, Cut, Finding, Principle, PrincipleSpec,
    RiskNode, RiskTree, Severity,
};
