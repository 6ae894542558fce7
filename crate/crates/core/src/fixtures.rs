//! Bundled example trees, also shipped as JSON under `fixtures/`.

use crate::error::Result;
use crate::risk_model::{parse_tree, RiskTree};

/// Three risk modules of two sub-risks each, ρ = 0.5 inside every module and
/// independent modules.
pub const TOY_3X2: &str = include_str!("../../../fixtures/toy_3x2.json");

/// Non-life insurer: five risk modules under the regulatory BSCR matrix, the
/// non-life module split into premium & reserve (nine lines of business, each
/// premium vs reserve at ρ = 0.5), lapse, and catastrophe (natural and
/// man-made perils, uncorrelated).
pub const NONLIFE_CASE: &str = include_str!("../../../fixtures/nonlife_case.json");

pub fn toy_3x2() -> Result<RiskTree> {
    parse_tree(TOY_3X2)
}

pub fn nonlife_case() -> Result<RiskTree> {
    parse_tree(NONLIFE_CASE)
}

/// Looks up a bundled fixture by name (`toy_3x2`, `nonlife_case`).
pub fn by_name(name: &str) -> Option<&'static str> {
    match name {
        "toy_3x2" => Some(TOY_3X2),
        "nonlife_case" => Some(NONLIFE_CASE),
        _ => None,
    }
}
