use std::fmt;

use serde::Serialize;

use super::RiskTree;
use crate::error::ScrError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

/// One validation outcome. Errors carry the underlying [`ScrError`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    pub severity: Severity,
    /// Node the finding is about.
    pub subject: String,
    pub message: String,
    #[serde(skip)]
    pub error: Option<ScrError>,
}

impl Finding {
    fn error(subject: &str, err: ScrError) -> Self {
        Self {
            severity: Severity::Error,
            subject: subject.to_string(),
            message: err.to_string(),
            error: Some(err),
        }
    }

    fn warning(subject: &str, message: String) -> Self {
        Self {
            severity: Severity::Warning,
            subject: subject.to_string(),
            message,
            error: None,
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{tag} [{}]: {}", self.subject, self.message)
    }
}

/// Checks every content invariant of the tree. A matrix that is not positive
/// semidefinite is only a warning: regulatory matrices must run as published.
pub fn validate_tree(tree: &RiskTree) -> Vec<Finding> {
    let mut findings = Vec::new();
    for id in tree.depth_first() {
        let node = tree.node(id).expect("ids come from the tree");
        if node.is_leaf() {
            match node.scr {
                None => findings.push(Finding::error(id, ScrError::MissingScr(id.into()))),
                Some(v) if !v.is_finite() => {
                    findings.push(Finding::error(id, ScrError::NonFinite(id.into())))
                }
                Some(v) if v < 0.0 => findings.push(Finding::error(
                    id,
                    ScrError::NegativeScr {
                        node: id.into(),
                        value: v,
                    },
                )),
                Some(_) => {}
            }
        } else if node.scr.is_some() {
            findings.push(Finding::error(id, ScrError::InternalScr(id.into())));
        }
        if let Some(d) = node.driver {
            if !d.is_finite() || d < 0.0 {
                findings.push(Finding::error(
                    id,
                    ScrError::NegativeDriver {
                        node: id.into(),
                        value: d,
                    },
                ));
            }
        }

        if node.is_leaf() {
            continue;
        }
        let Some(m) = tree.matrix(id) else {
            findings.push(Finding::error(id, ScrError::MissingMatrix(id.into())));
            continue;
        };
        if m.order() != node.children.len() {
            findings.push(Finding::error(
                id,
                ScrError::MatrixOrderMismatch {
                    node: id.into(),
                    expected: node.children.len(),
                    found: m.order(),
                },
            ));
            continue;
        }
        let errors = m.check(id);
        let clean = errors.is_empty();
        findings.extend(errors.into_iter().map(|e| Finding::error(id, e)));
        if clean {
            if let Some(min) = m.min_eigenvalue() {
                if min < -super::PSD_TOLERANCE {
                    findings.push(Finding::warning(
                        id,
                        format!(
                            "correlation matrix is not positive semidefinite (smallest eigenvalue {min:.6})"
                        ),
                    ));
                }
            }
        }
    }
    findings
}
