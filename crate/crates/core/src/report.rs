//! One line of a verification report.

use serde::{Deserialize, Serialize};

use crate::gaussmeasure::PairedResidual;

/// `pass` iff `margin >= -3 stderr` for statistical checks and
/// `margin >= -tol` for deterministic ones.
///
/// Residual-type checks record `margin = -residual`; inequality checks record
/// `margin = rhs - lhs` (or `lhs - rhs`, whichever side must dominate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub check_id: String,
    pub lhs: f64,
    pub rhs: f64,
    pub stderr: f64,
    pub margin: f64,
    pub pass: bool,
    /// Wall time; not serialized so that reports are reproducible byte for byte.
    #[serde(skip)]
    pub runtime_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl CheckRecord {
    pub fn statistical(id: impl Into<String>, lhs: f64, rhs: f64, margin: f64, stderr: f64) -> Self {
        CheckRecord {
            check_id: id.into(),
            lhs,
            rhs,
            stderr,
            margin,
            pass: margin >= -3.0 * stderr,
            runtime_ms: 0,
            detail: None,
        }
    }

    pub fn deterministic(id: impl Into<String>, lhs: f64, rhs: f64, margin: f64, tol: f64) -> Self {
        CheckRecord {
            check_id: id.into(),
            lhs,
            rhs,
            stderr: 0.0,
            margin,
            pass: margin >= -tol,
            runtime_ms: 0,
            detail: None,
        }
    }

    /// A paired identity: `lhs`, `rhs` are the moduli of the two integrals.
    pub fn paired(id: impl Into<String>, r: &PairedResidual, det_tol: f64) -> Self {
        let (l, rr) = (r.lhs.mean.norm(), r.rhs.mean.norm());
        if r.deterministic {
            CheckRecord::deterministic(id, l, rr, -r.residual, det_tol)
        } else {
            CheckRecord::statistical(id, l, rr, -r.residual, r.stderr)
        }
    }

    /// A pointwise residual (`lhs = residual`, `rhs = 0`).
    pub fn residual(id: impl Into<String>, residual: f64, tol: f64) -> Self {
        CheckRecord::deterministic(id, residual, 0.0, -residual, tol)
    }

    /// A check that could not be evaluated.
    pub fn failed(id: impl Into<String>, detail: impl Into<String>) -> Self {
        CheckRecord {
            check_id: id.into(),
            lhs: f64::NAN,
            rhs: f64::NAN,
            stderr: 0.0,
            margin: f64::NAN,
            pass: false,
            runtime_ms: 0,
            detail: Some(detail.into()),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}
