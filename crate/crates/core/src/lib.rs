//! Finite-truncation numerics for the ∂̄ operator on Gaussian-weighted `L^2`
//! spaces of forms over (truncations of) `ℓ^2`.

// `!(x > 0.0)` guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dbarops;
pub mod domains;
pub mod error;
pub mod fixtures;
pub mod forms;
pub mod gaussmeasure;
pub mod multiindex;
pub mod reduction;
pub mod report;
pub mod solver;
pub mod symfun;
pub mod weights;

pub use dbarops::OperatorContext;
pub use domains::{Domain, DomainSpec};
pub use error::{Error, EvalError, ParseError, Result};
pub use forms::{Form, FormEntry};
pub use gaussmeasure::{GaussianSpec, MCEstimate, PairedResidual, Quadrature};
pub use multiindex::{MultiIndex, WeightFamily};
pub use report::CheckRecord;
pub use solver::{SolveProblem, SolveReport};
pub use symfun::{parse, CylinderFn, Expr, Var, C64};
pub use weights::WeightTriple;
