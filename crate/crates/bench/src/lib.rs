//! Inputs shared by the benchmarks.

use dbarl2_core::{CylinderFn, Expr, Form, FormEntry, WeightFamily};

/// A compactly supported `(0,1)`-form in `n` variables with one polynomial
/// coefficient per direction.
pub fn test_form(n: usize) -> Form {
    let entries: Vec<FormEntry> = (1..=n)
        .map(|j| FormEntry {
            i: Vec::new(),
            j: vec![j],
            coeff: format!("1 + x({j})*zb({}) - y({j})^2", j % n + 1),
            cutoff: Some(2.0),
        })
        .collect();
    Form::from_entries(0, 1, &entries, WeightFamily::default()).expect("valid literal")
}

/// `exp(-|z|^2) * (1 + z_1 zb_n)` on the first `n` variables.
pub fn test_function(n: usize) -> CylinderFn {
    let e = (-Expr::norm_sq(n)).exp() * (Expr::z(1) * Expr::zb(n) + 1.0);
    CylinderFn::new(e)
}

/// Deterministic points of `R^{2n}` spread over `[-0.5, 0.5]`.
pub fn points(n: usize, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|k| {
            (0..2 * n)
                .map(|d| ((k * (2 * d + 3) + d * 7) % 101) as f64 / 100.0 - 0.5)
                .collect()
        })
        .collect()
}
