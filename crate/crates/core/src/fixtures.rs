//! Seeded generators of random smooth test functions and forms, shared by
//! unit tests, the acceptance suite, the CLI and the benches.

use rand::Rng;

use crate::forms::Form;
use crate::multiindex::{MultiIndex, WeightFamily};
use crate::symfun::{CylinderFn, Expr, C64};

/// Random expression tree of depth `<= depth` over the first `dim` complex
/// coordinates, built from polynomial leaves, sums, products, exp, sin, cos.
pub fn random_smooth<R: Rng + ?Sized>(rng: &mut R, depth: usize, dim: usize) -> Expr {
    if depth == 0 || rng.random_bool(0.25) {
        return random_leaf(rng, dim);
    }
    match rng.random_range(0..6) {
        0 => random_smooth(rng, depth - 1, dim) + random_smooth(rng, depth - 1, dim),
        1 => random_smooth(rng, depth - 1, dim) * random_smooth(rng, depth - 1, dim) * 0.5,
        2 => random_smooth(rng, depth - 1, dim).sin(),
        3 => random_smooth(rng, depth - 1, dim).cos(),
        4 => (random_smooth(rng, depth - 1, dim) * 0.5).exp(),
        _ => random_smooth(rng, depth - 1, dim) - random_smooth(rng, depth - 1, dim) * 0.5,
    }
}

fn random_coord<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Expr {
    let i = rng.random_range(1..=dim);
    match rng.random_range(0..4) {
        0 => Expr::x(i),
        1 => Expr::y(i),
        2 => Expr::z(i),
        _ => Expr::zb(i),
    }
}

fn random_leaf<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Expr {
    let c = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    match rng.random_range(0..4) {
        0 => Expr::constant(c),
        1 => random_coord(rng, dim) * c,
        2 => random_coord(rng, dim) * random_coord(rng, dim) + Expr::constant(c),
        _ => random_coord(rng, dim).powi(rng.random_range(2..=3)) * c,
    }
}

/// Random point with coordinates uniform in `[-r, r]`.
pub fn random_point<R: Rng + ?Sized>(rng: &mut R, dim: usize, r: f64) -> Vec<f64> {
    (0..2 * dim).map(|_| rng.random_range(-r..r)).collect()
}

/// Random point uniform in the Euclidean ball of radius `r` in `C^dim`.
pub fn random_point_in_ball<R: Rng + ?Sized>(rng: &mut R, dim: usize, r: f64) -> Vec<f64> {
    loop {
        let p = random_point(rng, dim, r);
        if p.iter().map(|v| v * v).sum::<f64>() < r * r {
            return p;
        }
    }
}

/// Random point outside the ball of radius `r`, within radius `2r`.
pub fn random_point_outside<R: Rng + ?Sized>(rng: &mut R, dim: usize, r: f64) -> Vec<f64> {
    loop {
        let p = random_point(rng, dim, 2.0 * r);
        if p.iter().map(|v| v * v).sum::<f64>() > r * r {
            return p;
        }
    }
}

/// A smooth function of the first `dim` coordinates vanishing outside the
/// ball of radius `radius`: a low-degree random polynomial (plus an
/// oscillatory factor) times `bump(|z|^2/radius^2)`.
pub fn random_compact<R: Rng + ?Sized>(rng: &mut R, dim: usize, radius: f64) -> CylinderFn {
    let mut poly = Expr::constant(C64::new(
        rng.random_range(0.5..1.5),
        rng.random_range(-0.5..0.5),
    ));
    for i in 1..=dim {
        let s = 1.0 / radius;
        let cx = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let cy = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        poly = poly + Expr::x(i) * (cx * s) + Expr::y(i) * (cy * s);
        if rng.random_bool(0.5) {
            let c = C64::new(rng.random_range(-1.0..1.0), 0.0);
            poly = poly + Expr::z(i) * Expr::zb(i) * (c * s * s);
        }
    }
    if rng.random_bool(0.5) {
        let i = rng.random_range(1..=dim);
        let w = rng.random_range(1.0..3.0) / radius;
        poly = poly * (Expr::x(i) * w).cos();
    }
    CylinderFn::with_cutoff(poly, dim, radius)
}

/// A random form of degree `(s,t)` over the first `dim` coordinates with
/// `1..=max_terms` compactly supported coefficients.
pub fn random_form<R: Rng + ?Sized>(
    rng: &mut R,
    s: usize,
    t: usize,
    dim: usize,
    radius: f64,
    max_terms: usize,
    family: WeightFamily,
) -> Form {
    let is = MultiIndex::all(s, dim);
    let js = MultiIndex::all(t, dim);
    let mut f = Form::zero(s, t, family);
    let terms = rng.random_range(1..=max_terms.max(1));
    for _ in 0..terms {
        let i = is[rng.random_range(0..is.len())].clone();
        let j = js[rng.random_range(0..js.len())].clone();
        f.set(i, j, random_compact(rng, dim, radius))
            .expect("indices drawn with matching degrees");
    }
    f
}

/// The truncated product `prod_{j<=n} (1 + x_j^2 sin(2 j^2 pi x_j))(1 + y_j^2 sin(2 j^2 pi y_j))`,
/// smooth in every direction yet with partials `2 pi` at `(1/j)_j`.
pub fn oscillating_product(n: usize) -> Expr {
    let mut acc = Expr::one();
    for j in 1..=n {
        let k = 2.0 * (j * j) as f64 * std::f64::consts::PI;
        for v in [Expr::x(j), Expr::y(j)] {
            acc = acc * (v.powi(2) * (v.clone() * k).sin() + 1.0);
        }
    }
    acc
}
