//! Pseudo-convex domains in `ℓ^2` given by plurisubharmonic exhaustion
//! functions `η`, boundary geometry, and Levi-form checks.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symfun::{parse, Compiled, CylinderFn, Expr, Var, C64};

pub type BoundaryRule = dyn Fn(&[f64]) -> f64 + Send + Sync;

#[derive(Clone)]
pub enum DomainKind {
    /// `B_r(center)` with `η = -ln(1 - ||(z - center)/r||^2)`.
    Ball { center: Vec<C64>, radius: f64 },
    /// The Hilbert polydisc with `η = prod 1/(1 - |z_i|^2)`.
    Polydisc,
    /// All of `ℓ^2` with `η = ||z||^2`.
    Entire,
    /// `V + a`, with `η(z - a)`.
    Translated { base: Box<Domain>, shift: Vec<C64> },
    /// `cV` (coordinates past `factors` are left unscaled), with `η(z / c)`.
    Scaled { base: Box<Domain>, factors: Vec<C64> },
    /// `S × ℓ^2` for a domain `S ⊂ C^m` with exhaustion `η_S`; `η = η_S + ||z||^2`.
    CylinderOver { m: usize, eta_s: Expr },
    /// User exhaustion function; a point is inside when `η` evaluates finitely.
    Custom { eta: Expr, label: String },
    /// `η + ||z||^2 - shift`.
    Normalized { base: Box<Domain>, shift: f64 },
}

#[derive(Clone)]
pub struct Domain {
    pub kind: DomainKind,
    boundary: Option<Arc<BoundaryRule>>,
    /// Radius of the ball searched when sampling a cylinder or custom domain.
    pub sampling_radius: f64,
}

impl fmt::Debug for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// Margin of a sample set against the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Inclusion {
    /// `inf d_V` over the sample.
    pub margin: f64,
    pub included: bool,
    pub points: usize,
}

fn norm_sq_shifted(n: usize, center: &[C64], radius: f64) -> Expr {
    let mut acc = Expr::zero();
    for i in 1..=n {
        let c = center.get(i - 1).copied().unwrap_or_default();
        let dx = Expr::x(i) - c.re;
        let dy = Expr::y(i) - c.im;
        acc = acc + dx.powi(2) + dy.powi(2);
    }
    acc * (1.0 / (radius * radius))
}

fn point_norm(p: &[f64]) -> f64 {
    p.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn coord(p: &[f64], i: usize) -> C64 {
    C64::new(
        p.get(2 * i).copied().unwrap_or(0.0),
        p.get(2 * i + 1).copied().unwrap_or(0.0),
    )
}

fn set_coord(p: &mut Vec<f64>, i: usize, v: C64) {
    if p.len() < 2 * i + 2 {
        p.resize(2 * i + 2, 0.0);
    }
    p[2 * i] = v.re;
    p[2 * i + 1] = v.im;
}

impl Domain {
    fn from_kind(kind: DomainKind) -> Self {
        Domain {
            kind,
            boundary: None,
            sampling_radius: 1.0,
        }
    }

    pub fn ball(center: Vec<C64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Precondition(format!("ball radius {radius} must be positive")));
        }
        Ok(Domain::from_kind(DomainKind::Ball { center, radius }))
    }

    pub fn unit_ball() -> Self {
        Domain::from_kind(DomainKind::Ball {
            center: Vec::new(),
            radius: 1.0,
        })
    }

    pub fn polydisc() -> Self {
        Domain::from_kind(DomainKind::Polydisc)
    }

    pub fn entire() -> Self {
        let mut d = Domain::from_kind(DomainKind::Entire);
        d.sampling_radius = 2.0;
        d
    }

    pub fn translated(self, shift: Vec<C64>) -> Self {
        let r = self.sampling_radius;
        let mut d = Domain::from_kind(DomainKind::Translated {
            base: Box::new(self),
            shift,
        });
        d.sampling_radius = r;
        d
    }

    pub fn scaled(self, factors: Vec<C64>) -> Result<Self> {
        if factors.iter().any(|c| !(c.norm() > 0.0) || !c.norm().is_finite()) {
            return Err(Error::Precondition("scaling factors must be finite and nonzero".into()));
        }
        let r = self.sampling_radius;
        let mut d = Domain::from_kind(DomainKind::Scaled {
            base: Box::new(self),
            factors,
        });
        d.sampling_radius = r;
        Ok(d)
    }

    /// `S × ℓ^2` with `η = η_S(z_1..z_m) + ||z||^2`; `η_S` must only read the
    /// first `m` coordinates.
    pub fn cylinder_over(m: usize, eta_s: Expr) -> Result<Self> {
        if eta_s.max_index() > m {
            return Err(Error::Precondition(format!(
                "η_S reads coordinate {} beyond m = {m}",
                eta_s.max_index()
            )));
        }
        Ok(Domain::from_kind(DomainKind::CylinderOver { m, eta_s }))
    }

    pub fn custom(label: impl Into<String>, eta: Expr) -> Self {
        Domain::from_kind(DomainKind::Custom {
            eta,
            label: label.into(),
        })
    }

    /// Attach an analytic distance-to-boundary rule.
    pub fn with_boundary_distance(mut self, rule: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.boundary = Some(Arc::new(rule));
        self
    }

    pub fn with_sampling_radius(mut self, r: f64) -> Self {
        self.sampling_radius = r;
        self
    }

    pub fn label(&self) -> String {
        match &self.kind {
            DomainKind::Ball { center, radius } => format!("ball(r={radius}, center={center:?})"),
            DomainKind::Polydisc => "polydisc".into(),
            DomainKind::Entire => "entire".into(),
            DomainKind::Translated { base, .. } => format!("translated({})", base.label()),
            DomainKind::Scaled { base, .. } => format!("scaled({})", base.label()),
            DomainKind::CylinderOver { m, .. } => format!("cylinder_over(m={m})"),
            DomainKind::Custom { label, .. } => format!("custom({label})"),
            DomainKind::Normalized { base, .. } => format!("normalized({})", base.label()),
        }
    }

    /// Number of leading coordinates the domain is defined by; `η_n` is only
    /// meaningful for `n` at least this.
    pub fn intrinsic_dim(&self) -> usize {
        match &self.kind {
            DomainKind::Ball { center, .. } => center.len(),
            DomainKind::Polydisc | DomainKind::Entire => 0,
            DomainKind::Translated { base, shift } => base.intrinsic_dim().max(shift.len()),
            DomainKind::Scaled { base, factors } => base.intrinsic_dim().max(factors.len()),
            DomainKind::CylinderOver { m, .. } => *m,
            DomainKind::Custom { eta, .. } => eta.max_index(),
            DomainKind::Normalized { base, .. } => base.intrinsic_dim(),
        }
    }

    /// The exhaustion function truncated to the first `n` coordinates.
    pub fn eta(&self, n: usize) -> CylinderFn {
        let e = self.eta_expr(n);
        CylinderFn {
            dim: n.max(e.max_index()),
            expr: e,
            support_radius: None,
        }
    }

    fn eta_expr(&self, n: usize) -> Expr {
        match &self.kind {
            DomainKind::Ball { center, radius } => {
                -(1.0 - norm_sq_shifted(n, center, *radius)).ln()
            }
            DomainKind::Polydisc => {
                let mut acc = Expr::one();
                for i in 1..=n {
                    acc = acc / (1.0 - Expr::x(i).powi(2) - Expr::y(i).powi(2));
                }
                acc
            }
            DomainKind::Entire => Expr::norm_sq(n),
            DomainKind::Translated { base, shift } => {
                let shift = shift.clone();
                base.eta_expr(n).substitute(&move |v| {
                    let c = shift.get(v.index() - 1).copied().unwrap_or_default();
                    match v {
                        Var::X(i) => Expr::x(i) - c.re,
                        Var::Y(i) => Expr::y(i) - c.im,
                    }
                })
            }
            DomainKind::Scaled { base, factors } => {
                let factors = factors.clone();
                base.eta_expr(n).substitute(&move |v| {
                    let i = v.index();
                    let Some(&c) = factors.get(i - 1) else {
                        return Expr::var(v);
                    };
                    // (x + iy) / c
                    let inv = 1.0 / c.norm_sqr();
                    match v {
                        Var::X(_) => (Expr::x(i) * c.re + Expr::y(i) * c.im) * inv,
                        Var::Y(_) => (Expr::y(i) * c.re - Expr::x(i) * c.im) * inv,
                    }
                })
            }
            DomainKind::CylinderOver { m, eta_s } => eta_s.clone() + Expr::norm_sq(n.max(*m)),
            DomainKind::Custom { eta, .. } => eta.clone(),
            DomainKind::Normalized { base, shift } => {
                base.eta_expr(n) + Expr::norm_sq(n) - *shift
            }
        }
    }

    /// Analytic membership for catalog kinds; finiteness of `η` otherwise.
    pub fn contains(&self, p: &[f64]) -> bool {
        let n = p.len().div_ceil(2);
        match &self.kind {
            DomainKind::Ball { center, radius } => {
                let m = n.max(center.len());
                let d2: f64 = (0..m)
                    .map(|i| (coord(p, i) - center.get(i).copied().unwrap_or_default()).norm_sqr())
                    .sum();
                d2 < radius * radius
            }
            DomainKind::Polydisc => (0..n).all(|i| coord(p, i).norm_sqr() < 1.0),
            DomainKind::Entire => p.iter().all(|v| v.is_finite()),
            DomainKind::Translated { base, shift } => base.contains(&translate(p, shift, -1.0)),
            DomainKind::Scaled { base, factors } => base.contains(&scale(p, factors, true)),
            DomainKind::CylinderOver { .. } | DomainKind::Custom { .. } => self
                .eta_expr(n.max(self.intrinsic_dim()))
                .eval(&padded(p, self.intrinsic_dim()))
                .map(|v| v.re.is_finite() && v.re.abs() <= 1e300)
                .unwrap_or(false),
            DomainKind::Normalized { base, .. } => base.contains(p),
        }
    }

    /// `η_n(p)` with `n` the number of complex coordinates in `p`.
    pub fn eval_eta(&self, p: &[f64]) -> Result<f64> {
        if !self.contains(p) {
            return Err(Error::DomainBoundary(p.to_vec()));
        }
        let dim = self.intrinsic_dim();
        let p = padded(p, dim);
        let n = p.len() / 2;
        let v = self.eta_expr(n).eval(&p).map_err(|e| Error::eval(&p, e))?;
        if !v.re.is_finite() || v.re.abs() > 1e300 {
            return Err(Error::DomainBoundary(p));
        }
        Ok(v.re)
    }

    /// Euclidean distance from `p` to the boundary. Scaling by unequal factors
    /// yields the lower bound `min |c_i| · d_base`, exact for uniform factors.
    pub fn boundary_distance(&self, p: &[f64]) -> Result<f64> {
        if let Some(rule) = &self.boundary {
            return Ok(rule(p));
        }
        if !self.contains(p) {
            return Err(Error::DomainBoundary(p.to_vec()));
        }
        match &self.kind {
            DomainKind::Ball { center, radius } => {
                let m = (p.len() / 2).max(center.len());
                let d2: f64 = (0..m)
                    .map(|i| (coord(p, i) - center.get(i).copied().unwrap_or_default()).norm_sqr())
                    .sum();
                Ok(radius - d2.sqrt())
            }
            DomainKind::Polydisc => {
                // coordinates past the point are 0, at distance 1
                Ok((0..p.len() / 2)
                    .map(|i| 1.0 - coord(p, i).norm())
                    .fold(1.0, f64::min))
            }
            DomainKind::Entire => Ok(f64::INFINITY),
            DomainKind::Translated { base, shift } => base.boundary_distance(&translate(p, shift, -1.0)),
            DomainKind::Scaled { base, factors } => {
                let min_c = factors.iter().map(|c| c.norm()).fold(1.0, f64::min);
                Ok(min_c * base.boundary_distance(&scale(p, factors, true))?)
            }
            DomainKind::Normalized { base, .. } => base.boundary_distance(p),
            DomainKind::CylinderOver { .. } | DomainKind::Custom { .. } => Err(Error::Unsupported(format!(
                "{} has no boundary-distance rule",
                self.label()
            ))),
        }
    }

    /// `d_V(z) = min{dist(z, ∂V), 1/||z||}` with `1/0 = ∞`.
    pub fn d_v(&self, p: &[f64]) -> Result<f64> {
        let b = self.boundary_distance(p)?;
        let r = point_norm(p);
        let inv = if r == 0.0 { f64::INFINITY } else { 1.0 / r };
        Ok(b.min(inv))
    }

    /// `S` is uniformly included iff `inf_S d_V > 0`.
    pub fn uniformly_included(&self, points: &[Vec<f64>]) -> Result<Inclusion> {
        let mut margin = f64::INFINITY;
        for p in points {
            margin = margin.min(self.d_v(p)?);
        }
        Ok(Inclusion {
            margin,
            included: margin > 0.0,
            points: points.len(),
        })
    }

    /// Interior points on the first `n` coordinates. `fraction < 1` shrinks
    /// the sampling region toward the center (for catalog kinds) to keep
    /// away from the boundary.
    pub fn sample_interior(&self, n: usize, count: usize, seed: u64, fraction: f64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        let mut attempts = 0usize;
        while out.len() < count && attempts < 1000 * count.max(1) {
            attempts += 1;
            let p = self.draw(&mut rng, n, fraction);
            if self.contains(&p) {
                out.push(p);
            }
        }
        out
    }

    fn draw(&self, rng: &mut ChaCha8Rng, n: usize, fraction: f64) -> Vec<f64> {
        match &self.kind {
            DomainKind::Ball { center, radius } => {
                let mut p = uniform_ball(rng, n, radius * fraction);
                for (i, c) in center.iter().enumerate().take(n) {
                    p[2 * i] += c.re;
                    p[2 * i + 1] += c.im;
                }
                p
            }
            DomainKind::Polydisc => {
                let mut p = vec![0.0; 2 * n];
                for i in 0..n {
                    let d = uniform_ball(rng, 1, fraction);
                    p[2 * i] = d[0];
                    p[2 * i + 1] = d[1];
                }
                p
            }
            DomainKind::Translated { base, shift } => {
                let mut p = translate(&base.draw(rng, n, fraction), shift, 1.0);
                p.truncate(2 * n.max(1));
                p
            }
            DomainKind::Scaled { base, factors } => {
                let mut p = scale(&base.draw(rng, n, fraction), factors, false);
                p.truncate(2 * n.max(1));
                p
            }
            DomainKind::Normalized { base, .. } => base.draw(rng, n, fraction),
            DomainKind::Entire | DomainKind::CylinderOver { .. } | DomainKind::Custom { .. } => {
                uniform_ball(rng, n, self.sampling_radius * fraction)
            }
        }
    }

    /// Max of `|η(z) - η(z')| / ||z - z'||` over `pairs` random pairs in `V_τ`.
    pub fn lipschitz_estimate(&self, tau: f64, n: usize, pairs: usize, seed: u64) -> Result<f64> {
        let pts: Vec<Vec<f64>> = self
            .sample_interior(n, 8 * pairs, seed, 1.0)
            .into_iter()
            .filter(|p| self.eval_eta(p).map(|v| v <= tau).unwrap_or(false))
            .take(2 * pairs)
            .collect();
        if pts.len() < 2 {
            return Err(Error::Resolution(format!("no points sampled in V_{tau}")));
        }
        let mut best = 0.0f64;
        for pair in pts.chunks_exact(2) {
            let d = point_norm(&pair[0].iter().zip(&pair[1]).map(|(a, b)| a - b).collect::<Vec<_>>());
            if d > 0.0 {
                let de = (self.eval_eta(&pair[0])? - self.eval_eta(&pair[1])?).abs();
                best = best.max(de / d);
            }
        }
        Ok(best)
    }

    /// Tape of the `n^2` entries `∂_i ∂̄_j η_n`, row-major.
    pub fn levi_tape(&self, n: usize) -> Compiled {
        let eta = self.eta_expr(n);
        let mut exprs = Vec::with_capacity(n * n);
        for i in 1..=n {
            let di = eta.del(i);
            for j in 1..=n {
                exprs.push(di.delbar(j));
            }
        }
        Compiled::new(&exprs)
    }

    /// The complex Hessian `[∂_i ∂̄_j η](p)`; errors if it is not Hermitian to 1e-9.
    pub fn levi_matrix(&self, tape: &Compiled, p: &[f64], n: usize) -> Result<DMatrix<C64>> {
        if !self.contains(p) {
            return Err(Error::DomainBoundary(p.to_vec()));
        }
        let p = padded(p, n.max(self.intrinsic_dim()));
        let v = tape.eval(&p).map_err(|e| Error::eval(&p, e))?;
        let h = DMatrix::from_row_slice(n, n, &v);
        let asym = max_modulus(&(&h - h.adjoint()));
        let scale = max_modulus(&h).max(1.0);
        if asym > 1e-9 * scale {
            return Err(Error::Consistency(format!(
                "complex Hessian of η not Hermitian at {p:?}: max |H - H*| = {asym:.3e}"
            )));
        }
        Ok(h)
    }

    /// Smallest eigenvalue of the Levi form on the first `n` coordinates.
    pub fn levi_min_eig(&self, p: &[f64], n: usize) -> Result<f64> {
        self.levi_min_eig_with(&self.levi_tape(n), p, n)
    }

    pub fn levi_min_eig_with(&self, tape: &Compiled, p: &[f64], n: usize) -> Result<f64> {
        let h = self.levi_matrix(tape, p, n)?;
        let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(h);
        Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
    }

    /// `η ↦ η + ||z||^2 - m`, with `m` the sampled infimum of `η` over
    /// `samples` interior points of the first `n` coordinates, lowered by
    /// `0.1 max(|inf|, 1)`.
    ///
    /// Sampling `V` rather than `V_0` gives the same infimum whenever `V_0`
    /// is nonempty, and still a valid shift when it is empty (e.g. the
    /// polydisc, where `η >= 1`).
    pub fn normalize_eta(&self, n: usize, samples: usize, seed: u64) -> Result<Domain> {
        let pts = self.sample_interior(n, samples, seed, 1.0);
        let mut inf = f64::INFINITY;
        for p in &pts {
            if let Ok(v) = self.eval_eta(p) {
                inf = inf.min(v);
            }
        }
        // the center is the natural minimizer of the catalog kinds
        if let Ok(v) = self.eval_eta(&self.center_point(n)) {
            inf = inf.min(v);
        }
        if !inf.is_finite() {
            return Err(Error::Resolution("no interior sample to estimate inf η".into()));
        }
        let shift = inf - 0.1 * inf.abs().max(1.0);
        let mut d = Domain::from_kind(DomainKind::Normalized {
            base: Box::new(self.clone()),
            shift,
        });
        d.boundary = self.boundary.clone();
        d.sampling_radius = self.sampling_radius;
        Ok(d)
    }

    fn center_point(&self, n: usize) -> Vec<f64> {
        match &self.kind {
            DomainKind::Ball { center, .. } => {
                let mut p = vec![0.0; 2 * n];
                for (i, c) in center.iter().enumerate().take(n) {
                    set_coord(&mut p, i, *c);
                }
                p
            }
            DomainKind::Translated { base, shift } => translate(&base.center_point(n), shift, 1.0),
            DomainKind::Scaled { base, factors } => scale(&base.center_point(n), factors, false),
            DomainKind::Normalized { base, .. } => base.center_point(n),
            _ => vec![0.0; 2 * n],
        }
    }
}

pub(crate) fn max_modulus(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn padded(p: &[f64], dim: usize) -> Vec<f64> {
    let mut v = p.to_vec();
    if v.len() < 2 * dim {
        v.resize(2 * dim, 0.0);
    }
    if v.len() % 2 == 1 {
        v.push(0.0);
    }
    v
}

fn translate(p: &[f64], shift: &[C64], sign: f64) -> Vec<f64> {
    let mut out = p.to_vec();
    for (i, c) in shift.iter().enumerate() {
        let v = coord(&out, i) + c * sign;
        set_coord(&mut out, i, v);
    }
    out
}

fn scale(p: &[f64], factors: &[C64], inverse: bool) -> Vec<f64> {
    let mut out = p.to_vec();
    for (i, c) in factors.iter().enumerate() {
        let z = coord(&out, i);
        set_coord(&mut out, i, if inverse { z / c } else { z * c });
    }
    out
}

fn uniform_ball(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..2 * n).map(|_| rng.sample(StandardNormal)).collect();
    let norm = point_norm(&v).max(1e-300);
    let u: f64 = rng.random();
    let rad = r * u.powf(1.0 / (2 * n).max(1) as f64);
    for x in &mut v {
        *x *= rad / norm;
    }
    v
}

/// Config form of a domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    Ball {
        #[serde(default)]
        center: Vec<C64>,
        #[serde(default = "one")]
        radius: f64,
    },
    Polydisc,
    Entire,
    Translated { base: Box<DomainSpec>, shift: Vec<C64> },
    Scaled { base: Box<DomainSpec>, factors: Vec<C64> },
    CylinderOver { m: usize, eta: String },
    Custom {
        eta: String,
        #[serde(default = "one")]
        sampling_radius: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl DomainSpec {
    pub fn build(&self) -> Result<Domain> {
        Ok(match self {
            DomainSpec::Ball { center, radius } => Domain::ball(center.clone(), *radius)?,
            DomainSpec::Polydisc => Domain::polydisc(),
            DomainSpec::Entire => Domain::entire(),
            DomainSpec::Translated { base, shift } => base.build()?.translated(shift.clone()),
            DomainSpec::Scaled { base, factors } => base.build()?.scaled(factors.clone())?,
            DomainSpec::CylinderOver { m, eta } => Domain::cylinder_over(*m, parse(eta)?)?,
            DomainSpec::Custom { eta, sampling_radius } => {
                Domain::custom(eta.clone(), parse(eta)?).with_sampling_radius(*sampling_radius)
            }
        })
    }
}
