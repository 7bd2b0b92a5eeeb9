use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use dbarl2_core::weights::{weight_for_target, MajorantKind, TargetWeightOptions};
use dbarl2_core::{
    parse, CylinderFn, Domain, DomainSpec, Expr, Form, FormEntry, GaussianSpec, OperatorContext, Quadrature,
    WeightFamily, WeightTriple,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trunc_dim")]
    pub trunc_dim: usize,
    /// Leading Gaussian scales; the rest default to `2^{-(i+1)}`.
    #[serde(default)]
    pub scales: Vec<f64>,
    #[serde(default = "default_quadrature")]
    pub quadrature: Quadrature,
    #[serde(default = "default_domain")]
    pub domain: DomainSpec,
    #[serde(default)]
    pub weights: WeightRecipe,
    #[serde(default)]
    pub family: FamilySpec,
    #[serde(default)]
    pub forms: Vec<FormSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub identities: IdentitiesConfig,
    #[serde(default)]
    pub conditions: ConditionsConfig,
    #[serde(default)]
    pub domains: DomainsConfig,
    #[serde(default)]
    pub approx: ApproxConfig,
    #[serde(default)]
    pub solve: SolveConfig,
    #[serde(default)]
    pub majorant: MajorantConfig,
}

fn default_trunc_dim() -> usize {
    2
}

fn default_quadrature() -> Quadrature {
    Quadrature::MonteCarlo {
        samples: 100_000,
        seed: 0,
    }
}

fn default_domain() -> DomainSpec {
    DomainSpec::Ball {
        center: Vec::new(),
        radius: 1.0,
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightRecipe {
    /// `w1 = w2 = w3 = 0`.
    #[default]
    Flat,
    /// `(φ-2ψ, φ-ψ, φ)` from explicit expressions.
    Explicit {
        phi: String,
        #[serde(default = "zero_expr")]
        psi: String,
    },
    /// Weights adapted to the first form literal on the configured domain.
    Target {
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_j_max")]
        j_max: usize,
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default = "default_measure_samples")]
        measure_samples: usize,
        #[serde(default)]
        majorant: MajorantKind,
    },
}

fn zero_expr() -> String {
    "0".into()
}

fn default_n() -> usize {
    2
}

fn default_j_max() -> usize {
    2
}

fn default_samples() -> usize {
    4000
}

fn default_measure_samples() -> usize {
    10_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    Constant { value: f64 },
    /// `c_{I,J} = ratio^{|J|}`.
    Geometric { ratio: f64 },
    /// `2^{|I|+|J|} Π a_i^2 Π a_j^2` from the Gaussian scales.
    GaussianScaled,
}

impl Default for FamilySpec {
    fn default() -> Self {
        FamilySpec::Constant { value: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormSpec {
    pub s: usize,
    pub t: usize,
    #[serde(default)]
    pub entries: Vec<FormEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Deterministic quadrature identities.
    pub deterministic: f64,
    /// Pointwise symbolic identities.
    pub pointwise: f64,
    /// Levi-form eigenvalues.
    pub levi: f64,
    /// Relative slack in norm bounds.
    pub bound: f64,
    /// Majorant grid audits.
    pub majorant: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            deterministic: 1e-8,
            pointwise: 1e-10,
            levi: 1e-9,
            bound: 1e-6,
            majorant: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentitiesConfig {
    /// Multiplies `a_m` on the right side of Gauss–Green (1 keeps the identity).
    pub gauss_green_scale_factor: f64,
    /// Second function in the integration-by-parts pairs.
    pub partner: String,
    /// `φ` of the σ-variant and the commutator.
    pub varphi: String,
    pub multiplier: String,
    /// Test function of the weak-∂̄ identity, cut off at `test_radius`.
    pub test: String,
    pub test_radius: f64,
    pub points: usize,
}

impl Default for IdentitiesConfig {
    fn default() -> Self {
        IdentitiesConfig {
            gauss_green_scale_factor: 1.0,
            partner: "1 + zb(1) + x(1)*y(1)".into(),
            varphi: "x(1)^2 + 2*y(1)^2".into(),
            multiplier: "exp(x(1)) * (1 + zb(1))".into(),
            test: "1 + z(1)".into(),
            test_radius: 2.0,
            points: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditionsConfig {
    pub max_index: usize,
    pub degrees: Vec<(usize, usize)>,
    pub audit_points: usize,
}

impl Default for ConditionsConfig {
    fn default() -> Self {
        ConditionsConfig {
            max_index: 6,
            degrees: vec![(0, 0), (0, 1), (1, 0)],
            audit_points: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainsConfig {
    pub n: usize,
    pub samples: usize,
    /// Sub-level sets `V_k` audited for uniform inclusion.
    pub levels: Vec<f64>,
}

impl Default for DomainsConfig {
    fn default() -> Self {
        DomainsConfig {
            n: 2,
            samples: 500,
            levels: vec![1.0, 2.0, 3.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApproxConfig {
    pub rho: f64,
    pub grid_res: usize,
    /// `(n, δ)` pairs, in order.
    pub ladder: Vec<(usize, f64)>,
    /// Gauss–Hermite nodes per axis for the ladder norms.
    pub nodes: usize,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        ApproxConfig {
            rho: 2.0,
            grid_res: 161,
            ladder: vec![(1, 0.2), (1, 0.1), (1, 0.05)],
            nodes: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    /// Domain of the solve; independent of the top-level domain.
    pub domain: DomainSpec,
    /// `φ` with `w1 = w2 = w3 = φ` during the solve and in the bound checks.
    pub phi: String,
    /// Lower bound for the Levi form of `φ` used by the weighted estimate.
    pub levi_lower: f64,
    pub n: usize,
    pub degree: usize,
    pub nodes: usize,
    /// Manufactured solution `u0`; `f = ∂̄(u0 · bump(|z|^2/R^2))`. Without it the
    /// first form literal with `t >= 1` is the right-hand side.
    pub manufactured: Option<String>,
    pub manufactured_radius: f64,
    pub residual_tol: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            domain: DomainSpec::Entire,
            phi: "4*(x(1)^2 + y(1)^2)".into(),
            levi_lower: 1.0,
            n: 1,
            degree: 8,
            nodes: 14,
            manufactured: Some("1 + x(1) - y(1)^2".into()),
            manufactured_radius: 2.0,
            residual_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MajorantConfig {
    /// `g0` as expressions in `x(1)`.
    pub fixtures: Vec<String>,
    pub x_max: f64,
    pub grid: usize,
    /// `(x1, x2)` of the `C^2` majorant.
    pub calculus_knots: (f64, f64),
    pub cutoff_levels: Vec<usize>,
}

impl Default for MajorantConfig {
    fn default() -> Self {
        MajorantConfig {
            fixtures: vec!["1".into(), "1 + x(1)^3".into(), "exp(x(1))".into()],
            x_max: 10.0,
            grid: 1001,
            calculus_knots: (1.0, 2.0),
            cutoff_levels: vec![1, 2, 3],
        }
    }
}

/// A configuration with every expression parsed and every object built.
pub struct Built {
    pub config: ExperimentConfig,
    pub spec: GaussianSpec,
    pub domain: Domain,
    pub family: WeightFamily,
    pub forms: Vec<Form>,
    pub weights: Option<WeightTriple>,
    /// Domain the weights live on (normalized for the target recipe).
    pub weight_domain: Domain,
    pub ctx: OperatorContext,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn family(&self) -> Result<WeightFamily> {
        Ok(match &self.family {
            FamilySpec::Constant { value } => WeightFamily::constant(*value)?,
            FamilySpec::Geometric { ratio } => {
                if ratio.is_nan() || *ratio <= 0.0 {
                    bail!("geometric family ratio {ratio} is not positive");
                }
                let r = *ratio;
                WeightFamily::multiplicative(format!("{r}^|J|"), |_| 1.0, move |_| r)
            }
            FamilySpec::GaussianScaled => {
                let spec = self.spec();
                WeightFamily::gaussian_scaled(move |i| spec.a(i))
            }
        })
    }

    pub fn spec(&self) -> GaussianSpec {
        GaussianSpec {
            scales: self.scales.clone(),
            trunc_dim: self.trunc_dim,
        }
    }

    /// Parse and build everything, checking dimensions.
    pub fn build(self) -> Result<Built> {
        let spec = self.spec();
        spec.validate()?;
        let domain = self.domain.build()?;
        let family = self.family()?;
        let mut forms = Vec::with_capacity(self.forms.len());
        for (k, f) in self.forms.iter().enumerate() {
            let form = Form::from_entries(f.s, f.t, &f.entries, family.clone())
                .with_context(|| format!("form {k}"))?;
            if form.dim() > self.trunc_dim {
                bail!("form {k} depends on {} coordinates but trunc_dim is {}", form.dim(), self.trunc_dim);
            }
            forms.push(form);
        }
        for (name, text) in [
            ("identities.partner", &self.identities.partner),
            ("identities.varphi", &self.identities.varphi),
            ("identities.multiplier", &self.identities.multiplier),
            ("identities.test", &self.identities.test),
        ] {
            let e = parse(text).with_context(|| name.to_string())?;
            if e.max_index() > self.trunc_dim {
                bail!("{name} depends on coordinate {} > trunc_dim {}", e.max_index(), self.trunc_dim);
            }
        }
        for (k, g) in self.majorant.fixtures.iter().enumerate() {
            let e = parse(g).with_context(|| format!("majorant fixture {k}"))?;
            if e.max_index() > 1 {
                bail!("majorant fixture {k} must be a function of x(1) only");
            }
        }
        if let Some(u0) = &self.solve.manufactured {
            parse(u0).context("solve.manufactured")?;
        }
        parse(&self.solve.phi).context("solve.phi")?;
        self.solve.domain.build().context("solve.domain")?;
        let (x1, x2) = self.majorant.calculus_knots;
        if !(0.0 < x1 && x1 < x2) {
            bail!("majorant.calculus_knots must satisfy 0 < x1 < x2");
        }

        let (weights, weight_domain) = match &self.weights {
            WeightRecipe::Flat => (None, domain.clone()),
            WeightRecipe::Explicit { phi, psi } => {
                let w = WeightTriple::new(CylinderFn::parse(phi)?, CylinderFn::parse(psi)?);
                (Some(w), domain.clone())
            }
            WeightRecipe::Target {
                n,
                j_max,
                samples,
                measure_samples,
                majorant,
            } => {
                let Some(target) = forms.first() else {
                    bail!("the target weight recipe needs at least one form literal");
                };
                let opts = TargetWeightOptions {
                    n: *n,
                    j_max: *j_max,
                    samples: *samples,
                    measure_samples: *measure_samples,
                    seed: self.seed,
                    majorant: *majorant,
                };
                let tw = weight_for_target(target, &domain, &spec, &opts)?;
                (Some(tw.weights), tw.domain)
            }
        };
        let varphi = CylinderFn::parse(&self.identities.varphi)?;
        let mut ctx = OperatorContext::flat(spec.clone(), family.clone()).with_varphi(varphi);
        if let Some(w) = &weights {
            ctx = ctx.with_weights(w.w1.clone(), w.w2.clone(), w.w3.clone());
        }
        Ok(Built {
            config: self,
            spec,
            domain,
            family,
            forms,
            weights,
            weight_domain,
            ctx,
        })
    }
}

impl Built {
    pub fn quadrature(&self, seed: u64) -> Quadrature {
        match self.config.quadrature {
            Quadrature::MonteCarlo { samples, .. } => Quadrature::MonteCarlo { samples, seed },
            q => q,
        }
    }

    pub fn expr(&self, text: &str) -> Expr {
        parse(text).expect("validated at build time")
    }
}
