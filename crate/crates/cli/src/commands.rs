use std::time::Instant;

use anyhow::Result;
use rayon::prelude::*;

use dbarl2_core::dbarops::{
    adjoint_residual, commutator_residual, dbar, dbar_dbar_residual, ibp_residual, multiplier_residual,
    weak_dbar_residual, IbpVariant,
};
use dbarl2_core::gaussmeasure::{gauss_green_residual_with_scale, sample};
use dbarl2_core::multiindex::check_conditions;
use dbarl2_core::reduction::{approx_ladder, Mollifier, PipelineOptions};
use dbarl2_core::solver::{
    cauchy_dbar_residual, hormander_bound_check, solve_min_norm, weighted_bound_check, BoundReport, CauchyTransform,
};
use dbarl2_core::symfun::RealFn;
use dbarl2_core::weights::{check_cond4, CalculusG, ConvexMajorant, CubicCutoff};
use dbarl2_core::{
    CheckRecord, CylinderFn, Expr, Form, GaussianSpec, MultiIndex, OperatorContext, Quadrature, SolveProblem,
    WeightTriple,
};

use crate::config::Built;

/// A file written next to the report.
pub struct Artifact {
    pub name: String,
    pub contents: Vec<u8>,
}

pub struct Outcome {
    pub records: Vec<CheckRecord>,
    pub artifacts: Vec<Artifact>,
}

type CheckFn<'a> = Box<dyn Fn(u64) -> anyhow::Result<Vec<CheckRecord>> + Send + Sync + 'a>;

struct Check<'a> {
    id: String,
    run: CheckFn<'a>,
}

impl<'a> Check<'a> {
    fn new(id: impl Into<String>, run: impl Fn(u64) -> anyhow::Result<Vec<CheckRecord>> + Send + Sync + 'a) -> Self {
        Check {
            id: id.into(),
            run: Box::new(run),
        }
    }

    fn single(id: impl Into<String>, run: impl Fn(&str, u64) -> anyhow::Result<CheckRecord> + Send + Sync + 'a) -> Self {
        let id = id.into();
        let name = id.clone();
        Check::new(id, move |seed| Ok(vec![run(&name, seed)?]))
    }
}

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the `k`-th declared check.
pub fn check_seed(seed: u64, k: usize) -> u64 {
    mix(seed ^ mix(k as u64))
}

/// Run checks in parallel; records come back in declaration order.
fn run_checks(checks: Vec<Check<'_>>, seed: u64) -> Vec<CheckRecord> {
    checks
        .into_par_iter()
        .enumerate()
        .map(|(k, c)| {
            let start = Instant::now();
            let mut records = match (c.run)(check_seed(seed, k)) {
                Ok(r) => r,
                Err(e) => vec![CheckRecord::failed(&c.id, format!("{e:#}"))],
            };
            let ms = start.elapsed().as_millis() as u64;
            for r in &mut records {
                r.runtime_ms = ms;
            }
            records
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

fn key_label(i: &MultiIndex, j: &MultiIndex) -> String {
    format!("{i}{j}")
}

fn bound_record(id: &str, r: &BoundReport) -> CheckRecord {
    let mut rec = CheckRecord::statistical(id, r.lhs, r.rhs, r.margin, r.stderr);
    rec.pass = r.pass;
    rec
}

fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![lo];
    }
    (0..count).map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64).collect()
}

// ---------------------------------------------------------------------------
// identities

pub fn identities(b: &Built) -> Result<Outcome> {
    let cfg = &b.config.identities;
    let tol = &b.config.tolerances;
    let spec = &b.spec;
    let partner = CylinderFn::new(b.expr(&cfg.partner));
    let varphi = b.expr(&cfg.varphi);
    let multiplier = b.expr(&cfg.multiplier);
    let test = CylinderFn::with_cutoff(b.expr(&cfg.test), spec.trunc_dim, cfg.test_radius);
    let mut checks = Vec::new();

    for (k, form) in b.forms.iter().enumerate() {
        let prefix = format!("identities/form{k}");
        for ((i, j), c) in form.iter() {
            let key = key_label(i, j);
            for m in 1..=spec.trunc_dim {
                let c = c.clone();
                checks.push(Check::single(format!("{prefix}/gauss_green/{key}/x{m}"), move |id, seed| {
                    let a = spec.a(m) * cfg.gauss_green_scale_factor;
                    let r = gauss_green_residual_with_scale(&c, m, spec, &b.quadrature(seed), a)?;
                    Ok(CheckRecord::paired(id, &r, tol.deterministic))
                }));
            }
            for m in 1..=spec.trunc_dim {
                for (name, variant) in [("ibp_delta", IbpVariant::Delta), ("ibp_sigma", IbpVariant::Sigma(varphi.clone()))] {
                    let (c, g) = (c.clone(), partner.clone());
                    checks.push(Check::single(format!("{prefix}/{name}/{key}/z{m}"), move |id, seed| {
                        let r = ibp_residual(&c, &g, m, spec, &b.quadrature(seed), &variant)?;
                        Ok(CheckRecord::paired(id, &r, tol.deterministic))
                    }));
                }
            }
            for i1 in 1..=spec.trunc_dim {
                for j1 in 1..=spec.trunc_dim {
                    let h = c.expr.clone();
                    checks.push(Check::single(format!("{prefix}/commutator/{key}/{i1}{j1}"), move |id, seed| {
                        let pts = sample(spec, cfg.points, seed);
                        let r = commutator_residual(&h, i1, j1, &b.ctx, &pts)?;
                        Ok(CheckRecord::residual(id, r, tol.pointwise))
                    }));
                }
            }
        }
        checks.push(Check::single(format!("{prefix}/adjoint"), move |id, seed| {
            let f = dbar(form);
            let r = adjoint_residual(form, &f, &b.ctx, &b.quadrature(seed))?;
            Ok(CheckRecord::paired(id, &r, tol.deterministic))
        }));
        checks.push(Check::single(format!("{prefix}/dbar_dbar"), move |id, seed| {
            let pts = sample(spec, cfg.points, seed);
            Ok(CheckRecord::residual(id, dbar_dbar_residual(form, &pts)?, tol.pointwise))
        }));
        let m = multiplier.clone();
        checks.push(Check::single(format!("{prefix}/multiplier"), move |id, seed| {
            let pts = sample(spec, cfg.points, seed);
            Ok(CheckRecord::residual(id, multiplier_residual(&m, form, &pts)?, tol.pointwise))
        }));
        let test = test.clone();
        let prefix_w = format!("{prefix}/weak_dbar");
        checks.push(Check::new(prefix_w.clone(), move |seed| {
            let g = dbar(form);
            let quad = b.quadrature(seed);
            let mut out = Vec::new();
            for ((i, kk), _) in g.iter() {
                let r = weak_dbar_residual(form, &g, &test, i, kk, spec, &quad)?;
                out.push(CheckRecord::paired(format!("{prefix_w}/{}", key_label(i, kk)), &r, tol.deterministic));
            }
            Ok(out)
        }));
    }
    Ok(Outcome {
        records: run_checks(checks, b.config.seed),
        artifacts: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// conditions

pub fn conditions(b: &Built) -> Result<Outcome> {
    let cfg = &b.config.conditions;
    let mut checks = Vec::new();
    for &(s, t) in &cfg.degrees {
        checks.push(Check::new(format!("conditions/s{s}t{t}"), move |_| {
            let r = check_conditions(&b.family, cfg.max_index.max(s + t + 2), s, t)?;
            let p = format!("conditions/s{s}t{t}");
            let finite = r.c1_sup.is_finite();
            let mut c1 = CheckRecord::deterministic(format!("{p}/c1_finite"), r.c1_sup, 0.0, if finite { 0.0 } else { -1.0 }, 0.0);
            c1.pass = finite;
            let mut c0 = CheckRecord::deterministic(format!("{p}/c0_positive"), r.c0_inf, 0.0, r.c0_inf, 0.0);
            c0.pass = r.c0_inf > 0.0;
            let mut mult = CheckRecord::deterministic(
                format!("{p}/multiplicative"),
                r.violations.len() as f64,
                0.0,
                -(r.violations.len() as f64),
                0.0,
            );
            mult.pass = r.multiplicative_ok;
            Ok(vec![
                c1.with_detail(r.note),
                c0.with_detail(format!("enumerated over indices <= {}", r.max_index)),
                mult,
            ])
        }));
    }
    if let Some(w) = &b.weights {
        checks.push(Check::single("conditions/cond4", move |id, seed| {
            let n = b.spec.trunc_dim;
            let pts = b.weight_domain.sample_interior(n, cfg.audit_points, seed, 1.0);
            let r = check_cond4(&w.phi.expr, &w.psi.expr, &b.weight_domain, n, &pts)?;
            Ok(CheckRecord::deterministic(id, r.margin, 0.0, r.margin, b.config.tolerances.levi)
                .with_detail(format!("max bound {:.6e} over {} points", r.max_bound, r.points)))
        }));
        checks.push(Check::single("conditions/weight_identities", move |id, seed| {
            let n = b.spec.trunc_dim;
            let pts = b.weight_domain.sample_interior(n, cfg.audit_points, seed, 1.0);
            let scale = pts
                .iter()
                .map(|p| w.phi.expr.eval(p).map(|v| v.norm()).unwrap_or(0.0))
                .fold(1.0, f64::max);
            let r = w.identity_residual(&pts)?;
            Ok(CheckRecord::residual(id, r, 1e-12 * scale))
        }));
    }
    Ok(Outcome {
        records: run_checks(checks, b.config.seed),
        artifacts: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// domains

pub fn domains(b: &Built) -> Result<Outcome> {
    let cfg = &b.config.domains;
    let n = cfg.n;
    let domain = &b.domain;
    let seed = check_seed(b.config.seed, usize::MAX);
    let points = domain.sample_interior(n, cfg.samples, seed, 1.0);

    // the Levi scan is kept out of `run_checks` because it also feeds levi.csv
    let tape = domain.levi_tape(n);
    let eigs: Vec<Result<f64, String>> = points
        .par_iter()
        .map(|p| domain.levi_min_eig_with(&tape, p, n).map_err(|e| e.to_string()))
        .collect();
    let mut csv = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (1..=n).flat_map(|i| [format!("x{i}"), format!("y{i}")]).collect();
    header.push("levi_min_eig".into());
    csv.write_record(&header)?;
    let mut worst = f64::INFINITY;
    let mut error = None;
    for (p, e) in points.iter().zip(&eigs) {
        let mut row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        match e {
            Ok(v) => {
                worst = worst.min(*v);
                row.push(v.to_string());
            }
            Err(msg) => {
                error.get_or_insert_with(|| msg.clone());
                row.push("NaN".into());
            }
        }
        csv.write_record(&row)?;
    }
    let levi = match error {
        Some(msg) => CheckRecord::failed("domains/levi_min_eig", msg),
        None if points.is_empty() => CheckRecord::failed("domains/levi_min_eig", "no interior points sampled"),
        None => CheckRecord::deterministic("domains/levi_min_eig", worst, 0.0, worst, b.config.tolerances.levi),
    };

    let mut checks = Vec::new();
    for &level in &cfg.levels {
        let pts = &points;
        checks.push(Check::single(format!("domains/inclusion/V{level}"), move |id, _| {
            let sub: Vec<Vec<f64>> = pts
                .iter()
                .filter(|p| domain.eval_eta(p).map(|e| e < level).unwrap_or(false))
                .cloned()
                .collect();
            let inc = domain.uniformly_included(&sub)?;
            let mut r = CheckRecord::deterministic(id, inc.margin, 0.0, inc.margin, 0.0);
            r.pass = inc.included;
            Ok(r.with_detail(format!("{} points", inc.points)))
        }));
        checks.push(Check::single(format!("domains/lipschitz/V{level}"), move |id, seed| {
            let l = domain.lipschitz_estimate(level, n, 200, seed)?;
            let mut r = CheckRecord::deterministic(id, l, 0.0, 0.0, 0.0);
            r.pass = l.is_finite();
            Ok(r)
        }));
    }
    let mut records = vec![levi];
    records.extend(run_checks(checks, b.config.seed));
    Ok(Outcome {
        records,
        artifacts: vec![Artifact {
            name: "levi.csv".into(),
            contents: csv.into_inner()?,
        }],
    })
}

// ---------------------------------------------------------------------------
// approx

pub fn approx(b: &Built) -> Result<Outcome> {
    let cfg = &b.config.approx;
    let quad = Quadrature::GaussHermite { nodes: cfg.nodes };
    let base = PipelineOptions {
        rho: cfg.rho,
        n: 1,
        delta: 1.0,
        grid_res: cfg.grid_res,
        audit_points: 200,
        seed: b.config.seed,
    };
    let mut checks = Vec::new();
    let mut seen = Vec::new();
    for &(n, delta) in &cfg.ladder {
        if seen.contains(&(n, delta.to_bits())) {
            continue;
        }
        seen.push((n, delta.to_bits()));
        checks.push(Check::single(format!("approx/mollifier_mass/n{n}/d{delta}"), move |id, _| {
            let m = Mollifier::new(n, delta)?;
            let mass = m.grid_mass(if n == 1 { 400 } else { 48 });
            Ok(CheckRecord::deterministic(id, mass, 1.0, -(mass - 1.0).abs(), 1e-6))
        }));
    }
    let mut records = run_checks(checks, b.config.seed);

    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record(["form", "n", "delta", "norm_error", "stderr"])?;
    let ladders: Vec<_> = b
        .forms
        .par_iter()
        .map(|f| approx_ladder(f, &b.domain, &b.ctx.w1.expr, &b.spec, &quad, &base, &cfg.ladder))
        .collect();
    for (k, rows) in ladders.into_iter().enumerate() {
        let rows = match rows {
            Ok(r) => r,
            Err(e) => {
                records.push(CheckRecord::failed(format!("approx/form{k}/ladder"), e.to_string()));
                continue;
            }
        };
        for r in &rows {
            csv.serialize((k, r.n, r.delta, r.norm_error, r.stderr))?;
        }
        for (step, pair) in rows.windows(2).enumerate() {
            let (prev, cur) = (&pair[0], &pair[1]);
            let id = format!("approx/form{k}/monotone/{step}");
            let margin = prev.norm_error - cur.norm_error;
            let stderr = (prev.stderr.powi(2) + cur.stderr.powi(2)).sqrt();
            records.push(if quad.is_deterministic() {
                CheckRecord::deterministic(id, cur.norm_error, prev.norm_error, margin, 1e-12 * prev.norm_error.max(1.0))
            } else {
                CheckRecord::statistical(id, cur.norm_error, prev.norm_error, margin, stderr)
            });
        }
    }
    Ok(Outcome {
        records,
        artifacts: vec![Artifact {
            name: "ladder.csv".into(),
            contents: csv.into_inner()?,
        }],
    })
}

// ---------------------------------------------------------------------------
// solve

pub fn solve(b: &Built) -> Result<Outcome> {
    let cfg = &b.config.solve;
    let tol = &b.config.tolerances;
    let n = cfg.n;
    let spec = GaussianSpec {
        scales: b.spec.scales.clone(),
        trunc_dim: n,
    };
    let domain = cfg.domain.build()?;
    let phi = CylinderFn::new(b.expr(&cfg.phi));
    let weights = WeightTriple::new(phi.clone(), CylinderFn::new(Expr::zero()));
    let ctx = OperatorContext::flat(spec.clone(), b.family.clone()).with_weights(
        weights.w1.clone(),
        weights.w2.clone(),
        weights.w3.clone(),
    );
    let f = match &cfg.manufactured {
        Some(u0) => {
            let u0 = CylinderFn::with_cutoff(b.expr(u0), n, cfg.manufactured_radius);
            dbar(&Form::function(u0, b.family.clone()))
        }
        None => match b.forms.iter().find(|f| f.degree().1 >= 1) {
            Some(f) => f.clone(),
            None => {
                return Ok(Outcome {
                    records: Vec::new(),
                    artifacts: Vec::new(),
                })
            }
        },
    };
    let mut problem = SolveProblem::new(ctx.clone(), domain.clone(), f.clone(), n, cfg.degree);
    problem.nodes = cfg.nodes;
    problem.seed = b.config.seed;
    problem.bound_tol = tol.bound;
    let quad = Quadrature::GaussHermite { nodes: cfg.nodes };

    let (u, rep) = match solve_min_norm(&problem) {
        Ok(v) => v,
        Err(e) => {
            return Ok(Outcome {
                records: vec![CheckRecord::failed("solve/solve", e.to_string())],
                artifacts: Vec::new(),
            })
        }
    };
    let mut records = vec![
        CheckRecord::deterministic("solve/residual", rep.residual, cfg.residual_tol, cfg.residual_tol - rep.residual, 0.0),
        {
            let lhs = rep.c0.sqrt() * rep.norm_u_w1;
            let rhs = rep.norm_f_w2 * (1.0 + tol.bound);
            let mut r = CheckRecord::deterministic("solve/norm_bound", lhs, rhs, rhs - lhs, 0.0);
            r.pass = rep.bound_pass;
            r
        },
        CheckRecord::residual("solve/minimality", rep.kernel_gram_residual, 1e-8)
            .with_detail(format!("kernel dimension {}", rep.kernel_dim)),
    ];

    let audit = domain.sample_interior(n, 50, check_seed(b.config.seed, 0), 1.0);
    let (u, f, ctx, audit, quad, domain) = (&u, &f, &ctx, &audit, &quad, &domain);
    let mut checks = vec![
        Check::single("solve/weighted_bound", move |id, _| {
            let c = Expr::real(cfg.levi_lower);
            let r = weighted_bound_check(u, f, ctx, &phi.expr, &c, n, audit, quad, tol.bound)?;
            Ok(bound_record(id, &r))
        }),
        Check::single("solve/hormander_bound", move |id, _| {
            let r = hormander_bound_check(u, f, ctx, &ctx.w1.expr, domain, n, audit, quad, tol.bound)?;
            Ok(bound_record(id, &r))
        }),
    ];
    let single = f.degree() == (0, 1) && n == 1 && f.len() == 1;
    if single {
        checks.push(Check::new("solve/cauchy", move |_| {
            let f1 = f.iter().next().expect("one coefficient").1.clone();
            let radius = f1.support_radius.unwrap_or(1.0);
            let uc = CauchyTransform::new(&f1, 24, 8, 192)?.into_cylinder();
            let res = cauchy_dbar_residual(&uc, &f1.expr, 0.75 * radius, 9, 1e-3)?;
            let uc_form = Form::function(uc, f.family().clone());
            let nc = uc_form.norm_sq(&ctx.w1.expr, &ctx.spec, quad)?.mean.re.max(0.0).sqrt();
            let rhs = nc * (1.0 + 1e-3);
            Ok(vec![
                CheckRecord::residual("solve/cauchy/dbar_residual", res, 1e-4),
                CheckRecord::deterministic("solve/cauchy/norm_not_smaller", rep.norm_u_w1, rhs, rhs - rep.norm_u_w1, 0.0),
            ])
        }));
    }
    records.extend(run_checks(checks, b.config.seed));
    let json = serde_json::to_vec_pretty(&rep)?;
    Ok(Outcome {
        records,
        artifacts: vec![Artifact {
            name: "solve.json".into(),
            contents: json,
        }],
    })
}

// ---------------------------------------------------------------------------
// majorant

pub fn majorant(b: &Built) -> Result<Outcome> {
    let cfg = &b.config.majorant;
    let tol = b.config.tolerances.majorant;
    let grid = linspace(0.0, cfg.x_max, cfg.grid);
    let mut checks = Vec::new();
    for (k, text) in cfg.fixtures.iter().enumerate() {
        let tape = b.expr(text).compile();
        let grid = grid.clone();
        checks.push(Check::new(format!("majorant/g0_{k}"), move |_| {
            let g0 = |x: f64| tape.eval1(&[x, 0.0]).map(|v| v.re).unwrap_or(f64::NAN);
            let p = format!("majorant/g0_{k}");
            let g = ConvexMajorant::build(&g0, cfg.x_max, None)?;
            let worst = g.audit(&g0, &grid);
            let convex = CheckRecord::deterministic(format!("{p}/convex_majorant"), worst, 0.0, -worst, tol)
                .with_detail(format!("order {}, tail bound {:.3e}", g.order, g.tail_bound));
            let a_margin = g
                .a
                .iter()
                .enumerate()
                .skip(1)
                .map(|(l, a)| a - 1.0 / l as f64)
                .fold(f64::INFINITY, f64::min);
            let a_rec = CheckRecord::deterministic(format!("{p}/a_l_lower_bound"), a_margin, 0.0, a_margin, 0.0);

            // g vanishing on [0, x2], nondecreasing past it
            let (x1, x2) = cfg.calculus_knots;
            let base = g0(x2);
            let shifted = |x: f64| if x <= x2 { 0.0 } else { (g0(x) - base).max(0.0) };
            let big = CalculusG::build(&shifted, x1, x2, cfg.x_max)?;
            let mut worst_g = f64::NEG_INFINITY;
            for &x in &grid {
                let target = shifted(x);
                let scale = target.abs().max(1.0);
                worst_g = worst_g
                    .max((target - big.eval(0, x)) / scale)
                    .max((target - big.eval(1, x)) / scale)
                    .max(-big.eval(2, x) / big.eval(1, x).abs().max(1.0));
                if x <= x1 {
                    worst_g = worst_g.max(big.eval(0, x).abs());
                }
            }
            let calc = CheckRecord::deterministic(format!("{p}/calculus_g"), worst_g, 0.0, -worst_g, tol);
            Ok(vec![convex, a_rec, calc])
        }));
    }
    for &level in &cfg.cutoff_levels {
        checks.push(Check::new(format!("majorant/cutoff_h{level}"), move |_| {
            let h = CubicCutoff { k: level as f64 };
            let k = level as f64;
            let p = format!("majorant/cutoff_h{level}");
            let ends = (h.eval(0, k) - 1.0).abs() + h.eval(0, k + 1.0).abs() + h.eval(1, k).abs() + h.eval(1, k + 1.0).abs();
            let slope = linspace(k, k + 1.0, 10_001)
                .into_iter()
                .map(|t| h.eval(1, t).abs())
                .fold(0.0, f64::max);
            Ok(vec![
                CheckRecord::residual(format!("{p}/endpoints"), ends, 0.0),
                CheckRecord::deterministic(format!("{p}/max_slope"), slope, 1.5, -(slope - 1.5).abs(), 1e-9),
            ])
        }));
    }
    Ok(Outcome {
        records: run_checks(checks, b.config.seed),
        artifacts: Vec::new(),
    })
}
