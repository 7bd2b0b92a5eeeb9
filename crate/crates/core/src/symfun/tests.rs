use super::fd::fd_check;
use super::*;
use crate::fixtures;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn close(a: C64, b: C64, tol: f64) -> bool {
    (a - b).norm() <= tol
}

#[test]
fn parse_and_eval_basics() {
    let e = parse("z(1)^2").unwrap();
    assert!(close(e.eval(&[1.0, 1.0]).unwrap(), c(0.0, 2.0), 1e-15));
    let b = parse("bump(x(1))").unwrap();
    assert!(close(b.eval(&[0.0, 0.0]).unwrap(), c((-1.0f64).exp(), 0.0), 1e-16));
    assert_eq!(b.eval(&[2.0, 0.0]).unwrap(), c(0.0, 0.0));
    let bb = parse("bump(x(1))*bump(y(1))").unwrap();
    assert_eq!(bb.max_index(), 1);
}

#[test]
fn parse_rejects_index_zero() {
    let err = parse("x(0)").unwrap_err();
    assert_eq!(err.pos, 2);
    assert!(parse("zb(0) + 1").is_err());
}

#[test]
fn parse_errors_carry_position() {
    let err = parse("x(1) + * 2").unwrap_err();
    assert_eq!(err.pos, 7);
    assert!(parse("foo(1)").is_err());
    assert!(parse("(x(1)").is_err());
    assert!(parse("x(1) y(1)").is_err());
}

#[test]
fn parse_full_grammar() {
    let e = parse(" 2.5e-1 * exp(i*y(2)) / (1 + x(1)^2) - sin(zb(1)) + cos(conj(z(2))) - log(2) ").unwrap();
    let p = [0.3, -0.2, 0.7, 0.4];
    let (x1, y1, x2, y2) = (p[0], p[1], p[2], p[3]);
    let expected = c(0.25, 0.0) * c(0.0, y2).exp() / (1.0 + x1 * x1) - c(x1, -y1).sin()
        + c(x2, -y2).cos()
        - 2f64.ln();
    assert!(close(e.eval(&p).unwrap(), expected, 1e-14));
    let neg = parse("-x(1)^-2").unwrap();
    assert!(close(neg.eval(&[2.0, 0.0]).unwrap(), c(-0.25, 0.0), 1e-16));
}

#[test]
fn eval_errors() {
    let e = parse("1/x(1)").unwrap();
    assert_eq!(e.eval(&[0.0, 0.0]), Err(EvalError::DivisionByZero));
    let l = parse("log(x(1))").unwrap();
    assert!(matches!(l.eval(&[-1.0, 0.0]), Err(EvalError::LogNonPositive(_))));
    let m = parse("x(3)").unwrap();
    assert!(matches!(m.eval(&[0.0, 0.0]), Err(EvalError::MissingVariable { .. })));
}

#[test]
fn zero_factor_masks_undefined_weight() {
    let e = parse("bump(x(1)) * log(x(1) - 3)").unwrap();
    assert_eq!(e.eval(&[2.0, 0.0]).unwrap(), c(0.0, 0.0));
}

#[test]
fn derivative_examples() {
    let e = parse("x(1)*x(2)").unwrap();
    let d = e.d_dx(1);
    assert!(close(d.eval(&[0.3, 0.0, -0.7, 0.0]).unwrap(), c(-0.7, 0.0), 1e-16));
    assert!(Expr::real(3.0).d_dy(2).is_zero());
}

#[test]
fn oscillating_product_partials_are_two_pi() {
    let n = 4;
    let f = fixtures::oscillating_product(n);
    let mut p = vec![0.0; 2 * n];
    for j in 1..=n {
        p[2 * (j - 1)] = 1.0 / j as f64;
    }
    for i in 1..=n {
        let v = f.d_dx(i).eval(&p).unwrap();
        assert!(close(v, c(2.0 * std::f64::consts::PI, 0.0), 1e-12), "i={i}: {v}");
    }
}

#[test]
fn wirtinger_of_coordinates() {
    for i in 1..=6 {
        for j in 1..=6 {
            assert!(Expr::z(j).delbar(i).is_zero() || {
                let v = Expr::z(j).delbar(i).eval(&[0.1; 12]).unwrap();
                v.norm() <= 1e-14
            });
            let dz = Expr::zb(j).del(i);
            assert!(dz.is_zero() || dz.eval(&[0.2; 12]).unwrap().norm() <= 1e-14);
            let kd = Expr::zb(j).delbar(i).eval(&[0.3; 12]).unwrap();
            let want = if i == j { 1.0 } else { 0.0 };
            assert!(close(kd, c(want, 0.0), 1e-15));
        }
    }
}

#[test]
fn delta_and_sigma_examples() {
    let a = 0.25;
    let one = Expr::one();
    let d = one.delta(1, a);
    let p = [0.4, -0.3];
    let expected = -c(0.4, 0.3) / (2.0 * a * a);
    assert!(close(d.eval(&p).unwrap(), expected, 1e-14));
    let g = parse("z(1)*zb(1) + x(1)").unwrap();
    let s = g.sigma(1, a, &Expr::zero());
    let dd = g.delta(1, a);
    assert!(close(s.eval(&p).unwrap(), dd.eval(&p).unwrap(), 0.0));
}

#[test]
fn fd_check_examples() {
    let poly = parse("x(1)^3*y(2) - 2*x(2)*y(1)^2 + z(1)*zb(2)").unwrap();
    assert!(fd_check(&poly, &[0.3, -0.5, 0.8, 0.1], 1e-5).unwrap() <= 1e-8);
    let ex = parse("exp(x(1))").unwrap();
    assert!(fd_check(&ex, &[0.0, 0.0], 1e-5).unwrap() <= 1e-9);
    assert_eq!(fd_check(&Expr::real(2.0), &[0.1, 0.2], 1e-5).unwrap(), 0.0);
}

#[test]
fn random_expressions_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut done = 0;
    while done < 100 {
        let e = fixtures::random_smooth(&mut rng, 5, 3);
        let p = fixtures::random_point(&mut rng, 3, 1.0);
        let v = e.eval(&p).unwrap();
        if v.norm() > 100.0 {
            continue;
        }
        let dev = fd_check(&e, &p, 1e-5).unwrap();
        assert!(dev <= 1e-6, "{e} at {p:?}: {dev}");
        done += 1;
    }
}

#[test]
fn double_conjugate_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let e = fixtures::random_smooth(&mut rng, 4, 2);
        let p = fixtures::random_point(&mut rng, 2, 1.0);
        let a = e.eval(&p).unwrap();
        let b = e.conj().conj().eval(&p).unwrap();
        assert!((a - b).norm() <= 1e-14 * (1.0 + a.norm()));
        let cj = e.conj().eval(&p).unwrap();
        assert!((cj - a.conj()).norm() <= 1e-13 * (1.0 + a.norm()));
    }
}

#[test]
fn cutoff_respects_support_radius() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f = fixtures::random_compact(&mut rng, 2, 0.6);
    assert_eq!(f.support_radius, Some(0.6));
    let tape = f.expr.compile();
    for _ in 0..1000 {
        let p = fixtures::random_point_outside(&mut rng, 2, 0.6);
        assert_eq!(tape.eval1(&p).unwrap(), c(0.0, 0.0));
    }
}

#[test]
fn bump_derivative_symbolic() {
    let b = parse("bump(x(1))").unwrap();
    let d = b.d_dx(1);
    for &t in &[-0.9, -0.3, 0.0, 0.5] {
        let s: f64 = 1.0 - t * t;
        let want = (-1.0 / s).exp() * (-2.0 * t / (s * s));
        assert!(close(d.eval(&[t, 0.0]).unwrap(), c(want, 0.0), 1e-15));
    }
    assert_eq!(d.eval(&[1.5, 0.0]).unwrap(), c(0.0, 0.0));
}

#[test]
fn substitution_translates() {
    let e = parse("x(1)^2 + y(1)").unwrap();
    let shifted = e.substitute(&|v| match v {
        Var::X(i) => Expr::x(i) - 1.0,
        Var::Y(i) => Expr::y(i) * 2.0,
    });
    assert!(close(shifted.eval(&[3.0, 0.5]).unwrap(), c(5.0, 0.0), 1e-15));
}

#[test]
fn multi_output_tape_shares_nodes() {
    let base = parse("exp(sin(x(1)*y(1)))").unwrap();
    let a = base.clone() * 2.0;
    let b = base.clone() + 1.0;
    let t = Compiled::new(&[a, b]);
    assert_eq!(t.tape_len(), 9);
    let v = t.eval(&[0.2, 0.3]).unwrap();
    assert!(close(v[0] * 0.5 + 1.0, v[1], 1e-15));
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn mixed_partials_commute(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let e = fixtures::random_smooth(&mut rng, 3, 2);
            let p = fixtures::random_point(&mut rng, 2, 1.0);
            let a = e.d_dx(1).d_dy(2).eval(&p).unwrap();
            let b = e.d_dy(2).d_dx(1).eval(&p).unwrap();
            prop_assert!((a - b).norm() <= 1e-10 * (1.0 + a.norm()));
        }

        #[test]
        fn wirtinger_recombines(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let e = fixtures::random_smooth(&mut rng, 3, 2);
            let p = fixtures::random_point(&mut rng, 2, 1.0);
            let (d, db) = e.wirtinger(1);
            let sum = (d + db).eval(&p).unwrap();
            let dx = e.d_dx(1).eval(&p).unwrap();
            prop_assert!((sum - dx).norm() <= 1e-12 * (1.0 + dx.norm()));
        }
    }
}
