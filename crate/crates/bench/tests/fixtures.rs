use dbarl2_bench::{points, test_form, test_function};
use dbarl2_core::solver::closedness_residual;
use dbarl2_core::Domain;

#[test]
fn fixtures_have_the_advertised_shape() {
    for n in 1..=3 {
        let f = test_form(n);
        assert_eq!(f.degree(), (0, 1));
        assert_eq!(f.len(), n);
        assert_eq!(f.support_radius(), Some(2.0));
        assert_eq!(test_function(n).dim, n);
        let pts = points(n, 50);
        assert!(pts.iter().all(|p| p.len() == 2 * n && p.iter().all(|v| v.abs() <= 0.5)));
    }
    // the polynomial coefficients are not ∂̄-closed, so the solver would refuse them
    let r = closedness_residual(&test_form(2), &Domain::entire(), 2, 20, 0).unwrap();
    assert!(r > 1e-3);
}
