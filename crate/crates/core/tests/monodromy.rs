use std::f64::consts::PI;

use algebroid_core::catalog::{self, HeisenbergSurface};
use algebroid_core::monodromy::{
    center_check, curvature, integrate_curvature, lattice_discreteness, monodromy_lattice, CenterFrame,
    Discreteness, Splitting, DEFAULT_GRID, DEFAULT_QUADRATURE_TOL,
};
use algebroid_core::{Error, Expr};
use nalgebra::DMatrix;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn generators_at(bundle: &catalog::ExampleBundle, param: f64) -> Vec<f64> {
    let leaves = bundle.leaves.as_ref().unwrap();
    let x = (leaves.point_at)(param);
    let spheres = (leaves.spheres_at)(&x);
    let (lattice, _) = monodromy_lattice(
        &bundle.algebroid,
        &leaves.splitting,
        &spheres,
        &leaves.center_frame,
        DEFAULT_GRID,
        DEFAULT_QUADRATURE_TOL,
    )
    .unwrap();
    lattice.generators.iter().map(|g| g[0]).collect()
}

#[test]
fn linear_su2_generator_is_4pi_on_every_leaf() {
    let b = catalog::su2_rescaled(&Expr::one()).unwrap();
    for r in [0.5, 1.0, 2.0] {
        let g = generators_at(&b, r);
        assert!(rel(g[0].abs(), 4.0 * PI) < 1e-4, "r = {r}: {g:?}");
        assert!(g[0] > 0.0);
    }
}

#[test]
fn rescaled_su2_matches_area_derivative() {
    let b = catalog::su2_rescaled(&"exp(r^2/2)".parse().unwrap()).unwrap();
    let leaves = b.leaves.as_ref().unwrap();
    for r in [0.5, 0.9, 1.1, 2.0] {
        let g = generators_at(&b, r)[0];
        let closed = 4.0 * PI * (r * r - 1.0).abs() * (-r * r / 2.0).exp();
        assert!(rel(g.abs(), closed) < 1e-4, "r = {r}: {g} vs {closed}");
        // The bundled signed closed form agrees too.
        assert!(rel(g, leaves.expected_at(r).unwrap()[0]) < 1e-4);
        // Leaf area A(R) = 4πR / a(R); the generator is A′(R).
        let h = 1e-5;
        let area = |s: f64| 4.0 * PI * s / (s * s / 2.0).exp();
        let da = (area(r + h) - area(r - h)) / (2.0 * h);
        assert!(rel(g, da) < 1e-4);
    }
}

#[test]
fn rescaled_su2_lattice_is_trivial_on_the_critical_leaf() {
    let b = catalog::su2_rescaled(&"exp(r^2/2)".parse().unwrap()).unwrap();
    let leaves = b.leaves.as_ref().unwrap();
    let x = (leaves.point_at)(1.0);
    let (lattice, integrals) = monodromy_lattice(
        &b.algebroid,
        &leaves.splitting,
        &(leaves.spheres_at)(&x),
        &leaves.center_frame,
        DEFAULT_GRID,
        DEFAULT_QUADRATURE_TOL,
    )
    .unwrap();
    assert!(integrals[0].value[0].abs() < 1e-9);
    let rep = lattice_discreteness(&lattice, 1e-9, 1_000_000);
    assert_eq!(rep.discrete, Discreteness::Discrete);
    assert_eq!(rep.r_n, f64::INFINITY);
}

#[test]
fn two_form_periods() {
    for lambda in [0.6, 2f64.sqrt()] {
        let b = catalog::two_form_s2xs2(lambda).unwrap();
        let g = generators_at(&b, lambda);
        assert!(rel(g[0].abs(), 4.0 * PI) < 1e-4, "{g:?}");
        assert!(rel(g[1].abs(), 4.0 * PI * lambda) < 1e-4, "{g:?}");
    }
}

#[test]
fn heisenberg_generator_is_the_derivative_of_the_leaf_area() {
    let b = catalog::heisenberg(HeisenbergSurface::Sphere).unwrap();
    for s in [0.5, 1.0, 2.0] {
        let g = generators_at(&b, s)[0];
        // Leaf area 4π/s, so its s-derivative is −4π/s².
        assert!(rel(g, -4.0 * PI / (s * s)) < 1e-4, "s = {s}: {g}");
    }
    let plane = catalog::heisenberg(HeisenbergSurface::Plane).unwrap();
    assert!(generators_at(&plane, 1.0).is_empty());
}

#[test]
fn splitting_independence() {
    let b = catalog::su2_rescaled(&"exp(r^2/2)".parse().unwrap()).unwrap();
    let leaves = b.leaves.as_ref().unwrap();
    let x = (leaves.point_at)(0.7);
    let sphere = &(leaves.spheres_at)(&x)[0];
    let samples = b.algebroid.sample_points(20, 4).unwrap();
    let pinv = Splitting::pseudo_inverse(&b.algebroid, &samples, None).unwrap();
    let a = integrate_curvature(&b.algebroid, &leaves.splitting, sphere, &leaves.center_frame, (100, 200), 1e-4).unwrap();
    let p = integrate_curvature(&b.algebroid, &pinv, sphere, &leaves.center_frame, (100, 200), 1e-4).unwrap();
    assert!(rel(a.value[0], p.value[0]) < 1e-4, "{:?} vs {:?}", a.value, p.value);

    // On S² × S² the pseudo-inverse is the obvious splitting.
    let t = catalog::two_form_s2xs2(0.6).unwrap();
    let tl = t.leaves.as_ref().unwrap();
    let spheres = (tl.spheres_at)(&(tl.point_at)(0.6));
    let pinv = Splitting::pseudo_inverse(&t.algebroid, &t.algebroid.sample_points(10, 1).unwrap(), None).unwrap();
    for s in &spheres {
        let u = integrate_curvature(&t.algebroid, &tl.splitting, s, &tl.center_frame, (100, 200), 1e-4).unwrap();
        let v = integrate_curvature(&t.algebroid, &pinv, s, &tl.center_frame, (100, 200), 1e-4).unwrap();
        assert!(rel(u.value[0], v.value[0]) < 1e-8);
    }
}

#[test]
fn pseudo_inverse_matches_the_geometric_splitting_on_the_unit_sphere() {
    let a = Expr::one();
    let b = catalog::su2_rescaled(&a).unwrap();
    let alg = &b.algebroid;
    let pinv = Splitting::pseudo_inverse(alg, &alg.sample_points(10, 2).unwrap(), None).unwrap();
    let cp = pinv.compile(alg).unwrap();
    for x in [[0.6, 0.0, 0.8], [0.0, 1.0, 0.0], [0.48, 0.6, 0.64]] {
        let s = cp.at(&x).unwrap();
        // σ(v̄ⁱ) = (1/a)(dxⁱ − xⁱ n̄ / r) with n̄ = x·dx / r, r = 1.
        let rho = alg.rho_matrix(&x).unwrap();
        for i in 0..3 {
            let vbar = rho.column(i).clone_owned();
            let got = &s * vbar;
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 } - x[i] * x[j];
                assert!((got[j] - want).abs() < 1e-8, "x = {x:?}, i = {i}");
            }
        }
    }
}

#[test]
fn curvature_routes_agree() {
    let b = catalog::su2_rescaled(&"exp(r^2/2)".parse().unwrap()).unwrap();
    let leaves = b.leaves.as_ref().unwrap();
    let alg = &b.algebroid;
    let rot = catalog::rotation_fields();
    let cs = leaves.splitting.compile(alg).unwrap();
    for x in [[0.3, -0.4, 0.5], [1.0, 0.2, -0.1]] {
        let sym = curvature(alg, &leaves.splitting, &rot[0], &rot[1], &x).unwrap();
        let at = |f: &[Expr]| -> Vec<f64> { f.iter().map(|e| e.eval_at(&["x", "y", "z"], &x).unwrap()).collect() };
        let ten = cs.curvature(&x, &at(&rot[0]), &at(&rot[1])).unwrap();
        for (u, v) in sym.iter().zip(&ten) {
            assert!((u - v).abs() < 1e-10, "{sym:?} vs {ten:?}");
        }
    }
}

#[test]
fn rescaled_curvature_closed_form() {
    // Ω(X, Y) = ((a − a′r) / (a² r³)) ω(X, Y) n̄ for the geometric splitting,
    // with ω = x dy∧dz + y dz∧dx + z dx∧dy and n̄ = x·dx / r.
    let b = catalog::su2_rescaled(&"exp(r^2/2)".parse().unwrap()).unwrap();
    let leaves = b.leaves.as_ref().unwrap();
    let cs = leaves.splitting.compile(&b.algebroid).unwrap();
    for x in [[0.3f64, -0.4, 0.5], [1.0, 0.2, -0.1], [0.0, 1.3, 0.4]] {
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        let a = (r * r / 2.0).exp();
        let da = r * a;
        // Two tangent vectors of the sphere at x.
        let u = [x[1], -x[0], 0.0];
        let v = [x[2] * x[0], x[2] * x[1], -(x[0] * x[0] + x[1] * x[1])];
        let cross = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
        let omega: f64 = (0..3).map(|i| x[i] * cross[i]).sum();
        let coef = (a - da * r) / (a * a * r.powi(3)) * omega;
        let w = cs.curvature(&x, &u, &v).unwrap();
        for i in 0..3 {
            let want = coef * x[i] / r;
            assert!((w[i] - want).abs() <= 1e-6 * want.abs().max(1e-12) + 1e-12, "{w:?} vs {want}");
        }
    }
}

#[test]
fn orientation_reversal_negates_generators() {
    let b = catalog::su2_rescaled(&"1 + r^2".parse().unwrap()).unwrap();
    let leaves = b.leaves.as_ref().unwrap();
    let x = (leaves.point_at)(1.3);
    let s = &(leaves.spheres_at)(&x)[0];
    let f = integrate_curvature(&b.algebroid, &leaves.splitting, s, &leaves.center_frame, (60, 120), 1e-3).unwrap();
    let g = integrate_curvature(&b.algebroid, &leaves.splitting, &s.reversed(), &leaves.center_frame, (60, 120), 1e-3)
        .unwrap();
    assert!((f.value[0] + g.value[0]).abs() < 1e-12 * f.value[0].abs());
}

#[test]
fn quadrature_error_estimate_is_honest() {
    let b = catalog::su2_rescaled(&"exp(r^2/2)".parse().unwrap()).unwrap();
    let leaves = b.leaves.as_ref().unwrap();
    let s = &(leaves.spheres_at)(&(leaves.point_at)(0.8))[0];
    let coarse = integrate_curvature(&b.algebroid, &leaves.splitting, s, &leaves.center_frame, (50, 100), 1e-2).unwrap();
    let fine = integrate_curvature(&b.algebroid, &leaves.splitting, s, &leaves.center_frame, (100, 200), 1e-2).unwrap();
    assert!((fine.value[0] - coarse.value[0]).abs() <= coarse.richardson * 1.01);
    let tight = integrate_curvature(&b.algebroid, &leaves.splitting, s, &leaves.center_frame, (4, 8), 1e-12);
    assert!(matches!(tight, Err(Error::NonConvergence { .. })));
}

#[test]
fn rn_is_constant_along_a_leaf() {
    let b = catalog::su2_rescaled(&"exp(r^2/2)".parse().unwrap()).unwrap();
    let leaves = b.leaves.as_ref().unwrap();
    let r = 1.4;
    let points = [[0.0, 0.0, r], [r * 0.6, 0.0, r * 0.8]];
    let vals: Vec<f64> = points
        .iter()
        .map(|x| {
            let (l, _) = monodromy_lattice(
                &b.algebroid,
                &leaves.splitting,
                &(leaves.spheres_at)(x),
                &leaves.center_frame,
                (100, 200),
                1e-3,
            )
            .unwrap();
            lattice_discreteness(&l, 1e-9, 1_000_000).r_n
        })
        .collect();
    assert!(rel(vals[0], vals[1]) < 1e-6);
}

#[test]
fn center_valued_curvature() {
    let b = catalog::su2_rescaled(&"exp(r^2/2)".parse().unwrap()).unwrap();
    let leaves = b.leaves.as_ref().unwrap();
    let pts = b.algebroid.sample_points(10, 5).unwrap();
    assert!(center_check(&b.algebroid, &leaves.splitting, &pts).unwrap() < 1e-10);
    let t = catalog::two_form_s2xs2(0.6).unwrap();
    let tl = t.leaves.as_ref().unwrap();
    assert!(center_check(&t.algebroid, &tl.splitting, &t.algebroid.sample_points(10, 5).unwrap()).unwrap() < 1e-12);
}

#[test]
fn non_central_splitting_is_flagged() {
    // T ℝ² × (su(2) ⊕ ℝ): isotropy su(2) ⊕ ℝ with center ℝ e₆.
    use algebroid_core::{LieAlgebra, LocalAlgebroid, SphereMap};
    let tm = catalog::tangent(2).unwrap().algebroid;
    let g = LocalAlgebroid::product(
        &LocalAlgebroid::from_lie_algebra(&LieAlgebra::su2()),
        &LocalAlgebroid::from_lie_algebra(&LieAlgebra::abelian(1)),
    )
    .unwrap();
    let alg = LocalAlgebroid::product(&tm, &g).unwrap();
    let mut rows = vec![vec![Expr::zero(); 2]; 6];
    rows[0][0] = Expr::one();
    rows[1][1] = Expr::one();
    let good = Splitting::Matrix(rows.clone());
    // σ(∂₁) = ∂₁ + x₂ e₃ has curvature ±e₃, outside the center.
    rows[2][0] = Expr::var("x2");
    let bad = Splitting::Matrix(rows);
    let pts = alg.sample_points(5, 0).unwrap();
    assert!(center_check(&alg, &good, &pts).unwrap() < 1e-14);
    assert!((center_check(&alg, &bad, &pts).unwrap() - 1.0).abs() < 1e-12);

    let frame = CenterFrame::from_isotropy(&alg, &pts[0]).unwrap();
    assert_eq!(frame.len(), 1);
    let (theta, phi) = (Expr::var("theta"), Expr::var("phi"));
    let sphere = SphereMap::new("folded disc", vec![theta.sin() * phi.cos() * 0.5, theta.sin() * phi.sin() * 0.5]);
    let res = integrate_curvature(&alg, &bad, &sphere, &frame, (20, 40), 1e-4);
    assert!(matches!(res, Err(Error::HypothesisViolated { .. })), "{res:?}");
    let ok = integrate_curvature(&alg, &good, &sphere, &frame, (20, 40), 1e-4).unwrap();
    assert_eq!(ok.value, vec![0.0]);
}

#[test]
fn non_flat_center_frame_is_rejected() {
    let b = catalog::su2_rescaled(&Expr::one()).unwrap();
    let leaves = b.leaves.as_ref().unwrap();
    let s = &(leaves.spheres_at)(&(leaves.point_at)(1.0))[0];
    // A constant frame is not central away from the z axis, and not flat.
    let frame = CenterFrame::Constant(DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]), vec!["dz".into()]);
    let res = integrate_curvature(&b.algebroid, &leaves.splitting, s, &frame, (20, 40), 1e-2);
    assert!(matches!(res, Err(Error::NontrivialLocalSystem { .. })), "{res:?}");
}
