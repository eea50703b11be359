use algebroid_core::linalg::op_norm;
use algebroid_core::LieAlgebra;
use nalgebra::DMatrix;

/// Rodrigues' formula for the rotation `exp([v]×)`.
fn rodrigues(v: &[f64]) -> DMatrix<f64> {
    let th = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let k = DMatrix::from_row_slice(3, 3, &[0.0, -v[2], v[1], v[2], 0.0, -v[0], -v[1], v[0], 0.0]);
    if th == 0.0 {
        return DMatrix::identity(3, 3);
    }
    DMatrix::identity(3, 3) + &k * (th.sin() / th) + &k * &k * ((1.0 - th.cos()) / (th * th))
}

#[test]
fn cohomology_of_small_algebras() {
    let cases = [
        (LieAlgebra::su2(), vec![1, 0, 0, 1]),
        (LieAlgebra::abelian(3), vec![1, 3, 3, 1]),
        // Heisenberg: H¹ = (g/[g,g])* has dimension 2, Poincaré duality gives H².
        (LieAlgebra::heisenberg(), vec![1, 2, 2, 1]),
        // Non-unimodular: H³ = 0, H¹ = 1, Euler characteristic 0 forces H² = 0.
        (LieAlgebra::book(), vec![1, 1, 0, 0]),
        (LieAlgebra::abelian(5), vec![1, 5, 10, 10, 5, 1]),
    ];
    for (g, dims) in cases {
        assert_eq!(g.ce_cohomology_dims(), dims);
        assert!(g.ce_square_residual() < 1e-10);
    }
}

#[test]
fn abelian_differentials_vanish() {
    for d in LieAlgebra::abelian(4).ce_differentials() {
        assert!(d.iter().all(|v| *v == 0.0));
    }
}

#[test]
fn product_algebra_cohomology_is_kuenneth() {
    // su(2) ⊕ ℝ: Poincaré polynomial (1 + t³)(1 + t).
    let su2 = LieAlgebra::su2();
    let mut brackets = Vec::new();
    for j in 0..3 {
        for k in (j + 1)..3 {
            let mut v = su2.bracket(&unit(3, j), &unit(3, k));
            v.push(0.0);
            brackets.push((j, k, v));
        }
    }
    let g = LieAlgebra::from_brackets(4, &brackets).unwrap();
    assert_eq!(g.ce_cohomology_dims(), vec![1, 1, 0, 1, 1]);
    assert_eq!(g.center().ncols(), 1);
}

fn unit(m: usize, i: usize) -> Vec<f64> {
    (0..m).map(|j| if j == i { 1.0 } else { 0.0 }).collect()
}

#[test]
fn ad_exp_of_su2_is_a_rotation() {
    let g = LieAlgebra::su2();
    for v in [[0.1, 0.0, 0.0], [0.3, -0.5, 0.8], [1.0, 2.0, -2.0], [0.0, 0.0, 0.0]] {
        assert!(op_norm(&(g.ad_exp(&v) - rodrigues(&v))) < 1e-12, "{v:?}");
    }
}

#[test]
fn ad_exp_of_nilpotent_algebras_truncates() {
    let g = LieAlgebra::heisenberg();
    let v = [0.7, -1.3, 5.0];
    let ad = g.ad(&v);
    assert!(op_norm(&(&ad * &ad)) == 0.0);
    assert!(op_norm(&(g.ad_exp(&v) - (DMatrix::identity(3, 3) + ad))) < 1e-14);
}

#[test]
fn ad_exp_of_the_book_algebra_scales() {
    // ad_{e1} is the identity on span(e2, e3).
    let g = LieAlgebra::book();
    let e = g.ad_exp(&[0.8, 0.0, 0.0]);
    let want = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.8f64.exp(), 0.8f64.exp()]));
    assert!(op_norm(&(e - want)) < 1e-12);
}

#[test]
fn jacobi_and_centers() {
    assert!(LieAlgebra::su2().jacobi_check() < 1e-15);
    assert_eq!(LieAlgebra::su2().center().ncols(), 0);
    let z = LieAlgebra::heisenberg().center();
    assert_eq!(z.ncols(), 1);
    assert!((z[(2, 0)].abs() - 1.0).abs() < 1e-12);
    let bad = LieAlgebra::from_brackets(
        3,
        &[(0, 1, vec![0.01, 0.0, 1.0]), (1, 2, vec![1.0, 0.0, 0.0]), (2, 0, vec![0.0, 1.0, 0.0])],
    )
    .unwrap();
    assert!((bad.jacobi_check() - 0.01).abs() < 1e-12);
    assert!(LieAlgebra::from_tensor(2, vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).is_err());
}

#[test]
fn spectral_bounds_of_ad() {
    let g = LieAlgebra::su2();
    let v = [0.3, -1.2, 0.4];
    let norm = (v.iter().map(|c| c * c).sum::<f64>()).sqrt();
    assert!((g.spectral_bound(&v, &DMatrix::identity(3, 3)).unwrap() - norm).abs() < 1e-12);
    // Any norm: the bound dominates |ad_v x| / |x| on samples.
    let q = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 0.5]);
    let l = g.spectral_bound(&v, &q).unwrap();
    let qn = |x: &nalgebra::DVector<f64>| (x.transpose() * &q * x)[(0, 0)].sqrt();
    for s in 0..20 {
        let x = nalgebra::DVector::from_fn(3, |i, _| ((s * 3 + i) as f64 * 0.77).sin());
        assert!(qn(&(g.ad(&v) * &x)) <= l * qn(&x) + 1e-12);
    }
    assert!(g.spectral_bound(&v, &(-DMatrix::identity(3, 3))).is_err());
}

#[test]
fn by_name_lookup() {
    assert_eq!(LieAlgebra::by_name("so3"), Some(LieAlgebra::su2()));
    assert_eq!(LieAlgebra::by_name("abelian4").unwrap().dim(), 4);
    assert_eq!(LieAlgebra::by_name("abelian").unwrap().dim(), 3);
    assert!(LieAlgebra::by_name("e8").is_none());
}
