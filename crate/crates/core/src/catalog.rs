//! Named examples: algebroids together with the leaf data (spheres,
//! splitting, center frame) needed to compute their monodromy.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::algebroid::{LocalAlgebroid, Section, StructureFunctions};
use crate::error::{Error, Result};
use crate::expr::{Expr, Program};
use crate::liealg::LieAlgebra;
use crate::monodromy::{CenterFrame, SphereMap, Splitting};
use crate::poisson::PoissonStructure;

/// Residual tolerance for constructor preconditions.
pub const CONSTRUCTOR_TOL: f64 = 1e-8;

type PointFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;
type ParamFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type SpheresFn = Arc<dyn Fn(&[f64]) -> Vec<SphereMap> + Send + Sync>;

/// A family of leaves labelled by a real parameter, with everything needed
/// to compute the monodromy of each leaf.
#[derive(Clone)]
pub struct LeafFamily {
    /// Name of the leaf parameter (`r` for spheres of radius `r`).
    pub param: String,
    /// A point on the leaf with the given parameter.
    pub point_at: PointFn,
    /// The leaf parameter of a point.
    pub param_at: ParamFn,
    /// Spheres generating `π₂` of the leaf through a point.
    pub spheres_at: SpheresFn,
    pub splitting: Splitting,
    pub center_frame: CenterFrame,
    /// Closed forms of the generators (one per sphere) in the leaf parameter,
    /// with the sign produced by the curvature convention of
    /// [`crate::monodromy`].
    pub expected_generators: Vec<Expr>,
}

impl fmt::Debug for LeafFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LeafFamily")
            .field("param", &self.param)
            .field("splitting", &self.splitting)
            .field("center_frame", &self.center_frame)
            .field("expected_generators", &self.expected_generators)
            .finish_non_exhaustive()
    }
}

impl LeafFamily {
    /// Evaluate the expected generators at a leaf parameter.
    pub fn expected_at(&self, value: f64) -> Result<Vec<f64>> {
        self.expected_generators.iter().map(|e| Ok(e.eval_at(&[self.param.as_str()], &[value])?)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct ExampleBundle {
    pub name: String,
    pub algebroid: LocalAlgebroid,
    pub poisson: Option<PoissonStructure>,
    pub leaves: Option<LeafFamily>,
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

/// `TM` over `ℝⁿ`: identity anchor, zero structure functions.
pub fn tangent(n: usize) -> Result<ExampleBundle> {
    let anchor = (0..n)
        .map(|i| (0..n).map(|a| if a == i { Expr::one() } else { Expr::zero() }).collect())
        .collect();
    let alg = LocalAlgebroid::new(names("x", n), anchor, StructureFunctions::zero(n), vec![(-1.0, 1.0); n])?;
    let leaves = LeafFamily {
        param: "c".into(),
        point_at: Arc::new(move |_| vec![0.0; n]),
        param_at: Arc::new(|_| 0.0),
        spheres_at: Arc::new(|_| Vec::new()),
        splitting: Splitting::Matrix(
            (0..n).map(|i| (0..n).map(|a| if a == i { Expr::one() } else { Expr::zero() }).collect()).collect(),
        ),
        center_frame: CenterFrame::Constant(DMatrix::zeros(n, 0), Vec::new()),
        expected_generators: Vec::new(),
    };
    Ok(ExampleBundle { name: format!("tangent({n})"), algebroid: alg, poisson: None, leaves: Some(leaves) })
}

/// A Lie algebra as an algebroid over a point.
pub fn lie_algebra(name: &str, g: &LieAlgebra) -> ExampleBundle {
    ExampleBundle {
        name: format!("lie_algebra({name})"),
        algebroid: LocalAlgebroid::from_lie_algebra(g),
        poisson: None,
        leaves: None,
    }
}

/// Action algebroid `g ⋉ ℝⁿ` for vector fields `generators[i]` realizing the
/// basis `e_i`. Fails unless `e_i ↦ generators[i]` is a homomorphism.
pub fn action_algebroid(
    g: &LieAlgebra,
    coords: Vec<String>,
    generators: Vec<Vec<Expr>>,
    chart_box: Vec<(f64, f64)>,
) -> Result<ExampleBundle> {
    if generators.len() != g.dim() {
        return Err(Error::Dimension(format!("{} generators for a {}-dimensional algebra", generators.len(), g.dim())));
    }
    let alg = LocalAlgebroid::new(coords, generators, StructureFunctions::from_lie_algebra(g), chart_box)?;
    let res = alg.axiom_residuals(100, 0)?;
    if res.max_anchor_compat > CONSTRUCTOR_TOL {
        return Err(Error::AxiomViolation {
            what: "homomorphism property of the infinitesimal action".into(),
            residual: res.max_anchor_compat,
        });
    }
    Ok(ExampleBundle { name: "action".into(), algebroid: alg, poisson: None, leaves: None })
}

/// `X = z∂_y − y∂_z`, `Y = x∂_z − z∂_x`, `Z = y∂_x − x∂_y`.
pub fn rotation_fields() -> Vec<Vec<Expr>> {
    let (x, y, z) = (Expr::var("x"), Expr::var("y"), Expr::var("z"));
    let o = Expr::zero();
    vec![
        vec![o.clone(), z.clone(), -&y],
        vec![-&z, o.clone(), x.clone()],
        vec![y.clone(), -&x, o],
    ]
}

/// `su(2)` acting on `ℝ³` by rotations.
pub fn su2_rotations() -> Result<ExampleBundle> {
    let mut b = action_algebroid(
        &LieAlgebra::su2(),
        ["x", "y", "z"].map(String::from).to_vec(),
        rotation_fields(),
        vec![(-1.5, 1.5); 3],
    )?;
    b.name = "action(su2, rotations)".into();
    Ok(b)
}

/// Line bundle with anchor `X` and bracket `[f, g] = f X(g) − X(f) g`.
pub fn vector_field_algebroid(coords: Vec<String>, field: Vec<Expr>, chart_box: Vec<(f64, f64)>) -> Result<ExampleBundle> {
    let alg = LocalAlgebroid::new(coords, vec![field], StructureFunctions::zero(1), chart_box)?;
    Ok(ExampleBundle { name: "vector_field".into(), algebroid: alg, poisson: None, leaves: None })
}

/// Max of `|dω|` over seeded points of the box, for `ω` given by its upper
/// triangle `(a, b, ω_ab)`.
pub fn exterior_derivative_residual(
    coords: &[String],
    omega: &[Vec<Expr>],
    chart_box: &[(f64, f64)],
    num_points: usize,
    seed: u64,
) -> Result<f64> {
    let n = coords.len();
    let mut terms = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            for c in (b + 1)..n {
                terms.push(omega[b][c].diff(&coords[a]) + omega[c][a].diff(&coords[b]) + omega[a][b].diff(&coords[c]));
            }
        }
    }
    if terms.is_empty() {
        return Ok(0.0);
    }
    let probe = LocalAlgebroid::new(coords.to_vec(), Vec::new(), StructureFunctions::zero(0), chart_box.to_vec())?;
    let vars: Vec<&str> = coords.iter().map(String::as_str).collect();
    let prog = Program::new(&terms, &vars)?;
    let mut worst = 0.0f64;
    for x in probe.sample_points(num_points, seed)? {
        worst = prog.eval(&x)?.into_iter().fold(worst, |m, v| m.max(v.abs()));
    }
    Ok(worst)
}

/// `TM ⊕ L` with bracket `[(X, f), (Y, g)] = ([X, Y], X(g) − Y(f) + ω(X, Y))`
/// in the frame `∂_1, …, ∂_n, e_L`. `ω` must be closed.
pub fn two_form_algebroid(
    coords: Vec<String>,
    upper: Vec<(usize, usize, Expr)>,
    chart_box: Vec<(f64, f64)>,
) -> Result<LocalAlgebroid> {
    let n = coords.len();
    let mut omega = vec![vec![Expr::zero(); n]; n];
    for (a, b, e) in upper {
        if a >= b || b >= n {
            return Err(Error::Dimension(format!("two-form entry ({a}, {b}) must satisfy a < b < {n}")));
        }
        omega[b][a] = -&e;
        omega[a][b] = e;
    }
    let residual = exterior_derivative_residual(&coords, &omega, &chart_box, 100, 0)?;
    if residual > CONSTRUCTOR_TOL {
        return Err(Error::AxiomViolation { what: "closedness of the two-form".into(), residual });
    }
    let mut anchor: Vec<Vec<Expr>> = (0..n)
        .map(|i| (0..n).map(|a| if a == i { Expr::one() } else { Expr::zero() }).collect())
        .collect();
    anchor.push(vec![Expr::zero(); n]);
    let mut s = StructureFunctions::zero(n + 1);
    for a in 0..n {
        for b in (a + 1)..n {
            s.set(n, a, b, omega[a][b].clone())?;
        }
    }
    LocalAlgebroid::new(coords, anchor, s, chart_box)
}

/// Margin kept from the poles of spherical charts.
pub const POLE_MARGIN: f64 = 0.05;

/// `S² × S²` in spherical coordinates `(θ1, φ1, θ2, φ2)` with
/// `ω = sin θ1 dθ1∧dφ1 + λ sin θ2 dθ2∧dφ2`.
pub fn two_form_s2xs2(lambda: f64) -> Result<ExampleBundle> {
    let coords: Vec<String> = ["theta1", "phi1", "theta2", "phi2"].map(String::from).to_vec();
    let th = (POLE_MARGIN, PI - POLE_MARGIN);
    let chart_box = vec![th, (0.0, 2.0 * PI), th, (0.0, 2.0 * PI)];
    let alg = two_form_algebroid(
        coords,
        vec![(0, 1, Expr::var("theta1").sin()), (2, 3, Expr::var("theta2").sin() * lambda)],
        chart_box,
    )?;
    let mut split = vec![vec![Expr::zero(); 4]; 5];
    for (i, row) in split.iter_mut().enumerate().take(4) {
        row[i] = Expr::one();
    }
    let (theta, phi) = (Expr::var("theta"), Expr::var("phi"));
    let leaves = LeafFamily {
        param: "lambda".into(),
        point_at: Arc::new(|_| vec![PI / 2.0, 0.0, PI / 2.0, 0.0]),
        param_at: Arc::new(move |_| lambda),
        spheres_at: Arc::new(move |x: &[f64]| {
            let (c0, c1, c2, c3) = (Expr::constant(x[0]), Expr::constant(x[1]), Expr::constant(x[2]), Expr::constant(x[3]));
            vec![
                SphereMap::new("first factor", vec![theta.clone(), phi.clone(), c2, c3]),
                SphereMap::new("second factor", vec![c0, c1, theta.clone(), phi.clone()]),
            ]
        }),
        splitting: Splitting::Matrix(split),
        center_frame: CenterFrame::Constant(DMatrix::from_column_slice(5, 1, &[0.0, 0.0, 0.0, 0.0, 1.0]), vec!["e_L".into()]),
        expected_generators: vec![Expr::constant(-4.0 * PI), Expr::constant(-4.0 * PI) * Expr::var("lambda")],
    };
    Ok(ExampleBundle { name: format!("two_form(lambda={lambda})"), algebroid: alg, poisson: None, leaves: Some(leaves) })
}

fn radius() -> Expr {
    (Expr::var("x").powi(2) + Expr::var("y").powi(2) + Expr::var("z").powi(2)).sqrt()
}

fn radius_of(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn round_sphere(r: f64) -> SphereMap {
    let (theta, phi) = (Expr::var("theta"), Expr::var("phi"));
    SphereMap::new(
        format!("sphere of radius {r}"),
        vec![theta.sin() * phi.cos() * r, theta.sin() * phi.sin() * r, theta.cos() * r],
    )
}

/// `a(r) · π_lin` on `ℝ³`, with `π_lin` the linear Poisson structure of
/// `su(2)*` (`{x, y} = z` and cyclic) and `a` a positive function of the
/// radius `r`.
pub fn su2_rescaled(a: &Expr) -> Result<ExampleBundle> {
    let extra: Vec<String> = a.free_vars().into_iter().filter(|v| v != "r").collect();
    if !extra.is_empty() {
        return Err(Error::Invalid(format!("a(r) may only depend on r, found {extra:?}")));
    }
    for r in [0.1, 0.5, 1.0, 1.5, 2.0] {
        let v = a.eval_at(&["r"], &[r])?;
        if !(v > 0.0) {
            return Err(Error::Invalid(format!("a(r) must be positive, a({r}) = {v}")));
        }
    }
    let ar = a.subst("r", &radius());
    let (x, y, z) = (Expr::var("x"), Expr::var("y"), Expr::var("z"));
    let coords: Vec<String> = ["x", "y", "z"].map(String::from).to_vec();
    let poisson = PoissonStructure::new(
        coords,
        vec![(0, 1, &ar * &z), (0, 2, -(&ar * &y)), (1, 2, &ar * &x)],
        vec![(-1.5, 1.5); 3],
    )?;
    let alg = poisson.cotangent_algebroid()?;
    // σ = −[x]× / (a r²) maps the rotation generators back into T*ℝ³.
    let r2 = x.powi(2) + y.powi(2) + z.powi(2);
    let d = &ar * &r2;
    let o = Expr::zero();
    let split = vec![
        vec![o.clone(), &z / &d, -(&y / &d)],
        vec![-(&z / &d), o.clone(), &x / &d],
        vec![&y / &d, -(&x / &d), o],
    ];
    let r = radius();
    let nbar = Section(vec![&x / &r, &y / &r, &z / &r]);
    let rv = Expr::var("r");
    let expected = Expr::constant(4.0 * PI) * (a - &rv * a.diff("r")) / a.powi(2);
    let leaves = LeafFamily {
        param: "r".into(),
        point_at: Arc::new(|r| vec![0.0, 0.0, r]),
        param_at: Arc::new(radius_of),
        spheres_at: Arc::new(|x: &[f64]| vec![round_sphere(radius_of(x))]),
        splitting: Splitting::Matrix(split),
        center_frame: CenterFrame::Sections(vec![nbar], vec!["n".into()]),
        expected_generators: vec![expected],
    };
    Ok(ExampleBundle { name: format!("su2_rescaled(a={a})"), algebroid: alg, poisson: Some(poisson), leaves: Some(leaves) })
}

/// Which symplectic surface the Heisenberg–Poisson manifold is built on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeisenbergSurface {
    /// Unit `S²` in spherical coordinates with its area form.
    Sphere,
    /// `ℝ²` with `dp ∧ dq`.
    Plane,
}

/// `S × ℝ` with `{f, g} = s {f_s, g_s}_S`. The transversal coordinate is
/// named `s` because `t` is reserved for path time.
pub fn heisenberg(surface: HeisenbergSurface) -> Result<ExampleBundle> {
    let s = Expr::var("s");
    let sv = Expr::var("s");
    match surface {
        HeisenbergSurface::Sphere => {
            let theta = Expr::var("theta");
            let coords: Vec<String> = ["theta", "phi", "s"].map(String::from).to_vec();
            let chart_box = vec![(POLE_MARGIN, PI - POLE_MARGIN), (0.0, 2.0 * PI), (-2.0, 2.0)];
            let poisson = PoissonStructure::new(coords, vec![(0, 1, &s / theta.sin())], chart_box)?;
            let alg = poisson.cotangent_algebroid()?;
            let o = Expr::zero();
            let split = vec![
                vec![o.clone(), theta.sin() / &s, o.clone()],
                vec![-(theta.sin() / &s), o.clone(), o.clone()],
                vec![o.clone(), o.clone(), o],
            ];
            let leaves = LeafFamily {
                param: "s".into(),
                point_at: Arc::new(|s| vec![PI / 2.0, 0.0, s]),
                param_at: Arc::new(|x: &[f64]| x[2]),
                spheres_at: Arc::new(|x: &[f64]| {
                    vec![SphereMap::new("S² factor", vec![Expr::var("theta"), Expr::var("phi"), Expr::constant(x[2])])]
                }),
                splitting: Splitting::Matrix(split),
                center_frame: CenterFrame::Constant(DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]), vec!["ds".into()]),
                expected_generators: vec![Expr::constant(-4.0 * PI) / sv.powi(2)],
            };
            Ok(ExampleBundle { name: "heisenberg(sphere)".into(), algebroid: alg, poisson: Some(poisson), leaves: Some(leaves) })
        }
        HeisenbergSurface::Plane => {
            let coords: Vec<String> = ["p", "q", "s"].map(String::from).to_vec();
            let poisson = PoissonStructure::new(coords, vec![(0, 1, s.clone())], vec![(-2.0, 2.0); 3])?;
            let alg = poisson.cotangent_algebroid()?;
            let o = Expr::zero();
            let split = vec![
                vec![o.clone(), Expr::one() / &s, o.clone()],
                vec![-(Expr::one() / &s), o.clone(), o.clone()],
                vec![o.clone(), o.clone(), o],
            ];
            let leaves = LeafFamily {
                param: "s".into(),
                point_at: Arc::new(|s| vec![0.0, 0.0, s]),
                param_at: Arc::new(|x: &[f64]| x[2]),
                spheres_at: Arc::new(|_| Vec::new()),
                splitting: Splitting::Matrix(split),
                center_frame: CenterFrame::Constant(DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]), vec!["ds".into()]),
                expected_generators: Vec::new(),
            };
            Ok(ExampleBundle { name: "heisenberg(plane)".into(), algebroid: alg, poisson: Some(poisson), leaves: Some(leaves) })
        }
    }
}

/// Catalog entries addressable by name, with their parameters and defaults.
pub const ENTRIES: &[(&str, &str)] = &[
    ("tangent", "TM over R^n; params: n (default 3)"),
    ("lie_algebra", "a Lie algebra over a point; params: algebra = su2 | heisenberg | book | abelianN (default su2)"),
    ("action", "su(2) acting on R^3 by rotations"),
    ("vector_field", "line bundle with anchor X; params: field = comma-separated components in x1..xn (default x2,-x1)"),
    ("two_form", "S^2 x S^2 with w = dS + lambda dS; params: lambda (default 0.6)"),
    ("su2_rescaled", "a(r) times the linear Poisson structure on su(2)*; params: a (default 1)"),
    ("heisenberg", "Heisenberg-Poisson manifold S x R; params: surface = sphere | plane (default sphere)"),
];

/// Build a catalog entry from string parameters.
pub fn by_name(name: &str, params: &BTreeMap<String, String>) -> Result<ExampleBundle> {
    let known: &[&str] = match name {
        "tangent" => &["n"],
        "lie_algebra" => &["algebra"],
        "action" => &[],
        "vector_field" => &["field"],
        "two_form" => &["lambda"],
        "su2_rescaled" => &["a"],
        "heisenberg" => &["surface"],
        _ => return Err(Error::Invalid(format!("unknown catalog entry `{name}`"))),
    };
    if let Some(k) = params.keys().find(|k| !known.contains(&k.as_str())) {
        return Err(Error::Invalid(format!("catalog entry `{name}` has no parameter `{k}`")));
    }
    let get = |k: &str| params.get(k).map(String::as_str);
    match name {
        "tangent" => {
            let n = get("n").unwrap_or("3").parse::<usize>().map_err(|e| Error::Invalid(format!("n: {e}")))?;
            tangent(n)
        }
        "lie_algebra" => {
            let which = get("algebra").unwrap_or("su2");
            let g = LieAlgebra::by_name(which).ok_or_else(|| Error::Invalid(format!("unknown Lie algebra `{which}`")))?;
            Ok(lie_algebra(which, &g))
        }
        "action" => su2_rotations(),
        "vector_field" => {
            let comps: Vec<Expr> = get("field")
                .unwrap_or("x2,-x1")
                .split(',')
                .map(|s| s.trim().parse::<Expr>())
                .collect::<std::result::Result<_, _>>()?;
            let n = comps.len();
            vector_field_algebroid(names("x", n), comps, vec![(-1.0, 1.0); n])
        }
        "two_form" => {
            let lambda = get("lambda").unwrap_or("0.6").parse::<Expr>()?.eval_at(&[], &[])?;
            two_form_s2xs2(lambda)
        }
        "su2_rescaled" => su2_rescaled(&get("a").unwrap_or("1").parse()?),
        "heisenberg" => match get("surface").unwrap_or("sphere") {
            "sphere" => heisenberg(HeisenbergSurface::Sphere),
            "plane" => heisenberg(HeisenbergSurface::Plane),
            other => Err(Error::Invalid(format!("unknown surface `{other}`"))),
        },
        _ => unreachable!(),
    }
}

/// One instance of each constructor, as exercised by the axiom suite.
pub fn all_examples() -> Result<Vec<ExampleBundle>> {
    Ok(vec![
        tangent(3)?,
        lie_algebra("su2", &LieAlgebra::su2()),
        su2_rotations()?,
        vector_field_algebroid(
            names("x", 2),
            vec!["x2".parse()?, "-x1 + x1^2".parse()?],
            vec![(-1.0, 1.0); 2],
        )?,
        two_form_s2xs2(0.6)?,
        su2_rescaled(&"exp(r^2/2)".parse()?)?,
        heisenberg(HeisenbergSurface::Sphere)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructors_satisfy_axioms() {
        for b in all_examples().unwrap() {
            let r = b.algebroid.axiom_residuals(100, 0).unwrap();
            assert!(r.max_anchor_compat < 1e-8 && r.max_jacobi < 1e-8, "{}: {r:?}", b.name);
        }
    }

    #[test]
    fn broken_inputs_are_rejected() {
        let mut gens = rotation_fields();
        gens[2][0] = Expr::var("y") * 1.1;
        let coords = ["x", "y", "z"].map(String::from).to_vec();
        assert!(action_algebroid(&LieAlgebra::su2(), coords.clone(), gens, vec![(-1.0, 1.0); 3]).is_err());
        let open = two_form_algebroid(coords, vec![(0, 1, Expr::var("z"))], vec![(-1.0, 1.0); 3]);
        assert!(matches!(open, Err(Error::AxiomViolation { .. })));
        assert!(su2_rescaled(&"r - 1".parse().unwrap()).is_err());
    }

    #[test]
    fn vector_field_bracket() {
        let b = vector_field_algebroid(vec!["x".into()], vec![Expr::one()], vec![(-1.0, 1.0)]).unwrap();
        let f = Section(vec![Expr::var("x")]);
        let g = Section(vec![Expr::one()]);
        let br = b.algebroid.bracket(&f, &g);
        assert_eq!(b.algebroid.eval_section(&br, 0.0, &[0.3]).unwrap(), vec![-1.0]);
    }
}
