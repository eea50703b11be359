use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use algebroid_core::catalog::{self, ExampleBundle, ENTRIES};
use algebroid_core::monodromy::{
    integrability_verdict, lattice_discreteness, monodromy_lattice, profile_csv, rn_profile, CenterFrame,
    CurvatureIntegral, Lattice, Splitting, TransversalSample, VerdictThresholds,
};
use algebroid_core::paths::{
    default_cutoff, detect_period, geodesic, is_homotopy, parallel_transport, period_lipschitz_bound,
    reparametrization_variation, validate_apath, Connection, Variation,
};
use algebroid_core::{APath, LieAlgebra, LocalAlgebroid, Section, SphereMap};
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::output::{float, floats, matrix, to_value};
use crate::spec::SpecFile;
use crate::{CatalogAction, CliError, Command, ConnectionKind, Family, List, Numerics, Source};

/// Axiom tolerance and sample count used to vet spec-file algebroids before
/// any other command runs on them.
const SPEC_CHECK_POINTS: usize = 100;
const SPEC_CHECK_TOL: f64 = 1e-8;

pub struct Report {
    pub json: Value,
    pub exit: u8,
}

impl Report {
    fn ok(json: Value) -> Self {
        Report { json, exit: 0 }
    }
}

pub fn run(cmd: Command) -> Result<Report, CliError> {
    match cmd {
        Command::Axioms { source, points, seed, tol } => axioms(&source, points, seed, tol),
        Command::Isotropy { source, point } => isotropy(&source, point),
        Command::Geodesic { source, point, velocity, steps, period_tmax, out } => {
            geodesic_cmd(&source, point, &velocity, steps, period_tmax, out.as_deref())
        }
        Command::Homotopy { source, point, velocity, path, family, steps, eps_steps, tol } => {
            homotopy(&source, point, velocity, path.as_deref(), family, steps, eps_steps, tol)
        }
        Command::Transport { source, point, velocity, steps, connection } => {
            transport(&source, point, &velocity, steps, connection)
        }
        Command::Monodromy { source, point, numerics } => monodromy(&source, point, &numerics),
        Command::Verdict { source, point, transversal, min_decay_slope, numerics } => {
            verdict(&source, point, transversal, min_decay_slope, &numerics)
        }
        Command::Profile { source, radii, out, numerics } => profile(&source, radii, out.as_deref(), &numerics),
        Command::Cohomology { source, algebra, point } => cohomology(&source, algebra.as_deref(), point),
        Command::Catalog { action } => match action {
            CatalogAction::List => Ok(Report::ok(catalog_list())),
            CatalogAction::Show { name, params } => catalog_show(&name, &params),
        },
    }
}

fn parse_params(params: &[String]) -> Result<BTreeMap<String, String>, CliError> {
    params
        .iter()
        .map(|p| {
            p.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| CliError::Usage(format!("--param expects KEY=VALUE, got `{p}`")))
        })
        .collect()
}

/// Load the example; `checked` vets spec-file inputs (Poisson Jacobi,
/// algebroid axioms) and is off only for `axioms` itself.
fn load(source: &Source, checked: bool) -> Result<ExampleBundle, CliError> {
    match (&source.spec, &source.catalog) {
        (Some(path), None) => {
            let spec = SpecFile::read(path)?;
            let vet = checked && matches!(spec, SpecFile::Algebroid(_));
            let b = spec.build(&path.display().to_string(), checked)?;
            if vet && b.algebroid.dim() + b.algebroid.rank() > 0 {
                let r = b.algebroid.axiom_residuals(SPEC_CHECK_POINTS, 0)?;
                let worst = r.max_anchor_compat.max(r.max_jacobi);
                if worst >= SPEC_CHECK_TOL {
                    return Err(algebroid_core::Error::AxiomViolation { what: "algebroid axioms".into(), residual: worst }.into());
                }
            }
            Ok(b)
        }
        (None, Some(name)) => Ok(catalog::by_name(name, &parse_params(&source.params)?)?),
        (None, None) => Err(CliError::Usage("give a spec file or --catalog NAME".into())),
        (Some(_), Some(_)) => Err(CliError::Usage("give either a spec file or --catalog, not both".into())),
    }
}

/// The point, checked against the chart; optional over a point (`n = 0`).
fn base_point(alg: &LocalAlgebroid, point: Option<List>) -> Result<Vec<f64>, CliError> {
    let x = match point {
        Some(List(v)) => v,
        None if alg.dim() == 0 => Vec::new(),
        None => return Err(CliError::Usage("--point is required".into())),
    };
    if x.len() != alg.dim() {
        return Err(CliError::Usage(format!("--point has {} coordinates, the chart has {}", x.len(), alg.dim())));
    }
    if !alg.in_chart(&x) {
        return Err(CliError::Usage(format!("--point {x:?} lies outside the chart box")));
    }
    Ok(x)
}

fn fiber_vector(alg: &LocalAlgebroid, v: &List) -> Result<Vec<f64>, CliError> {
    if v.0.len() != alg.rank() {
        return Err(CliError::Usage(format!("--velocity has {} components, the rank is {}", v.0.len(), alg.rank())));
    }
    Ok(v.0.clone())
}

fn axioms(source: &Source, points: usize, seed: u64, tol: f64) -> Result<Report, CliError> {
    let b = load(source, false)?;
    let mut out = Map::new();
    out.insert("name".into(), json!(b.name));
    out.insert("points".into(), json!(points));
    out.insert("seed".into(), json!(seed));
    out.insert("tol".into(), float(tol));
    let mut worst = 0.0f64;
    if b.algebroid.dim() + b.algebroid.rank() > 0 {
        let r = b.algebroid.axiom_residuals(points, seed)?;
        out.insert("max_anchor_compat".into(), float(r.max_anchor_compat));
        out.insert("max_jacobi".into(), float(r.max_jacobi));
        worst = r.max_anchor_compat.max(r.max_jacobi);
    }
    if let Some(p) = &b.poisson {
        let r = p.jacobi_residual(points, seed)?;
        out.insert("poisson_jacobi".into(), float(r));
        worst = worst.max(r);
    }
    let pass = worst < tol;
    out.insert("pass".into(), json!(pass));
    Ok(Report { json: Value::Object(out), exit: if pass { 0 } else { 1 } })
}

fn isotropy(source: &Source, point: Option<List>) -> Result<Report, CliError> {
    let b = load(source, true)?;
    let alg = &b.algebroid;
    let x = base_point(alg, point)?;
    let iso = alg.isotropy(&x)?;
    let g = &iso.algebra;
    let m = g.dim();
    let mut constants = Vec::new();
    for i in 0..m {
        for j in 0..m {
            for k in (j + 1)..m {
                let c = g.c(i, j, k);
                if c.abs() > 1e-14 {
                    constants.push(json!({"i": i + 1, "j": j + 1, "k": k + 1, "value": float(c)}));
                }
            }
        }
    }
    Ok(Report::ok(json!({
        "point": floats(&x),
        "anchor_rank": alg.anchor_rank(&x)?.rank,
        "isotropy_dim": m,
        "basis": matrix(&iso.basis),
        "structure_constants": constants,
        "closure_residual": float(iso.closure_residual),
        "jacobi_residual": float(g.jacobi_check()),
        "center_dim": g.center().ncols(),
        "cohomology": g.ce_cohomology_dims(),
    })))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn geodesic_cmd(
    source: &Source,
    point: Option<List>,
    velocity: &List,
    steps: usize,
    period_tmax: Option<f64>,
    out: Option<&Path>,
) -> Result<Report, CliError> {
    let b = load(source, true)?;
    let alg = &b.algebroid;
    let x0 = base_point(alg, point)?;
    let v = fiber_vector(alg, velocity)?;
    let path = geodesic(alg, &x0, &v, steps)?;
    let mut rep = Map::new();
    rep.insert("start".into(), floats(&x0));
    rep.insert("velocity".into(), floats(&v));
    rep.insert("steps".into(), json!(steps));
    rep.insert("end".into(), floats(path.end()));
    rep.insert("path_residual".into(), float(validate_apath(alg, &path)?));
    if let Some(t_max) = period_tmax {
        let period = detect_period(alg, &x0, &v, t_max, steps)?;
        rep.insert("period".into(), period.map_or(Value::Null, float));
        if let Some(t) = period {
            let scaled: Vec<f64> = v.iter().map(|c| c * t).collect();
            let orbit = geodesic(alg, &x0, &scaled, steps)?;
            let l = period_lipschitz_bound(alg, &v, &orbit, 5)?;
            rep.insert("lipschitz_bound".into(), float(l));
            rep.insert("period_lower_bound".into(), float(2.0 * std::f64::consts::PI / l));
        }
    }
    if let Some(p) = out {
        write_file(p, &path.to_csv())?;
        rep.insert("csv".into(), json!(p.display().to_string()));
    }
    Ok(Report::ok(Value::Object(rep)))
}

#[allow(clippy::too_many_arguments)]
fn homotopy(
    source: &Source,
    point: Option<List>,
    velocity: Option<List>,
    path: Option<&Path>,
    family: Family,
    steps: usize,
    eps_steps: usize,
    tol: f64,
) -> Result<Report, CliError> {
    let b = load(source, true)?;
    let alg = &b.algebroid;
    let base = match (path, velocity) {
        (Some(p), _) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            APath::from_csv(&text)?
        }
        (None, Some(v)) => geodesic(alg, &base_point(alg, point)?, &fiber_vector(alg, &v)?, steps)?,
        (None, None) => return Err(CliError::Usage("give --velocity or --path".into())),
    };
    let var = match family {
        Family::Reparam => reparametrization_variation(alg, &base, &default_cutoff(), eps_steps)?,
        Family::Constant => Variation::constant(&base, eps_steps)?,
    };
    let check = is_homotopy(alg, &var, tol)?;
    Ok(Report::ok(json!({
        "family": match family { Family::Reparam => "reparametrization", Family::Constant => "constant" },
        "steps": base.steps(),
        "eps_steps": eps_steps,
        "path_residual": float(validate_apath(alg, &base)?),
        "endpoint_drift": float(var.endpoint_drift()),
        "max_end": float(check.max_end),
        "tol": float(tol),
        "accepted": check.accepted,
    })))
}

fn transport(
    source: &Source,
    point: Option<List>,
    velocity: &List,
    steps: usize,
    kind: ConnectionKind,
) -> Result<Report, CliError> {
    let b = load(source, true)?;
    let alg = &b.algebroid;
    let x0 = base_point(alg, point)?;
    let v = fiber_vector(alg, velocity)?;
    let path = geodesic(alg, &x0, &v, steps)?;
    let conn = match kind {
        ConnectionKind::Flat => Connection::Flat,
        ConnectionKind::Adjoint => Connection::Adjoint,
    };
    let u = parallel_transport(alg, &path, &conn)?;
    let mut rep = Map::new();
    rep.insert("connection".into(), json!(match kind { ConnectionKind::Flat => "flat", ConnectionKind::Adjoint => "adjoint" }));
    rep.insert("steps".into(), json!(steps));
    rep.insert("end".into(), floats(path.end()));
    rep.insert("matrix".into(), matrix(&u));
    if alg.dim() == 0 && kind == ConnectionKind::Adjoint {
        // Over a point the adjoint transport along a ≡ v is exp(ad_v).
        let g = LieAlgebra::from_tensor(alg.rank(), alg.structure_at(&[])?)?;
        rep.insert("ad_exp_error".into(), float(algebroid_core::linalg::op_norm(&(&u - g.ad_exp(&v)))));
    }
    Ok(Report::ok(Value::Object(rep)))
}

/// Spheres, splitting and center frame for the leaf through `x`.
struct LeafData {
    spheres: Vec<SphereMap>,
    splitting: Splitting,
    frame: CenterFrame,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpheresFile {
    spheres: Vec<SphereEntry>,
    /// `k × n` entries `σ(∂_a)^i`; the pseudo-inverse of the anchor if absent.
    splitting: Option<Vec<Vec<String>>>,
    /// Sections of `A` spanning the center; the isotropy center at the point if absent.
    center_frame: Option<Vec<Vec<String>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SphereEntry {
    label: String,
    /// Components in `theta ∈ [0, π]` and `phi ∈ [0, 2π]`.
    map: Vec<String>,
}

fn leaf_data(b: &ExampleBundle, x: &[f64], spheres: &str) -> Result<LeafData, CliError> {
    let alg = &b.algebroid;
    if spheres == "builtin" {
        let leaves = b.leaves.as_ref().ok_or_else(|| {
            CliError::Usage(format!("`{}` has no built-in leaf data; pass --spheres FILE", b.name))
        })?;
        return Ok(LeafData {
            spheres: (leaves.spheres_at)(x),
            splitting: leaves.splitting.clone(),
            frame: leaves.center_frame.clone(),
        });
    }
    let path = Path::new(spheres);
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{spheres}: {e}")))?;
    let file: SpheresFile = serde_json::from_str(&text).map_err(|e| CliError::Spec(format!("{spheres}: {e}")))?;
    let expr = |at: String, s: &str| s.parse().map_err(|e| CliError::Spec(format!("{spheres}: {at}: {e}")));
    let maps = file
        .spheres
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let comps = s.map.iter().enumerate().map(|(a, c)| expr(format!("spheres[{}].map[{}]", i + 1, a + 1), c));
            Ok(SphereMap::new(s.label.clone(), comps.collect::<Result<_, CliError>>()?))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let splitting = match &file.splitting {
        Some(rows) => Splitting::Matrix(
            rows.iter()
                .enumerate()
                .map(|(i, r)| {
                    r.iter()
                        .enumerate()
                        .map(|(a, c)| expr(format!("splitting[{}][{}]", i + 1, a + 1), c))
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<_, _>>()?,
        ),
        None => Splitting::pseudo_inverse(alg, &[x.to_vec()], None)?,
    };
    let frame = match &file.center_frame {
        Some(secs) => {
            let sections = secs
                .iter()
                .map(|s| Section::parse(&s.iter().map(String::as_str).collect::<Vec<_>>()))
                .collect::<Result<Vec<_>, _>>()?;
            let labels = (1..=sections.len()).map(|i| format!("z{i}")).collect();
            CenterFrame::Sections(sections, labels)
        }
        None => CenterFrame::from_isotropy(alg, x)?,
    };
    Ok(LeafData { spheres: maps, splitting, frame })
}

fn lattice_at(b: &ExampleBundle, x: &[f64], num: &Numerics) -> Result<(Lattice, Vec<CurvatureIntegral>), CliError> {
    let leaf = leaf_data(b, x, &num.spheres)?;
    Ok(monodromy_lattice(&b.algebroid, &leaf.splitting, &leaf.spheres, &leaf.frame, num.grid, num.quad_tol)?)
}

/// Leaf parameter of `x` and the expected generators there, when known.
fn leaf_info(b: &ExampleBundle, x: &[f64], num: &Numerics) -> Result<Value, CliError> {
    match (&b.leaves, num.spheres.as_str()) {
        (Some(l), "builtin") => {
            let value = (l.param_at)(x);
            Ok(json!({"param": l.param, "value": float(value), "expected_generators": floats(&l.expected_at(value)?)}))
        }
        _ => Ok(Value::Null),
    }
}

fn monodromy(source: &Source, point: Option<List>, num: &Numerics) -> Result<Report, CliError> {
    let b = load(source, true)?;
    let x = base_point(&b.algebroid, point)?;
    let (lattice, integrals) = lattice_at(&b, &x, num)?;
    let rep = lattice_discreteness(&lattice, num.eps, num.qmax);
    Ok(Report::ok(json!({
        "point": floats(&x),
        "grid": [num.grid.0, num.grid.1],
        "lattice": to_value(&lattice),
        "integrals": to_value(&integrals),
        "discrete": to_value(&rep.discrete),
        "r_n": float(rep.r_n),
        "minimal_generator": rep.minimal_generator.as_deref().map_or(Value::Null, floats),
        "leaf": leaf_info(&b, &x, num)?,
    })))
}

fn verdict(
    source: &Source,
    point: Option<List>,
    transversal: Option<List>,
    min_decay_slope: f64,
    num: &Numerics,
) -> Result<Report, CliError> {
    let b = load(source, true)?;
    let x = base_point(&b.algebroid, point)?;
    let (lattice, integrals) = lattice_at(&b, &x, num)?;
    let params = transversal.map(|l| l.0).unwrap_or_default();
    let samples = if params.is_empty() {
        Vec::new()
    } else {
        let leaves = match (&b.leaves, num.spheres.as_str()) {
            (Some(l), "builtin") => l,
            _ => return Err(CliError::Usage("--transversal needs the built-in leaf family of a catalog entry".into())),
        };
        let p0 = (leaves.param_at)(&x);
        params
            .par_iter()
            .map(|&p| {
                let xp = (leaves.point_at)(p);
                let (l, _) = lattice_at(&b, &xp, num)?;
                let r = lattice_discreteness(&l, num.eps, num.qmax);
                Ok(TransversalSample { distance: (p - p0).abs(), r_n: r.r_n, discrete: r.discrete })
            })
            .collect::<Result<Vec<_>, CliError>>()?
    };
    let thresholds = VerdictThresholds { eps: num.eps, q_max: num.qmax, min_decay_slope };
    let report = integrability_verdict(&x, lattice, samples, thresholds);
    let mut json = to_value(&report);
    json["integrals"] = to_value(&integrals);
    json["leaf"] = leaf_info(&b, &x, num)?;
    json["grid"] = json!([num.grid.0, num.grid.1]);
    Ok(Report::ok(json))
}

fn profile(source: &Source, radii: Option<List>, out: Option<&Path>, num: &Numerics) -> Result<Report, CliError> {
    let b = load(source, true)?;
    let leaves = match (&b.leaves, num.spheres.as_str()) {
        (Some(l), "builtin") => l,
        _ => return Err(CliError::Usage("profile needs the built-in leaf family of a catalog entry".into())),
    };
    let params = radii.map(|l| l.0).unwrap_or_default();
    let points: Vec<Vec<f64>> = params.iter().map(|&p| (leaves.point_at)(p)).collect();
    let numerical = AtomicBool::new(false);
    let rows = rn_profile(
        &points,
        |x| {
            lattice_at(&b, x, num).map(|(l, _)| l).map_err(|e| {
                if e.exit_code() == 2 {
                    numerical.store(true, Ordering::Relaxed);
                }
                match e {
                    CliError::Core(c) => c,
                    other => algebroid_core::Error::Invalid(other.to_string()),
                }
            })
        },
        num.eps,
        num.qmax,
    );
    let csv = profile_csv(&rows, Some((leaves.param.as_str(), &params)));
    if let Some(p) = out {
        write_file(p, &csv)?;
    }
    let rows_json: Vec<Value> = rows
        .iter()
        .zip(&params)
        .map(|(r, p)| {
            let mut v = to_value(r);
            v["param"] = float(*p);
            v
        })
        .collect();
    Ok(Report {
        json: json!({
            "param": leaves.param,
            "rows": rows_json,
            "csv": out.map(|p| p.display().to_string()),
            "grid": [num.grid.0, num.grid.1],
        }),
        exit: if numerical.load(Ordering::Relaxed) { 2 } else { 0 },
    })
}

fn cohomology(source: &Source, algebra: Option<&str>, point: Option<List>) -> Result<Report, CliError> {
    let (label, g) = match algebra {
        Some(name) => {
            let g = LieAlgebra::by_name(name).ok_or_else(|| CliError::Usage(format!("unknown Lie algebra `{name}`")))?;
            (name.to_string(), g)
        }
        None => {
            let b = load(source, true)?;
            let x = base_point(&b.algebroid, point)?;
            (format!("isotropy of {} at {x:?}", b.name), b.algebroid.isotropy(&x)?.algebra)
        }
    };
    Ok(Report::ok(json!({
        "algebra": label,
        "dim": g.dim(),
        "dims": g.ce_cohomology_dims(),
        "d_squared_residual": float(g.ce_square_residual()),
    })))
}

fn catalog_list() -> Value {
    let entries: Vec<Value> = ENTRIES.iter().map(|(n, d)| json!({"name": n, "description": d})).collect();
    json!({ "entries": entries })
}

fn catalog_show(name: &str, params: &[String]) -> Result<Report, CliError> {
    let b = catalog::by_name(name, &parse_params(params)?)?;
    let alg = &b.algebroid;
    let (n, k) = (alg.dim(), alg.rank());
    let anchor: Vec<Vec<String>> = (0..k).map(|i| (0..n).map(|a| alg.anchor_expr(i, a).to_string()).collect()).collect();
    let mut structure = Vec::new();
    for i in 0..k {
        for j in 0..k {
            for l in (j + 1)..k {
                let e = alg.structure_expr(i, j, l);
                if !e.is_zero() {
                    structure.push(json!({"i": i + 1, "j": j + 1, "k": l + 1, "expr": e.to_string()}));
                }
            }
        }
    }
    let poisson = b.poisson.as_ref().map(|p| {
        let mut entries = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if !p.entry(i, j).is_zero() {
                    entries.push(json!({"i": i + 1, "j": j + 1, "expr": p.entry(i, j).to_string()}));
                }
            }
        }
        entries
    });
    let leaves = b.leaves.as_ref().map(|l| {
        json!({
            "param": l.param,
            "center_frame": l.center_frame.labels(),
            "splitting": match l.splitting { Splitting::Matrix(_) => "matrix", Splitting::PseudoInverse { .. } => "pseudo-inverse" },
            "expected_generators": l.expected_generators.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
        })
    });
    let description = ENTRIES.iter().find(|(e, _)| *e == name).map(|(_, d)| *d);
    Ok(Report::ok(json!({
        "name": b.name,
        "entry": name,
        "description": description,
        "coords": alg.coords(),
        "dim": n,
        "rank": k,
        "chart_box": alg.chart_box().iter().map(|&(lo, hi)| floats(&[lo, hi])).collect::<Vec<_>>(),
        "anchor": anchor,
        "structure": structure,
        "poisson": poisson,
        "leaves": leaves,
    })))
}
