use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_algebroid-lab")).args(args).output().expect("binary runs")
}

fn json(args: &[&str]) -> Value {
    let out = run(args);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn num(v: &Value) -> f64 {
    match v {
        Value::String(s) if s == "inf" => f64::INFINITY,
        _ => v.as_f64().expect("number"),
    }
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.display().to_string()
}

const RESCALED: &[&str] = &["--catalog", "su2_rescaled", "--param", "a=exp(r^2/2)"];

fn with<'a>(head: &[&'a str], base: &[&'a str], tail: &[&'a str]) -> Vec<&'a str> {
    head.iter().chain(base).chain(tail).copied().collect()
}

#[test]
fn axioms_on_catalog_entries() {
    let v = json(&with(&["axioms"], RESCALED, &[]));
    assert_eq!(v["pass"], true);
    assert!(num(&v["max_jacobi"]) < 1e-8);
    let v = json(&["axioms", "--catalog", "tangent", "--param", "n=3"]);
    assert_eq!(num(&v["max_jacobi"]), 0.0);
    assert_eq!(num(&v["max_anchor_compat"]), 0.0);
}

const SU2_SPEC: &str = r#"{
  "version": 1, "mode": "algebroid", "coords": ["x1", "x2", "x3"],
  "anchor": [["0", "x3", "-x2"], ["-x3", "0", "x1"], ["x2", "-x1", "0"]],
  "structure": [
    {"i": 3, "j": 1, "k": 2, "expr": "1"},
    {"i": 1, "j": 2, "k": 3, "expr": "1"},
    {"i": 2, "j": 1, "k": 3, "expr": "-1"}
  ],
  "chart_box": [[-1, 1], [-1, 1], [-1, 1]]
}"#;

#[test]
fn spec_files_are_validated() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "su2.json", SU2_SPEC);
    assert_eq!(json(&["axioms", &good])["pass"], true);
    assert_eq!(json(&["isotropy", &good, "--point", "0,0,0"])["isotropy_dim"], 3);

    let bad = write(dir.path(), "bad.json", &SU2_SPEC.replace(r#""i": 1, "j": 2, "k": 3, "expr": "1""#, r#""i": 1, "j": 2, "k": 3, "expr": "1.01""#));
    let out = run(&["axioms", &bad]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["pass"], false);
    // Other commands refuse an algebroid that fails the axioms.
    let out = run(&["isotropy", &bad, "--point", "0,0,0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("axiom"));

    let typo = write(dir.path(), "typo.json", &SU2_SPEC.replace(r#""-x1", "0""#, r#""-x1 +", "0""#));
    let out = run(&["axioms", &typo]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("anchor[3][2]"));

    let spheres = write(
        dir.path(),
        "spheres.json",
        r#"{"spheres": [{"label": "S", "map": ["sin(theta)*cos(phi)", "sin(theta)*sin(phi)", "cos(theta)"]}],
            "center_frame": [["x1", "x2", "x3"]]}"#,
    );
    let v = json(&["monodromy", &good, "--point", "0,0,1", "--spheres", &spheres]);
    assert!((num(&v["r_n"]) - 4.0 * PI).abs() < 1e-6);
    // The constant isotropy center e_3 is not flat along the sphere.
    let plain = write(dir.path(), "plain.json", r#"{"spheres": [{"label": "S", "map": ["sin(theta)*cos(phi)", "sin(theta)*sin(phi)", "cos(theta)"]}]}"#);
    assert_eq!(run(&["monodromy", &good, "--point", "0,0,1", "--spheres", &plain]).status.code(), Some(1));

    let missing = run(&["axioms", "/nonexistent/spec.json"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["monodromy"]).status.code(), Some(1));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["axioms", "--catalog", "nope"]).status.code(), Some(1));
    assert_eq!(run(&["axioms", "--catalog", "tangent", "--param", "n"]).status.code(), Some(1));
    assert_eq!(run(&["monodromy", "--catalog", "su2_rescaled", "--point", "0,0,5"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn monodromy_values() {
    let v = json(&["monodromy", "--catalog", "su2_rescaled", "--point", "0,0,1"]);
    assert!((num(&v["r_n"]) - 4.0 * PI).abs() < 1e-3);
    assert_eq!(v["discrete"], "discrete");
    let v = json(&["monodromy", "--catalog", "two_form", "--param", "lambda=0.6", "--point", "pi/2,0,pi/2,0"]);
    assert!((num(&v["r_n"]) - 0.8 * PI).abs() < 1e-3);
}

#[test]
fn verdicts() {
    let transversal: Vec<String> = (1..=8).flat_map(|m| [1.0 + 0.5f64.powi(m), 1.0 - 0.5f64.powi(m)]).map(|p| p.to_string()).collect();
    let t = transversal.join(",");
    let v = json(&with(&["verdict"], RESCALED, &["--point", "0,0,1", "--transversal", &t]));
    assert_eq!(v["verdict"], "obstruction-(ii)");
    let v = json(&["verdict", "--catalog", "su2_rescaled", "--point", "0,0,1", "--transversal", "0.5,1.5"]);
    assert_eq!(v["verdict"], "integrable-at-x");
    let v = json(&["verdict", "--catalog", "two_form", "--param", "lambda=sqrt(2)", "--point", "pi/2,0,pi/2,0"]);
    assert_eq!(v["verdict"], "obstruction-(i)");
}

#[test]
fn profile_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("p.csv");
    let csv_s = csv.display().to_string();
    json(&with(&["profile"], RESCALED, &["--radii", "0.5,1", "--grid", "100,200", "--out", &csv_s]));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "r,r_n,generator");
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("1e0,inf,"));
    let expected = 4.0 * PI * 0.75 * (-0.125f64).exp();
    let r_n: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
    assert!((r_n - expected).abs() < 1e-3 * expected);

    let empty = dir.path().join("e.csv");
    let v = json(&["profile", "--catalog", "su2_rescaled", "--radii", "", "--out", &empty.display().to_string()]);
    assert_eq!(v["rows"], Value::Array(vec![]));
    assert_eq!(std::fs::read_to_string(&empty).unwrap(), "");
}

#[test]
fn geodesic_period_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.csv");
    let v = json(&[
        "geodesic", "--catalog", "su2_rescaled", "--point", "0.3,0,0.4", "--velocity", "0,0,1",
        "--period-tmax", "10", "--out", &out.display().to_string(),
    ]);
    assert!((num(&v["period"]) - 2.0 * PI).abs() < 1e-6);
    assert!(num(&v["period_lower_bound"]) <= num(&v["period"]) + 1e-9);
    assert!(std::fs::read_to_string(&out).unwrap().lines().count() > 1000);
}

#[test]
fn homotopy_and_transport() {
    let v = json(&with(&["homotopy"], RESCALED, &["--point", "0.3,0.1,0.4", "--velocity", "0.5,-0.2,0.7"]));
    assert_eq!(v["accepted"], true);
    let v = json(&["transport", "--catalog", "lie_algebra", "--velocity", "1,2,0.5"]);
    assert!(num(&v["ad_exp_error"]) < 1e-6);
}

#[test]
fn cohomology_and_catalog() {
    let v = json(&["cohomology", "--algebra", "su2"]);
    assert_eq!(v["dims"], serde_json::json!([1, 0, 0, 1]));
    let v = json(&["cohomology", "--catalog", "su2_rescaled", "--point", "0,0,0.5"]);
    assert_eq!(v["dims"], serde_json::json!([1, 1]));
    let list = json(&["catalog", "list"]);
    assert_eq!(list["entries"].as_array().unwrap().len(), 7);
    let show = json(&["catalog", "show", "two_form", "--param", "lambda=0.6"]);
    assert_eq!(show["dim"], 4);
    assert_eq!(show["leaves"]["param"], "lambda");
}

#[test]
fn non_convergence_exits_two() {
    let out = run(&["monodromy", "--catalog", "su2_rescaled", "--point", "0,0,1", "--grid", "4,8", "--quad-tol", "1e-12"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("converge"));
}

#[test]
fn output_is_deterministic() {
    let args = with(&["verdict"], RESCALED, &["--point", "0,0,0.5", "--transversal", "0.4,0.6"]);
    let a = run(&args);
    let b = Command::new(env!("CARGO_BIN_EXE_algebroid-lab")).args(&args).env("ALGEBROID_LAB_THREADS", "3").output().unwrap();
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let bad = Command::new(env!("CARGO_BIN_EXE_algebroid-lab")).args(&args).env("ALGEBROID_LAB_THREADS", "zero").output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
}
