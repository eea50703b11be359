//! Spec files: JSON documents describing an algebroid, a Poisson structure or
//! a catalog entry. Indices are 1-based; expressions are strings.

use std::collections::BTreeMap;
use std::path::Path;

use algebroid_core::catalog::{self, ExampleBundle};
use algebroid_core::{Expr, LocalAlgebroid, PoissonStructure, StructureFunctions};
use serde::Deserialize;
use serde_json::Value;

use crate::CliError;

pub const SPEC_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum SpecFile {
    Algebroid(AlgebroidSpec),
    Poisson(PoissonSpec),
    Catalog(CatalogSpec),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgebroidSpec {
    version: u32,
    n: Option<usize>,
    k: Option<usize>,
    coords: Vec<String>,
    /// `k` rows of `n` entries: `anchor[i][a] = b^a_i`.
    anchor: Vec<Vec<String>>,
    #[serde(default)]
    structure: Vec<StructureEntry>,
    chart_box: Vec<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoissonSpec {
    version: u32,
    n: Option<usize>,
    coords: Vec<String>,
    bivector: Vec<BivectorEntry>,
    chart_box: Vec<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogSpec {
    version: u32,
    name: String,
    #[serde(default)]
    params: BTreeMap<String, Value>,
}

/// `c^i_{jk}` with `j < k`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureEntry {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub expr: String,
}

/// `π^{ij}` with `i < j`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BivectorEntry {
    pub i: usize,
    pub j: usize,
    pub expr: String,
}

fn invalid(at: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Spec(format!("{at}: {msg}"))
}

fn parse_expr(at: &str, src: &str) -> Result<Expr, CliError> {
    src.parse().map_err(|e| invalid(at, e))
}

fn index(at: &str, one_based: usize, bound: usize) -> Result<usize, CliError> {
    if one_based == 0 || one_based > bound {
        return Err(invalid(at, format!("index {one_based} outside 1..={bound}")));
    }
    Ok(one_based - 1)
}

fn check_version(v: u32) -> Result<(), CliError> {
    if v != SPEC_VERSION {
        return Err(invalid("version", format!("unsupported spec version {v}, expected {SPEC_VERSION}")));
    }
    Ok(())
}

fn chart(chart_box: &[[f64; 2]]) -> Vec<(f64, f64)> {
    chart_box.iter().map(|&[lo, hi]| (lo, hi)).collect()
}

/// Parameter values may be strings or numbers.
pub fn param_string(v: &Value) -> Result<String, CliError> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        other => Err(invalid("params", format!("expected a string or number, got {other}"))),
    }
}

impl SpecFile {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Spec(format!("{}: {e}", path.display())))
    }

    /// Build the example. `checked` runs the Poisson Jacobi check when
    /// building a cotangent algebroid.
    pub fn build(self, label: &str, checked: bool) -> Result<ExampleBundle, CliError> {
        match self {
            SpecFile::Algebroid(AlgebroidSpec { version, n, k, coords, anchor, structure, chart_box }) => {
                check_version(version)?;
                let dim = coords.len();
                let rank = anchor.len();
                if n.is_some_and(|n| n != dim) {
                    return Err(invalid("n", format!("{} does not match {dim} coordinates", n.unwrap())));
                }
                if k.is_some_and(|k| k != rank) {
                    return Err(invalid("k", format!("{} does not match {rank} anchor rows", k.unwrap())));
                }
                let mut rows = Vec::with_capacity(rank);
                for (i, row) in anchor.iter().enumerate() {
                    if row.len() != dim {
                        return Err(invalid(&format!("anchor[{}]", i + 1), format!("has {} entries, expected {dim}", row.len())));
                    }
                    rows.push(
                        row.iter()
                            .enumerate()
                            .map(|(a, s)| parse_expr(&format!("anchor[{}][{}]", i + 1, a + 1), s))
                            .collect::<Result<Vec<_>, _>>()?,
                    );
                }
                let mut s = StructureFunctions::zero(rank);
                for (m, e) in structure.iter().enumerate() {
                    let at = format!("structure[{}]", m + 1);
                    let (i, j, l) = (index(&at, e.i, rank)?, index(&at, e.j, rank)?, index(&at, e.k, rank)?);
                    if j >= l {
                        return Err(invalid(&at, "entries must have j < k"));
                    }
                    s.set(i, j, l, parse_expr(&format!("{at}.expr"), &e.expr)?).map_err(|e| invalid(&at, e))?;
                }
                let alg = LocalAlgebroid::new(coords, rows, s, chart(&chart_box))?;
                Ok(ExampleBundle { name: label.into(), algebroid: alg, poisson: None, leaves: None })
            }
            SpecFile::Poisson(PoissonSpec { version, n, coords, bivector, chart_box }) => {
                check_version(version)?;
                let dim = coords.len();
                if n.is_some_and(|n| n != dim) {
                    return Err(invalid("n", format!("{} does not match {dim} coordinates", n.unwrap())));
                }
                let mut upper = Vec::with_capacity(bivector.len());
                for (m, e) in bivector.iter().enumerate() {
                    let at = format!("bivector[{}]", m + 1);
                    let (i, j) = (index(&at, e.i, dim)?, index(&at, e.j, dim)?);
                    if i >= j {
                        return Err(invalid(&at, "entries must have i < j"));
                    }
                    upper.push((i, j, parse_expr(&format!("{at}.expr"), &e.expr)?));
                }
                let p = PoissonStructure::new(coords, upper, chart(&chart_box))?;
                let alg = if checked { p.cotangent_algebroid()? } else { p.cotangent_algebroid_unchecked()? };
                Ok(ExampleBundle { name: label.into(), algebroid: alg, poisson: Some(p), leaves: None })
            }
            SpecFile::Catalog(CatalogSpec { version, name, params }) => {
                check_version(version)?;
                let params = params
                    .iter()
                    .map(|(k, v)| Ok((k.clone(), param_string(v)?)))
                    .collect::<Result<BTreeMap<_, _>, CliError>>()?;
                Ok(catalog::by_name(&name, &params)?)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn build(src: &str) -> Result<ExampleBundle, CliError> {
        serde_json::from_str::<SpecFile>(src).map_err(|e| CliError::Spec(e.to_string()))?.build("test", true)
    }

    #[test]
    fn algebroid_specs() {
        let b = build(
            r#"{"version": 1, "mode": "algebroid", "coords": ["x"], "anchor": [["x"], ["0"]],
                "structure": [{"i": 1, "j": 1, "k": 2, "expr": "0"}], "chart_box": [[-1, 1]]}"#,
        )
        .unwrap();
        assert_eq!((b.algebroid.dim(), b.algebroid.rank()), (1, 2));
        let err = build(
            r#"{"version": 1, "mode": "algebroid", "coords": ["x"], "anchor": [["x"]],
                "structure": [{"i": 1, "j": 1, "k": 2, "expr": "0"}], "chart_box": [[-1, 1]]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("structure[1]"), "{err}");
        let err = build(
            r#"{"version": 1, "mode": "algebroid", "coords": ["x"], "anchor": [["x +"]], "chart_box": [[-1, 1]]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("anchor[1][1]"), "{err}");
    }

    #[test]
    fn version_and_unknown_fields() {
        let err = build(r#"{"version": 2, "mode": "catalog", "name": "tangent"}"#).unwrap_err();
        assert!(err.to_string().contains("version"));
        assert!(build(r#"{"version": 1, "mode": "catalog", "name": "tangent", "extra": 1}"#).is_err());
        let b = build(r#"{"version": 1, "mode": "catalog", "name": "tangent", "params": {"n": 2}}"#).unwrap();
        assert_eq!(b.algebroid.dim(), 2);
    }

    #[test]
    fn poisson_specs_check_jacobi() {
        let bad = r#"{"version": 1, "mode": "poisson", "coords": ["x1", "x2", "x3"],
            "bivector": [{"i": 1, "j": 2, "expr": "x3^2"}, {"i": 1, "j": 3, "expr": "x2"}, {"i": 2, "j": 3, "expr": "x2"}],
            "chart_box": [[-1, 1], [-1, 1], [-1, 1]]}"#;
        assert!(matches!(build(bad), Err(CliError::Core(_))));
        let spec: SpecFile = serde_json::from_str(bad).unwrap();
        assert!(spec.build("bad", false).is_ok());
    }
}
