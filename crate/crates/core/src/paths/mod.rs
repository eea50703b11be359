//! A-paths: pairs `(γ, a)` with `ρ(a(t)) = γ̇(t)`, sampled on a uniform grid.

mod homotopy;
mod integrate;
mod transport;

pub use homotopy::{
    concatenate, default_cutoff, homotopy_from_b_field, is_homotopy, reparametrization_variation, solve_b_field,
    solve_b_field_with_connection, BField, HomotopyCheck, Variation,
};
pub use integrate::{
    detect_period, exp_endpoint, geodesic, integrate_section, period_lipschitz_bound, PERIOD_TOL,
};
pub use transport::{parallel_transport, Connection};

use std::fmt::Write as _;

use crate::algebroid::LocalAlgebroid;
use crate::error::{Error, Result};

/// `N + 1` samples at `t_j = j / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct APath {
    pub x: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
}

impl APath {
    pub fn new(x: Vec<Vec<f64>>, a: Vec<Vec<f64>>) -> Result<Self> {
        if x.len() != a.len() || x.len() < 2 {
            return Err(Error::Dimension(format!("path needs matching sample counts ≥ 2, got {} and {}", x.len(), a.len())));
        }
        let (n, k) = (x[0].len(), a[0].len());
        if x.iter().any(|v| v.len() != n) || a.iter().any(|v| v.len() != k) {
            return Err(Error::Dimension("ragged path samples".into()));
        }
        Ok(APath { x, a })
    }

    /// The zero path sitting at `x0`.
    pub fn constant(x0: &[f64], rank: usize, steps: usize) -> Self {
        APath { x: vec![x0.to_vec(); steps + 1], a: vec![vec![0.0; rank]; steps + 1] }
    }

    /// Number of steps `N`.
    pub fn steps(&self) -> usize {
        self.x.len() - 1
    }

    pub fn t(&self, j: usize) -> f64 {
        j as f64 / self.steps() as f64
    }

    pub fn start(&self) -> &[f64] {
        &self.x[0]
    }

    pub fn end(&self) -> &[f64] {
        &self.x[self.steps()]
    }

    pub fn base_dim(&self) -> usize {
        self.x[0].len()
    }

    pub fn rank(&self) -> usize {
        self.a[0].len()
    }

    /// Fiber values scaled by `s`, base path unchanged.
    pub fn scale_fiber(&self, s: f64) -> APath {
        APath { x: self.x.clone(), a: self.a.iter().map(|v| v.iter().map(|c| c * s).collect()).collect() }
    }

    /// `t ↦ (γ(1 − t), −a(1 − t))`.
    pub fn reversed(&self) -> APath {
        APath {
            x: self.x.iter().rev().cloned().collect(),
            a: self.a.iter().rev().map(|v| v.iter().map(|c| -c).collect()).collect(),
        }
    }

    /// CSV with header `t,x1..xn,a1..ak`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for i in 1..=self.base_dim() {
            write!(out, ",x{i}").unwrap();
        }
        for i in 1..=self.rank() {
            write!(out, ",a{i}").unwrap();
        }
        out.push('\n');
        for j in 0..=self.steps() {
            write!(out, "{:e}", self.t(j)).unwrap();
            for v in self.x[j].iter().chain(&self.a[j]) {
                write!(out, ",{v:e}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(src: &str) -> Result<APath> {
        let mut lines = src.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines.next().ok_or_else(|| Error::Invalid("empty path CSV".into()))?.split(',').map(str::trim).collect();
        if header.first() != Some(&"t") {
            return Err(Error::Invalid("path CSV must start with a `t` column".into()));
        }
        let n = header.iter().filter(|h| h.starts_with('x')).count();
        let k = header.iter().filter(|h| h.starts_with('a')).count();
        if n + k + 1 != header.len() {
            return Err(Error::Invalid("path CSV columns must be t, x*, a*".into()));
        }
        let (mut xs, mut as_) = (Vec::new(), Vec::new());
        for (row, line) in lines.enumerate() {
            let vals = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Invalid(format!("path CSV row {}: {e}", row + 2)))?;
            if vals.len() != header.len() {
                return Err(Error::Invalid(format!("path CSV row {} has {} fields", row + 2, vals.len())));
            }
            xs.push(vals[1..=n].to_vec());
            as_.push(vals[n + 1..].to_vec());
        }
        let p = APath::new(xs, as_)?;
        Ok(p)
    }
}

/// Max over interior nodes of `|ρ(a_j)(x_j) − (x_{j+1} − x_{j−1}) N / 2|`.
pub fn validate_apath(alg: &LocalAlgebroid, p: &APath) -> Result<f64> {
    check_dims(alg, p)?;
    let n = alg.dim();
    let steps = p.steps() as f64;
    let mut ev = alg.evaluator();
    let mut v = vec![0.0; n];
    let mut worst = 0.0f64;
    for j in 1..p.steps() {
        ev.anchor_apply(&p.a[j], &p.x[j], &mut v)?;
        for c in 0..n {
            let fd = (p.x[j + 1][c] - p.x[j - 1][c]) * steps / 2.0;
            worst = worst.max((v[c] - fd).abs());
        }
    }
    Ok(worst)
}

pub(crate) fn check_dims(alg: &LocalAlgebroid, p: &APath) -> Result<()> {
    if p.base_dim() != alg.dim() || p.rank() != alg.rank() {
        return Err(Error::Dimension(format!(
            "path has (n, k) = ({}, {}), algebroid has ({}, {})",
            p.base_dim(),
            p.rank(),
            alg.dim(),
            alg.rank()
        )));
    }
    Ok(())
}

/// Continuous evaluation of a sampled path by cubic Lagrange interpolation
/// of both components. Does not assume the A-path condition, so it also
/// serves off-shell paths.
pub struct PathInterpolant<'p> {
    path: &'p APath,
}

impl<'p> PathInterpolant<'p> {
    pub fn new(path: &'p APath) -> Self {
        PathInterpolant { path }
    }

    pub fn sample(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        (self.base(t), self.fiber(t))
    }

    pub fn base(&self, t: f64) -> Vec<f64> {
        lagrange_sample(&self.path.x, t)
    }

    pub fn fiber(&self, t: f64) -> Vec<f64> {
        lagrange_sample(&self.path.a, t)
    }
}

/// Cubic Lagrange interpolation of uniformly sampled vectors on `[0, 1]`.
pub(crate) fn lagrange_sample(values: &[Vec<f64>], t: f64) -> Vec<f64> {
    let steps = values.len() - 1;
    let u = t * steps as f64;
    let (start, width) = if steps >= 3 {
        (((u.floor() as isize) - 1).clamp(0, steps as isize - 3) as usize, 4)
    } else {
        ((u.floor() as isize).clamp(0, steps as isize - 1) as usize, 2)
    };
    let local = u - start as f64;
    let mut out = vec![0.0; values[0].len()];
    for m in 0..width {
        let mut w = 1.0;
        for l in 0..width {
            if l != m {
                w *= (local - l as f64) / (m as f64 - l as f64);
            }
        }
        if w != 0.0 {
            for (o, v) in out.iter_mut().zip(&values[start + m]) {
                *o += w * v;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let p = APath::new(
            vec![vec![0.0, 1.0], vec![0.5, 1.25], vec![1.0, 1.0 / 3.0]],
            vec![vec![1.0], vec![-2.0], vec![0.1]],
        )
        .unwrap();
        let csv = p.to_csv();
        assert!(csv.starts_with("t,x1,x2,a1\n"));
        assert_eq!(APath::from_csv(&csv).unwrap(), p);
        assert!(APath::from_csv("t,x1\n0,1,2\n").is_err());
        assert!(APath::from_csv("").is_err());
    }

    #[test]
    fn lagrange_is_exact_on_cubics() {
        let f = |t: f64| 1.0 - 2.0 * t + 0.5 * t * t * t;
        let vals: Vec<Vec<f64>> = (0..=10).map(|j| vec![f(j as f64 / 10.0)]).collect();
        for &t in &[0.0, 0.03, 0.47, 0.99, 1.0] {
            assert!((lagrange_sample(&vals, t)[0] - f(t)).abs() < 1e-14);
        }
    }
}
