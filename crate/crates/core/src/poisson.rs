//! Poisson bivectors, their cotangent algebroids and contravariant calculus.
//!
//! Conventions: `{f, g} = π^{ij} ∂_i f ∂_j g`, `ρ(dx^i) = π^{ia} ∂_a`, hence
//! `ρ(df) = X_f` with `X_f(g) = {f, g}` and `[df, dg] = d{f, g}`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::algebroid::{LocalAlgebroid, StructureFunctions, TIME_VAR};
use crate::error::{Error, Result};
use crate::expr::{Expr, Program};
use crate::paths::{concatenate, APath, PathInterpolant};

/// Jacobi tolerance enforced when building the cotangent algebroid.
pub const JACOBI_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct PoissonStructure {
    coords: Vec<String>,
    pi: Vec<Vec<Expr>>,
    chart_box: Vec<(f64, f64)>,
}

impl PoissonStructure {
    /// From the entries `π^{ij}`, `i < j`; the rest follows by antisymmetry.
    pub fn new(coords: Vec<String>, upper: Vec<(usize, usize, Expr)>, chart_box: Vec<(f64, f64)>) -> Result<Self> {
        let n = coords.len();
        if chart_box.len() != n {
            return Err(Error::Dimension(format!("chart box has {} intervals for {n} coordinates", chart_box.len())));
        }
        let mut pi = vec![vec![Expr::zero(); n]; n];
        for (i, j, e) in upper {
            if i >= n || j >= n || i == j {
                return Err(Error::Dimension(format!("bivector entry ({i}, {j}) out of range")));
            }
            pi[j][i] = -&e;
            pi[i][j] = e;
        }
        Ok(PoissonStructure { coords, pi, chart_box })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    pub fn chart_box(&self) -> &[(f64, f64)] {
        &self.chart_box
    }

    /// `π^{ij}`.
    pub fn entry(&self, i: usize, j: usize) -> &Expr {
        &self.pi[i][j]
    }

    fn vars(&self) -> Vec<&str> {
        self.coords.iter().map(String::as_str).collect()
    }

    /// `{f, g}`.
    pub fn bracket(&self, f: &Expr, g: &Expr) -> Expr {
        let n = self.dim();
        let df: Vec<Expr> = self.coords.iter().map(|c| f.diff(c)).collect();
        let dg: Vec<Expr> = self.coords.iter().map(|c| g.diff(c)).collect();
        let mut acc = Expr::zero();
        for i in 0..n {
            for j in 0..n {
                if !self.pi[i][j].is_zero() && !df[i].is_zero() && !dg[j].is_zero() {
                    acc = acc + &self.pi[i][j] * &df[i] * &dg[j];
                }
            }
        }
        acc
    }

    /// Cyclic sums `Σ_l π^{li} ∂_l π^{jk} + cyc` for `i < j < k`.
    pub fn jacobi_exprs(&self) -> Vec<Expr> {
        let n = self.dim();
        let term = |i: usize, j: usize, k: usize| {
            (0..n).fold(Expr::zero(), |acc, l| {
                if self.pi[l][i].is_zero() {
                    acc
                } else {
                    acc + &self.pi[l][i] * self.pi[j][k].diff(&self.coords[l])
                }
            })
        };
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                for k in (j + 1)..n {
                    out.push(term(i, j, k) + term(j, k, i) + term(k, i, j));
                }
            }
        }
        out
    }

    /// Max of the Jacobi cyclic sums over seeded random points of the chart box.
    pub fn jacobi_residual(&self, num_points: usize, seed: u64) -> Result<f64> {
        let prog = Program::new(&self.jacobi_exprs(), &self.vars())?;
        let points = sample_box(&self.chart_box, num_points, seed, |x| prog.eval(x).map(|_| ()))?;
        let mut worst = 0.0f64;
        for x in &points {
            worst = prog.eval(x)?.into_iter().fold(worst, |m, v| m.max(v.abs()));
        }
        Ok(worst)
    }

    /// Cotangent algebroid in the frame `dx^1..dx^n`: `b^a_i = π^{ia}`,
    /// `c^m_{ij} = ∂_m π^{ij}`. Fails if the Jacobi residual exceeds
    /// [`JACOBI_TOL`] at 100 seeded points.
    pub fn cotangent_algebroid(&self) -> Result<LocalAlgebroid> {
        let residual = self.jacobi_residual(100, 0)?;
        if residual > JACOBI_TOL {
            return Err(Error::AxiomViolation { what: "Poisson Jacobi identity".into(), residual });
        }
        self.cotangent_algebroid_unchecked()
    }

    /// As [`Self::cotangent_algebroid`] without the Jacobi check.
    pub fn cotangent_algebroid_unchecked(&self) -> Result<LocalAlgebroid> {
        let n = self.dim();
        let mut s = StructureFunctions::zero(n);
        for i in 0..n {
            for j in (i + 1)..n {
                for m in 0..n {
                    s.set(m, i, j, self.pi[i][j].diff(&self.coords[m]))?;
                }
            }
        }
        LocalAlgebroid::new(self.coords.clone(), self.pi.clone(), s, self.chart_box.clone())
    }

    /// `X_f^a = π^{ia} ∂_i f`, so that `X_f(g) = {f, g}`.
    pub fn hamiltonian_vf(&self, f: &Expr) -> Vec<Expr> {
        let n = self.dim();
        let df: Vec<Expr> = self.coords.iter().map(|c| f.diff(c)).collect();
        (0..n)
            .map(|a| {
                (0..n).fold(Expr::zero(), |acc, i| {
                    if df[i].is_zero() || self.pi[i][a].is_zero() {
                        acc
                    } else {
                        acc + &self.pi[i][a] * &df[i]
                    }
                })
            })
            .collect()
    }

    /// `(L_X π)^{ij} = X^l ∂_l π^{ij} − π^{lj} ∂_l X^i − π^{il} ∂_l X^j`, `i < j`.
    pub fn lie_derivative(&self, field: &[Expr]) -> Result<Vec<Expr>> {
        let n = self.dim();
        if field.len() != n {
            return Err(Error::Dimension(format!("vector field has {} components, expected {n}", field.len())));
        }
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let mut e = Expr::zero();
                for l in 0..n {
                    let c = &self.coords[l];
                    e = e + &field[l] * self.pi[i][j].diff(c)
                        - &self.pi[l][j] * field[i].diff(c)
                        - &self.pi[i][l] * field[j].diff(c);
                }
                out.push(e);
            }
        }
        Ok(out)
    }

    /// Max `|(L_X π)^{ij}|` over the points.
    pub fn is_poisson_vf(&self, field: &[Expr], points: &[Vec<f64>]) -> Result<f64> {
        let prog = Program::new(&self.lie_derivative(field)?, &self.vars())?;
        let mut worst = 0.0f64;
        for x in points {
            worst = prog.eval(x)?.into_iter().fold(worst, |m, v| m.max(v.abs()));
        }
        Ok(worst)
    }

    /// Seeded uniform points of the chart box where `π` is defined.
    pub fn sample_points(&self, num_points: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let flat: Vec<Expr> = self.pi.iter().flatten().cloned().collect();
        let prog = Program::new(&flat, &self.vars())?;
        sample_box(&self.chart_box, num_points, seed, |x| prog.eval(x).map(|_| ()))
    }
}

fn sample_box(
    chart_box: &[(f64, f64)],
    num_points: usize,
    seed: u64,
    defined: impl Fn(&[f64]) -> std::result::Result<(), crate::expr::ExprError>,
) -> Result<Vec<Vec<f64>>> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(num_points);
    for _ in 0..num_points {
        let mut attempt = 0;
        loop {
            let x: Vec<f64> = chart_box.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect();
            match defined(&x) {
                Ok(()) => {
                    out.push(x);
                    break;
                }
                Err(e) if attempt + 1 >= crate::algebroid::MAX_RESAMPLES => {
                    return Err(Error::Sampling { attempts: attempt + 1, last: e })
                }
                Err(_) => attempt += 1,
            }
        }
    }
    Ok(out)
}

/// Composite Simpson rule on a uniform grid of `values.len() − 1` intervals of
/// width `h`; an odd count closes with the 3/8 rule on the last three.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let m = values.len().saturating_sub(1);
    match m {
        0 => 0.0,
        1 => 0.5 * h * (values[0] + values[1]),
        2 => h / 3.0 * (values[0] + 4.0 * values[1] + values[2]),
        _ => {
            let even = if m % 2 == 0 { m } else { m - 3 };
            let mut s = 0.0;
            let mut j = 0;
            while j < even {
                s += h / 3.0 * (values[j] + 4.0 * values[j + 1] + values[j + 2]);
                j += 2;
            }
            if even < m {
                s += 3.0 * h / 8.0 * (values[m - 3] + 3.0 * values[m - 2] + 3.0 * values[m - 1] + values[m]);
            }
            s
        }
    }
}

/// `∫_a X = ∫₀¹ ⟨a(t), X(γ(t))⟩ dt` by Simpson's rule on the path grid.
pub fn integral_along(coords: &[String], field: &[Expr], path: &APath) -> Result<f64> {
    let vars: Vec<&str> = coords.iter().map(String::as_str).collect();
    let prog = Program::new(field, &vars)?;
    if path.rank() != field.len() || path.base_dim() != coords.len() {
        return Err(Error::Dimension("field and cotangent path do not match".into()));
    }
    let vals = path
        .x
        .iter()
        .zip(&path.a)
        .map(|(x, a)| Ok(prog.eval(x)?.iter().zip(a).map(|(u, v)| u * v).sum()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(simpson(&vals, 1.0 / path.steps() as f64))
}

/// Time-dependent 1-form `η(t, x)` given by its components.
pub type OneForm<'a> = dyn Fn(f64, &[f64]) -> Result<Vec<f64>> + 'a;

/// Compile a 1-form whose components are expressions in the coordinates and `t`.
pub fn one_form(coords: &[String], components: &[Expr]) -> Result<impl Fn(f64, &[f64]) -> Result<Vec<f64>>> {
    let mut vars: Vec<&str> = coords.iter().map(String::as_str).collect();
    vars.push(TIME_VAR);
    let prog = Program::new(components, &vars)?;
    Ok(move |t: f64, x: &[f64]| {
        let mut xt = x.to_vec();
        xt.push(t);
        Ok(prog.eval(&xt)?)
    })
}

/// `⟨J(a), η⟩ = ∫₀¹ ⟨γ̇ − ρ(a), η(t, γ(t))⟩ dt`, with `γ̇` from second-order
/// finite differences on the path grid.
pub fn moment_j(alg: &LocalAlgebroid, path: &APath, eta: &OneForm<'_>) -> Result<f64> {
    let steps = path.steps();
    if steps < 2 {
        return Err(Error::Invalid("moment map needs at least two steps".into()));
    }
    let n = alg.dim();
    let inv_2h = steps as f64 / 2.0;
    let mut ev = alg.evaluator();
    let mut rho = vec![0.0; n];
    let mut vals = Vec::with_capacity(steps + 1);
    for j in 0..=steps {
        let x = &path.x;
        let vel: Vec<f64> = (0..n)
            .map(|c| {
                if j == 0 {
                    (-3.0 * x[0][c] + 4.0 * x[1][c] - x[2][c]) * inv_2h
                } else if j == steps {
                    (3.0 * x[j][c] - 4.0 * x[j - 1][c] + x[j - 2][c]) * inv_2h
                } else {
                    (x[j + 1][c] - x[j - 1][c]) * inv_2h
                }
            })
            .collect();
        ev.anchor_apply(&path.a[j], &x[j], &mut rho)?;
        let e = eta(path.t(j), &x[j])?;
        vals.push((0..n).map(|c| (vel[c] - rho[c]) * e[c]).sum::<f64>());
    }
    Ok(simpson(&vals, 1.0 / steps as f64))
}

/// `max_η |J(a₀ ⊙ a₁)(η) − J(a₀)(η₀) − J(a₁)(η₁)|`, where `η₀, η₁` are `η`
/// pulled back along the time changes of the concatenation
/// (`t = τ⁻¹(s)/2` and `t = (1 + τ⁻¹(s))/2`), under which the integral splits
/// exactly.
pub fn j_cocycle_additivity_check(
    alg: &LocalAlgebroid,
    a0: &APath,
    a1: &APath,
    cutoff: &Expr,
    etas: &[&OneForm<'_>],
) -> Result<f64> {
    let joined = concatenate(alg, a0, a1, cutoff)?;
    let tau = Program::single(cutoff, &["t"])?;
    let inverse = |s: f64| -> Result<f64> {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if tau.eval_scalar(&[mid])? < s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    };
    let mut worst = 0.0f64;
    for eta in etas {
        let whole = moment_j(alg, &joined, *eta)?;
        let first = moment_j(alg, a0, &|s, x| eta(0.5 * inverse(s)?, x))?;
        let second = moment_j(alg, a1, &|s, x| eta(0.5 * (1.0 + inverse(s)?), x))?;
        worst = worst.max((whole - first - second).abs());
    }
    Ok(worst)
}

/// Off-shell probe paths: the base path of `path` with the fiber replaced.
pub fn with_fiber(path: &APath, fiber: impl Fn(f64) -> Vec<f64>) -> APath {
    let a = (0..=path.steps()).map(|j| fiber(path.t(j))).collect();
    APath { x: path.x.clone(), a }
}

/// Resample a path on a finer or coarser uniform grid.
pub fn resample(path: &APath, steps: usize) -> APath {
    let p = PathInterpolant::new(path);
    let (xs, as_) = (0..=steps).map(|j| p.sample(j as f64 / steps as f64)).unzip();
    APath { x: xs, a: as_ }
}
