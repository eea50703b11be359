use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::algebroid::{contract, LocalAlgebroid};
use crate::error::{Error, Result};
use crate::expr::{Expr, Program};
use crate::linalg;
use crate::ode::{midpoint_stencil, rk4_step};

use super::{check_dims, APath, PathInterpolant};

/// Drift allowed in the base endpoints across a variation.
const ENDPOINT_DRIFT_TOL: f64 = 1e-9;

/// A family of A-paths `a(ε_i, ·)`, `ε_i = i / M`, on a shared time grid.
#[derive(Debug, Clone)]
pub struct Variation {
    pub slices: Vec<APath>,
}

impl Variation {
    pub fn new(slices: Vec<APath>) -> Result<Self> {
        if slices.len() < 3 {
            return Err(Error::Invalid("a variation needs at least three ε-slices".into()));
        }
        let first = &slices[0];
        if slices
            .iter()
            .any(|s| s.steps() != first.steps() || s.base_dim() != first.base_dim() || s.rank() != first.rank())
        {
            return Err(Error::Dimension("variation slices differ in shape".into()));
        }
        Ok(Variation { slices })
    }

    /// The variation constant in `ε`.
    pub fn constant(path: &APath, eps_steps: usize) -> Result<Self> {
        Variation::new(vec![path.clone(); eps_steps + 1])
    }

    /// Number of ε-steps `M`.
    pub fn eps_steps(&self) -> usize {
        self.slices.len() - 1
    }

    pub fn eps(&self, i: usize) -> f64 {
        i as f64 / self.eps_steps() as f64
    }

    /// Max distance of the base endpoints from those of the first slice.
    pub fn endpoint_drift(&self) -> f64 {
        let (s0, e0) = (self.slices[0].start(), self.slices[0].end());
        self.slices
            .iter()
            .map(|p| linalg::dist(p.start(), s0).max(linalg::dist(p.end(), e0)))
            .fold(0.0, f64::max)
    }

    /// Second-order ε-derivative of a per-node quantity.
    fn eps_derivative(&self, i: usize, get: impl Fn(&APath) -> &Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        let m = self.eps_steps();
        let h = 1.0 / m as f64;
        let (w, idx): ([f64; 3], [usize; 3]) = if i == 0 {
            ([-1.5, 2.0, -0.5], [0, 1, 2])
        } else if i == m {
            ([0.5, -2.0, 1.5], [m - 2, m - 1, m])
        } else {
            ([-0.5, 0.0, 0.5], [i - 1, i, i + 1])
        };
        let rows: Vec<&Vec<Vec<f64>>> = idx.iter().map(|&s| get(&self.slices[s])).collect();
        (0..rows[0].len())
            .map(|j| {
                (0..rows[0][j].len())
                    .map(|c| (0..3).map(|q| w[q] * rows[q][j][c]).sum::<f64>() / h)
                    .collect()
            })
            .collect()
    }
}

/// `b(ε_i, t_j)`.
#[derive(Debug, Clone)]
pub struct BField {
    pub values: Vec<Vec<Vec<f64>>>,
}

impl BField {
    /// `|b(ε_i, 1)|` for each slice.
    pub fn end_norms(&self) -> Vec<f64> {
        self.values.iter().map(|slice| linalg::norm(slice.last().expect("non-empty"))).collect()
    }

    pub fn max_end(&self) -> f64 {
        self.end_norms().into_iter().fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomotopyCheck {
    pub accepted: bool,
    pub max_end: f64,
}

/// Solve `∂_t b − ∂_ε a = T(a, b)`, `b(ε, 0) = 0`, for the flat frame connection.
///
/// With `∇e_i = 0` the torsion is tensorial and `T(e_j, e_l) = −[e_j, e_l]`,
/// so `T(a, b)^i = −c^i_{jl}(γ) a^j b^l`.
pub fn solve_b_field(alg: &LocalAlgebroid, var: &Variation) -> Result<BField> {
    solve(alg, var, None)
}

/// As [`solve_b_field`] for a connection with Christoffel map
/// `X ↦ Γ_x(X)` (a `k × k` matrix per tangent vector `X`). Writing the equation
/// in the frame gives
/// `∂_t b = ∂_ε a + Γ(∂_ε γ − ρ(b)) a − c(a, b)`; on an exact solution
/// `∂_ε γ = ρ(b)` and the extra term vanishes.
pub fn solve_b_field_with_connection(
    alg: &LocalAlgebroid,
    var: &Variation,
    gamma: &(dyn Fn(&[f64], &[f64]) -> DMatrix<f64> + Sync),
) -> Result<BField> {
    solve(alg, var, Some(gamma))
}

type Gamma<'a> = Option<&'a (dyn Fn(&[f64], &[f64]) -> DMatrix<f64> + Sync)>;

fn solve(alg: &LocalAlgebroid, var: &Variation, gamma: Gamma<'_>) -> Result<BField> {
    check_dims(alg, &var.slices[0])?;
    let values = (0..=var.eps_steps())
        .into_par_iter()
        .map(|i| solve_slice(alg, var, i, gamma))
        .collect::<Result<Vec<_>>>()?;
    Ok(BField { values })
}

fn solve_slice(alg: &LocalAlgebroid, var: &Variation, i: usize, gamma: Gamma<'_>) -> Result<Vec<Vec<f64>>> {
    let (n, k) = (alg.dim(), alg.rank());
    let slice = &var.slices[i];
    let steps = slice.steps();
    let h = 1.0 / steps as f64;
    let da = var.eps_derivative(i, |p| &p.a);
    let dx = if gamma.is_some() { var.eps_derivative(i, |p| &p.x) } else { Vec::new() };
    let mut ev = alg.evaluator();

    struct Node {
        x: Vec<f64>,
        a: Vec<f64>,
        da: Vec<f64>,
        dx: Vec<f64>,
    }
    let node = |j: usize| Node {
        x: slice.x[j].clone(),
        a: slice.a[j].clone(),
        da: da[j].clone(),
        dx: dx.get(j).cloned().unwrap_or_default(),
    };
    let midpoint = |j: usize| {
        let (start, w) = midpoint_stencil(j, steps + 1);
        let mix = |vals: &dyn Fn(usize) -> Vec<f64>| {
            let mut out = vals(start);
            out.iter_mut().for_each(|v| *v *= w[0]);
            for (m, wm) in w.iter().enumerate().skip(1) {
                if *wm != 0.0 {
                    for (o, v) in out.iter_mut().zip(vals(start + m)) {
                        *o += wm * v;
                    }
                }
            }
            out
        };
        Node {
            x: mix(&|s| slice.x[s].clone()),
            a: mix(&|s| slice.a[s].clone()),
            da: mix(&|s| da[s].clone()),
            dx: if gamma.is_some() { mix(&|s| dx[s].clone()) } else { Vec::new() },
        }
    };

    let mut b = vec![0.0; k];
    let mut out = Vec::with_capacity(steps + 1);
    out.push(b.clone());
    let mut m = vec![0.0; k * k];
    let mut rho_b = vec![0.0; n];
    for j in 0..steps {
        let nodes = [node(j), midpoint(j), node(j + 1)];
        let mut stage = 0;
        let mut rhs = |_: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
            let nd = &nodes[[0, 1, 1, 2][stage]];
            stage += 1;
            // c(a, y)^i = M^i_l y^l with M^i_l = c^i_{jl} a^j
            ev.structure_contract_first(&nd.a, &nd.x, &mut m)?;
            for r in 0..k {
                dy[r] = nd.da[r] - (0..k).map(|l| m[r * k + l] * y[l]).sum::<f64>();
            }
            if let Some(g) = gamma {
                ev.anchor_apply(y, &nd.x, &mut rho_b)?;
                let dir: Vec<f64> = nd.dx.iter().zip(&rho_b).map(|(d, r)| d - r).collect();
                let gm = g(&nd.x, &dir);
                for r in 0..k {
                    dy[r] += (0..k).map(|l| gm[(r, l)] * nd.a[l]).sum::<f64>();
                }
            }
            Ok(())
        };
        rk4_step(&mut rhs, j as f64 * h, &mut b, h)?;
        out.push(b.clone());
    }
    Ok(out)
}

/// Accept the variation as an A-homotopy iff `max_ε |b(ε, 1)| < tol`.
pub fn is_homotopy(alg: &LocalAlgebroid, var: &Variation, tol: f64) -> Result<HomotopyCheck> {
    let drift = var.endpoint_drift();
    if drift > ENDPOINT_DRIFT_TOL {
        return Err(Error::EndpointsNotFixed { drift });
    }
    let max_end = solve_b_field(alg, var)?.max_end();
    Ok(HomotopyCheck { accepted: max_end < tol, max_end })
}

/// `s ∘ s` with `s(t) = t²(3 − 2t)`: derivative vanishes to second order at
/// both ends.
pub fn default_cutoff() -> Expr {
    let s = |t: &Expr| t.powi(2) * (Expr::constant(3.0) - Expr::constant(2.0) * t);
    s(&s(&Expr::var("t")))
}

struct Reparam {
    tau: Program,
    dtau: Program,
}

impl Reparam {
    fn new(tau: &Expr) -> Result<Self> {
        Ok(Reparam { tau: Program::single(tau, &["t"])?, dtau: Program::single(&tau.diff("t"), &["t"])? })
    }

    fn eval(&self, t: f64) -> Result<(f64, f64)> {
        Ok((self.tau.eval_scalar(&[t])?, self.dtau.eval_scalar(&[t])?))
    }
}

/// `a₁ ⊙ a₀`: both reparametrized by the cutoff `τ` (an expression in `t`),
/// then run at double speed, `a₀` on `[0, ½]` and `a₁` on `[½, 1]`.
pub fn concatenate(alg: &LocalAlgebroid, a0: &APath, a1: &APath, cutoff: &Expr) -> Result<APath> {
    check_dims(alg, a0)?;
    check_dims(alg, a1)?;
    let gap = linalg::dist(a0.end(), a1.start());
    if gap > ENDPOINT_DRIFT_TOL {
        return Err(Error::EndpointMismatch { gap });
    }
    let tau = Reparam::new(cutoff)?;
    let half = a0.steps().max(a1.steps());
    let steps = 2 * half;
    let (p0, p1) = (PathInterpolant::new(a0), PathInterpolant::new(a1));
    let mut xs = Vec::with_capacity(steps + 1);
    let mut as_ = Vec::with_capacity(steps + 1);
    for j in 0..=steps {
        let (p, s) = if j <= half { (&p0, j as f64 / half as f64) } else { (&p1, (j - half) as f64 / half as f64) };
        let (ts, dts) = tau.eval(s)?;
        let (x, a) = p.sample(ts);
        xs.push(x);
        as_.push(a.into_iter().map(|v| 2.0 * dts * v).collect());
    }
    APath::new(xs, as_)
}

/// The family `a^{τ_ε}` with `τ_ε = (1 − ε) id + ε τ`:
/// `x_ε(t) = x(τ_ε(t))`, `a_ε(t) = τ_ε'(t) a(τ_ε(t))`.
pub fn reparametrization_variation(alg: &LocalAlgebroid, path: &APath, tau: &Expr, eps_steps: usize) -> Result<Variation> {
    let r = Reparam::new(tau)?;
    check_dims(alg, path)?;
    let p = PathInterpolant::new(path);
    let steps = path.steps();
    let taus = (0..=steps).map(|j| r.eval(path.t(j))).collect::<Result<Vec<_>>>()?;
    let slices = (0..=eps_steps)
        .map(|i| {
            let eps = i as f64 / eps_steps as f64;
            let mut xs = Vec::with_capacity(steps + 1);
            let mut as_ = Vec::with_capacity(steps + 1);
            for (j, &(tv, dtv)) in taus.iter().enumerate() {
                let t = path.t(j);
                let te = ((1.0 - eps) * t + eps * tv).clamp(0.0, 1.0);
                let dte = (1.0 - eps) + eps * dtv;
                let (x, a) = p.sample(te);
                xs.push(x);
                as_.push(a.into_iter().map(|v| dte * v).collect());
            }
            APath::new(xs, as_)
        })
        .collect::<Result<Vec<_>>>()?;
    Variation::new(slices)
}

/// Build the variation whose companion field is a prescribed `b(ε, t)`,
/// starting from the A-path `a0`. `b` returns `(b, ∂_t b)` and must vanish at
/// `t = 0` and `t = 1`. For each `t_j` the pair `(γ, a)` is integrated in `ε`:
/// `∂_ε γ = ρ(b)(γ)`, `∂_ε a = ∂_t b + c_γ(a, b)`.
pub fn homotopy_from_b_field(
    alg: &LocalAlgebroid,
    a0: &APath,
    b: &(dyn Fn(f64, f64) -> (Vec<f64>, Vec<f64>) + Sync),
    eps_steps: usize,
) -> Result<Variation> {
    check_dims(alg, a0)?;
    let (n, k) = (alg.dim(), alg.rank());
    let h = 1.0 / eps_steps as f64;
    let columns = (0..=a0.steps())
        .into_par_iter()
        .map(|j| -> Result<Vec<Vec<f64>>> {
            let t = a0.t(j);
            let mut y: Vec<f64> = a0.x[j].iter().chain(&a0.a[j]).copied().collect();
            let mut col = Vec::with_capacity(eps_steps + 1);
            col.push(y.clone());
            let mut ev = alg.evaluator();
            let mut rhs = |eps: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
                let (bv, dbt) = b(eps, t);
                let (x, a) = y.split_at(n);
                ev.anchor_apply(&bv, x, &mut dy[..n])?;
                let c = alg.structure_at(x)?;
                let cab = contract(k, &c, a, &bv);
                for r in 0..k {
                    dy[n + r] = dbt[r] + cab[r];
                }
                Ok(())
            };
            for i in 0..eps_steps {
                rk4_step(&mut rhs, i as f64 * h, &mut y, h)?;
                col.push(y.clone());
            }
            Ok(col)
        })
        .collect::<Result<Vec<_>>>()?;
    let slices = (0..=eps_steps)
        .map(|i| {
            let xs = columns.iter().map(|c| c[i][..n].to_vec()).collect();
            let as_ = columns.iter().map(|c| c[i][n..].to_vec()).collect();
            APath::new(xs, as_)
        })
        .collect::<Result<Vec<_>>>()?;
    Variation::new(slices)
}
