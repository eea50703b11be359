use crate::algebroid::{LocalAlgebroid, Section};
use crate::error::{Error, Result};
use crate::linalg;
use crate::ode::rk4_step;

use super::APath;

/// Return-distance and velocity-direction tolerance for period detection.
pub const PERIOD_TOL: f64 = 1e-6;

/// RK4 solution of `ẋ = ρ(ξ_t)(x)` with `a_j = ξ(t_j, x_j)`.
pub fn integrate_section(alg: &LocalAlgebroid, xi: &Section, x0: &[f64], steps: usize) -> Result<APath> {
    let section = alg.compile_section(xi)?;
    flow(alg, x0, steps, 1.0, |t, x| section.eval(t, x))
}

/// A-geodesic of the flat frame connection: `a ≡ v`, `ẋ = ρ(v)(x)`.
pub fn geodesic(alg: &LocalAlgebroid, x0: &[f64], v: &[f64], steps: usize) -> Result<APath> {
    geodesic_over(alg, x0, v, steps, 1.0)
}

/// Endpoint of the geodesic with initial fiber value `v`, and the path itself.
pub fn exp_endpoint(alg: &LocalAlgebroid, x0: &[f64], v: &[f64], steps: usize) -> Result<(Vec<f64>, APath)> {
    let p = geodesic(alg, x0, v, steps)?;
    Ok((p.end().to_vec(), p))
}

fn geodesic_over(alg: &LocalAlgebroid, x0: &[f64], v: &[f64], steps: usize, duration: f64) -> Result<APath> {
    if v.len() != alg.rank() {
        return Err(Error::Dimension(format!("fiber vector of length {} for rank {}", v.len(), alg.rank())));
    }
    flow(alg, x0, steps, duration, |_, _| Ok(v.to_vec()))
}

/// Integrate `ẋ = ρ(ξ(t, x))(x)` over `[0, duration]`. The path samples keep
/// the unit time grid; callers with `duration ≠ 1` use the samples only.
fn flow(
    alg: &LocalAlgebroid,
    x0: &[f64],
    steps: usize,
    duration: f64,
    xi: impl Fn(f64, &[f64]) -> Result<Vec<f64>>,
) -> Result<APath> {
    if x0.len() != alg.dim() {
        return Err(Error::Dimension(format!("start point of length {} in a {}-dimensional chart", x0.len(), alg.dim())));
    }
    if steps == 0 {
        return Err(Error::Invalid("at least one step is required".into()));
    }
    if !alg.in_chart(x0) {
        return Err(Error::ChartExit { time: 0.0, point: x0.to_vec() });
    }
    let h = duration / steps as f64;
    let mut ev = alg.evaluator();
    let mut rhs = |t: f64, x: &[f64], out: &mut [f64]| -> Result<()> {
        let a = xi(t, x)?;
        ev.anchor_apply(&a, x, out)
    };
    let mut xs = Vec::with_capacity(steps + 1);
    let mut as_ = Vec::with_capacity(steps + 1);
    let mut x = x0.to_vec();
    for j in 0..steps {
        let t = j as f64 * h;
        as_.push(xi(t, &x)?);
        xs.push(x.clone());
        if !x.is_empty() {
            rk4_step(&mut rhs, t, &mut x, h)?;
        }
        if !alg.in_chart(&x) {
            return Err(Error::ChartExit { time: t + h, point: x });
        }
    }
    as_.push(xi(duration, &x)?);
    xs.push(x);
    APath::new(xs, as_)
}

/// First return time of the geodesic base path with fiber value `v` to `x0`,
/// searched over `(0, t_max]` with `steps` RK4 steps and refined by bisection
/// on `⟨x(t) − x0, ẋ(t)⟩`.
pub fn detect_period(alg: &LocalAlgebroid, x0: &[f64], v: &[f64], t_max: f64, steps: usize) -> Result<Option<f64>> {
    let path = geodesic_over(alg, x0, v, steps, t_max)?;
    let h = t_max / steps as f64;
    let dist: Vec<f64> = path.x.iter().map(|x| linalg::dist(x, x0)).collect();
    let scale = dist.iter().fold(0.0f64, |m, &d| m.max(d));
    if scale <= PERIOD_TOL {
        return Ok(None);
    }
    let v0 = alg.anchor_apply_vec(v, x0)?;
    let speed0 = linalg::norm(&v0);
    let mut ev = alg.evaluator();
    let mut state_at = |t0: f64, x_start: &[f64], t: f64| -> Result<Vec<f64>> {
        let mut x = x_start.to_vec();
        let mut rhs = |_: f64, y: &[f64], out: &mut [f64]| ev.anchor_apply(v, y, out);
        rk4_step(&mut rhs, t0, &mut x, t - t0)?;
        Ok(x)
    };
    let mut left = false;
    for j in 1..steps {
        if !left {
            left = dist[j] > 0.1 * scale;
            continue;
        }
        if !(dist[j] <= dist[j - 1] && dist[j] <= dist[j + 1]) {
            continue;
        }
        // Radial velocity changes sign across the bracket [t_{j-1}, t_{j+1}].
        let (ta, xa) = ((j - 1) as f64 * h, &path.x[j - 1]);
        let g = |x: &[f64]| -> Result<f64> {
            let vel = alg.anchor_apply_vec(v, x)?;
            Ok(x.iter().zip(x0).zip(&vel).map(|((a, b), w)| (a - b) * w).sum())
        };
        let (mut lo, mut hi) = (ta, (j + 1) as f64 * h);
        if g(&path.x[j - 1])? > 0.0 || g(&path.x[j + 1])? < 0.0 {
            continue;
        }
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if g(&state_at(ta, xa, mid)?)? < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let period = 0.5 * (lo + hi);
        let xp = state_at(ta, xa, period)?;
        if linalg::dist(&xp, x0) >= PERIOD_TOL {
            continue;
        }
        let vp = alg.anchor_apply_vec(v, &xp)?;
        let cos = vp.iter().zip(&v0).map(|(a, b)| a * b).sum::<f64>() / (linalg::norm(&vp) * speed0);
        if speed0 > 0.0 && cos > 1.0 - PERIOD_TOL {
            return Ok(Some(period));
        }
    }
    Ok(None)
}

/// Sup of the spectral norm of the Jacobian of `x ↦ ρ(v)(x)` over a grid on
/// the bounding box of the path together with the path samples.
pub fn period_lipschitz_bound(alg: &LocalAlgebroid, v: &[f64], path: &APath, per_axis: usize) -> Result<f64> {
    let (n, k) = (alg.dim(), alg.rank());
    let mut lo = path.x[0].clone();
    let mut hi = path.x[0].clone();
    for x in &path.x {
        for c in 0..n {
            lo[c] = lo[c].min(x[c]);
            hi[c] = hi[c].max(x[c]);
        }
    }
    let jac_norm = |x: &[f64]| -> Result<f64> {
        let db = alg.anchor_jacobian_at(x)?;
        let m = nalgebra::DMatrix::from_fn(n, n, |a, c| (0..k).map(|i| v[i] * db[(i * n + a) * n + c]).sum());
        Ok(linalg::op_norm(&m))
    };
    let mut sup = 0.0f64;
    for x in &path.x {
        sup = sup.max(jac_norm(x)?);
    }
    let per_axis = per_axis.max(2);
    let total = per_axis.pow(n as u32);
    for idx in 0..total {
        let mut rem = idx;
        let x: Vec<f64> = (0..n)
            .map(|c| {
                let i = rem % per_axis;
                rem /= per_axis;
                lo[c] + (hi[c] - lo[c]) * i as f64 / (per_axis - 1) as f64
            })
            .collect();
        sup = sup.max(jac_norm(&x)?);
    }
    Ok(sup)
}
