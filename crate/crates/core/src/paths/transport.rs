use std::sync::Arc;

use nalgebra::DMatrix;

use crate::algebroid::LocalAlgebroid;
use crate::error::{Error, Result};
use crate::ode::{midpoint_stencil, rk4_step};

use super::{check_dims, APath};

/// Christoffel data `Γ(a, x)` of a connection along A-paths; transport solves
/// `u̇ = −Γ(a(t), x(t)) u`.
#[derive(Clone)]
pub enum Connection {
    /// `Γ = 0` in the coordinate frame.
    Flat,
    /// `Γ = −ad_a`, i.e. `u̇ = c(a, u)`; on a Lie algebra this is the
    /// connection induced by the bracket.
    Adjoint,
    /// Arbitrary `k × k` matrices.
    Custom(Arc<dyn Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync>),
}

impl std::fmt::Debug for Connection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Connection::Flat => write!(f, "Flat"),
            Connection::Adjoint => write!(f, "Adjoint"),
            Connection::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl Connection {
    /// `Γ(a, x)` as a row-major `k × k` matrix.
    pub(crate) fn gamma(&self, alg: &LocalAlgebroid, a: &[f64], x: &[f64]) -> Result<DMatrix<f64>> {
        let k = alg.rank();
        match self {
            Connection::Flat => Ok(DMatrix::zeros(k, k)),
            Connection::Adjoint => {
                let c = alg.structure_at(x)?;
                Ok(DMatrix::from_fn(k, k, |i, l| -(0..k).map(|j| c[(i * k + j) * k + l] * a[j]).sum::<f64>()))
            }
            Connection::Custom(f) => {
                let g = f(a, x);
                if g.shape() != (k, k) {
                    return Err(Error::Dimension(format!("connection matrix has shape {:?}, expected ({k}, {k})", g.shape())));
                }
                Ok(g)
            }
        }
    }
}

/// Time-1 fundamental matrix of `u̇ = −Γ(a(t), x(t)) u` along the path.
pub fn parallel_transport(alg: &LocalAlgebroid, path: &APath, conn: &Connection) -> Result<DMatrix<f64>> {
    check_dims(alg, path)?;
    let k = alg.rank();
    let steps = path.steps();
    let h = 1.0 / steps as f64;
    if matches!(conn, Connection::Flat) {
        return Ok(DMatrix::identity(k, k));
    }
    let gammas = (0..=steps)
        .map(|j| conn.gamma(alg, &path.a[j], &path.x[j]))
        .collect::<Result<Vec<_>>>()?;
    let mut u: Vec<f64> = DMatrix::<f64>::identity(k, k).as_slice().to_vec();
    for j in 0..steps {
        let (start, w) = midpoint_stencil(j, steps + 1);
        let interp = |vals: &[Vec<f64>]| -> Vec<f64> {
            let mut out = vec![0.0; vals[0].len()];
            for (m, wm) in w.iter().enumerate() {
                if *wm != 0.0 {
                    for (o, v) in out.iter_mut().zip(&vals[start + m]) {
                        *o += wm * v;
                    }
                }
            }
            out
        };
        let mid = conn.gamma(alg, &interp(&path.a), &interp(&path.x))?;
        // RK4 evaluates at t_j, twice at the midpoint, then at t_{j+1}.
        let mut stage = 0;
        let mut rhs = |_: f64, y: &[f64], out: &mut [f64]| -> Result<()> {
            let g = match stage {
                0 => &gammas[j],
                3 => &gammas[j + 1],
                _ => &mid,
            };
            stage += 1;
            let ym = DMatrix::from_column_slice(k, k, y);
            let d = -(g * ym);
            out.copy_from_slice(d.as_slice());
            Ok(())
        };
        rk4_step(&mut rhs, j as f64 * h, &mut u, h)?;
    }
    Ok(DMatrix::from_column_slice(k, k, &u))
}
