//! Splittings of the anchor over a leaf, their curvature, and the monodromy
//! lattice obtained by integrating the curvature over spheres in the leaf.
//!
//! Curvature convention: `Ω_σ(X, Y) = σ([X, Y]) − [σX, σY]`.

mod lattice;
mod verdict;

pub use lattice::{lattice_discreteness, Discreteness, DiscretenessReport, Lattice};
pub use verdict::{
    aggregate_verdicts, integrability_verdict, profile_csv, rn_profile, IntegrabilityReport, ProfileRow,
    TransversalSample, Verdict, VerdictThresholds,
};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::algebroid::{contract, LocalAlgebroid, Section};
use crate::error::{Error, Result};
use crate::expr::{Expr, Program};
use crate::linalg;

/// Default grid for sphere quadrature.
pub const DEFAULT_GRID: (usize, usize) = (200, 400);
/// Relative tolerance on the Richardson error estimate of the quadrature.
pub const DEFAULT_QUADRATURE_TOL: f64 = 1e-4;
/// Relative tolerance for `Ω` being center-valued and for flatness of the
/// center frame.
pub const CENTER_TOL: f64 = 1e-6;

/// A right inverse `σ` of the anchor over a leaf, as a `k × n` matrix acting
/// on tangent vectors.
#[derive(Debug, Clone)]
pub enum Splitting {
    /// Explicit entries `σ(∂_a)^i`, indexed `[i][a]`.
    Matrix(Vec<Vec<Expr>>),
    /// `σ = G⁻¹ Rᵀ (R G⁻¹ Rᵀ)⁺` with `R = ρ_x` and fiber metric `G`
    /// (identity when `None`).
    PseudoInverse { metric: Option<DMatrix<f64>> },
}

impl Splitting {
    /// Pseudo-inverse splitting after checking that the anchor rank is
    /// constant over the leaf samples.
    pub fn pseudo_inverse(alg: &LocalAlgebroid, samples: &[Vec<f64>], metric: Option<DMatrix<f64>>) -> Result<Self> {
        if let Some(g) = &metric {
            if g.shape() != (alg.rank(), alg.rank()) || g.clone().cholesky().is_none() {
                return Err(Error::Invalid("fiber metric must be symmetric positive definite of size k".into()));
            }
        }
        let mut expected = None;
        for x in samples {
            let r = alg.anchor_rank(x)?.rank;
            match expected {
                None => expected = Some(r),
                Some(e) if e != r => return Err(Error::RankDrop { expected: e, found: r, point: x.clone() }),
                _ => {}
            }
        }
        Ok(Splitting::PseudoInverse { metric })
    }

    pub fn compile<'a>(&'a self, alg: &'a LocalAlgebroid) -> Result<CompiledSplitting<'a>> {
        let (n, k) = (alg.dim(), alg.rank());
        match self {
            Splitting::Matrix(m) => {
                if m.len() != k || m.iter().any(|r| r.len() != n) {
                    return Err(Error::Dimension(format!("splitting must be {k} × {n}")));
                }
                let vars = alg.coord_refs();
                let flat: Vec<Expr> = m.iter().flatten().cloned().collect();
                let d: Vec<Expr> = flat.iter().flat_map(|e| vars.iter().map(move |v| e.diff(v))).collect();
                Ok(CompiledSplitting {
                    alg,
                    kind: Kind::Matrix { s: Program::new(&flat, &vars)?, ds: Program::new(&d, &vars)? },
                })
            }
            Splitting::PseudoInverse { metric } => {
                let ginv = match metric {
                    Some(g) => Some(g.clone().try_inverse().ok_or_else(|| Error::Invalid("singular fiber metric".into()))?),
                    None => None,
                };
                Ok(CompiledSplitting { alg, kind: Kind::Pseudo { ginv } })
            }
        }
    }
}

enum Kind {
    Matrix { s: Program, ds: Program },
    Pseudo { ginv: Option<DMatrix<f64>> },
}

pub struct CompiledSplitting<'a> {
    alg: &'a LocalAlgebroid,
    kind: Kind,
}

impl CompiledSplitting<'_> {
    /// `σ_x` as a `k × n` matrix.
    pub fn at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let (n, k) = (self.alg.dim(), self.alg.rank());
        match &self.kind {
            Kind::Matrix { s, .. } => {
                let v = s.eval(x)?;
                Ok(DMatrix::from_fn(k, n, |i, a| v[i * n + a]))
            }
            Kind::Pseudo { ginv } => {
                let r = self.alg.rho_matrix(x)?;
                let g_rt = match ginv {
                    Some(gi) => gi * r.transpose(),
                    None => r.transpose(),
                };
                Ok(&g_rt * linalg::pinv(&(&r * &g_rt)))
            }
        }
    }

    /// Directional derivative `∂_v σ` at `x`: exact for explicit matrices,
    /// central differences for the pseudo-inverse.
    pub fn derivative(&self, x: &[f64], v: &[f64]) -> Result<DMatrix<f64>> {
        let (n, k) = (self.alg.dim(), self.alg.rank());
        match &self.kind {
            Kind::Matrix { ds, .. } => {
                let d = ds.eval(x)?;
                Ok(DMatrix::from_fn(k, n, |i, a| (0..n).map(|m| d[(i * n + a) * n + m] * v[m]).sum()))
            }
            Kind::Pseudo { .. } => {
                let vn = linalg::norm(v);
                if vn == 0.0 {
                    return Ok(DMatrix::zeros(k, n));
                }
                let h = 1e-5 * linalg::norm(x).max(1.0) / vn;
                let shift = |s: f64| -> Vec<f64> { x.iter().zip(v).map(|(a, b)| a + s * b).collect() };
                Ok((self.at(&shift(h))? - self.at(&shift(-h))?) / (2.0 * h))
            }
        }
    }

    /// `Ω(X, Y) = −c(σX, σY) − (∂_X σ) Y + (∂_Y σ) X` for tangent vectors
    /// `X, Y` of the leaf at `x`. Tensorial in `X, Y`.
    pub fn curvature(&self, x: &[f64], xv: &[f64], yv: &[f64]) -> Result<Vec<f64>> {
        let s = self.at(x)?;
        let sx = &s * DVector::from_column_slice(xv);
        let sy = &s * DVector::from_column_slice(yv);
        let c = self.alg.structure_at(x)?;
        let cxy = contract(self.alg.rank(), &c, sx.as_slice(), sy.as_slice());
        let dx = self.derivative(x, xv)? * DVector::from_column_slice(yv);
        let dy = self.derivative(x, yv)? * DVector::from_column_slice(xv);
        Ok((0..self.alg.rank()).map(|i| -cxy[i] - dx[i] + dy[i]).collect())
    }

    /// `max |ρ(σ v) − v|` over the given tangent vectors.
    pub fn right_inverse_residual(&self, x: &[f64], tangents: &[Vec<f64>]) -> Result<f64> {
        let s = self.at(x)?;
        let r = self.alg.rho_matrix(x)?;
        let mut worst = 0.0f64;
        for v in tangents {
            let v = DVector::from_column_slice(v);
            worst = worst.max((&r * (&s * &v) - &v).norm());
        }
        Ok(worst)
    }
}

/// `Ω_σ(X, Y)` at `x` for leaf vector fields `X, Y`, from the symbolic
/// vector-field bracket and the algebroid bracket of `σX, σY`. Pseudo-inverse
/// splittings have no symbolic form; they use the tensorial expression.
pub fn curvature(alg: &LocalAlgebroid, sigma: &Splitting, xf: &[Expr], yf: &[Expr], x: &[f64]) -> Result<Vec<f64>> {
    let n = alg.dim();
    if xf.len() != n || yf.len() != n {
        return Err(Error::Dimension("vector fields must have n components".into()));
    }
    match sigma {
        Splitting::Matrix(m) => {
            let apply = |v: &[Expr]| -> Section {
                Section(
                    m.iter()
                        .map(|row| row.iter().zip(v).fold(Expr::zero(), |acc, (s, c)| acc + s * c))
                        .collect(),
                )
            };
            let xy: Vec<Expr> = (0..n).map(|a| alg.apply_field(xf, &yf[a]) - alg.apply_field(yf, &xf[a])).collect();
            let omega = apply(&xy).sub(&alg.bracket(&apply(xf), &apply(yf)));
            alg.eval_section(&omega, 0.0, x)
        }
        Splitting::PseudoInverse { .. } => {
            let vars = alg.coord_refs();
            let xv = Program::new(xf, &vars)?.eval(x)?;
            let yv = Program::new(yf, &vars)?.eval(x)?;
            sigma.compile(alg)?.curvature(x, &xv, &yv)
        }
    }
}

/// Max distance of `Ω_σ` from the center of the isotropy algebra, over pairs
/// of orbit tangent basis vectors at each point.
pub fn center_check(alg: &LocalAlgebroid, sigma: &Splitting, points: &[Vec<f64>]) -> Result<f64> {
    let cs = sigma.compile(alg)?;
    let mut worst = 0.0f64;
    for x in points {
        let iso = alg.isotropy(x)?;
        let z = &iso.basis * iso.algebra.center();
        let tangent = alg.anchor_rank(x)?.orbit_tangent_basis;
        for p in 0..tangent.ncols() {
            for q in (p + 1)..tangent.ncols() {
                let xv: Vec<f64> = tangent.column(p).iter().copied().collect();
                let yv: Vec<f64> = tangent.column(q).iter().copied().collect();
                let w = DVector::from_vec(cs.curvature(x, &xv, &yv)?);
                let proj = if z.ncols() > 0 { &z * (z.transpose() * &w) } else { DVector::zeros(w.len()) };
                worst = worst.max((w - proj).norm());
            }
        }
    }
    Ok(worst)
}

/// A sphere `(θ, φ) ↦ x(θ, φ)` in a leaf, `θ ∈ [0, π]`, `φ ∈ [0, 2π)`.
#[derive(Debug, Clone)]
pub struct SphereMap {
    pub label: String,
    /// Components in the variables `theta` and `phi`.
    pub param: Vec<Expr>,
}

impl SphereMap {
    pub fn new(label: impl Into<String>, param: Vec<Expr>) -> Self {
        SphereMap { label: label.into(), param }
    }

    /// Same sphere with `φ → −φ`.
    pub fn reversed(&self) -> Self {
        let minus_phi = -Expr::var("phi");
        SphereMap { label: format!("{} (reversed)", self.label), param: self.param.iter().map(|e| e.subst("phi", &minus_phi)).collect() }
    }
}

/// A trivialization of the center of the isotropy along the leaf.
#[derive(Debug, Clone)]
pub enum CenterFrame {
    /// Constant fiber vectors (columns, `k × z`).
    Constant(DMatrix<f64>, Vec<String>),
    /// Sections of `A` that are central in the isotropy along the leaf.
    Sections(Vec<Section>, Vec<String>),
}

impl CenterFrame {
    pub fn labels(&self) -> &[String] {
        match self {
            CenterFrame::Constant(_, l) | CenterFrame::Sections(_, l) => l,
        }
    }

    pub fn len(&self) -> usize {
        self.labels().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Constant frame from the center of the isotropy at `x`.
    pub fn from_isotropy(alg: &LocalAlgebroid, x: &[f64]) -> Result<Self> {
        let iso = alg.isotropy(x)?;
        let z = &iso.basis * iso.algebra.center();
        let labels = (1..=z.ncols()).map(|i| format!("z{i}")).collect();
        Ok(CenterFrame::Constant(z, labels))
    }
}

struct CompiledFrame {
    k: usize,
    z: usize,
    n: usize,
    kind: FrameKind,
}

enum FrameKind {
    Constant(DMatrix<f64>),
    Sections { f: Program, df: Program },
}

impl CompiledFrame {
    fn new(alg: &LocalAlgebroid, frame: &CenterFrame) -> Result<Self> {
        let (n, k) = (alg.dim(), alg.rank());
        let kind = match frame {
            CenterFrame::Constant(m, _) => {
                if m.nrows() != k {
                    return Err(Error::Dimension(format!("center frame vectors must have {k} components")));
                }
                FrameKind::Constant(m.clone())
            }
            CenterFrame::Sections(secs, _) => {
                if secs.iter().any(|s| s.rank() != k) {
                    return Err(Error::Dimension(format!("center frame sections must have rank {k}")));
                }
                let vars = alg.coord_refs();
                // column-major k × z
                let flat: Vec<Expr> = secs.iter().flat_map(|s| s.0.iter().cloned()).collect();
                let d: Vec<Expr> = flat.iter().flat_map(|e| vars.iter().map(move |v| e.diff(v))).collect();
                FrameKind::Sections { f: Program::new(&flat, &vars)?, df: Program::new(&d, &vars)? }
            }
        };
        Ok(CompiledFrame { k, z: frame.len(), n, kind })
    }

    fn at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        match &self.kind {
            FrameKind::Constant(m) => Ok(m.clone()),
            FrameKind::Sections { f, .. } => Ok(DMatrix::from_column_slice(self.k, self.z, &f.eval(x)?)),
        }
    }

    /// `∂_v F` at `x`.
    fn derivative(&self, x: &[f64], v: &[f64]) -> Result<DMatrix<f64>> {
        match &self.kind {
            FrameKind::Constant(_) => Ok(DMatrix::zeros(self.k, self.z)),
            FrameKind::Sections { df, .. } => {
                let d = df.eval(x)?;
                let n = self.n;
                let mut out = DMatrix::zeros(self.k, self.z);
                for p in 0..self.z {
                    for i in 0..self.k {
                        out[(i, p)] = (0..n).map(|m| d[(p * self.k + i) * n + m] * v[m]).sum();
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Result of integrating `Ω_σ` over one sphere.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CurvatureIntegral {
    /// Coefficients in the center frame, extrapolated from the `N` and `N/2` grids.
    pub value: Vec<f64>,
    /// `|I_N − I_{N/2}| / 3`, the error estimate of the fine-grid midpoint value.
    pub richardson: f64,
    /// Largest relative distance of `Ω` from the span of the center frame.
    pub max_center_residual: f64,
    pub grid: (usize, usize),
}

struct SphereProgram {
    x: Program,
    dtheta: Program,
    dphi: Program,
}

impl SphereProgram {
    fn new(sphere: &SphereMap, n: usize) -> Result<Self> {
        if sphere.param.len() != n {
            return Err(Error::Dimension(format!("sphere map has {} components, chart has {n}", sphere.param.len())));
        }
        let vars = ["theta", "phi"];
        let dt: Vec<Expr> = sphere.param.iter().map(|e| e.diff("theta")).collect();
        let dp: Vec<Expr> = sphere.param.iter().map(|e| e.diff("phi")).collect();
        Ok(SphereProgram {
            x: Program::new(&sphere.param, &vars)?,
            dtheta: Program::new(&dt, &vars)?,
            dphi: Program::new(&dp, &vars)?,
        })
    }
}

struct CellValue {
    coeffs: Vec<f64>,
    center_residual: f64,
    flatness: f64,
}

fn cell(
    alg: &LocalAlgebroid,
    sigma: &CompiledSplitting<'_>,
    frame: &CompiledFrame,
    sp: &SphereProgram,
    theta: f64,
    phi: f64,
    check_flat: bool,
) -> Result<CellValue> {
    let x = sp.x.eval(&[theta, phi])?;
    let xt = sp.dtheta.eval(&[theta, phi])?;
    let xp = sp.dphi.eval(&[theta, phi])?;
    let w = DVector::from_vec(sigma.curvature(&x, &xt, &xp)?);
    let f = frame.at(&x)?;
    let (coeffs, residual) = if frame.z == 0 {
        (DVector::zeros(0), w.norm())
    } else {
        let ftf = f.transpose() * &f;
        let c = ftf
            .lu()
            .solve(&(f.transpose() * &w))
            .ok_or_else(|| Error::Invalid("center frame is degenerate on the sphere".into()))?;
        let r = (&w - &f * &c).norm();
        (c, r)
    };
    let mut flatness = 0.0f64;
    if check_flat && frame.z > 0 {
        // ∇_X f = [σX, f] = c(σX, f) + ∂_X f for f in the kernel of ρ.
        let s = sigma.at(&x)?;
        let c = alg.structure_at(&x)?;
        for v in [&xt, &xp] {
            let sv = &s * DVector::from_column_slice(v);
            let df = frame.derivative(&x, v)?;
            for p in 0..frame.z {
                let fp: Vec<f64> = f.column(p).iter().copied().collect();
                let cf = contract(alg.rank(), &c, sv.as_slice(), &fp);
                let r: f64 = (0..alg.rank()).map(|i| (cf[i] + df[(i, p)]).powi(2)).sum::<f64>().sqrt();
                flatness = flatness.max(r / (1.0 + sv.norm() * linalg::norm(&fp)));
            }
        }
    }
    Ok(CellValue { coeffs: coeffs.iter().copied().collect(), center_residual: residual / (1.0 + w.norm()), flatness })
}

fn midpoint_rule(
    alg: &LocalAlgebroid,
    sigma: &CompiledSplitting<'_>,
    frame: &CompiledFrame,
    sp: &SphereProgram,
    (nt, np): (usize, usize),
) -> Result<(Vec<f64>, f64, f64)> {
    let ht = std::f64::consts::PI / nt as f64;
    let hp = 2.0 * std::f64::consts::PI / np as f64;
    // Flatness is sampled on a sparse sub-grid.
    let flat_stride_t = (nt / 10).max(1);
    let flat_stride_p = (np / 10).max(1);
    let rows = (0..nt)
        .into_par_iter()
        .map(|i| -> Result<(Vec<f64>, f64, f64)> {
            let theta = (i as f64 + 0.5) * ht;
            let mut sum = vec![0.0; frame.z];
            let (mut center, mut flat) = (0.0f64, 0.0f64);
            for j in 0..np {
                let phi = (j as f64 + 0.5) * hp;
                let check = i % flat_stride_t == 0 && j % flat_stride_p == 0;
                let c = cell(alg, sigma, frame, sp, theta, phi, check)?;
                for (s, v) in sum.iter_mut().zip(&c.coeffs) {
                    *s += v;
                }
                center = center.max(c.center_residual);
                flat = flat.max(c.flatness);
            }
            Ok((sum, center, flat))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = vec![0.0; frame.z];
    let (mut center, mut flat) = (0.0f64, 0.0f64);
    for (sum, c, f) in rows {
        for (t, s) in total.iter_mut().zip(&sum) {
            *t += s;
        }
        center = center.max(c);
        flat = flat.max(f);
    }
    Ok((total.into_iter().map(|v| v * ht * hp).collect(), center, flat))
}

/// `∫ Ω_σ(∂_θ x, ∂_φ x) dθ dφ` in the center frame, by the tensor midpoint
/// rule on `grid` with a Richardson estimate from the half grid.
pub fn integrate_curvature(
    alg: &LocalAlgebroid,
    sigma: &Splitting,
    sphere: &SphereMap,
    frame: &CenterFrame,
    grid: (usize, usize),
    tol: f64,
) -> Result<CurvatureIntegral> {
    if grid.0 < 2 || grid.1 < 2 {
        return Err(Error::Invalid("quadrature grid needs at least 2 × 2 cells".into()));
    }
    let cs = sigma.compile(alg)?;
    let cf = CompiledFrame::new(alg, frame)?;
    let sp = SphereProgram::new(sphere, alg.dim())?;
    let (fine, center, flat) = midpoint_rule(alg, &cs, &cf, &sp, grid)?;
    if flat > CENTER_TOL {
        return Err(Error::NontrivialLocalSystem { residual: flat });
    }
    if center > CENTER_TOL {
        return Err(Error::HypothesisViolated { residual: center });
    }
    let (coarse, _, _) = midpoint_rule(alg, &cs, &cf, &sp, (grid.0 / 2, grid.1 / 2))?;
    // The midpoint error is O(h²) in both directions: report the extrapolated
    // value and keep the fine-grid error estimate, which bounds it.
    let richardson = linalg::dist(&fine, &coarse) / 3.0;
    let size = linalg::norm(&fine).max(1.0);
    if richardson > tol * size {
        return Err(Error::NonConvergence { estimate: richardson, tolerance: tol * size });
    }
    let value = fine.iter().zip(&coarse).map(|(f, c)| f + (f - c) / 3.0).collect();
    Ok(CurvatureIntegral { value, richardson, max_center_residual: center, grid })
}

/// One generator per sphere; uncertainties are left at zero and the
/// Richardson estimates are returned alongside.
pub fn monodromy_lattice(
    alg: &LocalAlgebroid,
    sigma: &Splitting,
    spheres: &[SphereMap],
    frame: &CenterFrame,
    grid: (usize, usize),
    tol: f64,
) -> Result<(Lattice, Vec<CurvatureIntegral>)> {
    let integrals = spheres
        .iter()
        .map(|s| integrate_curvature(alg, sigma, s, frame, grid, tol))
        .collect::<Result<Vec<_>>>()?;
    let lattice = Lattice::new(frame.len(), integrals.iter().map(|c| c.value.clone()).collect())
        .with_labels(frame.labels().to_vec());
    Ok((lattice, integrals))
}
