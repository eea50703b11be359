//! Lie algebroids over a single coordinate chart.
//!
//! A frame `e_1..e_k` of the bundle is fixed; the algebroid is given by the
//! anchor coefficients `ρ(e_i) = b^a_i ∂_a` and the structure functions
//! `[e_j, e_k] = c^i_{jk} e_i`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expr::{Expr, ExprError, Program};
use crate::liealg::LieAlgebra;
use crate::linalg;

/// Resamples allowed per point when an expression is undefined there.
pub const MAX_RESAMPLES: usize = 100;

/// Closure tolerance for the bracket on the kernel of the anchor.
pub const KERNEL_CLOSURE_TOL: f64 = 1e-8;

/// Index of the pair `j < k` among all pairs of `0..rank`.
#[inline]
fn pair_index(rank: usize, j: usize, k: usize) -> usize {
    debug_assert!(j < k && k < rank);
    j * rank - j * (j + 1) / 2 + (k - j - 1)
}

/// Structure functions `c^i_{jk}`, stored for `j < k` only.
#[derive(Debug, Clone)]
pub struct StructureFunctions {
    rank: usize,
    pairs: Vec<Vec<Expr>>,
}

impl StructureFunctions {
    pub fn zero(rank: usize) -> Self {
        let npairs = rank * rank.saturating_sub(1) / 2;
        StructureFunctions { rank, pairs: vec![vec![Expr::zero(); rank]; npairs] }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Set `c^i_{jk}`; `(j, k)` in either order, the stored sign follows.
    pub fn set(&mut self, i: usize, j: usize, k: usize, e: Expr) -> Result<()> {
        let r = self.rank;
        if i >= r || j >= r || k >= r {
            return Err(Error::Dimension(format!("structure index ({i},{j},{k}) out of range for rank {r}")));
        }
        if j == k {
            if e.is_zero() {
                return Ok(());
            }
            return Err(Error::Invalid(format!("c^{i}_{{{j}{k}}} must vanish by antisymmetry")));
        }
        let (lo, hi, e) = if j < k { (j, k, e) } else { (k, j, -e) };
        self.pairs[pair_index(r, lo, hi)][i] = e;
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> Expr {
        match j.cmp(&k) {
            std::cmp::Ordering::Less => self.pairs[pair_index(self.rank, j, k)][i].clone(),
            std::cmp::Ordering::Greater => -&self.pairs[pair_index(self.rank, k, j)][i],
            std::cmp::Ordering::Equal => Expr::zero(),
        }
    }

    /// The constant structure of a Lie algebra.
    pub fn from_lie_algebra(g: &LieAlgebra) -> Self {
        let mut s = StructureFunctions::zero(g.dim());
        for i in 0..g.dim() {
            for j in 0..g.dim() {
                for k in (j + 1)..g.dim() {
                    s.pairs[pair_index(g.dim(), j, k)][i] = Expr::constant(g.c(i, j, k));
                }
            }
        }
        s
    }
}

/// A section `α = α^i e_i`. Components may also depend on the time variable `t`.
#[derive(Debug, Clone)]
pub struct Section(pub Vec<Expr>);

impl Section {
    pub fn zero(rank: usize) -> Self {
        Section(vec![Expr::zero(); rank])
    }

    /// The frame section `e_i`.
    pub fn frame(rank: usize, i: usize) -> Self {
        let mut s = Section::zero(rank);
        s.0[i] = Expr::one();
        s
    }

    pub fn constant(v: &[f64]) -> Self {
        Section(v.iter().map(|&c| Expr::constant(c)).collect())
    }

    pub fn parse(components: &[&str]) -> Result<Self> {
        Ok(Section(components.iter().map(|s| s.parse()).collect::<std::result::Result<_, ExprError>>()?))
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn scale(&self, f: &Expr) -> Section {
        Section(self.0.iter().map(|c| f * c).collect())
    }

    pub fn add(&self, other: &Section) -> Section {
        Section(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Section) -> Section {
        Section(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }
}

/// Name of the time variable accepted by time-dependent sections.
pub const TIME_VAR: &str = "t";

#[derive(Debug, Clone)]
struct Compiled {
    anchor: Program,
    anchor_d: Program,
    structure: Program,
    structure_d: Program,
}

/// A rank-`k` Lie algebroid over an `n`-dimensional chart.
#[derive(Debug, Clone)]
pub struct LocalAlgebroid {
    coords: Vec<String>,
    anchor: Vec<Vec<Expr>>,
    structure: StructureFunctions,
    chart_box: Vec<(f64, f64)>,
    compiled: Compiled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxiomResiduals {
    pub max_anchor_compat: f64,
    pub max_jacobi: f64,
}

/// Isotropy algebra at a point, with its basis inside the fiber.
#[derive(Debug, Clone)]
pub struct LieAlgebraData {
    pub algebra: LieAlgebra,
    /// `k × m`, orthonormal columns spanning `Ker ρ_x`.
    pub basis: DMatrix<f64>,
    pub closure_residual: f64,
}

impl LieAlgebraData {
    pub fn dim(&self) -> usize {
        self.algebra.dim()
    }
}

#[derive(Debug, Clone)]
pub struct AnchorRank {
    pub rank: usize,
    /// `n × rank`, orthonormal columns spanning `Im ρ_x`.
    pub orbit_tangent_basis: DMatrix<f64>,
}

impl LocalAlgebroid {
    /// `anchor[i][a] = b^a_i`, a `k × n` array.
    pub fn new(
        coords: Vec<String>,
        anchor: Vec<Vec<Expr>>,
        structure: StructureFunctions,
        chart_box: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let n = coords.len();
        let k = anchor.len();
        if structure.rank() != k {
            return Err(Error::Dimension(format!("anchor has {k} rows, structure has rank {}", structure.rank())));
        }
        if let Some(row) = anchor.iter().find(|row| row.len() != n) {
            return Err(Error::Dimension(format!("anchor row has {} entries, chart dimension is {n}", row.len())));
        }
        if chart_box.len() != n {
            return Err(Error::Dimension(format!("chart box has {} intervals for {n} coordinates", chart_box.len())));
        }
        if let Some(&(lo, hi)) = chart_box.iter().find(|(lo, hi)| !(lo < hi)) {
            return Err(Error::Invalid(format!("empty chart interval [{lo}, {hi}]")));
        }
        for (i, c) in coords.iter().enumerate() {
            if c == TIME_VAR || coords[..i].contains(c) {
                return Err(Error::Invalid(format!("coordinate name `{c}` is reserved or repeated")));
            }
        }
        let vars: Vec<&str> = coords.iter().map(String::as_str).collect();
        let flat_anchor: Vec<Expr> = anchor.iter().flatten().cloned().collect();
        let anchor_d: Vec<Expr> =
            flat_anchor.iter().flat_map(|e| vars.iter().map(move |v| e.diff(v))).collect();
        let flat_structure: Vec<Expr> = structure.pairs.iter().flatten().cloned().collect();
        let structure_d: Vec<Expr> =
            flat_structure.iter().flat_map(|e| vars.iter().map(move |v| e.diff(v))).collect();
        let compiled = Compiled {
            anchor: Program::new(&flat_anchor, &vars)?,
            anchor_d: Program::new(&anchor_d, &vars)?,
            structure: Program::new(&flat_structure, &vars)?,
            structure_d: Program::new(&structure_d, &vars)?,
        };
        Ok(LocalAlgebroid { coords, anchor, structure, chart_box, compiled })
    }

    /// The Lie algebra as an algebroid over a point.
    pub fn from_lie_algebra(g: &LieAlgebra) -> Self {
        let anchor = vec![Vec::new(); g.dim()];
        LocalAlgebroid::new(Vec::new(), anchor, StructureFunctions::from_lie_algebra(g), Vec::new())
            .expect("consistent dimensions")
    }

    /// Direct product over the product chart. Coordinate names must be disjoint.
    pub fn product(a: &LocalAlgebroid, b: &LocalAlgebroid) -> Result<Self> {
        let (ka, kb) = (a.rank(), b.rank());
        let (na, nb) = (a.dim(), b.dim());
        let coords: Vec<String> = a.coords.iter().chain(&b.coords).cloned().collect();
        let mut anchor = Vec::with_capacity(ka + kb);
        for row in &a.anchor {
            anchor.push(row.iter().cloned().chain(std::iter::repeat_n(Expr::zero(), nb)).collect());
        }
        for row in &b.anchor {
            anchor.push(std::iter::repeat_n(Expr::zero(), na).chain(row.iter().cloned()).collect());
        }
        let mut structure = StructureFunctions::zero(ka + kb);
        for i in 0..ka {
            for j in 0..ka {
                for k in (j + 1)..ka {
                    structure.set(i, j, k, a.structure.get(i, j, k))?;
                }
            }
        }
        for i in 0..kb {
            for j in 0..kb {
                for k in (j + 1)..kb {
                    structure.set(ka + i, ka + j, ka + k, b.structure.get(i, j, k))?;
                }
            }
        }
        let chart_box = a.chart_box.iter().chain(&b.chart_box).copied().collect();
        LocalAlgebroid::new(coords, anchor, structure, chart_box)
    }

    /// Copy with `c^i_{jk}` shifted by `delta`.
    pub fn with_structure_perturbed(&self, i: usize, j: usize, k: usize, delta: f64) -> Result<Self> {
        let mut s = self.structure.clone();
        s.set(i, j, k, self.structure.get(i, j, k) + delta)?;
        LocalAlgebroid::new(self.coords.clone(), self.anchor.clone(), s, self.chart_box.clone())
    }

    /// Copy with a different sampling box.
    pub fn with_chart_box(&self, chart_box: Vec<(f64, f64)>) -> Result<Self> {
        LocalAlgebroid::new(self.coords.clone(), self.anchor.clone(), self.structure.clone(), chart_box)
    }

    /// Chart dimension `n`.
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Fiber rank `k`.
    pub fn rank(&self) -> usize {
        self.anchor.len()
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    pub fn coord_refs(&self) -> Vec<&str> {
        self.coords.iter().map(String::as_str).collect()
    }

    pub fn chart_box(&self) -> &[(f64, f64)] {
        &self.chart_box
    }

    pub fn in_chart(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.chart_box).all(|(&v, &(lo, hi))| v >= lo && v <= hi)
    }

    /// `b^a_i`.
    pub fn anchor_expr(&self, i: usize, a: usize) -> &Expr {
        &self.anchor[i][a]
    }

    /// `c^i_{jk}` for any `j, k`.
    pub fn structure_expr(&self, i: usize, j: usize, k: usize) -> Expr {
        self.structure.get(i, j, k)
    }

    pub fn structure(&self) -> &StructureFunctions {
        &self.structure
    }

    /// `b^a_i(x)`, row-major `k × n`.
    pub fn anchor_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.compiled.anchor.eval(x)?)
    }

    /// `∂_m b^a_i(x)` at index `(i * n + a) * n + m`.
    pub fn anchor_jacobian_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.compiled.anchor_d.eval(x)?)
    }

    /// Dense `c^i_{jk}(x)` at index `(i * k + j) * k + l`.
    pub fn structure_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        let k = self.rank();
        let packed = self.compiled.structure.eval(x)?;
        Ok(unpack_structure(k, &packed, 1))
    }

    /// Dense `∂_m c^i_{jl}(x)` at index `((i * k + j) * k + l) * n + m`.
    pub fn structure_jacobian_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        let packed = self.compiled.structure_d.eval(x)?;
        Ok(unpack_structure(self.rank(), &packed, self.dim()))
    }

    /// The anchor as an `n × k` matrix: column `i` is `ρ(e_i)`.
    pub fn rho_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let (n, k) = (self.dim(), self.rank());
        let b = self.anchor_at(x)?;
        Ok(DMatrix::from_fn(n, k, |a, i| b[i * n + a]))
    }

    /// A reusable evaluator for hot loops.
    pub fn evaluator(&self) -> Evaluator<'_> {
        Evaluator {
            alg: self,
            scratch: Vec::new(),
            anchor: vec![0.0; self.rank() * self.dim()],
            packed: vec![0.0; self.structure.pairs.len() * self.rank()],
        }
    }

    /// `ρ(α)(x)`.
    pub fn anchor_apply(&self, alpha: &Section, x: &[f64]) -> Result<Vec<f64>> {
        let a = self.eval_section(alpha, 0.0, x)?;
        self.anchor_apply_vec(&a, x)
    }

    /// `ρ_x(v)` for a fiber vector `v`.
    pub fn anchor_apply_vec(&self, v: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        let (n, k) = (self.dim(), self.rank());
        let b = self.anchor_at(x)?;
        Ok((0..n).map(|a| (0..k).map(|i| b[i * n + a] * v[i]).sum()).collect())
    }

    /// `c_x(u, v)^i = c^i_{jk}(x) u^j v^k`.
    pub fn structure_apply(&self, u: &[f64], v: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        let c = self.structure_at(x)?;
        Ok(contract(self.rank(), &c, u, v))
    }

    /// Evaluate a (possibly time-dependent) section.
    pub fn eval_section(&self, s: &Section, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.compile_section(s)?.eval(t, x)
    }

    pub fn compile_section(&self, s: &Section) -> Result<CompiledSection> {
        if s.rank() != self.rank() {
            return Err(Error::Dimension(format!("section of rank {} on algebroid of rank {}", s.rank(), self.rank())));
        }
        let mut vars = self.coord_refs();
        vars.push(TIME_VAR);
        Ok(CompiledSection { program: Program::new(&s.0, &vars)?, xt: Vec::with_capacity(vars.len()) })
    }

    /// Components of the vector field `ρ(α)`.
    pub fn anchor_field(&self, alpha: &Section) -> Vec<Expr> {
        (0..self.dim())
            .map(|a| {
                (0..self.rank())
                    .filter(|&i| !alpha.0[i].is_zero() && !self.anchor[i][a].is_zero())
                    .fold(Expr::zero(), |acc, i| acc + &self.anchor[i][a] * &alpha.0[i])
            })
            .collect()
    }

    /// `X(f) = X^a ∂_a f`.
    pub fn apply_field(&self, field: &[Expr], f: &Expr) -> Expr {
        field
            .iter()
            .zip(&self.coords)
            .filter(|(x, _)| !x.is_zero())
            .fold(Expr::zero(), |acc, (x, name)| acc + x * f.diff(name))
    }

    /// `[α, β]^i = c^i_{jk} α^j β^k + ρ(α)(β^i) − ρ(β)(α^i)`, built symbolically.
    pub fn bracket(&self, alpha: &Section, beta: &Section) -> Section {
        let k = self.rank();
        let ra = self.anchor_field(alpha);
        let rb = self.anchor_field(beta);
        let comps = (0..k)
            .map(|i| {
                let mut acc = Expr::zero();
                for j in 0..k {
                    for l in (j + 1)..k {
                        let c = self.structure.get(i, j, l);
                        if c.is_zero() {
                            continue;
                        }
                        let wedge = &alpha.0[j] * &beta.0[l] - &alpha.0[l] * &beta.0[j];
                        acc = acc + c * wedge;
                    }
                }
                acc + self.apply_field(&ra, &beta.0[i]) - self.apply_field(&rb, &alpha.0[i])
            })
            .collect();
        Section(comps)
    }

    /// Uniform points in the chart box; points where the anchor or structure
    /// functions (or their derivatives) are undefined are resampled.
    pub fn sample_points(&self, num_points: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(num_points);
        for _ in 0..num_points {
            let mut attempt = 0;
            loop {
                let x: Vec<f64> = self.chart_box.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect();
                match self.check_defined(&x) {
                    Ok(()) => {
                        out.push(x);
                        break;
                    }
                    Err(e) if attempt + 1 >= MAX_RESAMPLES => {
                        return Err(Error::Sampling { attempts: MAX_RESAMPLES, last: e })
                    }
                    Err(_) => attempt += 1,
                }
            }
        }
        Ok(out)
    }

    fn check_defined(&self, x: &[f64]) -> std::result::Result<(), ExprError> {
        let c = &self.compiled;
        for p in [&c.anchor, &c.anchor_d, &c.structure, &c.structure_d] {
            p.eval(x)?;
        }
        Ok(())
    }

    /// Residuals of `ρ[e_j, e_k] = [ρ e_j, ρ e_k]` and of the Jacobi identity on
    /// frame triples at `x`.
    pub fn axiom_residuals_at(&self, x: &[f64]) -> Result<AxiomResiduals> {
        let (n, k) = (self.dim(), self.rank());
        let b = self.anchor_at(x)?;
        let db = self.anchor_jacobian_at(x)?;
        let c = self.structure_at(x)?;
        let dc = self.structure_jacobian_at(x)?;
        let cc = |i: usize, j: usize, l: usize| c[(i * k + j) * k + l];

        let mut anchor_compat = 0.0f64;
        for j in 0..k {
            for l in (j + 1)..k {
                for a in 0..n {
                    let mut r = 0.0;
                    for m in 0..n {
                        r += b[j * n + m] * db[(l * n + a) * n + m] - b[l * n + m] * db[(j * n + a) * n + m];
                    }
                    for i in 0..k {
                        r -= cc(i, j, l) * b[i * n + a];
                    }
                    anchor_compat = anchor_compat.max(r.abs());
                }
            }
        }

        // [[e_j,e_k],e_l]^i = c^m_{jk} c^i_{ml} − ρ(e_l)(c^i_{jk})
        let term = |i: usize, j: usize, kk: usize, l: usize| {
            let mut s = 0.0;
            for m in 0..k {
                s += cc(m, j, kk) * cc(i, m, l);
            }
            for a in 0..n {
                s -= b[l * n + a] * dc[((i * k + j) * k + kk) * n + a];
            }
            s
        };
        let mut jacobi = 0.0f64;
        for j in 0..k {
            for kk in (j + 1)..k {
                for l in (kk + 1)..k {
                    for i in 0..k {
                        let s = term(i, j, kk, l) + term(i, kk, l, j) + term(i, l, j, kk);
                        jacobi = jacobi.max(s.abs());
                    }
                }
            }
        }
        Ok(AxiomResiduals { max_anchor_compat: anchor_compat, max_jacobi: jacobi })
    }

    /// Maxima of the axiom residuals over seeded random points of the chart box.
    pub fn axiom_residuals(&self, num_points: usize, seed: u64) -> Result<AxiomResiduals> {
        if num_points == 0 {
            return Err(Error::Invalid("at least one sample point is required".into()));
        }
        let points = self.sample_points(num_points, seed)?;
        let mut acc = AxiomResiduals { max_anchor_compat: 0.0, max_jacobi: 0.0 };
        for x in &points {
            let r = self.axiom_residuals_at(x)?;
            acc.max_anchor_compat = acc.max_anchor_compat.max(r.max_anchor_compat);
            acc.max_jacobi = acc.max_jacobi.max(r.max_jacobi);
        }
        Ok(acc)
    }

    /// `max |[α, fβ] − f[α,β] − ρ(α)(f) β|` over the given points.
    pub fn leibniz_residual(&self, alpha: &Section, beta: &Section, f: &Expr, points: &[Vec<f64>]) -> Result<f64> {
        self.leibniz_residual_with(|a, b| self.bracket(a, b), alpha, beta, f, points)
    }

    /// As [`Self::leibniz_residual`] for an arbitrary bracket.
    pub fn leibniz_residual_with(
        &self,
        bracket: impl Fn(&Section, &Section) -> Section,
        alpha: &Section,
        beta: &Section,
        f: &Expr,
        points: &[Vec<f64>],
    ) -> Result<f64> {
        let lhs = bracket(alpha, &beta.scale(f));
        let rho_f = self.apply_field(&self.anchor_field(alpha), f);
        let rhs = bracket(alpha, beta).scale(f).add(&beta.scale(&rho_f));
        let mut compiled = self.compile_section(&lhs.sub(&rhs))?;
        let mut worst = 0.0f64;
        for x in points {
            let r = compiled.eval_mut(0.0, x)?;
            worst = r.iter().fold(worst, |m, v| m.max(v.abs()));
        }
        Ok(worst)
    }

    /// Isotropy Lie algebra `Ker ρ_x` with the induced bracket.
    pub fn isotropy(&self, x: &[f64]) -> Result<LieAlgebraData> {
        let k = self.rank();
        let kernel = linalg::null_space(&self.rho_matrix(x)?);
        let m = kernel.ncols();
        let c = self.structure_at(x)?;
        let mut brackets = Vec::new();
        let mut residual = 0.0f64;
        for q in 0..m {
            for r in (q + 1)..m {
                let u: Vec<f64> = kernel.column(q).iter().copied().collect();
                let v: Vec<f64> = kernel.column(r).iter().copied().collect();
                let w = nalgebra::DVector::from_vec(contract(k, &c, &u, &v));
                let coeffs = kernel.transpose() * &w;
                let res = (&w - &kernel * &coeffs).norm();
                residual = residual.max(res / (1.0 + w.norm()));
                brackets.push((q, r, coeffs.iter().copied().collect::<Vec<_>>()));
            }
        }
        if residual > KERNEL_CLOSURE_TOL {
            return Err(Error::KernelNotClosed { point: x.to_vec(), residual });
        }
        Ok(LieAlgebraData { algebra: LieAlgebra::from_brackets(m, &brackets)?, basis: kernel, closure_residual: residual })
    }

    pub fn anchor_rank(&self, x: &[f64]) -> Result<AnchorRank> {
        let rho = self.rho_matrix(x)?;
        let basis = linalg::image_basis(&rho);
        Ok(AnchorRank { rank: basis.ncols(), orbit_tangent_basis: basis })
    }
}

/// `c(u, v)^i` for a dense structure tensor.
pub fn contract(k: usize, c: &[f64], u: &[f64], v: &[f64]) -> Vec<f64> {
    (0..k)
        .map(|i| {
            let mut s = 0.0;
            for j in 0..k {
                if u[j] == 0.0 {
                    continue;
                }
                for l in 0..k {
                    s += c[(i * k + j) * k + l] * u[j] * v[l];
                }
            }
            s
        })
        .collect()
}

fn unpack_structure(k: usize, packed: &[f64], stride: usize) -> Vec<f64> {
    let mut full = vec![0.0; k * k * k * stride];
    for j in 0..k {
        for l in (j + 1)..k {
            let p = pair_index(k, j, l);
            for i in 0..k {
                for m in 0..stride {
                    let v = packed[(p * k + i) * stride + m];
                    full[((i * k + j) * k + l) * stride + m] = v;
                    full[((i * k + l) * k + j) * stride + m] = -v;
                }
            }
        }
    }
    full
}

/// A section compiled against the chart coordinates and `t`.
#[derive(Debug, Clone)]
pub struct CompiledSection {
    program: Program,
    xt: Vec<f64>,
}

impl CompiledSection {
    pub fn eval(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut xt = x.to_vec();
        xt.push(t);
        Ok(self.program.eval(&xt)?)
    }

    fn eval_mut(&mut self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.xt.clear();
        self.xt.extend_from_slice(x);
        self.xt.push(t);
        Ok(self.program.eval(&self.xt)?)
    }
}

/// Scratch-reusing evaluation of the anchor and structure functions.
pub struct Evaluator<'a> {
    alg: &'a LocalAlgebroid,
    scratch: Vec<f64>,
    anchor: Vec<f64>,
    packed: Vec<f64>,
}

impl Evaluator<'_> {
    /// `b^a_i(x)`, row-major `k × n`.
    pub fn anchor(&mut self, x: &[f64]) -> Result<&[f64]> {
        self.alg.compiled.anchor.eval_into(x, &mut self.scratch, &mut self.anchor)?;
        Ok(&self.anchor)
    }

    /// `ρ_x(v)` written into `out`.
    pub fn anchor_apply(&mut self, v: &[f64], x: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.alg.dim();
        let k = self.alg.rank();
        self.alg.compiled.anchor.eval_into(x, &mut self.scratch, &mut self.anchor)?;
        for (a, o) in out.iter_mut().enumerate().take(n) {
            *o = (0..k).map(|i| self.anchor[i * n + a] * v[i]).sum();
        }
        Ok(())
    }

    /// Matrix `M^i_l = c^i_{jl}(x) u^j`, row-major `k × k`, written into `out`.
    pub fn structure_contract_first(&mut self, u: &[f64], x: &[f64], out: &mut [f64]) -> Result<()> {
        let k = self.alg.rank();
        out.iter_mut().for_each(|v| *v = 0.0);
        if k < 2 {
            return Ok(());
        }
        self.alg.compiled.structure.eval_into(x, &mut self.scratch, &mut self.packed)?;
        for j in 0..k {
            for l in (j + 1)..k {
                let p = pair_index(k, j, l);
                for i in 0..k {
                    let c = self.packed[p * k + i];
                    if c != 0.0 {
                        out[i * k + l] += c * u[j];
                        out[i * k + j] -= c * u[l];
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn su2_dual() -> LocalAlgebroid {
        // Cotangent algebroid of {x,y}=z and cyclic; frame dx, dy, dz.
        let anchor = vec![
            vec![Expr::zero(), "z".parse().unwrap(), "-y".parse().unwrap()],
            vec!["-z".parse().unwrap(), Expr::zero(), "x".parse().unwrap()],
            vec!["y".parse().unwrap(), "-x".parse().unwrap(), Expr::zero()],
        ];
        let mut s = StructureFunctions::zero(3);
        s.set(2, 0, 1, Expr::one()).unwrap();
        s.set(0, 1, 2, Expr::one()).unwrap();
        s.set(1, 2, 0, Expr::one()).unwrap();
        let coords = ["x", "y", "z"].map(String::from).to_vec();
        LocalAlgebroid::new(coords, anchor, s, vec![(-1.0, 1.0); 3]).unwrap()
    }

    #[test]
    fn pair_indices_are_dense() {
        let mut seen = Vec::new();
        for j in 0..5 {
            for k in (j + 1)..5 {
                seen.push(pair_index(5, j, k));
            }
        }
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn structure_antisymmetry_is_structural() {
        let mut s = StructureFunctions::zero(3);
        s.set(0, 2, 1, Expr::constant(2.0)).unwrap();
        assert_eq!(s.get(0, 1, 2).as_const(), Some(-2.0));
        assert_eq!(s.get(0, 2, 1).as_const(), Some(2.0));
        assert!(s.set(0, 1, 1, Expr::one()).is_err());
    }

    #[test]
    fn anchor_of_dx_at_north_pole() {
        let a = su2_dual();
        let v = a.anchor_apply(&Section::frame(3, 0), &[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(v, vec![0.0, 1.0, 0.0]);
        let z = a.anchor_apply(&Section::zero(3), &[0.3, 0.1, 1.0]).unwrap();
        assert_eq!(z, vec![0.0; 3]);
    }

    #[test]
    fn frame_brackets() {
        let a = su2_dual();
        let b = a.bracket(&Section::frame(3, 0), &Section::frame(3, 1));
        let v = a.eval_section(&b, 0.0, &[0.2, -0.4, 0.9]).unwrap();
        assert_eq!(v, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn residuals_of_valid_and_broken_structures() {
        let a = su2_dual();
        let r = a.axiom_residuals(100, 7).unwrap();
        assert!(r.max_anchor_compat < 1e-12 && r.max_jacobi < 1e-12);
        let broken = a.with_structure_perturbed(2, 0, 1, 0.01).unwrap();
        let r = broken.axiom_residuals(100, 7).unwrap();
        assert!(r.max_anchor_compat > 1e-3);
    }

    #[test]
    fn isotropy_examples() {
        let a = su2_dual();
        let g = a.isotropy(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(g.dim(), 3);
        assert_eq!(g.algebra.center().ncols(), 0);
        assert!(g.algebra.jacobi_check() < 1e-12);
        let g = a.isotropy(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(g.dim(), 1);
        assert!((g.basis[(2, 0)].abs() - 1.0).abs() < 1e-12);
        assert_eq!(a.anchor_rank(&[0.0, 0.0, 0.0]).unwrap().rank, 0);
        assert_eq!(a.anchor_rank(&[0.3, 0.4, 0.5]).unwrap().rank, 2);
    }

    #[test]
    fn product_keeps_blocks() {
        let p = LocalAlgebroid::product(&su2_dual(), &LocalAlgebroid::from_lie_algebra(&LieAlgebra::su2())).unwrap();
        assert_eq!((p.dim(), p.rank()), (3, 6));
        let r = p.axiom_residuals(20, 1).unwrap();
        assert!(r.max_jacobi < 1e-12 && r.max_anchor_compat < 1e-12);
        assert_eq!(p.structure_expr(5, 3, 4).as_const(), Some(1.0));
    }

    #[test]
    fn resampling_gives_up_on_nowhere_defined_data() {
        let coords = vec!["x".to_string()];
        let anchor = vec![vec!["log(-1-x^2)".parse().unwrap()]];
        let a = LocalAlgebroid::new(coords, anchor, StructureFunctions::zero(1), vec![(0.0, 1.0)]).unwrap();
        assert!(matches!(a.axiom_residuals(3, 0), Err(Error::Sampling { .. })));
    }
}
