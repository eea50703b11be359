//! Finite-dimensional Lie algebras given by structure constants.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Structure constants `f^i_{jk}` with `[e_j, e_k] = f^i_{jk} e_i`, stored as
/// a dense antisymmetric tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct LieAlgebra {
    dim: usize,
    f: Vec<f64>,
}

impl LieAlgebra {
    /// From a dense tensor indexed `[i][j][k]`. Antisymmetry in `(j, k)` is
    /// checked to `1e-12`.
    pub fn from_tensor(dim: usize, f: Vec<f64>) -> Result<Self> {
        if f.len() != dim * dim * dim {
            return Err(Error::Dimension(format!("expected {} constants, got {}", dim.pow(3), f.len())));
        }
        let g = LieAlgebra { dim, f };
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    if (g.c(i, j, k) + g.c(i, k, j)).abs() > 1e-12 {
                        return Err(Error::Invalid(format!("constants not antisymmetric at ({i},{j},{k})")));
                    }
                }
            }
        }
        Ok(g)
    }

    /// From the brackets `[e_j, e_k] = v` for `j < k`; unspecified brackets vanish.
    pub fn from_brackets(dim: usize, brackets: &[(usize, usize, Vec<f64>)]) -> Result<Self> {
        let mut f = vec![0.0; dim * dim * dim];
        for (j, k, v) in brackets {
            let (j, k) = (*j, *k);
            if j >= dim || k >= dim || j == k || v.len() != dim {
                return Err(Error::Dimension(format!("bad bracket entry ({j}, {k})")));
            }
            for (i, &vi) in v.iter().enumerate() {
                f[i * dim * dim + j * dim + k] = vi;
                f[i * dim * dim + k * dim + j] = -vi;
            }
        }
        Ok(LieAlgebra { dim, f })
    }

    pub fn abelian(dim: usize) -> Self {
        LieAlgebra { dim, f: vec![0.0; dim * dim * dim] }
    }

    /// `[e1,e2]=e3, [e2,e3]=e1, [e3,e1]=e2`.
    pub fn su2() -> Self {
        Self::from_brackets(
            3,
            &[(0, 1, vec![0.0, 0.0, 1.0]), (1, 2, vec![1.0, 0.0, 0.0]), (2, 0, vec![0.0, 1.0, 0.0])],
        )
        .expect("valid")
    }

    /// Three-dimensional Heisenberg algebra, `[e1,e2]=e3`.
    pub fn heisenberg() -> Self {
        Self::from_brackets(3, &[(0, 1, vec![0.0, 0.0, 1.0])]).expect("valid")
    }

    /// Non-unimodular `[e1,e2]=e2`, `[e1,e3]=e3`.
    pub fn book() -> Self {
        Self::from_brackets(3, &[(0, 1, vec![0.0, 1.0, 0.0]), (0, 2, vec![0.0, 0.0, 1.0])]).expect("valid")
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "su2" | "so3" => Some(Self::su2()),
            "heisenberg" => Some(Self::heisenberg()),
            "book" => Some(Self::book()),
            _ => name
                .strip_prefix("abelian")
                .and_then(|d| if d.is_empty() { Some(3) } else { d.parse().ok() })
                .map(Self::abelian),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn c(&self, i: usize, j: usize, k: usize) -> f64 {
        self.f[i * self.dim * self.dim + j * self.dim + k]
    }

    pub fn tensor(&self) -> &[f64] {
        &self.f
    }

    pub fn bracket(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let m = self.dim;
        (0..m)
            .map(|i| {
                let mut s = 0.0;
                for j in 0..m {
                    for k in 0..m {
                        s += self.c(i, j, k) * u[j] * v[k];
                    }
                }
                s
            })
            .collect()
    }

    /// Matrix of `ad_v = [v, ·]`.
    pub fn ad(&self, v: &[f64]) -> DMatrix<f64> {
        let m = self.dim;
        DMatrix::from_fn(m, m, |i, k| (0..m).map(|j| v[j] * self.c(i, j, k)).sum())
    }

    /// Max residual of the cyclic Jacobi sum over index triples.
    pub fn jacobi_check(&self) -> f64 {
        let m = self.dim;
        let mut worst = 0.0f64;
        for j in 0..m {
            for k in (j + 1)..m {
                for l in (k + 1)..m {
                    for i in 0..m {
                        let mut s = 0.0;
                        for p in 0..m {
                            s += self.c(p, j, k) * self.c(i, p, l)
                                + self.c(p, k, l) * self.c(i, p, j)
                                + self.c(p, l, j) * self.c(i, p, k);
                        }
                        worst = worst.max(s.abs());
                    }
                }
            }
        }
        worst
    }

    /// Orthonormal basis (columns) of the center.
    pub fn center(&self) -> DMatrix<f64> {
        let m = self.dim;
        if m == 0 {
            return DMatrix::zeros(0, 0);
        }
        // Row (j, p) of the stacked operator: v ↦ [v, e_j]^p.
        let stacked = DMatrix::from_fn(m * m, m, |row, i| self.c(row % m, i, row / m));
        linalg::null_space(&stacked)
    }

    /// Matrices of the Chevalley–Eilenberg differential `d_k: Λ^k g* → Λ^{k+1} g*`
    /// for trivial coefficients, `k = 0..dim`. Bases are lexicographically
    /// ordered index tuples.
    pub fn ce_differentials(&self) -> Vec<DMatrix<f64>> {
        let m = self.dim;
        let bases: Vec<Vec<Vec<usize>>> = (0..=m).map(|k| subsets(m, k)).collect();
        (0..m)
            .map(|k| {
                let rows = &bases[k + 1];
                let cols = &bases[k];
                let mut d = DMatrix::zeros(rows.len(), cols.len());
                for (r, idx) in rows.iter().enumerate() {
                    for a in 0..idx.len() {
                        for b in (a + 1)..idx.len() {
                            let sign_ab = if (a + b) % 2 == 0 { 1.0 } else { -1.0 };
                            let rest: Vec<usize> = idx
                                .iter()
                                .enumerate()
                                .filter(|&(pos, _)| pos != a && pos != b)
                                .map(|(_, &v)| v)
                                .collect();
                            for p in 0..m {
                                let coeff = self.c(p, idx[a], idx[b]);
                                if coeff == 0.0 || rest.contains(&p) {
                                    continue;
                                }
                                let before = rest.iter().filter(|&&q| q < p).count();
                                let mut col_idx = rest.clone();
                                col_idx.insert(before, p);
                                let c = cols.binary_search(&col_idx).expect("lexicographic basis");
                                let sign_p = if before % 2 == 0 { 1.0 } else { -1.0 };
                                d[(r, c)] += sign_ab * sign_p * coeff;
                            }
                        }
                    }
                }
                d
            })
            .collect()
    }

    /// Betti numbers of the Chevalley–Eilenberg complex, degrees `0..=dim`.
    pub fn ce_cohomology_dims(&self) -> Vec<usize> {
        let m = self.dim;
        let ds = self.ce_differentials();
        let ranks: Vec<usize> = ds.iter().map(linalg::rank).collect();
        (0..=m)
            .map(|k| {
                let dim_k = binomial(m, k);
                let out = if k < m { ranks[k] } else { 0 };
                let inc = if k > 0 { ranks[k - 1] } else { 0 };
                dim_k - out - inc
            })
            .collect()
    }

    /// Max entry of `d_{k+1} ∘ d_k` over all degrees.
    pub fn ce_square_residual(&self) -> f64 {
        let ds = self.ce_differentials();
        ds.windows(2).map(|w| linalg::max_abs(&(&w[1] * &w[0]))).fold(0.0, f64::max)
    }

    /// `exp(ad_v)`.
    pub fn ad_exp(&self, v: &[f64]) -> DMatrix<f64> {
        expm(&self.ad(v))
    }

    /// Operator norm of `ad_v` for the norm `|x|² = xᵀ Q x`.
    pub fn spectral_bound(&self, v: &[f64], q: &DMatrix<f64>) -> Result<f64> {
        let chol = q
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Invalid("norm matrix is not positive definite".into()))?;
        let l = chol.l();
        let lt = l.transpose();
        let lt_inv = lt
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Invalid("singular Cholesky factor".into()))?;
        Ok(linalg::op_norm(&(lt * self.ad(v) * lt_inv)))
    }
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(i + 1, m, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, m, k, &mut Vec::new(), &mut out);
    out
}

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm1 = (0..n).map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let squarings = if norm1 > 0.5 { (norm1 / 0.5).log2().ceil() as u32 } else { 0 };
    let scaled = a / 2f64.powi(squarings as i32);
    let mut result = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    // |A| ≤ 1/2: 20 terms put the truncation far below machine precision.
    for k in 1..=20 {
        term = &term * &scaled / k as f64;
        result += &term;
        if linalg::max_abs(&term) < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

pub fn vector(v: &DMatrix<f64>, col: usize) -> DVector<f64> {
    v.column(col).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn jacobi_of_examples() {
        assert!(LieAlgebra::su2().jacobi_check() < 1e-15);
        assert_eq!(LieAlgebra::abelian(3).jacobi_check(), 0.0);
        assert_eq!(LieAlgebra::heisenberg().jacobi_check(), 0.0);
        assert_eq!(LieAlgebra::book().jacobi_check(), 0.0);
        // f^1_{12} = 0.01 on top of su(2) is no longer a Lie algebra.
        let mut f = LieAlgebra::su2().tensor().to_vec();
        f[1] += 0.01;
        f[3] -= 0.01;
        let broken = LieAlgebra::from_tensor(3, f).unwrap();
        assert!(broken.jacobi_check() >= 1e-3);
    }

    #[test]
    fn centers() {
        assert_eq!(LieAlgebra::abelian(3).center().ncols(), 3);
        assert_eq!(LieAlgebra::su2().center().ncols(), 0);
        let z = LieAlgebra::heisenberg().center();
        assert_eq!(z.ncols(), 1);
        assert!((z[(2, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cohomology_dims() {
        assert_eq!(LieAlgebra::abelian(3).ce_cohomology_dims(), vec![1, 3, 3, 1]);
        assert_eq!(LieAlgebra::su2().ce_cohomology_dims(), vec![1, 0, 0, 1]);
        assert_eq!(LieAlgebra::abelian(1).ce_cohomology_dims(), vec![1, 1]);
        // Heisenberg: (1, 2, 2, 1).
        assert_eq!(LieAlgebra::heisenberg().ce_cohomology_dims(), vec![1, 2, 2, 1]);
        // book algebra: H^1 spanned by e^1; H^2 = 0 per rank computation below.
        let b = LieAlgebra::book().ce_cohomology_dims();
        assert_eq!(b[0], 1);
        assert_eq!(b[1], 1);
    }

    #[test]
    fn d_squared_vanishes() {
        for g in [LieAlgebra::su2(), LieAlgebra::heisenberg(), LieAlgebra::book(), LieAlgebra::abelian(4)] {
            assert!(g.ce_square_residual() < 1e-12);
        }
    }

    #[test]
    fn ad_exp_examples() {
        let su2 = LieAlgebra::su2();
        let id = DMatrix::<f64>::identity(3, 3);
        assert!((su2.ad_exp(&[0.0, 0.0, 0.0]) - &id).abs().max() < 1e-15);
        assert!((su2.ad_exp(&[2.0 * PI, 0.0, 0.0]) - &id).abs().max() < 1e-12);
        assert!((LieAlgebra::abelian(3).ad_exp(&[1.0, -2.0, 5.0]) - &id).abs().max() == 0.0);
        // rotation by 1 rad about e1
        let r = su2.ad_exp(&[1.0, 0.0, 0.0]);
        assert!((r[(1, 1)] - 1f64.cos()).abs() < 1e-14);
        assert!((r[(2, 1)] - 1f64.sin()).abs() < 1e-14);
    }

    #[test]
    fn spectral_bounds() {
        let su2 = LieAlgebra::su2();
        let q = DMatrix::identity(3, 3);
        assert_eq!(su2.spectral_bound(&[0.0; 3], &q).unwrap(), 0.0);
        let v = [0.6, 0.0, 0.8];
        assert!((su2.spectral_bound(&v, &q).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(LieAlgebra::abelian(3).spectral_bound(&v, &q).unwrap(), 0.0);
        assert!(su2.spectral_bound(&v, &DMatrix::zeros(3, 3)).is_err());
    }
}
