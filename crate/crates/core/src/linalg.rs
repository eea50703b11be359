//! Small dense linear-algebra helpers on top of nalgebra's SVD.

use nalgebra::DMatrix;

/// Singular values below `RANK_TOL * (largest + 1)` count as zero.
pub const RANK_TOL: f64 = 1e-9;

struct Decomposition {
    u: DMatrix<f64>,
    sigma: Vec<f64>,
    v_t: DMatrix<f64>,
    threshold: f64,
}

fn decompose(m: &DMatrix<f64>) -> Decomposition {
    // Pad to at least square so that v_t carries a full basis of the domain.
    let (r, c) = m.shape();
    let padded = if r < c {
        let mut p = DMatrix::zeros(c, c);
        p.view_mut((0, 0), (r, c)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(true, true);
    let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
    let largest = sigma.iter().copied().fold(0.0, f64::max);
    Decomposition {
        u: svd.u.expect("u requested"),
        sigma,
        v_t: svd.v_t.expect("v_t requested"),
        threshold: RANK_TOL * (largest + 1.0),
    }
}

pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let d = decompose(m);
    d.sigma.iter().filter(|&&s| s > d.threshold).count()
}

/// Orthonormal basis of the kernel, as columns.
pub fn null_space(m: &DMatrix<f64>) -> DMatrix<f64> {
    let c = m.ncols();
    if m.nrows() == 0 {
        return DMatrix::identity(c, c);
    }
    if c == 0 {
        return DMatrix::zeros(0, 0);
    }
    let d = decompose(m);
    let cols: Vec<_> = (0..d.v_t.nrows())
        .filter(|&i| d.sigma[i] <= d.threshold)
        .map(|i| d.v_t.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(c, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Orthonormal basis of the column space, as columns.
pub fn image_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    let r = m.nrows();
    if m.ncols() == 0 || r == 0 {
        return DMatrix::zeros(r, 0);
    }
    let d = decompose(m);
    let cols: Vec<_> = (0..d.sigma.len())
        .filter(|&i| d.sigma[i] > d.threshold)
        .map(|i| d.u.column(i).rows(0, r).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(r, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Moore–Penrose pseudo-inverse with the relative rank threshold.
pub fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let d = decompose(m);
    let rows_u = d.u.nrows();
    let mut out = DMatrix::zeros(c, rows_u);
    for i in 0..d.sigma.len() {
        if d.sigma[i] > d.threshold {
            out += d.v_t.row(i).transpose() * d.u.column(i).transpose() / d.sigma[i];
        }
    }
    out.columns(0, r).into_owned()
}

/// Largest singular value.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.iter().copied().fold(0.0, f64::max)
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_and_image_of_wide_matrix() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(rank(&m), 2);
        let k = null_space(&m);
        assert_eq!(k.ncols(), 1);
        assert!((k[(2, 0)].abs() - 1.0).abs() < 1e-12);
        assert_eq!(image_basis(&m).ncols(), 2);
    }

    #[test]
    fn pinv_of_skew_matrix() {
        // [x]_x for x = (0,0,2): pseudo-inverse is -[x]_x / |x|^2
        let m = DMatrix::from_row_slice(3, 3, &[0.0, -2.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let p = pinv(&m);
        let expected = -&m / 4.0;
        assert!((p - expected).abs().max() < 1e-14);
    }

    #[test]
    fn degenerate_shapes() {
        assert_eq!(rank(&DMatrix::zeros(0, 3)), 0);
        assert_eq!(null_space(&DMatrix::zeros(0, 3)).ncols(), 3);
        assert_eq!(image_basis(&DMatrix::zeros(3, 0)).ncols(), 0);
        assert_eq!(pinv(&DMatrix::zeros(0, 2)).shape(), (2, 0));
    }
}
