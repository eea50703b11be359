use serde::Serialize;

use crate::linalg;

/// Finitely generated subgroup of `ℝ^d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lattice {
    pub dim: usize,
    pub generators: Vec<Vec<f64>>,
    /// Absolute uncertainty of each generator; zero when exact.
    pub uncertainties: Vec<f64>,
    /// Names of the basis vectors of `ℝ^d` (the center frame).
    pub frame_labels: Vec<String>,
}

impl Lattice {
    pub fn new(dim: usize, generators: Vec<Vec<f64>>) -> Self {
        let uncertainties = vec![0.0; generators.len()];
        Lattice { dim, generators, uncertainties, frame_labels: (1..=dim).map(|i| format!("z{i}")).collect() }
    }

    pub fn with_uncertainties(mut self, u: Vec<f64>) -> Self {
        assert_eq!(u.len(), self.generators.len());
        self.uncertainties = u;
        self
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        assert_eq!(labels.len(), self.dim);
        self.frame_labels = labels;
        self
    }

    pub fn trivial(dim: usize) -> Self {
        Lattice::new(dim, Vec::new())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Discreteness {
    #[serde(rename = "discrete")]
    Discrete,
    #[serde(rename = "indiscrete (numerical)")]
    Indiscrete,
    #[serde(rename = "unknown")]
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscretenessReport {
    pub discrete: Discreteness,
    /// Distance from 0 to the nonzero part; `+∞` for the trivial group, an
    /// estimate (0) when indiscrete.
    #[serde(serialize_with = "crate::serde_float::serialize")]
    pub r_n: f64,
    pub minimal_generator: Option<Vec<f64>>,
}

/// Outcome of reducing a pair of reals to a common generator.
enum Reduction {
    /// `g/G = p/q`; the group they generate is `(G/q) ℤ`.
    Relation { q: u64 },
    /// A relation with `q ≤ Q_max` exists only within the noise band.
    Ambiguous,
    /// No relation with `q ≤ Q_max`: integer combinations get arbitrarily small.
    None,
}

/// Continued-fraction search for `q g − p G ≈ 0`. A remainder inside the
/// band spanned by the generator uncertainties (or within `10 eps` of the
/// acceptance threshold) is ambiguous.
fn reduce_pair(big: f64, u_big: f64, g: f64, u_g: f64, eps: f64, q_max: u64) -> Reduction {
    let scale = big.abs().max(g.abs());
    let ratio = g / big;
    // Convergents h_i/k_i of `ratio`.
    let (mut h_prev, mut h) = (1.0f64, ratio.floor());
    let (mut k_prev, mut k) = (0.0f64, 1.0f64);
    let mut x = ratio - ratio.floor();
    loop {
        if k > q_max as f64 {
            return Reduction::None;
        }
        let remainder = (k * g - h * big).abs();
        if remainder <= eps * scale {
            return Reduction::Relation { q: k as u64 };
        }
        let noise = (10.0 * eps * scale).max(k * u_g + h.abs() * u_big);
        if remainder <= noise {
            return Reduction::Ambiguous;
        }
        if x == 0.0 {
            // Terminated: the float ratio is exactly h/k but the remainder
            // exceeds eps, which only happens through rounding at huge scales.
            return Reduction::Ambiguous;
        }
        let inv = 1.0 / x;
        let a = inv.floor();
        x = inv - a;
        let h_next = a * h + h_prev;
        let k_next = a * k + k_prev;
        h_prev = h;
        h = h_next;
        k_prev = k;
        k = k_next;
    }
}

fn discreteness_1d(values: &[f64], uncertainties: &[f64], eps: f64, q_max: u64) -> (Discreteness, f64) {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut nonzero: Vec<(f64, f64)> = values
        .iter()
        .zip(uncertainties)
        .filter(|(v, _)| v.abs() > eps * scale.max(1.0))
        .map(|(v, u)| (v.abs(), *u))
        .collect();
    if nonzero.is_empty() {
        return (Discreteness::Discrete, f64::INFINITY);
    }
    // Start from the largest generator so ratios lie in (0, 1].
    nonzero.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut gcd, mut u_gcd) = nonzero[0];
    for &(g, u) in &nonzero[1..] {
        match reduce_pair(gcd, u_gcd, g, u, eps, q_max) {
            Reduction::Relation { q } => {
                gcd /= q as f64;
                u_gcd /= q as f64;
            }
            Reduction::Ambiguous => return (Discreteness::Unknown, gcd),
            Reduction::None => return (Discreteness::Indiscrete, 0.0),
        }
    }
    (Discreteness::Discrete, gcd)
}

/// Decide numerically whether the lattice is discrete.
///
/// `d = 1`: pairwise continued-fraction reduction with denominators bounded
/// by `q_max`; a relation is accepted when `|q g − p G| ≤ eps · max(|g|, |G|)`.
/// No relation up to `q_max` means integer combinations below the smallest
/// generator keep appearing, reported as indiscrete with `r_N ≈ 0`.
/// `d ≥ 2`: numerically collinear generators are projected to the line and
/// handled as above; otherwise pairwise integer descent (Gauss reduction)
/// runs until it stabilizes.
pub fn lattice_discreteness(lattice: &Lattice, eps: f64, q_max: u64) -> DiscretenessReport {
    let gens = &lattice.generators;
    let scale = gens.iter().map(|g| linalg::norm(g)).fold(0.0f64, f64::max);
    if gens.is_empty() || scale <= eps {
        return DiscretenessReport { discrete: Discreteness::Discrete, r_n: f64::INFINITY, minimal_generator: None };
    }
    let unc: Vec<f64> = if lattice.uncertainties.len() == gens.len() {
        lattice.uncertainties.clone()
    } else {
        vec![0.0; gens.len()]
    };
    let d = lattice.dim;
    let m = nalgebra::DMatrix::from_fn(d, gens.len(), |i, j| gens[j][i]);
    let svd = m.svd(true, false);
    let sv = &svd.singular_values;
    let smax = sv.iter().fold(0.0f64, |a, &b| a.max(b));
    let rank = sv.iter().filter(|&&s| s > eps * smax.max(1.0)).count();
    if rank <= 1 {
        let u = svd.u.as_ref().expect("requested");
        let imax = (0..sv.len()).max_by(|&a, &b| sv[a].total_cmp(&sv[b])).expect("non-empty");
        let dir: Vec<f64> = u.column(imax).iter().copied().collect();
        let proj: Vec<f64> = gens.iter().map(|g| g.iter().zip(&dir).map(|(a, b)| a * b).sum()).collect();
        let (discrete, r_n) = discreteness_1d(&proj, &unc, eps, q_max);
        let minimal_generator =
            (discrete == Discreteness::Discrete && r_n.is_finite()).then(|| dir.iter().map(|c| c * r_n).collect());
        return DiscretenessReport { discrete, r_n, minimal_generator };
    }
    descend(gens, rank, eps, q_max)
}

fn descend(gens: &[Vec<f64>], rank: usize, eps: f64, q_max: u64) -> DiscretenessReport {
    let scale = gens.iter().map(|g| linalg::norm(g)).fold(0.0f64, f64::max);
    let tiny = eps * scale.max(1.0);
    // Exact integer relations cancel to rounding level; anything between
    // this and `tiny` is a descent below eps.
    let zero = 1e-12 * scale;
    let mut basis: Vec<Vec<f64>> = gens.iter().filter(|g| linalg::norm(g) > tiny).cloned().collect();
    let mut budget = q_max;
    loop {
        let mut changed = false;
        for i in 0..basis.len() {
            for j in 0..basis.len() {
                if i == j {
                    continue;
                }
                let nj2: f64 = basis[j].iter().map(|v| v * v).sum();
                if nj2 <= zero * zero {
                    continue;
                }
                let dot: f64 = basis[i].iter().zip(&basis[j]).map(|(a, b)| a * b).sum();
                let mu = (dot / nj2).round();
                if mu != 0.0 {
                    let bj = basis[j].clone();
                    basis[i].iter_mut().zip(&bj).for_each(|(a, b)| *a -= mu * b);
                    changed = true;
                    budget = budget.saturating_sub(mu.abs() as u64);
                }
            }
        }
        if basis.iter().map(|g| linalg::norm(g)).any(|n| n > zero && n <= tiny) {
            return DiscretenessReport { discrete: Discreteness::Indiscrete, r_n: 0.0, minimal_generator: None };
        }
        let before = basis.len();
        basis.retain(|g| linalg::norm(g) > zero);
        if basis.len() < before {
            changed = true;
        }
        let min = basis.iter().map(|g| linalg::norm(g)).fold(f64::INFINITY, f64::min);
        if !changed {
            return if basis.len() == rank {
                let shortest = basis
                    .iter()
                    .min_by(|a, b| linalg::norm(a).total_cmp(&linalg::norm(b)))
                    .cloned();
                DiscretenessReport { discrete: Discreteness::Discrete, r_n: min, minimal_generator: shortest }
            } else {
                // Real dependencies the pairwise descent cannot resolve.
                DiscretenessReport { discrete: Discreteness::Unknown, r_n: min, minimal_generator: None }
            };
        }
        if budget == 0 {
            return DiscretenessReport { discrete: Discreteness::Indiscrete, r_n: 0.0, minimal_generator: None };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn one_d(gens: &[f64]) -> DiscretenessReport {
        lattice_discreteness(&Lattice::new(1, gens.iter().map(|&g| vec![g]).collect()), 1e-9, 1_000_000)
    }

    #[test]
    fn commensurable_generators() {
        let r = one_d(&[4.0 * PI, 4.0 * PI * 0.6]);
        assert_eq!(r.discrete, Discreteness::Discrete);
        assert!((r.r_n - 4.0 * PI / 5.0).abs() < 1e-12);
        let r = one_d(&[-3.0, 2.0, 7.5]);
        assert_eq!(r.discrete, Discreteness::Discrete);
        assert!((r.r_n - 0.5).abs() < 1e-12);
    }

    #[test]
    fn incommensurable_generators() {
        let r = one_d(&[4.0 * PI, 4.0 * PI * 2f64.sqrt()]);
        assert_eq!(r.discrete, Discreteness::Indiscrete);
        assert_eq!(r.r_n, 0.0);
    }

    #[test]
    fn trivial_groups() {
        assert_eq!(one_d(&[]).r_n, f64::INFINITY);
        let r = one_d(&[0.0, 0.0]);
        assert_eq!((r.discrete, r.r_n), (Discreteness::Discrete, f64::INFINITY));
    }

    #[test]
    fn noisy_relation_is_unknown() {
        let l = Lattice::new(1, vec![vec![1.0], vec![0.5 + 1e-6]]).with_uncertainties(vec![1e-5, 1e-5]);
        assert_eq!(lattice_discreteness(&l, 1e-9, 1_000_000).discrete, Discreteness::Unknown);
    }

    #[test]
    fn planar_lattices() {
        let l = Lattice::new(2, vec![vec![1.0, 0.0], vec![0.3, 2.0], vec![1.3, 2.0]]);
        let r = lattice_discreteness(&l, 1e-9, 1_000_000);
        assert_eq!(r.discrete, Discreteness::Discrete);
        assert!((r.r_n - 1.0).abs() < 1e-12);
        let collinear = Lattice::new(2, vec![vec![1.0, 1.0], vec![3.0, 3.0]]);
        let r = lattice_discreteness(&collinear, 1e-9, 1_000_000);
        assert!((r.r_n - 2f64.sqrt()).abs() < 1e-12);
        let dense = Lattice::new(2, vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![2f64.sqrt(), 0.0]]);
        assert_eq!(lattice_discreteness(&dense, 1e-9, 1_000_000).discrete, Discreteness::Indiscrete);
    }
}
