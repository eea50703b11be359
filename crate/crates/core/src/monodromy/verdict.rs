use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use super::lattice::{lattice_discreteness, Discreteness, Lattice};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Verdict {
    #[serde(rename = "integrable-at-x")]
    Integrable,
    #[serde(rename = "inconclusive")]
    Inconclusive,
    #[serde(rename = "obstruction-(ii)")]
    ObstructionII,
    #[serde(rename = "obstruction-(i)")]
    ObstructionI,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Integrable => "integrable-at-x",
            Verdict::Inconclusive => "inconclusive",
            Verdict::ObstructionII => "obstruction-(ii)",
            Verdict::ObstructionI => "obstruction-(i)",
        }
    }

    /// `Some(false)` for either obstruction, `None` when inconclusive.
    pub fn integrable(self) -> Option<bool> {
        match self {
            Verdict::Integrable => Some(true),
            Verdict::Inconclusive => None,
            Verdict::ObstructionI | Verdict::ObstructionII => Some(false),
        }
    }
}

/// Worst case over the points of a chart.
pub fn aggregate_verdicts(verdicts: &[Verdict]) -> Verdict {
    verdicts.iter().copied().max().unwrap_or(Verdict::Inconclusive)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerdictThresholds {
    pub eps: f64,
    pub q_max: u64,
    /// Minimum log-log slope of `r_N` against transversal distance for a
    /// monotone decay to count as `r_N → 0`.
    pub min_decay_slope: f64,
}

impl Default for VerdictThresholds {
    fn default() -> Self {
        VerdictThresholds { eps: 1e-9, q_max: 1_000_000, min_decay_slope: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransversalSample {
    pub distance: f64,
    #[serde(serialize_with = "crate::serde_float::serialize")]
    pub r_n: f64,
    pub discrete: Discreteness,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegrabilityReport {
    pub point: Vec<f64>,
    pub lattice: Lattice,
    #[serde(serialize_with = "crate::serde_float::serialize")]
    pub r_n: f64,
    pub discrete: Discreteness,
    pub minimal_generator: Option<Vec<f64>>,
    pub transversal: Vec<TransversalSample>,
    /// Log-log slope of `r_N` over the closest half of the transversal
    /// samples, when at least two distinct finite distances are available.
    pub transversal_slope: Option<f64>,
    pub verdict: Verdict,
    pub integrable: Option<bool>,
    pub reason: String,
    pub thresholds: VerdictThresholds,
}

/// Least-squares slope of `log y` against `log x`.
fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

/// Transversal test: over the closest half of the samples (samples at equal
/// distance merged by their minimum), `r_N → 0` is declared when some value
/// is below `eps`, or when the values are non-decreasing in the distance
/// with log-log slope at least `min_decay_slope`.
fn transversal_decay(samples: &[TransversalSample], th: &VerdictThresholds) -> (bool, Option<f64>, String) {
    let mut sorted: Vec<&TransversalSample> = samples.iter().filter(|s| s.distance > 0.0).collect();
    sorted.sort_by(|a, b| a.distance.total_cmp(&b.distance));
    let mut grouped: Vec<(f64, f64)> = Vec::new();
    for s in sorted {
        let r = if s.discrete == Discreteness::Indiscrete { 0.0 } else { s.r_n };
        match grouped.last_mut() {
            Some((d, v)) if (*d - s.distance).abs() <= 1e-12 * d.abs().max(1.0) => *v = v.min(r),
            _ => grouped.push((s.distance, r)),
        }
    }
    let half = grouped.len().div_ceil(2);
    let closest = &grouped[..half];
    if let Some((d, v)) = closest.iter().find(|(_, v)| *v < th.eps) {
        return (true, None, format!("transversal r_N = {v:e} < eps at distance {d:e}"));
    }
    let finite: Vec<(f64, f64)> = closest.iter().copied().filter(|(_, v)| v.is_finite()).collect();
    let slope = log_log_slope(&finite);
    let monotone = finite.windows(2).all(|w| w[1].1 >= w[0].1);
    match slope {
        Some(s) if monotone && s >= th.min_decay_slope => {
            (true, Some(s), format!("transversal r_N decreases toward the leaf with log-log slope {s:.3}"))
        }
        _ => (false, slope, "transversal r_N stays away from 0".into()),
    }
}

/// Verdict at `x` from its monodromy lattice and transversal `r_N` samples.
pub fn integrability_verdict(
    point: &[f64],
    lattice: Lattice,
    transversal: Vec<TransversalSample>,
    thresholds: VerdictThresholds,
) -> IntegrabilityReport {
    let at_x = lattice_discreteness(&lattice, thresholds.eps, thresholds.q_max);
    let (decays, slope, why) = transversal_decay(&transversal, &thresholds);
    let (verdict, reason) = match at_x.discrete {
        Discreteness::Indiscrete => (Verdict::ObstructionI, "monodromy group at x is not discrete".to_string()),
        Discreteness::Unknown => {
            (Verdict::Inconclusive, "discreteness at x is undecided at the given tolerance".to_string())
        }
        Discreteness::Discrete if decays => (Verdict::ObstructionII, why),
        Discreteness::Discrete => (Verdict::Integrable, why),
    };
    IntegrabilityReport {
        point: point.to_vec(),
        lattice,
        r_n: at_x.r_n,
        discrete: at_x.discrete,
        minimal_generator: at_x.minimal_generator,
        transversal,
        transversal_slope: slope,
        verdict,
        integrable: verdict.integrable(),
        reason,
        thresholds,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRow {
    pub point: Vec<f64>,
    #[serde(serialize_with = "crate::serde_float::serialize")]
    pub r_n: f64,
    pub discrete: Option<Discreteness>,
    pub generators: Vec<Vec<f64>>,
    pub error: Option<String>,
}

/// `r_N` at each point; errors are recorded per row.
pub fn rn_profile<F>(points: &[Vec<f64>], lattice_for: F, eps: f64, q_max: u64) -> Vec<ProfileRow>
where
    F: Fn(&[f64]) -> Result<Lattice> + Sync,
{
    points
        .par_iter()
        .map(|x| match lattice_for(x) {
            Ok(l) => {
                let rep = lattice_discreteness(&l, eps, q_max);
                ProfileRow { point: x.clone(), r_n: rep.r_n, discrete: Some(rep.discrete), generators: l.generators, error: None }
            }
            Err(e) => ProfileRow { point: x.clone(), r_n: f64::NAN, discrete: None, generators: Vec::new(), error: Some(e.to_string()) },
        })
        .collect()
}

/// CSV of the profile. With a label column (e.g. the leaf parameter) the
/// columns are `label,r_n,generator`, otherwise `x1..xn,r_n,generator`. The
/// generator column lists the generators separated by `;`, components by
/// spaces. No rows gives an empty string.
pub fn profile_csv(rows: &[ProfileRow], label: Option<(&str, &[f64])>) -> String {
    if rows.is_empty() {
        return String::new();
    }
    let n = rows[0].point.len();
    let mut out = String::new();
    match label {
        Some((name, _)) => write!(out, "{name},").unwrap(),
        None => (1..=n).for_each(|i| write!(out, "x{i},").unwrap()),
    }
    out.push_str("r_n,generator\n");
    for (j, row) in rows.iter().enumerate() {
        match label {
            Some((_, vals)) => write!(out, "{:e},", vals[j]).unwrap(),
            None => row.point.iter().for_each(|v| write!(out, "{v:e},").unwrap()),
        }
        if row.r_n.is_infinite() {
            out.push_str("inf,");
        } else {
            write!(out, "{:e},", row.r_n).unwrap();
        }
        let gens: Vec<String> = row
            .generators
            .iter()
            .map(|g| g.iter().map(|c| format!("{c:e}")).collect::<Vec<_>>().join(" "))
            .collect();
        out.push_str(&gens.join(";"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(f: impl Fn(f64) -> f64) -> Vec<TransversalSample> {
        (1..=8)
            .flat_map(|m| {
                let d = 0.5f64.powi(m);
                [d, d].into_iter()
            })
            .map(|d| TransversalSample { distance: d, r_n: f(d), discrete: Discreteness::Discrete })
            .collect()
    }

    #[test]
    fn verdict_cases() {
        let th = VerdictThresholds::default();
        let lat = Lattice::new(1, vec![vec![4.0 * std::f64::consts::PI]]);
        let flat = integrability_verdict(&[0.0], lat.clone(), samples(|_| 12.0), th);
        assert_eq!(flat.verdict, Verdict::Integrable);
        let linear = integrability_verdict(&[0.0], lat.clone(), samples(|d| 15.0 * d), th);
        assert_eq!(linear.verdict, Verdict::ObstructionII);
        assert!((linear.transversal_slope.unwrap() - 1.0).abs() < 1e-12);
        let dense = Lattice::new(1, vec![vec![1.0], vec![2f64.sqrt()]]);
        assert_eq!(integrability_verdict(&[0.0], dense, vec![], th).verdict, Verdict::ObstructionI);
        assert_eq!(
            aggregate_verdicts(&[Verdict::Integrable, Verdict::ObstructionII, Verdict::Inconclusive]),
            Verdict::ObstructionII
        );
    }

    #[test]
    fn report_serializes_infinity() {
        let r = integrability_verdict(&[1.0], Lattice::trivial(1), vec![], VerdictThresholds::default());
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"r_n\":\"inf\""));
        assert!(json.contains("\"verdict\":\"integrable-at-x\""));
    }

    #[test]
    fn profile_csv_columns() {
        let row = |r: f64, g: f64| ProfileRow {
            point: vec![0.0, 0.0, r],
            r_n: g,
            discrete: Some(Discreteness::Discrete),
            generators: vec![vec![g]],
            error: None,
        };
        let rows = [row(0.5, 2.0), row(1.0, f64::INFINITY)];
        let csv = profile_csv(&rows, Some(("r", &[0.5, 1.0])));
        assert_eq!(csv, "r,r_n,generator\n5e-1,2e0,2e0\n1e0,inf,inf\n");
        assert!(profile_csv(&rows, None).starts_with("x1,x2,x3,r_n,generator\n0e0,0e0,5e-1,"));
        assert_eq!(profile_csv(&[], None), "");
    }
}
