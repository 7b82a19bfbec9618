//! Late-time statistics, parameter-path sweeps, finite-size rescaling,
//! scaling fits and readout-error mitigation.

use serde::{Deserialize, Serialize};

use crate::basis::{binomial, FockState};
use crate::dynamics::{default_initial_states, quench_pe_series, time_grid, EvolveOptions, QuenchOptions, TimeSeries};
use crate::error::{param, Error, Result};
use crate::model::ModelParams;
use crate::seeding::phase_draws;
use crate::spectral::mean_stderr;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LateTimeStat {
    pub mean: f64,
    pub stderr: f64,
    pub window: (f64, f64),
    pub n_traj: usize,
    /// Trajectories × time points in the window.
    pub n_samples: usize,
}

/// Mean over the window and all trajectories; stderr across trajectory means.
pub fn late_time_average(series: &TimeSeries, window: (f64, f64)) -> Result<LateTimeStat> {
    let (ws, we) = window;
    if !(ws < we) {
        return Err(param("window", format!("start {ws} must precede end {we}")));
    }
    let slack = 1e-9 * we.abs().max(1.0);
    let idx: Vec<usize> =
        series.times.iter().enumerate().filter(|(_, &t)| t >= ws - slack && t <= we + slack).map(|(i, _)| i).collect();
    if idx.len() < 2 {
        return Err(param("window", format!("[{ws}, {we}] contains {} time points, need at least 2", idx.len())));
    }
    if series.values.is_empty() {
        return Err(Error::Domain("series has no trajectories".into()));
    }
    let traj_means: Vec<f64> =
        series.values.iter().map(|v| idx.iter().map(|&i| v[i]).sum::<f64>() / idx.len() as f64).collect();
    let (mean, stderr) = mean_stderr(&traj_means);
    Ok(LateTimeStat { mean, stderr, window, n_traj: traj_means.len(), n_samples: traj_means.len() * idx.len() })
}

fn half_filled_log_dim(l: usize) -> Result<f64> {
    if l == 0 || l % 2 == 1 {
        return Err(param("L", format!("rescaling needs an even size, got {l}")));
    }
    Ok((binomial(l, l / 2) as f64).ln())
}

/// ln C(L_to, L_to/2) / ln C(L_from, L_from/2).
pub fn rescale_factor(l_from: usize, l_to: usize) -> Result<f64> {
    Ok(half_filled_log_dim(l_to)? / half_filled_log_dim(l_from)?)
}

pub fn rescale_pe(value: f64, l_from: usize, l_to: usize) -> Result<f64> {
    Ok(value * rescale_factor(l_from, l_to)?)
}

/// The three cuts through the (μ, V) plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NamedPath {
    I,
    II,
    III,
}

impl NamedPath {
    pub fn id(self) -> &'static str {
        match self {
            NamedPath::I => "I",
            NamedPath::II => "II",
            NamedPath::III => "III",
        }
    }

    /// Default grids: V ∈ [1, 4] at μ = 0.5; μ ∈ [0.5, 2] at V = 1; μ ∈ [0, 2] at V = 3.
    pub fn points(self) -> Vec<(f64, f64)> {
        match self {
            NamedPath::I => (0..=12).map(|k| (0.5, 1.0 + 0.25 * k as f64)).collect(),
            NamedPath::II => (0..=6).map(|k| (0.5 + 0.25 * k as f64, 1.0)).collect(),
            NamedPath::III => (0..=8).map(|k| (0.25 * k as f64, 3.0)).collect(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "I" | "1" => Ok(NamedPath::I),
            "II" | "2" => Ok(NamedPath::II),
            "III" | "3" => Ok(NamedPath::III),
            other => Err(param("path", format!("unknown path {other:?}; expected I, II or III"))),
        }
    }
}

/// Sweeps only need the late-time window, where Lanczos beats full
/// diagonalisation well below the general dense threshold.
pub const SWEEP_DENSE_THRESHOLD: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepProtocol {
    pub n_delta: usize,
    pub seed: u64,
    pub window: (f64, f64),
    pub time_step: f64,
    pub q: Vec<f64>,
    pub evolve: EvolveOptions,
}

impl Default for SweepProtocol {
    fn default() -> Self {
        Self {
            n_delta: 50,
            seed: 0,
            window: (350.0, 450.0),
            time_step: 2.0,
            q: vec![2.0],
            evolve: EvolveOptions { dense_threshold: SWEEP_DENSE_THRESHOLD, ..EvolveOptions::default() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub path_id: String,
    pub mu: f64,
    pub v: f64,
    pub q: f64,
    pub l: usize,
    pub stat: LateTimeStat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub n_delta: usize,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
}

/// Late-time participation entropies along `points` with the default
/// half-filling initial states (or `initial_states` when given).
pub fn path_sweep(
    path_id: &str,
    points: &[(f64, f64)],
    base: &ModelParams,
    protocol: &SweepProtocol,
    initial_states: Option<&[FockState]>,
) -> Result<SweepResult> {
    if points.is_empty() {
        return Err(param("path", "path has no points"));
    }
    if protocol.n_delta == 0 {
        return Err(param("n_delta", "must be at least 1"));
    }
    let defaults;
    let init = match initial_states {
        Some(s) => s,
        None => {
            defaults = default_initial_states(base.l, base.l / 2)?;
            &defaults
        }
    };
    let times = time_grid(protocol.window.0, protocol.window.1, protocol.time_step)?;
    let opts = QuenchOptions { evolve: protocol.evolve.clone(), shot_noise: None };
    let mut rows = Vec::new();
    for (p, &(mu, v)) in points.iter().enumerate() {
        let params = ModelParams { mu, v, ..base.clone() };
        let deltas = phase_draws(protocol.seed, p as u64, protocol.n_delta);
        let series = quench_pe_series(&params, init, &deltas, &times, &protocol.q, &opts)?;
        for (s, &q) in series.iter().zip(&protocol.q) {
            rows.push(SweepRow {
                path_id: path_id.to_string(),
                mu,
                v,
                q,
                l: base.l,
                stat: late_time_average(s, protocol.window)?,
            });
        }
    }
    Ok(SweepResult { n_delta: protocol.n_delta, seed: protocol.seed, rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub a: f64,
    pub b: f64,
    pub residual: f64,
}

/// Ordinary least squares `y = a x + b` over `(ln N, S̄)` points.
pub fn scaling_fit(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(param("sizes", format!("need at least 3 points, got {}", points.len())));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 1e-300 * n {
        return Err(Error::Degenerate("all abscissas coincide".into()));
    }
    let a = sxy / sxx;
    let b = my - a * mx;
    let residual = (points.iter().map(|p| (p.1 - a * p.0 - b).powi(2)).sum::<f64>() / n).sqrt();
    Ok(ScalingFit { a, b, residual })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingStudy {
    pub point: (f64, f64),
    pub q: f64,
    pub sizes: Vec<usize>,
    pub ln_dim: Vec<f64>,
    pub values: Vec<LateTimeStat>,
    pub fit: ScalingFit,
}

/// Late-time entropies of half-filled chains of each size, fitted against ln C(L, L/2).
pub fn scaling_study(
    point: (f64, f64),
    sizes: &[usize],
    base: &ModelParams,
    protocol: &SweepProtocol,
) -> Result<Vec<ScalingStudy>> {
    let mut per_size = Vec::new();
    for &l in sizes {
        let params = ModelParams { l, ..base.clone() };
        per_size.push(path_sweep("scaling", &[point], &params, protocol, None)?);
    }
    let ln_dim: Vec<f64> = sizes.iter().map(|&l| half_filled_log_dim(l)).collect::<Result<_>>()?;
    protocol
        .q
        .iter()
        .enumerate()
        .map(|(k, &q)| {
            let values: Vec<LateTimeStat> = per_size.iter().map(|r| r.rows[k].stat.clone()).collect();
            let pts: Vec<(f64, f64)> = ln_dim.iter().zip(&values).map(|(&x, s)| (x, s.mean)).collect();
            Ok(ScalingStudy { point, q, sizes: sizes.to_vec(), ln_dim: ln_dim.clone(), values, fit: scaling_fit(&pts)? })
        })
        .collect()
}

/// Per-qubit readout fidelities: F0 = P(read 0 | 0), F1 = P(read 1 | 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutFidelity {
    pub f0: f64,
    pub f1: f64,
}

/// Device readout fidelities of qubits Q1..Q10.
pub fn device_fidelities() -> Vec<ReadoutFidelity> {
    const F0: [f64; 10] = [0.969, 0.947, 0.966, 0.956, 0.956, 0.948, 0.968, 0.951, 0.957, 0.954];
    const F1: [f64; 10] = [0.926, 0.901, 0.926, 0.907, 0.918, 0.909, 0.915, 0.895, 0.919, 0.913];
    F0.iter().zip(F1).map(|(&f0, f1)| ReadoutFidelity { f0, f1 }).collect()
}

fn check_joint(p: &[f64], fid: &[ReadoutFidelity]) -> Result<()> {
    if fid.is_empty() || fid.len() > 24 || p.len() != 1 << fid.len() {
        return Err(Error::Domain(format!(
            "distribution of length {} does not match {} qubits",
            p.len(),
            fid.len()
        )));
    }
    Ok(())
}

/// Apply the 2×2 matrix `m` (row-major) on qubit `q` of a joint distribution.
fn apply_local(p: &mut [f64], q: usize, m: [f64; 4]) {
    let bit = 1 << q;
    for s in 0..p.len() {
        if s & bit == 0 {
            let (p0, p1) = (p[s], p[s | bit]);
            p[s] = m[0] * p0 + m[1] * p1;
            p[s | bit] = m[2] * p0 + m[3] * p1;
        }
    }
}

/// Measured distribution produced by the confusion matrices [[F0, 1−F1], [1−F0, F1]].
pub fn corrupt_readout(true_probs: &[f64], fid: &[ReadoutFidelity]) -> Result<Vec<f64>> {
    check_joint(true_probs, fid)?;
    let mut p = true_probs.to_vec();
    for (q, f) in fid.iter().enumerate() {
        apply_local(&mut p, q, [f.f0, 1.0 - f.f1, 1.0 - f.f0, f.f1]);
    }
    Ok(p)
}

/// Exact inverse of [`corrupt_readout`], without clipping.
pub fn invert_readout(raw: &[f64], fid: &[ReadoutFidelity]) -> Result<Vec<f64>> {
    check_joint(raw, fid)?;
    let mut p = raw.to_vec();
    for (q, f) in fid.iter().enumerate() {
        let det = f.f0 + f.f1 - 1.0;
        if !(det > 1e-12) {
            return Err(Error::Domain(format!("qubit {}: F0 + F1 must exceed 1 (got {})", q + 1, f.f0 + f.f1)));
        }
        apply_local(&mut p, q, [f.f1 / det, -(1.0 - f.f1) / det, -(1.0 - f.f0) / det, f.f0 / det]);
    }
    Ok(p)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mitigated {
    pub probs: Vec<f64>,
    /// Total negative mass removed before renormalising.
    pub clipped_mass: f64,
}

/// Invert the readout confusion, clip negative entries and renormalise.
pub fn mitigate_readout(raw: &[f64], fid: &[ReadoutFidelity]) -> Result<Mitigated> {
    let mut p = invert_readout(raw, fid)?;
    let clipped_mass: f64 = p.iter().filter(|&&x| x < 0.0).map(|x| -x).sum();
    p.iter_mut().for_each(|x| *x = x.max(0.0));
    let total: f64 = p.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("mitigated distribution has no positive mass".into()));
    }
    p.iter_mut().for_each(|x| *x /= total);
    Ok(Mitigated { probs: p, clipped_mass })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_on_two_ns_grid() {
        let times = time_grid(0.0, 500.0, 2.0).unwrap();
        let s = TimeSeries { label: "c".into(), times: times.clone(), values: vec![vec![3.0; times.len()]; 4] };
        let st = late_time_average(&s, (350.0, 450.0)).unwrap();
        assert_eq!(st.mean, 3.0);
        assert_eq!(st.stderr, 0.0);
        assert_eq!(st.n_samples, 4 * 51);
        assert!(late_time_average(&s, (351.0, 352.0)).is_err());
    }

    #[test]
    fn rescale_factors() {
        assert_eq!(rescale_factor(10, 10).unwrap(), 1.0);
        assert!((rescale_factor(14, 10).unwrap() - 252f64.ln() / 3432f64.ln()).abs() < 1e-15);
        assert!((rescale_factor(22, 10).unwrap() - 252f64.ln() / 705432f64.ln()).abs() < 1e-15);
        assert!(rescale_factor(9, 10).is_err());
    }

    #[test]
    fn exact_line_fit() {
        let pts: Vec<(f64, f64)> = [1.0, 2.0, 4.0].iter().map(|&x| (x, 0.5 * x + 0.1)).collect();
        let f = scaling_fit(&pts).unwrap();
        assert!((f.a - 0.5).abs() < 1e-14 && (f.b - 0.1).abs() < 1e-14 && f.residual < 1e-14);
        assert!(scaling_fit(&[(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)]).is_err());
        assert!(scaling_fit(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
    }

    #[test]
    fn single_qubit_mitigation() {
        let fid = [ReadoutFidelity { f0: 0.969, f1: 0.926 }];
        let m = mitigate_readout(&[0.5, 0.5], &fid).unwrap();
        assert!((m.probs[1] - (0.5 - 0.031) / 0.895).abs() < 1e-12);
        let ideal = [ReadoutFidelity { f0: 1.0, f1: 1.0 }; 2];
        assert_eq!(mitigate_readout(&[0.1, 0.2, 0.3, 0.4], &ideal).unwrap().probs, vec![0.1, 0.2, 0.3, 0.4]);
        assert!(invert_readout(&[0.5, 0.5], &[ReadoutFidelity { f0: 0.5, f1: 0.5 }]).is_err());
    }

    #[test]
    fn named_paths() {
        assert_eq!(NamedPath::II.points().len(), 7);
        assert_eq!(NamedPath::I.points().last(), Some(&(0.5, 4.0)));
    }
}
