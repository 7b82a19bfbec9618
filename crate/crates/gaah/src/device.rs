//! Tunable-coupler mapping of target couplings and Z-line crosstalk
//! compensation.

use std::f64::consts::PI;
use std::path::Path;

use faer::linalg::solvers::Solve;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// Qubit pair and coupler constants, rad/ns; the coupler frequency is left free.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coupler {
    pub j_direct_qq: f64,
    pub j_qc_left: f64,
    pub j_qc_right: f64,
    pub omega_q_left: f64,
    pub omega_q_right: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplerSpec {
    pub j_direct_qq: f64,
    pub j_qc_left: f64,
    pub j_qc_right: f64,
    pub omega_q_left: f64,
    pub omega_q_right: f64,
    pub omega_c: f64,
}

impl Coupler {
    pub fn with_omega_c(&self, omega_c: f64) -> CouplerSpec {
        CouplerSpec {
            j_direct_qq: self.j_direct_qq,
            j_qc_left: self.j_qc_left,
            j_qc_right: self.j_qc_right,
            omega_q_left: self.omega_q_left,
            omega_q_right: self.omega_q_right,
            omega_c,
        }
    }

    fn poles(&self) -> [f64; 2] {
        [self.omega_q_left, self.omega_q_right]
    }
}

/// J = J⁰ + J_l J_r / Δ with 1/Δ = [1/(ω_l − ω_c) + 1/(ω_r − ω_c)]/2.
pub fn effective_coupling(spec: &CouplerSpec) -> Result<f64> {
    let dl = spec.omega_q_left - spec.omega_c;
    let dr = spec.omega_q_right - spec.omega_c;
    if dl == 0.0 || dr == 0.0 {
        return Err(Error::Domain("coupler frequency coincides with a qubit frequency".into()));
    }
    let inv_delta = 0.5 * (1.0 / dl + 1.0 / dr);
    Ok(spec.j_direct_qq + spec.j_qc_left * spec.j_qc_right * inv_delta)
}

/// Couplings reachable inside `bracket`, which must avoid both poles.
pub fn achievable_range(c: &Coupler, bracket: (f64, f64)) -> Result<(f64, f64)> {
    let (lo, hi) = bracket;
    if !(lo < hi) {
        return Err(param("bracket", format!("lower end {lo} must be below upper end {hi}")));
    }
    if c.poles().iter().any(|&p| p >= lo && p <= hi) {
        return Err(param("bracket", "bracket contains a qubit frequency"));
    }
    let a = effective_coupling(&c.with_omega_c(lo))?;
    let b = effective_coupling(&c.with_omega_c(hi))?;
    Ok((a.min(b), a.max(b)))
}

/// Coupler frequency in `bracket` giving `target_j`, to 1e-6 rad/ns or better.
pub fn solve_coupler_frequency(target_j: f64, c: &Coupler, bracket: (f64, f64)) -> Result<f64> {
    let (jmin, jmax) = achievable_range(c, bracket)?;
    // Endpoint values carry rounding error; accept targets that touch them.
    let slack = 1e-12 * (jmax - jmin).max(jmax.abs());
    if target_j < jmin - slack || target_j > jmax + slack {
        return Err(Error::Infeasible(format!(
            "target {target_j:.6} rad/ns (2pi x {:.4} MHz) outside achievable [{jmin:.6}, {jmax:.6}] rad/ns \
             (2pi x [{:.4}, {:.4}] MHz)",
            target_j / (2.0 * PI) * 1e3,
            jmin / (2.0 * PI) * 1e3,
            jmax / (2.0 * PI) * 1e3
        )));
    }
    let f = |w: f64| effective_coupling(&c.with_omega_c(w)).map(|j| j - target_j);
    let (mut lo, mut hi) = bracket;
    let mut flo = f(lo)?;
    if flo == 0.0 {
        return Ok(lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm == 0.0 || (hi - lo) < 1e-15 * mid.abs().max(1.0) {
            return Ok(mid);
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Linear Z-line crosstalk: realised = X · applied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrosstalkMatrix {
    #[serde(default)]
    pub labels: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
}

impl CrosstalkMatrix {
    pub fn identity(n: usize) -> Self {
        Self { labels: vec![], matrix: (0..n).map(|i| (0..n).map(|j| f64::from(i == j)).collect()).collect() }
    }

    pub fn n(&self) -> usize {
        self.matrix.len()
    }

    fn to_mat(&self) -> Result<Mat<f64>> {
        let n = self.n();
        if n == 0 || self.matrix.iter().any(|r| r.len() != n) {
            return Err(param("crosstalk.matrix", "must be a non-empty square matrix"));
        }
        for (i, r) in self.matrix.iter().enumerate() {
            if (r[i] - 1.0).abs() > 1e-12 {
                return Err(param("crosstalk.matrix", format!("diagonal entry {i} is {}, expected 1", r[i])));
            }
        }
        if !self.labels.is_empty() && self.labels.len() != n {
            return Err(param("crosstalk.labels", format!("expected {n} labels, got {}", self.labels.len())));
        }
        Ok(Mat::from_fn(n, n, |i, j| self.matrix[i][j]))
    }

    /// 2-norm condition number.
    pub fn condition_number(&self) -> Result<f64> {
        let sv = self.to_mat()?.singular_values().map_err(|e| Error::Eigen(format!("{e:?}")))?;
        let max = sv.iter().cloned().fold(0.0, f64::max);
        let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(if min == 0.0 { f64::INFINITY } else { max / min })
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.matrix.iter().map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }
}

/// Largest condition number accepted by [`compensate_crosstalk`].
pub const MAX_CONDITION: f64 = 1e6;

/// Applied amplitudes `X⁻¹ · intended`, refined until the realised residual is ≤ 1e-10.
pub fn compensate_crosstalk(intended: &[f64], x: &CrosstalkMatrix) -> Result<Vec<f64>> {
    let m = x.to_mat()?;
    let n = x.n();
    if intended.len() != n {
        return Err(Error::Domain(format!("{} amplitudes for a {n}-line crosstalk matrix", intended.len())));
    }
    let cond = x.condition_number()?;
    if !(cond <= MAX_CONDITION) {
        return Err(Error::IllConditioned(format!("condition number {cond:.3e} exceeds {MAX_CONDITION:.0e}")));
    }
    let lu = m.partial_piv_lu();
    let rhs = Mat::from_fn(n, 1, |i, _| intended[i]);
    let mut sol = lu.solve(&rhs);
    for _ in 0..3 {
        let r = &rhs - &m * &sol;
        if (0..n).all(|i| r[(i, 0)].abs() <= 1e-13 * intended.iter().fold(1.0f64, |a, b| a.max(b.abs()))) {
            break;
        }
        sol += lu.solve(&r);
    }
    Ok((0..n).map(|i| sol[(i, 0)]).collect())
}

/// Device description for coupler mapping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    /// True when the constants are invented rather than measured.
    #[serde(default)]
    pub synthetic: bool,
    #[serde(default)]
    pub note: String,
    pub couplers: Vec<Coupler>,
    /// Coupler frequency range searched for every coupler, rad/ns.
    pub bracket: (f64, f64),
    #[serde(default)]
    pub crosstalk: Option<CrosstalkMatrix>,
    /// Intended Z amplitudes (qubits then couplers) to pre-compensate.
    #[serde(default)]
    pub intended_zpa: Option<Vec<f64>>,
}

pub fn load_device(path: &Path) -> Result<DeviceConfig> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Synthetic constants whose reachable coupling range is 2π × [−30, +4.8] MHz.
pub fn synthetic_device(n_couplers: usize) -> DeviceConfig {
    let tau = 2.0 * PI;
    let wq = tau * 4.36;
    let g = tau * 0.05;
    let j0 = tau * 0.006;
    // J/2π = 0.006 − 0.0025/Δ (GHz) with Δ the coupler-qubit detuning in GHz.
    let d_lo = 0.0025 / 0.036;
    let d_hi = 0.0025 / 0.0012;
    let coupler = Coupler { j_direct_qq: j0, j_qc_left: g, j_qc_right: g, omega_q_left: wq, omega_q_right: wq };
    DeviceConfig {
        synthetic: true,
        note: "synthetic constants chosen to reproduce a -30 to +4.8 MHz coupling range".into(),
        couplers: vec![coupler; n_couplers],
        bracket: (wq + tau * d_lo, wq + tau * d_hi),
        crosstalk: None,
        intended_zpa: None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplerSetting {
    pub index: usize,
    pub target_j: f64,
    pub omega_c: f64,
    pub achieved_j: f64,
}

/// Solve every coupler for its target coupling.
pub fn map_profile(targets: &[f64], dev: &DeviceConfig) -> Result<Vec<CouplerSetting>> {
    if targets.len() != dev.couplers.len() {
        return Err(param("device.couplers", format!("{} couplers for {} target couplings", dev.couplers.len(), targets.len())));
    }
    targets
        .iter()
        .zip(&dev.couplers)
        .enumerate()
        .map(|(i, (&t, c))| {
            let w = solve_coupler_frequency(t, c, dev.bracket)
                .map_err(|e| Error::Infeasible(format!("coupler {}: {e}", i + 1)))?;
            Ok(CouplerSetting { index: i + 1, target_j: t, omega_c: w, achieved_j: effective_coupling(&c.with_omega_c(w))? })
        })
        .collect()
}
