//! Lindblad evolution in the full 2^L space with per-qubit relaxation and
//! dephasing, and post-selection onto an excitation sector.

use faer::{Mat, Side};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{enumerate_sector, FockState, SectorBasis};
use crate::dynamics::{entropy_unchecked, PureState, TimeSeries};
use crate::error::{param, Error, Result};
use crate::model::{wrap_phase, FullSpaceHamiltonian, ModelParams};
use crate::C64;

/// Mean T1 of the device, ns.
pub const DEFAULT_T1: f64 = 22_300.0;
/// Mean T2 of the device, ns.
pub const DEFAULT_T2: f64 = 4_000.0;

/// Per-qubit T1 and T2 in ns; `f64::INFINITY` disables a channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub t1: Vec<f64>,
    pub t2: Vec<f64>,
}

impl NoiseModel {
    pub fn uniform(l: usize, t1: f64, t2: f64) -> Self {
        Self { t1: vec![t1; l], t2: vec![t2; l] }
    }

    pub fn closed(l: usize) -> Self {
        Self::uniform(l, f64::INFINITY, f64::INFINITY)
    }

    /// Broadcast single-entry lists to `l` qubits and validate.
    pub fn for_sites(&self, l: usize) -> Result<Self> {
        let bc = |v: &[f64], name: &str| -> Result<Vec<f64>> {
            let out = match v.len() {
                1 => vec![v[0]; l],
                n if n == l => v.to_vec(),
                n => return Err(param(name, format!("expected 1 or {l} entries, got {n}"))),
            };
            if out.iter().any(|&x| !(x > 0.0)) {
                return Err(param(name, "all times must be positive"));
            }
            Ok(out)
        };
        Ok(Self { t1: bc(&self.t1, "noise.t1")?, t2: bc(&self.t2, "noise.t2")? })
    }
}

/// Dense complex density matrix over the full 2^L space, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    l: usize,
    pub data: Vec<C64>,
}

impl DensityMatrix {
    pub fn zeros(l: usize) -> Self {
        let d = 1usize << l;
        Self { l, data: vec![C64::new(0.0, 0.0); d * d] }
    }

    pub fn from_pure(l: usize, amps: &[C64]) -> Result<Self> {
        let d = 1usize << l;
        if amps.len() != d {
            return Err(Error::Domain(format!("{} amplitudes for a {d}-dimensional space", amps.len())));
        }
        let mut r = Self::zeros(l);
        for a in 0..d {
            for b in 0..d {
                r.data[a * d + b] = amps[a] * amps[b].conj();
            }
        }
        Ok(r)
    }

    pub fn from_basis_state(s: FockState) -> Self {
        let mut r = Self::zeros(s.len);
        let d = r.dim();
        let k = s.bits as usize;
        r.data[k * d + k] = C64::new(1.0, 0.0);
        r
    }

    /// Embed a sector state into the full space.
    pub fn from_sector_state(psi: &PureState) -> Result<Self> {
        let l = psi.basis().l();
        let mut full = vec![C64::new(0.0, 0.0); 1 << l];
        for (&s, &a) in psi.basis().states().iter().zip(&psi.amps) {
            full[s as usize] = a;
        }
        Self::from_pure(l, &full)
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn dim(&self) -> usize {
        1 << self.l
    }

    pub fn get(&self, a: usize, b: usize) -> C64 {
        self.data[a * self.dim() + b]
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|a| self.get(a, a)).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|a| self.get(a, a).re).collect()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut m = 0.0f64;
        for a in 0..d {
            for b in 0..=a {
                m = m.max((self.get(a, b) - self.get(b, a).conj()).norm());
            }
        }
        m
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let d = self.dim();
        let m = Mat::from_fn(d, d, |a, b| self.get(a, b));
        let ev = m.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))?;
        Ok(ev.into_iter().fold(f64::INFINITY, f64::min))
    }

    /// ⟨n_j⟩ for j = 1..L.
    pub fn occupancy(&self) -> Vec<f64> {
        let diag = self.diagonal();
        (0..self.l).map(|j| diag.iter().enumerate().filter(|(s, _)| s >> j & 1 == 1).map(|(_, p)| p).sum()).collect()
    }

    pub fn total_excitation(&self) -> f64 {
        self.occupancy().iter().sum()
    }

    fn frob(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Precomputed rates for the right-hand side.
struct Rates {
    /// Σ over qubits in which a and b differ of 1/T2, indexed by a ^ b.
    deph: Vec<f64>,
    /// Σ over excited qubits of 1/T1, indexed by state.
    loss: Vec<f64>,
    inv_t1: Vec<f64>,
}

impl Rates {
    fn new(l: usize, noise: &NoiseModel) -> Self {
        let d = 1usize << l;
        let inv_t1: Vec<f64> = noise.t1.iter().map(|t| 1.0 / t).collect();
        let inv_t2: Vec<f64> = noise.t2.iter().map(|t| 1.0 / t).collect();
        let bitsum = |w: &[f64], s: usize| (0..l).filter(|&j| s >> j & 1 == 1).map(|j| w[j]).sum::<f64>();
        Self {
            deph: (0..d).map(|x| bitsum(&inv_t2, x)).collect(),
            loss: (0..d).map(|s| bitsum(&inv_t1, s)).collect(),
            inv_t1,
        }
    }
}

fn check_dims(rho: &DensityMatrix, h: &FullSpaceHamiltonian, noise: &NoiseModel) -> Result<()> {
    if rho.l != h.l() || noise.t1.len() != h.l() || noise.t2.len() != h.l() {
        return Err(Error::Domain(format!(
            "dimension mismatch: rho has L = {}, H has L = {}, noise has {}/{} entries",
            rho.l,
            h.l(),
            noise.t1.len(),
            noise.t2.len()
        )));
    }
    Ok(())
}

fn rhs_into(rho: &[C64], h: &FullSpaceHamiltonian, rates: &Rates, out: &mut [C64]) {
    let l = h.l();
    let d = 1usize << l;
    let mi = C64::new(0.0, -1.0);
    out.par_chunks_mut(d).enumerate().for_each(|(a, row)| {
        let ea = h.diag(a);
        let ga = rates.loss[a];
        for (b, o) in row.iter_mut().enumerate() {
            let r = rho[a * d + b];
            // −i[H, ρ]
            let mut comm = r * (ea - h.diag(b));
            h.for_each_hop(a, |t, j| comm += rho[t * d + b] * j);
            h.for_each_hop(b, |t, j| comm -= rho[a * d + t] * j);
            let mut v = mi * comm;
            v -= r * (rates.deph[a ^ b] + 0.5 * (ga + rates.loss[b]));
            // a_n ρ a_n† feeds (a, b) from (a + n, b + n).
            let free = !(a | b) & (d - 1);
            let mut f = free;
            while f != 0 {
                let n = f.trailing_zeros() as usize;
                let bit = 1 << n;
                v += rho[(a | bit) * d + (b | bit)] * rates.inv_t1[n];
                f &= f - 1;
            }
            *o = v;
        }
    });
}

/// dρ/dt = −i[H, ρ] + Σ_n (K_n ρ K_n† − ½{K_n†K_n, ρ}) with
/// K_n = (1 − 2n̂_n)/√(2T2_n) and K_n = â_n/√T1_n.
pub fn lindblad_rhs(rho: &DensityMatrix, h: &FullSpaceHamiltonian, noise: &NoiseModel) -> Result<DensityMatrix> {
    check_dims(rho, h, noise)?;
    let mut out = DensityMatrix::zeros(rho.l);
    rhs_into(&rho.data, h, &Rates::new(rho.l, noise), &mut out.data);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LindbladOptions {
    /// Local error per step relative to ‖ρ‖_F.
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for LindbladOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_steps: 10_000_000 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LindbladStats {
    pub accepted: usize,
    pub rejected: usize,
    pub max_trace_error: f64,
}

// Dormand-Prince 5(4) tableau; the generator is autonomous so the nodes are unused.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn combine(out: &mut [C64], y: &[C64], h: f64, terms: &[(f64, &[C64])]) {
    out.par_iter_mut().enumerate().for_each(|(i, o)| {
        let mut acc = C64::new(0.0, 0.0);
        for &(c, k) in terms {
            acc += k[i] * c;
        }
        *o = y[i] + acc * h;
    });
}

/// Integrate from t = 0, calling `observe(index, t, ρ)` at each requested time.
const ERR_CHUNK: usize = 4096;

pub fn evolve_lindblad_observe(
    rho0: &DensityMatrix,
    h: &FullSpaceHamiltonian,
    noise: &NoiseModel,
    times: &[f64],
    opts: &LindbladOptions,
    mut observe: impl FnMut(usize, f64, &DensityMatrix),
) -> Result<LindbladStats> {
    check_dims(rho0, h, noise)?;
    if times.iter().any(|t| !(*t >= 0.0)) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(param("times", "must be sorted and non-negative"));
    }
    let l = rho0.l;
    let rates = Rates::new(l, noise);
    let n = rho0.data.len();
    let zero = C64::new(0.0, 0.0);
    let mut y = rho0.clone();
    let mut tmp = vec![zero; n];
    let mut k: Vec<Vec<C64>> = (0..7).map(|_| vec![zero; n]).collect();
    let mut stats = LindbladStats::default();
    let decay: f64 = rates.loss[(1 << l) - 1] + rates.deph[(1 << l) - 1];
    let scale = h.profile().h.iter().map(|x| x.abs()).sum::<f64>()
        + 2.0 * h.profile().j.iter().map(|x| x.abs()).sum::<f64>()
        + decay;
    let mut step = if scale > 0.0 { 0.5 / scale } else { 1.0 };
    let mut t = 0.0;
    rhs_into(&y.data, h, &rates, &mut k[0]);
    for (idx, &target) in times.iter().enumerate() {
        while t < target {
            if stats.accepted + stats.rejected >= opts.max_steps {
                return Err(Error::Integrator(format!("step budget exhausted at t = {t} ns")));
            }
            let hh = step.min(target - t);
            let last = hh >= target - t;
            {
                let (k0, rest) = k.split_at_mut(1);
                combine(&mut tmp, &y.data, hh, &[(A21, &k0[0])]);
                rhs_into(&tmp, h, &rates, &mut rest[0]);
            }
            combine(&mut tmp, &y.data, hh, &[(A31, &k[0]), (A32, &k[1])]);
            rhs_into(&tmp, h, &rates, &mut k[2]);
            combine(&mut tmp, &y.data, hh, &[(A41, &k[0]), (A42, &k[1]), (A43, &k[2])]);
            rhs_into(&tmp, h, &rates, &mut k[3]);
            combine(&mut tmp, &y.data, hh, &[(A51, &k[0]), (A52, &k[1]), (A53, &k[2]), (A54, &k[3])]);
            rhs_into(&tmp, h, &rates, &mut k[4]);
            combine(&mut tmp, &y.data, hh, &[(A61, &k[0]), (A62, &k[1]), (A63, &k[2]), (A64, &k[3]), (A65, &k[4])]);
            rhs_into(&tmp, h, &rates, &mut k[5]);
            combine(&mut tmp, &y.data, hh, &[(B1, &k[0]), (B3, &k[2]), (B4, &k[3]), (B5, &k[4]), (B6, &k[5])]);
            rhs_into(&tmp, h, &rates, &mut k[6]);
            // Fixed-size partial sums keep the reduction order independent of the pool.
            let partial: Vec<f64> = (0..n.div_ceil(ERR_CHUNK))
                .into_par_iter()
                .map(|c| {
                    (c * ERR_CHUNK..((c + 1) * ERR_CHUNK).min(n))
                        .map(|i| {
                            let e = k[0][i] * E1 + k[2][i] * E3 + k[3][i] * E4 + k[4][i] * E5 + k[5][i] * E6 + k[6][i] * E7;
                            e.norm_sqr()
                        })
                        .sum::<f64>()
                })
                .collect();
            let err = partial.iter().sum::<f64>().sqrt() * hh;
            let ratio = err / (opts.tol * y.frob().max(1e-300));
            if ratio <= 1.0 {
                std::mem::swap(&mut y.data, &mut tmp);
                k.swap(0, 6);
                t = if last { target } else { t + hh };
                stats.accepted += 1;
                let tr = (y.trace() - 1.0).norm();
                stats.max_trace_error = stats.max_trace_error.max(tr);
                let grow = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
                if !last || hh >= step {
                    step = hh * grow;
                }
            } else {
                stats.rejected += 1;
                step = hh * (0.9 * ratio.powf(-0.2)).clamp(0.1, 0.9);
                if step < 1e-12 * target.max(1.0) {
                    return Err(Error::Integrator(format!("step size underflow at t = {t} ns")));
                }
            }
        }
        observe(idx, t, &y);
    }
    Ok(stats)
}

pub fn evolve_lindblad(
    rho0: &DensityMatrix,
    h: &FullSpaceHamiltonian,
    noise: &NoiseModel,
    times: &[f64],
    opts: &LindbladOptions,
) -> Result<Vec<DensityMatrix>> {
    let mut out = Vec::with_capacity(times.len());
    evolve_lindblad_observe(rho0, h, noise, times, opts, |_, _, r| out.push(r.clone()))?;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PostSelected {
    pub probs: Vec<f64>,
    pub sector_weight: f64,
    pub discarded_weight: f64,
}

/// Restrict a full-space distribution (indexed by bitmask) to a sector and renormalise.
pub fn post_select(full: &[f64], sector: &SectorBasis) -> Result<PostSelected> {
    if full.len() != 1 << sector.l() {
        return Err(Error::Domain(format!("distribution has {} entries, expected {}", full.len(), 1u64 << sector.l())));
    }
    if full.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::Domain("probabilities must be non-negative".into()));
    }
    let total: f64 = full.iter().sum();
    let raw: Vec<f64> = sector.states().iter().map(|&s| full[s as usize]).collect();
    let w: f64 = raw.iter().sum();
    if !(w > 0.0) {
        return Err(Error::Degenerate("no weight inside the selected sector".into()));
    }
    Ok(PostSelected { probs: raw.iter().map(|x| x / w).collect(), sector_weight: w, discarded_weight: total - w })
}

/// Observables of open-system quenches, trajectories ordered δ-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LindbladSeries {
    /// Raw site occupancies `P_j`.
    pub occupancy: Vec<TimeSeries>,
    /// Post-selected participation entropies, one per order.
    pub entropy: Vec<TimeSeries>,
    pub sector_weight: TimeSeries,
    pub discarded_weight: TimeSeries,
    pub stats: Vec<LindbladStats>,
}

pub fn lindblad_quench(
    params: &ModelParams,
    initial_states: &[FockState],
    deltas: &[f64],
    times: &[f64],
    noise: &NoiseModel,
    qs: &[f64],
    opts: &LindbladOptions,
) -> Result<LindbladSeries> {
    params.validate()?;
    if params.l > 12 {
        return Err(param("L", format!("Lindblad evolution supports L <= 12, got {}", params.l)));
    }
    if initial_states.is_empty() || deltas.is_empty() {
        return Err(param("initial_states", "need at least one initial state and one phase offset"));
    }
    let m = initial_states[0].popcount();
    if initial_states.iter().any(|s| s.popcount() != m || s.len != params.l) {
        return Err(Error::Domain("initial states must share one sector of the chain".into()));
    }
    let noise = noise.for_sites(params.l)?;
    let sector = enumerate_sector(params.l, m)?;
    let jobs: Vec<(f64, FockState)> =
        deltas.iter().flat_map(|&d| initial_states.iter().map(move |&s| (d, s))).collect();
    type Traj = (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>, Vec<f64>, LindbladStats);
    let runs: Vec<Result<Traj>> = jobs
        .par_iter()
        .map(|&(delta, s)| {
            let h = FullSpaceHamiltonian::new(&params.with_delta(wrap_phase(delta)))?;
            let rho0 = DensityMatrix::from_basis_state(s);
            let mut occ = Vec::with_capacity(times.len());
            let mut ent = Vec::with_capacity(times.len());
            let mut sw = Vec::with_capacity(times.len());
            let mut dw = Vec::with_capacity(times.len());
            let mut fail = None;
            let stats = evolve_lindblad_observe(&rho0, &h, &noise, times, opts, |_, _, rho| {
                let diag: Vec<f64> = rho.diagonal().into_iter().map(|x| x.max(0.0)).collect();
                occ.push(rho.occupancy());
                match post_select(&diag, &sector) {
                    Ok(ps) => {
                        ent.push(qs.iter().map(|&q| entropy_unchecked(&ps.probs, q)).collect());
                        sw.push(ps.sector_weight);
                        dw.push(ps.discarded_weight);
                    }
                    Err(e) => fail = Some(e),
                }
            })?;
            if let Some(e) = fail {
                return Err(e);
            }
            Ok((occ, ent, sw, dw, stats))
        })
        .collect();
    let runs: Vec<Traj> = runs.into_iter().collect::<Result<_>>()?;
    let series = |label: String, f: &dyn Fn(&Traj) -> Vec<f64>| TimeSeries {
        label,
        times: times.to_vec(),
        values: runs.iter().map(f).collect(),
    };
    Ok(LindbladSeries {
        occupancy: (0..params.l)
            .map(|j| series(format!("P_{}", j + 1), &|r: &Traj| r.0.iter().map(|o| o[j]).collect()))
            .collect(),
        entropy: qs
            .iter()
            .enumerate()
            .map(|(k, q)| series(format!("S_{q}"), &|r: &Traj| r.1.iter().map(|o| o[k]).collect()))
            .collect(),
        sector_weight: series("sector_weight".into(), &|r: &Traj| r.2.clone()),
        discarded_weight: series("discarded_weight".into(), &|r: &Traj| r.3.clone()),
        stats: runs.iter().map(|r| r.4.clone()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_qubit_decay_rates() {
        let t1 = 100.0;
        let t2 = 40.0;
        let noise = NoiseModel::uniform(1, t1, t2);
        let h = FullSpaceHamiltonian::zero(1);
        let mut rho = DensityMatrix::zeros(1);
        rho.data[3] = C64::new(1.0, 0.0);
        let d = lindblad_rhs(&rho, &h, &noise).unwrap();
        assert!((d.data[3].re + 1.0 / t1).abs() < 1e-15);
        assert!((d.data[0].re - 1.0 / t1).abs() < 1e-15);
        let mut rho = DensityMatrix::zeros(1);
        rho.data[1] = C64::new(0.5, 0.0);
        let d = lindblad_rhs(&rho, &h, &noise).unwrap();
        // Coherence decays at 1/(2T1) + 1/T2 for these operators.
        assert!((d.data[1].re + 0.5 * (0.5 / t1 + 1.0 / t2)).abs() < 1e-15);
    }

    #[test]
    fn post_select_counts() {
        let s = enumerate_sector(10, 5).unwrap();
        let u = vec![1.0 / 1024.0; 1024];
        let p = post_select(&u, &s).unwrap();
        assert!((p.discarded_weight - (1.0 - 252.0 / 1024.0)).abs() < 1e-12);
        assert!(p.probs.iter().all(|&x| (x - 1.0 / 252.0).abs() < 1e-15));
        let mut inside = vec![0.0; 1024];
        inside[0b11111] = 1.0;
        let p = post_select(&inside, &s).unwrap();
        assert_eq!(p.discarded_weight, 0.0);
        assert!(post_select(&vec![0.0; 1024], &s).is_err());
    }

    #[test]
    fn noise_broadcast() {
        let n = NoiseModel { t1: vec![10.0], t2: vec![1.0, 2.0, 3.0] }.for_sites(3).unwrap();
        assert_eq!(n.t1, vec![10.0; 3]);
        assert!(NoiseModel { t1: vec![1.0, 2.0], t2: vec![1.0] }.for_sites(3).is_err());
        assert!(NoiseModel { t1: vec![-1.0], t2: vec![1.0] }.for_sites(3).is_err());
    }
}
