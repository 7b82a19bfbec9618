//! Closed-system quenches: propagation, occupancies and participation
//! entropies.

pub mod krylov;

use std::sync::Arc;

use faer::Mat;
use rand_chacha::rand_core::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{enumerate_sector, FockState, SectorBasis};
use crate::error::{param, Error, Result};
use crate::model::{build_sector_hamiltonian, ModelParams, SectorHamiltonian};
use crate::seeding;
use crate::spectral::{eigendecompose, mean_stderr, EigenSystem, DEFAULT_DENSE_THRESHOLD};
use crate::C64;

pub use krylov::{KrylovOptions, KrylovPropagator, KrylovStats};

/// Normalised amplitudes over a sector, indexed by basis rank.
#[derive(Clone, Debug)]
pub struct PureState {
    basis: Arc<SectorBasis>,
    pub amps: Vec<C64>,
}

impl PureState {
    pub fn basis_state(basis: Arc<SectorBasis>, s: FockState) -> Result<Self> {
        let k = basis.rank(s)?;
        let mut amps = vec![C64::new(0.0, 0.0); basis.len()];
        amps[k] = C64::new(1.0, 0.0);
        Ok(Self { basis, amps })
    }

    pub fn from_amps(basis: Arc<SectorBasis>, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != basis.len() {
            return Err(Error::Domain(format!("{} amplitudes for a sector of size {}", amps.len(), basis.len())));
        }
        let s = Self { basis, amps };
        if (s.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("state is not normalised (norm = {})", s.norm())));
        }
        Ok(s)
    }

    pub fn basis(&self) -> &Arc<SectorBasis> {
        &self.basis
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveOptions {
    /// Sectors up to this dimension are propagated by full diagonalisation.
    pub dense_threshold: usize,
    pub krylov: KrylovOptions,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { dense_threshold: DEFAULT_DENSE_THRESHOLD, krylov: KrylovOptions::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dense,
    Krylov,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvolveStats {
    pub method: Method,
    pub krylov: Option<KrylovStats>,
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(param("times", "must be finite and non-negative"));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(param("times", "must be sorted"));
    }
    Ok(())
}

/// exp(−iHt) through a full eigendecomposition, reusable across initial states.
pub struct DensePropagator {
    eig: EigenSystem<f64>,
}

impl DensePropagator {
    pub fn new(h: &SectorHamiltonian, dense_threshold: usize) -> Result<Self> {
        Ok(Self { eig: eigendecompose(h.to_dense().as_ref(), dense_threshold)? })
    }

    pub fn eigensystem(&self) -> &EigenSystem<f64> {
        &self.eig
    }

    /// Amplitude vectors at each time, as columns of (real, imaginary) parts.
    fn columns(&self, psi0: &[C64], times: &[f64]) -> (Mat<f64>, Mat<f64>) {
        let u = &self.eig.vectors;
        let n = u.nrows();
        let c: Vec<C64> = (0..n).map(|k| (0..n).map(|i| psi0[i] * u[(i, k)]).sum()).collect();
        let ph = |k: usize, t: usize| c[k] * C64::from_polar(1.0, -self.eig.values[k] * times[t]);
        let mre = Mat::from_fn(n, times.len(), |k, t| ph(k, t).re);
        let mim = Mat::from_fn(n, times.len(), |k, t| ph(k, t).im);
        (u * &mre, u * &mim)
    }

    pub fn propagate(&self, psi0: &[C64], times: &[f64]) -> Vec<Vec<C64>> {
        let (re, im) = self.columns(psi0, times);
        (0..times.len()).map(|t| (0..re.nrows()).map(|i| C64::new(re[(i, t)], im[(i, t)])).collect()).collect()
    }

    pub fn probabilities(&self, psi0: &[C64], times: &[f64]) -> Vec<Vec<f64>> {
        let (re, im) = self.columns(psi0, times);
        (0..times.len())
            .map(|t| (0..re.nrows()).map(|i| re[(i, t)] * re[(i, t)] + im[(i, t)] * im[(i, t)]).collect())
            .collect()
    }
}

fn krylov_propagate(
    h: &SectorHamiltonian,
    psi0: &[C64],
    times: &[f64],
    opts: &KrylovOptions,
) -> Result<(Vec<Vec<C64>>, KrylovStats)> {
    let mut prop = KrylovPropagator::new(h, opts.clone());
    let mut psi = psi0.to_vec();
    let mut now = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        prop.advance(&mut psi, t - now)?;
        now = t;
        out.push(psi.clone());
    }
    Ok((out, prop.stats))
}

/// ψ(t) = exp(−iHt)ψ₀ at each requested time.
pub fn evolve(h: &SectorHamiltonian, psi0: &PureState, times: &[f64]) -> Result<Vec<PureState>> {
    evolve_with(h, psi0, times, &EvolveOptions::default()).map(|(s, _)| s)
}

pub fn evolve_with(
    h: &SectorHamiltonian,
    psi0: &PureState,
    times: &[f64],
    opts: &EvolveOptions,
) -> Result<(Vec<PureState>, EvolveStats)> {
    check_times(times)?;
    if psi0.basis.len() != h.dim() || psi0.basis.l() != h.basis().l() || psi0.basis.m() != h.basis().m() {
        return Err(Error::Domain("initial state and Hamiltonian live in different sectors".into()));
    }
    if (psi0.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("initial state is not normalised (norm = {})", psi0.norm())));
    }
    let wrap = |amps: Vec<Vec<C64>>| {
        amps.into_iter().map(|a| PureState { basis: psi0.basis.clone(), amps: a }).collect::<Vec<_>>()
    };
    if h.dim() <= opts.dense_threshold {
        let prop = DensePropagator::new(h, opts.dense_threshold)?;
        let mut states = prop.propagate(&psi0.amps, times);
        for (s, &t) in states.iter_mut().zip(times) {
            if t == 0.0 {
                s.clone_from(&psi0.amps);
            }
        }
        Ok((wrap(states), EvolveStats { method: Method::Dense, krylov: None }))
    } else {
        let (states, stats) = krylov_propagate(h, &psi0.amps, times, &opts.krylov)?;
        Ok((wrap(states), EvolveStats { method: Method::Krylov, krylov: Some(stats) }))
    }
}

/// P_j = Σ_{s : bit j set} |ψ_s|², j = 1..L.
pub fn occupancy(psi: &PureState) -> Vec<f64> {
    occupancy_from_probs(&psi.basis, &psi.probabilities())
}

pub fn occupancy_from_probs(basis: &SectorBasis, probs: &[f64]) -> Vec<f64> {
    let mut occ = vec![0.0; basis.l()];
    for (&s, &p) in basis.states().iter().zip(probs) {
        let mut b = s;
        while b != 0 {
            occ[b.trailing_zeros() as usize] += p;
            b &= b - 1;
        }
    }
    occ
}

/// Rényi participation entropy of order q ≥ 1 (Shannon at q = 1), natural log.
pub fn participation_entropy(p: &[f64], q: f64) -> Result<f64> {
    if !(q >= 1.0) || !q.is_finite() {
        return Err(param("q", format!("order must be finite and at least 1, got {q}")));
    }
    if p.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::Domain("probabilities must be non-negative".into()));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(Error::Domain(format!("probabilities sum to {total}, not 1")));
    }
    Ok(entropy_unchecked(p, q))
}

pub(crate) fn entropy_unchecked(p: &[f64], q: f64) -> f64 {
    let s = if q == 1.0 {
        -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
    } else if q == 2.0 {
        -p.iter().map(|&x| x * x).sum::<f64>().ln()
    } else {
        p.iter().filter(|&&x| x > 0.0).map(|&x| x.powf(q)).sum::<f64>().ln() / (1.0 - q)
    };
    s.max(0.0)
}

/// |10⟩^{⊗(M+1−i)} ⊗ |01⟩^{⊗(i−1)} for i = 1..M, followed by their spin-flipped partners.
pub fn default_initial_states(l: usize, m: usize) -> Result<Vec<FockState>> {
    if l != 2 * m || l == 0 {
        return Err(param("L", format!("default initial states need L = 2M, got L = {l}, M = {m}")));
    }
    let mut out = Vec::with_capacity(2 * m);
    for i in 1..=m {
        let s: String = "10".repeat(m + 1 - i) + &"01".repeat(i - 1);
        out.push(crate::basis::state_from_string(&s)?);
    }
    let flipped: Vec<FockState> = out.iter().map(FockState::flipped).collect();
    out.extend(flipped);
    Ok(out)
}

/// Multinomial resampling of a distribution with `shots` draws.
pub fn resample_shots<R: Rng + ?Sized>(p: &[f64], shots: usize, rng: &mut R) -> Vec<f64> {
    let mut cdf = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    for &x in p {
        acc += x;
        cdf.push(acc);
    }
    let mut counts = vec![0usize; p.len()];
    for _ in 0..shots {
        let u = seeding::uniform01(rng) * acc;
        let k = cdf.partition_point(|&c| c <= u).min(p.len() - 1);
        counts[k] += 1;
    }
    counts.into_iter().map(|c| c as f64 / shots as f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotNoise {
    pub shots: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuenchOptions {
    pub evolve: EvolveOptions,
    pub shot_noise: Option<ShotNoise>,
}

/// A scalar observable per trajectory and time.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    pub label: String,
    pub times: Vec<f64>,
    /// `values[traj][t]`
    pub values: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn n_traj(&self) -> usize {
        self.values.len()
    }

    pub fn mean(&self) -> Vec<f64> {
        self.stats().into_iter().map(|x| x.0).collect()
    }

    pub fn stderr(&self) -> Vec<f64> {
        self.stats().into_iter().map(|x| x.1).collect()
    }

    /// Pointwise (mean, stderr) across trajectories.
    pub fn stats(&self) -> Vec<(f64, f64)> {
        (0..self.times.len())
            .map(|t| mean_stderr(&self.values.iter().map(|v| v[t]).collect::<Vec<_>>()))
            .collect()
    }
}

/// Per-trajectory observables: `obs[traj][t][k]`, trajectories ordered
/// δ-major then initial state.
pub(crate) fn run_quench<F>(
    params: &ModelParams,
    initial_states: &[FockState],
    deltas: &[f64],
    times: &[f64],
    opts: &QuenchOptions,
    observe: F,
) -> Result<Vec<Vec<Vec<f64>>>>
where
    F: Fn(&SectorBasis, &[f64]) -> Vec<f64> + Sync,
{
    check_times(times)?;
    if initial_states.is_empty() {
        return Err(param("initial_states", "at least one initial state is required"));
    }
    if deltas.is_empty() {
        return Err(param("n_delta", "at least one phase offset is required"));
    }
    let m = initial_states[0].popcount();
    if initial_states.iter().any(|s| s.popcount() != m || s.len != params.l) {
        return Err(Error::Domain("initial states must share one sector of the chain".into()));
    }
    params.validate()?;
    let basis = Arc::new(enumerate_sector(params.l, m)?);
    let n_init = initial_states.len();
    let per_delta: Vec<Result<Vec<Vec<Vec<f64>>>>> = deltas
        .par_iter()
        .enumerate()
        .map(|(di, &delta)| {
            let h = build_sector_hamiltonian(&params.with_delta(crate::model::wrap_phase(delta)), basis.clone())?;
            let dense = if h.dim() <= opts.evolve.dense_threshold {
                Some(DensePropagator::new(&h, opts.evolve.dense_threshold)?)
            } else {
                None
            };
            let mut out = Vec::with_capacity(n_init);
            for (si, s) in initial_states.iter().enumerate() {
                let psi0 = PureState::basis_state(basis.clone(), *s)?;
                let mut probs: Vec<Vec<f64>> = match &dense {
                    Some(p) => p.probabilities(&psi0.amps, times),
                    None => krylov_propagate(&h, &psi0.amps, times, &opts.evolve.krylov)?
                        .0
                        .into_iter()
                        .map(|a| a.iter().map(|x| x.norm_sqr()).collect())
                        .collect(),
                };
                for (p, &t) in probs.iter_mut().zip(times) {
                    if t == 0.0 {
                        p.iter_mut().for_each(|x| *x = 0.0);
                        p[basis.rank_bits(s.bits)] = 1.0;
                    }
                }
                if let Some(noise) = &opts.shot_noise {
                    let mut rng = seeding::stream(noise.seed, (di * n_init + si) as u64, u64::MAX);
                    for p in probs.iter_mut() {
                        *p = resample_shots(p, noise.shots, &mut rng);
                    }
                }
                out.push(probs.iter().map(|p| observe(&basis, p)).collect());
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::with_capacity(deltas.len() * n_init);
    for r in per_delta {
        all.extend(r?);
    }
    Ok(all)
}

/// Participation entropies S_q for every (δ, initial state) trajectory.
pub fn quench_pe_series(
    params: &ModelParams,
    initial_states: &[FockState],
    deltas: &[f64],
    times: &[f64],
    qs: &[f64],
    opts: &QuenchOptions,
) -> Result<Vec<TimeSeries>> {
    for &q in qs {
        participation_entropy(&[1.0], q)?;
    }
    let obs = run_quench(params, initial_states, deltas, times, opts, |_, p| {
        let total: f64 = p.iter().sum();
        let norm: Vec<f64> = p.iter().map(|x| x / total).collect();
        qs.iter().map(|&q| entropy_unchecked(&norm, q)).collect()
    })?;
    Ok(qs
        .iter()
        .enumerate()
        .map(|(k, &q)| TimeSeries {
            label: format!("S_{q}"),
            times: times.to_vec(),
            values: obs.iter().map(|tr| tr.iter().map(|o| o[k]).collect()).collect(),
        })
        .collect())
}

/// Site occupancies P_j(t), one series per site (label `P_j`).
pub fn quench_occupancy(
    params: &ModelParams,
    initial_states: &[FockState],
    deltas: &[f64],
    times: &[f64],
    opts: &QuenchOptions,
) -> Result<Vec<TimeSeries>> {
    let obs = run_quench(params, initial_states, deltas, times, opts, occupancy_from_probs)?;
    Ok((0..params.l)
        .map(|j| TimeSeries {
            label: format!("P_{}", j + 1),
            times: times.to_vec(),
            values: obs.iter().map(|tr| tr.iter().map(|o| o[j]).collect()).collect(),
        })
        .collect())
}

/// Inclusive uniform time grid.
pub fn time_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || stop < start || start < 0.0 {
        return Err(param("time", format!("invalid grid start={start} stop={stop} step={step}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + step * i as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_states_match_listing() {
        let s: Vec<String> = default_initial_states(10, 5).unwrap().iter().map(|s| s.to_string()).collect();
        assert_eq!(
            s[..5],
            ["1010101010", "1010101001", "1010100101", "1010010101", "1001010101"].map(String::from)
        );
        assert_eq!(s[5], "0101010101");
        assert_eq!(s.len(), 10);
        assert!(default_initial_states(9, 4).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(participation_entropy(&[1.0, 0.0], 1.0).unwrap(), 0.0);
        assert_eq!(participation_entropy(&[1.0, 0.0], 2.0).unwrap(), 0.0);
        let u = vec![1.0 / 252.0; 252];
        for q in [1.0, 2.0, 3.0] {
            assert!((participation_entropy(&u, q).unwrap() - 252f64.ln()).abs() < 1e-12);
        }
        for q in [1.0, 2.0] {
            assert!((participation_entropy(&[0.5, 0.5, 0.0], q).unwrap() - 2f64.ln()).abs() < 1e-15);
        }
        assert!(participation_entropy(&[0.5, 0.6], 2.0).is_err());
        assert!(participation_entropy(&[1.0], 0.5).is_err());
    }

    #[test]
    fn grid_arithmetic() {
        let t = time_grid(350.0, 450.0, 2.0).unwrap();
        assert_eq!(t.len(), 51);
        assert_eq!(time_grid(0.0, 500.0, 2.0).unwrap().len(), 251);
    }

    #[test]
    fn shots_preserve_normalisation() {
        let mut rng = seeding::stream(1, 2, 3);
        let p = resample_shots(&[0.25, 0.25, 0.5], 5000, &mut rng);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((p[2] - 0.5).abs() < 0.05);
    }
}
