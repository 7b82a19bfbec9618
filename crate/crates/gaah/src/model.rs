//! Quasi-periodic profiles and Hamiltonians of the GAAH chain.

use std::f64::consts::PI;
use std::sync::Arc;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::basis::{SectorBasis, MAX_SITES};
use crate::error::{param, Error, Result};
use crate::C64;

/// λ/2π = 4 MHz, expressed in rad/ns.
pub const DEFAULT_LAMBDA: f64 = 2.0 * PI * 0.004;

/// Nearest double to (√5 − 1)/2.
pub fn golden_alpha() -> f64 {
    (5f64.sqrt() - 1.0) / 2.0
}

/// Map any angle into [−π, π).
pub fn wrap_phase(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y >= PI { -PI } else { y }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    #[serde(rename = "L")]
    pub l: usize,
    pub lambda: f64,
    pub mu: f64,
    #[serde(rename = "V")]
    pub v: f64,
    pub alpha: f64,
    pub delta: f64,
}

impl ModelParams {
    pub fn new(l: usize, mu: f64, v: f64, delta: f64) -> Self {
        Self { l, lambda: DEFAULT_LAMBDA, mu, v, alpha: golden_alpha(), delta }
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        Self { delta, ..self.clone() }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self { lambda, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l < 1 {
            return Err(param("L", "must be at least 1"));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(param("lambda", format!("must be positive and finite, got {}", self.lambda)));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(param("mu", format!("must be non-negative, got {}", self.mu)));
        }
        if !(self.v >= 0.0 && self.v.is_finite()) {
            return Err(param("V", format!("must be non-negative, got {}", self.v)));
        }
        if !self.alpha.is_finite() {
            return Err(param("alpha", "must be finite"));
        }
        if !(self.delta >= -PI && self.delta < PI) {
            return Err(param("delta", format!("must lie in [-pi, pi), got {}", self.delta)));
        }
        Ok(())
    }
}

/// J[j-1] = λ(1 + μ cos(2π(j + ½)α + δ)) for j = 1..L-1.
pub fn coupling_profile(p: &ModelParams) -> Vec<f64> {
    (1..p.l)
        .map(|j| p.lambda * (1.0 + p.mu * (2.0 * PI * (j as f64 + 0.5) * p.alpha + p.delta).cos()))
        .collect()
}

/// h[j-1] = λV cos(2πjα + δ) for j = 1..L.
pub fn onsite_profile(p: &ModelParams) -> Vec<f64> {
    (1..=p.l).map(|j| p.lambda * p.v * (2.0 * PI * j as f64 * p.alpha + p.delta).cos()).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainProfile {
    pub j: Vec<f64>,
    pub h: Vec<f64>,
}

impl ChainProfile {
    pub fn new(p: &ModelParams) -> Self {
        Self { j: coupling_profile(p), h: onsite_profile(p) }
    }

    /// Rows `(site, J_site, h_site)`; the last site has no outgoing coupling.
    pub fn csv_rows(&self) -> Vec<(usize, Option<f64>, f64)> {
        self.h.iter().enumerate().map(|(i, &h)| (i + 1, self.j.get(i).copied(), h)).collect()
    }
}

/// Real symmetric tridiagonal matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(Error::Domain(format!(
                "tridiagonal shape mismatch: {} diagonal, {} off-diagonal entries",
                diag.len(),
                off.len()
            )));
        }
        Ok(Self { diag, off })
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let n = self.n();
        Mat::from_fn(n, n, |i, j| {
            if i == j {
                self.diag[i]
            } else if i + 1 == j {
                self.off[i]
            } else if j + 1 == i {
                self.off[j]
            } else {
                0.0
            }
        })
    }
}

pub fn build_single_particle(p: &ModelParams) -> Tridiagonal {
    Tridiagonal { diag: onsite_profile(p), off: coupling_profile(p) }
}

/// Hamiltonian restricted to one excitation sector, stored as real CSR.
#[derive(Clone, Debug)]
pub struct SectorHamiltonian {
    basis: Arc<SectorBasis>,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    profile: ChainProfile,
    single_particle: Option<Tridiagonal>,
}

pub fn build_sector_hamiltonian(p: &ModelParams, basis: Arc<SectorBasis>) -> Result<SectorHamiltonian> {
    p.validate()?;
    if basis.l() != p.l {
        return Err(Error::Domain(format!("basis has L = {}, parameters have L = {}", basis.l(), p.l)));
    }
    let profile = ChainProfile::new(p);
    let l = p.l;
    let n = basis.len();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(n * l.min(basis.m() * 2 + 1));
    let mut vals = Vec::with_capacity(cols.capacity());
    let mut row: Vec<(u32, f64)> = Vec::with_capacity(l + 1);
    row_ptr.push(0);
    for &s in basis.states() {
        row.clear();
        let mut e = 0.0;
        for j in 0..l {
            if s >> j & 1 == 1 {
                e += profile.h[j];
            }
        }
        row.push((basis.rank_bits(s) as u32, e));
        for j in 0..l.saturating_sub(1) {
            if (s >> j ^ s >> (j + 1)) & 1 == 1 {
                let t = s ^ (0b11 << j);
                row.push((basis.rank_bits(t) as u32, profile.j[j]));
            }
        }
        row.sort_unstable_by_key(|&(c, _)| c);
        for &(c, v) in &row {
            cols.push(c);
            vals.push(v);
        }
        row_ptr.push(cols.len());
    }
    let single_particle = Some(build_single_particle(p));
    Ok(SectorHamiltonian { basis, row_ptr, cols, vals, profile, single_particle })
}

impl SectorHamiltonian {
    pub fn basis(&self) -> &Arc<SectorBasis> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn profile(&self) -> &ChainProfile {
        &self.profile
    }

    pub fn single_particle(&self) -> Option<&Tridiagonal> {
        self.single_particle.as_ref()
    }

    /// Row `a` as (column, value) pairs in ascending column order.
    pub fn row(&self, a: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[a]..self.row_ptr[a + 1];
        self.cols[r.clone()].iter().zip(&self.vals[r]).map(|(&c, &v)| (c as usize, v))
    }

    pub fn entry(&self, a: usize, b: usize) -> f64 {
        self.row(a).find(|&(c, _)| c == b).map_or(0.0, |(_, v)| v)
    }

    /// y = H x
    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.dim());
        for (a, ya) in y.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.row_ptr[a]..self.row_ptr[a + 1] {
                acc += x[self.cols[k] as usize] * self.vals[k];
            }
            *ya = acc;
        }
    }

    pub fn apply_real(&self, x: &[f64], y: &mut [f64]) {
        for (a, ya) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[a]..self.row_ptr[a + 1] {
                acc += x[self.cols[k] as usize] * self.vals[k];
            }
            *ya = acc;
        }
    }

    pub fn expectation(&self, x: &[C64]) -> f64 {
        let mut hx = vec![C64::new(0.0, 0.0); x.len()];
        self.apply(x, &mut hx);
        x.iter().zip(&hx).map(|(a, b)| (a.conj() * b).re).sum()
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let n = self.dim();
        let mut m = Mat::zeros(n, n);
        for a in 0..n {
            for (b, v) in self.row(a) {
                m[(a, b)] = v;
            }
        }
        m
    }

    /// Row-sum (Gershgorin) bound on the spectral radius.
    pub fn gershgorin_bound(&self) -> f64 {
        (0..self.dim()).map(|a| self.row(a).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }
}

/// The chain Hamiltonian acting on the full 2^L space.
#[derive(Clone, Debug)]
pub struct FullSpaceHamiltonian {
    l: usize,
    profile: ChainProfile,
    diag: Vec<f64>,
}

impl FullSpaceHamiltonian {
    pub fn new(p: &ModelParams) -> Result<Self> {
        p.validate()?;
        if p.l > 14 {
            return Err(param("L", format!("full-space operator supports L <= 14, got {}", p.l)));
        }
        Ok(Self::from_profile(ChainProfile::new(p)))
    }

    pub fn from_profile(profile: ChainProfile) -> Self {
        let l = profile.h.len();
        assert!(l <= MAX_SITES && profile.j.len() + 1 == l);
        let diag = (0..1usize << l)
            .map(|s| (0..l).filter(|&j| s >> j & 1 == 1).map(|j| profile.h[j]).sum())
            .collect();
        Self { l, profile, diag }
    }

    /// The zero operator on `l` sites.
    pub fn zero(l: usize) -> Self {
        Self::from_profile(ChainProfile { j: vec![0.0; l.saturating_sub(1)], h: vec![0.0; l] })
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn dim(&self) -> usize {
        1 << self.l
    }

    pub fn profile(&self) -> &ChainProfile {
        &self.profile
    }

    /// Diagonal energy of basis state `s`.
    #[inline]
    pub fn diag(&self, s: usize) -> f64 {
        self.diag[s]
    }

    /// Call `f(t, J)` for every state `t` reachable from `s` by one hop.
    #[inline]
    pub fn for_each_hop(&self, s: usize, mut f: impl FnMut(usize, f64)) {
        for j in 0..self.l.saturating_sub(1) {
            if (s >> j ^ s >> (j + 1)) & 1 == 1 {
                f(s ^ (0b11 << j), self.profile.j[j]);
            }
        }
    }

    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        for (s, ys) in y.iter_mut().enumerate() {
            let mut acc = x[s] * self.diag[s];
            self.for_each_hop(s, |t, v| acc += x[t] * v);
            *ys = acc;
        }
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let n = self.dim();
        let mut m = Mat::zeros(n, n);
        for s in 0..n {
            m[(s, s)] = self.diag[s];
            self.for_each_hop(s, |t, v| m[(s, t)] = v);
        }
        m
    }
}
