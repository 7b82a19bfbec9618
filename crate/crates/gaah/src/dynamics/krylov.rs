//! Lanczos propagation of exp(−iHτ)ψ with a posteriori error control.

use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::model::SectorHamiltonian;
use crate::C64;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KrylovOptions {
    /// Local error budget per step (2-norm, unit-norm state).
    pub tol: f64,
    /// Krylov dimension at which error checks begin.
    pub dim_start: usize,
    /// Largest Krylov dimension before the step is shortened.
    pub dim_max: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self { tol: 1e-10, dim_start: 20, dim_max: 60 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, serde::Serialize)]
pub struct KrylovStats {
    pub steps: usize,
    pub max_dim: usize,
    pub shortened: usize,
    /// Initial step cap derived from the Gershgorin bound (ns).
    pub tau_cap: f64,
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// exp(−iTτ)e₁ for the leading m×m block of the Lanczos tridiagonal.
fn small_exp(alpha: &[f64], beta: &[f64], m: usize, tau: f64) -> Result<Vec<C64>> {
    let t = Mat::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let evd = t.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Krylov(format!("projected eigensolve: {e:?}")))?;
    let q = evd.U();
    let s = evd.S();
    let mut y = vec![C64::new(0.0, 0.0); m];
    for k in 0..m {
        let w = C64::from_polar(q[(0, k)], -s[k] * tau);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += w * q[(i, k)];
        }
    }
    Ok(y)
}

pub struct KrylovPropagator<'a> {
    h: &'a SectorHamiltonian,
    opts: KrylovOptions,
    tau: f64,
    rho: f64,
    pub stats: KrylovStats,
    basis: Vec<Vec<C64>>,
}

impl<'a> KrylovPropagator<'a> {
    pub fn new(h: &'a SectorHamiltonian, opts: KrylovOptions) -> Self {
        let rho = h.gershgorin_bound().max(f64::MIN_POSITIVE);
        let tau = opts.dim_start as f64 / rho;
        Self { h, opts, tau, rho, stats: KrylovStats { tau_cap: tau, ..Default::default() }, basis: Vec::new() }
    }

    /// Advance `psi` by `dt` in place.
    pub fn advance(&mut self, psi: &mut [C64], dt: f64) -> Result<()> {
        let mut left = dt;
        while left > 0.0 {
            let want = self.tau.min(left);
            let (used, m) = self.step(psi, want)?;
            self.stats.steps += 1;
            self.stats.max_dim = self.stats.max_dim.max(m);
            if used < want {
                self.stats.shortened += 1;
                self.tau = used;
            } else if m <= self.opts.dim_max / 2 && want == self.tau {
                self.tau *= 1.5;
            }
            left = if used >= left { 0.0 } else { left - used };
        }
        Ok(())
    }

    /// One Lanczos step of length at most `tau`; returns (length, dimension).
    fn step(&mut self, psi: &mut [C64], tau: f64) -> Result<(f64, usize)> {
        let n = psi.len();
        let beta0 = norm(psi);
        if beta0 == 0.0 {
            return Ok((tau, 0));
        }
        let mmax = self.opts.dim_max.min(n).max(1);
        self.basis.resize_with(mmax + 1, Vec::new);
        for v in &mut self.basis {
            v.resize(n, C64::new(0.0, 0.0));
        }
        for (b, &p) in self.basis[0].iter_mut().zip(psi.iter()) {
            *b = p / beta0;
        }
        let mut alpha = Vec::with_capacity(mmax);
        let mut beta = Vec::with_capacity(mmax);
        let mut w = vec![C64::new(0.0, 0.0); n];
        let breakdown = 1e-13 * self.rho;
        let mut accepted: Option<(f64, usize, Vec<C64>)> = None;
        for j in 0..mmax {
            self.h.apply(&self.basis[j], &mut w);
            let a = dot(&self.basis[j], &w).re;
            for (wi, vi) in w.iter_mut().zip(&self.basis[j]) {
                *wi -= vi * a;
            }
            if j > 0 {
                let b = beta[j - 1];
                for (wi, vi) in w.iter_mut().zip(&self.basis[j - 1]) {
                    *wi -= vi * b;
                }
            }
            // Full reorthogonalisation keeps the small projected problem honest.
            for i in 0..=j {
                let c = dot(&self.basis[i], &w);
                for (wi, vi) in w.iter_mut().zip(&self.basis[i]) {
                    *wi -= vi * c;
                }
            }
            alpha.push(a);
            let b = norm(&w);
            let m = j + 1;
            let happy = b <= breakdown || m == n;
            if happy || m >= self.opts.dim_start.min(mmax) {
                let y = small_exp(&alpha, &beta, m, tau)?;
                let err = if happy { 0.0 } else { b * y[m - 1].norm() * beta0 };
                if err <= self.opts.tol {
                    accepted = Some((tau, m, y));
                    break;
                }
                if m == mmax {
                    let mut t = tau;
                    for _ in 0..60 {
                        t *= 0.5;
                        let y = small_exp(&alpha, &beta, m, t)?;
                        if b * y[m - 1].norm() * beta0 <= self.opts.tol {
                            accepted = Some((t, m, y));
                            break;
                        }
                    }
                    if accepted.is_none() {
                        return Err(Error::Krylov(format!(
                            "no acceptable step: dimension {m}, residual beta {b:.3e}, last trial tau {t:.3e} ns"
                        )));
                    }
                    break;
                }
            }
            if happy {
                break;
            }
            beta.push(b);
            for (vi, wi) in self.basis[j + 1].iter_mut().zip(&w) {
                *vi = wi / b;
            }
        }
        let (used, m, y) = accepted.ok_or_else(|| Error::Krylov("Lanczos loop ended without a step".into()))?;
        psi.iter_mut().for_each(|p| *p = C64::new(0.0, 0.0));
        for (k, &yk) in y.iter().enumerate() {
            let c = yk * beta0;
            for (p, v) in psi.iter_mut().zip(&self.basis[k]) {
                *p += v * c;
            }
        }
        Ok((used, m))
    }
}
