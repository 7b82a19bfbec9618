//! Dense eigenanalysis, IPR, phase classification and the single-particle
//! IPR phase map.

pub mod tridiag;

use faer::{Mat, MatRef, Side};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_single_particle, ModelParams};
use crate::seeding::phase_draw;
use crate::C64;

pub use tridiag::{tridiagonal_spectra, tridiagonal_spectrum, TridiagonalSpectrum, TwistWork};

pub const DEFAULT_DENSE_THRESHOLD: usize = 4096;

/// Ascending eigenvalues with orthonormal eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct EigenSystem<T> {
    pub values: Vec<f64>,
    pub vectors: Mat<T>,
}

fn check_size(n: usize, threshold: usize) -> Result<()> {
    if n > threshold {
        return Err(Error::TooLarge { dim: n, threshold });
    }
    Ok(())
}

pub fn eigendecompose(h: MatRef<'_, f64>, dense_threshold: usize) -> Result<EigenSystem<f64>> {
    let n = h.nrows();
    if h.ncols() != n {
        return Err(Error::Domain("matrix is not square".into()));
    }
    check_size(n, dense_threshold)?;
    let scale = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).fold(0.0f64, |m, (i, j)| m.max(h[(i, j)].abs()));
    for i in 0..n {
        for j in 0..i {
            if (h[(i, j)] - h[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::Domain(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    let evd = h.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))?;
    Ok(EigenSystem { values: (0..n).map(|i| evd.S()[i]).collect(), vectors: evd.U().to_owned() })
}

pub fn eigendecompose_hermitian(h: MatRef<'_, C64>, dense_threshold: usize) -> Result<EigenSystem<C64>> {
    let n = h.nrows();
    if h.ncols() != n {
        return Err(Error::Domain("matrix is not square".into()));
    }
    check_size(n, dense_threshold)?;
    let scale = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).fold(0.0f64, |m, (i, j)| m.max(h[(i, j)].norm()));
    for i in 0..n {
        for j in 0..=i {
            if (h[(i, j)] - h[(j, i)].conj()).norm() > 1e-12 * scale {
                return Err(Error::Domain(format!("matrix is not Hermitian at ({i}, {j})")));
            }
        }
    }
    let evd = h.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))?;
    Ok(EigenSystem { values: (0..n).map(|i| evd.S()[i].re).collect(), vectors: evd.U().to_owned() })
}

/// Anything with a squared modulus.
pub trait Amplitude: Copy {
    fn prob(self) -> f64;
}

impl Amplitude for f64 {
    fn prob(self) -> f64 {
        self * self
    }
}

impl Amplitude for C64 {
    fn prob(self) -> f64 {
        self.norm_sqr()
    }
}

/// Σ|ψ_i|⁴ of a normalised vector.
pub fn ipr<A: Amplitude>(psi: &[A]) -> Result<f64> {
    let (s2, s4) = psi.iter().fold((0.0, 0.0), |(a, b), &x| {
        let p = x.prob();
        (a + p, b + p * p)
    });
    if (s2 - 1.0).abs() > 1e-10 {
        return Err(Error::Domain(format!("vector is not normalised (norm² = {s2})")));
    }
    Ok(s4)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseLabel {
    Extended,
    Critical,
    Localized,
}

/// Boundaries of the GAAH phase diagram; equalities fall in `Critical`.
pub fn classify_phase(mu: f64, v: f64) -> PhaseLabel {
    if v < 2.0 && mu < 1.0 {
        PhaseLabel::Extended
    } else if v > 2.0 * mu.max(1.0) {
        PhaseLabel::Localized
    } else {
        PhaseLabel::Critical
    }
}

/// Per-draw statistic of the single-particle eigenstate IPRs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IprStatistic {
    /// Mean over eigenstates of −ln IPR.
    #[default]
    MeanNegLn,
    /// −ln of the eigenstate-averaged IPR.
    NegLnMean,
}

impl IprStatistic {
    pub fn reduce(self, iprs: &[f64]) -> f64 {
        let n = iprs.len() as f64;
        match self {
            IprStatistic::MeanNegLn => iprs.iter().map(|x| -x.ln()).sum::<f64>() / n,
            IprStatistic::NegLnMean => -(iprs.iter().sum::<f64>() / n).ln(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseMapPoint {
    pub mu: f64,
    pub v: f64,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseMap {
    pub l: usize,
    pub n_delta: usize,
    pub seed: u64,
    pub statistic: IprStatistic,
    pub points: Vec<PhaseMapPoint>,
}

/// Mean and standard error (sample std / √n) in index order.
pub(crate) fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn ipr_phase_map(grid: &[(f64, f64)], l: usize, n_delta: usize, seed: u64) -> Result<PhaseMap> {
    ipr_phase_map_with(grid, &ModelParams::new(l, 0.0, 0.0, 0.0), n_delta, seed, IprStatistic::MeanNegLn)
}

/// Phase map over `(μ, V)` points. λ, α and L come from `base`; δ is drawn
/// per (point, draw) from the seeded streams.
pub fn ipr_phase_map_with(
    grid: &[(f64, f64)],
    base: &ModelParams,
    n_delta: usize,
    seed: u64,
    statistic: IprStatistic,
) -> Result<PhaseMap> {
    let l = base.l;
    if l < 2 {
        return Err(crate::error::param("L", "phase map needs L >= 2"));
    }
    if n_delta < 1 {
        return Err(crate::error::param("n_delta", "must be at least 1"));
    }
    for &(mu, v) in grid {
        ModelParams { mu, v, ..base.clone() }.validate()?;
    }
    let total = grid.len() * n_delta;
    let per_draw: Vec<f64> = (0..total.div_ceil(tridiag::LANES))
        .into_par_iter()
        .map_init(TwistWork::default, |wk, c| {
            let idx = c * tridiag::LANES..((c + 1) * tridiag::LANES).min(total);
            let mats: Vec<_> = idx
                .clone()
                .map(|g| {
                    let (p, k) = (g / n_delta, g % n_delta);
                    let (mu, v) = grid[p];
                    let delta = phase_draw(seed, p as u64, k as u64);
                    build_single_particle(&ModelParams { mu, v, delta, ..base.clone() })
                })
                .collect();
            tridiagonal_spectra(&mats, wk).into_iter().map(|s| statistic.reduce(&s.iprs)).collect::<Vec<_>>()
        })
        .flatten_iter()
        .collect();
    let points = grid
        .iter()
        .enumerate()
        .map(|(p, &(mu, v))| {
            let (value, stderr) = mean_stderr(&per_draw[p * n_delta..(p + 1) * n_delta]);
            PhaseMapPoint { mu, v, value, stderr }
        })
        .collect();
    Ok(PhaseMap { l, n_delta, seed, statistic, points })
}

/// Inclusive linear grid of `n` values.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![start],
        _ => (0..n).map(|i| start + (stop - start) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_examples() {
        assert_eq!(classify_phase(0.5, 0.5), PhaseLabel::Extended);
        assert_eq!(classify_phase(2.0, 0.5), PhaseLabel::Critical);
        assert_eq!(classify_phase(0.5, 4.0), PhaseLabel::Localized);
        assert_eq!(classify_phase(1.0, 1.0), PhaseLabel::Critical);
        assert_eq!(classify_phase(0.5, 2.0), PhaseLabel::Critical);
        assert_eq!(classify_phase(1.5, 3.0), PhaseLabel::Critical);
    }

    #[test]
    fn ipr_examples() {
        assert_eq!(ipr(&[0.0, 1.0, 0.0]).unwrap(), 1.0);
        let u = vec![1.0 / 252f64.sqrt(); 252];
        assert!((ipr(&u).unwrap() - 1.0 / 252.0).abs() < 1e-15);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((ipr(&[h, h]).unwrap() - 0.5).abs() < 1e-15);
        assert!(ipr(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn too_large_is_reported() {
        let m = Mat::<f64>::identity(5, 5);
        assert!(matches!(eigendecompose(m.as_ref(), 4), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn statistic_orders() {
        let x = [0.5, 0.1];
        assert!((IprStatistic::MeanNegLn.reduce(&x) - (2f64.ln() + 10f64.ln()) / 2.0).abs() < 1e-15);
        assert!((IprStatistic::NegLnMean.reduce(&x) + 0.3f64.ln()).abs() < 1e-15);
    }
}
