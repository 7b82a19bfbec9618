//! Brute-force Kronecker-product oracles shared by the integration tests.
#![allow(dead_code)]

use gaah::model::ModelParams;
use gaah::C64;

pub type CMat = Vec<Vec<C64>>;

pub fn zeros(n: usize) -> CMat {
    vec![vec![C64::new(0.0, 0.0); n]; n]
}

pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    let n = a.len();
    let mut c = zeros(n);
    for i in 0..n {
        for k in 0..n {
            let x = a[i][k];
            if x != C64::new(0.0, 0.0) {
                for j in 0..n {
                    c[i][j] += x * b[k][j];
                }
            }
        }
    }
    c
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (n, m) = (a.len(), b.len());
    let mut c = zeros(n * m);
    for i in 0..n {
        for j in 0..n {
            for k in 0..m {
                for l in 0..m {
                    c[i * m + k][j * m + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    c
}

pub fn real(m: [[f64; 2]; 2]) -> CMat {
    m.iter().map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect()).collect()
}

/// Operator `op` on site `site` (1-based) of an L-site chain; site k is bit k−1,
/// so the most significant Kronecker factor is site L.
pub fn embed(op: &CMat, site: usize, l: usize) -> CMat {
    let id = real([[1.0, 0.0], [0.0, 1.0]]);
    let mut out: CMat = vec![vec![C64::new(1.0, 0.0)]];
    for k in (1..=l).rev() {
        out = kron(&out, if k == site { op } else { &id });
    }
    out
}

/// H = Σ J_j (a_j† a_{j+1} + h.c.) + Σ h_j n_j from Kronecker products.
pub fn kron_hamiltonian(p: &ModelParams) -> CMat {
    let l = p.l;
    let lower = real([[0.0, 1.0], [0.0, 0.0]]); // a: |1> -> |0>
    let raise = real([[0.0, 0.0], [1.0, 0.0]]);
    let num = real([[0.0, 0.0], [0.0, 1.0]]);
    let j = gaah::model::coupling_profile(p);
    let h = gaah::model::onsite_profile(p);
    let d = 1 << l;
    let mut out = zeros(d);
    let mut add = |m: CMat, c: f64| {
        for r in 0..d {
            for s in 0..d {
                out[r][s] += m[r][s] * c;
            }
        }
    };
    for site in 1..=l {
        add(embed(&num, site, l), h[site - 1]);
    }
    for site in 1..l {
        let hop = matmul(&embed(&raise, site, l), &embed(&lower, site + 1, l));
        let back = matmul(&embed(&raise, site + 1, l), &embed(&lower, site, l));
        add(hop, j[site - 1]);
        add(back, j[site - 1]);
    }
    out
}

/// exp(−iHt) by scaling and squaring of a Taylor series.
pub fn expm_minus_i(h: &CMat, t: f64) -> CMat {
    let n = h.len();
    let norm: f64 = h.iter().map(|r| r.iter().map(|x| x.norm()).sum::<f64>()).fold(0.0, f64::max) * t;
    let s = (norm.max(1.0).log2().ceil() as i32 + 4).max(0);
    let scale = t / 2f64.powi(s);
    let a: CMat = h.iter().map(|r| r.iter().map(|x| x * C64::new(0.0, -scale)).collect()).collect();
    let mut out = zeros(n);
    let mut term = zeros(n);
    for i in 0..n {
        out[i][i] = C64::new(1.0, 0.0);
        term[i][i] = C64::new(1.0, 0.0);
    }
    for k in 1..30 {
        term = matmul(&term, &a);
        for r in term.iter_mut() {
            for x in r.iter_mut() {
                *x /= k as f64;
            }
        }
        for i in 0..n {
            for j in 0..n {
                out[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..s {
        out = matmul(&out, &out);
    }
    out
}

