//! Batched eigenvalues and eigenvector IPRs of real symmetric tridiagonal
//! matrices.
//!
//! Eigenvalues come from the root-free Pal-Walker-Kahan QL iteration run on
//! 32 matrices at once (one SIMD lane per matrix). Eigenvector IPRs use the
//! two-sided three-term recurrence: the forward solution `u` and backward
//! solution `w` of `(T - λ)x = 0` are glued at the index maximising
//! `|u_i w_i|`, which is where the twisted factorisation is best conditioned.
//! Neither pass needs a division inside its inner loop.

use faer::Side;
use wide::*;

use crate::model::Tridiagonal;

/// Matrices per lockstep batch.
pub const LANES: usize = 32;
const NV: usize = LANES / 8;
const BLK: usize = 16;

type Lanes = [f64x8; NV];

#[derive(Clone, Debug, PartialEq)]
pub struct TridiagonalSpectrum {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// IPR of the normalised eigenvector belonging to each eigenvalue.
    pub iprs: Vec<f64>,
}

#[inline(always)]
fn pow2(k: i32) -> f64 {
    if k < -1022 {
        0.0
    } else {
        f64::from_bits(((k.min(1023) + 1023) as u64) << 52)
    }
}

#[inline(always)]
fn load(a: &[f64; LANES], j: usize) -> f64x8 {
    f64x8::from(<[f64; 8]>::try_from(&a[8 * j..8 * j + 8]).unwrap())
}

#[inline(always)]
fn store(a: &mut [f64; LANES], j: usize, v: f64x8) {
    a[8 * j..8 * j + 8].copy_from_slice(&v.to_array());
}

#[inline(always)]
fn lane(v: &Lanes, k: usize) -> f64 {
    v[k / 8].to_array()[k % 8]
}

fn lanes_from(f: impl Fn(usize) -> f64) -> Lanes {
    std::array::from_fn(|j| f64x8::from(std::array::from_fn::<f64, 8, _>(|t| f(8 * j + t))))
}

fn max_abs(t: &Tridiagonal) -> f64 {
    t.diag.iter().chain(&t.off).fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Indices `i` where `off[i]` is negligible, splitting the matrix.
fn split_points(t: &Tridiagonal) -> Vec<usize> {
    let thr = f64::EPSILON * max_abs(t);
    t.off.iter().enumerate().filter(|(_, e)| e.abs() <= thr).map(|(i, _)| i).collect()
}

/// Root-free QL on up to `LANES` unreduced matrices of equal order `n ≥ 2`.
/// Returns ascending eigenvalues per matrix, or `None` for a lane that did
/// not converge.
fn lockstep_eigenvalues(mats: &[&Tridiagonal]) -> Vec<Option<Vec<f64>>> {
    let used = mats.len();
    assert!(used >= 1 && used <= LANES);
    let n = mats[0].n();
    assert!(n >= 2 && mats.iter().all(|m| m.n() == n));
    let mut d = vec![[0.0f64; LANES]; n];
    let mut e2 = vec![[0.0f64; LANES]; n];
    for k in 0..LANES {
        let m = mats[k.min(used - 1)];
        for i in 0..n {
            d[i][k] = m.diag[i];
        }
        for i in 0..n - 1 {
            e2[i][k] = m.off[i] * m.off[i];
        }
    }
    let eps2 = f64::EPSILON * f64::EPSILON;
    let max_sweeps = 30 * n;
    let mut l = [0usize; LANES];
    let mut m = [0usize; LANES];
    let mut done = [false; LANES];
    let mut failed = [false; LANES];
    let mut sweeps = [0usize; LANES];
    for k in used..LANES {
        done[k] = true;
    }
    let negligible = |v: f64, a: f64, b: f64| v <= eps2 * (a * b).abs() || v < f64::MIN_POSITIVE;
    let mut sigma = [0.0; LANES];
    let mut gamma = [0.0; LANES];
    let mut p = [0.0; LANES];
    let mut lf = [0.0; LANES];
    let mut mf = [0.0; LANES];
    loop {
        // Deflate from the top; rescan for the block end only once l passes it.
        for k in 0..LANES {
            if done[k] {
                continue;
            }
            loop {
                let lk = l[k];
                if lk >= n - 1 {
                    done[k] = true;
                    break;
                }
                if lk >= m[k] {
                    let mut mm = lk;
                    while mm < n - 1 {
                        if negligible(e2[mm][k], d[mm][k], d[mm + 1][k]) {
                            e2[mm][k] = 0.0;
                            break;
                        }
                        mm += 1;
                    }
                    if mm == lk {
                        l[k] += 1;
                        continue;
                    }
                    m[k] = mm;
                }
                if negligible(e2[lk][k], d[lk][k], d[lk + 1][k]) {
                    e2[lk][k] = 0.0;
                    l[k] += 1;
                    continue;
                }
                break;
            }
            if !done[k] {
                sweeps[k] += 1;
                if sweeps[k] > max_sweeps {
                    done[k] = true;
                    failed[k] = true;
                }
            }
        }
        if done.iter().all(|&x| x) {
            break;
        }
        let mut lo = n;
        let mut hi = 0;
        for k in 0..LANES {
            if done[k] {
                lf[k] = f64::MAX;
                mf[k] = -1.0;
                sigma[k] = 0.0;
                gamma[k] = 0.0;
                p[k] = 0.0;
                continue;
            }
            let (lk, mk) = (l[k], m[k]);
            let p0 = d[lk][k];
            let rte = e2[lk][k].sqrt();
            let g = (d[lk + 1][k] - p0) / (2.0 * rte);
            let r = g.hypot(1.0);
            let sg = p0 - rte / (g + r.copysign(g));
            sigma[k] = sg;
            gamma[k] = d[mk][k] - sg;
            p[k] = gamma[k] * gamma[k];
            lo = lo.min(lk);
            hi = hi.max(mk);
            lf[k] = lk as f64;
            mf[k] = mk as f64;
        }
        let mut cv: Lanes = [f64x8::ONE; NV];
        let mut sv: Lanes = [f64x8::ZERO; NV];
        let mut gv: Lanes = std::array::from_fn(|j| load(&gamma, j));
        let mut pv: Lanes = std::array::from_fn(|j| load(&p, j));
        let sgv: Lanes = std::array::from_fn(|j| load(&sigma, j));
        let lv: Lanes = std::array::from_fn(|j| load(&lf, j));
        let mv: Lanes = std::array::from_fn(|j| load(&mf, j));
        let zero = f64x8::ZERO;
        let one = f64x8::ONE;
        let tiny = f64x8::splat(1e-280);
        let huge = f64x8::splat(1e280);
        let mut i = hi;
        while i > lo {
            i -= 1;
            let fi = f64x8::splat(i as f64);
            let fi1 = f64x8::splat(i as f64 + 1.0);
            let (head, tail) = d.split_at_mut(i + 1);
            let (dcur, dnext) = (&head[i], &mut tail[0]);
            let (ehead, etail) = e2.split_at_mut(i + 1);
            let (ecur, enext) = (&ehead[i], &mut etail[0]);
            for j in 0..NV {
                let active = fi.simd_ge(lv[j]) & fi.simd_lt(mv[j]);
                let bb = load(ecur, j);
                let dv = load(dcur, j);
                let r = pv[j] + bb;
                let rp = r * pv[j];
                let in_range = rp.simd_gt(tiny) & rp.simd_lt(huge);
                let (nc, nsn, np);
                if in_range.all() {
                    // One reciprocal serves c, s and the next p.
                    let q = one / rp;
                    let pq = pv[j] * q;
                    nc = pv[j] * pq;
                    nsn = bb * pq;
                    let ng = nc * (dv - sgv[j]) - nsn * gv[j];
                    np = ng * ng * (r * r * q);
                } else {
                    let rinv = one / r;
                    nc = pv[j] * rinv;
                    nsn = bb * rinv;
                    let ng = nc * (dv - sgv[j]) - nsn * gv[j];
                    np = nc.simd_ne(zero).select(ng * ng / nc, cv[j] * bb);
                }
                let ng = nc * (dv - sgv[j]) - nsn * gv[j];
                let nd = gv[j] + (dv - ng);
                let write_e = active & fi1.simd_lt(mv[j]);
                store(enext, j, write_e.select(sv[j] * r, load(enext, j)));
                store(dnext, j, active.select(nd, load(dnext, j)));
                cv[j] = active.select(nc, cv[j]);
                sv[j] = active.select(nsn, sv[j]);
                gv[j] = active.select(ng, gv[j]);
                pv[j] = active.select(np, pv[j]);
            }
        }
        for k in 0..LANES {
            if done[k] {
                continue;
            }
            e2[l[k]][k] = lane(&sv, k) * lane(&pv, k);
            d[l[k]][k] = sigma[k] + lane(&gv, k);
        }
    }
    (0..used)
        .map(|k| {
            if failed[k] {
                return None;
            }
            let mut v: Vec<f64> = (0..n).map(|i| d[i][k]).collect();
            if v.iter().any(|x| !x.is_finite()) {
                return None;
            }
            v.sort_by(f64::total_cmp);
            Some(v)
        })
        .collect()
}

/// Scratch buffers for [`twisted_iprs`].
#[derive(Default)]
pub struct TwistWork {
    u: Vec<Lanes>,
    w: Vec<Lanes>,
    eu: Vec<Lanes>,
    ew: Vec<Lanes>,
}

#[inline(always)]
fn rescale(cur: &mut Lanes, other: &mut Lanes, ex: &mut Lanes) {
    let big = f64x8::splat(1e120);
    let small = f64x8::splat(1e-120);
    let down = f64x8::splat(pow2(-398));
    let up = f64x8::splat(pow2(398));
    let sh = f64x8::splat(398.0);
    let zero = f64x8::ZERO;
    for j in 0..NV {
        let a = cur[j].abs().max(other[j].abs());
        let hi = a.simd_gt(big);
        let lo = a.simd_lt(small) & a.simd_gt(zero);
        let f = hi.select(down, lo.select(up, f64x8::ONE));
        ex[j] = ex[j] + hi.select(sh, zero) - lo.select(sh, zero);
        cur[j] = cur[j] * f;
        other[j] = other[j] * f;
    }
}

/// IPRs of the eigenvectors of an unreduced `t` (n ≥ 2) for the given
/// eigenvalues. Non-finite entries signal a breakdown of the recurrence.
pub fn twisted_iprs(t: &Tridiagonal, eigs: &[f64], wk: &mut TwistWork) -> Vec<f64> {
    let n = t.n();
    let d = &t.diag;
    let e = &t.off;
    let inv_e: Vec<f64> = e.iter().map(|x| 1.0 / x).collect();
    let nb = n.div_ceil(BLK);
    let zl = [f64x8::ZERO; NV];
    wk.u.resize(n, zl);
    wk.w.resize(n, zl);
    wk.eu.resize(nb, zl);
    wk.ew.resize(nb, zl);
    let (u, w, eu, ew) = (&mut wk.u, &mut wk.w, &mut wk.eu, &mut wk.ew);
    let mut out = Vec::with_capacity(eigs.len());
    for chunk in eigs.chunks(LANES) {
        let lam = lanes_from(|k| chunk[k.min(chunk.len() - 1)]);

        // Forward solution, u_0 = 1.
        let mut prev = zl;
        let mut cur = [f64x8::ONE; NV];
        let mut ex = zl;
        for b in 0..nb {
            eu[b] = ex;
            for i in b * BLK..((b + 1) * BLK).min(n) {
                u[i] = cur;
                if i + 1 < n {
                    let em = f64x8::splat(if i > 0 { e[i - 1] } else { 0.0 });
                    let ie = f64x8::splat(-inv_e[i]);
                    let di = f64x8::splat(d[i]);
                    for j in 0..NV {
                        let nx = em.mul_add(prev[j], (di - lam[j]) * cur[j]) * ie;
                        prev[j] = cur[j];
                        cur[j] = nx;
                    }
                }
            }
            rescale(&mut cur, &mut prev, &mut ex);
        }

        // Backward solution, w_{n-1} = 1, tracking the block with the
        // largest log2|u_i w_i|.
        let mut nxt = zl;
        let mut cur = [f64x8::ONE; NV];
        let mut ex = zl;
        let mut best = [f64x8::splat(f64::NEG_INFINITY); NV];
        let mut best_b = [[0usize; 8]; NV];
        for b in (0..nb).rev() {
            ew[b] = ex;
            let mut bm = zl;
            for i in (b * BLK..((b + 1) * BLK).min(n)).rev() {
                w[i] = cur;
                for j in 0..NV {
                    bm[j] = bm[j].max((u[i][j] * cur[j]).abs());
                }
                if i > 0 {
                    let ep = f64x8::splat(if i + 1 < n { e[i] } else { 0.0 });
                    let ie = f64x8::splat(-inv_e[i - 1]);
                    let di = f64x8::splat(d[i]);
                    for j in 0..NV {
                        let pv = ep.mul_add(nxt[j], (di - lam[j]) * cur[j]) * ie;
                        nxt[j] = cur[j];
                        cur[j] = pv;
                    }
                }
            }
            for j in 0..NV {
                let score = bm[j].log2() + eu[b][j] + ex[j];
                let better = score.simd_gt(best[j]);
                if better.any() {
                    let mask = better.to_bitmask();
                    for (tt, slot) in best_b[j].iter_mut().enumerate() {
                        if mask & (1 << tt) != 0 {
                            *slot = b;
                        }
                    }
                    best[j] = better.select(score, best[j]);
                }
            }
            rescale(&mut cur, &mut nxt, &mut ex);
        }

        // Twist index inside the winning block.
        let mut r = [[0usize; 8]; NV];
        for j in 0..NV {
            for tt in 0..8 {
                let lo = best_b[j][tt] * BLK;
                let mut bv = -1.0;
                for i in lo..(lo + BLK).min(n) {
                    let v = (u[i][j].to_array()[tt] * w[i][j].to_array()[tt]).abs();
                    if v > bv {
                        bv = v;
                        r[j][tt] = i;
                    }
                }
            }
        }
        let rf = lanes_from(|k| r[k / 8][k % 8] as f64);

        // z_i = u_i/u_r for i ≤ r, w_i/w_r beyond; accumulate Σz² and Σz⁴.
        let (mut s2, mut s4) = (zl, zl);
        let cut = f64x8::splat(1e-60);
        for b in 0..nb {
            let mut fu = zl;
            let mut fw = zl;
            for j in 0..NV {
                let eub = eu[b][j].to_array();
                let ewb = ew[b][j].to_array();
                fu[j] = f64x8::from(std::array::from_fn::<f64, 8, _>(|tt| {
                    let rr = r[j][tt];
                    let k = (eub[tt] - eu[rr / BLK][j].to_array()[tt]) as i32;
                    if k < -600 { 0.0 } else { pow2(k) / u[rr][j].to_array()[tt] }
                }));
                fw[j] = f64x8::from(std::array::from_fn::<f64, 8, _>(|tt| {
                    let rr = r[j][tt];
                    let k = (ewb[tt] - ew[rr / BLK][j].to_array()[tt]) as i32;
                    if k < -600 { 0.0 } else { pow2(k) / w[rr][j].to_array()[tt] }
                }));
            }
            for i in b * BLK..((b + 1) * BLK).min(n) {
                let fi = f64x8::splat(i as f64);
                for j in 0..NV {
                    let z = fi.simd_le(rf[j]).select(u[i][j] * fu[j], w[i][j] * fw[j]);
                    // Flush tails that would otherwise run through subnormals.
                    let z = z.abs().simd_lt(cut).select(f64x8::ZERO, z);
                    let z2 = z * z;
                    s2[j] += z2;
                    s4[j] = z2.mul_add(z2, s4[j]);
                }
            }
        }
        for k in 0..chunk.len() {
            let a = lane(&s2, k);
            out.push(lane(&s4, k) / (a * a));
        }
    }
    out
}

fn dense_spectrum(t: &Tridiagonal) -> TridiagonalSpectrum {
    let evd = t.to_dense().self_adjoint_eigen(Side::Lower).expect("dense symmetric eigensolver failed");
    let n = t.n();
    let values: Vec<f64> = (0..n).map(|i| evd.S()[i]).collect();
    let u = evd.U();
    let iprs = (0..n)
        .map(|c| {
            let (s2, s4) = (0..n).fold((0.0, 0.0), |(a, b), i| {
                let x = u[(i, c)] * u[(i, c)];
                (a + x, b + x * x)
            });
            s4 / (s2 * s2)
        })
        .collect();
    TridiagonalSpectrum { values, iprs }
}

fn merge(parts: Vec<TridiagonalSpectrum>) -> TridiagonalSpectrum {
    let mut pairs: Vec<(f64, f64)> =
        parts.into_iter().flat_map(|p| p.values.into_iter().zip(p.iprs)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    TridiagonalSpectrum { values: pairs.iter().map(|p| p.0).collect(), iprs: pairs.iter().map(|p| p.1).collect() }
}

fn finish(t: &Tridiagonal, values: Option<Vec<f64>>, wk: &mut TwistWork) -> TridiagonalSpectrum {
    if let Some(values) = values {
        let iprs = twisted_iprs(t, &values, wk);
        if iprs.iter().all(|x| x.is_finite() && *x > 0.0) {
            return TridiagonalSpectrum { values, iprs };
        }
    }
    dense_spectrum(t)
}

fn spectrum_single(t: &Tridiagonal, wk: &mut TwistWork) -> TridiagonalSpectrum {
    let splits = split_points(t);
    if !splits.is_empty() {
        let mut parts = Vec::new();
        let mut start = 0;
        for end in splits.into_iter().map(|i| i + 1).chain(std::iter::once(t.n())) {
            let block = Tridiagonal { diag: t.diag[start..end].to_vec(), off: t.off[start..end - 1].to_vec() };
            parts.push(spectrum_single(&block, wk));
            start = end;
        }
        return merge(parts);
    }
    if t.n() == 1 {
        return TridiagonalSpectrum { values: vec![t.diag[0]], iprs: vec![1.0] };
    }
    let vals = lockstep_eigenvalues(&[t]).pop().unwrap();
    finish(t, vals, wk)
}

/// Eigenvalues and eigenvector IPRs of one tridiagonal matrix.
pub fn tridiagonal_spectrum(t: &Tridiagonal) -> TridiagonalSpectrum {
    spectrum_single(t, &mut TwistWork::default())
}

/// Spectra of many matrices; equal-order unreduced matrices are processed
/// in lockstep batches of [`LANES`]. Output order matches input order.
pub fn tridiagonal_spectra(mats: &[Tridiagonal], wk: &mut TwistWork) -> Vec<TridiagonalSpectrum> {
    let mut out: Vec<Option<TridiagonalSpectrum>> = vec![None; mats.len()];
    let mut pending: Vec<usize> = Vec::new();
    for (i, t) in mats.iter().enumerate() {
        if t.n() >= 2 && split_points(t).is_empty() {
            pending.push(i);
        } else {
            out[i] = Some(spectrum_single(t, wk));
        }
    }
    pending.sort_by_key(|&i| mats[i].n());
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in pending {
        match groups.last_mut() {
            Some(g) if g.len() < LANES && mats[g[0]].n() == mats[i].n() => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    for g in groups {
        let refs: Vec<&Tridiagonal> = g.iter().map(|&i| &mats[i]).collect();
        for (&i, vals) in g.iter().zip(lockstep_eigenvalues(&refs)) {
            out[i] = Some(finish(&mats[i], vals, wk));
        }
    }
    out.into_iter().map(Option::unwrap).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_single_particle, ModelParams};

    fn check_against_dense(t: &Tridiagonal, tol_val: f64, tol_ipr: f64) {
        let fast = tridiagonal_spectrum(t);
        let slow = dense_spectrum(t);
        let scale = max_abs(t).max(1e-300);
        for (a, b) in fast.values.iter().zip(&slow.values) {
            assert!((a - b).abs() <= tol_val * scale, "{a} vs {b}");
        }
        for (a, b) in fast.iprs.iter().zip(&slow.iprs) {
            assert!((a - b).abs() <= tol_ipr, "ipr {a} vs {b}");
        }
    }

    #[test]
    fn matches_dense_across_phases() {
        for &(mu, v) in &[(0.5, 0.5), (2.0, 0.5), (0.5, 4.0), (1.0, 1.0), (0.0, 0.0)] {
            let t = build_single_particle(&ModelParams::new(120, mu, v, 0.37));
            check_against_dense(&t, 1e-12, 1e-8);
        }
    }

    #[test]
    fn handles_splits_and_tiny_orders() {
        let t = Tridiagonal::new(vec![1.0, 2.0, 3.0, -1.0], vec![0.5, 0.0, 0.25]).unwrap();
        check_against_dense(&t, 1e-13, 1e-12);
        let t = Tridiagonal::new(vec![4.0], vec![]).unwrap();
        assert_eq!(tridiagonal_spectrum(&t).values, vec![4.0]);
        let t = Tridiagonal::new(vec![0.0, 0.0], vec![1.0]).unwrap();
        check_against_dense(&t, 1e-14, 1e-12);
    }

    #[test]
    fn batch_equals_single() {
        let mats: Vec<Tridiagonal> = (0..40)
            .map(|k| build_single_particle(&ModelParams::new(50 + (k % 3), 1.3, 1.7, -3.0 + 0.15 * k as f64)))
            .collect();
        let mut wk = TwistWork::default();
        let batch = tridiagonal_spectra(&mats, &mut wk);
        for (t, s) in mats.iter().zip(&batch) {
            let one = tridiagonal_spectrum(t);
            for (a, b) in one.values.iter().zip(&s.values) {
                assert!((a - b).abs() < 1e-13);
            }
            for (a, b) in one.iprs.iter().zip(&s.iprs) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
