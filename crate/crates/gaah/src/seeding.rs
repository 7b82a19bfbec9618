//! Counter-based random streams: every (master seed, point, trajectory)
//! triple owns an independent ChaCha stream, so results do not depend on
//! scheduling.

use std::f64::consts::PI;

use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, point: u64, traj: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ point) ^ traj.rotate_left(32))
}

pub fn stream(master: u64, point: u64, traj: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, point, traj))
}

/// Uniform double in [0, 1) with 53 random bits.
pub fn uniform01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform phase in [−π, π).
pub fn uniform_phase<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    crate::model::wrap_phase(-PI + 2.0 * PI * uniform01(rng))
}

/// The phase offset for draw `traj` at grid point `point`.
pub fn phase_draw(master: u64, point: u64, traj: u64) -> f64 {
    uniform_phase(&mut stream(master, point, traj))
}

pub fn phase_draws(master: u64, point: u64, n: usize) -> Vec<f64> {
    (0..n as u64).map(|k| phase_draw(master, point, k)).collect()
}
