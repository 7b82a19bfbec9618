//! Fixed-excitation (U(1)) sectors of an L-site hard-core chain.

use std::fmt;

use crate::error::{param, Error, Result};

/// Largest supported chain length; states live in a `u32`.
pub const MAX_SITES: usize = 30;

/// Occupation bitmask. Site `j` (1-based) is bit `j - 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FockState {
    pub bits: u32,
    pub len: usize,
}

impl FockState {
    pub fn new(bits: u32, len: usize) -> Result<Self> {
        if len > MAX_SITES {
            return Err(param("L", format!("must be at most {MAX_SITES}, got {len}")));
        }
        if len < 32 && (bits as u64) >= (1u64 << len) {
            return Err(Error::Domain(format!("bitmask {bits:#b} does not fit in {len} sites")));
        }
        Ok(Self { bits, len })
    }

    pub fn popcount(&self) -> usize {
        self.bits.count_ones() as usize
    }

    /// Occupation of 1-based site `j`.
    pub fn occupied(&self, site: usize) -> bool {
        site >= 1 && site <= self.len && self.bits >> (site - 1) & 1 == 1
    }

    /// Global spin flip.
    pub fn flipped(&self) -> Self {
        Self { bits: !self.bits & low_mask(self.len), len: self.len }
    }
}

impl fmt::Display for FockState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 0..self.len {
            f.write_str(if self.bits >> j & 1 == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl std::str::FromStr for FockState {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        state_from_string(s)
    }
}

pub(crate) fn low_mask(len: usize) -> u32 {
    if len >= 32 { u32::MAX } else { (1u32 << len) - 1 }
}

/// Parse a ket label such as `"1010101010"`; the leftmost digit is site 1.
pub fn state_from_string(spec: &str) -> Result<FockState> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Err(Error::Domain("empty state string".into()));
    }
    let len = spec.chars().count();
    if len > MAX_SITES {
        return Err(Error::Domain(format!("state string has {len} sites, at most {MAX_SITES} supported")));
    }
    let mut bits = 0u32;
    for (j, c) in spec.chars().enumerate() {
        match c {
            '0' => {}
            '1' => bits |= 1 << j,
            other => return Err(Error::Domain(format!("invalid character {other:?} in state string {spec:?}"))),
        }
    }
    FockState::new(bits, len)
}

/// Binomial coefficient, exact in `u64` for n ≤ 62.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1u64;
    for i in 0..k {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

/// All states of `L` sites with exactly `M` excitations, sorted by bitmask.
#[derive(Clone, Debug)]
pub struct SectorBasis {
    l: usize,
    m: usize,
    states: Vec<u32>,
    // binom[c][i] = C(c, i)
    binom: Vec<Vec<u64>>,
}

pub fn enumerate_sector(l: usize, m: usize) -> Result<SectorBasis> {
    if l == 0 || l > MAX_SITES {
        return Err(param("L", format!("must be in 1..={MAX_SITES}, got {l}")));
    }
    if m > l {
        return Err(param("M", format!("must not exceed L = {l}, got {m}")));
    }
    let size = binomial(l, m) as usize;
    let mut states = Vec::with_capacity(size);
    if m == 0 {
        states.push(0);
    } else {
        // Gosper's hack walks the popcount-m masks in increasing order.
        let limit = 1u64 << l;
        let mut s: u64 = (1u64 << m) - 1;
        while s < limit {
            states.push(s as u32);
            let c = s & s.wrapping_neg();
            let r = s + c;
            s = (((r ^ s) >> 2) / c) | r;
        }
    }
    debug_assert_eq!(states.len(), size);
    let binom = (0..=l).map(|c| (0..=m).map(|i| binomial(c, i)).collect()).collect();
    Ok(SectorBasis { l, m, states, binom })
}

impl SectorBasis {
    pub fn l(&self) -> usize {
        self.l
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[u32] {
        &self.states
    }

    pub fn state(&self, k: usize) -> FockState {
        FockState { bits: self.states[k], len: self.l }
    }

    /// Combinadic rank of a bitmask known to be in the sector.
    #[inline]
    pub fn rank_bits(&self, bits: u32) -> usize {
        let mut b = bits;
        let mut i = 1;
        let mut r = 0u64;
        while b != 0 {
            let c = b.trailing_zeros() as usize;
            r += self.binom[c][i];
            i += 1;
            b &= b - 1;
        }
        r as usize
    }

    pub fn rank(&self, s: FockState) -> Result<usize> {
        if s.len != self.l {
            return Err(Error::Domain(format!("state has {} sites, sector has {}", s.len, self.l)));
        }
        if s.popcount() != self.m {
            return Err(Error::Domain(format!(
                "state {s} has {} excitations, sector has {}",
                s.popcount(),
                self.m
            )));
        }
        Ok(self.rank_bits(s.bits))
    }

    /// Alias of [`rank`](Self::rank).
    pub fn index_of(&self, s: FockState) -> Result<usize> {
        self.rank(s)
    }

    pub fn unrank(&self, k: usize) -> Result<FockState> {
        if k >= self.len() {
            return Err(Error::Domain(format!("index {k} out of range for sector of size {}", self.len())));
        }
        // Greedy combinadic decomposition, independent of the stored list.
        let mut rem = k as u64;
        let mut bits = 0u32;
        let mut c = self.l;
        for i in (1..=self.m).rev() {
            c -= 1;
            while self.binom[c][i] > rem {
                c -= 1;
            }
            rem -= self.binom[c][i];
            bits |= 1 << c;
        }
        Ok(FockState { bits, len: self.l })
    }

    pub fn contains(&self, bits: u32) -> bool {
        bits.count_ones() as usize == self.m && bits & !low_mask(self.l) == 0
    }
}
