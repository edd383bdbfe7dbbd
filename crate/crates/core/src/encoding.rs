//! Classical one-hot and nested one-hot encodings of register addresses.
//!
//! All bit strings are little-endian: bit `J` carries weight `2^J` in [`mu`].

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodingError {
    #[error("memory size {0} is not a power of two >= 2")]
    BadSize(usize),
    #[error("index {index} does not fit in {len} bits")]
    IndexRange { index: usize, len: usize },
    #[error("sector {k} out of range for log N = {log_n}")]
    SectorRange { k: u32, log_n: u32 },
    #[error("expected a bit string of length {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("bit value {0} is not 0 or 1")]
    NotABit(u8),
}

/// `log2(n)` for a power of two `n >= 2`.
pub fn log2_exact(n: usize) -> Result<u32, EncodingError> {
    if n < 2 || !n.is_power_of_two() {
        return Err(EncodingError::BadSize(n));
    }
    Ok(n.trailing_zeros())
}

/// `Σ_J bits[J] 2^J`.
pub fn mu(bits: &[u8]) -> usize {
    bits.iter()
        .enumerate()
        .fold(0, |acc, (j, &b)| acc | (usize::from(b & 1) << j))
}

pub fn mu_inv(l: usize, len: usize) -> Result<Vec<u8>, EncodingError> {
    if len < usize::BITS as usize && l >> len != 0 {
        return Err(EncodingError::IndexRange { index: l, len });
    }
    Ok((0..len).map(|j| ((l >> j) & 1) as u8).collect())
}

/// A register address `x = (x_0, …, x_{logN-1})` for a memory of `N` cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Address {
    index: usize,
    log_n: u32,
}

impl Address {
    pub fn new(bits: &[u8]) -> Result<Self, EncodingError> {
        if bits.is_empty() {
            return Err(EncodingError::BadSize(1));
        }
        if let Some(&b) = bits.iter().find(|&&b| b > 1) {
            return Err(EncodingError::NotABit(b));
        }
        Ok(Self { index: mu(bits), log_n: bits.len() as u32 })
    }

    pub fn from_index(index: usize, n: usize) -> Result<Self, EncodingError> {
        let log_n = log2_exact(n)?;
        if index >= n {
            return Err(EncodingError::IndexRange { index, len: log_n as usize });
        }
        Ok(Self { index, log_n })
    }

    #[must_use]
    pub fn index(&self) -> usize {
        self.index
    }

    #[must_use]
    pub fn log_n(&self) -> u32 {
        self.log_n
    }

    #[must_use]
    pub fn n(&self) -> usize {
        1 << self.log_n
    }

    #[must_use]
    pub fn bit(&self, k: u32) -> u8 {
        ((self.index >> k) & 1) as u8
    }

    #[must_use]
    pub fn bits(&self) -> Vec<u8> {
        (0..self.log_n).map(|k| self.bit(k)).collect()
    }

    /// All `N` addresses in increasing `mu` order.
    pub fn all(n: usize) -> Result<impl Iterator<Item = Address>, EncodingError> {
        let log_n = log2_exact(n)?;
        Ok((0..n).map(move |index| Address { index, log_n }))
    }
}

/// Memory contents `D`, one bit per cell, packed in words.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dataset {
    n: usize,
    words: Vec<u64>,
}

impl Dataset {
    pub fn zeros(n: usize) -> Self {
        Self { n, words: vec![0; n.div_ceil(64)] }
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self, EncodingError> {
        let mut d = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b > 1 {
                return Err(EncodingError::NotABit(b));
            }
            d.set(i, b);
        }
        Ok(d)
    }

    /// `D_x = 1` for every cell when `fill` is set.
    pub fn filled(n: usize, fill: u8) -> Self {
        let mut d = Self::zeros(n);
        for i in 0..n {
            d.set(i, fill & 1);
        }
        d
    }

    /// Uniform i.i.d. bits.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut d = Self::zeros(n);
        for (w, word) in d.words.iter_mut().enumerate() {
            let valid = (n - 64 * w).min(64);
            let mask = if valid == 64 { u64::MAX } else { (1u64 << valid) - 1 };
            *word = rng.random::<u64>() & mask;
        }
        d
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.n
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[must_use]
    pub fn get(&self, i: usize) -> u8 {
        ((self.words[i / 64] >> (i % 64)) & 1) as u8
    }

    pub fn set(&mut self, i: usize, b: u8) {
        let m = 1u64 << (i % 64);
        if b & 1 == 1 {
            self.words[i / 64] |= m;
        } else {
            self.words[i / 64] &= !m;
        }
    }

    #[must_use]
    pub fn bits(&self) -> Vec<u8> {
        (0..self.n).map(|i| self.get(i)).collect()
    }

    #[must_use]
    pub fn words(&self) -> &[u64] {
        &self.words
    }
}

/// Sectors `ohe^(0) … ohe^(logN-1)`; sector `K` has `2^K` bits.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoheString {
    sectors: Vec<Vec<u8>>,
}

impl NoheString {
    #[must_use]
    pub fn sectors(&self) -> &[Vec<u8>] {
        &self.sectors
    }

    /// Concatenation of all sectors, `N - 1` bits.
    #[must_use]
    pub fn flatten(&self) -> Vec<u8> {
        self.sectors.iter().flatten().copied().collect()
    }

    #[must_use]
    pub fn weight(&self) -> usize {
        self.sectors.iter().flatten().filter(|&&b| b == 1).count()
    }
}

pub fn ohe_sector(x: &Address, k: u32) -> Result<Vec<u8>, EncodingError> {
    if k >= x.log_n() {
        return Err(EncodingError::SectorRange { k, log_n: x.log_n() });
    }
    let mut out = vec![0u8; 1 << k];
    if x.bit(k) == 1 {
        out[x.index() & ((1 << k) - 1)] = 1;
    }
    Ok(out)
}

#[must_use]
pub fn nohe(x: &Address) -> NoheString {
    let sectors = (0..x.log_n())
        .map(|k| ohe_sector(x, k).expect("k < log N"))
        .collect();
    NoheString { sectors }
}

/// `|NOHE(x)⟩ ⊗ |OHE(x)⟩` with the pointer qubit in `|±⟩`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusEncoding {
    pub nohe: NoheString,
    /// Position of the pointer among the last `N` qubits.
    pub pointer_position: usize,
    /// `+1` for `|+⟩`, `-1` for `|−⟩`.
    pub pointer_sign: i8,
}

#[must_use]
pub fn nohe_with_bus(x: &Address, bus: u8) -> BusEncoding {
    BusEncoding {
        nohe: nohe(x),
        pointer_position: x.index(),
        pointer_sign: if bus & 1 == 0 { 1 } else { -1 },
    }
}

fn check_len(b: &[u8], expected: usize) -> Result<(), EncodingError> {
    if b.len() != expected {
        return Err(EncodingError::Length { expected, got: b.len() });
    }
    Ok(())
}

/// `l ↦ mu(mu_inv(l) ⊕ b)` on `{0..N-1}` with `N = 2^|b|`.
pub fn pointer_permutation(b: &[u8]) -> Vec<usize> {
    let shift = mu(b);
    (0..1usize << b.len()).map(|l| l ^ shift).collect()
}

/// `B_l = D[mu(mu_inv(l) ⊕ b)]`.
pub fn load_bits(d: &Dataset, b: &[u8]) -> Result<Dataset, EncodingError> {
    check_len(b, log2_exact(d.len())? as usize)?;
    let shift = mu(b);
    let mut out = Dataset::zeros(d.len());
    for l in 0..d.len() {
        out.set(l, d.get(l ^ shift));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(bits: &[u8]) -> Address {
        Address::new(bits).unwrap()
    }

    #[test]
    fn mu_examples() {
        assert_eq!(mu(&[]), 0);
        assert_eq!(mu(&[0, 1, 0]), 2);
        assert_eq!(mu(&[1, 1, 0, 1]), 11);
        assert_eq!(mu_inv(11, 4).unwrap(), vec![1, 1, 0, 1]);
        assert!(mu_inv(16, 4).is_err());
    }

    #[test]
    fn sector_examples() {
        assert_eq!(ohe_sector(&addr(&[0, 1, 1, 1]), 3).unwrap(), vec![0, 0, 0, 0, 0, 0, 1, 0]);
        assert_eq!(ohe_sector(&addr(&[1, 1]), 1).unwrap(), vec![0, 1]);
        assert_eq!(ohe_sector(&addr(&[1, 0]), 0).unwrap(), vec![1]);
        assert!(ohe_sector(&addr(&[1, 0]), 2).is_err());
    }

    #[test]
    fn nohe_examples() {
        assert_eq!(nohe(&addr(&[0])).flatten(), vec![0]);
        assert_eq!(nohe(&addr(&[1, 1])).flatten(), vec![1, 0, 1]);
        assert_eq!(nohe(&addr(&[1, 1, 1])).flatten(), vec![1, 0, 1, 0, 0, 0, 1]);
    }

    #[test]
    fn bus_pointer() {
        let e = nohe_with_bus(&addr(&[0, 1, 0]), 0);
        assert_eq!((e.pointer_position, e.pointer_sign), (2, 1));
        let e = nohe_with_bus(&addr(&[0, 1, 0]), 1);
        assert_eq!((e.pointer_position, e.pointer_sign), (2, -1));
        assert_eq!(nohe_with_bus(&addr(&[0, 0]), 0).pointer_position, 0);
    }

    #[test]
    fn pointer_moves() {
        let p = pointer_permutation(&[0, 0, 1]);
        assert_eq!(p[mu(&[0, 1, 1])], 2);
        assert_eq!(pointer_permutation(&[1, 0]), vec![1, 0, 3, 2]);
        assert_eq!(pointer_permutation(&[0, 0]), vec![0, 1, 2, 3]);
    }

    #[test]
    fn load_examples() {
        let d = Dataset::from_bits(&[1, 0, 1, 1]).unwrap();
        assert_eq!(load_bits(&d, &[0, 0]).unwrap(), d);
        assert_eq!(load_bits(&d, &[1, 0]).unwrap().bits(), vec![0, 1, 1, 1]);
        let again = load_bits(&load_bits(&d, &[1, 1]).unwrap(), &[1, 1]).unwrap();
        assert_eq!(again, d);
        assert!(load_bits(&d, &[1]).is_err());
    }
}
