//! Statevector engine for small registers.
//!
//! Qubit `q` is bit `q` of the amplitude index. Measured qubits can be removed from the
//! register, which keeps long measurement-based protocols within memory.

use num_complex::Complex64;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::Gate;

pub type C64 = Complex64;

const NORM_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DenseError {
    #[error("qubit {qubit} out of range for {n} qubits")]
    Operand { qubit: usize, n: usize },
    #[error("operands must be distinct")]
    Repeated,
    #[error("forced outcome has zero probability")]
    ZeroProbability,
    #[error("register sizes differ: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("state has norm^2 {0}, expected 1")]
    NotNormalized(f64),
    #[error("expected {expected} amplitudes, got {got}")]
    Length { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    X,
    Z,
}

/// Either sample an outcome from the Born rule or force a branch.
pub enum Outcome<'a> {
    Sample(&'a mut dyn RngCore),
    Force(u8),
}

/// Bell-measurement result `(a, b)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BellOutcome {
    pub a: u8,
    pub b: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseState {
    n: usize,
    amps: Vec<C64>,
}

impl DenseState {
    #[must_use]
    pub fn zero(n: usize) -> Self {
        Self::basis(n, 0)
    }

    #[must_use]
    pub fn basis(n: usize, index: usize) -> Self {
        let mut amps = vec![C64::new(0.0, 0.0); 1 << n];
        amps[index] = C64::new(1.0, 0.0);
        Self { n, amps }
    }

    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self, DenseError> {
        if !amps.len().is_power_of_two() {
            return Err(DenseError::Length { expected: amps.len().next_power_of_two(), got: amps.len() });
        }
        let s = Self { n: amps.len().trailing_zeros() as usize, amps };
        let norm = s.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(DenseError::NotNormalized(norm));
        }
        Ok(s)
    }

    /// Builds a state from unnormalised amplitudes.
    pub fn normalized(amps: Vec<C64>) -> Result<Self, DenseError> {
        let norm: f64 = amps.iter().map(C64::norm_sqr).sum();
        if norm == 0.0 {
            return Err(DenseError::ZeroProbability);
        }
        let s = 1.0 / norm.sqrt();
        Self::from_amplitudes(amps.into_iter().map(|a| a * s).collect())
    }

    #[must_use]
    pub fn n(&self) -> usize {
        self.n
    }

    #[must_use]
    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    #[must_use]
    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(C64::norm_sqr).sum()
    }

    fn check(&self, qs: &[usize]) -> Result<(), DenseError> {
        for (i, &q) in qs.iter().enumerate() {
            if q >= self.n {
                return Err(DenseError::Operand { qubit: q, n: self.n });
            }
            if qs[..i].contains(&q) {
                return Err(DenseError::Repeated);
            }
        }
        Ok(())
    }

    /// `self ⊗ other`, with `other` on the new high qubits.
    #[must_use]
    pub fn tensor(&self, other: &DenseState) -> DenseState {
        let mut amps = Vec::with_capacity(self.amps.len() * other.amps.len());
        for b in &other.amps {
            amps.extend(self.amps.iter().map(|a| a * b));
        }
        DenseState { n: self.n + other.n, amps }
    }

    /// Appends `k` qubits in `|0⟩` as the new high qubits.
    pub fn append_zeros(&mut self, k: usize) {
        self.n += k;
        self.amps.resize(1 << self.n, C64::new(0.0, 0.0));
    }

    pub fn apply_1q(&mut self, q: usize, m: [[C64; 2]; 2]) -> Result<(), DenseError> {
        self.check(&[q])?;
        let bit = 1usize << q;
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                let (a0, a1) = (self.amps[i], self.amps[i | bit]);
                self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[i | bit] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
        Ok(())
    }

    fn flip_where(&mut self, mask_set: usize, flip: usize) {
        for i in 0..self.amps.len() {
            if i & mask_set == mask_set && i & flip == 0 {
                self.amps.swap(i, i | flip);
            }
        }
    }

    pub fn apply_gate(&mut self, g: &Gate) -> Result<(), DenseError> {
        self.check(&g.qubits())?;
        match *g {
            Gate::X(q) => self.flip_where(0, 1 << q),
            Gate::Z(q) => self.phase_where(1 << q),
            Gate::H(q) => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                let (p, m) = (C64::new(s, 0.0), C64::new(-s, 0.0));
                self.apply_1q(q, [[p, p], [p, m]])?;
            }
            Gate::Cz(a, b) => self.phase_where((1 << a) | (1 << b)),
            Gate::Cnot { control, target } => self.flip_where(1 << control, 1 << target),
            Gate::Toffoli { c0, c1, target } => {
                self.flip_where((1 << c0) | (1 << c1), 1 << target);
            }
            Gate::Swap(a, b) => self.swap_where(0, a, b),
            Gate::Fredkin { control, t0, t1 } => self.swap_where(1 << control, t0, t1),
        }
        Ok(())
    }

    pub fn apply_gates<'g>(&mut self, gates: impl IntoIterator<Item = &'g Gate>) -> Result<(), DenseError> {
        for g in gates {
            self.apply_gate(g)?;
        }
        Ok(())
    }

    fn phase_where(&mut self, mask: usize) {
        for (i, a) in self.amps.iter_mut().enumerate() {
            if i & mask == mask {
                *a = -*a;
            }
        }
    }

    fn swap_where(&mut self, control_mask: usize, a: usize, b: usize) {
        let (ba, bb) = (1usize << a, 1usize << b);
        for i in 0..self.amps.len() {
            if i & control_mask == control_mask && i & ba != 0 && i & bb == 0 {
                self.amps.swap(i, (i & !ba) | bb);
            }
        }
    }

    /// Probability that qubit `q` reads `bit` in the Z basis.
    #[must_use]
    pub fn prob_z(&self, q: usize, bit: u8) -> f64 {
        let mask = 1usize << q;
        let want = if bit == 0 { 0 } else { mask };
        self.amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask == want)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    fn rotate_to_z(&mut self, q: usize, basis: Basis) -> Result<(), DenseError> {
        if basis == Basis::X {
            self.apply_gate(&Gate::H(q))?;
        }
        Ok(())
    }

    fn choose(&self, q: usize, outcome: Outcome<'_>) -> Result<(u8, f64), DenseError> {
        let p0 = self.prob_z(q, 0) / self.norm_sqr();
        let bit = match outcome {
            Outcome::Force(b) => b & 1,
            Outcome::Sample(rng) => u8::from(rng.random::<f64>() >= p0),
        };
        let p = if bit == 0 { p0 } else { 1.0 - p0 };
        if p < 1e-14 {
            return Err(DenseError::ZeroProbability);
        }
        Ok((bit, p))
    }

    fn project_z(&mut self, q: usize, bit: u8, p: f64) {
        let mask = 1usize << q;
        let want = if bit == 0 { 0 } else { mask };
        let s = 1.0 / p.sqrt();
        for (i, a) in self.amps.iter_mut().enumerate() {
            if i & mask == want {
                *a *= s;
            } else {
                *a = C64::new(0.0, 0.0);
            }
        }
    }

    /// Single-qubit Pauli measurement; the qubit stays in the register, collapsed.
    ///
    /// Returns the outcome bit (`0` for eigenvalue `+1`) and its probability.
    pub fn measure(&mut self, q: usize, basis: Basis, outcome: Outcome<'_>) -> Result<(u8, f64), DenseError> {
        self.check(&[q])?;
        self.rotate_to_z(q, basis)?;
        let (bit, p) = self.choose(q, outcome)?;
        self.project_z(q, bit, p);
        self.rotate_to_z(q, basis)?;
        Ok((bit, p))
    }

    /// Measures qubit `q` and removes it; higher qubits shift down by one.
    pub fn measure_discard(&mut self, q: usize, basis: Basis, outcome: Outcome<'_>) -> Result<(u8, f64), DenseError> {
        self.check(&[q])?;
        self.rotate_to_z(q, basis)?;
        let (bit, p) = self.choose(q, outcome)?;
        let s = 1.0 / p.sqrt();
        let low = (1usize << q) - 1;
        let pick = usize::from(bit) << q;
        let amps = (0..1usize << (self.n - 1))
            .map(|j| {
                let i = (j & low) | ((j & !low) << 1) | pick;
                self.amps[i] * s
            })
            .collect();
        self.amps = amps;
        self.n -= 1;
        Ok((bit, p))
    }

    /// Bell measurement: `CZ(q1,q2)` then X measurements; `a` comes from `q1`.
    ///
    /// Both qubits are removed from the register.
    pub fn bell_measure(
        &mut self,
        q1: usize,
        q2: usize,
        forced: Option<BellOutcome>,
        rng: &mut dyn RngCore,
    ) -> Result<(BellOutcome, f64), DenseError> {
        self.check(&[q1, q2])?;
        self.apply_gate(&Gate::Cz(q1, q2))?;
        let (hi, lo) = if q1 > q2 { (q1, q2) } else { (q2, q1) };
        let (first, second) = if hi == q1 {
            (forced.map(|o| o.a), forced.map(|o| o.b))
        } else {
            (forced.map(|o| o.b), forced.map(|o| o.a))
        };
        let (r_hi, p_hi) = self.measure_discard(hi, Basis::X, pick(first, rng))?;
        let (r_lo, p_lo) = self.measure_discard(lo, Basis::X, pick(second, rng))?;
        let (a, b) = if hi == q1 { (r_hi, r_lo) } else { (r_lo, r_hi) };
        Ok((BellOutcome { a, b }, p_hi * p_lo))
    }

    /// Moves qubit `from` to position `to`, shifting the qubits in between.
    pub fn move_qubit(&mut self, from: usize, to: usize) -> Result<(), DenseError> {
        self.check(&[from])?;
        self.check(&[to])?;
        let n = self.n;
        let mut order: Vec<usize> = (0..n).filter(|&q| q != from).collect();
        order.insert(to, from);
        self.permute(&order);
        Ok(())
    }

    /// New qubit `k` is old qubit `order[k]`.
    pub fn permute(&mut self, order: &[usize]) {
        let mut amps = vec![C64::new(0.0, 0.0); self.amps.len()];
        for (i, a) in self.amps.iter().enumerate() {
            let j = order.iter().enumerate().fold(0, |acc, (k, &old)| acc | (((i >> old) & 1) << k));
            amps[j] = *a;
        }
        self.amps = amps;
    }

    #[must_use]
    pub fn inner(&self, other: &DenseState) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }
}

fn pick<'a>(b: Option<u8>, rng: &'a mut dyn RngCore) -> Outcome<'a> {
    match b {
        Some(b) => Outcome::Force(b),
        None => Outcome::Sample(rng),
    }
}

/// `|⟨a|b⟩|^2`.
pub fn fidelity(a: &DenseState, b: &DenseState) -> Result<f64, DenseError> {
    if a.n != b.n {
        return Err(DenseError::SizeMismatch(a.n, b.n));
    }
    Ok(a.inner(b).norm_sqr())
}

/// `Ψ_{a,b} = ½ Σ_{ij} (-1)^{ai + bj + ij} |i,j⟩`, with `i` on qubit 0.
#[must_use]
pub fn bell_state(a: u8, b: u8) -> DenseState {
    let amps = (0..4usize)
        .map(|idx| {
            let (i, j) = ((idx & 1) as u8, (idx >> 1) as u8);
            let sign = (a & i) ^ (b & j) ^ (i & j);
            C64::new(if sign == 1 { -0.5 } else { 0.5 }, 0.0)
        })
        .collect();
    DenseState { n: 2, amps }
}

/// Unitarily invariant random state: normalised complex Gaussian amplitudes.
pub fn haar_random_state<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DenseState {
    let amps: Vec<C64> = (0..1usize << n)
        .map(|_| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
        .collect();
    DenseState::normalized(amps).expect("nonzero gaussian vector")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: &DenseState, b: &DenseState) -> bool {
        (fidelity(a, b).unwrap() - 1.0).abs() < 1e-12
    }

    #[test]
    fn basic_gates() {
        let mut s = DenseState::zero(1);
        s.apply_gate(&Gate::X(0)).unwrap();
        assert!(close(&s, &DenseState::basis(1, 1)));
        let mut s = DenseState::zero(1);
        s.apply_gate(&Gate::H(0)).unwrap();
        assert!((s.amplitudes()[1].re - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        let mut s = DenseState::basis(3, 0b101);
        s.apply_gate(&Gate::Fredkin { control: 0, t0: 1, t1: 2 }).unwrap();
        assert!(close(&s, &DenseState::basis(3, 0b011)));
        assert!(s.apply_gate(&Gate::X(3)).is_err());
    }

    #[test]
    fn bell_basis_orthonormal() {
        for a in 0..4u8 {
            for b in 0..4u8 {
                let ov = bell_state(a & 1, a >> 1).inner(&bell_state(b & 1, b >> 1)).norm();
                assert!((ov - f64::from(u8::from(a == b))).abs() < 1e-14);
            }
        }
        let s = bell_state(0, 0);
        assert_eq!(s.amplitudes()[3].re, -0.5);
    }

    #[test]
    fn bell_measure_on_bell_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let mut s = bell_state(1, 0);
            let (o, p) = s.bell_measure(0, 1, None, &mut rng).unwrap();
            assert_eq!(o, BellOutcome { a: 1, b: 0 });
            assert!((p - 1.0).abs() < 1e-12);
        }
        for a in 0..2 {
            for b in 0..2 {
                let mut s = DenseState::zero(2);
                let (_, p) = s.bell_measure(0, 1, Some(BellOutcome { a, b }), &mut rng).unwrap();
                assert!((p - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pauli_measurements() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = DenseState::zero(1);
        assert_eq!(s.measure(0, Basis::Z, Outcome::Sample(&mut rng)).unwrap().0, 0);
        let mut plus = DenseState::zero(1);
        plus.apply_gate(&Gate::H(0)).unwrap();
        assert_eq!(plus.clone().measure(0, Basis::X, Outcome::Sample(&mut rng)).unwrap().0, 0);
        let (_, p) = DenseState::zero(1).measure(0, Basis::X, Outcome::Force(1)).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
        assert!(DenseState::zero(1).measure(0, Basis::Z, Outcome::Force(1)).is_err());
    }

    #[test]
    fn discard_keeps_other_qubits() {
        let mut s = DenseState::basis(3, 0b101);
        s.measure_discard(1, Basis::Z, Outcome::Force(0)).unwrap();
        assert!(close(&s, &DenseState::basis(2, 0b11)));
    }

    #[test]
    fn move_qubit_reorders() {
        let mut s = DenseState::basis(3, 0b001);
        s.move_qubit(0, 2).unwrap();
        assert!(close(&s, &DenseState::basis(3, 0b100)));
    }

    #[test]
    fn haar_edge_and_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = haar_random_state(0, &mut rng);
        assert!((s.amplitudes()[0].norm() - 1.0).abs() < 1e-12);
        let s = haar_random_state(5, &mut rng);
        assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
    }
}
