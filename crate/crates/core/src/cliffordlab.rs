//! Pauli algebra, stabilizer tableaux and Clifford-hierarchy membership.
//!
//! A [`PauliString`] is `i^phase · ⊗_q X^{x_q} Z^{z_q}` (X to the left of Z on each
//! qubit), so `Y` is stored as `x = z = 1` with an extra factor `i`.

use std::collections::HashMap;
use std::fmt;

use num_complex::Complex64;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::Gate;
use crate::densesim::{DenseError, DenseState, C64};
use crate::encoding::{log2_exact, Dataset, EncodingError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliffordError {
    #[error("gate {0} is not Clifford")]
    NotClifford(String),
    #[error("operator is not unitary")]
    NotUnitary,
    #[error("operator on {0} qubits exceeds the supported size")]
    TooLarge(usize),
    #[error("forced outcome contradicts a deterministic measurement")]
    ForcedContradiction,
    #[error("cannot parse Pauli string {0:?}")]
    Parse(String),
    #[error("Pauli sizes differ: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Dense(#[from] DenseError),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliString {
    n: usize,
    x: Vec<u64>,
    z: Vec<u64>,
    phase: u8,
}

fn words(n: usize) -> usize {
    n.div_ceil(64).max(1)
}

fn popcount_and(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(p, q)| (p & q).count_ones()).sum()
}

impl PauliString {
    #[must_use]
    pub fn identity(n: usize) -> Self {
        Self { n, x: vec![0; words(n)], z: vec![0; words(n)], phase: 0 }
    }

    /// Hermitian Pauli from `(qubit, 'X'|'Y'|'Z')` pairs and a sign.
    #[must_use]
    pub fn from_sparse(n: usize, ops: &[(usize, char)], negative: bool) -> Self {
        let mut p = Self::identity(n);
        for &(q, c) in ops {
            let single = match c {
                'X' => Self::single(n, q, true, false, 0),
                'Z' => Self::single(n, q, false, true, 0),
                'Y' => Self::single(n, q, true, true, 1),
                _ => continue,
            };
            p = p.mul(&single);
        }
        if negative {
            p.phase = (p.phase + 2) % 4;
        }
        p
    }

    fn single(n: usize, q: usize, x: bool, z: bool, phase: u8) -> Self {
        let mut p = Self::identity(n);
        p.set(q, x, z);
        p.phase = phase;
        p
    }

    /// Parses products such as `"-X6Z3X5"` with 1-based qubit labels.
    pub fn parse_one_based(s: &str, n: usize) -> Result<Self, CliffordError> {
        let bad = || CliffordError::Parse(s.to_string());
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let (negative, body) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t.strip_prefix('+').unwrap_or(&t)),
        };
        let mut ops = Vec::new();
        let chars: Vec<char> = body.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if !matches!(c, 'X' | 'Y' | 'Z') {
                return Err(bad());
            }
            let start = i + 1;
            let mut end = start;
            while end < chars.len() && chars[end].is_ascii_digit() {
                end += 1;
            }
            let label: usize = chars[start..end].iter().collect::<String>().parse().map_err(|_| bad())?;
            if label == 0 || label > n {
                return Err(bad());
            }
            ops.push((label - 1, c));
            i = end;
        }
        Ok(Self::from_sparse(n, &ops, negative))
    }

    #[must_use]
    pub fn n(&self) -> usize {
        self.n
    }

    #[must_use]
    pub fn phase(&self) -> u8 {
        self.phase
    }

    #[must_use]
    pub fn x_bit(&self, q: usize) -> bool {
        (self.x[q / 64] >> (q % 64)) & 1 == 1
    }

    #[must_use]
    pub fn z_bit(&self, q: usize) -> bool {
        (self.z[q / 64] >> (q % 64)) & 1 == 1
    }

    pub fn set(&mut self, q: usize, x: bool, z: bool) {
        let m = 1u64 << (q % 64);
        let w = q / 64;
        self.x[w] = if x { self.x[w] | m } else { self.x[w] & !m };
        self.z[w] = if z { self.z[w] | m } else { self.z[w] & !m };
    }

    #[must_use]
    pub fn is_identity(&self) -> bool {
        self.x.iter().chain(&self.z).all(|&w| w == 0)
    }

    /// Qubits carrying a non-identity factor.
    #[must_use]
    pub fn support(&self) -> Vec<usize> {
        (0..self.n).filter(|&q| self.x_bit(q) || self.z_bit(q)).collect()
    }

    #[must_use]
    pub fn mul(&self, other: &PauliString) -> PauliString {
        let extra = 2 * (popcount_and(&self.z, &other.x) % 2) as u8;
        PauliString {
            n: self.n,
            x: self.x.iter().zip(&other.x).map(|(a, b)| a ^ b).collect(),
            z: self.z.iter().zip(&other.z).map(|(a, b)| a ^ b).collect(),
            phase: (self.phase + other.phase + extra) % 4,
        }
    }

    #[must_use]
    pub fn commutes(&self, other: &PauliString) -> bool {
        (popcount_and(&self.x, &other.z) + popcount_and(&self.z, &other.x)).is_multiple_of(2)
    }

    /// Sign of the Hermitian form, `None` if the string is not Hermitian.
    #[must_use]
    pub fn hermitian_sign(&self) -> Option<i8> {
        let y = popcount_and(&self.x, &self.z) as u8 % 4;
        match (self.phase + 4 - y) % 4 {
            0 => Some(1),
            2 => Some(-1),
            _ => None,
        }
    }

    #[must_use]
    pub fn negated(&self) -> PauliString {
        let mut p = self.clone();
        p.phase = (p.phase + 2) % 4;
        p
    }

    /// Same operator up to an overall phase.
    #[must_use]
    pub fn same_support_pattern(&self, other: &PauliString) -> bool {
        self.x == other.x && self.z == other.z
    }

    /// In-place `P ↦ U P U†` for a Clifford gate `U`.
    pub fn conjugate(&mut self, g: &Gate) -> Result<(), CliffordError> {
        match *g {
            Gate::X(q) => {
                if self.z_bit(q) {
                    self.phase = (self.phase + 2) % 4;
                }
            }
            Gate::Z(q) => {
                if self.x_bit(q) {
                    self.phase = (self.phase + 2) % 4;
                }
            }
            Gate::H(q) => {
                let (x, z) = (self.x_bit(q), self.z_bit(q));
                if x && z {
                    self.phase = (self.phase + 2) % 4;
                }
                self.set(q, z, x);
            }
            Gate::Cnot { control, target } => {
                let (xc, zc, xt, zt) =
                    (self.x_bit(control), self.z_bit(control), self.x_bit(target), self.z_bit(target));
                self.set(control, xc, zc ^ zt);
                self.set(target, xt ^ xc, zt);
            }
            Gate::Cz(a, b) => {
                let (xa, za, xb, zb) = (self.x_bit(a), self.z_bit(a), self.x_bit(b), self.z_bit(b));
                if xa && xb {
                    self.phase = (self.phase + 2) % 4;
                }
                self.set(a, xa, za ^ xb);
                self.set(b, xb, zb ^ xa);
            }
            Gate::Swap(a, b) => {
                let (xa, za, xb, zb) = (self.x_bit(a), self.z_bit(a), self.x_bit(b), self.z_bit(b));
                self.set(a, xb, zb);
                self.set(b, xa, za);
            }
            other => return Err(CliffordError::NotClifford(other.to_string())),
        }
        Ok(())
    }

    /// `P|ψ⟩` on a dense register of the same size.
    pub fn apply_dense(&self, s: &DenseState) -> Result<DenseState, CliffordError> {
        if s.n() != self.n {
            return Err(CliffordError::SizeMismatch(s.n(), self.n));
        }
        if self.n > 64 {
            return Err(CliffordError::TooLarge(self.n));
        }
        let (xm, zm) = (self.x[0] as usize, self.z[0] as usize);
        let ph = Complex64::i().powu(u32::from(self.phase));
        let mut out = vec![C64::new(0.0, 0.0); s.amplitudes().len()];
        for (i, a) in s.amplitudes().iter().enumerate() {
            let sign = if (i & zm).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
            out[i ^ xm] = a * ph * sign;
        }
        Ok(DenseState::from_amplitudes(out)?)
    }

    /// True when `P|ψ⟩ = |ψ⟩` within `tol`.
    pub fn stabilizes(&self, s: &DenseState, tol: f64) -> Result<bool, CliffordError> {
        let ps = self.apply_dense(s)?;
        Ok((s.inner(&ps) - C64::new(1.0, 0.0)).norm() < tol)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.hermitian_sign() {
            Some(-1) => write!(f, "-")?,
            None => write!(f, "i^{}·", self.phase)?,
            _ => {}
        }
        if self.is_identity() {
            return write!(f, "I");
        }
        for q in self.support() {
            let c = match (self.x_bit(q), self.z_bit(q)) {
                (true, true) => 'Y',
                (true, false) => 'X',
                _ => 'Z',
            };
            write!(f, "{c}{}", q + 1)?;
        }
        Ok(())
    }
}

/// Aaronson–Gottesman tableau with destabilizers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StabilizerTableau {
    n: usize,
    destab: Vec<PauliString>,
    stab: Vec<PauliString>,
}

impl StabilizerTableau {
    /// `|0…0⟩`.
    #[must_use]
    pub fn new(n: usize) -> Self {
        let destab = (0..n).map(|q| PauliString::single(n, q, true, false, 0)).collect();
        let stab = (0..n).map(|q| PauliString::single(n, q, false, true, 0)).collect();
        Self { n, destab, stab }
    }

    #[must_use]
    pub fn n(&self) -> usize {
        self.n
    }

    #[must_use]
    pub fn generators(&self) -> &[PauliString] {
        &self.stab
    }

    pub fn apply(&mut self, g: &Gate) -> Result<(), CliffordError> {
        if !g.is_clifford() {
            return Err(CliffordError::NotClifford(g.to_string()));
        }
        for p in self.destab.iter_mut().chain(self.stab.iter_mut()) {
            p.conjugate(g)?;
        }
        Ok(())
    }

    /// Measures a Hermitian Pauli; returns the outcome bit (`0` for `+1`).
    pub fn measure(&mut self, p: &PauliString, forced: Option<u8>, rng: &mut dyn RngCore) -> Result<u8, CliffordError> {
        if p.n != self.n {
            return Err(CliffordError::SizeMismatch(p.n, self.n));
        }
        let Some(pivot) = self.stab.iter().position(|s| !s.commutes(p)) else {
            let bit = self.deterministic_value(p);
            if forced.is_some_and(|f| f != bit) {
                return Err(CliffordError::ForcedContradiction);
            }
            return Ok(bit);
        };
        let pivot_row = self.stab[pivot].clone();
        for i in 0..self.n {
            if i != pivot && !self.stab[i].commutes(p) {
                self.stab[i] = self.stab[i].mul(&pivot_row);
            }
            if i != pivot && !self.destab[i].commutes(p) {
                self.destab[i] = self.destab[i].mul(&pivot_row);
            }
        }
        let bit = forced.unwrap_or_else(|| u8::from(rng.random::<bool>()));
        self.destab[pivot] = pivot_row;
        self.stab[pivot] = if bit == 1 { p.negated() } else { p.clone() };
        Ok(bit)
    }

    /// Outcome of a Pauli that commutes with the whole stabilizer group.
    fn deterministic_value(&self, p: &PauliString) -> u8 {
        let mut acc = PauliString::identity(self.n);
        for i in 0..self.n {
            if !self.destab[i].commutes(p) {
                acc = acc.mul(&self.stab[i]);
            }
        }
        u8::from((p.phase + 4 - acc.phase) % 4 == 2)
    }

    /// True iff `p` (with its sign) belongs to the stabilizer group.
    #[must_use]
    pub fn contains(&self, p: &PauliString) -> bool {
        if self.stab.iter().any(|s| !s.commutes(p)) {
            return false;
        }
        let mut acc = PauliString::identity(self.n);
        for i in 0..self.n {
            if !self.destab[i].commutes(p) {
                acc = acc.mul(&self.stab[i]);
            }
        }
        acc.same_support_pattern(p) && acc.phase == p.phase
    }

    /// Dense statevector of the stabilizer state, for `n <= 20`.
    pub fn to_dense(&self) -> Result<DenseState, CliffordError> {
        if self.n > 20 {
            return Err(CliffordError::TooLarge(self.n));
        }
        let dim = 1usize << self.n;
        let mut best = DenseState::zero(self.n);
        for seed in 0..dim {
            let mut v = DenseState::basis(self.n, seed);
            let mut ok = true;
            for g in &self.stab {
                let gv = g.apply_dense(&v).map_err(|_| CliffordError::NotUnitary);
                let Ok(gv) = gv else { ok = false; break };
                let amps: Vec<C64> =
                    v.amplitudes().iter().zip(gv.amplitudes()).map(|(a, b)| (a + b) * 0.5).collect();
                match DenseState::normalized(amps) {
                    Ok(s) => v = s,
                    Err(_) => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                best = v;
                break;
            }
        }
        Ok(best)
    }
}

/// GF(2) rank of the symplectic parts.
#[must_use]
pub fn symplectic_rank(ps: &[PauliString]) -> usize {
    let mut rows: Vec<Vec<u64>> = ps.iter().map(|p| p.x.iter().chain(&p.z).copied().collect()).collect();
    let bits = rows.first().map_or(0, |r| r.len() * 64);
    let mut rank = 0;
    for col in 0..bits {
        let (w, m) = (col / 64, 1u64 << (col % 64));
        let Some(r) = (rank..rows.len()).find(|&r| rows[r][w] & m != 0) else { continue };
        rows.swap(rank, r);
        let pivot = rows[rank].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i != rank && row[w] & m != 0 {
                row.iter_mut().zip(&pivot).for_each(|(a, b)| *a ^= b);
            }
        }
        rank += 1;
    }
    rank
}

/// True iff the listed Paulis generate exactly the tableau's stabilizer group.
#[must_use]
pub fn generates_group(t: &StabilizerTableau, list: &[PauliString]) -> bool {
    list.iter().all(|p| t.contains(p)) && symplectic_rank(list) == t.n()
}

/// Square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub dim: usize,
    pub data: Vec<C64>,
}

impl Matrix {
    #[must_use]
    pub fn identity(dim: usize) -> Self {
        let mut data = vec![C64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            data[i * dim + i] = C64::new(1.0, 0.0);
        }
        Self { dim, data }
    }

    #[must_use]
    pub fn diagonal(d: &[C64]) -> Self {
        let mut m = Self::identity(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.data[i * d.len() + i] = v;
        }
        m
    }

    /// Matrix of a gate list on `n` qubits (column `j` is the image of `|j⟩`).
    pub fn from_gates(n: usize, gates: &[Gate]) -> Result<Self, CliffordError> {
        let dim = 1usize << n;
        let mut m = Self { dim, data: vec![C64::new(0.0, 0.0); dim * dim] };
        for j in 0..dim {
            let mut s = DenseState::basis(n, j);
            s.apply_gates(gates)?;
            for (i, a) in s.amplitudes().iter().enumerate() {
                m.data[i * dim + j] = *a;
            }
        }
        Ok(m)
    }

    #[must_use]
    pub fn at(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.dim + j]
    }

    #[must_use]
    pub fn mul(&self, o: &Matrix) -> Matrix {
        let d = self.dim;
        let mut data = vec![C64::new(0.0, 0.0); d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..d {
                    data[i * d + j] += a * o.data[k * d + j];
                }
            }
        }
        Matrix { dim: d, data }
    }

    #[must_use]
    pub fn adjoint(&self) -> Matrix {
        let d = self.dim;
        let mut data = vec![C64::new(0.0, 0.0); d * d];
        for i in 0..d {
            for j in 0..d {
                data[j * d + i] = self.data[i * d + j].conj();
            }
        }
        Matrix { dim: d, data }
    }

    #[must_use]
    pub fn scale(&self, c: C64) -> Matrix {
        Matrix { dim: self.dim, data: self.data.iter().map(|a| a * c).collect() }
    }

    #[must_use]
    pub fn max_abs_diff(&self, o: &Matrix) -> f64 {
        self.data.iter().zip(&o.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    #[must_use]
    pub fn is_unitary(&self, tol: f64) -> bool {
        self.mul(&self.adjoint()).max_abs_diff(&Matrix::identity(self.dim)) < tol
    }

    fn as_monomial(&self, tol: f64) -> Option<Monomial> {
        let d = self.dim;
        let mut perm = vec![usize::MAX; d];
        let mut phase = vec![C64::new(0.0, 0.0); d];
        for j in 0..d {
            for i in 0..d {
                let a = self.data[i * d + j];
                if a.norm() > tol {
                    if perm[j] != usize::MAX {
                        return None;
                    }
                    perm[j] = i;
                    phase[j] = a;
                }
            }
            if perm[j] == usize::MAX {
                return None;
            }
        }
        Some(Monomial { perm, phase })
    }
}

/// `U|j⟩ = phase[j] |perm[j]⟩`.
#[derive(Clone, Debug, PartialEq)]
struct Monomial {
    perm: Vec<usize>,
    phase: Vec<C64>,
}

impl Monomial {
    fn pauli(n: usize, xm: usize, zm: usize) -> Self {
        let d = 1usize << n;
        Self {
            perm: (0..d).map(|j| j ^ xm).collect(),
            phase: (0..d)
                .map(|j| C64::new(if (j & zm).count_ones() % 2 == 1 { -1.0 } else { 1.0 }, 0.0))
                .collect(),
        }
    }

    /// `self ∘ o`.
    fn compose(&self, o: &Monomial) -> Monomial {
        Monomial {
            perm: o.perm.iter().map(|&k| self.perm[k]).collect(),
            phase: o.perm.iter().zip(&o.phase).map(|(&k, &p)| self.phase[k] * p).collect(),
        }
    }

    fn adjoint(&self) -> Monomial {
        let mut perm = vec![0; self.perm.len()];
        let mut phase = vec![C64::new(0.0, 0.0); self.perm.len()];
        for (j, (&i, &p)) in self.perm.iter().zip(&self.phase).enumerate() {
            perm[i] = j;
            phase[i] = p.conj();
        }
        Monomial { perm, phase }
    }

    fn is_pauli(&self, tol: f64) -> bool {
        let d = self.perm.len();
        let xm = self.perm[0];
        let p0 = self.phase[0];
        let mut zm = 0usize;
        let mut bit = 1usize;
        while bit < d {
            if (self.phase[bit] / p0 + C64::new(1.0, 0.0)).norm() < tol {
                zm |= bit;
            }
            bit <<= 1;
        }
        (0..d).all(|j| {
            let s = if (j & zm).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
            self.perm[j] == j ^ xm && (self.phase[j] / p0 - C64::new(s, 0.0)).norm() < tol
        })
    }

    fn key(&self) -> Vec<i64> {
        let p0 = self.phase[0];
        let mut k: Vec<i64> = self.perm.iter().map(|&p| p as i64).collect();
        for p in &self.phase {
            let r = p / p0;
            k.push((r.re * 1e8).round() as i64);
            k.push((r.im * 1e8).round() as i64);
        }
        k
    }
}

/// Level search limited to this many qubits.
pub const MAX_HIERARCHY_QUBITS: usize = 4;
const HIER_TOL: f64 = 1e-9;

/// Smallest `K <= kmax` with `U ∈ C_K` (up to global phase), or `None` if above `kmax`.
pub fn hierarchy_level(u: &Matrix, kmax: usize) -> Result<Option<usize>, CliffordError> {
    if !u.dim.is_power_of_two() {
        return Err(CliffordError::NotUnitary);
    }
    let n = u.dim.trailing_zeros() as usize;
    if !u.is_unitary(1e-9) {
        return Err(CliffordError::NotUnitary);
    }
    if let Some(m) = u.as_monomial(HIER_TOL) {
        if m.is_pauli(HIER_TOL) {
            return Ok(Some(0));
        }
        if n > MAX_HIERARCHY_QUBITS {
            return Err(CliffordError::TooLarge(n));
        }
        let mut memo = HashMap::new();
        for k in 1..=kmax {
            if monomial_in_level(&m, n, k, &mut memo) {
                return Ok(Some(k));
            }
        }
        return Ok(None);
    }
    if n > MAX_HIERARCHY_QUBITS {
        return Err(CliffordError::TooLarge(n));
    }
    for k in 0..=kmax {
        if dense_in_level(u, n, k) {
            return Ok(Some(k));
        }
    }
    Ok(None)
}

/// True iff `u` is a Pauli operator up to phase; works on any size.
#[must_use]
pub fn is_pauli_up_to_phase(u: &Matrix) -> bool {
    u.as_monomial(HIER_TOL).is_some_and(|m| m.is_pauli(HIER_TOL))
}

fn monomial_in_level(u: &Monomial, n: usize, k: usize, memo: &mut HashMap<(Vec<i64>, usize), bool>) -> bool {
    if u.is_pauli(HIER_TOL) {
        return true;
    }
    if k == 0 {
        return false;
    }
    let key = (u.key(), k);
    if let Some(&v) = memo.get(&key) {
        return v;
    }
    let ud = u.adjoint();
    let d = 1usize << n;
    let mut ok = true;
    'outer: for xm in 0..d {
        for zm in 0..d {
            if xm == 0 && zm == 0 {
                continue;
            }
            let v = u.compose(&Monomial::pauli(n, xm, zm)).compose(&ud);
            if !monomial_in_level(&v, n, k - 1, memo) {
                ok = false;
                break 'outer;
            }
        }
    }
    memo.insert(key, ok);
    ok
}

fn pauli_matrix(n: usize, xm: usize, zm: usize) -> Matrix {
    let d = 1usize << n;
    let mut m = Matrix { dim: d, data: vec![C64::new(0.0, 0.0); d * d] };
    for j in 0..d {
        let s = if (j & zm).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
        m.data[(j ^ xm) * d + j] = C64::new(s, 0.0);
    }
    m
}

fn dense_is_pauli(u: &Matrix, n: usize) -> bool {
    let d = 1usize << n;
    for xm in 0..d {
        for zm in 0..d {
            let tr: C64 = (0..d)
                .map(|j| {
                    let s = if (j & zm).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
                    u.at(j ^ xm, j) * s
                })
                .sum();
            if (tr.norm() - d as f64).abs() < 1e-7 {
                return true;
            }
        }
    }
    false
}

fn dense_in_level(u: &Matrix, n: usize, k: usize) -> bool {
    if dense_is_pauli(u, n) {
        return true;
    }
    if k == 0 {
        return false;
    }
    let ud = u.adjoint();
    let d = 1usize << n;
    (0..d).all(|xm| {
        (0..d).all(|zm| {
            (xm == 0 && zm == 0) || dense_in_level(&u.mul(&pauli_matrix(n, xm, zm)).mul(&ud), n, k - 1)
        })
    })
}

/// `C_{m}Z` on `m + 1` qubits: phase `-1` on `|1…1⟩`.
#[must_use]
pub fn controlled_z(m: usize) -> Matrix {
    let d = 1usize << (m + 1);
    let mut diag = vec![C64::new(1.0, 0.0); d];
    diag[d - 1] = C64::new(-1.0, 0.0);
    Matrix::diagonal(&diag)
}

/// `exp(-i Z π / 2^{n+1})`: the family with `T_0 = -iZ` and `T_2 = T`.
#[must_use]
pub fn t_gate_family(n: u32) -> Matrix {
    z_rotation(std::f64::consts::PI / f64::from(1u32 << (n + 1)))
}

/// `exp(-i Z π / 2^n)`, the exponent read literally.
#[must_use]
pub fn t_gate_literal(n: u32) -> Matrix {
    z_rotation(std::f64::consts::PI / f64::from(1u32 << n))
}

fn z_rotation(theta: f64) -> Matrix {
    Matrix::diagonal(&[C64::from_polar(1.0, -theta), C64::from_polar(1.0, theta)])
}

/// `U|x, B⟩ = |x, B ⊕ D_x⟩` with the address on qubits `0..logN` and the bus on qubit `logN`.
pub fn qram_dense(d: &Dataset) -> Result<Matrix, CliffordError> {
    let log_n = log2_exact(d.len())? as usize;
    let dim = 2 * d.len();
    let mut m = Matrix { dim, data: vec![C64::new(0.0, 0.0); dim * dim] };
    for j in 0..dim {
        let x = j & (d.len() - 1);
        let i = j ^ (usize::from(d.get(x)) << log_n);
        m.data[i * dim + j] = C64::new(1.0, 0.0);
    }
    Ok(m)
}

/// `W_D = ⊗_l Z^{D_l}` on `N` qubits.
#[must_use]
pub fn load_operator(d: &Dataset) -> Matrix {
    let diag: Vec<C64> = (0..1usize << d.len())
        .map(|j| {
            let par = (0..d.len()).filter(|&l| d.get(l) == 1 && (j >> l) & 1 == 1).count() % 2;
            C64::new(if par == 1 { -1.0 } else { 1.0 }, 0.0)
        })
        .collect();
    Matrix::diagonal(&diag)
}

/// Memory with `D_x = 0` only at `x = 1…1`.
#[must_use]
pub fn adversarial_dataset(n: usize) -> Dataset {
    let mut d = Dataset::filled(n, 1);
    d.set(n - 1, 0);
    d
}

/// Checks `U Z_bus U† = ± Z_bus C_{logN-1}Z` for the adversarial memory.
///
/// Returns the sign found, or `None` if neither sign matches within `1e-12`.
pub fn conjugation_identity_check(n: usize) -> Result<Option<i8>, CliffordError> {
    let log_n = log2_exact(n)? as usize;
    let u = qram_dense(&adversarial_dataset(n))?;
    let dim = 2 * n;
    let zbus: Vec<C64> =
        (0..dim).map(|j| C64::new(if (j >> log_n) & 1 == 1 { -1.0 } else { 1.0 }, 0.0)).collect();
    let lhs = u.mul(&Matrix::diagonal(&zbus)).mul(&u.adjoint());
    let rhs_diag: Vec<C64> = (0..dim)
        .map(|j| {
            let all_ones = j & (n - 1) == n - 1;
            zbus[j] * if all_ones { -1.0 } else { 1.0 }
        })
        .collect();
    let rhs = Matrix::diagonal(&rhs_diag);
    for sign in [-1i8, 1] {
        if lhs.max_abs_diff(&rhs.scale(C64::new(f64::from(sign), 0.0))) < 1e-12 {
            return Ok(Some(sign));
        }
    }
    Ok(None)
}

/// Graph-state generators `X_v Π_{w ~ v} Z_w` for a path given by 1-based labels.
#[must_use]
pub fn linear_graph_generators(order: &[usize], n: usize) -> Vec<PauliString> {
    (0..order.len())
        .map(|i| {
            let mut ops = vec![(order[i] - 1, 'X')];
            if i > 0 {
                ops.push((order[i - 1] - 1, 'Z'));
            }
            if i + 1 < order.len() {
                ops.push((order[i + 1] - 1, 'Z'));
            }
            PauliString::from_sparse(n, &ops, false)
        })
        .collect()
}

/// Eight-qubit inversion resource for `N = 2`, labelled 1..8.
///
/// Qubits 1–3 are the input port, 4–6 the inversion register (4 = control, 5 = target,
/// 6 = scratch), 7–8 the ancilla pair. Returns the gate list applied to `|0…0⟩`.
#[must_use]
pub fn phi2_n2_gates() -> Vec<Gate> {
    let q = |label: usize| label - 1;
    let mut g = Vec::new();
    for (a, b) in [(1, 4), (2, 5), (3, 6), (7, 8)] {
        g.push(Gate::H(q(a)));
        g.push(Gate::H(q(b)));
        g.push(Gate::Cz(q(a), q(b)));
    }
    g.push(Gate::Cnot { control: q(6), target: q(5) });
    g.push(Gate::Cz(q(4), q(7)));
    g.push(Gate::Cz(q(5), q(8)));
    g
}

/// Outcome of the `N = 2` graph-state verification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphStateReport {
    /// Each listed pre-measurement generator stabilizes the state.
    pub pre_listed: Vec<(String, bool)>,
    /// The listed pre-measurement set generates the full group.
    pub pre_generates: bool,
    /// After `X_6` and `H_3` the linear chain 1-4-7-8-5-2-3 generates the group.
    pub chain_generates: bool,
    /// A `-1` outcome on `X_6` is undone by `X_3`.
    pub minus_fixed_by_x3: bool,
    /// Tableau and dense constructions agree.
    pub dense_matches: bool,
}

impl GraphStateReport {
    #[must_use]
    pub fn passed(&self) -> bool {
        self.pre_listed.iter().all(|(_, ok)| *ok)
            && self.pre_generates
            && self.chain_generates
            && self.minus_fixed_by_x3
            && self.dense_matches
    }
}

/// Pre-measurement generators of the `N = 2` state.
///
/// `X6 Z3 X5` alone anticommutes with `X8 Z5 Z7`; the commuting completion carries `Z8`.
pub const PHI2_N2_PRE: [&str; 8] =
    ["X1Z4", "X4Z1Z7", "X5Z2Z8", "X7Z4Z8", "X8Z5Z7", "X2Z5Z6", "X3Z6", "X6Z3X5Z8"];

pub fn verify_phi2_linear_graph() -> Result<GraphStateReport, CliffordError> {
    let n = 8;
    let mut rng = rand::rng();
    let mut t = StabilizerTableau::new(n);
    for g in phi2_n2_gates() {
        t.apply(&g)?;
    }
    let pre: Vec<PauliString> =
        PHI2_N2_PRE.iter().map(|s| PauliString::parse_one_based(s, n)).collect::<Result<_, _>>()?;
    let pre_listed = PHI2_N2_PRE.iter().zip(&pre).map(|(s, p)| (s.to_string(), t.contains(p))).collect();
    let pre_generates = generates_group(&t, &pre);

    let mut dense = DenseState::zero(n);
    dense.apply_gates(&phi2_n2_gates())?;
    let mut dense_matches = true;
    for p in t.generators() {
        dense_matches &= p.stabilizes(&dense, 1e-10)?;
    }

    let x6 = PauliString::parse_one_based("X6", n)?;
    let mut plus = t.clone();
    plus.measure(&x6, Some(0), &mut rng)?;
    plus.apply(&Gate::H(2))?;
    let mut chain = linear_graph_generators(&[1, 4, 7, 8, 5, 2, 3], n);
    chain.push(x6.clone());
    let chain_generates = generates_group(&plus, &chain);

    let mut minus = t.clone();
    minus.measure(&x6, Some(1), &mut rng)?;
    minus.apply(&Gate::X(2))?;
    minus.apply(&Gate::Z(5))?;
    let mut reference = t;
    reference.measure(&x6, Some(0), &mut rng)?;
    let minus_fixed_by_x3 = reference.generators().iter().all(|p| minus.contains(p));

    Ok(GraphStateReport { pre_listed, pre_generates, chain_generates, minus_fixed_by_x3, dense_matches })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pauli_products() {
        let n = 1;
        let x = PauliString::from_sparse(n, &[(0, 'X')], false);
        let z = PauliString::from_sparse(n, &[(0, 'Z')], false);
        let y = PauliString::from_sparse(n, &[(0, 'Y')], false);
        assert!(!x.commutes(&z));
        assert_eq!(x.mul(&z).negated().hermitian_sign(), None);
        assert_eq!(z.mul(&x).mul(&y.negated()).phase(), 3);
        assert_eq!(y.mul(&y).phase(), 0);
        assert_eq!(y.to_string(), "Y1");
    }

    #[test]
    fn parse_labels() {
        let p = PauliString::parse_one_based("-X6Z3X5", 8).unwrap();
        assert_eq!(p.to_string(), "-Z3X5X6");
        assert!(PauliString::parse_one_based("X9", 8).is_err());
    }

    #[test]
    fn graph_state_from_h_and_cz() {
        let mut t = StabilizerTableau::new(3);
        for g in [Gate::H(0), Gate::H(1), Gate::H(2), Gate::Cz(0, 1), Gate::Cz(1, 2)] {
            t.apply(&g).unwrap();
        }
        assert!(generates_group(&t, &linear_graph_generators(&[1, 2, 3], 3)));
    }

    #[test]
    fn measurement_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut t = StabilizerTableau::new(2);
        let z0 = PauliString::from_sparse(2, &[(0, 'Z')], false);
        assert_eq!(t.measure(&z0, None, &mut rng).unwrap(), 0);
        assert!(t.measure(&z0, Some(1), &mut rng).is_err());
        let x0 = PauliString::from_sparse(2, &[(0, 'X')], false);
        let mut counts = [0; 2];
        for _ in 0..400 {
            let mut t = StabilizerTableau::new(2);
            counts[t.measure(&x0, None, &mut rng).unwrap() as usize] += 1;
        }
        assert!(counts[0] > 150 && counts[1] > 150);
    }

    #[test]
    fn tableau_matches_dense_on_random_cliffords() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [3, 6, 10] {
            let mut t = StabilizerTableau::new(n);
            let mut s = DenseState::zero(n);
            for _ in 0..40 {
                let a = rng.random_range(0..n);
                let b = (a + rng.random_range(1..n)) % n;
                let g = match rng.random_range(0..6) {
                    0 => Gate::H(a),
                    1 => Gate::X(a),
                    2 => Gate::Z(a),
                    3 => Gate::Cz(a, b),
                    4 => Gate::Cnot { control: a, target: b },
                    _ => Gate::Swap(a, b),
                };
                t.apply(&g).unwrap();
                s.apply_gate(&g).unwrap();
            }
            for p in t.generators() {
                assert!(p.stabilizes(&s, 1e-10).unwrap(), "{p}");
            }
        }
    }

    #[test]
    fn hierarchy_levels() {
        let z = Matrix::diagonal(&[C64::new(1.0, 0.0), C64::new(-1.0, 0.0)]);
        assert_eq!(hierarchy_level(&z, 3).unwrap(), Some(0));
        assert_eq!(hierarchy_level(&controlled_z(1), 3).unwrap(), Some(1));
        assert_eq!(hierarchy_level(&controlled_z(2), 3).unwrap(), Some(2));
        let h = Matrix::from_gates(1, &[Gate::H(0)]).unwrap();
        assert_eq!(hierarchy_level(&h, 2).unwrap(), Some(1));
        let cnot = Matrix::from_gates(2, &[Gate::Cnot { control: 0, target: 1 }]).unwrap();
        assert_eq!(hierarchy_level(&cnot, 2).unwrap(), Some(1));
        for n in 0..=3 {
            assert_eq!(hierarchy_level(&t_gate_family(n), 4).unwrap(), Some(n as usize));
        }
        assert_eq!(hierarchy_level(&t_gate_literal(2), 4).unwrap(), Some(1));
    }

    #[test]
    fn qram_matrix() {
        let zero = qram_dense(&Dataset::zeros(4)).unwrap();
        assert!(zero.max_abs_diff(&Matrix::identity(8)) < 1e-15);
        let d = Dataset::from_bits(&[1, 0]).unwrap();
        let u = qram_dense(&d).unwrap();
        assert_eq!(u.at(2, 0), C64::new(1.0, 0.0));
        assert_eq!(u.at(1, 1), C64::new(1.0, 0.0));
        assert!(u.mul(&u).max_abs_diff(&Matrix::identity(4)) < 1e-15);
    }

    #[test]
    fn conjugation_identity() {
        assert_eq!(conjugation_identity_check(2).unwrap(), Some(-1));
        assert_eq!(conjugation_identity_check(4).unwrap(), Some(-1));
        assert_eq!(conjugation_identity_check(8).unwrap(), Some(-1));
    }

    #[test]
    fn graph_state_n2() {
        let r = verify_phi2_linear_graph().unwrap();
        assert!(r.passed(), "{r:?}");
        let printed = PauliString::parse_one_based("X6Z3X5", 8).unwrap();
        let other = PauliString::parse_one_based("X8Z5Z7", 8).unwrap();
        assert!(!printed.commutes(&other));
    }
}
