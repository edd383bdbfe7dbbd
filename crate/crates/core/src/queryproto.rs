//! The Clifford query: resource-state assembly, gate teleportation, adaptive loading and
//! measurement-based NOHE inversion.
//!
//! Dense routines address qubits through global labels (see [`RegisterLayout`]) so that
//! measured qubits can be dropped from the statevector as the protocol proceeds.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{build_nohe_sequential, register_size, sector_head, CircuitError, Gate};
use crate::cliffordlab::{CliffordError, PauliString, StabilizerTableau};
use crate::densesim::{Basis, BellOutcome, DenseError, DenseState, Outcome, C64};
use crate::encoding::{load_bits, log2_exact, Dataset, EncodingError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("N = {0} is too large for this routine")]
    TooLarge(usize),
    #[error("qubit label {0} is not in the register")]
    Label(usize),
    #[error("input has {got} qubits, expected {expected}")]
    Size { expected: usize, got: usize },
    #[error("state leaks {0:e} weight outside the kept register")]
    Leak(f64),
    #[error(transparent)]
    Dense(#[from] DenseError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Clifford(#[from] CliffordError),
}

/// One Fredkin gadget `TOFFOLI(a,b;c)`, `CNOT(c;b)` in encoding-register coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gadget {
    pub a: usize,
    pub b: usize,
    pub c: usize,
}

/// Gadgets of the encoding circuit in inversion order (last forward gadget first).
pub fn inversion_program(n: usize, with_bus: bool) -> Result<Vec<Gadget>, QueryError> {
    let c = build_nohe_sequential(n, with_bus)?;
    let mut out: Vec<Gadget> = c
        .gates
        .iter()
        .filter_map(|g| match *g {
            Gate::Fredkin { control, t0, t1 } => Some(Gadget { a: control, b: t0, c: t1 }),
            _ => None,
        })
        .collect();
    out.reverse();
    Ok(out)
}

/// Sector heads, which carry the address bits (and the bus) after inversion.
pub fn output_heads(n: usize, with_bus: bool) -> Result<Vec<usize>, QueryError> {
    let log_n = log2_exact(n)?;
    let top = if with_bus { log_n } else { log_n - 1 };
    Ok((0..=top).map(sector_head).collect())
}

/// Number of adaptive measurement rounds: the depth of the inversion program.
pub fn sqpm_rounds(n: usize, with_bus: bool) -> Result<usize, QueryError> {
    let size = register_size(n, with_bus)?;
    let mut ready = vec![0usize; size];
    let mut depth = 0;
    for g in inversion_program(n, with_bus)? {
        let t = ready[g.a].max(ready[g.b]).max(ready[g.c]) + 1;
        for q in [g.a, g.b, g.c] {
            ready[q] = t;
        }
        depth = depth.max(t);
    }
    Ok(depth)
}

/// Global qubit labels for one query.
///
/// `D`, `D'` and `D''` are virtual registers of `2N−1` qubits; after contraction the
/// survivors are `I`, `L` (the last `N` qubits of `D`), the ancilla pairs `P` and `F`
/// (the sector heads of `D''`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterLayout {
    pub n: usize,
    pub log_n: usize,
    pub program: Vec<Gadget>,
}

impl RegisterLayout {
    pub fn new(n: usize) -> Result<Self, QueryError> {
        let log_n = log2_exact(n)? as usize;
        Ok(Self { n, log_n, program: inversion_program(n, true)? })
    }

    #[must_use]
    pub fn reg_size(&self) -> usize {
        2 * self.n - 1
    }

    #[must_use]
    pub fn r(&self, i: usize) -> usize {
        i
    }

    #[must_use]
    pub fn i(&self, i: usize) -> usize {
        self.log_n + i
    }

    #[must_use]
    pub fn d(&self, q: usize) -> usize {
        2 * self.log_n + q
    }

    #[must_use]
    pub fn dp(&self, q: usize) -> usize {
        2 * self.log_n + self.reg_size() + q
    }

    #[must_use]
    pub fn dpp_base(&self) -> usize {
        2 * self.log_n + 2 * self.reg_size()
    }

    #[must_use]
    pub fn dpp(&self, q: usize) -> usize {
        self.dpp_base() + q
    }

    #[must_use]
    pub fn anc_base(&self) -> usize {
        2 * self.log_n + 3 * self.reg_size()
    }

    #[must_use]
    pub fn l(&self, l: usize) -> usize {
        self.d(self.n - 1 + l)
    }

    #[must_use]
    pub fn r_set(&self) -> Vec<usize> {
        (0..self.log_n).map(|i| self.r(i)).collect()
    }

    #[must_use]
    pub fn i_set(&self) -> Vec<usize> {
        (0..self.log_n).map(|i| self.i(i)).collect()
    }

    #[must_use]
    pub fn l_set(&self) -> Vec<usize> {
        (0..self.n).map(|l| self.l(l)).collect()
    }

    #[must_use]
    pub fn p_set(&self) -> Vec<usize> {
        (0..2 * self.program.len()).map(|k| self.anc_base() + k).collect()
    }

    /// Address heads then the bus head.
    #[must_use]
    pub fn f_set(&self) -> Vec<usize> {
        (0..=self.log_n as u32).map(|k| self.dpp(sector_head(k))).collect()
    }

    /// Resource-state qubits `I ∪ L ∪ P ∪ F`.
    #[must_use]
    pub fn a_set(&self) -> Vec<usize> {
        [self.i_set(), self.l_set(), self.p_set(), self.f_set()].concat()
    }
}

/// Statevector whose qubits carry global labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledState {
    state: DenseState,
    ids: Vec<usize>,
}

fn outcome<'a>(forced: Option<u8>, rng: &'a mut dyn RngCore) -> Outcome<'a> {
    match forced {
        Some(b) => Outcome::Force(b),
        None => Outcome::Sample(rng),
    }
}

impl LabeledState {
    pub fn new(state: DenseState, ids: Vec<usize>) -> Result<Self, QueryError> {
        if ids.len() != state.n() {
            return Err(QueryError::Size { expected: state.n(), got: ids.len() });
        }
        Ok(Self { state, ids })
    }

    #[must_use]
    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    #[must_use]
    pub fn n(&self) -> usize {
        self.ids.len()
    }

    fn pos(&self, id: usize) -> Result<usize, QueryError> {
        self.ids.iter().position(|&q| q == id).ok_or(QueryError::Label(id))
    }

    pub fn add_zero(&mut self, id: usize) {
        self.state.append_zeros(1);
        self.ids.push(id);
    }

    /// Appends `other` with the given labels on new high qubits.
    pub fn append(&mut self, other: &DenseState, ids: &[usize]) -> Result<(), QueryError> {
        if ids.len() != other.n() {
            return Err(QueryError::Size { expected: other.n(), got: ids.len() });
        }
        self.state = self.state.tensor(other);
        self.ids.extend_from_slice(ids);
        Ok(())
    }

    /// Appends the Bell pair `CZ|++⟩` on new labels `a`, `b`.
    pub fn add_bell(&mut self, a: usize, b: usize) -> Result<(), QueryError> {
        self.add_zero(a);
        self.add_zero(b);
        self.apply(&Gate::H(a))?;
        self.apply(&Gate::H(b))?;
        self.apply(&Gate::Cz(a, b))
    }

    /// Applies a gate written on labels.
    pub fn apply(&mut self, g: &Gate) -> Result<(), QueryError> {
        for q in g.qubits() {
            self.pos(q)?;
        }
        let mapped = g.map_qubits(|q| self.pos(q).expect("checked"));
        Ok(self.state.apply_gate(&mapped)?)
    }

    /// Single-qubit Pauli measurement; the qubit is removed.
    pub fn measure(
        &mut self,
        id: usize,
        basis: Basis,
        forced: Option<u8>,
        rng: &mut dyn RngCore,
    ) -> Result<u8, QueryError> {
        let p = self.pos(id)?;
        let (bit, _) = self.state.measure_discard(p, basis, outcome(forced, rng))?;
        self.ids.remove(p);
        Ok(bit)
    }

    /// Bell measurement on `(q1, q2)`; `a` is read from `q1`. Both qubits are removed.
    pub fn bell_measure(
        &mut self,
        q1: usize,
        q2: usize,
        forced: Option<BellOutcome>,
        rng: &mut dyn RngCore,
    ) -> Result<BellOutcome, QueryError> {
        let (p1, p2) = (self.pos(q1)?, self.pos(q2)?);
        let (o, _) = self.state.bell_measure(p1, p2, forced, rng)?;
        self.ids.retain(|&q| q != q1 && q != q2);
        Ok(o)
    }

    /// The state with qubit `k` = label `order[k]`; `order` must list every label.
    pub fn extract(&self, order: &[usize]) -> Result<DenseState, QueryError> {
        if order.len() != self.ids.len() {
            return Err(QueryError::Size { expected: self.ids.len(), got: order.len() });
        }
        let perm: Vec<usize> = order.iter().map(|&id| self.pos(id)).collect::<Result<_, _>>()?;
        let mut s = self.state.clone();
        s.permute(&perm);
        Ok(s)
    }
}

/// Keeps the listed qubits of a state whose other qubits are `|0⟩`.
pub fn restrict_to(s: &DenseState, keep: &[usize]) -> Result<DenseState, QueryError> {
    let mut out = vec![C64::new(0.0, 0.0); 1 << keep.len()];
    let mut leak = 0.0;
    let kept_mask: usize = keep.iter().map(|&q| 1usize << q).sum();
    for (i, a) in s.amplitudes().iter().enumerate() {
        if i & !kept_mask != 0 {
            leak += a.norm_sqr();
            continue;
        }
        let j = keep.iter().enumerate().fold(0, |acc, (k, &q)| acc | (((i >> q) & 1) << k));
        out[j] = *a;
    }
    if leak > 1e-9 {
        return Err(QueryError::Leak(leak));
    }
    Ok(DenseState::normalized(out)?)
}

/// `V = U_NOHE · H_bus` on the `2N−1`-qubit encoding register (address on `0..logN`,
/// bus on `logN`).
pub fn v_gates(n: usize) -> Result<Vec<Gate>, QueryError> {
    let log_n = log2_exact(n)? as usize;
    let mut g = vec![Gate::H(log_n)];
    g.extend(build_nohe_sequential(n, true)?.gates);
    Ok(g)
}

/// `V^{-1}`.
pub fn v_inverse_gates(n: usize) -> Result<Vec<Gate>, QueryError> {
    let mut g = v_gates(n)?;
    g.reverse();
    Ok(g)
}

/// `V P_m |ψ, 0⟩` computed directly.
pub fn v_on(psi: &DenseState, m: &GtOutcome, n: usize) -> Result<DenseState, QueryError> {
    let mut s = psi.clone();
    s.apply_gates(&m.byproduct())?;
    s.append_zeros(2 * n - 1 - psi.n());
    s.apply_gates(&v_gates(n)?)?;
    Ok(s)
}

/// Bell-measurement record `m = (a, b)`, one pair per address qubit.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GtOutcome {
    pub a: Vec<u8>,
    pub b: Vec<u8>,
}

impl GtOutcome {
    #[must_use]
    pub fn zero(log_n: usize) -> Self {
        Self { a: vec![0; log_n], b: vec![0; log_n] }
    }

    /// The `index`-th of the `4^logN` outcomes.
    #[must_use]
    pub fn from_index(index: usize, log_n: usize) -> Self {
        let a = (0..log_n).map(|i| ((index >> i) & 1) as u8).collect();
        let b = (0..log_n).map(|i| ((index >> (log_n + i)) & 1) as u8).collect();
        Self { a, b }
    }

    #[must_use]
    pub fn index(&self) -> usize {
        let log_n = self.a.len();
        let a: usize = self.a.iter().enumerate().map(|(i, &v)| usize::from(v) << i).sum();
        let b: usize = self.b.iter().enumerate().map(|(i, &v)| usize::from(v) << (log_n + i)).sum();
        a | b
    }

    /// `P_m = X^b Z^a` as a gate list on the address qubits.
    #[must_use]
    pub fn byproduct(&self) -> Vec<Gate> {
        let z = self.a.iter().enumerate().filter(|(_, &v)| v == 1).map(|(i, _)| Gate::Z(i));
        let x = self.b.iter().enumerate().filter(|(_, &v)| v == 1).map(|(i, _)| Gate::X(i));
        z.chain(x).collect()
    }

    /// `P_m^{-1}`: `X^b` first, then `Z^a`.
    #[must_use]
    pub fn correction(&self) -> Vec<Gate> {
        let mut g = self.byproduct();
        g.reverse();
        g
    }
}

/// `Φ⁽¹⁾`: Bell pairs `(I_i, D_i)` with `V` applied to `D`; `I` on qubits `0..logN`.
pub fn build_phi1(n: usize) -> Result<DenseState, QueryError> {
    if n > 8 {
        return Err(QueryError::TooLarge(n));
    }
    let log_n = log2_exact(n)? as usize;
    let mut s = DenseState::zero(log_n + 2 * n - 1);
    for i in 0..log_n {
        s.apply_gates(&[Gate::H(i), Gate::H(log_n + i), Gate::Cz(i, log_n + i)])?;
    }
    let v: Vec<Gate> = v_gates(n)?.iter().map(|g| g.map_qubits(|q| q + log_n)).collect();
    s.apply_gates(&v)?;
    Ok(s)
}

/// Teleports `ψ` through `Φ⁽¹⁾`; returns `m` and the state `V P_m |ψ,0⟩` on `2N−1` qubits.
pub fn gate_teleport(
    psi: &DenseState,
    phi1: &DenseState,
    forced: Option<&GtOutcome>,
    rng: &mut dyn RngCore,
) -> Result<(GtOutcome, DenseState), QueryError> {
    let log_n = psi.n();
    let n = 1usize << log_n;
    if phi1.n() != log_n + 2 * n - 1 {
        return Err(QueryError::Size { expected: log_n + 2 * n - 1, got: phi1.n() });
    }
    let mut reg = LabeledState::new(psi.clone(), (0..log_n).collect())?;
    reg.append(phi1, &(log_n..2 * log_n + 2 * n - 1).collect::<Vec<_>>())?;
    let mut m = GtOutcome::zero(log_n);
    for i in 0..log_n {
        let f = forced.map(|o| BellOutcome { a: o.a[i], b: o.b[i] });
        let o = reg.bell_measure(i, log_n + i, f, rng)?;
        m.a[i] = o.a;
        m.b[i] = o.b;
    }
    let out = reg.extract(&(2 * log_n..2 * log_n + 2 * n - 1).collect::<Vec<_>>())?;
    Ok((m, out))
}

/// `W_D(m)`: `Z` on `L`-qubit `l` iff `D[l ⊕ μ(b)] = 1`.
pub fn adaptive_load(d: &Dataset, b: &[u8]) -> Result<Vec<Gate>, QueryError> {
    let bits = load_bits(d, b)?;
    Ok((0..bits.len()).filter(|&l| bits.get(l) == 1).map(Gate::Z).collect())
}

/// How the ancilla measurements of the inversion are scheduled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InversionMode {
    /// Each gadget is inverted completely, with its correction applied, before the next.
    Adaptive,
    /// All Clifford steps and `X` measurements first, then adaptive single-qubit
    /// measurements with Pauli-frame bookkeeping.
    Frame,
}

/// Z-only Pauli frame over the encoding register.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PauliFrame {
    pub z: PauliString,
}

impl PauliFrame {
    #[must_use]
    pub fn new(n: usize) -> Self {
        Self { z: PauliString::identity(n) }
    }

    pub fn toggle_z(&mut self, q: usize) {
        let v = self.z.z_bit(q);
        self.z.set(q, false, !v);
    }

    #[must_use]
    pub fn has_z(&self, q: usize) -> bool {
        self.z.z_bit(q)
    }

    /// Pushes the frame through `CNOT(c;b)` and the `X` measurement of `c`.
    ///
    /// Returns whether the recorded `X` outcome on `c` must be flipped.
    pub fn through_gadget(&mut self, g: &Gadget) -> bool {
        if self.has_z(g.b) {
            self.toggle_z(g.c);
        }
        let flip = self.has_z(g.c);
        if flip {
            self.toggle_z(g.c);
        }
        flip
    }
}

/// One adaptive single-qubit-measurement step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SqpmRecord {
    pub gadget: usize,
    pub s0_recorded: u8,
    pub s0_effective: u8,
    pub basis: Basis,
    pub alpha: u8,
    pub beta: u8,
}

/// Labels used when running the inversion inside a larger register.
#[derive(Clone, Copy, Debug)]
struct InvLabels {
    reg: usize,
    anc: usize,
}

/// Clifford part of one gadget inversion up to and including the `X` measurement of `c`.
fn cnohe_step(
    st: &mut LabeledState,
    k: usize,
    g: &Gadget,
    lab: InvLabels,
    forced_s0: Option<u8>,
    rng: &mut dyn RngCore,
) -> Result<u8, QueryError> {
    let (a, b, c) = (lab.reg + g.a, lab.reg + g.b, lab.reg + g.c);
    let (p, q) = (lab.anc + 2 * k, lab.anc + 2 * k + 1);
    st.apply(&Gate::Cnot { control: c, target: b })?;
    st.add_bell(p, q)?;
    st.apply(&Gate::Cz(a, p))?;
    st.apply(&Gate::Cz(b, q))?;
    st.measure(c, Basis::X, forced_s0, rng)
}

/// Ancilla measurements of one gadget; returns `(basis, α, β)` and the `Z` corrections
/// on `a` and `b`.
fn sqpm_step(
    st: &mut LabeledState,
    k: usize,
    s0: u8,
    lab: InvLabels,
    rng: &mut dyn RngCore,
) -> Result<(Basis, u8, u8, u8, u8), QueryError> {
    let basis = if s0 == 0 { Basis::Z } else { Basis::X };
    let alpha = st.measure(lab.anc + 2 * k, basis, None, rng)?;
    let beta = st.measure(lab.anc + 2 * k + 1, basis, None, rng)?;
    let (za, zb) = if s0 == 0 { (alpha, beta) } else { (beta, alpha) };
    Ok((basis, alpha, beta, za, zb))
}

fn run_inversion(
    st: &mut LabeledState,
    program: &[Gadget],
    lab: InvLabels,
    mode: InversionMode,
    forced_s0: Option<&[u8]>,
    frame: &mut PauliFrame,
    rng: &mut dyn RngCore,
) -> Result<(Vec<u8>, Vec<SqpmRecord>), QueryError> {
    let mut s0 = Vec::with_capacity(program.len());
    let mut log = Vec::with_capacity(program.len());
    match mode {
        InversionMode::Adaptive => {
            for (k, g) in program.iter().enumerate() {
                let s = cnohe_step(st, k, g, lab, forced_s0.map(|f| f[k]), rng)?;
                let (basis, alpha, beta, za, zb) = sqpm_step(st, k, s, lab, rng)?;
                if za == 1 {
                    st.apply(&Gate::Z(lab.reg + g.a))?;
                }
                if zb == 1 {
                    st.apply(&Gate::Z(lab.reg + g.b))?;
                }
                s0.push(s);
                log.push(SqpmRecord { gadget: k, s0_recorded: s, s0_effective: s, basis, alpha, beta });
            }
        }
        InversionMode::Frame => {
            for (k, g) in program.iter().enumerate() {
                s0.push(cnohe_step(st, k, g, lab, forced_s0.map(|f| f[k]), rng)?);
            }
            sqpm_rounds_with_frame(st, program, lab, &s0, frame, &mut log, rng)?;
        }
    }
    Ok((s0, log))
}

fn sqpm_rounds_with_frame(
    st: &mut LabeledState,
    program: &[Gadget],
    lab: InvLabels,
    s0: &[u8],
    frame: &mut PauliFrame,
    log: &mut Vec<SqpmRecord>,
    rng: &mut dyn RngCore,
) -> Result<(), QueryError> {
    for (k, g) in program.iter().enumerate() {
        let eff = s0[k] ^ u8::from(frame.through_gadget(g));
        let (basis, alpha, beta, za, zb) = sqpm_step(st, k, eff, lab, rng)?;
        if za == 1 {
            frame.toggle_z(g.a);
        }
        if zb == 1 {
            frame.toggle_z(g.b);
        }
        log.push(SqpmRecord { gadget: k, s0_recorded: s0[k], s0_effective: eff, basis, alpha, beta });
    }
    Ok(())
}

/// Result of a standalone inversion.
#[derive(Clone, Debug, PartialEq)]
pub struct InversionResult {
    /// Address heads (then the bus head, with bus) in order.
    pub state: DenseState,
    pub s0: Vec<u8>,
    pub log: Vec<SqpmRecord>,
}

/// `U_NOHE^{-1}` by measurement-based gadget inversion.
///
/// `s` lives on the encoding register (`2N−1` qubits with bus, `N−1` without). Dense
/// limits: `N ≤ 4` with bus, `N ≤ 8` without.
pub fn invert_nohe(
    s: &DenseState,
    n: usize,
    with_bus: bool,
    mode: InversionMode,
    forced_s0: Option<&[u8]>,
    rng: &mut dyn RngCore,
) -> Result<InversionResult, QueryError> {
    if (with_bus && n > 4) || n > 8 {
        return Err(QueryError::TooLarge(n));
    }
    let size = register_size(n, with_bus)?;
    if s.n() != size {
        return Err(QueryError::Size { expected: size, got: s.n() });
    }
    let program = inversion_program(n, with_bus)?;
    let mut st = LabeledState::new(s.clone(), (0..size).collect())?;
    let lab = InvLabels { reg: 0, anc: size };
    let mut frame = PauliFrame::new(size);
    let (s0, log) = run_inversion(&mut st, &program, lab, mode, forced_s0, &mut frame, rng)?;
    let heads = output_heads(n, with_bus)?;
    for &h in &heads {
        if frame.has_z(h) {
            st.apply(&Gate::Z(h))?;
        }
    }
    Ok(InversionResult { state: st.extract(&heads)?, s0, log })
}

/// Inverts one gadget on labels `(i, j, k)` of a register, with a fresh ancilla pair.
///
/// Returns the state without `k` and the ancillas, plus the recorded `s₀`.
pub fn invert_gadget(
    s: &DenseState,
    triple: (usize, usize, usize),
    forced_s0: Option<u8>,
    rng: &mut dyn RngCore,
) -> Result<(DenseState, u8), QueryError> {
    let n = s.n();
    let mut st = LabeledState::new(s.clone(), (0..n).collect())?;
    let g = Gadget { a: triple.0, b: triple.1, c: triple.2 };
    let lab = InvLabels { reg: 0, anc: n };
    let s0 = cnohe_step(&mut st, 0, &g, lab, forced_s0, rng)?;
    let (_, _, _, za, zb) = sqpm_step(&mut st, 0, s0, lab, rng)?;
    if za == 1 {
        st.apply(&Gate::Z(g.a))?;
    }
    if zb == 1 {
        st.apply(&Gate::Z(g.b))?;
    }
    let keep: Vec<usize> = (0..n).filter(|&q| q != g.c).collect();
    Ok((st.extract(&keep)?, s0))
}

/// How contraction outcomes are handled while assembling `Φ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhiMode {
    /// Force every contraction outcome to `+1`.
    Postselect,
    /// Sample outcomes and apply the corresponding Pauli correction.
    Frame,
}

/// The assembled resource state `Φ` on `I ∪ L ∪ P ∪ F`.
#[derive(Clone, Debug)]
pub struct ResourceState {
    pub layout: RegisterLayout,
    pub mode: PhiMode,
    /// `X` outcomes on the `c` qubits of the inversion program.
    pub s0: Vec<u8>,
    /// Bell outcomes on the first `N−1` positions then `X` outcomes on the `L` partners.
    pub contraction: Vec<(u8, u8)>,
    state: LabeledState,
}

impl ResourceState {
    /// Statevector ordered as `I, L, P, F`.
    pub fn canonical_state(&self) -> Result<DenseState, QueryError> {
        self.state.extract(&self.layout.a_set())
    }

    #[must_use]
    pub fn n_qubits(&self) -> usize {
        self.state.n()
    }
}

/// Contracts `Φ⁽¹⁾` with `Φ⁽²⁾`, dense, for `N ∈ {2, 4}`.
///
/// Each `(D′, D″)` Bell pair is created right before it is contracted and `C_NOHE` acts on
/// `D″` afterwards; these operations touch disjoint qubits, so the order does not change
/// the result and keeps the register small.
pub fn build_phi(
    n: usize,
    mode: PhiMode,
    forced_s0: Option<&[u8]>,
    rng: &mut dyn RngCore,
) -> Result<ResourceState, QueryError> {
    if n > 4 {
        return Err(QueryError::TooLarge(n));
    }
    let lay = RegisterLayout::new(n)?;
    let size = lay.reg_size();
    let ids: Vec<usize> = lay.i_set().into_iter().chain((0..size).map(|q| lay.d(q))).collect();
    let mut st = LabeledState::new(build_phi1(n)?, ids)?;
    let mut contraction = Vec::with_capacity(size);
    for q in 0..size {
        st.add_bell(lay.dp(q), lay.dpp(q))?;
        if q < n - 1 {
            let forced = (mode == PhiMode::Postselect).then_some(BellOutcome { a: 0, b: 0 });
            let o = st.bell_measure(lay.d(q), lay.dp(q), forced, rng)?;
            if o.b == 1 {
                st.apply(&Gate::X(lay.dpp(q)))?;
            }
            if o.a == 1 {
                st.apply(&Gate::Z(lay.dpp(q)))?;
            }
            contraction.push((o.a, o.b));
        } else {
            st.apply(&Gate::Cz(lay.d(q), lay.dp(q)))?;
            let forced = (mode == PhiMode::Postselect).then_some(0);
            let s = st.measure(lay.dp(q), Basis::X, forced, rng)?;
            if s == 1 {
                st.apply(&Gate::X(lay.dpp(q)))?;
            }
            contraction.push((s, 0));
        }
    }
    let lab = InvLabels { reg: lay.dpp_base(), anc: lay.anc_base() };
    let mut s0 = Vec::with_capacity(lay.program.len());
    for (k, g) in lay.program.iter().enumerate() {
        s0.push(cnohe_step(&mut st, k, g, lab, forced_s0.map(|f| f[k]), rng)?);
    }
    Ok(ResourceState { layout: lay, mode, s0, contraction, state: st })
}

/// Measurement record of one query.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryTranscript {
    pub m: GtOutcome,
    /// `X` outcomes on `L`.
    pub big_m: Vec<u8>,
    pub sqpm: Vec<SqpmRecord>,
    /// Physical gates applied to `F` at the end, on `F` indices.
    pub final_correction: Vec<Gate>,
    pub s0: Vec<u8>,
}

/// Runs one query against `Φ`; returns the state on `F` (address then bus).
pub fn run_query(
    psi: &DenseState,
    d: &Dataset,
    phi: &ResourceState,
    rng: &mut dyn RngCore,
) -> Result<(DenseState, QueryTranscript), QueryError> {
    let lay = &phi.layout;
    if psi.n() != lay.log_n || d.len() != lay.n {
        return Err(QueryError::Size { expected: lay.log_n, got: psi.n() });
    }
    let mut st = phi.state.clone();
    st.append(psi, &lay.r_set())?;
    let mut m = GtOutcome::zero(lay.log_n);
    for i in 0..lay.log_n {
        let o = st.bell_measure(lay.r(i), lay.i(i), None, rng)?;
        m.a[i] = o.a;
        m.b[i] = o.b;
    }
    for g in adaptive_load(d, &m.b)? {
        st.apply(&g.map_qubits(|l| lay.l(l)))?;
    }
    let mut frame = PauliFrame::new(lay.reg_size());
    let mut big_m = Vec::with_capacity(lay.n);
    for l in 0..lay.n {
        let bit = st.measure(lay.l(l), Basis::X, None, rng)?;
        if bit == 1 {
            frame.toggle_z(lay.n - 1 + l);
        }
        big_m.push(bit);
    }
    let lab = InvLabels { reg: lay.dpp_base(), anc: lay.anc_base() };
    let mut sqpm = Vec::with_capacity(lay.program.len());
    sqpm_rounds_with_frame(&mut st, &lay.program, lab, &phi.s0, &mut frame, &mut sqpm, rng)?;

    let heads: Vec<usize> = (0..=lay.log_n as u32).map(sector_head).collect();
    let mut fix = Vec::new();
    for (k, &h) in heads.iter().enumerate() {
        if frame.has_z(h) {
            fix.push(Gate::Z(k));
        }
    }
    fix.push(Gate::H(lay.log_n));
    fix.extend(m.correction());
    let mut out = st.extract(&lay.f_set())?;
    out.apply_gates(&fix)?;
    let transcript = QueryTranscript { m, big_m, sqpm, final_correction: fix, s0: phi.s0.clone() };
    Ok((out, transcript))
}

/// `Σ_x ψ_x |x⟩|D_x⟩`, the ideal query output.
pub fn ideal_output(psi: &DenseState, d: &Dataset) -> Result<DenseState, QueryError> {
    let log_n = log2_exact(d.len())? as usize;
    if psi.n() != log_n {
        return Err(QueryError::Size { expected: log_n, got: psi.n() });
    }
    let mut amps = vec![C64::new(0.0, 0.0); 2 * d.len()];
    for (x, a) in psi.amplitudes().iter().enumerate() {
        amps[x | (usize::from(d.get(x)) << log_n)] = *a;
    }
    Ok(DenseState::from_amplitudes(amps)?)
}

/// `V^{-1} W_D V |ψ, 0⟩` applied gate by gate, for `N ≤ 8`.
pub fn reference_query(psi: &DenseState, d: &Dataset) -> Result<DenseState, QueryError> {
    let n = d.len();
    if n > 8 {
        return Err(QueryError::TooLarge(n));
    }
    let log_n = log2_exact(n)? as usize;
    let mut s = psi.clone();
    s.append_zeros(2 * n - 1 - log_n);
    s.apply_gates(&v_gates(n)?)?;
    let w: Vec<Gate> = (0..n).filter(|&l| d.get(l) == 1).map(|l| Gate::Z(n - 1 + l)).collect();
    s.apply_gates(&w)?;
    s.apply_gates(&v_inverse_gates(n)?)?;
    restrict_to(&s, &(0..=log_n).collect::<Vec<_>>())
}

/// `Φ⁽²⁾` as a stabilizer state.
#[derive(Clone, Debug)]
pub struct Phi2 {
    pub tableau: StabilizerTableau,
    pub program: Vec<Gadget>,
    /// Empty when the `c` qubits were left unmeasured.
    pub s0: Vec<u8>,
}

/// Qubits `0..2N−1` are `D′`, then `D″`, then the ancilla pairs.
pub fn phi2_gates(n: usize) -> Result<(usize, Vec<Gate>, Vec<Gadget>), QueryError> {
    let program = inversion_program(n, true)?;
    let size = 2 * n - 1;
    let total = 2 * size + 2 * program.len();
    let mut gates = Vec::new();
    for q in 0..size {
        gates.extend([Gate::H(q), Gate::H(size + q), Gate::Cz(q, size + q)]);
    }
    for (k, g) in program.iter().enumerate() {
        let (p, q) = (2 * size + 2 * k, 2 * size + 2 * k + 1);
        gates.extend([Gate::H(p), Gate::H(q), Gate::Cz(p, q)]);
        gates.push(Gate::Cnot { control: size + g.c, target: size + g.b });
        gates.push(Gate::Cz(size + g.a, p));
        gates.push(Gate::Cz(size + g.b, q));
    }
    Ok((total, gates, program))
}

/// Builds `Φ⁽²⁾` on a tableau (`N ≤ 64`); with `measure_c` the `c` qubits are measured in `X`.
pub fn build_phi2(
    n: usize,
    measure_c: bool,
    forced_s0: Option<&[u8]>,
    rng: &mut dyn RngCore,
) -> Result<Phi2, QueryError> {
    if n > 64 {
        return Err(QueryError::TooLarge(n));
    }
    let (total, gates, program) = phi2_gates(n)?;
    let size = 2 * n - 1;
    let mut t = StabilizerTableau::new(total);
    for g in &gates {
        t.apply(g)?;
    }
    let mut s0 = Vec::new();
    if measure_c {
        for (k, g) in program.iter().enumerate() {
            let p = PauliString::from_sparse(total, &[(size + g.c, 'X')], false);
            s0.push(t.measure(&p, forced_s0.map(|f| f[k]), rng)?);
        }
    }
    Ok(Phi2 { tableau: t, program, s0 })
}

/// Dense `Φ⁽²⁾` with the same qubit order as [`build_phi2`]; measured qubits are kept.
pub fn build_phi2_dense(n: usize, measure_c: bool, s0: Option<&[u8]>, rng: &mut dyn RngCore) -> Result<DenseState, QueryError> {
    if n > 4 {
        return Err(QueryError::TooLarge(n));
    }
    let (total, gates, program) = phi2_gates(n)?;
    let size = 2 * n - 1;
    let mut s = DenseState::zero(total);
    s.apply_gates(&gates)?;
    if measure_c {
        for (k, g) in program.iter().enumerate() {
            s.measure(size + g.c, Basis::X, outcome(s0.map(|f| f[k]), rng))?;
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densesim::{fidelity, haar_random_state};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layout_sizes() {
        for (n, a) in [(2, 7), (4, 17), (8, 37)] {
            let lay = RegisterLayout::new(n).unwrap();
            assert_eq!(lay.a_set().len(), a);
            assert_eq!(lay.p_set().len(), 2 * (2 * n - lay.log_n - 2));
        }
    }

    #[test]
    fn load_examples() {
        let d = Dataset::from_bits(&[1, 0, 0, 0]).unwrap();
        assert_eq!(adaptive_load(&d, &[1, 0]).unwrap(), vec![Gate::Z(1)]);
        assert!(adaptive_load(&Dataset::zeros(4), &[1, 1]).unwrap().is_empty());
        let d = Dataset::from_bits(&[1, 0, 1, 1]).unwrap();
        assert_eq!(adaptive_load(&d, &[0, 0]).unwrap(), vec![Gate::Z(0), Gate::Z(2), Gate::Z(3)]);
    }

    #[test]
    fn rounds() {
        for n in [2usize, 4, 8, 16, 32] {
            let log_n = n.trailing_zeros() as usize;
            assert_eq!(sqpm_rounds(n, true).unwrap(), 2 * log_n - 1, "N={n}");
        }
    }

    #[test]
    fn teleport_all_outcomes_n2() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi1 = build_phi1(2).unwrap();
        let psi = haar_random_state(1, &mut rng);
        for idx in 0..4 {
            let m = GtOutcome::from_index(idx, 1);
            let (got, out) = gate_teleport(&psi, &phi1, Some(&m), &mut rng).unwrap();
            assert_eq!(got, m);
            let want = v_on(&psi, &m, 2).unwrap();
            assert!(fidelity(&out, &want).unwrap() > 1.0 - 1e-10);
        }
    }

    #[test]
    fn single_gadget_example() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (al, be) = (C64::new(0.6, 0.0), C64::new(0.0, 0.8));
        let mut amps = vec![C64::new(0.0, 0.0); 8];
        amps[0b000] = al;
        amps[0b101] = be;
        let chi = DenseState::from_amplitudes(amps).unwrap();
        let mut want = vec![C64::new(0.0, 0.0); 4];
        want[0b00] = al;
        want[0b11] = be;
        let want = DenseState::from_amplitudes(want).unwrap();
        for s0 in [0, 1] {
            for _ in 0..8 {
                let (out, got) = invert_gadget(&chi, (0, 1, 2), Some(s0), &mut rng).unwrap();
                assert_eq!(got, s0);
                assert!(fidelity(&out, &want).unwrap() > 1.0 - 1e-12);
            }
        }
    }

    #[test]
    fn inversion_round_trip_n2() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for mode in [InversionMode::Adaptive, InversionMode::Frame] {
            let psi = haar_random_state(1, &mut rng);
            let v = v_on(&psi, &GtOutcome::zero(1), 2).unwrap();
            let r = invert_nohe(&v, 2, true, mode, None, &mut rng).unwrap();
            let mut want = psi.clone();
            want.append_zeros(1);
            want.apply_gate(&Gate::H(1)).unwrap();
            assert!(fidelity(&r.state, &want).unwrap() > 1.0 - 1e-10);
        }
    }

    #[test]
    fn query_n2_example() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = Dataset::from_bits(&[1, 0]).unwrap();
        let psi = DenseState::basis(1, 0);
        let phi = build_phi(2, PhiMode::Postselect, None, &mut rng).unwrap();
        assert_eq!(phi.n_qubits(), 7);
        for _ in 0..10 {
            let (out, _) = run_query(&psi, &d, &phi, &mut rng).unwrap();
            assert!(fidelity(&out, &DenseState::basis(2, 0b10)).unwrap() > 1.0 - 1e-10);
        }
    }

    #[test]
    fn reference_matches_ideal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [2, 4, 8] {
            let d = Dataset::random(n, &mut rng);
            let psi = haar_random_state(n.trailing_zeros() as usize, &mut rng);
            let a = reference_query(&psi, &d).unwrap();
            let b = ideal_output(&psi, &d).unwrap();
            assert!(fidelity(&a, &b).unwrap() > 1.0 - 1e-12);
        }
    }

    #[test]
    fn phi2_n2_matches_fixed_gate_list() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = build_phi2(2, false, None, &mut rng).unwrap();
        let mut t = StabilizerTableau::new(8);
        for g in crate::cliffordlab::phi2_n2_gates() {
            t.apply(&g).unwrap();
        }
        for g in t.generators() {
            assert!(p.tableau.contains(g));
        }
    }
}
