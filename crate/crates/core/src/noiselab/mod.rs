//! Error models, branch simulation of the noisy query and fidelity estimation.
//!
//! The noisy circuit is the unitary pipeline `H_bus, U_NOHE, W_D, U_NOHE^{-1}, H_bus` on
//! `2N−1` qubits, laid out in qubit-disjoint layers. Input relocation swaps are treated as
//! relabelling: address bit `K` starts on the head of sector `K` and the bus on qubit `N−1`.
//!
//! Every Pauli error maps computational basis states to basis states, so a query can be
//! followed with one classical lane per input `(x, β)`, where `β` is the bus value after
//! the first Hadamard. Lanes are packed 64 per word, and a noisy run only tracks the
//! deviation of each qubit from a precomputed ideal run.

pub mod haar;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{build_nohe_parallel, expand_gadgets_layered, sector_head, CircuitError, Gate};
use crate::densesim::{DenseError, DenseState, C64};
use crate::encoding::{log2_exact, Dataset, EncodingError};
use crate::par::{map_indices, map_indices_sequential, stream_rng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("epsilon {0} outside [0, 1]")]
    Epsilon(f64),
    #[error("sample counts must be positive")]
    Samples,
    #[error("N = {0} outside the supported range")]
    Size(usize),
    #[error("need at least {need} points with positive infidelity, got {got}")]
    Fit { need: usize, got: usize },
    #[error("unknown {kind} {value:?}")]
    Unknown { kind: &'static str, value: String },
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Dense(#[from] DenseError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ModelKind {
    /// Every alive qubit depolarises once per layer.
    Cd,
    /// Depolarising noise on the operands of each two- or three-qubit gate.
    Op,
    /// Dephasing on the operands of each two- or three-qubit gate.
    Ec,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Cd, ModelKind::Op, ModelKind::Ec];
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Cd => "CD",
            ModelKind::Op => "OP",
            ModelKind::Ec => "EC",
        })
    }
}

impl FromStr for ModelKind {
    type Err = NoiseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "CD" => Ok(ModelKind::Cd),
            "OP" => Ok(ModelKind::Op),
            "EC" => Ok(ModelKind::Ec),
            _ => Err(NoiseError::Unknown { kind: "model", value: s.to_string() }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    pub kind: ModelKind,
    pub epsilon: f64,
}

impl ErrorModel {
    pub fn new(kind: ModelKind, epsilon: f64) -> Result<Self, NoiseError> {
        if !(0.0..=1.0).contains(&epsilon) || epsilon.is_nan() {
            return Err(NoiseError::Epsilon(epsilon));
        }
        Ok(Self { kind, epsilon })
    }

    /// Probability that one slot carries an error.
    #[must_use]
    pub fn slot_probability(&self) -> f64 {
        match self.kind {
            ModelKind::Cd | ModelKind::Op => 0.75 * self.epsilon,
            ModelKind::Ec => self.epsilon,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

/// Error after layer `layer` on `qubit`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ErrorEvent {
    pub layer: usize,
    pub qubit: usize,
    pub pauli: Pauli,
}

/// Events sorted by layer, with the weight of the configuration when enumerated.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorConfig {
    pub events: Vec<ErrorEvent>,
    pub weight: f64,
}

impl ErrorConfig {
    #[must_use]
    pub fn single(e: ErrorEvent, weight: f64) -> Self {
        Self { events: vec![e], weight }
    }
}

/// Per-layer qubit lists flattened with prefix sums, for slot sampling.
#[derive(Clone, Debug, Default)]
struct SlotTable {
    qubits: Vec<Vec<usize>>,
    prefix: Vec<u64>,
}

impl SlotTable {
    fn new(qubits: Vec<Vec<usize>>) -> Self {
        let mut prefix = Vec::with_capacity(qubits.len() + 1);
        prefix.push(0u64);
        for q in &qubits {
            prefix.push(prefix.last().copied().unwrap_or(0) + q.len() as u64);
        }
        Self { qubits, prefix }
    }

    fn total(&self) -> u64 {
        *self.prefix.last().unwrap_or(&0)
    }

    fn locate(&self, slot: u64) -> (usize, usize) {
        let t = self.prefix.partition_point(|&p| p <= slot) - 1;
        (t, self.qubits[t][(slot - self.prefix[t]) as usize])
    }
}

/// Space-time layout of the noisy query.
#[derive(Clone, Debug)]
pub struct QueryLayout {
    pub n: usize,
    pub log_n: usize,
    pub n_qubits: usize,
    /// Layer 0 and the last layer hold the bus Hadamard; the load layer has no gates.
    pub layers: Vec<Vec<Gate>>,
    pub load_layer: usize,
    pub alive_from: Vec<usize>,
    pub alive_until: Vec<usize>,
    /// Sector heads; the last one is the bus.
    pub heads: Vec<usize>,
    pub bus: usize,
    words: usize,
    is_head: Vec<bool>,
    history: Vec<Vec<(usize, Vec<u64>)>>,
    alive_slots: SlotTable,
    operand_slots: SlotTable,
    lane_mask: Vec<u64>,
}

/// Largest supported memory size.
pub const MAX_N: usize = 1 << 13;

/// Builds the layered noisy-query layout.
pub fn query_layout(n: usize) -> Result<QueryLayout, NoiseError> {
    if !(2..=MAX_N).contains(&n) {
        return Err(NoiseError::Size(n));
    }
    let log_n = log2_exact(n)? as usize;
    let par = expand_gadgets_layered(&build_nohe_parallel(n, true)?);
    let forward: Vec<Vec<Gate>> = par.layers[par.swap_layers..].to_vec();
    let bus = n - 1;
    let mut layers = vec![vec![Gate::H(bus)]];
    layers.extend(forward.iter().cloned());
    let load_layer = layers.len();
    layers.push(Vec::new());
    layers.extend(forward.iter().rev().cloned());
    layers.push(vec![Gate::H(bus)]);
    let n_qubits = 2 * n - 1;
    let last = layers.len() - 1;
    let heads: Vec<usize> = (0..=log_n as u32).map(sector_head).collect();
    let mut is_head = vec![false; n_qubits];
    for &h in &heads {
        is_head[h] = true;
    }
    let mut alive_from = vec![usize::MAX; n_qubits];
    let mut alive_until = vec![0; n_qubits];
    for (t, layer) in layers.iter().enumerate() {
        for q in layer.iter().flat_map(Gate::qubits) {
            alive_from[q] = alive_from[q].min(t);
            alive_until[q] = alive_until[q].max(t);
        }
    }
    for &h in &heads {
        alive_from[h] = 0;
        alive_until[h] = last;
    }
    let alive: Vec<Vec<usize>> = (0..layers.len())
        .map(|t| (0..n_qubits).filter(|&q| alive_from[q] <= t && t <= alive_until[q]).collect())
        .collect();
    let operands: Vec<Vec<usize>> = layers
        .iter()
        .map(|l| l.iter().map(Gate::qubits).filter(|q| q.len() > 1).flatten().collect())
        .collect();

    let lanes = 2 * n;
    let words = lanes.div_ceil(64);
    let mut lane_mask = vec![u64::MAX; words];
    if !lanes.is_multiple_of(64) {
        lane_mask[words - 1] = (1u64 << (lanes % 64)) - 1;
    }
    let mut current: Vec<Vec<u64>> = vec![vec![0; words]; n_qubits];
    for (k, &h) in heads.iter().enumerate() {
        for j in 0..lanes {
            if (j >> k) & 1 == 1 {
                current[h][j / 64] |= 1 << (j % 64);
            }
        }
    }
    let mut history: Vec<Vec<(usize, Vec<u64>)>> = current.iter().map(|v| vec![(0, v.clone())]).collect();
    for (t, layer) in layers.iter().enumerate().take(last).skip(1) {
        for g in layer {
            match *g {
                Gate::Toffoli { c0, c1, target } => {
                    for w in 0..words {
                        let v = current[c0][w] & current[c1][w];
                        current[target][w] ^= v;
                    }
                    history[target].push((t, current[target].clone()));
                }
                Gate::Cnot { control, target } => {
                    for w in 0..words {
                        let v = current[control][w];
                        current[target][w] ^= v;
                    }
                    history[target].push((t, current[target].clone()));
                }
                _ => {}
            }
        }
    }
    Ok(QueryLayout {
        n,
        log_n,
        n_qubits,
        layers,
        load_layer,
        alive_from,
        alive_until,
        heads,
        bus,
        words,
        is_head,
        history,
        alive_slots: SlotTable::new(alive),
        operand_slots: SlotTable::new(operands),
        lane_mask,
    })
}

impl QueryLayout {
    #[must_use]
    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// Ideal lane values of `q` after layer `t`.
    fn ideal(&self, q: usize, t: usize) -> &[u64] {
        let h = &self.history[q];
        let i = h.partition_point(|(l, _)| *l <= t) - 1;
        &h[i].1
    }

    /// `Σ_t alive(t)`.
    #[must_use]
    pub fn alive_slot_count(&self) -> u64 {
        self.alive_slots.total()
    }

    /// Operand slots of multi-qubit gates.
    #[must_use]
    pub fn operand_slot_count(&self) -> u64 {
        self.operand_slots.total()
    }

    #[must_use]
    pub fn toffoli_count(&self) -> usize {
        self.layers.iter().flatten().filter(|g| matches!(g, Gate::Toffoli { .. })).count()
    }

    fn slots(&self, kind: ModelKind) -> &SlotTable {
        match kind {
            ModelKind::Cd => &self.alive_slots,
            ModelKind::Op | ModelKind::Ec => &self.operand_slots,
        }
    }
}

fn random_pauli(rng: &mut dyn RngCore) -> Pauli {
    match rng.random_range(0..3) {
        0 => Pauli::X,
        1 => Pauli::Y,
        _ => Pauli::Z,
    }
}

/// Draws one error configuration.
pub fn sample_error_config(model: &ErrorModel, layout: &QueryLayout, rng: &mut dyn RngCore) -> ErrorConfig {
    let p = model.slot_probability();
    let mut cfg = ErrorConfig { events: Vec::new(), weight: 1.0 };
    if p <= 0.0 {
        return cfg;
    }
    let table = layout.slots(model.kind);
    let total = table.total();
    let mut slot = 0u64;
    let geo = (p < 1.0).then(|| Geometric::new(p).expect("0 < p < 1"));
    loop {
        let gap = geo.as_ref().map_or(0, |g| g.sample(rng));
        slot = match slot.checked_add(gap) {
            Some(s) if s < total => s,
            _ => break,
        };
        let (layer, qubit) = table.locate(slot);
        let pauli = match model.kind {
            ModelKind::Ec => Pauli::Z,
            _ => random_pauli(rng),
        };
        cfg.events.push(ErrorEvent { layer, qubit, pauli });
        slot += 1;
    }
    cfg
}

/// Every single-event configuration with its first-order rate (probability / ε).
#[must_use]
pub fn enumerate_single_events(kind: ModelKind, layout: &QueryLayout) -> Vec<ErrorConfig> {
    let table = layout.slots(kind);
    let mut out = Vec::new();
    for (layer, qs) in table.qubits.iter().enumerate() {
        for &qubit in qs {
            match kind {
                ModelKind::Ec => out.push(ErrorConfig::single(ErrorEvent { layer, qubit, pauli: Pauli::Z }, 1.0)),
                _ => {
                    for pauli in [Pauli::X, Pauli::Y, Pauli::Z] {
                        out.push(ErrorConfig::single(ErrorEvent { layer, qubit, pauli }, 0.25));
                    }
                }
            }
        }
    }
    out
}

/// What a noisy query does to one address.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AddressOutcome {
    /// A single basis component: full register bits and sign (`1` for `−`).
    Single { bits: Vec<u8>, sign: u8 },
    /// The two bus branches end with different non-bus bits.
    Split,
}

/// Output component `(bits on 2N−1 qubits, amplitude)`.
pub type Component = (Vec<u8>, C64);

/// Largest set of addresses answered correctly with a common ancilla state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoodSet {
    pub members: Vec<usize>,
    /// Non-head qubits left in `|1⟩` by the group.
    pub ancilla_ones: Vec<usize>,
    /// Common relative sign of the group.
    pub sign: u8,
}

/// Reusable buffers for branch propagation.
pub struct BranchSim<'a> {
    lay: &'a QueryLayout,
    dev: Vec<Vec<u64>>,
    dirty: Vec<bool>,
    dirty_list: Vec<usize>,
    sign: Vec<u64>,
    post: Vec<Pauli>,
    hash: Vec<u64>,
    head_bad: Vec<u64>,
    zobrist: Vec<u64>,
    groups: HashMap<(u64, u8), (usize, usize)>,
}

fn bit(v: &[u64], j: usize) -> u8 {
    ((v[j / 64] >> (j % 64)) & 1) as u8
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl<'a> BranchSim<'a> {
    #[must_use]
    pub fn new(lay: &'a QueryLayout) -> Self {
        let lanes = 2 * lay.n;
        Self {
            lay,
            dev: vec![vec![0; lay.words]; lay.n_qubits],
            dirty: vec![false; lay.n_qubits],
            dirty_list: Vec::new(),
            sign: vec![0; lay.words],
            post: Vec::new(),
            hash: vec![0; lanes],
            head_bad: vec![0; lay.words],
            zobrist: (0..lay.n_qubits as u64).map(|q| splitmix(q + 1)).collect(),
            groups: HashMap::new(),
        }
    }

    fn reset(&mut self) {
        for &q in &self.dirty_list {
            self.dev[q].iter_mut().for_each(|w| *w = 0);
            self.dirty[q] = false;
        }
        self.dirty_list.clear();
        self.sign.iter_mut().for_each(|w| *w = 0);
        self.post.clear();
    }

    fn mark(&mut self, q: usize) {
        if !self.dirty[q] {
            self.dirty[q] = true;
            self.dirty_list.push(q);
        }
    }

    fn apply_event(&mut self, e: &ErrorEvent) {
        let lay = self.lay;
        if e.layer == lay.layers.len() - 1 && e.qubit == lay.bus {
            self.post.push(e.pauli);
            return;
        }
        if matches!(e.pauli, Pauli::Z | Pauli::Y) {
            let ideal = lay.ideal(e.qubit, e.layer);
            for w in 0..lay.words {
                self.sign[w] ^= ideal[w] ^ self.dev[e.qubit][w];
            }
        }
        if matches!(e.pauli, Pauli::X | Pauli::Y) {
            self.mark(e.qubit);
            for w in 0..lay.words {
                self.dev[e.qubit][w] ^= lay.lane_mask[w];
            }
        }
    }

    fn apply_layer(&mut self, t: usize, d: &Dataset) {
        let lay = self.lay;
        if t == lay.load_layer {
            for l in 0..lay.n {
                let q = lay.n - 1 + l;
                if self.dirty[q] && d.get(l) == 1 {
                    for w in 0..lay.words {
                        self.sign[w] ^= self.dev[q][w];
                    }
                }
            }
            return;
        }
        for g in &lay.layers[t] {
            match *g {
                Gate::Cnot { control, target } => {
                    if self.dirty[control] {
                        self.mark(target);
                        let src = std::mem::take(&mut self.dev[control]);
                        for (a, b) in self.dev[target].iter_mut().zip(&src) {
                            *a ^= b;
                        }
                        self.dev[control] = src;
                    }
                }
                Gate::Toffoli { c0, c1, target } => {
                    let (d0, d1) = (self.dirty[c0], self.dirty[c1]);
                    if !d0 && !d1 {
                        continue;
                    }
                    self.mark(target);
                    let (i0, i1) = (lay.ideal(c0, t), lay.ideal(c1, t));
                    let mut tgt = std::mem::take(&mut self.dev[target]);
                    let (e0, e1) = (&self.dev[c0], &self.dev[c1]);
                    for w in 0..lay.words {
                        let (a, b) = (e0[w], e1[w]);
                        tgt[w] ^= (i0[w] & b) ^ (a & i1[w]) ^ (a & b);
                    }
                    self.dev[target] = tgt;
                }
                _ => {}
            }
        }
    }

    /// Propagates every lane through the noisy layout.
    pub fn run(&mut self, cfg: &ErrorConfig, d: &Dataset) {
        self.reset();
        let Some(first) = cfg.events.first() else { return };
        let last = self.lay.layers.len() - 1;
        let mut e = 0;
        for t in first.layer..=last {
            if t > first.layer && t < last {
                self.apply_layer(t, d);
            }
            while e < cfg.events.len() && cfg.events[e].layer == t {
                let ev = cfg.events[e];
                self.apply_event(&ev);
                e += 1;
            }
        }
    }

    fn prepare_keys(&mut self) {
        let lay = self.lay;
        self.hash.iter_mut().for_each(|h| *h = 0);
        self.head_bad.iter_mut().for_each(|w| *w = 0);
        for &q in &self.dirty_list {
            if q == lay.bus {
                continue;
            }
            let z = self.zobrist[q];
            for (w, &word) in self.dev[q].iter().enumerate() {
                let mut m = word;
                while m != 0 {
                    let b = m.trailing_zeros() as usize;
                    self.hash[w * 64 + b] ^= z;
                    m &= m - 1;
                }
                if lay.is_head[q] {
                    self.head_bad[w] |= word;
                }
            }
        }
    }

    /// `(correct, key, sign)` for address `x`, or `None` when the output is not a single
    /// component.
    fn classify(&self, x: usize, d: &Dataset) -> Option<(bool, u64, u8)> {
        let lay = self.lay;
        let (j0, j1) = (x, x + lay.n);
        if self.hash[j0] != self.hash[j1] {
            return None;
        }
        let u0 = bit(&self.dev[lay.bus], j0);
        let u1 = 1 ^ bit(&self.dev[lay.bus], j1);
        if u0 == u1 {
            return None;
        }
        let dx = d.get(x);
        let s0 = bit(&self.sign, j0);
        let s1 = dx ^ bit(&self.sign, j1);
        let mut c = s0 ^ s1;
        let mut ph = s0 ^ (c & u0);
        for p in &self.post {
            match p {
                Pauli::X => c ^= 1,
                Pauli::Z => ph ^= c,
                Pauli::Y => {
                    ph ^= c;
                    c ^= 1;
                }
            }
        }
        let correct = c == dx && bit(&self.head_bad, j0) == 0;
        Some((correct, self.hash[j0], ph))
    }

    /// Size of the good set for the last run.
    pub fn good_set_size(&mut self, d: &Dataset) -> usize {
        if self.dirty_list.is_empty() && self.post.is_empty() && self.sign.iter().all(|&w| w == 0) {
            return self.lay.n;
        }
        self.prepare_keys();
        self.groups.clear();
        let mut best = 0;
        for x in 0..self.lay.n {
            if let Some((true, key, ph)) = self.classify(x, d) {
                let e = self.groups.entry((key, ph)).or_insert((0, x));
                e.0 += 1;
                best = best.max(e.0);
            }
        }
        best
    }

    /// Full good set for the last run.
    pub fn good_set(&mut self, d: &Dataset) -> GoodSet {
        self.prepare_keys();
        let mut groups: HashMap<(u64, u8), Vec<usize>> = HashMap::new();
        for x in 0..self.lay.n {
            if let Some((true, key, ph)) = self.classify(x, d) {
                groups.entry((key, ph)).or_default().push(x);
            }
        }
        let best = groups.into_iter().max_by_key(|(_, v)| (v.len(), std::cmp::Reverse(v[0])));
        match best {
            None => GoodSet { members: Vec::new(), ancilla_ones: Vec::new(), sign: 0 },
            Some(((_, sign), members)) => {
                let x = members[0];
                let ancilla_ones = (0..self.lay.n_qubits)
                    .filter(|&q| !self.lay.is_head[q] && bit(&self.dev[q], x) == 1)
                    .collect();
                GoodSet { members, ancilla_ones, sign }
            }
        }
    }

    /// Output of address `x` for the last run.
    #[must_use]
    pub fn outcome(&self, x: usize, d: &Dataset) -> AddressOutcome {
        let comps = self.components(x, d);
        if comps.len() == 1 {
            let sign = u8::from(comps[0].1.re < 0.0);
            AddressOutcome::Single { bits: comps[0].0.clone(), sign }
        } else {
            AddressOutcome::Split
        }
    }

    /// Output components of address `x` for the last run, up to a global phase.
    #[must_use]
    pub fn components(&self, x: usize, d: &Dataset) -> Vec<Component> {
        let lay = self.lay;
        let branch = |beta: usize| -> (Vec<u8>, u8) {
            let j = x + beta * lay.n;
            let mut bits = vec![0u8; lay.n_qubits];
            for (k, &h) in lay.heads.iter().enumerate() {
                bits[h] = ((j >> k) & 1) as u8;
            }
            for &q in &self.dirty_list {
                bits[q] ^= bit(&self.dev[q], j);
            }
            let s = bit(&self.sign, j) ^ (beta as u8 & d.get(x));
            (bits, s)
        };
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let mut acc: HashMap<Vec<u8>, C64> = HashMap::new();
        for beta in 0..2 {
            let (bits, s) = branch(beta);
            let amp = if s == 1 { -r } else { r };
            let u = bits[lay.bus];
            for out in 0..2u8 {
                let mut b = bits.clone();
                b[lay.bus] = out;
                let h = if u == 1 && out == 1 { -r } else { r };
                *acc.entry(b).or_insert(C64::new(0.0, 0.0)) += amp * h;
            }
        }
        let mut comps: Vec<Component> = acc.into_iter().filter(|(_, a)| a.norm() > 1e-12).collect();
        for p in &self.post {
            for (b, a) in &mut comps {
                let c = &mut b[lay.bus];
                if matches!(p, Pauli::Z | Pauli::Y) && *c == 1 {
                    *a = -*a;
                }
                if matches!(p, Pauli::X | Pauli::Y) {
                    *c ^= 1;
                }
            }
        }
        comps.sort_by(|a, b| a.0.cmp(&b.0));
        comps
    }
}

/// Output components of one address under a configuration.
#[must_use]
pub fn branch_propagate(x: usize, layout: &QueryLayout, cfg: &ErrorConfig, d: &Dataset) -> Vec<Component> {
    let mut sim = BranchSim::new(layout);
    sim.run(cfg, d);
    sim.components(x, d)
}

/// Good set of a configuration.
#[must_use]
pub fn good_set(cfg: &ErrorConfig, d: &Dataset, layout: &QueryLayout) -> GoodSet {
    let mut sim = BranchSim::new(layout);
    sim.run(cfg, d);
    sim.good_set(d)
}

/// `(2s−1)² Θ(s−½)`.
#[must_use]
pub fn fidelity_bound_pointwise(s: f64) -> f64 {
    if s >= 0.5 {
        (2.0 * s - 1.0).powi(2)
    } else {
        0.0
    }
}

/// `4(g/N − ½)²` for `g ≥ N/2`, else 0.
#[must_use]
pub fn fidelity_bound_avg(g: usize, n: usize) -> f64 {
    fidelity_bound_pointwise(g as f64 / n as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// `4(g/N − ½)²`, a lower bound on the Haar-averaged fidelity.
    Bound,
    /// `g(g+1)/(N(N+1))`, exact when faulty components are orthogonal to the ideal output.
    S2,
}

impl Estimator {
    #[must_use]
    pub fn value(&self, g: usize, n: usize) -> f64 {
        match self {
            Estimator::Bound => fidelity_bound_avg(g, n),
            Estimator::S2 => (g * (g + 1)) as f64 / (n * (n + 1)) as f64,
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Bound => "bound",
            Estimator::S2 => "s2",
        })
    }
}

impl FromStr for Estimator {
    type Err = NoiseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bound" => Ok(Estimator::Bound),
            "s2" => Ok(Estimator::S2),
            _ => Err(NoiseError::Unknown { kind: "estimator", value: s.to_string() }),
        }
    }
}

/// Monte Carlo request.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateSpec {
    pub n: usize,
    pub kind: ModelKind,
    pub epsilon: f64,
    pub samples: usize,
    pub datasets: usize,
    pub estimator: Estimator,
    pub seed: u64,
}

/// One CSV row of a fidelity scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityEstimate {
    #[serde(rename = "N")]
    pub n: usize,
    pub model: String,
    pub epsilon: f64,
    pub estimator: String,
    pub samples: usize,
    pub datasets: usize,
    #[serde(rename = "F_mean")]
    pub mean: f64,
    #[serde(rename = "F_stderr")]
    pub stderr: f64,
    pub infidelity: f64,
    pub seed: u64,
}

const BLOCK: usize = 256;

/// Whether the Monte Carlo runs on the worker pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Parallel,
    Sequential,
}

/// Monte Carlo estimate of the dataset- and Haar-averaged query fidelity.
///
/// Dataset `i` is drawn from RNG stream `i·2^32`; its samples come in blocks of 256 from
/// the following streams, so the result depends only on the seed.
pub fn estimate_fidelity(spec: &EstimateSpec, layout: &QueryLayout) -> Result<FidelityEstimate, NoiseError> {
    estimate_fidelity_with(spec, layout, Execution::Parallel)
}

pub fn estimate_fidelity_with(
    spec: &EstimateSpec,
    layout: &QueryLayout,
    exec: Execution,
) -> Result<FidelityEstimate, NoiseError> {
    if spec.samples == 0 || spec.datasets == 0 {
        return Err(NoiseError::Samples);
    }
    if layout.n != spec.n {
        return Err(NoiseError::Size(spec.n));
    }
    let model = ErrorModel::new(spec.kind, spec.epsilon)?;
    let blocks = spec.samples.div_ceil(BLOCK);
    let work = |item: usize| -> (f64, f64) {
        let (di, bi) = (item / blocks, item % blocks);
        let base = (di as u64) << 32;
        let d = Dataset::random(spec.n, &mut stream_rng(spec.seed, base));
        let mut rng = stream_rng(spec.seed, base + 1 + bi as u64);
        let count = BLOCK.min(spec.samples - bi * BLOCK);
        let mut sim = BranchSim::new(layout);
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..count {
            let cfg = sample_error_config(&model, layout, &mut rng);
            sim.run(&cfg, &d);
            let f = spec.estimator.value(sim.good_set_size(&d), spec.n);
            s += f;
            s2 += f * f;
        }
        (s, s2)
    };
    let parts = match exec {
        Execution::Parallel => map_indices(spec.datasets * blocks, work),
        Execution::Sequential => map_indices_sequential(spec.datasets * blocks, work),
    };
    let total = (spec.samples * spec.datasets) as f64;
    let (s, s2) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let mean = s / total;
    let var = if total > 1.0 { ((s2 - total * mean * mean) / (total - 1.0)).max(0.0) } else { 0.0 };
    Ok(FidelityEstimate {
        n: spec.n,
        model: spec.kind.to_string(),
        epsilon: spec.epsilon,
        estimator: spec.estimator.to_string(),
        samples: spec.samples,
        datasets: spec.datasets,
        mean,
        stderr: (var / total).sqrt(),
        infidelity: 1.0 - mean,
        seed: spec.seed,
    })
}

/// `d(1−F)/dε` at `ε = 0` by exhaustive single-event enumeration, averaged over
/// `datasets` random memories.
pub fn enumerate_first_order(
    kind: ModelKind,
    layout: &QueryLayout,
    estimator: Estimator,
    datasets: usize,
    seed: u64,
) -> Result<f64, NoiseError> {
    if datasets == 0 {
        return Err(NoiseError::Samples);
    }
    let events = enumerate_single_events(kind, layout);
    let per = map_indices(datasets, |i| {
        let d = Dataset::random(layout.n, &mut stream_rng(seed, i as u64));
        let mut sim = BranchSim::new(layout);
        events
            .iter()
            .map(|cfg| {
                sim.run(cfg, &d);
                cfg.weight * (1.0 - estimator.value(sim.good_set_size(&d), layout.n))
            })
            .sum::<f64>()
    });
    Ok(per.iter().sum::<f64>() / datasets as f64)
}

/// Least-squares slope of `ln(infidelity)` against `ln(log2 N)`.
pub fn fit_scaling(points: &[(usize, f64)]) -> Result<f64, NoiseError> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, v)| *v > 0.0)
        .map(|&(n, v)| ((n as f64).log2().ln(), v.ln()))
        .collect();
    if pts.len() < 4 || pts.len() != points.len() {
        return Err(NoiseError::Fit { need: 4.max(points.len()), got: pts.len() });
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

fn apply_pauli_dense(s: &mut DenseState, p: Pauli, q: usize) -> Result<(), DenseError> {
    if matches!(p, Pauli::Z | Pauli::Y) {
        s.apply_gate(&Gate::Z(q))?;
    }
    if matches!(p, Pauli::X | Pauli::Y) {
        s.apply_gate(&Gate::X(q))?;
    }
    Ok(())
}

/// Statevector run of the noisy layout on `|x⟩|0…⟩`, for `N ≤ 8`.
pub fn dense_query_output(
    layout: &QueryLayout,
    cfg: &ErrorConfig,
    d: &Dataset,
    x: usize,
) -> Result<DenseState, NoiseError> {
    if layout.n > 8 {
        return Err(NoiseError::Size(layout.n));
    }
    let idx: usize = (0..layout.log_n).map(|k| ((x >> k) & 1) << layout.heads[k]).sum();
    let mut s = DenseState::basis(layout.n_qubits, idx);
    for (t, layer) in layout.layers.iter().enumerate() {
        if t == layout.load_layer {
            for l in (0..layout.n).filter(|&l| d.get(l) == 1) {
                s.apply_gate(&Gate::Z(layout.n - 1 + l))?;
            }
        }
        s.apply_gates(layer)?;
        for e in cfg.events.iter().filter(|e| e.layer == t) {
            apply_pauli_dense(&mut s, e.pauli, e.qubit)?;
        }
    }
    Ok(s)
}

fn decode(layout: &QueryLayout, i: usize) -> (usize, u8, usize) {
    let x: usize = (0..layout.log_n).map(|k| ((i >> layout.heads[k]) & 1) << k).sum();
    let c = ((i >> layout.bus) & 1) as u8;
    let head_mask: usize = layout.heads.iter().map(|&h| 1usize << h).sum();
    (x, c, i & !head_mask)
}

/// Good-set size computed from statevectors.
pub fn dense_good_set_size(layout: &QueryLayout, cfg: &ErrorConfig, d: &Dataset) -> Result<usize, NoiseError> {
    let mut groups: HashMap<(usize, i64, i64), usize> = HashMap::new();
    for x in 0..layout.n {
        let s = dense_query_output(layout, cfg, d, x)?;
        let big: Vec<(usize, C64)> =
            s.amplitudes().iter().enumerate().filter(|(_, a)| a.norm() > 1e-9).map(|(i, a)| (i, *a)).collect();
        if big.len() != 1 {
            continue;
        }
        let (i, a) = big[0];
        let (xo, c, anc) = decode(layout, i);
        if xo == x && c == d.get(x) {
            *groups.entry((anc, (a.re * 1e6).round() as i64, (a.im * 1e6).round() as i64)).or_insert(0) += 1;
        }
    }
    Ok(groups.values().copied().max().unwrap_or(0))
}

/// Exact Haar-averaged fidelity of one Kraus branch, from statevectors:
/// `Σ_a (|Tr M_a|² + Tr M_a M_a†) / (N(N+1))` with `(M_a)_{xy} = ⟨x, D_x, a|K|y⟩`.
pub fn dense_haar_fidelity(layout: &QueryLayout, cfg: &ErrorConfig, d: &Dataset) -> Result<f64, NoiseError> {
    let n = layout.n;
    let outs: Vec<DenseState> = (0..n).map(|y| dense_query_output(layout, cfg, d, y)).collect::<Result<_, _>>()?;
    let mut mats: HashMap<usize, Vec<C64>> = HashMap::new();
    for (y, s) in outs.iter().enumerate() {
        for (i, a) in s.amplitudes().iter().enumerate() {
            if a.norm() < 1e-14 {
                continue;
            }
            let (x, c, anc) = decode(layout, i);
            if c == d.get(x) {
                mats.entry(anc).or_insert_with(|| vec![C64::new(0.0, 0.0); n * n])[x * n + y] = *a;
            }
        }
    }
    let total: f64 = mats
        .values()
        .map(|m| {
            let tr: C64 = (0..n).map(|x| m[x * n + x]).sum();
            tr.norm_sqr() + m.iter().map(C64::norm_sqr).sum::<f64>()
        })
        .sum();
    Ok(total / (n * (n + 1)) as f64)
}

/// One row of the single-error bound check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub event: ErrorEvent,
    pub dataset: Vec<u8>,
    pub good: usize,
    pub exact: f64,
    pub bound: f64,
}

/// Exact fidelity against the bound for every single CD event and every memory, `N ≤ 4`.
pub fn single_error_bound_checks(n: usize) -> Result<Vec<BoundCheck>, NoiseError> {
    if n > 4 {
        return Err(NoiseError::Size(n));
    }
    let layout = query_layout(n)?;
    let events = enumerate_single_events(ModelKind::Cd, &layout);
    let mut out = Vec::new();
    for dbits in 0..1usize << n {
        let bits: Vec<u8> = (0..n).map(|l| ((dbits >> l) & 1) as u8).collect();
        let d = Dataset::from_bits(&bits)?;
        for cfg in &events {
            let good = dense_good_set_size(&layout, cfg, &d)?;
            out.push(BoundCheck {
                event: cfg.events[0],
                dataset: bits.clone(),
                good,
                exact: dense_haar_fidelity(&layout, cfg, &d)?,
                bound: fidelity_bound_avg(good, n),
            });
        }
    }
    Ok(out)
}

/// A random configuration for tests: `k` uniformly placed alive-slot events.
pub fn random_config<R: Rng + ?Sized>(layout: &QueryLayout, k: usize, rng: &mut R) -> ErrorConfig {
    let total = layout.alive_slots.total();
    let mut slots: Vec<u64> = (0..k).map(|_| rng.random_range(0..total)).collect();
    slots.sort_unstable();
    slots.dedup();
    let events = slots
        .into_iter()
        .map(|s| {
            let (layer, qubit) = layout.alive_slots.locate(s);
            let pauli = match rng.random_range(0..3) {
                0 => Pauli::X,
                1 => Pauli::Y,
                _ => Pauli::Z,
            };
            ErrorEvent { layer, qubit, pauli }
        })
        .collect();
    ErrorConfig { events, weight: 1.0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layout_shape() {
        let l = query_layout(4).unwrap();
        assert_eq!(l.n_qubits, 7);
        assert_eq!(l.n_layers(), 2 * (3 * 2 + 1) + 1);
        assert_eq!(l.toffoli_count(), 2 * crate::circuit::toffoli_closed_form(4, true).unwrap());
        assert_eq!(l.heads, vec![0, 1, 3]);
    }

    #[test]
    fn ideal_run() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [2, 4, 16, 128] {
            let l = query_layout(n).unwrap();
            let d = Dataset::random(n, &mut rng);
            let mut sim = BranchSim::new(&l);
            sim.run(&ErrorConfig::default(), &d);
            assert_eq!(sim.good_set_size(&d), n);
            assert_eq!(good_set(&ErrorConfig::default(), &d, &l).members.len(), n);
        }
    }

    #[test]
    fn zero_epsilon_is_empty() {
        let l = query_layout(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for kind in ModelKind::ALL {
            let m = ErrorModel::new(kind, 0.0).unwrap();
            assert!(sample_error_config(&m, &l, &mut rng).events.is_empty());
        }
        let m = ErrorModel::new(ModelKind::Ec, 0.3).unwrap();
        let c = sample_error_config(&m, &l, &mut rng);
        assert!(c.events.iter().all(|e| e.pauli == Pauli::Z));
    }

    #[test]
    fn branch_matches_dense_n4() {
        let l = query_layout(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut configs = enumerate_single_events(ModelKind::Cd, &l);
        configs.extend((0..200).map(|_| random_config(&l, 3, &mut rng)));
        for cfg in &configs {
            let d = Dataset::random(4, &mut rng);
            let mut sim = BranchSim::new(&l);
            sim.run(cfg, &d);
            assert_eq!(sim.good_set_size(&d), dense_good_set_size(&l, cfg, &d).unwrap(), "{cfg:?}");
            for x in 0..4 {
                let dense = dense_query_output(&l, cfg, &d, x).unwrap();
                let comps = sim.components(x, &d);
                let mut amps = vec![C64::new(0.0, 0.0); 1 << l.n_qubits];
                for (bits, a) in &comps {
                    let i: usize = bits.iter().enumerate().map(|(q, &b)| usize::from(b) << q).sum();
                    amps[i] = *a;
                }
                let ov = dense.inner(&DenseState::from_amplitudes(amps).unwrap()).norm();
                assert!((ov - 1.0).abs() < 1e-9, "{cfg:?} x={x}");
            }
        }
    }

    #[test]
    fn pointer_z_flips_bit() {
        let l = query_layout(4).unwrap();
        let d = Dataset::zeros(4);
        let x = 2;
        let cfg = ErrorConfig::single(ErrorEvent { layer: l.load_layer, qubit: 3 + x, pauli: Pauli::Z }, 1.0);
        let mut sim = BranchSim::new(&l);
        sim.run(&cfg, &d);
        match sim.outcome(x, &d) {
            AddressOutcome::Single { bits, .. } => assert_eq!(bits[l.bus], 1),
            AddressOutcome::Split => panic!("split"),
        }
    }

    #[test]
    fn bounds() {
        assert_eq!(fidelity_bound_pointwise(1.0), 1.0);
        assert_eq!(fidelity_bound_pointwise(0.5), 0.0);
        assert!((fidelity_bound_pointwise(0.75) - 0.25).abs() < 1e-15);
        assert_eq!(fidelity_bound_avg(8, 8), 1.0);
        assert_eq!(fidelity_bound_avg(4, 8), 0.0);
        assert!((fidelity_bound_avg(6, 8) - 0.25).abs() < 1e-15);
        assert_eq!(fidelity_bound_avg(1, 8), 0.0);
    }

    #[test]
    fn fit_exact_power() {
        let pts: Vec<(usize, f64)> = (3..=10).map(|k| (1usize << k, 0.01 * (k as f64).powi(2))).collect();
        assert!((fit_scaling(&pts).unwrap() - 2.0).abs() < 1e-6);
        assert!(fit_scaling(&pts[..3]).is_err());
    }

    #[test]
    fn deterministic_across_execution() {
        let l = query_layout(16).unwrap();
        let spec = EstimateSpec {
            n: 16,
            kind: ModelKind::Cd,
            epsilon: 1e-2,
            samples: 600,
            datasets: 3,
            estimator: Estimator::Bound,
            seed: 11,
        };
        let a = estimate_fidelity_with(&spec, &l, Execution::Parallel).unwrap();
        let b = estimate_fidelity_with(&spec, &l, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        assert!(a.mean < 1.0 && a.mean > 0.0);
    }
}
