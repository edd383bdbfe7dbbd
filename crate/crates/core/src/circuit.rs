//! Gate IR and the nested one-hot encoding circuits.
//!
//! Sector `K` of the encoding register occupies qubits `2^K - 1 .. 2^{K+1} - 2`.
//! Gates are listed in application order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{log2_exact, nohe, Address, EncodingError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gate {
    X(usize),
    Z(usize),
    H(usize),
    Cz(usize, usize),
    Cnot { control: usize, target: usize },
    Swap(usize, usize),
    Toffoli { c0: usize, c1: usize, target: usize },
    Fredkin { control: usize, t0: usize, t1: usize },
}

impl Gate {
    #[must_use]
    pub fn kind(&self) -> &'static str {
        match self {
            Gate::X(_) => "X",
            Gate::Z(_) => "Z",
            Gate::H(_) => "H",
            Gate::Cz(..) => "CZ",
            Gate::Cnot { .. } => "CNOT",
            Gate::Swap(..) => "SWAP",
            Gate::Toffoli { .. } => "TOFFOLI",
            Gate::Fredkin { .. } => "FREDKIN",
        }
    }

    /// Operands, controls first.
    #[must_use]
    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::X(q) | Gate::Z(q) | Gate::H(q) => vec![q],
            Gate::Cz(a, b) | Gate::Swap(a, b) => vec![a, b],
            Gate::Cnot { control, target } => vec![control, target],
            Gate::Toffoli { c0, c1, target } => vec![c0, c1, target],
            Gate::Fredkin { control, t0, t1 } => vec![control, t0, t1],
        }
    }

    #[must_use]
    pub fn is_clifford(&self) -> bool {
        !matches!(self, Gate::Toffoli { .. } | Gate::Fredkin { .. })
    }

    /// Action on a computational basis state; `None` for `H`.
    pub fn apply_classical(&self, bits: &mut [u8]) -> Option<()> {
        match *self {
            Gate::X(q) => bits[q] ^= 1,
            Gate::Z(_) | Gate::Cz(..) => {}
            Gate::H(_) => return None,
            Gate::Cnot { control, target } => bits[target] ^= bits[control],
            Gate::Swap(a, b) => bits.swap(a, b),
            Gate::Toffoli { c0, c1, target } => bits[target] ^= bits[c0] & bits[c1],
            Gate::Fredkin { control, t0, t1 } => {
                if bits[control] == 1 {
                    bits.swap(t0, t1);
                }
            }
        }
        Some(())
    }

    #[must_use]
    pub fn inverse(&self) -> Gate {
        *self
    }

    /// Same gate with every operand relabelled by `f`.
    #[must_use]
    pub fn map_qubits(&self, f: impl Fn(usize) -> usize) -> Gate {
        match *self {
            Gate::X(q) => Gate::X(f(q)),
            Gate::Z(q) => Gate::Z(f(q)),
            Gate::H(q) => Gate::H(f(q)),
            Gate::Cz(a, b) => Gate::Cz(f(a), f(b)),
            Gate::Swap(a, b) => Gate::Swap(f(a), f(b)),
            Gate::Cnot { control, target } => Gate::Cnot { control: f(control), target: f(target) },
            Gate::Toffoli { c0, c1, target } => Gate::Toffoli { c0: f(c0), c1: f(c1), target: f(target) },
            Gate::Fredkin { control, t0, t1 } => Gate::Fredkin { control: f(control), t0: f(t0), t1: f(t1) },
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind())?;
        for q in self.qubits() {
            write!(f, " {q}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CircuitError {
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error("cannot parse gate line {0:?}")]
    Parse(String),
    #[error("layer {layer} touches qubit {qubit} twice")]
    Overlap { layer: usize, qubit: usize },
    #[error("operand {qubit} out of range for {n} qubits")]
    Operand { qubit: usize, n: usize },
}

impl FromStr for Gate {
    type Err = CircuitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CircuitError::Parse(s.to_string());
        let mut it = s.split_whitespace();
        let kind = it.next().ok_or_else(bad)?;
        let q: Vec<usize> = it.map(|t| t.parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
        let g = match (kind, q.as_slice()) {
            ("X", &[a]) => Gate::X(a),
            ("Z", &[a]) => Gate::Z(a),
            ("H", &[a]) => Gate::H(a),
            ("CZ", &[a, b]) => Gate::Cz(a, b),
            ("CNOT", &[a, b]) => Gate::Cnot { control: a, target: b },
            ("SWAP", &[a, b]) => Gate::Swap(a, b),
            ("TOFFOLI", &[a, b, c]) => Gate::Toffoli { c0: a, c1: b, target: c },
            ("FREDKIN", &[a, b, c]) => Gate::Fredkin { control: a, t0: b, t1: c },
            _ => return Err(bad()),
        };
        Ok(g)
    }
}

/// A flat gate sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Circuit {
    pub n_qubits: usize,
    pub gates: Vec<Gate>,
}

/// Gates grouped in qubit-disjoint layers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayeredCircuit {
    pub n_qubits: usize,
    pub layers: Vec<Vec<Gate>>,
    /// First layer in which each qubit is touched (`layers.len()` if never).
    pub alive_from: Vec<usize>,
    /// Number of leading layers holding the input relocation swaps.
    pub swap_layers: usize,
}

impl Circuit {
    pub fn simulate(&self, bits: &mut [u8]) {
        for g in &self.gates {
            g.apply_classical(bits).expect("classical gate");
        }
    }

    #[must_use]
    pub fn inverse(&self) -> Circuit {
        Circuit {
            n_qubits: self.n_qubits,
            gates: self.gates.iter().rev().map(Gate::inverse).collect(),
        }
    }

    #[must_use]
    pub fn to_text(&self) -> String {
        self.gates.iter().map(|g| format!("{g}\n")).collect()
    }
}

impl LayeredCircuit {
    pub fn from_layers(n_qubits: usize, layers: Vec<Vec<Gate>>, swap_layers: usize) -> Self {
        let mut alive_from = vec![layers.len(); n_qubits];
        for (t, layer) in layers.iter().enumerate() {
            for g in layer {
                for q in g.qubits() {
                    alive_from[q] = alive_from[q].min(t);
                }
            }
        }
        Self { n_qubits, layers, alive_from, swap_layers }
    }

    pub fn check_disjoint(&self) -> Result<(), CircuitError> {
        let mut seen = vec![usize::MAX; self.n_qubits];
        for (t, layer) in self.layers.iter().enumerate() {
            for g in layer {
                for q in g.qubits() {
                    if q >= self.n_qubits {
                        return Err(CircuitError::Operand { qubit: q, n: self.n_qubits });
                    }
                    if seen[q] == t {
                        return Err(CircuitError::Overlap { layer: t, qubit: q });
                    }
                    seen[q] = t;
                }
            }
        }
        Ok(())
    }

    #[must_use]
    pub fn flatten(&self) -> Circuit {
        Circuit { n_qubits: self.n_qubits, gates: self.layers.iter().flatten().copied().collect() }
    }

    pub fn simulate(&self, bits: &mut [u8]) {
        for g in self.layers.iter().flatten() {
            g.apply_classical(bits).expect("classical gate");
        }
    }

    #[must_use]
    pub fn cs_layers(&self) -> &[Vec<Gate>] {
        &self.layers[self.swap_layers..]
    }

    /// One gate per line, layers separated by `---`.
    #[must_use]
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (t, layer) in self.layers.iter().enumerate() {
            if t > 0 {
                out.push_str("---\n");
            }
            for g in layer {
                out.push_str(&format!("{g}\n"));
            }
        }
        out
    }

    pub fn from_text(n_qubits: usize, text: &str) -> Result<Self, CircuitError> {
        let mut layers = vec![Vec::new()];
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if line == "---" {
                layers.push(Vec::new());
            } else {
                layers.last_mut().expect("non-empty").push(line.parse()?);
            }
        }
        Ok(Self::from_layers(n_qubits, layers, 0))
    }
}

/// Highest sector index: `logN - 1` without bus, `logN` with bus.
fn s_max(log_n: u32, with_bus: bool) -> u32 {
    if with_bus {
        log_n
    } else {
        log_n - 1
    }
}

/// Qubit count of the encoding register.
pub fn register_size(n: usize, with_bus: bool) -> Result<usize, CircuitError> {
    let log_n = log2_exact(n)?;
    Ok((1usize << (s_max(log_n, with_bus) + 1)) - 1)
}

/// First qubit of sector `k`.
#[must_use]
pub fn sector_head(k: u32) -> usize {
    (1usize << k) - 1
}

/// `CS-bar(K|J)`: the `2^K` Fredkins controlled by sector `K`, acting on sector `J`.
#[must_use]
pub fn cs_bar(k: u32, j: u32) -> Vec<Gate> {
    let (two_k, two_j) = (1usize << k, 1usize << j);
    (two_k - 1..=2 * (two_k - 1))
        .map(|alpha| Gate::Fredkin { control: alpha, t0: alpha + two_j - two_k, t1: alpha + two_j })
        .collect()
}

/// Swaps moving input bit `K` from qubit `K` to the head of sector `K`.
fn input_swaps(smax: u32) -> Vec<Gate> {
    (2..=smax).rev().map(|k| Gate::Swap(k as usize, sector_head(k))).collect()
}

pub fn build_nohe_sequential(n: usize, with_bus: bool) -> Result<Circuit, CircuitError> {
    let log_n = log2_exact(n)?;
    let smax = s_max(log_n, with_bus);
    let mut gates = input_swaps(smax);
    for k in 0..smax {
        for j in k + 1..=smax {
            gates.extend(cs_bar(k, j));
        }
    }
    Ok(Circuit { n_qubits: register_size(n, with_bus)?, gates })
}

/// Greedy qubit-disjoint layering that preserves the order of dependent gates.
fn pack_layers(n_qubits: usize, gates: &[Gate]) -> Vec<Vec<Gate>> {
    let mut ready = vec![0usize; n_qubits];
    let mut layers: Vec<Vec<Gate>> = Vec::new();
    for g in gates {
        let qs = g.qubits();
        let t = qs.iter().map(|&q| ready[q]).max().unwrap_or(0);
        if layers.len() <= t {
            layers.resize_with(t + 1, Vec::new);
        }
        layers[t].push(*g);
        for q in qs {
            ready[q] = t + 1;
        }
    }
    layers
}

/// Swap stage, then CS layers `T = 1..=2 S_max - 1` holding `CS-bar(K|T-K)`.
pub fn build_nohe_parallel(n: usize, with_bus: bool) -> Result<LayeredCircuit, CircuitError> {
    let log_n = log2_exact(n)?;
    let smax = s_max(log_n, with_bus);
    let n_qubits = register_size(n, with_bus)?;
    let mut layers = pack_layers(n_qubits, &input_swaps(smax));
    let swap_layers = layers.len();
    for t in 1..2 * smax {
        let lo = t.saturating_sub(smax);
        let hi = (t - 1) / 2;
        let layer: Vec<Gate> = (lo..=hi).flat_map(|k| cs_bar(k, t - k)).collect();
        layers.push(layer);
    }
    Ok(LayeredCircuit::from_layers(n_qubits, layers, swap_layers))
}

fn expand_gate(g: &Gate) -> [Option<Gate>; 2] {
    match *g {
        Gate::Fredkin { control, t0, t1 } => [
            Some(Gate::Toffoli { c0: control, c1: t0, target: t1 }),
            Some(Gate::Cnot { control: t1, target: t0 }),
        ],
        other => [Some(other), None],
    }
}

/// Replaces every Fredkin `CS(a|b,c)` by `TOFFOLI(a,b;c)` then `CNOT(c;b)`.
#[must_use]
pub fn expand_gadgets(c: &Circuit) -> Circuit {
    Circuit {
        n_qubits: c.n_qubits,
        gates: c.gates.iter().flat_map(expand_gate).flatten().collect(),
    }
}

/// Layered variant: a layer with Fredkins becomes a Toffoli layer and a CNOT layer.
#[must_use]
pub fn expand_gadgets_layered(c: &LayeredCircuit) -> LayeredCircuit {
    let mut layers = Vec::new();
    for layer in &c.layers {
        let first: Vec<Gate> = layer.iter().map(|g| expand_gate(g)[0].expect("first")).collect();
        let second: Vec<Gate> = layer.iter().filter_map(|g| expand_gate(g)[1]).collect();
        layers.push(first);
        if !second.is_empty() {
            layers.push(second);
        }
    }
    LayeredCircuit::from_layers(c.n_qubits, layers, c.swap_layers)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub n: usize,
    pub with_bus: bool,
    pub toffoli_count: usize,
    pub toffoli_closed_form: usize,
    pub t_count: usize,
    pub cs_layer_depth: usize,
    /// CS layers plus one step for the input relocation.
    pub total_depth: usize,
    pub gate_total: usize,
}

/// `N - logN - 1` without bus, `2N - logN - 2` with bus.
pub fn toffoli_closed_form(n: usize, with_bus: bool) -> Result<usize, CircuitError> {
    let log_n = log2_exact(n)? as usize;
    Ok(if with_bus { 2 * n - log_n - 2 } else { n - log_n - 1 })
}

pub fn count_costs(n: usize, with_bus: bool) -> Result<CostReport, CircuitError> {
    let layered = build_nohe_parallel(n, with_bus)?;
    let expanded = expand_gadgets(&layered.flatten());
    let toffoli_count =
        expanded.gates.iter().filter(|g| matches!(g, Gate::Toffoli { .. })).count();
    let cs_layer_depth = layered.cs_layers().len();
    Ok(CostReport {
        n,
        with_bus,
        toffoli_count,
        toffoli_closed_form: toffoli_closed_form(n, with_bus)?,
        t_count: 4 * toffoli_count,
        cs_layer_depth,
        total_depth: cs_layer_depth + 1,
        gate_total: expanded.gates.len(),
    })
}

/// Input basis state `|x⟩ ⊗ |bus⟩ ⊗ |0…0⟩` on the unswapped register.
#[must_use]
pub fn input_bits(n_qubits: usize, x: &Address, bus: Option<u8>) -> Vec<u8> {
    let mut bits = vec![0u8; n_qubits];
    for k in 0..x.log_n() {
        bits[k as usize] = x.bit(k);
    }
    if let Some(b) = bus {
        bits[x.log_n() as usize] = b;
    }
    bits
}

/// Expected output on the encoding register, with the bus treated as the top address bit.
#[must_use]
pub fn expected_output(x: &Address, bus: Option<u8>) -> Vec<u8> {
    match bus {
        None => nohe(x).flatten(),
        Some(b) => {
            let big = Address::from_index(x.index() | (usize::from(b) << x.log_n()), 2 * x.n())
                .expect("in range");
            nohe(&big).flatten()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub n: usize,
    pub inputs_checked: usize,
    pub all_basis_inputs: bool,
    pub first_mismatch: Option<String>,
}

impl EquivalenceReport {
    #[must_use]
    pub fn passed(&self) -> bool {
        self.first_mismatch.is_none()
    }
}

/// Sequential, parallel and gadget-expanded NOHE circuits (no bus) against [`nohe`].
///
/// For `N <= 16` the three unexpanded orderings are also compared on every basis input.
pub fn verify_equivalence(n: usize) -> Result<EquivalenceReport, CircuitError> {
    let seq = build_nohe_sequential(n, false)?;
    let par = build_nohe_parallel(n, false)?.flatten();
    let exp_seq = expand_gadgets(&seq);
    let exp_par = expand_gadgets(&par);
    let nq = seq.n_qubits;
    let mut checked = 0;
    for x in Address::all(n)? {
        let want = expected_output(&x, None);
        for (name, c) in [("sequential", &seq), ("parallel", &par), ("expanded", &exp_seq), ("expanded-parallel", &exp_par)] {
            let mut bits = input_bits(nq, &x, None);
            c.simulate(&mut bits);
            checked += 1;
            if bits != want {
                return Ok(EquivalenceReport {
                    n,
                    inputs_checked: checked,
                    all_basis_inputs: false,
                    first_mismatch: Some(format!("{name} circuit, x = {}", x.index())),
                });
            }
        }
    }
    let all_basis_inputs = n <= 16;
    if all_basis_inputs {
        for input in 0..1usize << nq {
            let start: Vec<u8> = (0..nq).map(|q| ((input >> q) & 1) as u8).collect();
            let (mut a, mut b) = (start.clone(), start);
            seq.simulate(&mut a);
            par.simulate(&mut b);
            checked += 1;
            if a != b {
                return Ok(EquivalenceReport {
                    n,
                    inputs_checked: checked,
                    all_basis_inputs,
                    first_mismatch: Some(format!("orderings differ on basis input {input}")),
                });
            }
        }
    }
    Ok(EquivalenceReport { n, inputs_checked: checked, all_basis_inputs, first_mismatch: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fred(c: usize, a: usize, b: usize) -> Gate {
        Gate::Fredkin { control: c, t0: a, t1: b }
    }

    #[test]
    fn n4_is_one_fredkin() {
        let c = build_nohe_sequential(4, false).unwrap();
        assert_eq!(c.gates, vec![fred(0, 1, 2)]);
        for j in 0..2u8 {
            let mut bits = vec![1, j, 0];
            c.simulate(&mut bits);
            assert_eq!(bits, vec![1, 0, j]);
        }
    }

    #[test]
    fn n8_gate_list() {
        let c = build_nohe_sequential(8, false).unwrap();
        assert_eq!(
            c.gates,
            vec![Gate::Swap(2, 3), fred(0, 1, 2), fred(0, 3, 4), fred(1, 3, 5), fred(2, 4, 6)]
        );
        assert_eq!(cs_bar(3, 5).len(), 8);
    }

    #[test]
    fn parallel_layers() {
        let p = build_nohe_parallel(8, false).unwrap();
        let cs = p.cs_layers();
        assert_eq!(cs.len(), 3);
        assert_eq!(cs[0], cs_bar(0, 1));
        assert_eq!(cs[1], cs_bar(0, 2));
        assert_eq!(cs[2], cs_bar(1, 2));
        assert_eq!(build_nohe_parallel(16, false).unwrap().cs_layers().len(), 5);
        assert_eq!(build_nohe_parallel(8, true).unwrap().cs_layers().len(), 5);
        p.check_disjoint().unwrap();
    }

    #[test]
    fn swap_stage_is_layered() {
        let p = build_nohe_parallel(256, true).unwrap();
        p.check_disjoint().unwrap();
        assert!(p.swap_layers >= 2);
    }

    #[test]
    fn gadget_matches_fredkin_on_zero_target() {
        let c = Circuit { n_qubits: 3, gates: vec![fred(0, 1, 2)] };
        let e = expand_gadgets(&c);
        for i in 0..2u8 {
            for j in 0..2u8 {
                let (mut a, mut b) = (vec![i, j, 0], vec![i, j, 0]);
                c.simulate(&mut a);
                e.simulate(&mut b);
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn costs() {
        let r = count_costs(8, false).unwrap();
        assert_eq!((r.toffoli_count, r.t_count), (4, 16));
        let r = count_costs(8, true).unwrap();
        assert_eq!((r.toffoli_count, r.t_count, r.cs_layer_depth), (11, 44, 5));
    }

    #[test]
    fn equivalence_small() {
        for n in [4, 8, 16, 32] {
            assert!(verify_equivalence(n).unwrap().passed(), "N = {n}");
        }
    }

    #[test]
    fn text_round_trip() {
        let p = expand_gadgets_layered(&build_nohe_parallel(16, true).unwrap());
        let back = LayeredCircuit::from_text(p.n_qubits, &p.to_text()).unwrap();
        assert_eq!(back.layers, p.layers);
    }
}
