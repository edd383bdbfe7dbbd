//! Neutral-atom factory: trap layout, the three AOD rearrangement layers, Bell-pair
//! distribution against the nested bifurcation graph, and the preparation-time model.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{build_nohe_parallel, CircuitError, Gate};
use crate::encoding::{log2_exact, EncodingError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactoryError {
    #[error("invalid trap label {0:?}")]
    Trap(TrapId),
    #[error("factory needs N >= 4, got {0}")]
    Size(usize),
    #[error("timing input {name} must be positive, got {value}")]
    Timing { name: &'static str, value: f64 },
    #[error("move layer {layer} is not executable: {reason}")]
    Layer { layer: usize, reason: String },
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

/// Static trap `(K, C, S, x, y)`: sector, column, station and position in the 3×3 cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrapId {
    pub k: usize,
    pub c: usize,
    pub s: usize,
    pub x: usize,
    pub y: usize,
}

impl TrapId {
    #[must_use]
    pub const fn new(k: usize, c: usize, s: usize, x: usize, y: usize) -> Self {
        Self { k, c, s, x, y }
    }

    #[must_use]
    pub fn station(&self) -> Station {
        Station { k: self.k, c: self.c, s: self.s }
    }

    fn is_valid(&self) -> bool {
        self.c <= self.k
            && self.c < usize::BITS as usize
            && self.s < 1usize << self.c
            && (1..=3).contains(&self.x)
            && (1..=3).contains(&self.y)
            && (self.x, self.y) != (1, 3)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Station {
    pub k: usize,
    pub c: usize,
    pub s: usize,
}

/// `X = x + 3C + 3K(K+1)/2`, `Y = y + 3S`.
pub fn trap_coord(t: &TrapId) -> Result<(usize, usize), FactoryError> {
    if !t.is_valid() {
        return Err(FactoryError::Trap(*t));
    }
    Ok((t.x + 3 * t.c + 3 * t.k * (t.k + 1) / 2, t.y + 3 * t.s))
}

fn log_n_of(n: usize) -> Result<usize, FactoryError> {
    let log_n = log2_exact(n)? as usize;
    if n < 4 {
        return Err(FactoryError::Size(n));
    }
    Ok(log_n)
}

/// All stations for memory size `N`, sector-major.
pub fn stations(n: usize) -> Result<Vec<Station>, FactoryError> {
    let log_n = log_n_of(n)?;
    Ok((0..log_n)
        .flat_map(|k| (0..=k).flat_map(move |c| (0..1usize << c).map(move |s| Station { k, c, s })))
        .collect())
}

/// Every trap of the layout.
pub fn all_traps(n: usize) -> Result<Vec<TrapId>, FactoryError> {
    let mut out = Vec::new();
    for st in stations(n)? {
        for x in 1..=3 {
            for y in 1..=3 {
                if (x, y) != (1, 3) {
                    out.push(TrapId::new(st.k, st.c, st.s, x, y));
                }
            }
        }
    }
    Ok(out)
}

/// Atom positions and the Bell bonds between atoms.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AtomLayout {
    pub n: usize,
    pub log_n: usize,
    /// Trap to atom id.
    pub atoms: BTreeMap<TrapId, usize>,
    pub bonds: Vec<(usize, usize)>,
}

impl AtomLayout {
    #[must_use]
    pub fn is_occupied(&self, t: &TrapId) -> bool {
        self.atoms.contains_key(t)
    }

    /// Station of every atom.
    #[must_use]
    pub fn atom_stations(&self) -> HashMap<usize, Station> {
        self.atoms.iter().map(|(t, &a)| (a, t.station())).collect()
    }

    /// Bonds between different stations, as unordered station pairs.
    #[must_use]
    pub fn station_bonds(&self) -> BTreeSet<(Station, Station)> {
        let at = self.atom_stations();
        self.bonds
            .iter()
            .filter_map(|(a, b)| {
                let (sa, sb) = (at[a], at[b]);
                (sa != sb).then(|| (sa.min(sb), sa.max(sb)))
            })
            .collect()
    }

    fn in_range(&self, t: &TrapId) -> bool {
        t.is_valid() && t.k < self.log_n
    }

    /// Executes one layer after validating it.
    pub fn apply(&mut self, layer: &MoveLayer, index: usize) -> Result<(), FactoryError> {
        if let Err(reason) = check_layer(layer, self) {
            return Err(FactoryError::Layer { layer: index, reason });
        }
        let moved: Vec<(TrapId, usize)> =
            layer.moves.iter().map(|m| (m.to, self.atoms.remove(&m.from).expect("checked"))).collect();
        self.atoms.extend(moved);
        Ok(())
    }
}

/// Five atoms per station at `(1,1),(1,2),(2,1),(2,2),(2,3)`, bonded horizontally
/// `(1,y)–(2,y)` for `y = 1, 2`; `(2,3)` holds a `|0⟩` ancilla.
pub fn initial_occupancy(n: usize) -> Result<AtomLayout, FactoryError> {
    let log_n = log_n_of(n)?;
    let mut atoms = BTreeMap::new();
    let mut bonds = Vec::new();
    let mut next = 0;
    for st in stations(n)? {
        let mut put = |x, y| {
            atoms.insert(TrapId::new(st.k, st.c, st.s, x, y), next);
            next += 1;
            next - 1
        };
        for y in 1..=2 {
            let a = put(1, y);
            let b = put(2, y);
            bonds.push((a, b));
        }
        put(2, 3);
    }
    Ok(AtomLayout { n, log_n, atoms, bonds })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Move {
    pub from: TrapId,
    pub to: TrapId,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveLayer {
    pub moves: Vec<Move>,
}

/// Three layers: within sectors, between neighbouring sectors, and between the outermost
/// columns of neighbouring sectors.
pub fn plan_rearrangement(n: usize) -> Result<[MoveLayer; 3], FactoryError> {
    let st = stations(n)?;
    let merge = |k_to: usize, c: usize, s: usize| TrapId::new(k_to, c - 1, s / 2, 3, 2 + s % 2);
    let l1 = st
        .iter()
        .filter(|s| s.c > 0)
        .map(|s| Move { from: TrapId::new(s.k, s.c, s.s, 1, 2), to: merge(s.k, s.c, s.s) })
        .collect();
    let l2 = st
        .iter()
        .filter(|s| s.k > 0 && s.c < s.k)
        .map(|s| Move { from: TrapId::new(s.k, s.c, s.s, 1, 1), to: TrapId::new(s.k - 1, s.c, s.s, 3, 1) })
        .collect();
    let l3 = st
        .iter()
        .filter(|s| s.k > 0 && s.c == s.k)
        .map(|s| Move { from: TrapId::new(s.k, s.c, s.s, 1, 1), to: merge(s.k - 1, s.c, s.s) })
        .collect();
    Ok([MoveLayer { moves: l1 }, MoveLayer { moves: l2 }, MoveLayer { moves: l3 }])
}

fn monotone_map(pairs: impl Iterator<Item = (usize, usize)>) -> Result<(), String> {
    let mut map: BTreeMap<usize, usize> = BTreeMap::new();
    for (a, b) in pairs {
        if let Some(&old) = map.get(&a) {
            if old != b {
                return Err(format!("coordinate {a} sent to both {old} and {b}"));
            }
        }
        map.insert(a, b);
    }
    let images: Vec<usize> = map.values().copied().collect();
    if images.windows(2).any(|w| w[0] >= w[1]) {
        return Err("coordinate order not preserved".into());
    }
    Ok(())
}

fn check_layer(layer: &MoveLayer, layout: &AtomLayout) -> Result<(), String> {
    let mut targets = BTreeSet::new();
    let mut coords = Vec::with_capacity(layer.moves.len());
    for m in &layer.moves {
        if !layout.in_range(&m.from) || !layout.in_range(&m.to) {
            return Err(format!("trap outside layout in {m:?}"));
        }
        if !layout.is_occupied(&m.from) {
            return Err(format!("source {:?} empty", m.from));
        }
        if layout.is_occupied(&m.to) {
            return Err(format!("target {:?} occupied", m.to));
        }
        if !targets.insert(m.to) {
            return Err(format!("two atoms sent to {:?}", m.to));
        }
        let f = trap_coord(&m.from).map_err(|e| e.to_string())?;
        let t = trap_coord(&m.to).map_err(|e| e.to_string())?;
        coords.push((f, t));
    }
    monotone_map(coords.iter().map(|(f, t)| (f.0, t.0)))?;
    monotone_map(coords.iter().map(|(f, t)| (f.1, t.1)))
}

/// Rigid AOD transport: source occupancy, empty and distinct targets, and start
/// columns (rows) mapped to end columns (rows) by a strictly increasing function.
#[must_use]
pub fn validate_aod_layer(layer: &MoveLayer, layout: &AtomLayout) -> bool {
    check_layer(layer, layout).is_ok()
}

/// One gadget of the with-bus parallel schedule: `CS-bar(K|J)` instance `index`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GadgetId {
    pub k: usize,
    pub j: usize,
    pub index: usize,
}

/// Directed graph of gadgets; an edge `u → v` means `v` consumes a qubit last used by `u`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NbGraph {
    pub vertices: Vec<GadgetId>,
    pub edges: BTreeSet<(usize, usize)>,
}

impl NbGraph {
    /// Edges with both ends in subgraph `j` (the binary tree of sector `j`).
    #[must_use]
    pub fn tree_edges(&self, j: usize) -> usize {
        self.edges.iter().filter(|&&(u, v)| self.vertices[u].j == j && self.vertices[v].j == j).count()
    }
}

fn gadget_of(g: &Gate) -> Option<GadgetId> {
    let Gate::Fredkin { control, t0, .. } = *g else { return None };
    let k = (control + 1).ilog2() as usize;
    let j = (t0 - control + (1 << k)).ilog2() as usize;
    Some(GadgetId { k, j, index: control + 1 - (1 << k) })
}

/// Data-flow graph of the with-bus parallel NOHE circuit.
pub fn build_nbg(n: usize) -> Result<NbGraph, FactoryError> {
    log_n_of(n)?;
    let circ = build_nohe_parallel(n, true)?;
    let mut vertices = Vec::new();
    let mut edges = BTreeSet::new();
    let mut last: HashMap<usize, usize> = HashMap::new();
    for g in circ.cs_layers().iter().flatten() {
        let Some(id) = gadget_of(g) else { continue };
        let v = vertices.len();
        vertices.push(id);
        for q in g.qubits() {
            if let Some(u) = last.insert(q, v) {
                edges.insert((u, v));
            }
        }
    }
    Ok(NbGraph { vertices, edges })
}

fn bit_reverse(s: usize, bits: usize) -> usize {
    (0..bits).fold(0, |acc, i| acc | (((s >> i) & 1) << (bits - 1 - i)))
}

/// Station hosting a gadget: sector `J−1`, column `K`, station = bit reversal of the index.
#[must_use]
pub fn station_of(g: &GadgetId) -> Station {
    Station { k: g.j - 1, c: g.k, s: bit_reverse(g.index, g.k) }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BpdReport {
    pub n: usize,
    pub stations: usize,
    pub vertices: usize,
    pub nbg_edges: usize,
    pub bonds: usize,
    pub layers_valid: [bool; 3],
    pub missing: Vec<(Station, Station)>,
    pub extra: Vec<(Station, Station)>,
}

impl BpdReport {
    #[must_use]
    pub fn passed(&self) -> bool {
        self.layers_valid.iter().all(|&v| v)
            && self.missing.is_empty()
            && self.extra.is_empty()
            && self.stations == self.vertices
    }
}

/// Replays the three layers and compares inter-station bonds with the graph edges.
pub fn verify_bpd(n: usize) -> Result<BpdReport, FactoryError> {
    let mut layout = initial_occupancy(n)?;
    let plan = plan_rearrangement(n)?;
    let mut layers_valid = [false; 3];
    for (i, layer) in plan.iter().enumerate() {
        layers_valid[i] = validate_aod_layer(layer, &layout);
        if layers_valid[i] {
            layout.apply(layer, i)?;
        }
    }
    let g = build_nbg(n)?;
    let want: BTreeSet<(Station, Station)> = g
        .edges
        .iter()
        .map(|&(u, v)| {
            let (a, b) = (station_of(&g.vertices[u]), station_of(&g.vertices[v]));
            (a.min(b), a.max(b))
        })
        .collect();
    let have = layout.station_bonds();
    Ok(BpdReport {
        n,
        stations: stations(n)?.len(),
        vertices: g.vertices.len(),
        nbg_edges: want.len(),
        bonds: have.len(),
        layers_valid,
        missing: want.difference(&have).copied().collect(),
        extra: have.difference(&want).copied().collect(),
    })
}

/// CSV row of the exported move plan.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveRow {
    pub layer: usize,
    #[serde(rename = "from_X")]
    pub from_x: usize,
    #[serde(rename = "from_Y")]
    pub from_y: usize,
    #[serde(rename = "to_X")]
    pub to_x: usize,
    #[serde(rename = "to_Y")]
    pub to_y: usize,
}

/// The plan as grid coordinates, layers numbered from 1.
pub fn move_plan_rows(n: usize) -> Result<Vec<MoveRow>, FactoryError> {
    let mut rows = Vec::new();
    for (i, layer) in plan_rearrangement(n)?.iter().enumerate() {
        for m in &layer.moves {
            let (fx, fy) = trap_coord(&m.from)?;
            let (tx, ty) = trap_coord(&m.to)?;
            rows.push(MoveRow { layer: i + 1, from_x: fx, from_y: fy, to_x: tx, to_y: ty });
        }
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Columns laid out in a line: `T_r = 3√(3N/2)·T`.
    Linear,
    /// Columns compacted in 2D: `T_r = 3√6·T·N^{1/4}`.
    Optimized,
}

/// Times in µs, distances in µm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingInputs {
    pub n: usize,
    pub tau_us: f64,
    /// Single-hop move time; derived from `T0·√(l/d0)` when absent.
    pub t_us: Option<f64>,
    pub t0_us: f64,
    pub d0_um: f64,
    pub l_um: f64,
    pub scheme: Scheme,
}

impl TimingInputs {
    #[must_use]
    pub fn defaults(n: usize) -> Self {
        Self { n, tau_us: 500.0, t_us: None, t0_us: 200.0, d0_um: 110.0, l_um: 3.0, scheme: Scheme::Optimized }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub inputs: TimingInputs,
    #[serde(rename = "T_us")]
    pub t_us: f64,
    #[serde(rename = "T_r_us")]
    pub t_r_us: f64,
    #[serde(rename = "T_m_us")]
    pub t_m_us: f64,
    #[serde(rename = "T_g_us")]
    pub t_g_us: f64,
    #[serde(rename = "T_Phi_us")]
    pub t_phi_us: f64,
    #[serde(rename = "T_query_us")]
    pub t_query_us: f64,
    pub rate_khz: f64,
    pub rearrangement_fraction: f64,
}

/// Move time across distance `d`: `T0·√(d/d0)`.
#[must_use]
pub fn move_time(d_um: f64, t0_us: f64, d0_um: f64) -> f64 {
    t0_us * (d_um / d0_um).sqrt()
}

pub fn timing_report(inp: &TimingInputs) -> Result<TimingReport, FactoryError> {
    let log_n = log_n_of(inp.n)? as f64;
    for (name, value) in [("tau", inp.tau_us), ("T0", inp.t0_us), ("d0", inp.d0_um), ("l", inp.l_um)] {
        if value.is_nan() || value <= 0.0 {
            return Err(FactoryError::Timing { name, value });
        }
    }
    let t = match inp.t_us {
        Some(t) if t.is_nan() || t <= 0.0 => return Err(FactoryError::Timing { name: "T", value: t }),
        Some(t) => t,
        None => move_time(inp.l_um, inp.t0_us, inp.d0_um),
    };
    let n = inp.n as f64;
    let t_r = match inp.scheme {
        Scheme::Linear => 3.0 * (1.5 * n).sqrt() * t,
        Scheme::Optimized => 3.0 * 6f64.sqrt() * t * n.powf(0.25),
    };
    let t_m = 2.0 * inp.tau_us * log_n;
    let t_g = 0.0;
    let t_phi = t_r + t_m + t_g;
    Ok(TimingReport {
        inputs: *inp,
        t_us: t,
        t_r_us: t_r,
        t_m_us: t_m,
        t_g_us: t_g,
        t_phi_us: t_phi,
        t_query_us: 2.0 * inp.tau_us * log_n,
        rate_khz: 1e3 / t_phi,
        rearrangement_fraction: t_r / t_phi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinates() {
        assert_eq!(trap_coord(&TrapId::new(0, 0, 0, 1, 1)).unwrap(), (1, 1));
        assert_eq!(trap_coord(&TrapId::new(1, 1, 0, 2, 3)).unwrap(), (8, 3));
        assert_eq!(trap_coord(&TrapId::new(2, 0, 0, 1, 1)).unwrap(), (10, 1));
        assert!(trap_coord(&TrapId::new(1, 1, 0, 1, 3)).is_err());
        assert!(trap_coord(&TrapId::new(1, 2, 0, 1, 1)).is_err());
        assert!(trap_coord(&TrapId::new(2, 1, 2, 1, 1)).is_err());
    }

    #[test]
    fn injective() {
        for n in [4, 8, 64, 1024] {
            let traps = all_traps(n).unwrap();
            let coords: BTreeSet<_> = traps.iter().map(|t| trap_coord(t).unwrap()).collect();
            assert_eq!(coords.len(), traps.len());
        }
    }

    #[test]
    fn occupancy_counts() {
        let l = initial_occupancy(8).unwrap();
        assert_eq!(stations(8).unwrap().len(), 11);
        assert_eq!(l.atoms.len(), 55);
        assert_eq!(all_traps(8).unwrap().len(), 88);
        assert_eq!(l.bonds.len(), 22);
        assert!(l.atoms.keys().all(|t| t.x != 3));
        for k in 1..16 {
            let n = 1usize << k;
            if n >= 4 {
                assert_eq!(stations(n).unwrap().len(), 2 * n - k - 2);
            }
        }
    }

    #[test]
    fn plan_examples() {
        let [l1, l2, _] = plan_rearrangement(8).unwrap();
        assert!(l2
            .moves
            .contains(&Move { from: TrapId::new(2, 1, 0, 1, 1), to: TrapId::new(1, 1, 0, 3, 1) }));
        let into: Vec<_> = l1.moves.iter().filter(|m| m.from.k == 2 && m.from.c == 2).map(|m| m.to).collect();
        assert!(into.contains(&TrapId::new(2, 1, 0, 3, 2)));
        assert!(into.contains(&TrapId::new(2, 1, 0, 3, 3)));
        let p = plan_rearrangement(4).unwrap();
        let counts: Vec<usize> = p.iter().map(|l| l.moves.len()).collect();
        assert_eq!(counts, vec![2, 1, 2]);
    }

    #[test]
    fn layers_valid_and_crossing_fails() {
        for k in 2..=12 {
            let n = 1 << k;
            let mut layout = initial_occupancy(n).unwrap();
            for (i, layer) in plan_rearrangement(n).unwrap().iter().enumerate() {
                assert!(validate_aod_layer(layer, &layout), "N={n} layer {i}");
                layout.apply(layer, i).unwrap();
            }
        }
        let layout = initial_occupancy(8).unwrap();
        assert!(validate_aod_layer(&MoveLayer::default(), &layout));
        let crossing = MoveLayer {
            moves: vec![
                Move { from: TrapId::new(1, 1, 0, 1, 1), to: TrapId::new(1, 1, 1, 3, 1) },
                Move { from: TrapId::new(1, 1, 1, 1, 1), to: TrapId::new(1, 1, 0, 3, 1) },
            ],
        };
        assert!(!validate_aod_layer(&crossing, &layout));
    }

    #[test]
    fn nbg_counts_and_bpd() {
        let g = build_nbg(16).unwrap();
        assert_eq!(g.vertices.len(), 26);
        for j in 1..=4 {
            assert_eq!(g.tree_edges(j), (1 << j) - 2);
        }
        for n in [4, 8, 16, 64, 256] {
            let r = verify_bpd(n).unwrap();
            assert!(r.passed(), "{r:?}");
        }
    }

    #[test]
    fn timing_numbers() {
        let mut inp = TimingInputs::defaults(8192);
        inp.t_us = Some(33.0);
        let r = timing_report(&inp).unwrap();
        assert_eq!(r.t_query_us, 13_000.0);
        assert!((r.t_phi_us - (r.t_r_us + r.t_m_us + r.t_g_us)).abs() < 1e-9);
        assert!(r.rate_khz > 0.05 && r.rate_khz < 0.15);
        assert!(r.rearrangement_fraction > 0.10 && r.rearrangement_fraction < 0.17);
        let derived = timing_report(&TimingInputs::defaults(8192)).unwrap();
        assert!((derived.t_us - 33.03).abs() < 0.01);
        let ratio = |n: usize| {
            let mut a = TimingInputs::defaults(n);
            let o = timing_report(&a).unwrap().t_r_us;
            a.scheme = Scheme::Linear;
            o / timing_report(&a).unwrap().t_r_us
        };
        let (r1, r2) = (ratio(1 << 8), ratio(1 << 12));
        assert!((r1 / r2 - 2.0).abs() < 1e-9);
        inp.tau_us = 0.0;
        assert!(timing_report(&inp).is_err());
    }
}
