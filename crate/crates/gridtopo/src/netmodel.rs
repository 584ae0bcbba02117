//! Three-phase feeder data model: buses, lines, switches, loads, and the
//! switch-dependent topology graph.
//!
//! A feeder is described by a JSON file (see `parse_feeder`) holding physical
//! quantities (ohms, kW). Impedances are converted to per-unit once at parse
//! time; everything downstream works in per-unit.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema violation in {path}: {source}")]
    Schema {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("duplicate id `{id}` among {kind}")]
    DuplicateId { kind: &'static str, id: String },
    #[error("invariant `{invariant}` violated by `{element}`: {detail}")]
    Invariant {
        invariant: &'static str,
        element: String,
        detail: String,
    },
    #[error("switch vector length {got} does not match switch count {want}")]
    LengthMismatch { got: usize, want: usize },
}

pub type Result<T> = std::result::Result<T, NetError>;

/// One of the three phases, ordered `a < b < c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn letter(self) -> char {
        match self {
            Phase::A => 'a',
            Phase::B => 'b',
            Phase::C => 'c',
        }
    }

    fn from_letter(c: char) -> Option<Phase> {
        match c {
            'a' => Some(Phase::A),
            'b' => Some(Phase::B),
            'c' => Some(Phase::C),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Phase::A => 0,
            Phase::B => 1,
            Phase::C => 2,
        }
    }
}

/// Non-empty subset of {a, b, c}. Serialized as a string like `"abc"` or `"b"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PhaseSet {
    mask: u8,
}

impl PhaseSet {
    pub fn new(phases: &[Phase]) -> PhaseSet {
        let mut mask = 0u8;
        for p in phases {
            mask |= 1 << p.index();
        }
        PhaseSet { mask }
    }

    pub fn from_str_strict(s: &str) -> Option<PhaseSet> {
        let mut mask = 0u8;
        for c in s.chars() {
            let p = Phase::from_letter(c)?;
            if mask & (1 << p.index()) != 0 {
                return None;
            }
            mask |= 1 << p.index();
        }
        if mask == 0 {
            None
        } else {
            Some(PhaseSet { mask })
        }
    }

    pub fn contains(&self, p: Phase) -> bool {
        self.mask & (1 << p.index()) != 0
    }

    pub fn is_subset_of(&self, other: &PhaseSet) -> bool {
        self.mask & !other.mask == 0
    }

    pub fn len(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    /// Phases in `a, b, c` order.
    pub fn iter(&self) -> impl Iterator<Item = Phase> + '_ {
        Phase::ALL.into_iter().filter(|p| self.contains(*p))
    }

    /// Position of `p` within this set's phase ordering.
    pub fn offset_of(&self, p: Phase) -> Option<usize> {
        self.iter().position(|q| q == p)
    }
}

impl fmt::Display for PhaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in self.iter() {
            write!(f, "{}", p.letter())?;
        }
        Ok(())
    }
}

impl Serialize for PhaseSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PhaseSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        PhaseSet::from_str_strict(&s).ok_or_else(|| {
            serde::de::Error::custom(format!(
                "invalid phase set `{s}` (expected non-empty subset of \"abc\")"
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Source,
    Junction,
    Load,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: String,
    pub phases: PhaseSet,
    pub kind: BusKind,
}

/// Complex square matrix serialized as a row-major array of `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    pub dim: usize,
    pub data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(dim: usize) -> CMat {
        CMat {
            dim,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn at(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.dim + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.dim + c] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        for r in 0..self.dim {
            for c in (r + 1)..self.dim {
                if (self.at(r, c) - self.at(c, r)).norm() > rel_tol * scale {
                    return false;
                }
            }
        }
        true
    }

    /// Dense inverse by Gaussian elimination with partial pivoting.
    /// Returns `None` when a pivot falls below `rel_tol * max_abs`.
    pub fn inverse(&self, rel_tol: f64) -> Option<CMat> {
        let n = self.dim;
        let mut a = self.data.clone();
        let mut inv = CMat::zeros(n);
        for i in 0..n {
            inv.set(i, i, Complex64::new(1.0, 0.0));
        }
        let floor = self.max_abs() * rel_tol;
        for col in 0..n {
            let pivot_row = (col..n)
                .max_by(|&r1, &r2| {
                    a[r1 * n + col]
                        .norm()
                        .partial_cmp(&a[r2 * n + col].norm())
                        .unwrap()
                })
                .unwrap();
            if a[pivot_row * n + col].norm() <= floor {
                return None;
            }
            if pivot_row != col {
                for k in 0..n {
                    a.swap(col * n + k, pivot_row * n + k);
                    inv.data.swap(col * n + k, pivot_row * n + k);
                }
            }
            let piv = a[col * n + col];
            for k in 0..n {
                a[col * n + k] /= piv;
                inv.data[col * n + k] /= piv;
            }
            for r in 0..n {
                if r != col {
                    let f = a[r * n + col];
                    if f.norm() != 0.0 {
                        for k in 0..n {
                            let sub = f * a[col * n + k];
                            a[r * n + k] -= sub;
                            let subi = f * inv.data[col * n + k];
                            inv.data[r * n + k] -= subi;
                        }
                    }
                }
            }
        }
        Some(inv)
    }

    pub fn scale(&self, s: f64) -> CMat {
        CMat {
            dim: self.dim,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }
}

impl Serialize for CMat {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = self.data.iter().map(|z| [z.re, z.im]).collect();
        pairs.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CMat {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        let n = (pairs.len() as f64).sqrt().round() as usize;
        if n * n != pairs.len() {
            return Err(serde::de::Error::custom(format!(
                "impedance matrix length {} is not a perfect square",
                pairs.len()
            )));
        }
        Ok(CMat {
            dim: n,
            data: pairs.iter().map(|p| Complex64::new(p[0], p[1])).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: String,
    pub from_bus: String,
    pub to_bus: String,
    pub phases: PhaseSet,
    /// Series impedance in ohms, |phases| x |phases|.
    pub series_impedance: CMat,
    /// Total shunt admittance in siemens, |phases| x |phases|.
    pub shunt_admittance: CMat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwitchStatus {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Switch {
    pub id: String,
    pub index: usize,
    pub line_id: String,
    pub default_status: SwitchStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub id: String,
    pub bus_id: String,
    pub phases: PhaseSet,
    /// Per-phase active power in kW, aligned with `phases.iter()` order.
    pub nominal_p: Vec<f64>,
    /// Per-phase reactive power in kvar, same alignment.
    pub nominal_q: Vec<f64>,
    pub metered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Base {
    /// Line-to-line base voltage, kV.
    pub kv: f64,
    /// Three-phase base power, kVA.
    pub kva: f64,
    pub source_bus: String,
    /// Source voltage magnitude, per-unit.
    pub source_vpu: f64,
}

/// Binary switch-status vector; `true` means closed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SwitchVector {
    pub bits: Vec<bool>,
}

impl SwitchVector {
    pub fn all_closed(n: usize) -> SwitchVector {
        SwitchVector {
            bits: vec![true; n],
        }
    }

    pub fn all_open(n: usize) -> SwitchVector {
        SwitchVector {
            bits: vec![false; n],
        }
    }

    pub fn from_bits(bits: Vec<bool>) -> SwitchVector {
        SwitchVector { bits }
    }

    /// Parse a vector like `"1,1,0,1"` or `"1101"`.
    pub fn parse(s: &str) -> Option<SwitchVector> {
        let cleaned: Vec<char> = s.chars().filter(|c| *c == '0' || *c == '1').collect();
        if cleaned.is_empty() {
            return None;
        }
        Some(SwitchVector {
            bits: cleaned.iter().map(|c| *c == '1').collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Compact key for topology caching. Switch counts above 64 are out of
    /// scope for every fixture and the oracle cap.
    pub fn key(&self) -> u64 {
        assert!(self.bits.len() <= 64);
        self.bits
            .iter()
            .enumerate()
            .fold(0u64, |k, (i, b)| if *b { k | (1 << i) } else { k })
    }
}

impl fmt::Display for SwitchVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<&str> = self
            .bits
            .iter()
            .map(|b| if *b { "1" } else { "0" })
            .collect();
        write!(f, "[{}]", s.join(","))
    }
}

/// Raw file form of a feeder. `Network` is this plus derived indexes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeederFile {
    base: Base,
    buses: Vec<Bus>,
    lines: Vec<Line>,
    switches: Vec<Switch>,
    loads: Vec<Load>,
}

/// Per-line per-unit quantities derived at parse time.
#[derive(Debug, Clone, PartialEq)]
pub struct LinePu {
    /// Inverse of the per-unit series impedance matrix.
    pub series_adm: CMat,
    /// Half of the per-unit shunt admittance (one end of the pi model).
    pub shunt_half: CMat,
}

/// Per-phase terminal of a load, in (load id sorted, phase) order. Injection
/// vectors are aligned with this list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadPhase {
    pub load: usize,
    pub phase: Phase,
}

/// Immutable, validated feeder description.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub base: Base,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub switches: Vec<Switch>,
    pub loads: Vec<Load>,

    bus_index: HashMap<String, usize>,
    line_index: HashMap<String, usize>,
    /// switch index (0..N_s) -> line index
    switch_lines: Vec<usize>,
    /// line index -> switch index, for switched lines
    line_switch: Vec<Option<usize>>,
    source: usize,
    /// (bus, phase) terminal numbering: per bus, phases in a,b,c order.
    term_offset: Vec<usize>,
    n_terminals: usize,
    load_phases: Vec<LoadPhase>,
    line_pu: Vec<LinePu>,
}

pub const IMPEDANCE_SINGULARITY_TOL: f64 = 1e-12;

impl Network {
    pub fn n_switches(&self) -> usize {
        self.switches.len()
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_terminals(&self) -> usize {
        self.n_terminals
    }

    pub fn source_bus(&self) -> usize {
        self.source
    }

    pub fn bus_idx(&self, id: &str) -> Option<usize> {
        self.bus_index.get(id).copied()
    }

    pub fn line_idx(&self, id: &str) -> Option<usize> {
        self.line_index.get(id).copied()
    }

    pub fn switch_line(&self, switch_index: usize) -> usize {
        self.switch_lines[switch_index]
    }

    pub fn line_switch(&self, line_index: usize) -> Option<usize> {
        self.line_switch[line_index]
    }

    pub fn line_endpoints(&self, line_index: usize) -> (usize, usize) {
        let l = &self.lines[line_index];
        (self.bus_index[&l.from_bus], self.bus_index[&l.to_bus])
    }

    /// Global terminal index of (bus, phase), or None when the bus lacks the phase.
    pub fn terminal(&self, bus: usize, phase: Phase) -> Option<usize> {
        let off = self.buses[bus].phases.offset_of(phase)?;
        Some(self.term_offset[bus] + off)
    }

    pub fn terminal_of(&self, term: usize) -> (usize, Phase) {
        // binary search over offsets
        let bus = match self.term_offset.binary_search(&term) {
            Ok(b) => {
                // several buses may share an offset only if a bus had zero
                // phases, which validation forbids
                b
            }
            Err(ins) => ins - 1,
        };
        let off = term - self.term_offset[bus];
        let phase = self.buses[bus].phases.iter().nth(off).unwrap();
        (bus, phase)
    }

    pub fn load_phases(&self) -> &[LoadPhase] {
        &self.load_phases
    }

    pub fn line_pu(&self, line_index: usize) -> &LinePu {
        &self.line_pu[line_index]
    }

    /// Per-phase impedance base in ohms.
    pub fn z_base(&self) -> f64 {
        self.base.kv * self.base.kv * 1000.0 / self.base.kva
    }

    /// Single-phase power base in kW (or kvar).
    pub fn s_base_phase_kw(&self) -> f64 {
        self.base.kva / 3.0
    }

    /// The line leaving the source bus where the feeder-head meter sits.
    /// When several lines touch the source, the lexicographically first id wins.
    pub fn head_line(&self) -> usize {
        let mut best: Option<usize> = None;
        for (i, l) in self.lines.iter().enumerate() {
            let (f, t) = self.line_endpoints(i);
            if f == self.source || t == self.source {
                match best {
                    None => best = Some(i),
                    Some(b) if l.id < self.lines[b].id => best = Some(i),
                    _ => {}
                }
            }
        }
        best.expect("validated network has a line at the source")
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Network> {
        let file: FeederFile = serde_json::from_str(text).map_err(|e| NetError::Schema {
            path: origin.to_string(),
            source: e,
        })?;
        Network::from_file(file)
    }

    pub fn to_json(&self) -> String {
        let file = FeederFile {
            base: self.base.clone(),
            buses: self.buses.clone(),
            lines: self.lines.clone(),
            switches: self.switches.clone(),
            loads: self.loads.clone(),
        };
        serde_json::to_string_pretty(&file).expect("feeder serialization cannot fail")
    }

    /// Returns a copy with each line's series resistance scaled by `factor`;
    /// reactances and shunts are untouched.
    pub fn with_rx_scaled(&self, factor: f64) -> Network {
        let file = FeederFile {
            base: self.base.clone(),
            buses: self.buses.clone(),
            lines: self
                .lines
                .iter()
                .map(|l| {
                    let mut l = l.clone();
                    for z in l.series_impedance.data.iter_mut() {
                        z.re *= factor;
                    }
                    l
                })
                .collect(),
            switches: self.switches.clone(),
            loads: self.loads.clone(),
        };
        Network::from_file(file).expect("R scaling preserves validity")
    }

    fn from_file(mut file: FeederFile) -> Result<Network> {
        file.buses.sort_by(|a, b| a.id.cmp(&b.id));
        file.lines.sort_by(|a, b| a.id.cmp(&b.id));
        file.loads.sort_by(|a, b| a.id.cmp(&b.id));
        file.switches.sort_by_key(|s| s.index);

        let mut bus_index = HashMap::new();
        for (i, b) in file.buses.iter().enumerate() {
            if bus_index.insert(b.id.clone(), i).is_some() {
                return Err(NetError::DuplicateId {
                    kind: "buses",
                    id: b.id.clone(),
                });
            }
            if b.phases.is_empty() {
                return Err(NetError::Invariant {
                    invariant: "bus has at least one phase",
                    element: b.id.clone(),
                    detail: "empty phase set".into(),
                });
            }
        }

        let n_source = file
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Source)
            .count();
        if n_source != 1 {
            return Err(NetError::Invariant {
                invariant: "exactly one source bus",
                element: file.base.source_bus.clone(),
                detail: format!("found {n_source} source buses"),
            });
        }
        let source = *bus_index
            .get(&file.base.source_bus)
            .filter(|&&i| file.buses[i].kind == BusKind::Source)
            .ok_or_else(|| NetError::Invariant {
                invariant: "base.source_bus names the source bus",
                element: file.base.source_bus.clone(),
                detail: "no such source bus".into(),
            })?;

        let mut line_index = HashMap::new();
        let mut line_pu = Vec::with_capacity(file.lines.len());
        let z_base = file.base.kv * file.base.kv * 1000.0 / file.base.kva;
        for (i, l) in file.lines.iter().enumerate() {
            if line_index.insert(l.id.clone(), i).is_some() {
                return Err(NetError::DuplicateId {
                    kind: "lines",
                    id: l.id.clone(),
                });
            }
            let np = l.phases.len();
            if l.series_impedance.dim != np || l.shunt_admittance.dim != np {
                return Err(NetError::Invariant {
                    invariant: "matrix dimension matches line phase count",
                    element: l.id.clone(),
                    detail: format!(
                        "phases {} vs Z dim {} / Ysh dim {}",
                        np, l.series_impedance.dim, l.shunt_admittance.dim
                    ),
                });
            }
            for (end, bus_id) in [("from_bus", &l.from_bus), ("to_bus", &l.to_bus)] {
                let bi = bus_index.get(bus_id).ok_or_else(|| NetError::Invariant {
                    invariant: "line endpoint exists",
                    element: l.id.clone(),
                    detail: format!("{end} `{bus_id}` not found"),
                })?;
                if !l.phases.is_subset_of(&file.buses[*bi].phases) {
                    return Err(NetError::Invariant {
                        invariant: "line phases are a subset of endpoint bus phases",
                        element: l.id.clone(),
                        detail: format!(
                            "line phases {} vs bus `{}` phases {}",
                            l.phases, bus_id, file.buses[*bi].phases
                        ),
                    });
                }
            }
            if !l.series_impedance.is_symmetric(1e-9) || !l.shunt_admittance.is_symmetric(1e-9) {
                return Err(NetError::Invariant {
                    invariant: "impedance and shunt matrices are symmetric",
                    element: l.id.clone(),
                    detail: "asymmetric matrix".into(),
                });
            }
            let z_pu = l.series_impedance.scale(1.0 / z_base);
            let series_adm =
                z_pu.inverse(IMPEDANCE_SINGULARITY_TOL)
                    .ok_or_else(|| NetError::Invariant {
                        invariant: "series impedance is invertible",
                        element: l.id.clone(),
                        detail: "singular to relative tolerance 1e-12".into(),
                    })?;
            let shunt_half = l.shunt_admittance.scale(z_base / 2.0);
            line_pu.push(LinePu {
                series_adm,
                shunt_half,
            });
        }

        let mut switch_lines = vec![usize::MAX; file.switches.len()];
        let mut line_switch = vec![None; file.lines.len()];
        let mut seen_ids = HashSet::new();
        for s in &file.switches {
            if !seen_ids.insert(s.id.clone()) {
                return Err(NetError::DuplicateId {
                    kind: "switches",
                    id: s.id.clone(),
                });
            }
            if s.index >= file.switches.len() || switch_lines[s.index] != usize::MAX {
                return Err(NetError::Invariant {
                    invariant: "switch indexes form a contiguous range",
                    element: s.id.clone(),
                    detail: format!("index {}", s.index),
                });
            }
            let li = *line_index
                .get(&s.line_id)
                .ok_or_else(|| NetError::Invariant {
                    invariant: "switch references an existing line",
                    element: s.id.clone(),
                    detail: format!("line `{}` not found", s.line_id),
                })?;
            if line_switch[li].is_some() {
                return Err(NetError::Invariant {
                    invariant: "one switch per switchable line",
                    element: s.id.clone(),
                    detail: format!("line `{}` already switched", s.line_id),
                });
            }
            if file.lines[li].switch_id.as_deref() != Some(s.id.as_str()) {
                return Err(NetError::Invariant {
                    invariant: "line.switch_id matches the switch",
                    element: s.id.clone(),
                    detail: format!(
                        "line `{}` has switch_id {:?}",
                        s.line_id, file.lines[li].switch_id
                    ),
                });
            }
            switch_lines[s.index] = li;
            line_switch[li] = Some(s.index);
        }
        for l in &file.lines {
            if let Some(sid) = &l.switch_id {
                if !seen_ids.contains(sid) {
                    return Err(NetError::Invariant {
                        invariant: "line.switch_id references an existing switch",
                        element: l.id.clone(),
                        detail: format!("switch `{sid}` not found"),
                    });
                }
            }
        }

        let mut load_phases = Vec::new();
        let mut seen_loads = HashSet::new();
        for (i, ld) in file.loads.iter().enumerate() {
            if !seen_loads.insert(ld.id.clone()) {
                return Err(NetError::DuplicateId {
                    kind: "loads",
                    id: ld.id.clone(),
                });
            }
            let bi = *bus_index
                .get(&ld.bus_id)
                .ok_or_else(|| NetError::Invariant {
                    invariant: "load bus exists",
                    element: ld.id.clone(),
                    detail: format!("bus `{}` not found", ld.bus_id),
                })?;
            if !ld.phases.is_subset_of(&file.buses[bi].phases) {
                return Err(NetError::Invariant {
                    invariant: "load phases are a subset of bus phases",
                    element: ld.id.clone(),
                    detail: format!("{} vs {}", ld.phases, file.buses[bi].phases),
                });
            }
            if ld.nominal_p.len() != ld.phases.len() || ld.nominal_q.len() != ld.phases.len() {
                return Err(NetError::Invariant {
                    invariant: "nominal power vectors match phase count",
                    element: ld.id.clone(),
                    detail: format!(
                        "|phases|={} |p|={} |q|={}",
                        ld.phases.len(),
                        ld.nominal_p.len(),
                        ld.nominal_q.len()
                    ),
                });
            }
            if ld.nominal_p.iter().any(|p| *p < 0.0) {
                return Err(NetError::Invariant {
                    invariant: "nominal active power is non-negative",
                    element: ld.id.clone(),
                    detail: "negative nominal_p entry".into(),
                });
            }
            for p in ld.phases.iter() {
                load_phases.push(LoadPhase { load: i, phase: p });
            }
        }

        let mut term_offset = Vec::with_capacity(file.buses.len());
        let mut n_terminals = 0usize;
        for b in &file.buses {
            term_offset.push(n_terminals);
            n_terminals += b.phases.len();
        }

        let net = Network {
            base: file.base,
            buses: file.buses,
            lines: file.lines,
            switches: file.switches,
            loads: file.loads,
            bus_index,
            line_index,
            switch_lines,
            line_switch,
            source,
            term_offset,
            n_terminals,
            load_phases,
            line_pu,
        };

        // connectivity with every switch closed
        let all = SwitchVector::all_closed(net.n_switches());
        let topo = active_topology(&net, &all)?;
        let reach = topo.component_of(net.source);
        for (i, b) in net.buses.iter().enumerate() {
            if !reach[i] {
                return Err(NetError::Invariant {
                    invariant: "graph connected with all switches closed",
                    element: b.id.clone(),
                    detail: "unreachable from source".into(),
                });
            }
        }
        Ok(net)
    }
}

/// Parses and validates a feeder description file.
pub fn parse_feeder<P: AsRef<Path>>(path: P) -> Result<Network> {
    let p = path.as_ref();
    let text = std::fs::read_to_string(p).map_err(|e| NetError::Io {
        path: p.display().to_string(),
        source: e,
    })?;
    Network::from_json(&text, &p.display().to_string())
}

/// Active topology under a switch vector: all unswitched lines plus the
/// closed-switch lines. Vertex set is unchanged.
#[derive(Debug, Clone)]
pub struct TopologyGraph {
    pub n_buses: usize,
    /// Line indexes present in the graph, ascending.
    pub active_lines: Vec<usize>,
    /// Bus adjacency: (neighbor bus, line index).
    pub adjacency: Vec<Vec<(usize, usize)>>,
}

impl TopologyGraph {
    /// Buses connected to `start`, as a membership vector.
    pub fn component_of(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.n_buses];
        let mut queue = VecDeque::new();
        seen[start] = true;
        queue.push_back(start);
        while let Some(b) = queue.pop_front() {
            for &(nb, _) in &self.adjacency[b] {
                if !seen[nb] {
                    seen[nb] = true;
                    queue.push_back(nb);
                }
            }
        }
        seen
    }
}

pub fn active_topology(net: &Network, b: &SwitchVector) -> Result<TopologyGraph> {
    if b.len() != net.n_switches() {
        return Err(NetError::LengthMismatch {
            got: b.len(),
            want: net.n_switches(),
        });
    }
    let mut active_lines = Vec::new();
    let mut adjacency = vec![Vec::new(); net.n_buses()];
    for (i, _l) in net.lines.iter().enumerate() {
        let active = match net.line_switch(i) {
            Some(s) => b.bits[s],
            None => true,
        };
        if active {
            active_lines.push(i);
            let (f, t) = net.line_endpoints(i);
            adjacency[f].push((t, i));
            adjacency[t].push((f, i));
        }
    }
    Ok(TopologyGraph {
        n_buses: net.n_buses(),
        active_lines,
        adjacency,
    })
}

/// Energized bus set: the connected component of the source in the active
/// topology. Everything else is the de-energized (island) region.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergizedSet {
    pub energized: Vec<bool>,
}

impl EnergizedSet {
    pub fn contains(&self, bus: usize) -> bool {
        self.energized[bus]
    }

    pub fn ids<'a>(&self, net: &'a Network) -> Vec<&'a str> {
        net.buses
            .iter()
            .enumerate()
            .filter(|(i, _)| self.energized[*i])
            .map(|(_, b)| b.id.as_str())
            .collect()
    }

    pub fn count(&self) -> usize {
        self.energized.iter().filter(|e| **e).count()
    }
}

pub fn energized_set(net: &Network, b: &SwitchVector) -> Result<EnergizedSet> {
    let topo = active_topology(net, b)?;
    Ok(EnergizedSet {
        energized: topo.component_of(net.source_bus()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bus_json() -> String {
        r#"{
          "base": {"kv": 4.16, "kva": 5000.0, "source_bus": "src", "source_vpu": 1.0},
          "buses": [
            {"id": "src", "phases": "a", "kind": "source"},
            {"id": "b1", "phases": "a", "kind": "load"}
          ],
          "lines": [
            {"id": "l1", "from_bus": "src", "to_bus": "b1", "phases": "a",
             "series_impedance": [[0.01, 0.02]], "shunt_admittance": [[0.0, 0.0]]}
          ],
          "switches": [],
          "loads": [
            {"id": "d1", "bus_id": "b1", "phases": "a",
             "nominal_p": [100.0], "nominal_q": [50.0], "metered": false}
          ]
        }"#
        .to_string()
    }

    #[test]
    fn parses_minimal_two_bus_feeder() {
        let net = Network::from_json(&two_bus_json(), "inline").unwrap();
        assert_eq!(net.n_buses(), 2);
        assert_eq!(net.n_switches(), 0);
        assert_eq!(net.n_terminals(), 2);
        assert_eq!(net.load_phases().len(), 1);
    }

    #[test]
    fn rejects_line_phases_outside_bus_phases() {
        let bad = two_bus_json().replace(
            r#""id": "b1", "phases": "a""#,
            r#""id": "b1", "phases": "b""#,
        );
        let err = Network::from_json(&bad, "inline").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("subset"), "unexpected error: {msg}");
    }

    #[test]
    fn rejects_singular_impedance() {
        let bad = two_bus_json().replace("[[0.01, 0.02]]", "[[0.0, 0.0]]");
        let err = Network::from_json(&bad, "inline").unwrap_err();
        assert!(err.to_string().contains("invertible"));
    }

    #[test]
    fn rejects_duplicate_bus_id() {
        let bad = two_bus_json().replace(
            r#"{"id": "b1", "phases": "a", "kind": "load"}"#,
            r#"{"id": "b1", "phases": "a", "kind": "load"}, {"id": "b1", "phases": "a", "kind": "load"}"#,
        );
        let err = Network::from_json(&bad, "inline").unwrap_err();
        assert!(matches!(err, NetError::DuplicateId { .. }));
    }

    #[test]
    fn round_trip_preserves_network() {
        let net = Network::from_json(&two_bus_json(), "inline").unwrap();
        let again = Network::from_json(&net.to_json(), "roundtrip").unwrap();
        assert_eq!(net, again);
    }

    #[test]
    fn phase_set_parsing() {
        assert_eq!(PhaseSet::from_str_strict("abc").unwrap().len(), 3);
        assert_eq!(PhaseSet::from_str_strict("b").unwrap().len(), 1);
        assert!(PhaseSet::from_str_strict("").is_none());
        assert!(PhaseSet::from_str_strict("aa").is_none());
        assert!(PhaseSet::from_str_strict("d").is_none());
        let ac = PhaseSet::from_str_strict("ac").unwrap();
        assert_eq!(ac.offset_of(Phase::C), Some(1));
        assert_eq!(ac.offset_of(Phase::B), None);
    }

    #[test]
    fn rx_scaling_touches_only_resistance() {
        let net = Network::from_json(&two_bus_json(), "inline").unwrap();
        let scaled = net.with_rx_scaled(2.0);
        let z0 = net.lines[0].series_impedance.at(0, 0);
        let z1 = scaled.lines[0].series_impedance.at(0, 0);
        assert_eq!(z1.re, 2.0 * z0.re);
        assert_eq!(z1.im, z0.im);
        assert_eq!(
            scaled.lines[0].shunt_admittance,
            net.lines[0].shunt_admittance
        );
    }
}
