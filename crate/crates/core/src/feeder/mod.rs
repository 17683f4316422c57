//! Three-phase distribution feeder model.
//!
//! A [`Feeder`] is immutable once built: buses, branches (lines,
//! transformers, switches), load points, shunt capacitors and hourly load
//! profiles, with every cross-reference resolved to an index. Construction
//! goes through [`parse_feeder`] (or [`load_feeder`] for files with sibling
//! profile CSVs), which validates phase consistency and base-case radiality.

mod parse;
mod write;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::PathBuf;

use num_complex::Complex64;
use thiserror::Error;

pub use parse::{load_feeder, parse_feeder, parse_feeder_in, parse_profile_csv};

use crate::unionfind::UnionFind;
use crate::HOURS_PER_YEAR;

#[derive(Debug, Error)]
pub enum FeederError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: duplicate {entity} id '{id}'")]
    DuplicateId {
        line: usize,
        entity: &'static str,
        id: String,
    },
    #[error("line {line}: {entity} '{owner}' references unknown {target} '{name}'")]
    Dangling {
        line: usize,
        entity: &'static str,
        owner: String,
        target: &'static str,
        name: String,
    },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("radiality violation: {0}")]
    Radiality(String),
    #[error("unknown branch id '{0}'")]
    UnknownBranch(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    A = 0,
    B = 1,
    C = 2,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn letter(self) -> char {
        ['A', 'B', 'C'][self as usize]
    }
}

/// Subset of {A, B, C}.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct PhaseSet(u8);

impl PhaseSet {
    pub const ABC: PhaseSet = PhaseSet(0b111);
    pub const NONE: PhaseSet = PhaseSet(0);

    pub fn single(p: Phase) -> Self {
        PhaseSet(1 << p.index())
    }

    pub fn contains(self, p: Phase) -> bool {
        self.0 & (1 << p.index()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: PhaseSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn intersect(self, other: PhaseSet) -> PhaseSet {
        PhaseSet(self.0 & other.0)
    }

    pub fn union(self, other: PhaseSet) -> PhaseSet {
        PhaseSet(self.0 | other.0)
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = Phase> {
        Phase::ALL.into_iter().filter(move |&p| self.contains(p))
    }

    /// Parses letters such as `ABC`, `BC`, `a`; order and case are free.
    pub fn parse(s: &str) -> Option<PhaseSet> {
        let mut bits = 0u8;
        for ch in s.trim().chars() {
            let bit = match ch.to_ascii_uppercase() {
                'A' => 1,
                'B' => 2,
                'C' => 4,
                _ => return None,
            };
            if bits & bit != 0 {
                return None;
            }
            bits |= bit;
        }
        (bits != 0).then_some(PhaseSet(bits))
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

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BusKind {
    Substation,
    Load,
    Junction,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bus {
    pub id: String,
    pub phases: PhaseSet,
    pub kind: BusKind,
    /// Line-to-line kV.
    pub nominal_kv: f64,
}

impl Bus {
    /// Line-to-neutral base voltage in volts.
    pub fn base_volts_ln(&self) -> f64 {
        self.nominal_kv * 1000.0 / 3f64.sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BranchKind {
    Line,
    Transformer,
    Switch,
}

impl BranchKind {
    pub fn name(self) -> &'static str {
        match self {
            BranchKind::Line => "line",
            BranchKind::Transformer => "transformer",
            BranchKind::Switch => "switch",
        }
    }

    /// Class reliability data used when neither the feeder file nor a
    /// reliability table supplies per-branch values: (failures/year, MTTR hours).
    pub fn default_reliability(self) -> (f64, f64) {
        match self {
            BranchKind::Transformer => (0.05882, 144.0),
            BranchKind::Line => (0.13, 5.0),
            BranchKind::Switch => (0.2, 5.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SwitchRole {
    Sectionalizing,
    Tie,
}

/// Series impedance, ohms, phase-ordered A/B/C. Absent phases hold zeros.
pub type Impedance = [[Complex64; 3]; 3];

#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub kind: BranchKind,
    pub switch_role: Option<SwitchRole>,
    pub normally_open: bool,
    pub phases: PhaseSet,
    pub z_per_length: Impedance,
    pub length: f64,
    /// Failures per year.
    pub failure_rate: f64,
    pub mttr_hours: f64,
}

impl Branch {
    pub fn impedance(&self) -> Impedance {
        let mut z = self.z_per_length;
        for row in z.iter_mut() {
            for v in row.iter_mut() {
                *v *= self.length;
            }
        }
        z
    }

    pub fn is_tie(&self) -> bool {
        self.switch_role == Some(SwitchRole::Tie)
    }

    pub fn other_end(&self, bus: usize) -> usize {
        if self.from == bus {
            self.to
        } else {
            self.from
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LoadModel {
    ConstantPower,
    ConstantCurrent,
    ConstantImpedance,
}

impl LoadModel {
    pub fn name(self) -> &'static str {
        match self {
            LoadModel::ConstantPower => "constant_power",
            LoadModel::ConstantCurrent => "constant_current",
            LoadModel::ConstantImpedance => "constant_impedance",
        }
    }
}

/// Wye-connected per-phase load (or shunt capacitor, with negative kVar).
#[derive(Clone, Debug, PartialEq)]
pub struct LoadPoint {
    pub id: String,
    pub bus: usize,
    pub model: LoadModel,
    pub phases: PhaseSet,
    /// Per-phase base kW, indexed by [`Phase::index`]; zero on absent phases.
    pub kw: [f64; 3],
    pub kvar: [f64; 3],
    /// Index into [`Feeder::profiles`]; `None` means a constant multiplier of 1.
    pub profile: Option<usize>,
}

impl LoadPoint {
    pub fn total_kw(&self) -> f64 {
        self.kw.iter().sum()
    }

    pub fn total_kvar(&self) -> f64 {
        self.kvar.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadProfile {
    pub id: String,
    pub multipliers: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Feeder {
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub loads: Vec<LoadPoint>,
    pub capacitors: Vec<LoadPoint>,
    pub profiles: Vec<LoadProfile>,
    pub substations: Vec<usize>,
    bus_index: HashMap<String, usize>,
    branch_index: HashMap<String, usize>,
}

impl Feeder {
    /// Assembles and validates a feeder from resolved parts.
    pub(crate) fn assemble(
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        loads: Vec<LoadPoint>,
        capacitors: Vec<LoadPoint>,
        profiles: Vec<LoadProfile>,
    ) -> Result<Feeder, FeederError> {
        let bus_index = buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id.clone(), i))
            .collect();
        let branch_index = branches
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id.clone(), i))
            .collect();
        let substations = buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind == BusKind::Substation)
            .map(|(i, _)| i)
            .collect();
        let feeder = Feeder {
            buses,
            branches,
            loads,
            capacitors,
            profiles,
            substations,
            bus_index,
            branch_index,
        };
        feeder.check_base_radiality()?;
        Ok(feeder)
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.bus_index.get(id).copied()
    }

    pub fn branch_index(&self, id: &str) -> Option<usize> {
        self.branch_index.get(id).copied()
    }

    pub fn bus(&self, id: &str) -> Option<&Bus> {
        self.bus_index(id).map(|i| &self.buses[i])
    }

    pub fn branch(&self, id: &str) -> Option<&Branch> {
        self.branch_index(id).map(|i| &self.branches[i])
    }

    /// Closed-state mask of the normal configuration (everything closed
    /// except normally-open tie switches).
    pub fn normally_closed(&self) -> Vec<bool> {
        self.branches.iter().map(|b| !b.normally_open).collect()
    }

    /// Buses carrying at least one load point.
    pub fn load_buses(&self) -> Vec<bool> {
        let mut v = vec![false; self.buses.len()];
        for l in &self.loads {
            v[l.bus] = true;
        }
        v
    }

    /// Base three-phase kW of all load points attached to each bus.
    pub fn bus_load_kw(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.buses.len()];
        for l in &self.loads {
            v[l.bus] += l.total_kw();
        }
        v
    }

    /// (kW, kVar) summed over load points; capacitors excluded.
    pub fn total_base_load(&self) -> (f64, f64) {
        self.loads.iter().fold((0.0, 0.0), |(p, q), l| {
            (p + l.total_kw(), q + l.total_kvar())
        })
    }

    pub fn count_branches(&self, kind: BranchKind, role: Option<SwitchRole>) -> usize {
        self.branches
            .iter()
            .filter(|b| b.kind == kind && (role.is_none() || b.switch_role == role))
            .count()
    }

    /// Load multiplier of every profile at absolute hour `hour`
    /// (profiles repeat every year).
    pub fn profile_multipliers(&self, hour: usize) -> Vec<f64> {
        self.profiles
            .iter()
            .map(|p| p.multipliers[hour % HOURS_PER_YEAR])
            .collect()
    }

    /// Multiplier applied to `load` given the per-profile multipliers.
    pub fn load_multiplier(load: &LoadPoint, multipliers: &[f64]) -> f64 {
        load.profile.map_or(1.0, |p| multipliers[p])
    }

    /// Replaces every profile's multipliers with `multipliers`.
    pub fn with_uniform_profile(mut self, multipliers: Vec<f64>) -> Result<Feeder, FeederError> {
        check_profile_values(&multipliers, 0)?;
        if self.profiles.is_empty() {
            self.profiles.push(LoadProfile {
                id: "default".into(),
                multipliers,
            });
            for l in &mut self.loads {
                l.profile = Some(0);
            }
        } else {
            for p in &mut self.profiles {
                p.multipliers = multipliers.clone();
            }
        }
        Ok(self)
    }

    /// Adjacency list: for each bus, (branch index, neighbour bus).
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.buses.len()];
        for (i, b) in self.branches.iter().enumerate() {
            adj[b.from].push((i, b.to));
            adj[b.to].push((i, b.from));
        }
        adj
    }

    /// True iff the closed branches form a forest in which every bus is fed
    /// by at most one substation (substations are treated as one common
    /// root, so a path between two of them counts as a loop) and every load
    /// bus is connected to a substation.
    pub fn is_radial(&self, closed: &[bool]) -> bool {
        self.radiality_violation(closed).is_none()
    }

    /// [`Feeder::is_radial`] over a set of branch ids.
    pub fn validate_radiality<'a, I>(&self, closed_ids: I) -> Result<bool, FeederError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut closed = vec![false; self.branches.len()];
        for id in closed_ids {
            let i = self
                .branch_index(id)
                .ok_or_else(|| FeederError::UnknownBranch(id.to_string()))?;
            closed[i] = true;
        }
        Ok(self.is_radial(&closed))
    }

    fn radiality_violation(&self, closed: &[bool]) -> Option<String> {
        let mut uf = self.rooted_union_find();
        for (i, b) in self.branches.iter().enumerate() {
            if closed[i] && !uf.union(b.from, b.to) {
                return Some(format!("closing branch '{}' creates a loop", b.id));
            }
        }
        let root = self.buses.len();
        let load_buses = self.load_buses();
        load_buses
            .iter()
            .enumerate()
            .find(|&(i, &is_load)| is_load && !uf.same(i, root))
            .map(|(i, _)| format!("load bus '{}' is not fed from a substation", self.buses[i].id))
    }

    /// Union-find over buses plus one virtual root (index `buses.len()`)
    /// already joined to every substation.
    pub(crate) fn rooted_union_find(&self) -> UnionFind {
        let root = self.buses.len();
        let mut uf = UnionFind::new(root + 1);
        for &s in &self.substations {
            uf.union(s, root);
        }
        uf
    }

    fn check_base_radiality(&self) -> Result<(), FeederError> {
        if self.substations.is_empty() {
            return Err(FeederError::Radiality("feeder has no substation bus".into()));
        }
        match self.radiality_violation(&self.normally_closed()) {
            Some(msg) => Err(FeederError::Radiality(msg)),
            None => Ok(()),
        }
    }

    /// Ids of the given branch indices, sorted.
    pub fn branch_ids(&self, idx: impl IntoIterator<Item = usize>) -> BTreeSet<String> {
        idx.into_iter()
            .map(|i| self.branches[i].id.clone())
            .collect()
    }
}

pub(crate) fn check_profile_values(m: &[f64], line: usize) -> Result<(), FeederError> {
    if m.len() != HOURS_PER_YEAR {
        return Err(FeederError::Invalid {
            line,
            message: format!("profile has {} values, expected {HOURS_PER_YEAR}", m.len()),
        });
    }
    if let Some(bad) = m.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(FeederError::Invalid {
            line,
            message: format!("profile multiplier {bad} is negative or not finite"),
        });
    }
    Ok(())
}
