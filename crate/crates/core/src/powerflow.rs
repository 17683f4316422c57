//! Three-phase backward/forward sweep power flow for radial configurations.
//!
//! The backward pass accumulates per-phase branch currents from the leaves
//! toward the substation; the forward pass propagates voltages outward
//! through each branch's 3×3 series impedance. Transformers are ideal ratio
//! changes (`kv_to / kv_from`) followed by a series impedance referred to the
//! secondary side. Iteration stops when the largest per-phase voltage update
//! falls below the tolerance (per unit of the bus base voltage).
//!
//! Phases are energized along each path as the intersection of the source,
//! branch and bus phase sets; a load on a dead phase draws nothing.

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::feeder::{Feeder, Impedance, LoadModel, LoadPoint, Phase, PhaseSet};
use crate::unionfind::UnionFind;
use crate::HOURS_PER_YEAR;

type Phasor3 = [Complex64; 3];

const ZERO3: Phasor3 = [Complex64::new(0.0, 0.0); 3];

#[derive(Debug, Error, PartialEq)]
pub enum PowerFlowError {
    #[error("configuration is not radial: {0}")]
    NonRadial(String),
    #[error("closed mask has {got} entries, feeder has {expected} branches")]
    MaskLength { got: usize, expected: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Largest per-phase voltage update (pu) accepted as converged.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-8,
            max_iterations: 100,
        }
    }
}

/// One hourly snapshot to solve.
#[derive(Clone, Copy, Debug)]
pub struct PowerFlowCase<'a> {
    pub feeder: &'a Feeder,
    pub closed: &'a [bool],
    pub hour: usize,
}

#[derive(Clone, Debug)]
pub struct PowerFlowSolution {
    /// Per-unit phase-to-neutral voltage; zero on dead phases.
    pub voltages: Vec<Phasor3>,
    pub energized: Vec<PhaseSet>,
    /// Current entering each tree branch's downstream bus, amperes; zero
    /// for branches outside the tree.
    pub branch_currents: Vec<Phasor3>,
    /// Total three-phase real power injected by all substations, kW.
    pub substation_kw: f64,
    pub substation_kvar: f64,
    /// Power drawn by loads and capacitors at the solved voltages.
    pub load_kw: f64,
    pub load_kvar: f64,
    pub loss_kw: f64,
    pub loss_kvar: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Last voltage update, pu.
    pub max_mismatch: f64,
    /// |S_substation − S_loads − S_losses| relative to the larger of the
    /// substation and load apparent powers.
    pub balance_mismatch: f64,
    /// Any energized phase outside [0.9, 1.1] pu.
    pub voltage_violation: bool,
}

/// A closed-switch configuration prepared for repeated hourly solves.
#[derive(Clone, Debug)]
pub struct RadialNetwork<'a> {
    feeder: &'a Feeder,
    /// Energized buses, every parent before its children.
    order: Vec<usize>,
    /// (branch, parent bus) for each energized non-root bus.
    parent: Vec<Option<(usize, usize)>>,
    energized: Vec<PhaseSet>,
    /// Secondary-referred series impedance per branch (tree branches only).
    z: Vec<Impedance>,
    /// kv_child / kv_parent per tree branch.
    ratio: Vec<f64>,
    loads_at: Vec<Vec<usize>>,
    caps_at: Vec<Vec<usize>>,
}

impl<'a> RadialNetwork<'a> {
    /// Builds the energized tree. Rejects any loop among closed branches,
    /// counting a path between two substations as a loop.
    pub fn build(feeder: &'a Feeder, closed: &[bool]) -> Result<Self, PowerFlowError> {
        if closed.len() != feeder.branches.len() {
            return Err(PowerFlowError::MaskLength {
                got: closed.len(),
                expected: feeder.branches.len(),
            });
        }
        let n = feeder.buses.len();
        let mut uf: UnionFind = feeder.rooted_union_find();
        for (i, b) in feeder.branches.iter().enumerate() {
            if closed[i] && !uf.union(b.from, b.to) {
                return Err(PowerFlowError::NonRadial(format!(
                    "closing branch '{}' creates a loop",
                    b.id
                )));
            }
        }

        let adj = feeder.adjacency();
        let mut parent = vec![None; n];
        let mut energized = vec![PhaseSet::NONE; n];
        let mut visited = vec![false; n];
        let mut order = Vec::with_capacity(n);
        for &s in &feeder.substations {
            visited[s] = true;
            energized[s] = feeder.buses[s].phases;
            order.push(s);
        }
        let mut head = 0;
        while head < order.len() {
            let u = order[head];
            head += 1;
            for &(br, v) in &adj[u] {
                if !closed[br] || visited[v] {
                    continue;
                }
                visited[v] = true;
                parent[v] = Some((br, u));
                energized[v] = energized[u]
                    .intersect(feeder.branches[br].phases)
                    .intersect(feeder.buses[v].phases);
                order.push(v);
            }
        }

        let mut z = vec![[[Complex64::new(0.0, 0.0); 3]; 3]; feeder.branches.len()];
        let mut ratio = vec![1.0; feeder.branches.len()];
        for &v in &order {
            if let Some((br, u)) = parent[v] {
                z[br] = feeder.branches[br].impedance();
                ratio[br] = feeder.buses[v].nominal_kv / feeder.buses[u].nominal_kv;
            }
        }
        let mut loads_at = vec![Vec::new(); n];
        for (i, l) in feeder.loads.iter().enumerate() {
            loads_at[l.bus].push(i);
        }
        let mut caps_at = vec![Vec::new(); n];
        for (i, c) in feeder.capacitors.iter().enumerate() {
            caps_at[c.bus].push(i);
        }
        Ok(RadialNetwork {
            feeder,
            order,
            parent,
            energized,
            z,
            ratio,
            loads_at,
            caps_at,
        })
    }

    pub fn energized(&self) -> &[PhaseSet] {
        &self.energized
    }

    pub fn is_energized(&self, bus: usize) -> bool {
        !self.energized[bus].is_empty()
    }

    /// Solves one snapshot; `multipliers` holds one load multiplier per
    /// feeder profile.
    pub fn solve(&self, multipliers: &[f64], opts: &SolverOptions) -> PowerFlowSolution {
        let f = self.feeder;
        let n = f.buses.len();
        let base: Vec<f64> = f.buses.iter().map(|b| b.base_volts_ln()).collect();

        let mut v = vec![ZERO3; n];
        for &b in &self.order {
            match self.parent[b] {
                None => {
                    for p in self.energized[b].iter() {
                        v[b][p.index()] = Complex64::from_polar(base[b], source_angle(p));
                    }
                }
                Some((br, u)) => {
                    for p in self.energized[b].iter() {
                        v[b][p.index()] = v[u][p.index()] * self.ratio[br];
                    }
                }
            }
        }

        let mut currents = vec![ZERO3; n];
        let mut converged = false;
        let mut iterations = 0;
        let mut last_update = f64::INFINITY;
        while iterations < opts.max_iterations {
            iterations += 1;
            self.backward(&v, multipliers, &mut currents);
            let mut worst = 0.0f64;
            for &b in &self.order {
                let Some((br, u)) = self.parent[b] else { continue };
                let z = &self.z[br];
                let j = currents[b];
                for p in self.energized[b].iter() {
                    let i = p.index();
                    let drop = z[i][0] * j[0] + z[i][1] * j[1] + z[i][2] * j[2];
                    let next = v[u][i] * self.ratio[br] - drop;
                    worst = worst.max((next - v[b][i]).norm() / base[b]);
                    v[b][i] = next;
                }
            }
            last_update = worst;
            if !worst.is_finite() {
                break;
            }
            if worst < opts.tolerance {
                converged = true;
                break;
            }
        }

        // Currents consistent with the final voltages.
        self.backward(&v, multipliers, &mut currents);

        let mut s_sub = Complex64::new(0.0, 0.0);
        for &s in &f.substations {
            for p in self.energized[s].iter() {
                s_sub += v[s][p.index()] * currents[s][p.index()].conj();
            }
        }
        let mut s_load = Complex64::new(0.0, 0.0);
        for &b in &self.order {
            let inj = self.load_currents(b, &v[b], multipliers);
            for p in self.energized[b].iter() {
                s_load += v[b][p.index()] * inj[p.index()].conj();
            }
        }
        let mut s_loss = Complex64::new(0.0, 0.0);
        let mut branch_currents = vec![ZERO3; f.branches.len()];
        for &b in &self.order {
            let Some((br, _)) = self.parent[b] else { continue };
            let j = currents[b];
            branch_currents[br] = j;
            let z = &self.z[br];
            for i in 0..3 {
                let drop = z[i][0] * j[0] + z[i][1] * j[1] + z[i][2] * j[2];
                s_loss += drop * j[i].conj();
            }
        }
        let scale = s_sub.norm().max(s_load.norm());
        let balance_mismatch = if scale > 0.0 {
            (s_sub - s_load - s_loss).norm() / scale
        } else {
            (s_sub - s_load - s_loss).norm()
        };

        let mut voltage_violation = false;
        let voltages: Vec<Phasor3> = (0..n)
            .map(|b| {
                let mut pu = ZERO3;
                for p in self.energized[b].iter() {
                    pu[p.index()] = v[b][p.index()] / base[b];
                    let m = pu[p.index()].norm();
                    voltage_violation |= !(0.9..=1.1).contains(&m);
                }
                pu
            })
            .collect();

        PowerFlowSolution {
            voltages,
            energized: self.energized.clone(),
            branch_currents,
            substation_kw: s_sub.re / 1000.0,
            substation_kvar: s_sub.im / 1000.0,
            load_kw: s_load.re / 1000.0,
            load_kvar: s_load.im / 1000.0,
            loss_kw: s_loss.re / 1000.0,
            loss_kvar: s_loss.im / 1000.0,
            converged,
            iterations,
            max_mismatch: last_update,
            balance_mismatch,
            voltage_violation,
        }
    }

    /// Fills `acc[b]` with the current drawn into bus `b` from its parent
    /// branch (for roots: the total substation output current).
    fn backward(&self, v: &[Phasor3], multipliers: &[f64], acc: &mut [Phasor3]) {
        for &b in &self.order {
            acc[b] = self.load_currents(b, &v[b], multipliers);
        }
        for &b in self.order.iter().rev() {
            if let Some((br, u)) = self.parent[b] {
                let r = self.ratio[br];
                for p in self.energized[b].iter() {
                    let i = p.index();
                    let c = acc[b][i] * r;
                    acc[u][i] += c;
                }
            }
        }
    }

    fn load_currents(&self, bus: usize, v: &Phasor3, multipliers: &[f64]) -> Phasor3 {
        let f = self.feeder;
        let mut out = ZERO3;
        let live = self.energized[bus];
        if live.is_empty() {
            return out;
        }
        let vnom = f.buses[bus].base_volts_ln();
        for &l in &self.loads_at[bus] {
            let load = &f.loads[l];
            let m = Feeder::load_multiplier(load, multipliers);
            add_load_current(load, m, live, v, vnom, &mut out);
        }
        for &c in &self.caps_at[bus] {
            add_load_current(&f.capacitors[c], 1.0, live, v, vnom, &mut out);
        }
        out
    }
}

fn add_load_current(load: &LoadPoint, m: f64, live: PhaseSet, v: &Phasor3, vnom: f64, out: &mut Phasor3) {
    for p in load.phases.intersect(live).iter() {
        let i = p.index();
        let s = Complex64::new(load.kw[i], load.kvar[i]) * (1000.0 * m);
        if s == Complex64::new(0.0, 0.0) {
            continue;
        }
        out[i] += match load.model {
            LoadModel::ConstantPower => (s / v[i]).conj(),
            LoadModel::ConstantCurrent => {
                Complex64::from_polar(s.norm() / vnom, v[i].arg() - s.arg())
            }
            LoadModel::ConstantImpedance => v[i] * s.conj() / (vnom * vnom),
        };
    }
}

fn source_angle(p: Phase) -> f64 {
    match p {
        Phase::A => 0.0,
        Phase::B => -120f64.to_radians(),
        Phase::C => 120f64.to_radians(),
    }
}

/// Builds the network for `case.closed` and solves at `case.hour`.
pub fn solve(case: &PowerFlowCase<'_>, opts: &SolverOptions) -> Result<PowerFlowSolution, PowerFlowError> {
    let net = RadialNetwork::build(case.feeder, case.closed)?;
    Ok(net.solve(&case.feeder.profile_multipliers(case.hour), opts))
}

/// Sum of scaled load kW at nominal voltage, no losses.
pub fn lossless_load_kw(feeder: &Feeder, multipliers: &[f64]) -> f64 {
    feeder
        .loads
        .iter()
        .map(|l| l.total_kw() * Feeder::load_multiplier(l, multipliers))
        .sum()
}

/// Substation kW of the intact feeder for every hour of the profile year.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseYearSeries {
    pub kw: Vec<f64>,
    pub nonconverged_hours: Vec<usize>,
    pub max_balance_mismatch: f64,
}

impl BaseYearSeries {
    /// P_base at absolute hour `k` (the profile year repeats).
    pub fn at(&self, hour: usize) -> f64 {
        self.kw[hour % HOURS_PER_YEAR]
    }
}

/// P_base for every hour of one profile year under the normal switch
/// configuration. With `lossless`, P_base is the scaled load sum instead of
/// the solved substation injection.
pub fn base_year_run(
    feeder: &Feeder,
    opts: &SolverOptions,
    lossless: bool,
) -> Result<BaseYearSeries, PowerFlowError> {
    let closed = feeder.normally_closed();
    let net = RadialNetwork::build(feeder, &closed)?;
    let solved: Vec<(f64, bool, f64)> = (0..HOURS_PER_YEAR)
        .into_par_iter()
        .map(|h| {
            let m = feeder.profile_multipliers(h);
            if lossless {
                (lossless_load_kw(feeder, &m), true, 0.0)
            } else {
                let s = net.solve(&m, opts);
                (s.substation_kw, s.converged, s.balance_mismatch)
            }
        })
        .collect();
    Ok(BaseYearSeries {
        kw: solved.iter().map(|s| s.0).collect(),
        nonconverged_hours: solved
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.1)
            .map(|(h, _)| h)
            .collect(),
        max_balance_mismatch: solved.iter().map(|s| s.2).fold(0.0, f64::max),
    })
}

impl PowerFlowSolution {
    /// Rows of (bus id, phase, |V| pu, angle degrees) for energized phases.
    pub fn voltage_rows<'f>(&self, feeder: &'f Feeder) -> Vec<(&'f str, char, f64, f64)> {
        let mut rows = Vec::new();
        for (b, bus) in feeder.buses.iter().enumerate() {
            for p in self.energized[b].iter() {
                let v = self.voltages[b][p.index()];
                rows.push((bus.id.as_str(), p.letter(), v.norm(), v.arg().to_degrees()));
            }
        }
        rows
    }
}
