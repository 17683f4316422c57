//! Sequential Monte Carlo outage sampling.
//!
//! Every failure-eligible branch follows an alternating up/down renewal
//! process with exponential time-to-failure (rate λ per year) and
//! exponential repair time (mean MTTR hours). Component down-intervals are
//! then unioned into system contingencies.
//!
//! Random substreams: replication `r`, component `c` draws from
//! `ChaCha8Rng::seed_from_u64(seed)` switched to stream `(r << 32) | c`, so a
//! component's history never depends on how work is scheduled.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::feeder::{BranchKind, Feeder};
use crate::HOURS_PER_YEAR;

#[derive(Debug, Error)]
pub enum ContingencyError {
    #[error("reliability table line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("reliability table names unknown component '{0}'")]
    UnknownComponent(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComponentReliability {
    /// Branch index in the feeder.
    pub component: usize,
    pub component_id: String,
    /// λ, failures per year.
    pub failure_rate: f64,
    pub mttr_hours: f64,
}

/// Failure rates and repair times keyed by component class or branch id.
/// Id rows take precedence over class rows, which take precedence over the
/// values carried by the feeder's branches.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReliabilityTable {
    classes: BTreeMap<BranchKind, (f64, f64)>,
    ids: BTreeMap<String, (f64, f64)>,
}

impl ReliabilityTable {
    /// Class table: transformer 0.05882/yr, 144 h; line 0.13/yr, 5 h;
    /// switch 0.2/yr, 5 h.
    pub fn standard() -> Self {
        let classes = [BranchKind::Transformer, BranchKind::Line, BranchKind::Switch]
            .into_iter()
            .map(|k| (k, k.default_reliability()))
            .collect();
        ReliabilityTable {
            classes,
            ids: BTreeMap::new(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ContingencyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ContingencyError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_csv(&text)
    }

    pub fn parse_csv(text: &str) -> Result<Self, ContingencyError> {
        let mut table = ReliabilityTable::default();
        let mut first = true;
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let row = raw.split('#').next().unwrap_or("").trim();
            if row.is_empty() {
                continue;
            }
            let fields: Vec<&str> = row.split(',').map(str::trim).collect();
            let err = |message: String| ContingencyError::Csv { line, message };
            if fields.len() != 3 {
                return Err(err(format!("expected 3 columns, got {}", fields.len())));
            }
            let (rate, mttr) = match (fields[1].parse::<f64>(), fields[2].parse::<f64>()) {
                (Ok(r), Ok(m)) => (r, m),
                _ if first => {
                    first = false;
                    continue;
                }
                _ => return Err(err("rate and mttr must be numbers".into())),
            };
            first = false;
            if !(rate >= 0.0 && rate.is_finite()) || !(mttr > 0.0 && mttr.is_finite()) {
                return Err(err("need failure_rate >= 0 and mttr > 0".into()));
            }
            let key = fields[0];
            let class = match key {
                "line" => Some(BranchKind::Line),
                "transformer" => Some(BranchKind::Transformer),
                "switch" => Some(BranchKind::Switch),
                _ => None,
            };
            match class {
                Some(k) => table.classes.insert(k, (rate, mttr)),
                None => table.ids.insert(key.to_string(), (rate, mttr)),
            };
        }
        Ok(table)
    }

    /// Resolved reliability of every branch, in branch order.
    pub fn components(&self, feeder: &Feeder) -> Result<Vec<ComponentReliability>, ContingencyError> {
        if let Some(id) = self.ids.keys().find(|id| feeder.branch_index(id).is_none()) {
            return Err(ContingencyError::UnknownComponent(id.clone()));
        }
        Ok(feeder
            .branches
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let (failure_rate, mttr_hours) = self
                    .ids
                    .get(&b.id)
                    .or_else(|| self.classes.get(&b.kind))
                    .copied()
                    .unwrap_or((b.failure_rate, b.mttr_hours));
                ComponentReliability {
                    component: i,
                    component_id: b.id.clone(),
                    failure_rate,
                    mttr_hours,
                }
            })
            .collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimulationHorizon {
    pub years: u32,
    pub seed: u64,
}

impl SimulationHorizon {
    pub fn new(years: u32, seed: u64) -> Self {
        assert!(years >= 1, "simulation horizon needs at least one year");
        SimulationHorizon { years, seed }
    }

    pub fn hours(&self) -> f64 {
        self.years as f64 * HOURS_PER_YEAR as f64
    }

    /// Year windows of each replication: years are dealt out as evenly as
    /// possible, earlier replications taking the remainder.
    pub fn segments(&self, replications: u32) -> Vec<Range<f64>> {
        let reps = replications.max(1);
        let (base, extra) = (self.years / reps, self.years % reps);
        let mut start = 0u32;
        (0..reps)
            .map(|r| {
                let len = base + u32::from(r < extra);
                let seg = start..start + len;
                start += len;
                seg
            })
            .map(|y| y.start as f64 * HOURS_PER_YEAR as f64..y.end as f64 * HOURS_PER_YEAR as f64)
            .collect()
    }
}

/// One component down-interval, hours.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Outage {
    pub start: f64,
    pub duration: f64,
}

impl Outage {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContingencyEvent {
    pub index: usize,
    /// Branch indices out of service at any point during the event.
    pub failed_components: BTreeSet<usize>,
    pub start_hour: f64,
    /// D_i, hours.
    pub duration: f64,
}

impl ContingencyEvent {
    pub fn end_hour(&self) -> f64 {
        self.start_hour + self.duration
    }

    /// Whole hours occupied by the event: ⌊start⌋ .. ⌈end⌉.
    pub fn hour_range(&self) -> Range<usize> {
        self.start_hour.floor() as usize..self.end_hour().ceil() as usize
    }
}

/// Random stream for one (replication, component) pair.
pub fn substream(seed: u64, replication: u32, component: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(replication) << 32) | component as u64);
    rng
}

/// Outage history over the whole horizon `[0, 8760·Y)`.
pub fn sample_component_history<R: Rng + ?Sized>(
    rel: &ComponentReliability,
    horizon: &SimulationHorizon,
    rng: &mut R,
) -> Vec<Outage> {
    sample_outages(rel, 0.0..horizon.hours(), rng)
}

/// Alternating up/down renewal process over `window`, starting up.
/// Down-intervals are truncated at the window end.
pub fn sample_outages<R: Rng + ?Sized>(
    rel: &ComponentReliability,
    window: Range<f64>,
    rng: &mut R,
) -> Vec<Outage> {
    let mut out = Vec::new();
    if rel.failure_rate <= 0.0 {
        return out;
    }
    let time_to_failure = Exp::new(rel.failure_rate / HOURS_PER_YEAR as f64).expect("positive rate");
    let time_to_repair = Exp::new(1.0 / rel.mttr_hours).expect("positive mttr");
    let mut t = window.start;
    loop {
        t += time_to_failure.sample(rng);
        if t >= window.end {
            break;
        }
        let repair = time_to_repair.sample(rng);
        let end = (t + repair).min(window.end);
        out.push(Outage {
            start: t,
            duration: end - t,
        });
        t += repair;
        if t >= window.end {
            break;
        }
    }
    out
}

/// Unions component down-intervals into system contingencies. Intervals
/// that overlap or touch end-to-start form one event; the event's failed set
/// is the union of the merged components.
pub fn merge_system_contingencies(histories: &[(usize, Vec<Outage>)]) -> Vec<ContingencyEvent> {
    let mut all: Vec<(f64, f64, usize)> = histories
        .iter()
        .flat_map(|(c, h)| h.iter().map(move |o| (o.start, o.end(), *c)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));

    let mut events = Vec::new();
    let mut current: Option<(f64, f64, BTreeSet<usize>)> = None;
    for (s, e, c) in all {
        match current.as_mut() {
            Some((_, ce, comps)) if s <= *ce => {
                *ce = ce.max(e);
                comps.insert(c);
            }
            _ => {
                if let Some(done) = current.take() {
                    events.push(done);
                }
                current = Some((s, e, BTreeSet::from([c])));
            }
        }
    }
    events.extend(current);
    events
        .into_iter()
        .enumerate()
        .map(|(index, (s, e, failed_components))| ContingencyEvent {
            index,
            failed_components,
            start_hour: s,
            duration: e - s,
        })
        .collect()
}

/// Samples every component in every replication segment and merges the
/// result into one chronological contingency list.
pub fn simulate_contingencies(
    components: &[ComponentReliability],
    horizon: &SimulationHorizon,
    replications: u32,
) -> Vec<ContingencyEvent> {
    let segments = horizon.segments(replications);
    let jobs: Vec<(u32, usize)> = (0..segments.len() as u32)
        .flat_map(|r| (0..components.len()).map(move |c| (r, c)))
        .collect();
    let sampled: Vec<(usize, Vec<Outage>)> = jobs
        .par_iter()
        .map(|&(r, c)| {
            let rel = &components[c];
            let mut rng = substream(horizon.seed, r, rel.component);
            (rel.component, sample_outages(rel, segments[r as usize].clone(), &mut rng))
        })
        .collect();
    let mut by_component: HashMap<usize, Vec<Outage>> = HashMap::new();
    for (c, h) in sampled {
        by_component.entry(c).or_default().extend(h);
    }
    let mut histories: Vec<(usize, Vec<Outage>)> = by_component.into_iter().collect();
    histories.sort_by_key(|(c, _)| *c);
    merge_system_contingencies(&histories)
}
