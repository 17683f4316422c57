//! End-to-end run: load inputs, solve the base year, sample contingencies,
//! plan restoration, route MERs, size them, and write the reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contingency::{simulate_contingencies, ContingencyError, ContingencyEvent, ReliabilityTable, SimulationHorizon};
use crate::feeder::{load_feeder, parse_profile_csv, Feeder, FeederError};
use crate::powerflow::{base_year_run, BaseYearSeries, PowerFlowError, RadialNetwork, SolverOptions};
use crate::reconfig::{build_restoration_plan, OperableGraph};
use crate::routing::{response_delay, RoadNetwork, Route, RoutingError};
use crate::sizing::{aggregate, contingency_outcome, ContingencyOutcome, HourlySeries, OutcomeClass, SizingError, SizingReport};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Feeder(#[from] FeederError),
    #[error(transparent)]
    Contingency(#[from] ContingencyError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error(transparent)]
    Sizing(#[from] SizingError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

/// Everything a run needs. Field names double as config-file keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub feeder: PathBuf,
    /// Reliability CSV; the standard class table when absent.
    pub reliability: Option<PathBuf>,
    pub roads: PathBuf,
    /// Single-column load multiplier CSV applied to every load.
    pub profile: Option<PathBuf>,
    pub years: u32,
    pub seed: u64,
    pub install_min: f64,
    pub replications: u32,
    pub reconfiguration: bool,
    pub lossless_base: bool,
    /// Directory for `contingencies.jsonl` and `voltages.csv`.
    #[serde(skip_serializing)]
    pub dump_diagnostics: Option<PathBuf>,
    /// Base-case hours written to `voltages.csv` when dumping diagnostics.
    pub voltage_dump_hours: usize,
    /// Directory for `report.json` and `report.txt`.
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    /// Worker threads; all cores when absent. Never affects results.
    /// Output locations and worker count stay out of `report.json`.
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            feeder: PathBuf::new(),
            reliability: None,
            roads: PathBuf::new(),
            profile: None,
            years: 1,
            seed: 0,
            install_min: 15.0,
            replications: 1,
            reconfiguration: true,
            lossless_base: false,
            dump_diagnostics: None,
            voltage_dump_hours: 24,
            out: None,
            workers: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.years < 1 {
            return bad("years must be at least 1");
        }
        if self.replications < 1 {
            return bad("replications must be at least 1");
        }
        if !(self.install_min >= 0.0 && self.install_min.is_finite()) {
            return bad("install_min must be a finite non-negative number");
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1");
        }
        for (name, p) in [("feeder", Some(&self.feeder)), ("roads", Some(&self.roads))]
            .into_iter()
            .chain([("reliability", self.reliability.as_ref()), ("profile", self.profile.as_ref())])
        {
            if let Some(p) = p {
                if p.as_os_str().is_empty() {
                    return Err(PipelineError::Config(format!("{name} path is required")));
                }
                if !p.exists() {
                    return Err(PipelineError::Config(format!("{name} file {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }
}

/// Loaded inputs.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub feeder: Feeder,
    pub reliability: ReliabilityTable,
    pub roads: RoadNetwork,
}

impl Scenario {
    pub fn load(config: &RunConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let mut feeder = load_feeder(&config.feeder)?;
        if let Some(p) = &config.profile {
            let text = std::fs::read_to_string(p).map_err(io_err(p))?;
            feeder = feeder.with_uniform_profile(parse_profile_csv(&text)?)?;
        }
        let reliability = match &config.reliability {
            Some(p) => ReliabilityTable::load(p)?,
            None => ReliabilityTable::standard(),
        };
        let roads = RoadNetwork::load(&config.roads)?;
        Ok(Self { feeder, reliability, roads })
    }
}

/// One contingency with its routing decision.
#[derive(Clone, Debug)]
pub struct EventRecord {
    pub outcome: ContingencyOutcome,
    pub route: Option<Route>,
    /// Event hours whose post-contingency power flow did not converge;
    /// their deficit is taken as zero.
    pub nonconverged_hours: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverSummary {
    pub base_nonconverged_hours: Vec<usize>,
    pub event_nonconverged_hours: usize,
    pub max_base_balance_mismatch: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: SizingReport,
    pub solver: SolverSummary,
    pub events: Vec<EventRecord>,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    config: &'a RunConfig,
    sizing: &'a SizingReport,
    solver: &'a SolverSummary,
}

impl RunOutput {
    pub fn report_json(&self, config: &RunConfig) -> String {
        let file = ReportFile { config, sizing: &self.report, solver: &self.solver };
        let mut s = serde_json::to_string_pretty(&file).expect("report is serializable");
        s.push('\n');
        s
    }

    pub fn report_text(&self, config: &RunConfig) -> String {
        let r = &self.report;
        let mut out = String::new();
        let _ = writeln!(out, "MER sizing: {} ({} years, seed {})", config.feeder.display(), config.years, config.seed);
        let _ = writeln!(
            out,
            "reconfiguration {}, installation {} min{}\n",
            if config.reconfiguration { "on" } else { "off" },
            config.install_min,
            if config.lossless_base { ", lossless base" } else { "" }
        );
        let rows: [(&str, String); 8] = [
            ("Average Size (kWh)", format!("{:.2}", r.e_avg_kwh)),
            ("Maximum Size (kW)", format!("{:.2}", r.p_max_kw)),
            ("Average Size (kW), mean P_avg", format!("{:.2}", r.p_avg_kw)),
            ("Average Size (kW), E_avg/t_avg", format!("{:.2}", r.e_avg_over_t_avg_kw)),
            ("Average Duration Time (hours)", format!("{:.2}", r.t_avg)),
            ("Contingencies needing MER", r.n_cont.to_string()),
            ("Restorable fraction", format!("{:.4}", r.restorable_fraction)),
            ("Total contingencies", r.n_events.to_string()),
        ];
        for (label, value) in rows {
            let _ = writeln!(out, "{label:<32}{value:>14}");
        }
        if r.no_mer_needed {
            let _ = writeln!(out, "\nno contingency needed a MER");
        }
        let _ = writeln!(
            out,
            "\nunreachable: {}  arrived after end: {}  clamped hours: {}",
            r.n_unreachable, r.n_unserved_late, r.clamped_hours
        );
        let s = &self.solver;
        let _ = writeln!(
            out,
            "non-converged hours: base {}  events {}  max base balance mismatch {:.3e}",
            s.base_nonconverged_hours.len(),
            s.event_nonconverged_hours,
            s.max_base_balance_mismatch
        );
        out
    }

    /// One JSON object per contingency, in event order.
    pub fn diagnostics_jsonl(&self, feeder: &Feeder) -> String {
        let mut out = String::new();
        for rec in &self.events {
            let o = &rec.outcome;
            let line = serde_json::json!({
                "index": o.event.index,
                "start_hour": o.event.start_hour,
                "duration": o.event.duration,
                "failed": feeder.branch_ids(o.event.failed_components.iter().copied()),
                "class": o.class,
                "isolated_kw": o.plan.isolated_kw(),
                "isolated_buses": o.plan.isolated_buses.iter().map(|&b| &feeder.buses[b].id).collect::<Vec<_>>(),
                "switch_ops": o.plan.switch_ops,
                "mer_bus": o.plan.mer_connection_bus.map(|b| &feeder.buses[b].id),
                "route": rec.route,
                "response_delay": o.response_delay,
                "p_net": o.p_net_series,
                "e_net": o.e_net,
                "p_max": o.p_max_i,
                "p_avg": o.p_avg_i,
                "clamped_hours": o.clamped_hours,
                "nonconverged_hours": rec.nonconverged_hours,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }
}

/// Loads inputs, samples contingencies over the configured horizon and
/// evaluates them. Writes artifacts when `out` / `dump_diagnostics` are set.
pub fn run(config: &RunConfig) -> Result<RunOutput, PipelineError> {
    let scenario = Scenario::load(config)?;
    with_pool(config, || {
        let components = scenario.reliability.components(&scenario.feeder)?;
        let horizon = SimulationHorizon::new(config.years, config.seed);
        let events = simulate_contingencies(&components, &horizon, config.replications);
        finish(config, &scenario, &events)
    })
}

/// Like [`run`] but with a fixed contingency list instead of sampling.
pub fn run_with_events(config: &RunConfig, events: &[ContingencyEvent]) -> Result<RunOutput, PipelineError> {
    let scenario = Scenario::load(config)?;
    with_pool(config, || finish(config, &scenario, events))
}

fn with_pool<T: Send>(
    config: &RunConfig,
    f: impl FnOnce() -> Result<T, PipelineError> + Send,
) -> Result<T, PipelineError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = config.workers {
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| PipelineError::Pool(e.to_string()))?;
    pool.install(f)
}

fn finish(config: &RunConfig, scenario: &Scenario, events: &[ContingencyEvent]) -> Result<RunOutput, PipelineError> {
    let output = evaluate(scenario, config, events)?;
    if let Some(dir) = &config.out {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let p = dir.join("report.json");
        std::fs::write(&p, output.report_json(config)).map_err(io_err(&p))?;
        let p = dir.join("report.txt");
        std::fs::write(&p, output.report_text(config)).map_err(io_err(&p))?;
    }
    if let Some(dir) = &config.dump_diagnostics {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let p = dir.join("contingencies.jsonl");
        std::fs::write(&p, output.diagnostics_jsonl(&scenario.feeder)).map_err(io_err(&p))?;
        let p = dir.join("voltages.csv");
        std::fs::write(&p, voltage_dump(&scenario.feeder, config.voltage_dump_hours)?).map_err(io_err(&p))?;
    }
    Ok(output)
}

/// Base-case voltages for the first `hours` hours of the profile year.
pub fn voltage_dump(feeder: &Feeder, hours: usize) -> Result<String, PipelineError> {
    let net = RadialNetwork::build(feeder, &feeder.normally_closed())?;
    let opts = SolverOptions::default();
    let mut out = String::from("hour,bus,phase,vmag_pu,angle_deg\n");
    for h in 0..hours {
        let sol = net.solve(&feeder.profile_multipliers(h), &opts);
        for (bus, phase, mag, ang) in sol.voltage_rows(feeder) {
            let _ = writeln!(out, "{h},{bus},{phase},{mag:.6},{ang:.4}");
        }
    }
    Ok(out)
}

/// Plans, routes and sizes each event. Events are independent and run in
/// parallel; the report is assembled in event order.
pub fn evaluate(
    scenario: &Scenario,
    config: &RunConfig,
    events: &[ContingencyEvent],
) -> Result<RunOutput, PipelineError> {
    let feeder = &scenario.feeder;
    let opts = SolverOptions::default();
    let base = base_year_run(feeder, &opts, config.lossless_base)?;

    let mut routes: BTreeMap<usize, Option<Route>> = BTreeMap::new();
    for (b, bus) in feeder.buses.iter().enumerate() {
        if scenario.roads.node_for_bus(&bus.id).is_none() {
            continue;
        }
        let r = match scenario.roads.route_to_bus(&bus.id) {
            Ok(r) => Some(r),
            Err(RoutingError::Unreachable { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        routes.insert(b, r);
    }

    let mut records = events
        .par_iter()
        .map(|e| evaluate_event(feeder, config, &opts, &base, &routes, e))
        .collect::<Result<Vec<_>, _>>()?;
    records.sort_by_key(|r| r.outcome.event.index);

    let outcomes: Vec<ContingencyOutcome> = records.iter().map(|r| r.outcome.clone()).collect();
    let report = aggregate(&outcomes);
    let solver = SolverSummary {
        base_nonconverged_hours: base.nonconverged_hours.clone(),
        event_nonconverged_hours: records.iter().map(|r| r.nonconverged_hours.len()).sum(),
        max_base_balance_mismatch: base.max_balance_mismatch,
    };
    Ok(RunOutput { report, solver, events: records })
}

fn evaluate_event(
    feeder: &Feeder,
    config: &RunConfig,
    opts: &SolverOptions,
    base: &BaseYearSeries,
    routes: &BTreeMap<usize, Option<Route>>,
    event: &ContingencyEvent,
) -> Result<EventRecord, PipelineError> {
    let graph = if config.reconfiguration {
        OperableGraph::new(feeder, &event.failed_components)
    } else {
        OperableGraph::without_reconfiguration(feeder, &event.failed_components)
    };
    let plan = build_restoration_plan(&graph);
    let hours = event.hour_range();
    let p_base = HourlySeries::new(hours.start, hours.clone().map(|h| base.at(h)).collect());

    let net = RadialNetwork::build(feeder, &plan.closed)?;
    let mut nonconverged_hours = Vec::new();
    let after_kw: Vec<f64> = hours
        .clone()
        .map(|h| {
            let m = feeder.profile_multipliers(h);
            if config.lossless_base {
                return energized_load_kw(feeder, &net, &m);
            }
            let s = net.solve(&m, opts);
            if s.converged {
                s.substation_kw
            } else {
                nonconverged_hours.push(h);
                base.at(h)
            }
        })
        .collect();
    let p_after = HourlySeries::new(hours.start, after_kw);

    let route = match plan.mer_connection_bus {
        Some(b) => match routes.get(&b) {
            Some(r) => r.clone(),
            None => return Err(RoutingError::UnmappedBus(feeder.buses[b].id.clone()).into()),
        },
        None => None,
    };
    let delay = response_delay(route.as_ref(), config.install_min);
    let outcome = contingency_outcome(event, &plan, delay, &p_base, &p_after)?;
    let route = if outcome.class == OutcomeClass::Restorable { None } else { route };
    Ok(EventRecord { outcome, route, nonconverged_hours })
}

/// Scaled kW of load phases the network still feeds.
fn energized_load_kw(feeder: &Feeder, net: &RadialNetwork<'_>, multipliers: &[f64]) -> f64 {
    let live = net.energized();
    feeder
        .loads
        .iter()
        .map(|l| {
            let kw: f64 = l.phases.iter().filter(|&p| live[l.bus].contains(p)).map(|p| l.kw[p.index()]).sum();
            kw * Feeder::load_multiplier(l, multipliers)
        })
        .sum()
}
