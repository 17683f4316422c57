//! Turns per-contingency substation power deficits into MER sizing figures.
//!
//! For each contingency the hourly deficit is `P_net = max(0, P_base − P_after)`.
//! The MER only serves the part of the event after it arrives, so each hour
//! is weighted by how much of `[h, h+1)` overlaps `[start + delay, end)`.

use std::ops::Range;

use serde::Serialize;
use thiserror::Error;

use crate::contingency::ContingencyEvent;
use crate::reconfig::RestorationPlan;
use crate::routing::ResponseDelay;

#[derive(Debug, Error, PartialEq)]
pub enum SizingError {
    #[error("series '{name}' covers hours {have:?} but the event needs {need:?}")]
    Misaligned {
        name: &'static str,
        have: Range<usize>,
        need: Range<usize>,
    },
}

/// Hourly kW values indexed by absolute simulation hour.
#[derive(Clone, Debug, PartialEq)]
pub struct HourlySeries {
    pub start_hour: usize,
    pub kw: Vec<f64>,
}

impl HourlySeries {
    pub fn new(start_hour: usize, kw: Vec<f64>) -> Self {
        Self { start_hour, kw }
    }

    pub fn hours(&self) -> Range<usize> {
        self.start_hour..self.start_hour + self.kw.len()
    }

    fn window(&self, name: &'static str, need: &Range<usize>) -> Result<&[f64], SizingError> {
        let have = self.hours();
        if need.start < have.start || need.end > have.end {
            return Err(SizingError::Misaligned { name, have, need: need.clone() });
        }
        Ok(&self.kw[need.start - have.start..need.end - have.start])
    }
}

/// Deficit series over the event's hours, plus how many hours had to be
/// clamped from a negative difference.
pub fn net_power_series(
    p_base: &HourlySeries,
    p_after: &HourlySeries,
    event: &ContingencyEvent,
) -> Result<(Vec<f64>, usize), SizingError> {
    let need = event.hour_range();
    let base = p_base.window("p_base", &need)?;
    let after = p_after.window("p_after", &need)?;
    let mut clamped = 0;
    let net = base
        .iter()
        .zip(after)
        .map(|(b, a)| {
            let d = b - a;
            if d < 0.0 {
                clamped += 1;
                0.0
            } else {
                d
            }
        })
        .collect();
    Ok((net, clamped))
}

/// Fraction of each event hour during which a MER arriving after `delay`
/// hours is connected.
pub fn served_weights(event: &ContingencyEvent, delay: f64) -> Vec<f64> {
    let from = event.start_hour + delay;
    let to = event.end_hour();
    event
        .hour_range()
        .map(|h| {
            let lo = from.max(h as f64);
            let hi = to.min(h as f64 + 1.0);
            (hi - lo).max(0.0)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeClass {
    /// Switching re-energizes every load.
    Restorable,
    /// Isolated load remains and a MER can reach it.
    NeedsMer,
    /// Isolated load remains but no depot can reach the connection bus.
    Unreachable,
}

#[derive(Clone, Debug)]
pub struct ContingencyOutcome {
    pub event: ContingencyEvent,
    pub plan: RestorationPlan,
    pub response_delay: ResponseDelay,
    /// Served fraction of each event hour (aligned with `p_net_series`).
    pub served_weights: Vec<f64>,
    pub p_net_series: Vec<f64>,
    pub clamped_hours: usize,
    pub e_net: f64,
    pub p_max_i: f64,
    pub p_avg_i: f64,
    pub needs_mer: bool,
    pub class: OutcomeClass,
}

impl ContingencyOutcome {
    pub fn served_duration(&self) -> f64 {
        self.served_weights.iter().sum()
    }

    /// Needs a MER but it arrives no earlier than the event ends.
    pub fn unserved(&self) -> bool {
        self.class == OutcomeClass::NeedsMer && self.served_duration() == 0.0
    }
}

pub fn contingency_outcome(
    event: &ContingencyEvent,
    plan: &RestorationPlan,
    response_delay: ResponseDelay,
    p_base: &HourlySeries,
    p_after: &HourlySeries,
) -> Result<ContingencyOutcome, SizingError> {
    let (p_net_series, clamped_hours) = net_power_series(p_base, p_after, event)?;
    let needs_mer = !plan.fully_restorable && plan.isolated_kw() > 0.0;
    let class = match (needs_mer, response_delay) {
        (false, _) => OutcomeClass::Restorable,
        (true, ResponseDelay::Hours(_)) => OutcomeClass::NeedsMer,
        (true, ResponseDelay::Unreachable) => OutcomeClass::Unreachable,
    };
    let served_weights = match (class, response_delay) {
        (OutcomeClass::NeedsMer, ResponseDelay::Hours(d)) => served_weights(event, d),
        _ => vec![0.0; p_net_series.len()],
    };
    let mut e_net = 0.0;
    let mut p_max_i: f64 = 0.0;
    let mut served = 0.0;
    for (&w, &p) in served_weights.iter().zip(&p_net_series) {
        if w > 0.0 {
            e_net += w * p;
            served += w;
            p_max_i = p_max_i.max(p);
        }
    }
    let p_avg_i = if served > 0.0 { e_net / served } else { 0.0 };
    Ok(ContingencyOutcome {
        event: event.clone(),
        plan: plan.clone(),
        response_delay,
        served_weights,
        p_net_series,
        clamped_hours,
        e_net,
        p_max_i,
        p_avg_i,
        needs_mer,
        class,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SizingReport {
    pub n_events: usize,
    pub n_cont: usize,
    pub n_restorable: usize,
    pub n_unreachable: usize,
    /// Needs-MER events the MER reaches only after they end.
    pub n_unserved_late: usize,
    /// Total duration of needs-MER contingencies, hours.
    pub t_cont: f64,
    pub t_avg: f64,
    pub e_avg_kwh: f64,
    pub p_max_kw: f64,
    /// Mean of per-event average served power.
    pub p_avg_kw: f64,
    /// `e_avg_kwh / t_avg`, the other reading of "average size in kW".
    pub e_avg_over_t_avg_kw: f64,
    pub restorable_fraction: f64,
    pub clamped_hours: usize,
    pub no_mer_needed: bool,
}

/// Averages over needs-MER outcomes. Sums run in event-index order so the
/// result does not depend on how the outcomes were produced.
pub fn aggregate(outcomes: &[ContingencyOutcome]) -> SizingReport {
    let mut sorted: Vec<&ContingencyOutcome> = outcomes.iter().collect();
    sorted.sort_by_key(|o| o.event.index);

    let mut r = SizingReport {
        n_events: sorted.len(),
        n_cont: 0,
        n_restorable: 0,
        n_unreachable: 0,
        n_unserved_late: 0,
        t_cont: 0.0,
        t_avg: 0.0,
        e_avg_kwh: 0.0,
        p_max_kw: 0.0,
        p_avg_kw: 0.0,
        e_avg_over_t_avg_kw: 0.0,
        restorable_fraction: 0.0,
        clamped_hours: 0,
        no_mer_needed: false,
    };
    let (mut e_sum, mut pmax_sum, mut pavg_sum) = (0.0, 0.0, 0.0);
    for o in &sorted {
        r.clamped_hours += o.clamped_hours;
        match o.class {
            OutcomeClass::Restorable => r.n_restorable += 1,
            OutcomeClass::Unreachable => r.n_unreachable += 1,
            OutcomeClass::NeedsMer => {
                r.n_cont += 1;
                if o.unserved() {
                    r.n_unserved_late += 1;
                }
                r.t_cont += o.event.duration;
                e_sum += o.e_net;
                pmax_sum += o.p_max_i;
                pavg_sum += o.p_avg_i;
            }
        }
    }
    if r.n_events > 0 {
        r.restorable_fraction = r.n_restorable as f64 / r.n_events as f64;
    }
    if r.n_cont == 0 {
        r.no_mer_needed = true;
        return r;
    }
    let n = r.n_cont as f64;
    r.t_avg = r.t_cont / n;
    r.e_avg_kwh = e_sum / n;
    r.p_max_kw = pmax_sum / n;
    r.p_avg_kw = pavg_sum / n;
    if r.t_avg > 0.0 {
        r.e_avg_over_t_avg_kw = r.e_avg_kwh / r.t_avg;
    }
    r
}
