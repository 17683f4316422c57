//! Monte Carlo sizing of movable energy resources (MERs) for distribution
//! service restoration.
//!
//! The pipeline samples component outage histories, decides per contingency
//! whether switching can re-energize every load, routes a MER to whatever
//! remains isolated, and turns the hourly substation power deficit into
//! power and energy sizing statistics.

pub mod complex;
pub mod contingency;
pub mod feeder;
pub mod pipeline;
pub mod powerflow;
pub mod reconfig;
pub mod routing;
pub mod sizing;
mod unionfind;

pub use contingency::{ContingencyEvent, ReliabilityTable, SimulationHorizon};
pub use feeder::{Feeder, FeederError};
pub use pipeline::{run, run_with_events, RunConfig, RunOutput};
pub use powerflow::{PowerFlowSolution, RadialNetwork, SolverOptions};
pub use reconfig::{OperableGraph, RestorationPlan};
pub use routing::{ResponseDelay, RoadNetwork, Route};
pub use sizing::{ContingencyOutcome, SizingReport};

/// Hours in one profile year.
pub const HOURS_PER_YEAR: usize = 8760;
