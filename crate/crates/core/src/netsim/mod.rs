//! Deterministic discrete-event simulation of an intermittent space link.

mod plan;
mod runner;
mod scenario;
mod sim;

pub use plan::{at_seconds, link_up, ContactPlan, LinkParams, Window, DEFAULT_ORBIT_PERIOD_S};
pub use runner::{
    paced_rate, run_scenario, run_scenario_with, simulate, RunError, SimOptions, SimOutcome,
    DEST_EID, SOURCE_EID,
};
pub use scenario::{Scenario, ScenarioError, DEFAULT_LIFETIME_S, DEFAULT_MAX_TIME_S, DEFAULT_SAFETY};
pub use sim::{Corruption, Direction, EventKind, Fate, LinkCounters, SimEvent, Simulator, TraceRecord};
