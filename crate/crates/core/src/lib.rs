//! Deterministic simulation of rhythmic vocal interaction.
//!
//! A population of agents vocalizes on an internal beat. Each agent hears a
//! subset of the others (a directed [`Topology`]) and, in feedback mode,
//! regulates its timing with two proportional loops: one pulls its beat
//! toward what it hears, the other pulls its period back to its own
//! preference. Action-reaction agents simply answer what they hear after a
//! fixed latency.

pub mod audio;
pub mod controller;
pub mod engine;
pub mod experiments;
pub mod metrics;
pub mod model;
pub mod topology;

pub use engine::{run, Command, CommandError, EventLog, RunOutput, Snapshot, World};
pub use experiments::{
    chain_experiment, compare_modes, run_summary, ChainExperiment, ExperimentTable,
};
pub use model::{
    AgentParams, AgentState, Mode, OnsetEvent, Scenario, SimConfig, ValidConfig, ValidationErrors,
    Violation, VoiceKind,
};
pub use topology::Topology;
