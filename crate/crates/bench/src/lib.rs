//! Fixtures shared by the criterion benches.

use vocsync::{AgentParams, ChainExperiment, Mode, ValidConfig};

/// One trial of the default chain experiment in `mode`.
pub fn chain_trial(n_agents: usize, mode: Mode) -> ValidConfig {
    ChainExperiment {
        n_agents,
        mode,
        ..ChainExperiment::default()
    }
    .trial_scenario(0)
    .expect("chain length >= 2")
    .validate()
    .expect("defaults are valid")
}

pub fn noiseless_reaction_chain() -> ChainExperiment {
    ChainExperiment {
        mode: Mode::ActionReaction,
        template: AgentParams {
            jitter_sigma_ms: 0.0,
            ..AgentParams::default()
        },
        ..ChainExperiment::default()
    }
}

/// `n` phases spread evenly around the circle.
pub fn spread_phases(n: usize) -> Vec<f64> {
    (0..n).map(|k| k as f64 / n as f64).collect()
}
