//! Batch harness for master/slave chain experiments.
//!
//! Agent 0 is a noiseless pacemaker that hears nobody; agent k hears k-1.
//! Each trial runs with its own derived seed and randomized slave start
//! phases. Errors against the pacemaker are pooled across trials per chain
//! position (position = agent id + 1).

use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{run, EventLog};
use crate::metrics::{summarize, sync_error_series, MetricsError};
use crate::model::{AgentParams, Mode, Scenario, SimConfig, ValidationErrors};
use crate::topology::{Topology, TopologyError};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Invalid(#[from] ValidationErrors),
    #[error("position {position}: {source}")]
    Metrics {
        position: usize,
        #[source]
        source: MetricsError,
    },
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("cycles_per_trial ({cycles}) must exceed warmup_cycles ({warmup})")]
    TooFewCycles { cycles: usize, warmup: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainExperiment {
    pub n_agents: usize,
    pub mode: Mode,
    pub trials: usize,
    pub cycles_per_trial: usize,
    /// Parameters shared by every agent; ids, modes and master noise are
    /// overridden per agent.
    pub template: AgentParams,
    /// `seed` is the base seed; `duration_ms` is derived from the cycle count.
    pub sim: SimConfig,
}

impl Default for ChainExperiment {
    fn default() -> Self {
        Self {
            n_agents: 8,
            mode: Mode::Feedback,
            trials: 10,
            cycles_per_trial: 120,
            template: AgentParams::default(),
            sim: SimConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub position: usize,
    pub mode: Mode,
    pub mean_error_ms: f64,
    pub std_error_ms: f64,
    pub n_onsets: usize,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ExperimentTable {
    pub rows: Vec<ExperimentRow>,
}

pub const SUMMARY_CSV_HEADER: [&str; 6] = [
    "position",
    "mode",
    "mean_error_ms",
    "std_error_ms",
    "n_onsets",
    "trials",
];

impl ExperimentTable {
    pub fn rows_for(&self, mode: Mode) -> impl Iterator<Item = &ExperimentRow> {
        self.rows.iter().filter(move |r| r.mode == mode)
    }

    pub fn means(&self, mode: Mode) -> Vec<f64> {
        self.rows_for(mode).map(|r| r.mean_error_ms).collect()
    }

    pub fn stds(&self, mode: Mode) -> Vec<f64> {
        self.rows_for(mode).map(|r| r.std_error_ms).collect()
    }

    pub fn extend(&mut self, other: ExperimentTable) {
        self.rows.extend(other.rows);
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(SUMMARY_CSV_HEADER)?;
        for r in &self.rows {
            out.write_record([
                r.position.to_string(),
                r.mode.to_string(),
                format!("{:.3}", r.mean_error_ms),
                format!("{:.3}", r.std_error_ms),
                r.n_onsets.to_string(),
                r.trials.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

impl fmt::Display for ExperimentTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>8}  {:<16} {:>14} {:>13} {:>8}",
            "position", "mode", "mean_err_ms", "std_err_ms", "onsets"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:>8}  {:<16} {:>14.3} {:>13.3} {:>8}",
                r.position,
                r.mode.to_string(),
                r.mean_error_ms,
                r.std_error_ms,
                r.n_onsets
            )?;
        }
        Ok(())
    }
}

/// Seed of trial `index` derived from the base seed.
pub fn trial_seed(base: u64, index: usize) -> u64 {
    base ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

impl ChainExperiment {
    fn check(&self) -> Result<(), ExperimentError> {
        if self.trials == 0 {
            return Err(ExperimentError::NoTrials);
        }
        if self.cycles_per_trial <= self.sim.warmup_cycles {
            return Err(ExperimentError::TooFewCycles {
                cycles: self.cycles_per_trial,
                warmup: self.sim.warmup_cycles,
            });
        }
        Ok(())
    }

    /// Configuration of trial `index`.
    pub fn trial_scenario(&self, index: usize) -> Result<Scenario, ExperimentError> {
        let topology = Topology::chain(self.n_agents)?;
        let seed = trial_seed(self.sim.seed, index);
        let mut phases = ChaCha8Rng::seed_from_u64(seed);
        phases.set_stream(u64::MAX);
        let agents = (0..self.n_agents)
            .map(|id| {
                let mut a = AgentParams {
                    id,
                    mode: self.mode,
                    initial_phase: phases.random_range(0.0..1.0),
                    ..self.template.clone()
                };
                if id == 0 {
                    a.mode = Mode::Feedback;
                    a.jitter_sigma_ms = 0.0;
                    a.initial_phase = 0.0;
                }
                a
            })
            .collect();
        let master_period = self.template.preferred_period_ms;
        Ok(Scenario {
            sim: SimConfig {
                seed,
                duration_ms: (self.cycles_per_trial as f64 + 0.5) * master_period,
                ..self.sim.clone()
            },
            agents,
            edges: topology.edges(),
        })
    }

    /// Pooled sync errors per slave, indexed by agent id - 1, for one trial.
    fn trial_errors(&self, index: usize) -> Result<Vec<Vec<f64>>, ExperimentError> {
        let config = self.trial_scenario(index)?.validate()?;
        let out = run(&config);
        let master = out.events.times_for(0);
        (1..self.n_agents)
            .map(|k| {
                sync_error_series(&master, &out.events.times_for(k), self.sim.warmup_cycles)
                    .map(|s| s.errors())
                    .map_err(|source| ExperimentError::Metrics {
                        position: k + 1,
                        source,
                    })
            })
            .collect()
    }
}

/// Runs every trial of a chain experiment and summarizes each slave
/// position. Trials run in parallel and are reduced in seed order.
pub fn chain_experiment(exp: &ChainExperiment) -> Result<ExperimentTable, ExperimentError> {
    exp.check()?;
    let per_trial: Vec<Vec<Vec<f64>>> = (0..exp.trials)
        .into_par_iter()
        .map(|i| exp.trial_errors(i))
        .collect::<Result<_, _>>()?;
    let rows = (1..exp.n_agents)
        .map(|k| {
            let pooled: Vec<f64> = per_trial
                .iter()
                .flat_map(|t| t[k - 1].iter().copied())
                .collect();
            let s = summarize(&pooled).map_err(|source| ExperimentError::Metrics {
                position: k + 1,
                source,
            })?;
            Ok(ExperimentRow {
                position: k + 1,
                mode: exp.mode,
                mean_error_ms: s.mean,
                std_error_ms: s.std,
                n_onsets: s.n,
                trials: exp.trials,
            })
        })
        .collect::<Result<_, ExperimentError>>()?;
    Ok(ExperimentTable { rows })
}

/// Sync error of every agent k >= 1 against agent 0 for a single run.
///
/// Agents with too few onsets after warmup get no row.
pub fn run_summary(
    events: &EventLog,
    agents: &[AgentParams],
    warmup_cycles: usize,
) -> ExperimentTable {
    let reference = events.times_for(0);
    let rows = agents
        .iter()
        .skip(1)
        .filter_map(|a| {
            let series =
                sync_error_series(&reference, &events.times_for(a.id), warmup_cycles).ok()?;
            let s = summarize(&series.errors()).ok()?;
            Some(ExperimentRow {
                position: a.id + 1,
                mode: a.mode,
                mean_error_ms: s.mean,
                std_error_ms: s.std,
                n_onsets: s.n,
                trials: 1,
            })
        })
        .collect();
    ExperimentTable { rows }
}

/// Feedback and action-reaction chains on identical seeds.
pub fn compare_modes(
    base: &ChainExperiment,
) -> Result<(ExperimentTable, ExperimentTable), ExperimentError> {
    let feedback = chain_experiment(&ChainExperiment {
        mode: Mode::Feedback,
        ..base.clone()
    })?;
    let reaction = chain_experiment(&ChainExperiment {
        mode: Mode::ActionReaction,
        ..base.clone()
    })?;
    Ok((feedback, reaction))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(mode: Mode) -> ChainExperiment {
        ChainExperiment {
            mode,
            trials: 2,
            template: AgentParams {
                jitter_sigma_ms: 0.0,
                ..AgentParams::default()
            },
            ..ChainExperiment::default()
        }
    }

    #[test]
    fn one_row_per_slave() {
        let t = chain_experiment(&quiet(Mode::Feedback)).unwrap();
        assert_eq!(t.rows.len(), 7);
        assert_eq!(t.rows.first().unwrap().position, 2);
        assert_eq!(t.rows.last().unwrap().position, 8);
    }

    #[test]
    fn noiseless_reaction_chain_lags_linearly() {
        let t = chain_experiment(&quiet(Mode::ActionReaction)).unwrap();
        for r in &t.rows {
            let expect = -((r.position - 1) as f64) * 23.8;
            assert!((r.mean_error_ms - expect).abs() < 1e-6, "{r:?}");
            assert!(r.std_error_ms < 1e-6);
            assert_eq!(r.n_onsets, 2 * 100);
        }
    }

    #[test]
    fn noiseless_feedback_chain_converges() {
        let t = chain_experiment(&quiet(Mode::Feedback)).unwrap();
        for r in &t.rows {
            assert!(r.mean_error_ms.abs() < 1.0 && r.std_error_ms < 1.0, "{r:?}");
        }
    }

    #[test]
    fn trial_scenarios_are_seeded() {
        let e = ChainExperiment::default();
        assert_eq!(e.trial_scenario(3).unwrap(), e.trial_scenario(3).unwrap());
        assert_ne!(e.trial_scenario(3).unwrap(), e.trial_scenario(4).unwrap());
        let s = e.trial_scenario(0).unwrap();
        assert_eq!(s.agents[0].jitter_sigma_ms, 0.0);
        assert_eq!(s.agents[0].initial_phase, 0.0);
        assert!(s.clone().validate().is_ok());
    }

    #[test]
    fn single_run_summary_matches_trial_rows() {
        let exp = ChainExperiment {
            trials: 1,
            ..quiet(Mode::ActionReaction)
        };
        let scenario = exp.trial_scenario(0).unwrap();
        let out = run(&scenario.clone().validate().unwrap());
        let single = run_summary(&out.events, &scenario.agents, exp.sim.warmup_cycles);
        assert_eq!(single, chain_experiment(&exp).unwrap());
    }

    #[test]
    fn bad_settings_rejected() {
        let e = ChainExperiment {
            trials: 0,
            ..ChainExperiment::default()
        };
        assert!(matches!(
            chain_experiment(&e),
            Err(ExperimentError::NoTrials)
        ));
        let e = ChainExperiment {
            n_agents: 1,
            ..ChainExperiment::default()
        };
        assert!(matches!(
            chain_experiment(&e),
            Err(ExperimentError::Topology(_))
        ));
        let e = ChainExperiment {
            cycles_per_trial: 10,
            ..ChainExperiment::default()
        };
        assert!(matches!(
            chain_experiment(&e),
            Err(ExperimentError::TooFewCycles { .. })
        ));
    }

    #[test]
    fn csv_header_and_rows() {
        let t = chain_experiment(&quiet(Mode::ActionReaction)).unwrap();
        let csv = t.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next(),
            Some("position,mode,mean_error_ms,std_error_ms,n_onsets,trials")
        );
        assert_eq!(lines.next(), Some("2,action_reaction,-23.800,0.000,200,2"));
    }
}
