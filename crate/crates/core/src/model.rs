//! Domain types, the JSON configuration schema and its validation.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::topology::Topology;

pub const PERIOD_RANGE_MS: (f64, f64) = (10.0, 10_000.0);
pub const GAIN_OTHER_MAX: f64 = 4.0;
pub const GAIN_SELF_MAX: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VoiceKind {
    #[default]
    Human,
    Bird,
    Insect,
}

impl VoiceKind {
    /// Pitch range (Hz) sampled when individuality is randomized.
    pub fn pitch_range_hz(self) -> (f64, f64) {
        match self {
            VoiceKind::Human => (90.0, 300.0),
            VoiceKind::Bird => (1500.0, 4000.0),
            VoiceKind::Insect => (3000.0, 6000.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Phase and period regulated by the two proportional loops.
    #[default]
    Feedback,
    /// Fires a fixed latency after every heard onset.
    ActionReaction,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Feedback => "feedback",
            Mode::ActionReaction => "action_reaction",
        })
    }
}

/// Static configuration of one vocal agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentParams {
    pub id: usize,
    pub preferred_period_ms: f64,
    pub gain_other: f64,
    pub gain_self: f64,
    pub amplitude: f64,
    pub mark_space_ratio: f64,
    pub phase_offset: f64,
    /// Phase of the internal beat at t = 0; the first beat falls at
    /// `(1 - initial_phase) * preferred_period_ms`.
    pub initial_phase: f64,
    pub pitch_hz: f64,
    pub voice_kind: VoiceKind,
    pub mode: Mode,
    pub reaction_latency_ms: f64,
    pub jitter_sigma_ms: f64,
    pub hearing_threshold: f64,
}

impl Default for AgentParams {
    fn default() -> Self {
        Self {
            id: 0,
            preferred_period_ms: 500.0,
            gain_other: 1.0,
            gain_self: 0.1,
            amplitude: 0.8,
            mark_space_ratio: 0.2,
            phase_offset: 0.0,
            initial_phase: 0.0,
            pitch_hz: 200.0,
            voice_kind: VoiceKind::Human,
            mode: Mode::Feedback,
            reaction_latency_ms: 23.8,
            jitter_sigma_ms: 3.0,
            hearing_threshold: 0.0,
        }
    }
}

impl AgentParams {
    pub fn with_id(id: usize) -> Self {
        Self {
            id,
            ..Self::default()
        }
    }

    /// Bound violations of this agent taken on its own.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let agent = Some(self.id);
        let mut check = |field: &'static str, value: f64, bound: Bound| {
            if !bound.contains(value) {
                out.push(Violation::new(
                    agent,
                    field,
                    format!("{field} out of {bound} (got {value})"),
                ));
            }
        };
        check(
            "preferred_period_ms",
            self.preferred_period_ms,
            Bound::closed(PERIOD_RANGE_MS.0, PERIOD_RANGE_MS.1),
        );
        check(
            "gain_other",
            self.gain_other,
            Bound::closed(0.0, GAIN_OTHER_MAX),
        );
        check(
            "gain_self",
            self.gain_self,
            Bound::closed(0.0, GAIN_SELF_MAX),
        );
        check("amplitude", self.amplitude, Bound::closed(0.0, 1.0));
        check(
            "mark_space_ratio",
            self.mark_space_ratio,
            Bound::closed(0.0, 1.0),
        );
        check(
            "phase_offset",
            self.phase_offset,
            Bound::half_open(0.0, 1.0),
        );
        check(
            "initial_phase",
            self.initial_phase,
            Bound::half_open(0.0, 1.0),
        );
        check("pitch_hz", self.pitch_hz, Bound::positive());
        check(
            "reaction_latency_ms",
            self.reaction_latency_ms,
            Bound::at_least(0.0),
        );
        check(
            "jitter_sigma_ms",
            self.jitter_sigma_ms,
            Bound::at_least(0.0),
        );
        check(
            "hearing_threshold",
            self.hearing_threshold,
            Bound::closed(0.0, 1.0),
        );
        if self.reaction_latency_ms.is_finite()
            && self.preferred_period_ms.is_finite()
            && self.reaction_latency_ms >= self.preferred_period_ms
        {
            out.push(Violation::new(
                agent,
                "reaction_latency_ms",
                format!(
                    "reaction_latency_ms must be below preferred_period_ms ({} >= {})",
                    self.reaction_latency_ms, self.preferred_period_ms
                ),
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct Bound {
    lo: f64,
    hi: f64,
    lo_open: bool,
    hi_open: bool,
}

impl Bound {
    fn closed(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            lo_open: false,
            hi_open: false,
        }
    }
    fn half_open(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            lo_open: false,
            hi_open: true,
        }
    }
    fn positive() -> Self {
        Self {
            lo: 0.0,
            hi: f64::INFINITY,
            lo_open: true,
            hi_open: true,
        }
    }
    fn at_least(lo: f64) -> Self {
        Self {
            lo,
            hi: f64::INFINITY,
            lo_open: false,
            hi_open: true,
        }
    }

    fn contains(&self, v: f64) -> bool {
        if !v.is_finite() {
            return false;
        }
        let lo_ok = if self.lo_open {
            v > self.lo
        } else {
            v >= self.lo
        };
        let hi_ok = if self.hi_open {
            v < self.hi
        } else {
            v <= self.hi
        };
        lo_ok && hi_ok
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let open = if self.lo_open { '(' } else { '[' };
        let close = if self.hi_open { ')' } else { ']' };
        if self.hi.is_infinite() {
            write!(f, "{open}{},inf)", self.lo)
        } else {
            write!(f, "{open}{},{}{close}", self.lo, self.hi)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub tick_ms: f64,
    pub duration_ms: f64,
    pub seed: u64,
    pub warmup_cycles: usize,
    pub snapshot_every_ms: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            tick_ms: 1.0,
            duration_ms: 10_000.0,
            seed: 0,
            warmup_cycles: 20,
            snapshot_every_ms: 50.0,
        }
    }
}

impl SimConfig {
    /// Violations of the simulation settings given the shortest preferred
    /// period in the population.
    pub fn violations(&self, min_period_ms: Option<f64>) -> Vec<Violation> {
        let mut out = Vec::new();
        let positive = Bound::positive();
        for (field, value) in [
            ("tick_ms", self.tick_ms),
            ("duration_ms", self.duration_ms),
            ("snapshot_every_ms", self.snapshot_every_ms),
        ] {
            if !positive.contains(value) {
                out.push(Violation::new(
                    None,
                    field,
                    format!("{field} must be > 0 (got {value})"),
                ));
            }
        }
        if let Some(min_period) = min_period_ms {
            if self.tick_ms.is_finite() && self.tick_ms > min_period / 10.0 {
                out.push(Violation::new(
                    None,
                    "tick_ms",
                    format!(
                        "tick_ms {} exceeds min preferred_period_ms / 10 ({})",
                        self.tick_ms,
                        min_period / 10.0
                    ),
                ));
            }
        }
        out
    }
}

/// Evolving rhythm state of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub phase: f64,
    pub current_period_ms: f64,
    pub asynchrony_sum_ms: f64,
    pub asynchrony_count: usize,
    pub last_onset_time_ms: Option<f64>,
    pub pending_reactions: Vec<PendingReaction>,
    /// Internal (unjittered) beat grid. `None` for action-reaction agents.
    pub grid: Option<BeatGrid>,
}

/// The most recent internal beat and the next scheduled one.
///
/// Before the first beat `last_beat_ms` is the virtual beat implied by the
/// initial phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeatGrid {
    pub last_beat_ms: f64,
    pub next_beat_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendingReaction {
    pub time_ms: f64,
    pub source: usize,
}

impl AgentState {
    /// State at `now_ms` for an agent entering the simulation.
    pub fn initial(params: &AgentParams, now_ms: f64) -> Self {
        let period = params.preferred_period_ms;
        let grid = match params.mode {
            Mode::Feedback => Some(BeatGrid {
                last_beat_ms: now_ms - params.initial_phase * period,
                next_beat_ms: now_ms + (1.0 - params.initial_phase) * period,
            }),
            Mode::ActionReaction => None,
        };
        Self {
            phase: params.initial_phase,
            current_period_ms: period,
            asynchrony_sum_ms: 0.0,
            asynchrony_count: 0,
            last_onset_time_ms: None,
            pending_reactions: Vec::new(),
            grid,
        }
    }

    pub fn reset_accumulator(&mut self) {
        self.asynchrony_sum_ms = 0.0;
        self.asynchrony_count = 0;
    }
}

/// One vocalization onset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnsetEvent {
    pub time_ms: f64,
    pub agent_id: usize,
    pub amplitude: f64,
    pub duration_ms: f64,
}

/// A single failed invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub agent: Option<usize>,
    pub field: String,
    pub message: String,
}

impl Violation {
    pub fn new(agent: Option<usize>, field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            agent,
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.agent {
            Some(id) => write!(f, "agent {id}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Every violation found in a configuration. Never empty.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ValidationErrors(pub Vec<Violation>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration ({} violation(s))", self.0.len())?;
        for v in &self.0 {
            write!(f, "\n  - {v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("malformed configuration: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] ValidationErrors),
    #[error("cannot read configuration: {0}")]
    Io(#[from] std::io::Error),
}

/// The on-disk configuration document:
/// `{ "sim": {...}, "agents": [...], "edges": [[listener, source], ...] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub sim: SimConfig,
    pub agents: Vec<AgentParams>,
    #[serde(default)]
    pub edges: Vec<[usize; 2]>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(self) -> Result<ValidConfig, ValidationErrors> {
        validate_config(&self.agents, &self.edges, &self.sim)?;
        let topology =
            Topology::from_edge_list(self.agents.len(), &self.edges).expect("edges were validated");
        Ok(ValidConfig {
            sim: self.sim,
            agents: self.agents,
            topology,
        })
    }
}

/// Checks every invariant of a configuration and reports all violations.
pub fn validate_config(
    agents: &[AgentParams],
    edges: &[[usize; 2]],
    sim: &SimConfig,
) -> Result<(), ValidationErrors> {
    let mut out = Vec::new();
    if agents.is_empty() {
        out.push(Violation::new(
            None,
            "agents",
            "at least one agent is required",
        ));
    }
    for (index, agent) in agents.iter().enumerate() {
        if agent.id != index {
            out.push(Violation::new(
                Some(agent.id),
                "id",
                format!(
                    "agent ids must be 0-based and contiguous (position {index} has id {})",
                    agent.id
                ),
            ));
        }
        out.extend(agent.violations());
    }
    let n = agents.len();
    for &[listener, source] in edges {
        for id in [listener, source] {
            if id >= n {
                out.push(Violation::new(
                    None,
                    "edges",
                    format!("edge {listener}->{source}: unknown agent id {id}"),
                ));
            }
        }
        if listener == source {
            out.push(Violation::new(
                Some(listener),
                "edges",
                format!("edge {listener}->{source}: self-edge"),
            ));
        }
    }
    let min_period = agents
        .iter()
        .map(|a| a.preferred_period_ms)
        .filter(|p| p.is_finite())
        .reduce(f64::min);
    out.extend(sim.violations(min_period));
    if out.is_empty() {
        Ok(())
    } else {
        Err(ValidationErrors(out))
    }
}

/// A configuration that passed [`validate_config`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidConfig {
    sim: SimConfig,
    agents: Vec<AgentParams>,
    topology: Topology,
}

impl ValidConfig {
    pub fn sim(&self) -> &SimConfig {
        &self.sim
    }

    pub fn agents(&self) -> &[AgentParams] {
        &self.agents
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn to_scenario(&self) -> Scenario {
        Scenario {
            sim: self.sim.clone(),
            agents: self.agents.clone(),
            edges: self.topology.edges(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(Scenario::from_json(text)?.validate()?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Same configuration with a different master seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.sim.seed = seed;
        self
    }
}

const PITCH_STREAM_SALT: u64 = 0x7069_7463_685f_6864;

/// Resamples `pitch_hz` of every agent uniformly within its voice kind's
/// range. Each agent draws from its own stream, so the result depends only
/// on `(params, seed)`.
pub fn randomize_individuality(params: &[AgentParams], seed: u64) -> Vec<AgentParams> {
    params
        .iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ PITCH_STREAM_SALT);
            rng.set_stream(p.id as u64);
            let (lo, hi) = p.voice_kind.pitch_range_hz();
            AgentParams {
                pitch_hz: rng.random_range(lo..=hi),
                ..p.clone()
            }
        })
        .collect()
}
