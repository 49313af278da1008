//! Fixed-timestep simulation of a listening population.
//!
//! Within a tick every beat, emission and reaction that falls due is
//! processed in `(time, kind, agent)` order at its exact sub-tick time, so
//! results do not depend on how a run is cut into `step` calls. An onset is
//! heard by its listeners the moment it is emitted.

use std::cmp::Ordering;
use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::controller::{action_reaction_update, feedback_update, perceived_asynchrony};
use crate::metrics::order_parameter;
use crate::model::{
    AgentParams, AgentState, BeatGrid, Mode, OnsetEvent, PendingReaction, Scenario, SimConfig,
    ValidConfig, ValidationErrors, Violation,
};
use crate::topology::{Topology, TopologyError};

/// Smallest spacing enforced between two onsets of the same agent.
const MIN_ONSET_GAP_MS: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub phase: f64,
    pub current_period_ms: f64,
    pub last_onset_time_ms: Option<f64>,
}

/// Population state at a snapshot boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time_ms: f64,
    pub agents: Vec<AgentSnapshot>,
    pub order_parameter: f64,
}

/// Onsets ordered by `(time_ms, agent_id)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventLog {
    events: Vec<OnsetEvent>,
}

pub const EVENTS_CSV_HEADER: [&str; 4] = ["time_ms", "agent_id", "amplitude", "duration_ms"];

impl EventLog {
    pub fn new(mut events: Vec<OnsetEvent>) -> Self {
        events.sort_by(|a, b| {
            a.time_ms
                .total_cmp(&b.time_ms)
                .then(a.agent_id.cmp(&b.agent_id))
        });
        Self { events }
    }

    pub fn events(&self) -> &[OnsetEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Onset times of one agent, ascending.
    pub fn times_for(&self, agent: usize) -> Vec<f64> {
        self.events
            .iter()
            .filter(|e| e.agent_id == agent)
            .map(|e| e.time_ms)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(EVENTS_CSV_HEADER)?;
        for e in &self.events {
            out.write_record([
                format!("{:.3}", e.time_ms),
                e.agent_id.to_string(),
                e.amplitude.to_string(),
                format!("{:.3}", e.duration_ms),
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

    pub fn read_csv<R: io::Read>(r: R) -> csv::Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let events = rdr.deserialize().collect::<Result<Vec<OnsetEvent>, _>>()?;
        Ok(Self::new(events))
    }
}

/// Writes snapshots as JSON lines.
pub fn write_snapshots_jsonl<W: Write>(snapshots: &[Snapshot], mut w: W) -> io::Result<()> {
    for s in snapshots {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Live edits applied between ticks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    SetParam {
        agent: usize,
        field: String,
        value: serde_json::Value,
    },
    SetEdge {
        listener: usize,
        source: usize,
        on: bool,
    },
    AddAgent {
        params: AgentParams,
    },
    RemoveAgent {
        agent: usize,
    },
    Pause,
    Resume,
    Reset {
        config: Scenario,
    },
    Reseed {
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CommandError {
    #[error("unknown agent id {0}")]
    UnknownAgent(usize),
    #[error("unknown or read-only field {0:?}")]
    UnknownField(String),
    #[error("bad value for {field}: {reason}")]
    BadValue { field: String, reason: String },
    #[error("{}", join_violations(.0))]
    OutOfBounds(Vec<Violation>),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Invalid(#[from] ValidationErrors),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// Output of a `step` call.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepOutput {
    /// Onsets in emission order.
    pub events: Vec<OnsetEvent>,
    pub snapshots: Vec<Snapshot>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Due {
    Beat,
    Emission,
    Reaction,
}

/// A running population.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    sim: SimConfig,
    agents: Vec<AgentParams>,
    states: Vec<AgentState>,
    topology: Topology,
    listeners: Vec<Vec<usize>>,
    /// Scheduled feedback-mode onset times, ascending.
    emissions: Vec<Vec<f64>>,
    /// Noise stream key of each agent; survives renumbering.
    streams: Vec<u64>,
    rngs: Vec<ChaCha8Rng>,
    next_stream: u64,
    tick: u64,
    snapshots_taken: u64,
    paused: bool,
}

fn agent_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Number of ticks covering `duration_ms`.
pub fn ticks_for(duration_ms: f64, tick_ms: f64) -> u64 {
    ((duration_ms / tick_ms) - 1e-9).ceil().max(0.0) as u64
}

impl World {
    pub fn new(config: &ValidConfig) -> Self {
        let sim = config.sim().clone();
        let agents = config.agents().to_vec();
        let n = agents.len();
        let states = agents.iter().map(|a| AgentState::initial(a, 0.0)).collect();
        let streams: Vec<u64> = (0..n as u64).collect();
        let rngs = streams.iter().map(|&s| agent_rng(sim.seed, s)).collect();
        let topology = config.topology().clone();
        Self {
            listeners: topology.listeners(),
            topology,
            states,
            emissions: vec![Vec::new(); n],
            rngs,
            streams,
            next_stream: n as u64,
            sim,
            agents,
            tick: 0,
            snapshots_taken: 0,
            paused: false,
        }
    }

    pub fn time_ms(&self) -> f64 {
        self.tick as f64 * self.sim.tick_ms
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn sim(&self) -> &SimConfig {
        &self.sim
    }

    pub fn agents(&self) -> &[AgentParams] {
        &self.agents
    }

    pub fn states(&self) -> &[AgentState] {
        &self.states
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    /// Current configuration, as it would be written to a config file.
    pub fn scenario(&self) -> Scenario {
        Scenario {
            sim: self.sim.clone(),
            agents: self.agents.clone(),
            edges: self.topology.edges(),
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        self.snapshot_at(self.time_ms())
    }

    fn snapshot_at(&self, time_ms: f64) -> Snapshot {
        let agents: Vec<AgentSnapshot> = self
            .states
            .iter()
            .map(|s| AgentSnapshot {
                phase: s.phase,
                current_period_ms: s.current_period_ms,
                last_onset_time_ms: s.last_onset_time_ms,
            })
            .collect();
        let phases: Vec<f64> = agents.iter().map(|a| a.phase).collect();
        Snapshot {
            time_ms,
            order_parameter: order_parameter(&phases).unwrap_or(0.0),
            agents,
        }
    }

    /// Advances exactly `n_ticks` ticks. Pausing is a driver concern and is
    /// not consulted here.
    pub fn step(&mut self, n_ticks: u64) -> StepOutput {
        let mut out = StepOutput::default();
        for _ in 0..n_ticks {
            self.tick_once(&mut out);
        }
        out
    }

    fn tick_once(&mut self, out: &mut StepOutput) {
        let tick_ms = self.sim.tick_ms;
        let end = (self.tick + 1) as f64 * tick_ms;
        while let Some((_, due, agent)) = self.next_due(end) {
            match due {
                Due::Beat => self.beat(agent),
                Due::Emission => {
                    let t = self.emissions[agent].remove(0);
                    self.emit(agent, t, out);
                }
                Due::Reaction => {
                    let pending = &mut self.states[agent].pending_reactions;
                    let idx = (0..pending.len())
                        .min_by(|&a, &b| pending[a].time_ms.total_cmp(&pending[b].time_ms))
                        .expect("due reaction exists");
                    let r = pending.remove(idx);
                    self.emit(agent, r.time_ms, out);
                }
            }
        }
        self.tick += 1;
        for (params, state) in self.agents.iter().zip(&mut self.states) {
            state.phase = match (state.grid, state.last_onset_time_ms) {
                (Some(g), _) => (end - g.last_beat_ms) / (g.next_beat_ms - g.last_beat_ms),
                (None, Some(last)) => (end - last) / state.current_period_ms,
                (None, None) => state.phase + tick_ms / params.preferred_period_ms,
            };
            state.phase = wrap_unit(state.phase);
        }
        let cadence = self.sim.snapshot_every_ms;
        while (self.snapshots_taken + 1) as f64 * cadence <= end + 1e-9 {
            self.snapshots_taken += 1;
            out.snapshots
                .push(self.snapshot_at(self.snapshots_taken as f64 * cadence));
        }
    }

    fn next_due(&self, end: f64) -> Option<(f64, Due, usize)> {
        let mut best: Option<(f64, Due, usize)> = None;
        let mut consider = |t: f64, due: Due, agent: usize| {
            if t > end {
                return;
            }
            let better = match best {
                None => true,
                Some((bt, bd, ba)) => match t.total_cmp(&bt) {
                    Ordering::Less => true,
                    Ordering::Greater => false,
                    Ordering::Equal => (due, agent) < (bd, ba),
                },
            };
            if better {
                best = Some((t, due, agent));
            }
        };
        for (i, state) in self.states.iter().enumerate() {
            if let Some(g) = state.grid {
                consider(g.next_beat_ms, Due::Beat, i);
            }
            if let Some(&t) = self.emissions[i].first() {
                consider(t, Due::Emission, i);
            }
            for r in &state.pending_reactions {
                consider(r.time_ms, Due::Reaction, i);
            }
        }
        best
    }

    fn draw_noise(&mut self, agent: usize) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rngs[agent]);
        z * self.agents[agent].jitter_sigma_ms
    }

    fn beat(&mut self, agent: usize) {
        let noise = self.draw_noise(agent);
        let params = &self.agents[agent];
        let state = &mut self.states[agent];
        let grid = state.grid.expect("only feedback agents beat");
        let beat = grid.next_beat_ms;
        let onset = beat + params.phase_offset * state.current_period_ms + noise;
        let update = feedback_update(state, params);
        state.reset_accumulator();
        state.current_period_ms = update.new_period_ms;
        state.grid = Some(BeatGrid {
            last_beat_ms: beat,
            next_beat_ms: beat + update.new_period_ms + update.phase_shift_ms,
        });
        let queue = &mut self.emissions[agent];
        let at = queue.partition_point(|&t| t <= onset);
        queue.insert(at, onset);
    }

    fn emit(&mut self, agent: usize, scheduled_ms: f64, out: &mut StepOutput) {
        let state = &mut self.states[agent];
        let mut t = scheduled_ms.max(0.0);
        if let Some(last) = state.last_onset_time_ms {
            t = t.max(last + MIN_ONSET_GAP_MS);
        }
        state.last_onset_time_ms = Some(t);
        let params = &self.agents[agent];
        out.events.push(OnsetEvent {
            time_ms: t,
            agent_id: agent,
            amplitude: params.amplitude,
            duration_ms: params.mark_space_ratio * state.current_period_ms,
        });
        let amplitude = params.amplitude;
        for li in 0..self.listeners[agent].len() {
            let listener = self.listeners[agent][li];
            if self.agents[listener].hearing_threshold > amplitude {
                continue;
            }
            match self.agents[listener].mode {
                Mode::Feedback => {
                    let state = &mut self.states[listener];
                    if let Some(a) = perceived_asynchrony(state, t) {
                        state.asynchrony_sum_ms += a;
                        state.asynchrony_count += 1;
                    }
                }
                Mode::ActionReaction => {
                    if self.states[listener]
                        .pending_reactions
                        .iter()
                        .any(|r| r.source == agent)
                    {
                        continue;
                    }
                    let noise = self.draw_noise(listener);
                    let at = action_reaction_update(t, &self.agents[listener]) + noise;
                    self.states[listener]
                        .pending_reactions
                        .push(PendingReaction {
                            time_ms: at.max(t),
                            source: agent,
                        });
                }
            }
        }
    }

    /// Applies a live command between ticks. On error the world is unchanged.
    pub fn inject_command(&mut self, command: Command) -> Result<(), CommandError> {
        match command {
            Command::SetParam {
                agent,
                field,
                value,
            } => self.set_param(agent, &field, value),
            Command::SetEdge {
                listener,
                source,
                on,
            } => {
                self.topology.set_edge(listener, source, on)?;
                self.listeners = self.topology.listeners();
                Ok(())
            }
            Command::AddAgent { params } => self.add_agent(params),
            Command::RemoveAgent { agent } => self.remove_agent(agent),
            Command::Pause => {
                self.paused = true;
                Ok(())
            }
            Command::Resume => {
                self.paused = false;
                Ok(())
            }
            Command::Reset { config } => {
                *self = World::new(&config.validate()?);
                Ok(())
            }
            Command::Reseed { seed } => {
                self.sim.seed = seed;
                self.rngs = self.streams.iter().map(|&s| agent_rng(seed, s)).collect();
                Ok(())
            }
        }
    }

    fn check_population(
        &self,
        candidate: &AgentParams,
        replacing: Option<usize>,
    ) -> Result<(), CommandError> {
        let mut violations = candidate.violations();
        let min_period = self
            .agents
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != replacing)
            .map(|(_, a)| a.preferred_period_ms)
            .fold(candidate.preferred_period_ms, f64::min);
        violations.extend(self.sim.violations(Some(min_period)));
        if violations.is_empty() {
            Ok(())
        } else {
            Err(CommandError::OutOfBounds(violations))
        }
    }

    fn set_param(
        &mut self,
        agent: usize,
        field: &str,
        value: serde_json::Value,
    ) -> Result<(), CommandError> {
        let current = self
            .agents
            .get(agent)
            .ok_or(CommandError::UnknownAgent(agent))?;
        let mut doc = serde_json::to_value(current).expect("params serialize");
        let map = doc.as_object_mut().expect("params are an object");
        if field == "id" || !map.contains_key(field) {
            return Err(CommandError::UnknownField(field.to_owned()));
        }
        map.insert(field.to_owned(), value);
        let updated: AgentParams =
            serde_json::from_value(doc).map_err(|e| CommandError::BadValue {
                field: field.to_owned(),
                reason: e.to_string(),
            })?;
        self.check_population(&updated, Some(agent))?;

        let now = self.time_ms();
        let state = &mut self.states[agent];
        match (current.mode, updated.mode) {
            (Mode::Feedback, Mode::ActionReaction) => {
                state.grid = None;
                state.reset_accumulator();
            }
            (Mode::ActionReaction, Mode::Feedback) => {
                state.pending_reactions.clear();
                state.grid = Some(BeatGrid {
                    last_beat_ms: now,
                    next_beat_ms: now + state.current_period_ms,
                });
            }
            _ => {}
        }
        self.agents[agent] = updated;
        Ok(())
    }

    fn add_agent(&mut self, mut params: AgentParams) -> Result<(), CommandError> {
        params.id = self.agents.len();
        self.check_population(&params, None)?;
        self.topology.add_agent();
        self.listeners = self.topology.listeners();
        self.states
            .push(AgentState::initial(&params, self.time_ms()));
        self.emissions.push(Vec::new());
        self.rngs.push(agent_rng(self.sim.seed, self.next_stream));
        self.streams.push(self.next_stream);
        self.next_stream += 1;
        self.agents.push(params);
        Ok(())
    }

    fn remove_agent(&mut self, agent: usize) -> Result<(), CommandError> {
        if agent >= self.agents.len() {
            return Err(CommandError::UnknownAgent(agent));
        }
        self.topology.remove_agent(agent)?;
        self.listeners = self.topology.listeners();
        self.agents.remove(agent);
        self.states.remove(agent);
        self.emissions.remove(agent);
        self.rngs.remove(agent);
        self.streams.remove(agent);
        for (i, a) in self.agents.iter_mut().enumerate() {
            a.id = i;
        }
        for state in &mut self.states {
            state.pending_reactions.retain(|r| r.source != agent);
            for r in &mut state.pending_reactions {
                if r.source > agent {
                    r.source -= 1;
                }
            }
        }
        Ok(())
    }
}

fn wrap_unit(x: f64) -> f64 {
    let w = x.rem_euclid(1.0);
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Everything a batch run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub events: EventLog,
    pub snapshots: Vec<Snapshot>,
}

/// Simulates `sim.duration_ms` from a fresh world.
pub fn run(config: &ValidConfig) -> RunOutput {
    let mut world = World::new(config);
    let out = world.step(ticks_for(config.sim().duration_ms, config.sim().tick_ms));
    RunOutput {
        events: EventLog::new(out.events),
        snapshots: out.snapshots,
    }
}
