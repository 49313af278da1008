//! Per-agent control laws.
//!
//! A feedback agent runs two proportional loops, both evaluated once per own
//! beat:
//!
//! * the *other* loop compares the agent's beat grid with the onsets it
//!   hears and shifts the next beat against the mean asynchrony
//!   (`gain_other`);
//! * the *self* loop pulls the current period toward the preferred period
//!   (`gain_self`).
//!
//! The other loop touches phase only and the self loop touches period only.
//! An action-reaction agent has no loops at all: it fires a fixed latency
//! after whatever it hears.

use crate::model::{AgentParams, AgentState};

/// Output of one beat-boundary evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlUpdate {
    /// Added to the time of the next beat. Negative moves it earlier.
    pub phase_shift_ms: f64,
    pub new_period_ms: f64,
}

/// Signed asynchrony of a heard onset against the agent's beat grid.
///
/// Pairs the onset with whichever of the last beat and the next scheduled
/// beat is closer; a tie goes to the next beat, so the result lies in
/// `(-T/2, T/2]` for a regular grid. Positive means the agent lags the heard
/// onset. Returns `None` when the agent has no grid (action-reaction mode).
pub fn perceived_asynchrony(state: &AgentState, heard_time_ms: f64) -> Option<f64> {
    let grid = state.grid?;
    let to_last = grid.last_beat_ms - heard_time_ms;
    let to_next = grid.next_beat_ms - heard_time_ms;
    if to_next.abs() <= to_last.abs() {
        Some(to_next)
    } else {
        Some(to_last)
    }
}

/// Mean asynchrony accumulated since the last beat (0 if nothing was heard).
pub fn mean_asynchrony(state: &AgentState) -> f64 {
    if state.asynchrony_count == 0 {
        0.0
    } else {
        state.asynchrony_sum_ms / state.asynchrony_count as f64
    }
}

/// Evaluates both loops for the beat that just occurred.
///
/// Pure: the caller resets the accumulator afterwards.
pub fn feedback_update(state: &AgentState, params: &AgentParams) -> ControlUpdate {
    let current = state.current_period_ms;
    // Convex form keeps gain 1 (snap to preferred) and gain 0 (hold) exact.
    let new_period_ms =
        (1.0 - params.gain_self) * current + params.gain_self * params.preferred_period_ms;
    // |shift| <= T/2 for both the outgoing and incoming period keeps beats ordered.
    let limit = current.min(new_period_ms) / 2.0;
    let phase_shift_ms = (-params.gain_other * mean_asynchrony(state)).clamp(-limit, limit);
    ControlUpdate {
        phase_shift_ms,
        new_period_ms,
    }
}

/// Time at which an action-reaction agent answers an onset heard at
/// `heard_time_ms`.
pub fn action_reaction_update(heard_time_ms: f64, params: &AgentParams) -> f64 {
    heard_time_ms + params.reaction_latency_ms
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BeatGrid, Mode};
    use proptest::prelude::*;

    fn state_with_grid(last: f64, next: f64, period: f64) -> AgentState {
        AgentState {
            grid: Some(BeatGrid {
                last_beat_ms: last,
                next_beat_ms: next,
            }),
            current_period_ms: period,
            ..AgentState::initial(&AgentParams::default(), 0.0)
        }
    }

    fn accumulated(sum: f64, count: usize, period: f64) -> AgentState {
        AgentState {
            asynchrony_sum_ms: sum,
            asynchrony_count: count,
            ..state_with_grid(0.0, period, period)
        }
    }

    /// Brute-force nearest beat over an explicit grid, earlier-wins only
    /// when strictly closer.
    fn nearest_on_grid(beats: &[f64], heard: f64) -> f64 {
        let mut best = beats[0];
        for &b in beats {
            if (b - heard).abs() < (best - heard).abs()
                || ((b - heard).abs() == (best - heard).abs() && b > best)
            {
                best = b;
            }
        }
        best - heard
    }

    #[test]
    fn asynchrony_examples() {
        // Beats at 0, 500, 1000.
        let before = state_with_grid(0.0, 500.0, 500.0);
        assert_eq!(perceived_asynchrony(&before, 480.0), Some(20.0));
        assert_eq!(perceived_asynchrony(&before, 500.0), Some(0.0));
        let after = state_with_grid(500.0, 1000.0, 500.0);
        assert_eq!(perceived_asynchrony(&after, 740.0), Some(-240.0));
        assert_eq!(
            perceived_asynchrony(&after, 740.0).unwrap(),
            nearest_on_grid(&[0.0, 500.0, 1000.0], 740.0)
        );
    }

    #[test]
    fn asynchrony_tie_pairs_with_next_beat() {
        let s = state_with_grid(500.0, 1000.0, 500.0);
        assert_eq!(perceived_asynchrony(&s, 750.0), Some(250.0));
    }

    #[test]
    fn no_grid_means_ignored() {
        let params = AgentParams {
            mode: Mode::ActionReaction,
            ..AgentParams::default()
        };
        let s = AgentState::initial(&params, 0.0);
        assert_eq!(perceived_asynchrony(&s, 10.0), None);
    }

    #[test]
    fn proportional_phase_law() {
        let params = AgentParams {
            gain_other: 0.5,
            ..AgentParams::default()
        };
        let u = feedback_update(&accumulated(20.0, 1, 500.0), &params);
        assert_eq!(u.phase_shift_ms, -10.0);
        assert_eq!(u.new_period_ms, 500.0);
    }

    #[test]
    fn self_loop_alone() {
        let params = AgentParams {
            gain_self: 0.1,
            preferred_period_ms: 500.0,
            ..AgentParams::default()
        };
        let mut s = accumulated(0.0, 0, 520.0);
        s.current_period_ms = 520.0;
        let u = feedback_update(&s, &params);
        assert_eq!(u.phase_shift_ms, 0.0);
        assert!((u.new_period_ms - 518.0).abs() < 1e-12);
    }

    #[test]
    fn mean_aggregation_over_several_onsets() {
        let params = AgentParams {
            gain_other: 1.0,
            ..AgentParams::default()
        };
        // Heard +30 and -10: mean +10.
        let u = feedback_update(&accumulated(20.0, 2, 500.0), &params);
        assert_eq!(u.phase_shift_ms, -10.0);
    }

    #[test]
    fn shift_is_clamped_to_half_period() {
        let params = AgentParams {
            gain_other: 4.0,
            ..AgentParams::default()
        };
        let u = feedback_update(&accumulated(200.0, 1, 500.0), &params);
        assert_eq!(u.phase_shift_ms, -250.0);
    }

    #[test]
    fn reaction_schedule() {
        let p = AgentParams {
            reaction_latency_ms: 23.8,
            ..AgentParams::default()
        };
        assert_eq!(action_reaction_update(1000.0, &p), 1023.8);
        let echo = AgentParams {
            reaction_latency_ms: 0.0,
            ..AgentParams::default()
        };
        assert_eq!(action_reaction_update(1000.0, &echo), 1000.0);
    }

    /// Iterates the beat-level law against a noiseless pacemaker with the
    /// follower lagging, using only the control function.
    fn iterate_lagging_follower(a0: f64, gain: f64, steps: usize) -> Vec<f64> {
        let params = AgentParams {
            gain_other: gain,
            ..AgentParams::default()
        };
        let mut a = a0;
        let mut out = vec![a];
        for _ in 0..steps {
            let u = feedback_update(&accumulated(a, 1, 500.0), &params);
            // Next follower beat moves by the shift; pacemaker does not move.
            a += u.phase_shift_ms;
            out.push(a);
        }
        out
    }

    #[test]
    fn halving_sequence_for_gain_one_half() {
        let seq = iterate_lagging_follower(100.0, 0.5, 4);
        assert_eq!(seq, vec![100.0, 50.0, 25.0, 12.5, 6.25]);
    }

    proptest! {
        #[test]
        fn zero_gain_never_shifts(sum in -1e4f64..1e4, count in 0usize..10, period in 10f64..10000.0) {
            let params = AgentParams { gain_other: 0.0, ..AgentParams::default() };
            let mut s = accumulated(sum, count, period);
            if count == 0 { s.asynchrony_sum_ms = 0.0; }
            prop_assert_eq!(feedback_update(&s, &params).phase_shift_ms, 0.0);
        }

        #[test]
        fn self_gain_extremes(cur in 10f64..10000.0, pref in 10f64..10000.0) {
            let mut s = accumulated(0.0, 0, cur);
            s.current_period_ms = cur;
            let snap = AgentParams { gain_self: 1.0, preferred_period_ms: pref, ..AgentParams::default() };
            prop_assert_eq!(feedback_update(&s, &snap).new_period_ms, pref);
            let stubborn = AgentParams { gain_self: 0.0, preferred_period_ms: pref, ..AgentParams::default() };
            prop_assert_eq!(feedback_update(&s, &stubborn).new_period_ms, cur);
        }

        #[test]
        fn shift_within_half_period(a in -5000f64..5000.0, g in 0f64..4.0, cur in 10f64..10000.0) {
            let params = AgentParams { gain_other: g, ..AgentParams::default() };
            let mut s = accumulated(a, 1, cur);
            s.current_period_ms = cur;
            let u = feedback_update(&s, &params);
            prop_assert!(u.phase_shift_ms.abs() <= cur / 2.0);
        }

        #[test]
        fn contraction_factor_is_one_minus_gain(a0 in 1f64..200.0, g in 0.01f64..1.0) {
            let seq = iterate_lagging_follower(a0, g, 5);
            for w in seq.windows(2) {
                prop_assert!((w[1].abs() - (1.0 - g).abs() * w[0].abs()).abs() < 1e-9);
            }
        }
    }
}
