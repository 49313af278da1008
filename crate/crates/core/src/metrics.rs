//! Synchronization measurements over onset logs.

use std::f64::consts::TAU;

use crate::model::OnsetEvent;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("no onsets left to pair after dropping {warmup} warmup onset(s)")]
    EmptyAfterWarmup { warmup: usize },
    #[error("reference onset list is empty")]
    EmptyReference,
    #[error("need at least {need} values (got {got})")]
    TooFew { need: usize, got: usize },
    #[error("order parameter of an empty population")]
    NoPhases,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncPair {
    pub master_onset_ms: f64,
    pub agent_onset_ms: f64,
    /// `master - agent`: negative when the agent fires after the reference.
    pub error_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SyncSeries {
    pub pairs: Vec<SyncPair>,
}

impl SyncSeries {
    pub fn errors(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.error_ms).collect()
    }
}

/// Pairs each agent onset (after the first `warmup_cycles`) with the nearest
/// reference onset. Equidistant onsets pair with the earlier reference.
///
/// Both lists must be sorted ascending.
pub fn sync_error_series(
    reference: &[f64],
    agent: &[f64],
    warmup_cycles: usize,
) -> Result<SyncSeries, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    let measured = agent.get(warmup_cycles..).unwrap_or_default();
    if measured.is_empty() {
        return Err(MetricsError::EmptyAfterWarmup {
            warmup: warmup_cycles,
        });
    }
    let pairs = measured
        .iter()
        .map(|&x| {
            let j = reference.partition_point(|&r| r < x);
            let master = match (j.checked_sub(1).map(|i| reference[i]), reference.get(j)) {
                (Some(before), Some(&after)) => {
                    if x - before <= after - x {
                        before
                    } else {
                        after
                    }
                }
                (Some(before), None) => before,
                (None, Some(&after)) => after,
                (None, None) => unreachable!("reference is non-empty"),
            };
            SyncPair {
                master_onset_ms: master,
                agent_onset_ms: x,
                error_ms: master - x,
            }
        })
        .collect();
    Ok(SyncSeries { pairs })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: f64,
    pub n: usize,
}

pub fn summarize(values: &[f64]) -> Result<Summary, MetricsError> {
    let n = values.len();
    if n < 2 {
        return Err(MetricsError::TooFew { need: 2, got: n });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Ok(Summary {
        mean,
        std: (ss / (n - 1) as f64).sqrt(),
        n,
    })
}

/// Magnitude of the mean unit phase vector, `|mean(exp(2πiφ))|`.
///
/// Phases are taken relative to the first one, which makes equal phases
/// give exactly 1.
pub fn order_parameter(phases: &[f64]) -> Result<f64, MetricsError> {
    let first = *phases.first().ok_or(MetricsError::NoPhases)?;
    let (mut re, mut im) = (0.0, 0.0);
    for &p in phases {
        let angle = TAU * (p - first);
        re += angle.cos();
        im += angle.sin();
    }
    let n = phases.len() as f64;
    Ok((re / n).hypot(im / n).min(1.0))
}

/// Fraction of `[0, window_ms)` during which at least two vocalizations
/// sound at once.
pub fn simultaneity(events: &[OnsetEvent], window_ms: f64) -> f64 {
    if events.is_empty() || window_ms <= 0.0 {
        return 0.0;
    }
    // +1 at each start, -1 at each end; ends sort before starts at equal times.
    let mut edges: Vec<(f64, i32)> = Vec::with_capacity(events.len() * 2);
    for e in events {
        let start = e.time_ms.clamp(0.0, window_ms);
        let end = (e.time_ms + e.duration_ms).clamp(0.0, window_ms);
        if end > start {
            edges.push((start, 1));
            edges.push((end, -1));
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut active = 0;
    let mut overlap = 0.0;
    let mut prev = 0.0;
    for (t, delta) in edges {
        if active >= 2 {
            overlap += t - prev;
        }
        active += delta;
        prev = t;
    }
    overlap / window_ms
}

/// Average ranks (1-based), ties sharing the mean of their positions.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(MetricsError::TooFew {
            need: 2,
            got: x.len().min(y.len()),
        });
    }
    Ok(pearson(&ranks(x), &ranks(y)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y = slope * x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit, MetricsError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(MetricsError::TooFew {
            need: 2,
            got: x.len().min(y.len()),
        });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - (slope * a + intercept)).powi(2))
        .sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn burst(t: f64, agent: usize, d: f64) -> OnsetEvent {
        OnsetEvent {
            time_ms: t,
            agent_id: agent,
            amplitude: 1.0,
            duration_ms: d,
        }
    }

    /// Nearest reference by exhaustive search; ties to the earlier one.
    fn brute_nearest(reference: &[f64], x: f64) -> f64 {
        let mut best = reference[0];
        for &r in reference {
            if (r - x).abs() < (best - x).abs() {
                best = r;
            }
        }
        best
    }

    #[test]
    fn constant_lag_series() {
        let s = sync_error_series(&[0.0, 500.0, 1000.0], &[23.8, 523.8, 1023.8], 0).unwrap();
        for e in s.errors() {
            assert_relative_eq!(e, -23.8, epsilon = 1e-9);
        }
    }

    #[test]
    fn self_comparison_is_zero() {
        let r = [0.0, 480.0, 1010.0];
        assert!(sync_error_series(&r, &r, 0)
            .unwrap()
            .errors()
            .iter()
            .all(|&e| e == 0.0));
    }

    #[test]
    fn pairs_with_nearest_reference() {
        let s = sync_error_series(&[0.0, 500.0], &[260.0], 0).unwrap();
        assert_eq!(s.errors(), vec![240.0]);
        assert_eq!(brute_nearest(&[0.0, 500.0], 260.0), 500.0);
    }

    #[test]
    fn ties_pair_with_earlier_reference() {
        let s = sync_error_series(&[0.0, 500.0], &[250.0], 0).unwrap();
        assert_eq!(s.pairs[0].master_onset_ms, 0.0);
    }

    #[test]
    fn warmup_is_counted_in_agent_onsets() {
        let s = sync_error_series(&[0.0, 500.0, 1000.0], &[10.0, 510.0, 1020.0], 2).unwrap();
        assert_eq!(s.errors(), vec![-20.0]);
        assert!(matches!(
            sync_error_series(&[0.0], &[1.0], 1),
            Err(MetricsError::EmptyAfterWarmup { warmup: 1 })
        ));
        assert!(sync_error_series(&[], &[1.0], 0).is_err());
    }

    #[test]
    fn summary_examples() {
        let s = summarize(&[-23.0, -25.0]).unwrap();
        assert_eq!(s.mean, -24.0);
        assert_relative_eq!(s.std, 2f64.sqrt(), epsilon = 1e-12);
        assert_eq!(summarize(&[3.0; 5]).unwrap().std, 0.0);
        let s = summarize(&[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!((s.mean, s.std, s.n), (0.0, 1.0, 3));
        assert!(summarize(&[1.0]).is_err());
    }

    #[test]
    fn order_parameter_examples() {
        assert_eq!(order_parameter(&[0.3; 7]).unwrap(), 1.0);
        assert!(order_parameter(&[0.0, 0.25, 0.5, 0.75]).unwrap() <= 1e-12);
        assert!(order_parameter(&[0.0, 0.5]).unwrap() <= 1e-12);
        assert!(order_parameter(&[]).is_err());
    }

    #[test]
    fn simultaneity_examples() {
        assert_eq!(simultaneity(&[burst(0.0, 0, 300.0)], 1000.0), 0.0);
        let both = [burst(100.0, 0, 300.0), burst(100.0, 1, 300.0)];
        assert_relative_eq!(simultaneity(&both, 1000.0), 0.3, epsilon = 1e-12);
        let interleaved = [
            burst(0.0, 0, 100.0),
            burst(100.0, 1, 100.0),
            burst(200.0, 0, 100.0),
            burst(300.0, 1, 100.0),
        ];
        assert_eq!(simultaneity(&interleaved, 1000.0), 0.0);
        assert_eq!(simultaneity(&[], 1000.0), 0.0);
    }

    #[test]
    fn spearman_and_fit() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_relative_eq!(spearman(&x, &[10.0, 20.0, 25.0, 100.0]).unwrap(), 1.0);
        assert_relative_eq!(spearman(&x, &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
        let fit = linear_fit(&x, &[-2.0, -4.0, -6.0, -8.0]).unwrap();
        assert_relative_eq!(fit.slope, -2.0);
        assert_relative_eq!(fit.intercept, 0.0);
        assert_relative_eq!(fit.r_squared, 1.0);
    }

    proptest! {
        #[test]
        fn order_parameter_rotation_invariant(
            phases in proptest::collection::vec(0f64..1.0, 1..20),
            shift in 0f64..1.0,
        ) {
            let r0 = order_parameter(&phases).unwrap();
            let rotated: Vec<f64> = phases.iter().map(|p| (p + shift).rem_euclid(1.0)).collect();
            let r1 = order_parameter(&rotated).unwrap();
            prop_assert!((r0 - r1).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&r0));
        }

        #[test]
        fn summary_scales_with_constant(
            values in proptest::collection::vec(-500f64..500.0, 2..50),
            c in -10f64..10.0,
        ) {
            let base = summarize(&values).unwrap();
            let scaled: Vec<f64> = values.iter().map(|v| v * c).collect();
            let s = summarize(&scaled).unwrap();
            prop_assert!((s.mean - c * base.mean).abs() <= 1e-9 * (1.0 + base.mean.abs() * c.abs()));
            prop_assert!((s.std - c.abs() * base.std).abs() <= 1e-9 * (1.0 + base.std * c.abs()));
        }

        #[test]
        fn pairing_matches_brute_force(
            mut reference in proptest::collection::vec(0f64..10_000.0, 1..30),
            mut agent in proptest::collection::vec(0f64..10_000.0, 1..30),
        ) {
            reference.sort_by(f64::total_cmp);
            agent.sort_by(f64::total_cmp);
            let s = sync_error_series(&reference, &agent, 0).unwrap();
            for p in &s.pairs {
                prop_assert_eq!(p.master_onset_ms, brute_nearest(&reference, p.agent_onset_ms));
            }
        }

        #[test]
        fn simultaneity_ignores_agent_labels(
            bursts in proptest::collection::vec((0f64..900.0, 1f64..200.0), 0..12),
            relabel in 0usize..5,
        ) {
            let events: Vec<_> = bursts.iter().enumerate().map(|(i, &(t, d))| burst(t, i % 3, d)).collect();
            let permuted: Vec<_> = events.iter().map(|e| OnsetEvent { agent_id: (e.agent_id + relabel) % 3, ..*e }).collect();
            let a = simultaneity(&events, 1000.0);
            prop_assert_eq!(a, simultaneity(&permuted, 1000.0));
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
