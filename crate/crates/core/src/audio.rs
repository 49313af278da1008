//! Offline rendering of onset logs to mono PCM.
//!
//! Timbres are schematic stand-ins: a sine burst for human, an upward chirp
//! (f → 1.5 f) for bird, and resonant-filtered noise amplitude-modulated at
//! 50 Hz for insect voices.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{AgentParams, OnsetEvent, VoiceKind};

pub const DEFAULT_SAMPLE_RATE_HZ: u32 = 44_100;
pub const RAMP_MS: f64 = 5.0;
pub const NORMALIZED_PEAK: f32 = 0.9;
const INSECT_AM_HZ: f64 = 50.0;
const INSECT_Q: f64 = 4.0;
const NOISE_SALT: u64 = 0x6e6f_6973_655f_6275;

#[derive(Debug, thiserror::Error)]
pub enum AudioError {
    #[error("onset refers to unknown agent id {0}")]
    UnknownAgent(usize),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("not a 16-bit mono PCM WAV file: {0}")]
    Format(&'static str),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Mono floating-point samples at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct PcmBuffer {
    pub sample_rate_hz: u32,
    pub samples: Vec<f32>,
}

impl PcmBuffer {
    pub fn silent(sample_rate_hz: u32, len: usize) -> Self {
        Self {
            sample_rate_hz,
            samples: vec![0.0; len],
        }
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn duration_ms(&self) -> f64 {
        self.samples.len() as f64 * 1000.0 / self.sample_rate_hz as f64
    }
}

/// Rendering settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    pub sample_rate_hz: u32,
    /// Minimum output length; the buffer is extended to fit every burst.
    pub min_duration_ms: f64,
    /// Scale down to [`NORMALIZED_PEAK`] when the mix would clip.
    pub normalize: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            min_duration_ms: 0.0,
            normalize: true,
        }
    }
}

fn samples_for(ms: f64, rate: u32) -> usize {
    (ms * rate as f64 / 1000.0 - 1e-9).ceil().max(0.0) as usize
}

/// Linear attack over the burst start, linear release after it ends.
fn envelope(t_ms: f64, duration_ms: f64) -> f64 {
    let attack = (t_ms / RAMP_MS).min(1.0);
    if t_ms < duration_ms {
        attack
    } else {
        let held = (duration_ms / RAMP_MS).min(1.0);
        held * (1.0 - (t_ms - duration_ms) / RAMP_MS).max(0.0)
    }
}

/// Mixes every onset into one buffer.
pub fn render(
    events: &[OnsetEvent],
    agents: &[AgentParams],
    opts: RenderOptions,
) -> Result<PcmBuffer, AudioError> {
    let rate = opts.sample_rate_hz;
    let end_ms = events
        .iter()
        .map(|e| e.time_ms + e.duration_ms + RAMP_MS)
        .fold(opts.min_duration_ms, f64::max);
    let mut mix = vec![0.0f64; samples_for(end_ms, rate)];
    let mut per_agent_index = vec![0u64; agents.len()];

    for e in events {
        let agent = agents
            .get(e.agent_id)
            .ok_or(AudioError::UnknownAgent(e.agent_id))?;
        let onset_index = per_agent_index[e.agent_id];
        per_agent_index[e.agent_id] += 1;
        if e.amplitude == 0.0 {
            continue;
        }
        let start = (e.time_ms * rate as f64 / 1000.0).round() as usize;
        let len = samples_for(e.duration_ms + RAMP_MS, rate);
        let burst = synthesize(agent, e.duration_ms, len, rate, onset_index);
        for (i, s) in burst.into_iter().enumerate() {
            if let Some(slot) = mix.get_mut(start + i) {
                *slot += e.amplitude * s;
            }
        }
    }

    let mut samples: Vec<f32> = mix.iter().map(|&s| s as f32).collect();
    if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
        return Err(AudioError::NonFinite(i));
    }
    let peak = samples.iter().fold(0.0f32, |m, s| m.max(s.abs()));
    if opts.normalize && peak > 1.0 {
        let gain = NORMALIZED_PEAK / peak;
        for s in &mut samples {
            *s *= gain;
        }
    }
    Ok(PcmBuffer {
        sample_rate_hz: rate,
        samples,
    })
}

fn synthesize(
    agent: &AgentParams,
    duration_ms: f64,
    len: usize,
    rate: u32,
    onset_index: u64,
) -> Vec<f64> {
    let dt = 1.0 / rate as f64;
    let f0 = agent.pitch_hz;
    let burst_s = (duration_ms / 1000.0).max(dt);
    match agent.voice_kind {
        VoiceKind::Human => (0..len)
            .map(|i| {
                let t = i as f64 * dt;
                envelope(t * 1000.0, duration_ms) * (TAU * f0 * t).sin()
            })
            .collect(),
        VoiceKind::Bird => {
            // Instantaneous frequency sweeps f0 -> 1.5 f0 over the burst.
            let sweep = 0.5 * f0 / burst_s;
            (0..len)
                .map(|i| {
                    let t = i as f64 * dt;
                    let tc = t.min(burst_s);
                    let phase = f0 * tc + 0.5 * sweep * tc * tc + 1.5 * f0 * (t - tc);
                    envelope(t * 1000.0, duration_ms) * (TAU * phase).sin()
                })
                .collect()
        }
        VoiceKind::Insect => {
            let mut rng = ChaCha8Rng::seed_from_u64(NOISE_SALT ^ agent.id as u64);
            rng.set_stream(onset_index);
            // Two-pole resonator centred on the pitch (RBJ band-pass, 0 dB peak).
            let w0 = TAU * f0.min(0.45 * rate as f64) / rate as f64;
            let alpha = w0.sin() / (2.0 * INSECT_Q);
            let a0 = 1.0 + alpha;
            let (b0, b2) = (alpha / a0, -alpha / a0);
            let (a1, a2) = (-2.0 * w0.cos() / a0, (1.0 - alpha) / a0);
            let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
            (0..len)
                .map(|i| {
                    let x: f64 = rng.random_range(-1.0..1.0);
                    let y = b0 * x + b2 * x2 - a1 * y1 - a2 * y2;
                    x2 = x1;
                    x1 = x;
                    y2 = y1;
                    y1 = y;
                    let t = i as f64 * dt;
                    let am = 0.5 * (1.0 + (TAU * INSECT_AM_HZ * t).sin());
                    // White noise in [-1,1) has rms 0.577; the band keeps a fraction of it.
                    envelope(t * 1000.0, duration_ms) * am * (2.0 * y).clamp(-1.0, 1.0)
                })
                .collect()
        }
    }
}

fn to_i16(s: f32) -> i16 {
    (s.clamp(-1.0, 1.0) * i16::MAX as f32).round() as i16
}

/// RIFF/WAVE, 16-bit signed PCM, mono, little-endian.
pub fn encode_wav(buffer: &PcmBuffer) -> Result<Vec<u8>, AudioError> {
    if let Some(i) = buffer.samples.iter().position(|s| !s.is_finite()) {
        return Err(AudioError::NonFinite(i));
    }
    let rate = buffer.sample_rate_hz;
    let data_len = (buffer.samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &buffer.samples {
        out.extend_from_slice(&to_i16(s).to_le_bytes());
    }
    Ok(out)
}

pub fn write_wav(buffer: &PcmBuffer, path: impl AsRef<Path>) -> Result<(), AudioError> {
    let bytes = encode_wav(buffer)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

/// Reads back what [`write_wav`] produces: `(sample_rate_hz, samples)`.
pub fn read_wav(path: impl AsRef<Path>) -> Result<(u32, Vec<i16>), AudioError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    decode_wav(&bytes)
}

pub fn decode_wav(bytes: &[u8]) -> Result<(u32, Vec<i16>), AudioError> {
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let u32_at =
        |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
    if bytes.len() < 44 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(AudioError::Format("missing RIFF/WAVE header"));
    }
    if &bytes[12..16] != b"fmt " || u16_at(20) != 1 || u16_at(22) != 1 || u16_at(34) != 16 {
        return Err(AudioError::Format("expected fmt chunk for 16-bit mono PCM"));
    }
    if &bytes[36..40] != b"data" {
        return Err(AudioError::Format("missing data chunk"));
    }
    let rate = u32_at(24);
    let len = u32_at(40) as usize;
    let data = bytes
        .get(44..44 + len)
        .ok_or(AudioError::Format("truncated data chunk"))?;
    let samples = data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]))
        .collect();
    Ok((rate, samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn onset(t: f64, agent: usize, amp: f64) -> OnsetEvent {
        OnsetEvent {
            time_ms: t,
            agent_id: agent,
            amplitude: amp,
            duration_ms: 100.0,
        }
    }

    fn voices() -> Vec<AgentParams> {
        [VoiceKind::Human, VoiceKind::Bird, VoiceKind::Insect]
            .into_iter()
            .enumerate()
            .map(|(id, voice_kind)| AgentParams {
                id,
                voice_kind,
                pitch_hz: if voice_kind == VoiceKind::Human {
                    200.0
                } else {
                    3000.0
                },
                ..AgentParams::default()
            })
            .collect()
    }

    #[test]
    fn empty_log_is_silence_of_requested_length() {
        let opts = RenderOptions {
            min_duration_ms: 1000.0,
            ..RenderOptions::default()
        };
        let b = render(&[], &voices(), opts).unwrap();
        assert_eq!(b.samples.len(), 44_100);
        assert!(b.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn zero_amplitude_is_silent() {
        let b = render(&[onset(10.0, 0, 0.0)], &voices(), RenderOptions::default()).unwrap();
        assert!(b.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn length_covers_last_burst_and_release() {
        let b = render(&[onset(200.0, 0, 0.5)], &voices(), RenderOptions::default()).unwrap();
        assert_eq!(
            b.samples.len(),
            samples_for(200.0 + 100.0 + RAMP_MS, 44_100)
        );
    }

    #[test]
    fn simultaneous_onsets_sum() {
        let opts = RenderOptions {
            normalize: false,
            ..RenderOptions::default()
        };
        // Insect noise is seeded per onset, so only the tonal voices double exactly.
        for agent in 0..2 {
            let one = render(&[onset(50.0, agent, 0.4)], &voices(), opts).unwrap();
            let two = render(
                &[onset(50.0, agent, 0.4), onset(50.0, agent, 0.4)],
                &voices(),
                opts,
            )
            .unwrap();
            for (a, b) in one.samples.iter().zip(&two.samples) {
                assert!((2.0 * a - b).abs() < 1e-6);
            }
            assert!(one.peak() > 0.1, "voice {agent} too quiet: {}", one.peak());
        }
    }

    #[test]
    fn insect_burst_is_audible() {
        let b = render(&[onset(0.0, 2, 1.0)], &voices(), RenderOptions::default()).unwrap();
        assert!(b.peak() > 0.1, "{}", b.peak());
    }

    #[test]
    fn clipping_mix_is_normalized() {
        let events: Vec<_> = (0..6).map(|_| onset(0.0, 0, 1.0)).collect();
        let b = render(&events, &voices(), RenderOptions::default()).unwrap();
        assert!(b.peak() <= NORMALIZED_PEAK + 1e-6);
        assert!(b.peak() > 0.85);
    }

    #[test]
    fn insect_noise_is_deterministic() {
        let e = [onset(0.0, 2, 1.0), onset(300.0, 2, 1.0)];
        let a = render(&e, &voices(), RenderOptions::default()).unwrap();
        let b = render(&e, &voices(), RenderOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_agent_is_an_error() {
        assert!(matches!(
            render(&[onset(0.0, 7, 1.0)], &voices(), RenderOptions::default()),
            Err(AudioError::UnknownAgent(7))
        ));
    }

    #[test]
    fn envelope_ramps() {
        assert_eq!(envelope(0.0, 100.0), 0.0);
        assert_eq!(envelope(2.5, 100.0), 0.5);
        assert_eq!(envelope(50.0, 100.0), 1.0);
        assert_eq!(envelope(102.5, 100.0), 0.5);
        assert_eq!(envelope(105.0, 100.0), 0.0);
    }

    #[test]
    fn wav_layout_for_one_second_of_silence() {
        let bytes = encode_wav(&PcmBuffer::silent(44_100, 44_100)).unwrap();
        assert_eq!(bytes.len(), 88_244);
        assert_eq!(&bytes[0..4], b"RIFF");
        let (rate, samples) = decode_wav(&bytes).unwrap();
        assert_eq!(rate, 44_100);
        assert_eq!(samples.len(), 44_100);
        assert!(samples.iter().all(|&s| s == 0));
    }

    #[test]
    fn wav_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.wav");
        let b = render(
            &[onset(0.0, 0, 0.7), onset(40.0, 1, 0.7)],
            &voices(),
            RenderOptions::default(),
        )
        .unwrap();
        write_wav(&b, &path).unwrap();
        let (rate, samples) = read_wav(&path).unwrap();
        assert_eq!(rate, 44_100);
        let expected: Vec<i16> = b.samples.iter().map(|&s| to_i16(s)).collect();
        assert_eq!(samples, expected);
    }

    #[test]
    fn non_finite_rejected() {
        let b = PcmBuffer {
            sample_rate_hz: 8000,
            samples: vec![0.0, f32::NAN],
        };
        assert!(matches!(encode_wav(&b), Err(AudioError::NonFinite(1))));
    }
}
