use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::{ChannelTrace, LabeledInterval, SignalRecording, State};
use crate::error::{Error, Result};

/// A rhythmic ictal component planted on one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IctalRhythm {
    pub channel: usize,
    /// Sinusoid amplitude as a multiple of the channel's noise RMS.
    pub amplitude_ratio: f64,
    pub frequency_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    pub sample_rate_hz: f64,
    pub channel_count: usize,
    /// Optional channel labels; defaults to `ch0`, `ch1`, ...
    pub channel_names: Option<Vec<String>>,
    pub duration_s: f64,
    /// RMS of the background 1/f noise, in volts.
    pub noise_rms: f64,
    pub rhythms: Vec<IctalRhythm>,
    pub schedule: Vec<LabeledInterval>,
}

/// `blocks` back-to-back intervals of `block_s`, starting interictal and
/// alternating.
pub fn alternating_schedule(block_s: f64, blocks: usize) -> Vec<LabeledInterval> {
    (0..blocks)
        .map(|k| LabeledInterval {
            start_s: k as f64 * block_s,
            end_s: (k + 1) as f64 * block_s,
            state: if k % 2 == 1 {
                State::Ictal
            } else {
                State::Interictal
            },
        })
        .collect()
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        let block = 120.0;
        let schedule = alternating_schedule(block, 5);
        Self {
            sample_rate_hz: 1000.0,
            channel_count: 4,
            channel_names: None,
            duration_s: 5.0 * block,
            noise_rms: 20e-6,
            rhythms: vec![IctalRhythm {
                channel: 0,
                amplitude_ratio: 5.0,
                frequency_hz: 3.0,
            }],
            schedule,
        }
    }
}

/// Referential 10-20 electrode labels (19 scalp sites plus ear references).
pub const TEN_TWENTY: [&str; 21] = [
    "FP1", "FP2", "F7", "F3", "FZ", "F4", "F8", "A1", "T3", "C3", "CZ", "C4", "T4", "A2", "T5",
    "P3", "PZ", "P4", "T6", "O1", "O2",
];

impl SynthesisConfig {
    /// Same schedule as the default, over the referential 10-20 electrode set.
    pub fn ten_twenty() -> Self {
        Self {
            channel_count: TEN_TWENTY.len(),
            channel_names: Some(TEN_TWENTY.iter().map(|s| (*s).to_owned()).collect()),
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::Config(format!(
                "sample rate must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        if self.channel_count == 0 {
            return Err(Error::Config("channel count must be positive".into()));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::Config(format!(
                "duration must be positive, got {}",
                self.duration_s
            )));
        }
        if !(self.noise_rms.is_finite() && self.noise_rms >= 0.0) {
            return Err(Error::Config(format!(
                "noise RMS must be non-negative, got {}",
                self.noise_rms
            )));
        }
        if let Some(names) = &self.channel_names {
            if names.len() != self.channel_count {
                return Err(Error::Config(format!(
                    "{} channel names given for {} channels",
                    names.len(),
                    self.channel_count
                )));
            }
        }
        for r in &self.rhythms {
            if r.channel >= self.channel_count {
                return Err(Error::Config(format!(
                    "rhythm planted on channel {} of {}",
                    r.channel, self.channel_count
                )));
            }
            if !(r.amplitude_ratio.is_finite()
                && r.amplitude_ratio >= 0.0
                && r.frequency_hz.is_finite())
            {
                return Err(Error::Config(
                    "rhythm amplitude and frequency must be finite".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Pink-ish noise from white Gaussian input (Kellet's three-pole economy filter).
struct PinkFilter {
    b: [f64; 3],
}

impl PinkFilter {
    fn step(&mut self, white: f64) -> f64 {
        self.b[0] = 0.99765 * self.b[0] + white * 0.099_046_0;
        self.b[1] = 0.963 * self.b[1] + white * 0.296_516_4;
        self.b[2] = 0.57 * self.b[2] + white * 1.052_691_3;
        self.b[0] + self.b[1] + self.b[2] + white * 0.1848
    }
}

/// Generates a labeled recording: 1/f background noise on every channel, plus
/// the configured sinusoidal rhythms during ictal intervals only.
/// Output is a pure function of `(config, seed)`.
pub fn synthesize_recording(config: &SynthesisConfig, seed: u64) -> Result<SignalRecording> {
    config.validate()?;
    let fs = config.sample_rate_hz;
    let n = (config.duration_s * fs).round() as usize;
    let phase = Uniform::new(0.0, std::f64::consts::TAU).expect("valid range");

    let channels = (0..config.channel_count)
        .map(|ch| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(ch as u64);
            let mut pink = PinkFilter { b: [0.0; 3] };
            // Burn in the filter so the first samples are not attenuated.
            for _ in 0..(2.0 * fs) as usize {
                pink.step(StandardNormal.sample(&mut rng));
            }
            let mut samples: Vec<f64> = (0..n)
                .map(|_| pink.step(StandardNormal.sample(&mut rng)))
                .collect();
            let rms = (samples.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64).sqrt();
            let gain = if rms > 0.0 {
                config.noise_rms / rms
            } else {
                0.0
            };
            samples.iter_mut().for_each(|v| *v *= gain);

            for rhythm in config.rhythms.iter().filter(|r| r.channel == ch) {
                let amplitude = rhythm.amplitude_ratio * config.noise_rms;
                let omega = std::f64::consts::TAU * rhythm.frequency_hz / fs;
                for interval in config.schedule.iter().filter(|l| l.state == State::Ictal) {
                    let start = (interval.start_s * fs).round() as usize;
                    let end = ((interval.end_s * fs).round() as usize).min(n);
                    let phi = phase.sample(&mut rng);
                    for (k, v) in samples[start.min(end)..end].iter_mut().enumerate() {
                        *v += amplitude * (omega * k as f64 + phi).sin();
                    }
                }
            }
            let name = config
                .channel_names
                .as_ref()
                .map_or_else(|| format!("ch{ch}"), |names| names[ch].clone());
            ChannelTrace::new(name, samples)
        })
        .collect::<Result<Vec<_>>>()?;

    SignalRecording::new(fs, channels, config.schedule.clone())
}
