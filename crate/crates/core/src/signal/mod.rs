//! EEG recordings: in-memory representation, file formats, montage, windowing
//! and a deterministic synthetic generator used as a test-data oracle.

mod csv_io;
mod edf;
mod montage;
mod synth;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{read_csv, write_csv};
pub use edf::{read_edf, write_edf};
pub use montage::{apply_montage, MontageSpec};
pub use synth::{
    alternating_schedule, synthesize_recording, IctalRhythm, SynthesisConfig, TEN_TWENTY,
};

/// Default analysis window length.
pub const DEFAULT_WINDOW_S: f64 = 5.0;

/// Brain state attached to a labeled interval or a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum State {
    Ictal,
    Interictal,
}

impl State {
    pub fn is_ictal(self) -> bool {
        self == State::Ictal
    }

    pub fn flipped(self) -> State {
        match self {
            State::Ictal => State::Interictal,
            State::Interictal => State::Ictal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledInterval {
    pub start_s: f64,
    pub end_s: f64,
    pub state: State,
}

impl LabeledInterval {
    pub fn new(start_s: f64, end_s: f64, state: State) -> Result<Self> {
        if !(start_s.is_finite() && end_s.is_finite() && start_s < end_s) {
            return Err(Error::InvalidRecording(format!(
                "interval [{start_s}, {end_s}) must satisfy start < end"
            )));
        }
        Ok(Self {
            start_s,
            end_s,
            state,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTrace {
    pub name: String,
    pub samples: Vec<f64>,
}

impl ChannelTrace {
    pub fn new(name: impl Into<String>, samples: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidRecording(format!(
                "channel '{name}' has a non-finite sample at index {i}"
            )));
        }
        Ok(Self { name, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Multichannel EEG with optional state labels.
///
/// All channels share one sample rate and one length; labeled intervals lie
/// inside `[0, duration_s]` and are sorted and non-overlapping.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalRecording {
    sample_rate_hz: f64,
    channels: Vec<ChannelTrace>,
    labels: Vec<LabeledInterval>,
}

impl SignalRecording {
    pub fn new(
        sample_rate_hz: f64,
        channels: Vec<ChannelTrace>,
        mut labels: Vec<LabeledInterval>,
    ) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidRecording(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if let Some(first) = channels.first() {
            if let Some(bad) = channels.iter().find(|c| c.len() != first.len()) {
                return Err(Error::InconsistentChannelLengths(format!(
                    "channel '{}' has {} samples, channel '{}' has {}",
                    first.name,
                    first.len(),
                    bad.name,
                    bad.len()
                )));
            }
        }
        for c in &channels {
            if c.samples.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidRecording(format!(
                    "channel '{}' has non-finite samples",
                    c.name
                )));
            }
        }
        let n = channels.first().map_or(0, ChannelTrace::len);
        let duration = n as f64 / sample_rate_hz;
        // Allow half a sample of slack on the far edge for float round-off.
        let slack = 0.5 / sample_rate_hz;
        labels.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        for l in &labels {
            if !(l.start_s < l.end_s) {
                return Err(Error::InvalidRecording(format!(
                    "interval [{}, {}) is empty",
                    l.start_s, l.end_s
                )));
            }
            if l.start_s < -slack || l.end_s > duration + slack {
                return Err(Error::InvalidRecording(format!(
                    "interval [{}, {}) lies outside the recording [0, {duration}]",
                    l.start_s, l.end_s
                )));
            }
        }
        for pair in labels.windows(2) {
            if pair[1].start_s < pair[0].end_s {
                return Err(Error::InvalidRecording(format!(
                    "intervals [{}, {}) and [{}, {}) overlap",
                    pair[0].start_s, pair[0].end_s, pair[1].start_s, pair[1].end_s
                )));
            }
        }
        Ok(Self {
            sample_rate_hz,
            channels,
            labels,
        })
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn channels(&self) -> &[ChannelTrace] {
        &self.channels
    }

    pub fn channel(&self, index: usize) -> Option<&ChannelTrace> {
        self.channels.get(index)
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.name == name)
    }

    pub fn sample_count(&self) -> usize {
        self.channels.first().map_or(0, ChannelTrace::len)
    }

    pub fn duration_s(&self) -> f64 {
        self.sample_count() as f64 / self.sample_rate_hz
    }

    pub fn labels(&self) -> &[LabeledInterval] {
        &self.labels
    }

    pub fn with_labels(self, labels: Vec<LabeledInterval>) -> Result<Self> {
        Self::new(self.sample_rate_hz, self.channels, labels)
    }

    /// Multiplies every sample by `gain`.
    pub fn scaled(&self, gain: f64) -> Result<Self> {
        let channels = self
            .channels
            .iter()
            .map(|c| ChannelTrace {
                name: c.name.clone(),
                samples: c.samples.iter().map(|v| v * gain).collect(),
            })
            .collect();
        Self::new(self.sample_rate_hz, channels, self.labels.clone())
    }

    /// Total labeled time per state, in seconds: `(ictal, interictal)`.
    pub fn labeled_time_s(&self) -> (f64, f64) {
        self.labels
            .iter()
            .fold((0.0, 0.0), |(i, n), l| match l.state {
                State::Ictal => (i + l.duration_s(), n),
                State::Interictal => (i, n + l.duration_s()),
            })
    }

    /// Patient inclusion filter: at least `min_s` seconds of contiguous
    /// seizure activity and `min_s` of contiguous non-seizure activity.
    pub fn meets_inclusion(&self, min_s: f64) -> bool {
        let longest = |state: State| {
            self.labels
                .iter()
                .filter(|l| l.state == state)
                .map(LabeledInterval::duration_s)
                .fold(0.0, f64::max)
        };
        longest(State::Ictal) >= min_s && longest(State::Interictal) >= min_s
    }

    /// Sample index range covered by a window.
    pub fn window_range(&self, w: &Window) -> std::ops::Range<usize> {
        let start = (w.start_s * self.sample_rate_hz).round() as usize;
        let len = (w.length_s * self.sample_rate_hz).round() as usize;
        let end = (start + len).min(self.sample_count());
        start.min(end)..end
    }

    pub fn window_samples(&self, channel: usize, w: &Window) -> &[f64] {
        &self.channels[channel].samples[self.window_range(w)]
    }
}

/// One analysis window. Windows are channel-agnostic time spans; features
/// are read from each channel over the same span.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start_s: f64,
    pub length_s: f64,
    pub state: State,
}

impl Window {
    pub fn end_s(&self) -> f64 {
        self.start_s + self.length_s
    }
}

/// Tiles every labeled interval with contiguous, non-overlapping windows of
/// `length_s`, dropping partial tails. Windows never straddle two intervals.
pub fn extract_windows(rec: &SignalRecording, length_s: f64) -> Result<Vec<Window>> {
    if !(length_s.is_finite() && length_s > 0.0) {
        return Err(Error::Config(format!(
            "window length must be positive, got {length_s}"
        )));
    }
    let mut out = Vec::new();
    for interval in rec.labels() {
        let count = (interval.duration_s() / length_s + 1e-9).floor() as usize;
        out.extend((0..count).map(|k| Window {
            start_s: interval.start_s + k as f64 * length_s,
            length_s,
            state: interval.state,
        }));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Edf,
}

impl Format {
    pub fn from_path(path: &Path) -> Option<Format> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(Format::Csv),
            "edf" => Some(Format::Edf),
            _ => None,
        }
    }
}

/// Path of the label sidecar for a recording: `<dir>/<stem>.labels.json`.
pub fn labels_path(recording: &Path) -> PathBuf {
    let stem = recording
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    recording.with_file_name(format!("{stem}.labels.json"))
}

pub fn read_labels(path: &Path) -> Result<Vec<LabeledInterval>> {
    let text = std::fs::read_to_string(path)?;
    let labels: Vec<LabeledInterval> = serde_json::from_str(&text)
        .map_err(|e| Error::parse(path, format!("bad label sidecar: {e}")))?;
    for l in &labels {
        LabeledInterval::new(l.start_s, l.end_s, l.state)
            .map_err(|e| Error::parse(path, e.to_string()))?;
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &[LabeledInterval]) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(labels)?)?;
    Ok(())
}

/// Loads a recording and, when `<stem>.labels.json` sits next to it,
/// attaches its labels.
pub fn load_recording(path: &Path, format: Format) -> Result<SignalRecording> {
    let rec = match format {
        Format::Csv => read_csv(path)?,
        Format::Edf => read_edf(path)?,
    };
    let sidecar = labels_path(path);
    if sidecar.exists() {
        let labels = read_labels(&sidecar)?;
        rec.with_labels(labels)
    } else {
        Ok(rec)
    }
}
