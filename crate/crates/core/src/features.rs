//! Analog feature circuits emulated as discrete-time leaky operators, plus
//! ideal windowed (batch) equivalents.
//!
//! Every streaming feature is built from one primitive, the first-order
//! leaky integrator `y[n] = a*y[n-1] + (1-a)*x[n]` with
//! `a = exp(-1 / (tau * fs))`, which models an RC decaying integrator.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::ChannelTrace;

/// Variance floor (squared signal units) below which Hjorth mobility is 0.
pub const HJORTH_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Mean,
    MeanAbs,
    /// Energy of the mean: the squared leaky mean.
    MeanEnergy,
    /// Mean of the energy: the leaky mean of the squared signal.
    EnergyMean,
    LineLength,
    HjorthMobility,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 6] = [
        FeatureKind::Mean,
        FeatureKind::MeanAbs,
        FeatureKind::MeanEnergy,
        FeatureKind::EnergyMean,
        FeatureKind::LineLength,
        FeatureKind::HjorthMobility,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Mean => "mean",
            FeatureKind::MeanAbs => "mean_abs",
            FeatureKind::MeanEnergy => "mean_energy",
            FeatureKind::EnergyMean => "energy_mean",
            FeatureKind::LineLength => "line_length",
            FeatureKind::HjorthMobility => "hjorth_mobility",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown feature '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub tau_s: f64,
    pub sample_rate_hz: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            tau_s: 5.0,
            sample_rate_hz: 1000.0,
        }
    }
}

impl FeatureConfig {
    pub fn new(tau_s: f64, sample_rate_hz: f64) -> Result<Self> {
        let cfg = Self {
            tau_s,
            sample_rate_hz,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_s.is_finite() && self.tau_s > 0.0) {
            return Err(Error::Config(format!(
                "tau must be positive, got {}",
                self.tau_s
            )));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::Config(format!(
                "sample rate must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        Ok(())
    }

    /// Pole of the exactly discretized RC integrator.
    pub fn alpha(&self) -> f64 {
        (-1.0 / (self.tau_s * self.sample_rate_hz)).exp()
    }
}

/// Streaming first-order leaky integrator, starting from rest.
#[derive(Debug, Clone, Copy)]
pub struct LeakyIntegrator {
    alpha: f64,
    state: f64,
}

impl LeakyIntegrator {
    pub fn new(cfg: &FeatureConfig) -> Self {
        Self {
            alpha: cfg.alpha(),
            state: 0.0,
        }
    }

    #[inline]
    pub fn step(&mut self, x: f64) -> f64 {
        self.state = self.alpha * self.state + (1.0 - self.alpha) * x;
        self.state
    }

    pub fn value(&self) -> f64 {
        self.state
    }
}

pub fn leaky_average(x: &[f64], cfg: &FeatureConfig) -> Vec<f64> {
    let mut li = LeakyIntegrator::new(cfg);
    x.iter().map(|&v| li.step(v)).collect()
}

/// Time series of one feature on one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTrace {
    pub kind: FeatureKind,
    pub channel_index: usize,
    pub values: Vec<f64>,
    pub sample_rate_hz: f64,
}

impl FeatureTrace {
    /// Writes `time_s,value` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["time_s", "value"])?;
        for (i, v) in self.values.iter().enumerate() {
            w.write_record([(i as f64 / self.sample_rate_hz).to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Streaming evaluator holding the integrator state for one feature.
#[derive(Debug, Clone)]
pub struct StreamingFeature {
    kind: FeatureKind,
    rate: f64,
    mean: LeakyIntegrator,
    power: LeakyIntegrator,
    d_mean: LeakyIntegrator,
    d_power: LeakyIntegrator,
    prev: Option<f64>,
}

impl StreamingFeature {
    pub fn new(kind: FeatureKind, cfg: &FeatureConfig) -> Self {
        let li = LeakyIntegrator::new(cfg);
        Self {
            kind,
            rate: cfg.sample_rate_hz,
            mean: li,
            power: li,
            d_mean: li,
            d_power: li,
            prev: None,
        }
    }

    pub fn step(&mut self, x: f64) -> f64 {
        // x[-1] = x[0], so the first difference is zero.
        let dx = (x - self.prev.unwrap_or(x)) * self.rate;
        self.prev = Some(x);
        match self.kind {
            FeatureKind::Mean => self.mean.step(x),
            FeatureKind::MeanAbs => self.mean.step(x.abs()),
            FeatureKind::EnergyMean => self.power.step(x * x),
            FeatureKind::MeanEnergy => {
                let m = self.mean.step(x);
                m * m
            }
            FeatureKind::LineLength => self.mean.step(dx.abs()),
            FeatureKind::HjorthMobility => {
                let m = self.mean.step(x);
                let p = self.power.step(x * x);
                let dm = self.d_mean.step(dx);
                let dp = self.d_power.step(dx * dx);
                mobility(p - m * m, dp - dm * dm)
            }
        }
    }
}

fn mobility(var_x: f64, var_dx: f64) -> f64 {
    if var_x < HJORTH_EPSILON {
        0.0
    } else {
        (var_dx.max(0.0) / var_x).sqrt()
    }
}

pub fn evaluate_streaming(
    trace: &ChannelTrace,
    channel_index: usize,
    kind: FeatureKind,
    cfg: &FeatureConfig,
) -> FeatureTrace {
    FeatureTrace {
        kind,
        channel_index,
        values: stream_values(&trace.samples, kind, cfg),
        sample_rate_hz: cfg.sample_rate_hz,
    }
}

pub fn stream_values(x: &[f64], kind: FeatureKind, cfg: &FeatureConfig) -> Vec<f64> {
    let mut f = StreamingFeature::new(kind, cfg);
    x.iter().map(|&v| f.step(v)).collect()
}

/// Batch value of a feature over one window. Difference-based features of a
/// single-sample window are 0; an empty window is an error.
pub fn evaluate_windowed(window: &[f64], kind: FeatureKind, sample_rate_hz: f64) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::Config("empty feature window".into()));
    }
    let n = window.len() as f64;
    let mean = |it: &mut dyn Iterator<Item = f64>| it.sum::<f64>() / n;
    let diffs = || window.windows(2).map(|p| (p[1] - p[0]) * sample_rate_hz);
    Ok(match kind {
        FeatureKind::Mean => mean(&mut window.iter().copied()),
        FeatureKind::MeanAbs => mean(&mut window.iter().map(|v| v.abs())),
        FeatureKind::EnergyMean => mean(&mut window.iter().map(|v| v * v)),
        FeatureKind::MeanEnergy => mean(&mut window.iter().copied()).powi(2),
        FeatureKind::LineLength => {
            if window.len() < 2 {
                0.0
            } else {
                diffs().map(f64::abs).sum::<f64>() / (n - 1.0)
            }
        }
        FeatureKind::HjorthMobility => {
            if window.len() < 2 {
                0.0
            } else {
                let d: Vec<f64> = diffs().collect();
                mobility(variance(window), variance(&d))
            }
        }
    })
}

fn variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
}
