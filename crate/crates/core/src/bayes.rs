//! Exact naive Bayesian fusion of normalized likelihoods:
//!
//! `P(V | E) = P(V) prod p*_x / (P(V) prod p*_x + (1 - P(V)) prod (1 - p*_x))`
//!
//! evaluated as a sum of log-odds so that many evidences cannot underflow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureKind;
use crate::signal::State;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// A (feature, channel) pair: one evidence source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Member {
    pub feature: FeatureKind,
    pub channel: usize,
}

impl Member {
    pub fn new(feature: FeatureKind, channel: usize) -> Self {
        Self { feature, channel }
    }
}

impl std::fmt::Display for Member {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.feature, self.channel)
    }
}

impl std::str::FromStr for Member {
    type Err = Error;

    /// Parses `feature:channel`, e.g. `energy_mean:3`.
    fn from_str(s: &str) -> Result<Self> {
        let (f, c) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("member '{s}' is not feature:channel")))?;
        let channel = c
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad channel index in '{s}'")))?;
        Ok(Self::new(f.trim().parse()?, channel))
    }
}

fn open_unit(p: f64) -> Result<f64> {
    if p > 0.0 && p < 1.0 {
        Ok(p)
    } else {
        Err(Error::Probability(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    p_star: f64,
    pub source: Option<Member>,
}

impl Evidence {
    pub fn new(p_star: f64) -> Result<Self> {
        Ok(Self {
            p_star: open_unit(p_star)?,
            source: None,
        })
    }

    pub fn from_member(p_star: f64, member: Member) -> Result<Self> {
        Ok(Self {
            p_star: open_unit(p_star)?,
            source: Some(member),
        })
    }

    pub fn p_star(&self) -> f64 {
        self.p_star
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Prior(f64);

impl Prior {
    pub fn new(p_seizure: f64) -> Result<Self> {
        open_unit(p_seizure).map(Self)
    }

    pub fn uniform() -> Self {
        Self(0.5)
    }

    pub fn p_seizure(self) -> f64 {
        self.0
    }
}

/// `ln(p / (1 - p))`.
pub fn logit(p: f64) -> f64 {
    p.ln() - (-p).ln_1p()
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn posterior(prior: Prior, evidences: &[Evidence]) -> f64 {
    let z = evidences
        .iter()
        .fold(logit(prior.0), |acc, e| acc + logit(e.p_star));
    sigmoid(z)
}

/// Strict threshold: a posterior equal to the threshold is interictal.
pub fn classify(posterior: f64, threshold: f64) -> State {
    if posterior > threshold {
        State::Ictal
    } else {
        State::Interictal
    }
}
