use std::path::Path;

use anyhow::Context;
use seizure_core::eval::{EvalConfig, DEFAULT_FOLDS};
use seizure_core::features::FeatureKind;
use seizure_core::optimizer::GaConfig;
use seizure_core::power::Scenario;
use seizure_core::signal::{MontageSpec, SynthesisConfig};
use seizure_core::Error;
use serde::{Deserialize, Serialize};

/// Everything a run can be configured with. A JSON file supplies any subset;
/// command-line flags are applied on top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub synth: Option<SynthesisConfig>,
    pub montage: Option<MontageSpec>,
    pub eval: EvalConfig,
    pub folds: usize,
    pub features: Option<Vec<FeatureKind>>,
    /// Channel names or indices.
    pub channels: Option<Vec<String>>,
    /// Members as `feature:channel`.
    pub combo: Option<Vec<String>>,
    pub ga: GaConfig,
    pub scenarios: Option<Vec<Scenario>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            synth: None,
            montage: None,
            eval: EvalConfig::default(),
            folds: DEFAULT_FOLDS,
            features: None,
            channels: None,
            combo: None,
            ga: GaConfig::default(),
            scenarios: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(Error::from)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())).into())
    }

    /// The seed, which stochastic commands must be given explicitly.
    pub fn require_seed(&self, command: &str) -> Result<u64, Error> {
        self.seed.ok_or_else(|| {
            Error::Config(format!(
                "'{command}' needs a seed (--seed or \"seed\" in the config)"
            ))
        })
    }
}
