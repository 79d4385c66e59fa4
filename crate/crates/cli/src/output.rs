use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use seizure_core::Error;
use serde::Serialize;
use sha2::{Digest, Sha256};

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Serialize)]
struct Artifact {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: Option<u64>,
    config_sha256: String,
    artifacts: &'a [Artifact],
    #[serde(skip_serializing_if = "Option::is_none")]
    created_unix_s: Option<u64>,
}

/// Output directory of one command invocation.
pub struct RunDir {
    root: PathBuf,
    command: &'static str,
    artifacts: Vec<Artifact>,
    timestamp: bool,
}

impl RunDir {
    pub fn create(root: &Path, command: &'static str, timestamp: bool) -> anyhow::Result<Self> {
        std::fs::create_dir_all(root)
            .map_err(Error::from)
            .with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            command,
            artifacts: Vec::new(),
            timestamp,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Records a file already written under the run directory.
    pub fn register(&mut self, name: &str) -> anyhow::Result<()> {
        let bytes = std::fs::read(self.path(name)).map_err(Error::from)?;
        self.artifacts.push(Artifact {
            path: name.to_string(),
            sha256: hex_digest(&bytes),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(
        &mut self,
        name: &str,
        value: &T,
    ) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
        text.push('\n');
        std::fs::write(self.path(name), text).map_err(Error::from)?;
        self.register(name)
    }

    /// Writes `config.json` and `manifest.json`.
    pub fn finish<C: Serialize>(mut self, config: &C, seed: Option<u64>) -> anyhow::Result<()> {
        let config_bytes = serde_json::to_vec(config).map_err(Error::from)?;
        self.write_json("config.json", config)?;
        let created_unix_s = self.timestamp.then(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        });
        let manifest = Manifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config_sha256: hex_digest(&config_bytes),
            artifacts: &self.artifacts,
            created_unix_s,
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(Error::from)?;
        text.push('\n');
        std::fs::write(self.path("manifest.json"), text).map_err(Error::from)?;
        Ok(())
    }
}
