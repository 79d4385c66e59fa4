use serde::{Deserialize, Serialize};

use super::{ChannelTrace, SignalRecording};
use crate::error::{Error, Result};

/// Bipolar montage: each output channel is `anode - cathode`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MontageSpec {
    pub pairs: Vec<(String, String)>,
}

/// Standard temporal-central-parasagittal bipolar chain (22 derivations)
/// over the 10-20 electrode set with ear references A1/A2.
const TCP_PAIRS: [(&str, &str); 22] = [
    ("FP1", "F7"),
    ("F7", "T3"),
    ("T3", "T5"),
    ("T5", "O1"),
    ("FP2", "F8"),
    ("F8", "T4"),
    ("T4", "T6"),
    ("T6", "O2"),
    ("A1", "T3"),
    ("T3", "C3"),
    ("C3", "CZ"),
    ("CZ", "C4"),
    ("C4", "T4"),
    ("T4", "A2"),
    ("FP1", "F3"),
    ("F3", "C3"),
    ("C3", "P3"),
    ("P3", "O1"),
    ("FP2", "F4"),
    ("F4", "C4"),
    ("C4", "P4"),
    ("P4", "O2"),
];

impl MontageSpec {
    pub fn new(pairs: Vec<(String, String)>) -> Self {
        Self { pairs }
    }

    pub fn tcp() -> Self {
        Self::new(
            TCP_PAIRS
                .iter()
                .map(|(a, c)| ((*a).to_owned(), (*c).to_owned()))
                .collect(),
        )
    }

    /// Electrodes referenced by the montage, in first-use order.
    pub fn electrodes(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for (a, c) in &self.pairs {
            for e in [a, c] {
                if !seen.contains(e) {
                    seen.push(e.clone());
                }
            }
        }
        seen
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

impl Default for MontageSpec {
    fn default() -> Self {
        Self::tcp()
    }
}

/// Re-references `rec` into bipolar derivations named `anode-cathode`.
/// Electrode lookup is case-insensitive and ignores an `EEG ` prefix and
/// `-REF`/`-LE` suffixes, which covers common EDF label styles.
pub fn apply_montage(rec: &SignalRecording, spec: &MontageSpec) -> Result<SignalRecording> {
    let find = |electrode: &str| -> Result<&ChannelTrace> {
        let want = normalize(electrode);
        rec.channels()
            .iter()
            .find(|c| normalize(&c.name) == want)
            .ok_or_else(|| Error::MissingElectrode(electrode.to_owned()))
    };
    let channels = spec
        .pairs
        .iter()
        .map(|(anode, cathode)| {
            let a = find(anode)?;
            let c = find(cathode)?;
            Ok(ChannelTrace {
                name: format!("{anode}-{cathode}"),
                samples: a
                    .samples
                    .iter()
                    .zip(&c.samples)
                    .map(|(x, y)| x - y)
                    .collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SignalRecording::new(rec.sample_rate_hz(), channels, rec.labels().to_vec())
}

fn normalize(label: &str) -> String {
    let upper = label.trim().to_ascii_uppercase();
    let upper = upper.strip_prefix("EEG ").unwrap_or(&upper);
    let upper = upper
        .strip_suffix("-REF")
        .or_else(|| upper.strip_suffix("-LE"))
        .unwrap_or(upper);
    upper.trim().to_owned()
}
