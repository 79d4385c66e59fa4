#![allow(dead_code)]

use std::path::Path;

use seizure_core::bayes::Member;
use seizure_core::features::FeatureKind;
use seizure_core::signal::{
    alternating_schedule, synthesize_recording, IctalRhythm, SignalRecording, SynthesisConfig,
};

/// Four channels, a strong 3 Hz rhythm on channel 0 during ictal blocks and
/// pure background noise elsewhere. Ten alternating 120 s blocks.
pub fn planted(seed: u64) -> SignalRecording {
    let cfg = SynthesisConfig {
        duration_s: 1200.0,
        schedule: alternating_schedule(120.0, 10),
        ..SynthesisConfig::default()
    };
    synthesize_recording(&cfg, seed).unwrap()
}

pub const PLANTED_CHANNEL: usize = 0;
pub const NOISE_CHANNELS: [usize; 3] = [1, 2, 3];

pub const NETWORK_CHANNELS: [usize; 3] = [1, 4, 6];
pub const NETWORK_FEATURES: [FeatureKind; 2] = [FeatureKind::Mean, FeatureKind::EnergyMean];

/// Eight channels with a weak rhythm (0.6 x noise RMS) on three of them, so
/// that each informative member is needed for the best three-member combo.
pub fn network(seed: u64) -> SignalRecording {
    let cfg = SynthesisConfig {
        channel_count: 8,
        duration_s: 25.0 * 120.0,
        schedule: alternating_schedule(120.0, 25),
        rhythms: NETWORK_CHANNELS
            .iter()
            .map(|&channel| IctalRhythm {
                channel,
                amplitude_ratio: 0.6,
                frequency_hz: 3.0,
            })
            .collect(),
        ..SynthesisConfig::default()
    };
    synthesize_recording(&cfg, seed).unwrap()
}

pub fn network_plant() -> Vec<Member> {
    NETWORK_CHANNELS
        .iter()
        .map(|&c| Member::new(FeatureKind::EnergyMean, c))
        .collect()
}

/// Writes a plain EDF file byte by byte. Physical and digital ranges are
/// identical, so each physical sample equals its stored integer.
pub fn write_raw_edf(
    path: &Path,
    labels: &[String],
    samples: &[Vec<i16>],
    record_s: usize,
    rate: usize,
) {
    fn field(out: &mut Vec<u8>, s: &str, width: usize) {
        let mut b = s.as_bytes().to_vec();
        assert!(b.len() <= width, "{s} does not fit in {width}");
        b.resize(width, b' ');
        out.extend(b);
    }
    let ns = labels.len();
    let n = samples[0].len();
    let spr = record_s * rate;
    assert_eq!(n % spr, 0);
    let records = n / spr;
    let mut out = Vec::new();
    field(&mut out, "0", 8);
    field(&mut out, "X X X X", 80);
    field(&mut out, "Startdate X X X X", 80);
    field(&mut out, "01.01.01", 8);
    field(&mut out, "00.00.00", 8);
    field(&mut out, &(256 * (ns + 1)).to_string(), 8);
    field(&mut out, "", 44);
    field(&mut out, &records.to_string(), 8);
    field(&mut out, &record_s.to_string(), 8);
    field(&mut out, &ns.to_string(), 4);
    type Field<'a> = (usize, Box<dyn Fn(usize) -> String + 'a>);
    let per_signal: [Field; 10] = [
        (16, Box::new(|i| labels[i].clone())),
        (80, Box::new(|_| String::new())),
        (8, Box::new(|_| "uV".into())),
        (8, Box::new(|_| "-32768".into())),
        (8, Box::new(|_| "32767".into())),
        (8, Box::new(|_| "-32768".into())),
        (8, Box::new(|_| "32767".into())),
        (80, Box::new(|_| String::new())),
        (8, Box::new(|_| spr.to_string())),
        (32, Box::new(|_| String::new())),
    ];
    for (width, value) in &per_signal {
        for i in 0..ns {
            field(&mut out, &value(i), *width);
        }
    }
    for r in 0..records {
        for ch in samples {
            for &v in &ch[r * spr..(r + 1) * spr] {
                out.extend(v.to_le_bytes());
            }
        }
    }
    std::fs::write(path, out).unwrap();
}
