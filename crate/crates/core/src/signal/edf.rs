//! Minimal continuous EDF/EDF+ support.
//!
//! Layout: a 256-byte fixed header, then 256 bytes of per-signal fields
//! (stored field-major), then data records holding each signal's samples as
//! little-endian `i16`. Discontinuous EDF+ (`EDF+D`) is rejected, as are files
//! whose data signals have different sample rates. `EDF Annotations` signals
//! are skipped.

use std::io::Write;
use std::path::Path;

use super::{ChannelTrace, SignalRecording};
use crate::error::{Error, Result};

const FIXED_HEADER: usize = 256;
const SIGNAL_HEADER: usize = 256;
const ANNOTATION_LABEL: &str = "EDF Annotations";

struct SignalHeader {
    label: String,
    physical_min: f64,
    physical_max: f64,
    digital_min: i32,
    digital_max: i32,
    samples_per_record: usize,
}

impl SignalHeader {
    fn gain(&self) -> f64 {
        (self.physical_max - self.physical_min) / f64::from(self.digital_max - self.digital_min)
    }

    fn to_physical(&self, digital: i16) -> f64 {
        (f64::from(digital) - f64::from(self.digital_min)) * self.gain() + self.physical_min
    }
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn field(&mut self, width: usize, what: &str) -> Result<&'a str> {
        let end = self.pos + width;
        let raw = self.bytes.get(self.pos..end).ok_or_else(|| {
            Error::parse(self.path, format!("malformed header: truncated at {what}"))
        })?;
        self.pos = end;
        std::str::from_utf8(raw)
            .map(str::trim)
            .map_err(|_| Error::parse(self.path, format!("malformed header: non-ASCII {what}")))
    }

    fn number<T: std::str::FromStr>(&mut self, width: usize, what: &str) -> Result<T> {
        let text = self.field(width, what)?;
        text.parse()
            .map_err(|_| Error::parse(self.path, format!("malformed header: bad {what} '{text}'")))
    }
}

pub fn read_edf(path: &Path) -> Result<SignalRecording> {
    let bytes = std::fs::read(path)?;
    let mut cur = Cursor {
        path,
        bytes: &bytes,
        pos: 0,
    };
    let version = cur.field(8, "version")?;
    if version != "0" {
        return Err(Error::parse(
            path,
            format!("malformed header: version '{version}'"),
        ));
    }
    cur.field(80, "patient")?;
    cur.field(80, "recording")?;
    cur.field(8, "start date")?;
    cur.field(8, "start time")?;
    let header_bytes: usize = cur.number(8, "header size")?;
    let reserved = cur.field(44, "reserved")?;
    if reserved.starts_with("EDF+D") {
        return Err(Error::UnsupportedEdf(
            "discontinuous EDF+ (EDF+D) records are not supported".into(),
        ));
    }
    let declared_records: i64 = cur.number(8, "record count")?;
    let record_duration: f64 = cur.number(8, "record duration")?;
    let ns: usize = cur.number(4, "signal count")?;
    if header_bytes != FIXED_HEADER + ns * SIGNAL_HEADER {
        return Err(Error::parse(
            path,
            format!("malformed header: header size {header_bytes} does not match {ns} signals"),
        ));
    }
    if !(record_duration > 0.0) {
        return Err(Error::UnsupportedEdf(format!(
            "record duration {record_duration} (zero-duration records carry no signal data)"
        )));
    }

    let labels = (0..ns)
        .map(|_| cur.field(16, "label").map(str::to_owned))
        .collect::<Result<Vec<_>>>()?;
    for _ in 0..ns {
        cur.field(80, "transducer")?;
    }
    for _ in 0..ns {
        cur.field(8, "physical dimension")?;
    }
    let pmin = (0..ns)
        .map(|_| cur.number::<f64>(8, "physical minimum"))
        .collect::<Result<Vec<_>>>()?;
    let pmax = (0..ns)
        .map(|_| cur.number::<f64>(8, "physical maximum"))
        .collect::<Result<Vec<_>>>()?;
    let dmin = (0..ns)
        .map(|_| cur.number::<i32>(8, "digital minimum"))
        .collect::<Result<Vec<_>>>()?;
    let dmax = (0..ns)
        .map(|_| cur.number::<i32>(8, "digital maximum"))
        .collect::<Result<Vec<_>>>()?;
    for _ in 0..ns {
        cur.field(80, "prefilter")?;
    }
    let spr = (0..ns)
        .map(|_| cur.number::<usize>(8, "samples per record"))
        .collect::<Result<Vec<_>>>()?;
    for _ in 0..ns {
        cur.field(32, "signal reserved")?;
    }

    let signals: Vec<SignalHeader> = (0..ns)
        .map(|i| SignalHeader {
            label: labels[i].clone(),
            physical_min: pmin[i],
            physical_max: pmax[i],
            digital_min: dmin[i],
            digital_max: dmax[i],
            samples_per_record: spr[i],
        })
        .collect();
    for s in &signals {
        if s.digital_max <= s.digital_min {
            return Err(Error::parse(
                path,
                format!(
                    "malformed header: signal '{}' has an empty digital range",
                    s.label
                ),
            ));
        }
    }

    let record_samples: usize = signals.iter().map(|s| s.samples_per_record).sum();
    let record_bytes = record_samples * 2;
    let data = &bytes[header_bytes.min(bytes.len())..];
    if record_bytes == 0 {
        return Err(Error::parse(
            path,
            "malformed header: records carry no samples",
        ));
    }
    let records = if declared_records >= 0 {
        let n = declared_records as usize;
        if data.len() < n * record_bytes {
            return Err(Error::parse(
                path,
                format!(
                    "truncated data: {n} records declared, {} bytes present",
                    data.len()
                ),
            ));
        }
        n
    } else {
        data.len() / record_bytes
    };

    let data_idx: Vec<usize> = (0..ns)
        .filter(|&i| signals[i].label != ANNOTATION_LABEL)
        .collect();
    let Some(&first) = data_idx.first() else {
        return Err(Error::parse(path, "no data signals"));
    };
    let per_record = signals[first].samples_per_record;
    if let Some(&odd) = data_idx
        .iter()
        .find(|&&i| signals[i].samples_per_record != per_record)
    {
        return Err(Error::UnsupportedEdf(format!(
            "signal '{}' has {} samples per record, expected {per_record} (mixed sample rates)",
            signals[odd].label, signals[odd].samples_per_record
        )));
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(records * per_record); ns];
    for r in 0..records {
        let mut offset = r * record_bytes;
        for (i, s) in signals.iter().enumerate() {
            let chunk = &data[offset..offset + 2 * s.samples_per_record];
            if s.label != ANNOTATION_LABEL {
                columns[i].extend(
                    chunk
                        .chunks_exact(2)
                        .map(|b| s.to_physical(i16::from_le_bytes([b[0], b[1]]))),
                );
            }
            offset += 2 * s.samples_per_record;
        }
    }

    let rate = per_record as f64 / record_duration;
    let sample_rate_hz = (rate * 1e6).round() / 1e6;
    let channels = data_idx
        .into_iter()
        .map(|i| ChannelTrace::new(signals[i].label.clone(), std::mem::take(&mut columns[i])))
        .collect::<Result<Vec<_>>>()?;
    SignalRecording::new(sample_rate_hz, channels, Vec::new())
}

/// Formats `value` into at most `width` ASCII characters, rounding in the
/// direction given by `round` so that a written range still covers the data.
fn fit_number(value: f64, width: usize, round: fn(f64) -> f64) -> Result<(String, f64)> {
    for precision in (0..=width).rev() {
        let scale = 10f64.powi(precision as i32);
        let rounded = round(value * scale) / scale;
        let text = format!("{rounded:.precision$}");
        let text = if text.contains('.') {
            text.trim_end_matches('0').trim_end_matches('.').to_owned()
        } else {
            text
        };
        if text.len() <= width {
            let parsed: f64 = text.parse().expect("formatted float parses");
            return Ok((text, parsed));
        }
    }
    Err(Error::Config(format!(
        "value {value} does not fit an {width}-character EDF field"
    )))
}

fn pad(out: &mut Vec<u8>, text: &str, width: usize) {
    let mut field: Vec<u8> = text.bytes().filter(u8::is_ascii).take(width).collect();
    field.resize(width, b' ');
    out.extend_from_slice(&field);
}

/// Writes a continuous EDF file. Each channel is quantized to 16 bits over
/// its own physical range, so reading back reproduces samples to within half
/// a quantization step.
pub fn write_edf(rec: &SignalRecording, path: &Path) -> Result<()> {
    let ns = rec.channel_count();
    if ns == 0 {
        return Err(Error::InvalidRecording(
            "cannot write EDF without channels".into(),
        ));
    }
    let n = rec.sample_count();
    let fs = rec.sample_rate_hz();
    let (spr, records, duration) = if fs.fract() == 0.0 && n > 0 && n.is_multiple_of(fs as usize) {
        (fs as usize, n / fs as usize, "1".to_owned())
    } else {
        let (text, _) = fit_number(n as f64 / fs, 8, f64::round)?;
        (n.max(1), 1, text)
    };
    let (dmin, dmax) = (i16::MIN, i16::MAX);

    struct Scale {
        pmin: String,
        pmax: String,
        lo: f64,
        gain: f64,
    }
    let scales = rec
        .channels()
        .iter()
        .map(|c| {
            let lo = c.samples.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = c.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (lo, hi) = if !lo.is_finite() || lo == hi {
                let centre = if lo.is_finite() { lo } else { 0.0 };
                (centre - 1.0, centre + 1.0)
            } else {
                (lo, hi)
            };
            let (pmin, lo) = fit_number(lo, 8, f64::floor)?;
            let (pmax, hi) = fit_number(hi, 8, f64::ceil)?;
            Ok(Scale {
                pmin,
                pmax,
                lo,
                gain: (hi - lo) / (f64::from(dmax) - f64::from(dmin)),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = Vec::with_capacity(FIXED_HEADER + ns * SIGNAL_HEADER + 2 * ns * records * spr);
    pad(&mut out, "0", 8);
    pad(&mut out, "X X X X", 80);
    pad(&mut out, "Startdate X X X X", 80);
    pad(&mut out, "01.01.00", 8);
    pad(&mut out, "00.00.00", 8);
    pad(
        &mut out,
        &(FIXED_HEADER + ns * SIGNAL_HEADER).to_string(),
        8,
    );
    pad(&mut out, "", 44);
    pad(&mut out, &records.to_string(), 8);
    pad(&mut out, &duration, 8);
    pad(&mut out, &ns.to_string(), 4);
    for c in rec.channels() {
        pad(&mut out, &c.name, 16);
    }
    for _ in 0..ns {
        pad(&mut out, "", 80);
    }
    for _ in 0..ns {
        pad(&mut out, "V", 8);
    }
    for s in &scales {
        pad(&mut out, &s.pmin, 8);
    }
    for s in &scales {
        pad(&mut out, &s.pmax, 8);
    }
    for _ in 0..ns {
        pad(&mut out, &dmin.to_string(), 8);
    }
    for _ in 0..ns {
        pad(&mut out, &dmax.to_string(), 8);
    }
    for _ in 0..ns {
        pad(&mut out, "", 80);
    }
    for _ in 0..ns {
        pad(&mut out, &spr.to_string(), 8);
    }
    for _ in 0..ns {
        pad(&mut out, "", 32);
    }

    for r in 0..records {
        for (c, s) in rec.channels().iter().zip(&scales) {
            for i in r * spr..(r + 1) * spr {
                let x = c.samples.get(i).copied().unwrap_or(s.lo);
                let d = ((x - s.lo) / s.gain + f64::from(dmin)).round();
                let d = d.clamp(f64::from(dmin), f64::from(dmax)) as i16;
                out.extend_from_slice(&d.to_le_bytes());
            }
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_number_respects_width_and_direction() {
        let (t, v) = fit_number(-123.456789, 8, f64::floor).unwrap();
        assert!(t.len() <= 8);
        assert!(v <= -123.456789);
        let (t, v) = fit_number(0.000123456, 8, f64::ceil).unwrap();
        assert!(t.len() <= 8, "{t}");
        assert!(v >= 0.000123456);
        assert_eq!(fit_number(32767.0, 8, f64::ceil).unwrap().0, "32767");
    }

    #[test]
    fn writer_round_trip_within_half_step() {
        let samples: Vec<f64> = (0..500).map(|i| (i as f64 * 0.37).sin() * 1e-4).collect();
        let rec = SignalRecording::new(
            250.0,
            vec![ChannelTrace::new("Fp1", samples.clone()).unwrap()],
            vec![],
        )
        .unwrap();
        let f = tempfile::Builder::new().suffix(".edf").tempfile().unwrap();
        write_edf(&rec, f.path()).unwrap();
        let back = read_edf(f.path()).unwrap();
        assert_eq!(back.sample_rate_hz(), 250.0);
        assert_eq!(back.channels()[0].name, "Fp1");
        let step = 2e-4 / 65535.0;
        for (a, b) in samples.iter().zip(&back.channels()[0].samples) {
            assert!((a - b).abs() <= step, "{a} vs {b}");
        }
    }

    #[test]
    fn discontinuous_edf_is_rejected() {
        let rec = SignalRecording::new(
            10.0,
            vec![
                ChannelTrace::new("a", vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0])
                    .unwrap(),
            ],
            vec![],
        )
        .unwrap();
        let f = tempfile::Builder::new().suffix(".edf").tempfile().unwrap();
        write_edf(&rec, f.path()).unwrap();
        let mut bytes = std::fs::read(f.path()).unwrap();
        bytes[192..197].copy_from_slice(b"EDF+D");
        std::fs::write(f.path(), &bytes).unwrap();
        let err = read_edf(f.path()).unwrap_err();
        assert!(matches!(err, Error::UnsupportedEdf(_)), "{err}");
    }
}
