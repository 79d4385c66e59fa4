use std::path::Path;

use super::{ChannelTrace, SignalRecording};
use crate::error::{Error, Result};

/// Reads `time_s,<ch1>,<ch2>,...` CSV. The sample rate is inferred from the
/// time column; a channel that runs out early (empty trailing cells) is
/// reported as an inconsistent-length error.
pub fn read_csv(path: &Path) -> Result<SignalRecording> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header = reader.headers()?.clone();
    if header.get(0) != Some("time_s") {
        return Err(Error::parse(
            path,
            "malformed header: first column must be 'time_s'",
        ));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    if names.is_empty() {
        return Err(Error::parse(path, "malformed header: no channel columns"));
    }
    if let Some(empty) = names.iter().position(String::is_empty) {
        return Err(Error::parse(
            path,
            format!("malformed header: column {} has no name", empty + 1),
        ));
    }

    let mut times = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let line = row_idx + 2;
        if record.len() > names.len() + 1 {
            return Err(Error::parse(
                path,
                format!("line {line}: more fields than header"),
            ));
        }
        let t = parse_cell(path, line, record.get(0).unwrap_or(""))?
            .ok_or_else(|| Error::parse(path, format!("line {line}: missing time value")))?;
        times.push(t);
        for (ch, column) in columns.iter_mut().enumerate() {
            if let Some(v) = parse_cell(path, line, record.get(ch + 1).unwrap_or(""))? {
                if column.len() + 1 != times.len() {
                    return Err(Error::InconsistentChannelLengths(format!(
                        "channel '{}' resumes after ending at line {line}",
                        names[ch]
                    )));
                }
                column.push(v);
            }
        }
    }

    let expected = times.len();
    if let Some((ch, col)) = columns
        .iter()
        .enumerate()
        .find(|(_, c)| c.len() != expected)
    {
        return Err(Error::InconsistentChannelLengths(format!(
            "channel '{}' has {} samples, expected {expected}",
            names[ch],
            col.len()
        )));
    }
    let sample_rate_hz = infer_rate(path, &times)?;
    let channels = names
        .into_iter()
        .zip(columns)
        .map(|(name, samples)| ChannelTrace::new(name, samples))
        .collect::<Result<Vec<_>>>()?;
    SignalRecording::new(sample_rate_hz, channels, Vec::new())
}

fn parse_cell(path: &Path, line: usize, cell: &str) -> Result<Option<f64>> {
    if cell.is_empty() {
        return Ok(None);
    }
    let v: f64 = cell
        .parse()
        .map_err(|_| Error::parse(path, format!("line {line}: '{cell}' is not a number")))?;
    if !v.is_finite() {
        return Err(Error::parse(path, format!("line {line}: non-finite value")));
    }
    Ok(Some(v))
}

fn infer_rate(path: &Path, times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::parse(
            path,
            "need at least two samples to infer the sample rate",
        ));
    }
    let span = times[times.len() - 1] - times[0];
    if !(span > 0.0) {
        return Err(Error::parse(path, "time column must be increasing"));
    }
    let rate = (times.len() - 1) as f64 / span;
    // Snap to a micro-hertz grid so decimal time stamps reproduce integer rates.
    Ok((rate * 1e6).round() / 1e6)
}

/// Writes a recording as CSV. Values use Rust's shortest round-trip float
/// formatting, so a reload is sample-exact.
pub fn write_csv(rec: &SignalRecording, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["time_s".to_owned()];
    header.extend(rec.channels().iter().map(|c| c.name.clone()));
    writer.write_record(&header)?;
    let fs = rec.sample_rate_hz();
    let mut row = Vec::with_capacity(header.len());
    for i in 0..rec.sample_count() {
        row.clear();
        row.push((i as f64 / fs).to_string());
        row.extend(rec.channels().iter().map(|c| c.samples[i].to_string()));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}
