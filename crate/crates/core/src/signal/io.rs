//! File formats: recording CSV, events CSV and a binary epoch container.
//!
//! Recording CSV: header `time_s,<label1>,...,<labelN>`, one row per sample.
//! The sample rate is inferred from the time column, which must be uniform
//! to within 1e-6 s.
//!
//! Events CSV: header `onset_s,class_id`.
//!
//! Epoch file: the 8-byte magic `SREPOCH1`, a little-endian `u64` header
//! length, a JSON header ([`EpochHeader`]), then every sample as a
//! little-endian `f64`, epoch-major, then channel, then time.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Epoch, Recording, StimulusEvent};
use crate::{Error, Result};

const TIME_JITTER_S: f64 = 1e-6;
const EPOCH_MAGIC: &[u8; 8] = b"SREPOCH1";

pub fn write_recording_csv(rec: &Recording, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write!(w, "time_s").map_err(io)?;
    for label in rec.channel_labels() {
        write!(w, ",{label}").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    let fs = rec.sample_rate_hz();
    for i in 0..rec.n_samples() {
        write!(w, "{}", i as f64 / fs).map_err(io)?;
        for row in rec.samples() {
            write!(w, ",{}", row[i]).map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_recording_csv(path: &Path) -> Result<Recording> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));
    let headers = reader
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .clone();
    if headers.get(0).map(str::trim) != Some("time_s") {
        return Err(Error::format(path, "first column must be `time_s`"));
    }
    let labels: Vec<String> = headers
        .iter()
        .skip(1)
        .map(|s| s.trim().to_string())
        .collect();
    if labels.is_empty() {
        return Err(Error::format(path, "no channel columns"));
    }
    let mut times = Vec::new();
    let mut rows = vec![Vec::new(); labels.len()];
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        if record.len() != labels.len() + 1 {
            return Err(Error::format(
                path,
                format!(
                    "row {} has {} fields, expected {}",
                    line + 1,
                    record.len(),
                    labels.len() + 1
                ),
            ));
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::format(path, format!("row {}: {e}", line + 1)))
        };
        times.push(parse(&record[0])?);
        for (row, field) in rows.iter_mut().zip(record.iter().skip(1)) {
            row.push(parse(field)?);
        }
    }
    let rate = infer_rate(&times).map_err(|reason| Error::format(path, reason))?;
    Recording::new(rows, rate, labels)
}

fn infer_rate(times: &[f64]) -> std::result::Result<f64, String> {
    if times.len() < 2 {
        return Err("need at least two samples to infer the sample rate".into());
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if !(dt > 0.0) {
        return Err("time column must be increasing".into());
    }
    for (i, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > TIME_JITTER_S {
            return Err(format!(
                "non-uniform sampling at row {}: step {} s vs mean {} s",
                i + 2,
                w[1] - w[0],
                dt
            ));
        }
    }
    Ok(1.0 / dt)
}

pub fn write_events_csv(events: &[StimulusEvent], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "onset_s,class_id").map_err(io)?;
    for ev in events {
        writeln!(w, "{},{}", ev.onset_s, ev.class_id).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_events_csv(path: &Path) -> Result<Vec<StimulusEvent>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let headers = reader
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != ["onset_s", "class_id"] {
        return Err(Error::format(path, "header must be `onset_s,class_id`"));
    }
    let mut events = Vec::new();
    for record in reader.deserialize::<StimulusEvent>() {
        let ev = record.map_err(|e| Error::format(path, e.to_string()))?;
        if !(ev.onset_s >= 0.0) {
            return Err(Error::format(
                path,
                format!("negative onset {}", ev.onset_s),
            ));
        }
        events.push(ev);
    }
    Ok(events)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochHeader {
    pub n_epochs: usize,
    pub n_channels: usize,
    pub n_samples: usize,
    pub sample_rate_hz: f64,
    pub pre_stimulus_s: f64,
    pub duration_s: f64,
    pub class_ids: Vec<u32>,
    pub channel_labels: Vec<String>,
    /// Epochs dropped by artifact rejection before this set was written.
    pub n_rejected: usize,
}

/// A preprocessed, labelled epoch set as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSet {
    pub epochs: Vec<Epoch>,
    pub channel_labels: Vec<String>,
    pub n_rejected: usize,
}

impl EpochSet {
    pub fn rejected_fraction(&self) -> f64 {
        let total = self.epochs.len() + self.n_rejected;
        if total == 0 {
            0.0
        } else {
            self.n_rejected as f64 / total as f64
        }
    }
}

pub fn write_epochs(set: &EpochSet, path: &Path) -> Result<()> {
    let first = set.epochs.first();
    let header = EpochHeader {
        n_epochs: set.epochs.len(),
        n_channels: set.channel_labels.len(),
        n_samples: first.map_or(0, Epoch::n_samples),
        sample_rate_hz: first.map_or(0.0, |e| e.sample_rate_hz),
        pre_stimulus_s: first.map_or(0.0, |e| e.pre_stimulus_s),
        duration_s: first.map_or(0.0, |e| e.duration_s),
        class_ids: set.epochs.iter().map(|e| e.class_id).collect(),
        channel_labels: set.channel_labels.clone(),
        n_rejected: set.n_rejected,
    };
    for (i, e) in set.epochs.iter().enumerate() {
        if e.n_channels() != header.n_channels || e.n_samples() != header.n_samples {
            return Err(Error::ShapeMismatch(format!(
                "epoch {i} does not match epoch 0"
            )));
        }
    }
    let json = serde_json::to_vec(&header)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(EPOCH_MAGIC).map_err(io)?;
    w.write_all(&(json.len() as u64).to_le_bytes())
        .map_err(io)?;
    w.write_all(&json).map_err(io)?;
    for v in set.epochs.iter().flat_map(|e| e.samples.iter().flatten()) {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_epochs(path: &Path) -> Result<EpochSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io = |e| Error::io(path, e);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != EPOCH_MAGIC {
        return Err(Error::format(path, "not an epoch file (bad magic)"));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(io)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut json).map_err(io)?;
    let header: EpochHeader =
        serde_json::from_slice(&json).map_err(|e| Error::format(path, format!("header: {e}")))?;
    if header.class_ids.len() != header.n_epochs {
        return Err(Error::format(
            path,
            "class_ids length differs from n_epochs",
        ));
    }
    let mut buf = [0u8; 8];
    let mut epochs = Vec::with_capacity(header.n_epochs);
    for &class_id in &header.class_ids {
        let mut samples = Vec::with_capacity(header.n_channels);
        for _ in 0..header.n_channels {
            let mut row = Vec::with_capacity(header.n_samples);
            for _ in 0..header.n_samples {
                r.read_exact(&mut buf)
                    .map_err(|e| Error::format(path, format!("truncated sample data: {e}")))?;
                row.push(f64::from_le_bytes(buf));
            }
            samples.push(row);
        }
        epochs.push(Epoch {
            samples,
            sample_rate_hz: header.sample_rate_hz,
            class_id,
            pre_stimulus_s: header.pre_stimulus_s,
            duration_s: header.duration_s,
        });
    }
    Ok(EpochSet {
        epochs,
        channel_labels: header.channel_labels,
        n_rejected: header.n_rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recording_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.csv");
        let rows = vec![vec![1.25, -2.5, 3.0, 0.125], vec![0.0, 1e-3, -7.75, 42.0]];
        let rec = Recording::new(rows, 500.0, vec!["Fz".into(), "Cz".into()]).unwrap();
        write_recording_csv(&rec, &path).unwrap();
        let back = read_recording_csv(&path).unwrap();
        assert_eq!(back.samples(), rec.samples());
        assert_eq!(back.channel_labels(), rec.channel_labels());
        assert!((back.sample_rate_hz() - 500.0).abs() < 1e-6);
    }

    #[test]
    fn jittered_time_column_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.csv");
        std::fs::write(&path, "time_s,Cz\n0,1\n0.002,1\n0.0041,1\n0.006,1\n").unwrap();
        let err = read_recording_csv(&path).unwrap_err();
        assert!(err.to_string().contains("non-uniform"), "{err}");
    }

    #[test]
    fn events_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ev.csv");
        let events = vec![
            StimulusEvent {
                onset_s: 5.0,
                class_id: 0,
            },
            StimulusEvent {
                onset_s: 15.0,
                class_id: 2,
            },
        ];
        write_events_csv(&events, &path).unwrap();
        assert_eq!(read_events_csv(&path).unwrap(), events);
    }

    #[test]
    fn epoch_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("epochs.bin");
        let mk = |c, v: f64| Epoch {
            samples: vec![vec![v, v + 0.5, -v], vec![1.0 / 3.0, 2.0, v]],
            sample_rate_hz: 500.0,
            class_id: c,
            pre_stimulus_s: 0.5,
            duration_s: 2.0,
        };
        let set = EpochSet {
            epochs: vec![mk(0, 1.5), mk(2, -0.1)],
            channel_labels: vec!["Fz".into(), "Pz".into()],
            n_rejected: 3,
        };
        write_epochs(&set, &path).unwrap();
        assert_eq!(read_epochs(&path).unwrap(), set);
    }

    #[test]
    fn bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        std::fs::write(&path, b"NOTEPOCHxxxxxxxx").unwrap();
        assert!(matches!(read_epochs(&path), Err(Error::Format { .. })));
    }
}
