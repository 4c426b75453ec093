//! Multichannel recordings, stimulus-locked epochs and the preprocessing chain:
//! resample → band-pass → epoch → artifact rejection → average reference.

mod epochs;
mod filter;
pub mod io;
mod resample;

pub use epochs::{
    average_reference, compute_erp, extract_epochs, reject_artifacts, EpochSummary, SkippedEvent,
};
pub use filter::{bandpass, bandpass_in_place, BandpassDesign, Biquad};
pub use resample::resample;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Class id carried by averaged epochs (ERPs) that pool every class.
pub const ALL_CLASSES: u32 = u32::MAX;

/// A continuous multichannel recording, one row per channel, amplitudes in microvolts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    samples: Vec<Vec<f64>>,
    sample_rate_hz: f64,
    channel_labels: Vec<String>,
    pub units: String,
    /// Processing steps applied so far, oldest first.
    pub history: Vec<String>,
}

impl Recording {
    pub fn new(
        samples: Vec<Vec<f64>>,
        sample_rate_hz: f64,
        channel_labels: Vec<String>,
    ) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::param(
                "sample_rate_hz",
                format!("must be positive, got {sample_rate_hz}"),
            ));
        }
        if samples.len() != channel_labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} channel rows but {} labels",
                samples.len(),
                channel_labels.len()
            )));
        }
        if let Some(first) = samples.first() {
            if let Some(bad) = samples.iter().position(|row| row.len() != first.len()) {
                return Err(Error::ShapeMismatch(format!(
                    "channel {bad} has {} samples, channel 0 has {}",
                    samples[bad].len(),
                    first.len()
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for label in &channel_labels {
            if !seen.insert(label.as_str()) {
                return Err(Error::param(
                    "channel_labels",
                    format!("duplicate label {label:?}"),
                ));
            }
        }
        Ok(Recording {
            samples,
            sample_rate_hz,
            channel_labels,
            units: "microvolts".to_string(),
            history: Vec::new(),
        })
    }

    /// Labels `E01`, `E02`, ... for synthetic montages.
    pub fn synthetic_labels(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("E{i:02}")).collect()
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn channel_labels(&self) -> &[String] {
        &self.channel_labels
    }

    pub fn n_channels(&self) -> usize {
        self.samples.len()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.sample_rate_hz
    }

    pub fn into_samples(self) -> Vec<Vec<f64>> {
        self.samples
    }

    pub(crate) fn samples_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.samples
    }

    pub(crate) fn with_samples(&self, samples: Vec<Vec<f64>>, sample_rate_hz: f64) -> Recording {
        Recording {
            samples,
            sample_rate_hz,
            channel_labels: self.channel_labels.clone(),
            units: self.units.clone(),
            history: self.history.clone(),
        }
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        check_finite(&self.samples)
    }
}

pub(crate) fn check_finite(rows: &[Vec<f64>]) -> Result<()> {
    for (channel, row) in rows.iter().enumerate() {
        if let Some(index) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { channel, index });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StimulusEvent {
    pub onset_s: f64,
    pub class_id: u32,
}

/// A stimulus-locked window of a recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Epoch {
    pub samples: Vec<Vec<f64>>,
    pub sample_rate_hz: f64,
    pub class_id: u32,
    pub pre_stimulus_s: f64,
    pub duration_s: f64,
}

impl Epoch {
    pub fn n_channels(&self) -> usize {
        self.samples.len()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    /// Largest absolute amplitude over all channels and samples.
    pub fn peak_abs(&self) -> f64 {
        self.samples
            .iter()
            .flat_map(|row| row.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Keeps only the listed channels, in the given order.
    pub fn select_channels(&self, channels: &[usize]) -> Epoch {
        Epoch {
            samples: channels.iter().map(|&c| self.samples[c].clone()).collect(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Epoch {
        Epoch {
            samples: Vec::new(),
            sample_rate_hz: self.sample_rate_hz,
            class_id: self.class_id,
            pre_stimulus_s: self.pre_stimulus_s,
            duration_s: self.duration_s,
        }
    }
}

/// Parameters of the full preprocessing chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub target_hz: f64,
    pub low_hz: f64,
    pub high_hz: f64,
    /// Butterworth order of each band edge; the cascade runs forward and backward.
    pub filter_order: usize,
    pub pre_stimulus_s: f64,
    pub epoch_duration_s: f64,
    pub reject_limit_uv: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_hz: 500.0,
            low_hz: 0.1,
            high_hz: 45.0,
            filter_order: 4,
            pre_stimulus_s: 0.5,
            epoch_duration_s: 2.0,
            reject_limit_uv: 75.0,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_hz > 0.0) {
            return Err(Error::param("target_hz", "must be positive"));
        }
        if !(self.low_hz > 0.0 && self.low_hz < self.high_hz && self.high_hz < self.target_hz / 2.0)
        {
            return Err(Error::param(
                "low_hz/high_hz",
                "need 0 < low < high < target_hz/2",
            ));
        }
        if self.filter_order == 0 {
            return Err(Error::param("filter_order", "must be at least 1"));
        }
        if !(self.pre_stimulus_s >= 0.0 && self.pre_stimulus_s < self.epoch_duration_s) {
            return Err(Error::param("pre_stimulus_s", "need 0 <= pre < duration"));
        }
        if !(self.reject_limit_uv > 0.0) {
            return Err(Error::param("reject_limit_uv", "must be positive"));
        }
        Ok(())
    }
}

/// Result of running the whole chain over one recording.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub epochs: Vec<Epoch>,
    /// Indices (into the extracted epoch list) of epochs dropped by artifact rejection.
    pub rejected: Vec<usize>,
    pub summary: EpochSummary,
    pub channel_labels: Vec<String>,
    pub history: Vec<String>,
}

impl Preprocessed {
    pub fn n_extracted(&self) -> usize {
        self.epochs.len() + self.rejected.len()
    }

    pub fn rejected_fraction(&self) -> f64 {
        let n = self.n_extracted();
        if n == 0 {
            0.0
        } else {
            self.rejected.len() as f64 / n as f64
        }
    }
}

/// Resample → band-pass → epoch → reject → average reference.
pub fn preprocess(
    rec: Recording,
    events: &[StimulusEvent],
    cfg: &PreprocessConfig,
) -> Result<Preprocessed> {
    cfg.validate()?;
    let rec = if rec.sample_rate_hz() == cfg.target_hz {
        rec.check_finite()?;
        rec
    } else {
        resample(&rec, cfg.target_hz)?
    };
    let mut rec = rec;
    let design = BandpassDesign::butterworth(
        cfg.low_hz,
        cfg.high_hz,
        cfg.filter_order,
        rec.sample_rate_hz(),
    )?;
    bandpass_in_place(&mut rec, &design)?;
    let (epochs, summary) = extract_epochs(&rec, events, cfg.pre_stimulus_s, cfg.epoch_duration_s);
    let (kept, rejected) = reject_artifacts(epochs, cfg.reject_limit_uv)?;
    let epochs = if rec.n_channels() >= 2 {
        kept.iter()
            .map(average_reference)
            .collect::<Result<Vec<_>>>()?
    } else {
        log::warn!("single-channel recording: skipping average reference");
        kept
    };
    let mut history = rec.history.clone();
    history.push(format!(
        "epoch pre={}s duration={}s; reject |x|>{}uV ({} of {}); average reference",
        cfg.pre_stimulus_s,
        cfg.epoch_duration_s,
        cfg.reject_limit_uv,
        rejected.len(),
        epochs.len() + rejected.len()
    ));
    Ok(Preprocessed {
        epochs,
        rejected,
        summary,
        channel_labels: rec.channel_labels().to_vec(),
        history,
    })
}
