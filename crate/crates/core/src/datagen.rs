//! Synthetic labelled EEG-like corpora with known ground truth.
//!
//! A continuous recording carries one stimulus every `trial_interval_s`, in a
//! seeded random class order. Each stimulus adds its class's damped-oscillation
//! template to the informative channels, on top of 1/f background noise on
//! every channel. A fixed fraction of trials also gets a large smooth
//! excursion on one channel, to be caught by artifact rejection.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::signal::io::{write_events_csv, write_recording_csv};
use crate::signal::{Recording, StimulusEvent};
use crate::util::rng;
use crate::{Error, Result};

/// `amplitude · exp(−(t − latency)/decay) · sin(2πf(t − latency))` for `t ≥ latency`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErpTemplate {
    pub latency_ms: f64,
    pub frequency_hz: f64,
    pub amplitude_uv: f64,
    pub decay_ms: f64,
}

impl ErpTemplate {
    /// Template value `t_s` seconds after stimulus onset.
    pub fn value(&self, t_s: f64) -> f64 {
        let dt = t_s - self.latency_ms / 1000.0;
        if dt < 0.0 {
            return 0.0;
        }
        self.amplitude_uv
            * (-dt * 1000.0 / self.decay_ms).exp()
            * (2.0 * PI * self.frequency_hz * dt).sin()
    }

    pub fn sampled(&self, sample_rate_hz: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| self.value(i as f64 / sample_rate_hz))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Power spectrum falls as `1/f^exponent`; 1 is pink noise.
    pub exponent: f64,
    /// Below this frequency the spectrum is flat.
    pub corner_hz: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            exponent: 1.0,
            corner_hz: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_channels: usize,
    pub sample_rate_hz: f64,
    pub trials_per_class: usize,
    pub classes: usize,
    /// Template-to-noise power ratio in dB; `null` turns the noise off.
    pub snr_db: Option<f64>,
    pub informative_channels: Vec<usize>,
    /// Per informative channel template gain; empty means all 1.
    pub channel_gains: Vec<f64>,
    /// Volume conduction: every other channel carries the template with a
    /// seeded gain drawn uniformly from `[−spread_gain, spread_gain]`. 0 keeps
    /// them pure noise.
    pub spread_gain: f64,
    pub erp_templates: Vec<ErpTemplate>,
    pub noise: NoiseConfig,
    pub artifact_rate: f64,
    pub artifact_amplitude_uv: f64,
    pub artifact_width_ms: f64,
    /// Range of artifact centres relative to stimulus onset, seconds.
    pub artifact_window_s: [f64; 2],
    pub trial_interval_s: f64,
    /// Length of the post-stimulus window used to measure template power.
    pub snr_window_s: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_channels: 64,
            sample_rate_hz: 500.0,
            trials_per_class: 200,
            classes: 3,
            snr_db: Some(-6.0),
            informative_channels: (0..8).chain(56..64).collect(),
            channel_gains: Vec::new(),
            spread_gain: 0.0,
            erp_templates: default_templates(),
            noise: NoiseConfig::default(),
            artifact_rate: 0.0,
            artifact_amplitude_uv: 100.0,
            artifact_width_ms: 200.0,
            artifact_window_s: [-0.3, 1.3],
            trial_interval_s: 3.0,
            snr_window_s: 1.5,
            seed: 0,
        }
    }
}

/// Three damped oscillations: classes 0 and 1 differ only in latency, class 2
/// in frequency. Slow enough (≤ 3 Hz) to survive averaging over 200 ms frames.
pub fn default_templates() -> Vec<ErpTemplate> {
    vec![
        ErpTemplate {
            latency_ms: 100.0,
            frequency_hz: 3.0,
            amplitude_uv: 10.0,
            decay_ms: 300.0,
        },
        ErpTemplate {
            latency_ms: 250.0,
            frequency_hz: 3.0,
            amplitude_uv: 10.0,
            decay_ms: 300.0,
        },
        ErpTemplate {
            latency_ms: 100.0,
            frequency_hz: 1.5,
            amplitude_uv: 10.0,
            decay_ms: 400.0,
        },
    ]
}

impl SynthConfig {
    pub fn n_trials(&self) -> usize {
        self.trials_per_class * self.classes
    }

    pub fn gain(&self, informative_index: usize) -> f64 {
        self.channel_gains
            .get(informative_index)
            .copied()
            .unwrap_or(1.0)
    }

    /// Template gain of every channel.
    pub fn channel_template_gains(&self) -> Vec<f64> {
        let mut r = rng(self.seed, STREAM_SPREAD);
        let mut gains: Vec<f64> = (0..self.n_channels)
            .map(|_| {
                let u: f64 = r.random_range(-1.0..=1.0);
                u * self.spread_gain
            })
            .collect();
        for (k, &ch) in self.informative_channels.iter().enumerate() {
            gains[ch] = self.gain(k);
        }
        gains
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_channels == 0 || self.trials_per_class == 0 || self.classes < 2 {
            return Err(Error::param(
                "n_channels/trials_per_class/classes",
                "need channels >= 1, trials >= 1, classes >= 2",
            ));
        }
        if !(self.sample_rate_hz > 0.0 && self.trial_interval_s > 0.0) {
            return Err(Error::param(
                "sample_rate_hz/trial_interval_s",
                "must be positive",
            ));
        }
        if self.erp_templates.len() != self.classes {
            return Err(Error::param(
                "erp_templates",
                format!(
                    "{} templates for {} classes",
                    self.erp_templates.len(),
                    self.classes
                ),
            ));
        }
        if let Some(&c) = self
            .informative_channels
            .iter()
            .find(|&&c| c >= self.n_channels)
        {
            return Err(Error::param(
                "informative_channels",
                format!("channel {c} >= n_channels"),
            ));
        }
        if !self.channel_gains.is_empty()
            && self.channel_gains.len() != self.informative_channels.len()
        {
            return Err(Error::param(
                "channel_gains",
                "one gain per informative channel (or none)",
            ));
        }
        if !(self.spread_gain >= 0.0 && self.spread_gain.is_finite()) {
            return Err(Error::param("spread_gain", "must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.artifact_rate) {
            return Err(Error::param("artifact_rate", "must lie in [0, 1]"));
        }
        if matches!(self.snr_db, Some(s) if !s.is_finite()) {
            return Err(Error::param(
                "snr_db",
                "must be finite (use null for noise-free)",
            ));
        }
        let n = (self.snr_window_s * self.sample_rate_hz).round() as usize;
        let sampled: Vec<Vec<f64>> = self
            .erp_templates
            .iter()
            .map(|t| t.sampled(self.sample_rate_hz, n))
            .collect();
        for a in 0..sampled.len() {
            for b in a + 1..sampled.len() {
                let d2: f64 = sampled[a]
                    .iter()
                    .zip(&sampled[b])
                    .map(|(x, y)| (x - y).powi(2))
                    .sum();
                if !(d2 > 0.0) {
                    return Err(Error::Degenerate(format!(
                        "class templates {a} and {b} are identical"
                    )));
                }
            }
        }
        Ok(())
    }

    /// RMS of the templates over the post-stimulus window, pooled over classes.
    pub fn template_rms(&self) -> f64 {
        let n = (self.snr_window_s * self.sample_rate_hz).round() as usize;
        let power: f64 = self
            .erp_templates
            .iter()
            .map(|t| {
                t.sampled(self.sample_rate_hz, n)
                    .iter()
                    .map(|v| v * v)
                    .sum::<f64>()
                    / n as f64
            })
            .sum::<f64>()
            / self.erp_templates.len() as f64;
        power.sqrt()
    }

    pub fn noise_rms(&self) -> f64 {
        match self.snr_db {
            Some(snr) => self.template_rms() / 10f64.powf(snr / 20.0),
            None => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedArtifact {
    pub trial: usize,
    pub channel: usize,
    pub centre_s: f64,
    pub amplitude_uv: f64,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub recording: Recording,
    pub events: Vec<StimulusEvent>,
    /// Ground truth for artifact rejection, sorted by trial.
    pub artifacts: Vec<PlantedArtifact>,
    pub noise_rms_uv: f64,
    pub config: SynthConfig,
}

impl SynthCorpus {
    pub fn artifact_trials(&self) -> Vec<usize> {
        self.artifacts.iter().map(|a| a.trial).collect()
    }

    /// Writes `recording.csv`, `events.csv`, `synth_config.json` and `artifacts.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_recording_csv(&self.recording, &dir.join("recording.csv"))?;
        write_events_csv(&self.events, &dir.join("events.csv"))?;
        let cfg = dir.join("synth_config.json");
        std::fs::write(&cfg, serde_json::to_vec_pretty(&self.config)?)
            .map_err(|e| Error::io(&cfg, e))?;
        let art = dir.join("artifacts.json");
        std::fs::write(&art, serde_json::to_vec_pretty(&self.artifacts)?)
            .map_err(|e| Error::io(&art, e))
    }
}

const STREAM_ORDER: u64 = 10;
const STREAM_ARTIFACTS: u64 = 11;
const STREAM_SPREAD: u64 = 12;
const STREAM_NOISE: u64 = 1000;

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let fs = cfg.sample_rate_hz;
    let n_trials = cfg.n_trials();
    let len = (n_trials as f64 * cfg.trial_interval_s * fs).round() as usize;

    let mut order: Vec<u32> = (0..cfg.classes as u32)
        .flat_map(|c| std::iter::repeat_n(c, cfg.trials_per_class))
        .collect();
    order.shuffle(&mut rng(cfg.seed, STREAM_ORDER));
    let events: Vec<StimulusEvent> = order
        .iter()
        .enumerate()
        .map(|(i, &class_id)| StimulusEvent {
            onset_s: (i as f64 + 0.5) * cfg.trial_interval_s,
            class_id,
        })
        .collect();

    let noise_rms = cfg.noise_rms();
    let mut samples: Vec<Vec<f64>> = (0..cfg.n_channels)
        .into_par_iter()
        .map(|c| {
            if noise_rms > 0.0 {
                let mut row = colored_noise(len, fs, &cfg.noise, cfg.seed, STREAM_NOISE + c as u64);
                row.iter_mut().for_each(|v| *v *= noise_rms);
                row
            } else {
                vec![0.0; len]
            }
        })
        .collect();

    let gains = cfg.channel_template_gains();
    // template support: until it has decayed by e^-12 or the next trial starts
    for ev in &events {
        let t = &cfg.erp_templates[ev.class_id as usize];
        let support_s =
            ((t.latency_ms + 12.0 * t.decay_ms) / 1000.0).min(cfg.trial_interval_s - 0.5);
        let start = (ev.onset_s * fs).round() as usize;
        let n = ((support_s * fs).round() as usize).min(len.saturating_sub(start));
        let wave = t.sampled(fs, n);
        for (ch, &g) in gains.iter().enumerate().filter(|(_, &g)| g != 0.0) {
            for (x, w) in samples[ch][start..start + n].iter_mut().zip(&wave) {
                *x += g * w;
            }
        }
    }

    let mut art_rng = rng(cfg.seed, STREAM_ARTIFACTS);
    let n_art = (cfg.artifact_rate * n_trials as f64).round() as usize;
    let mut chosen = sample(&mut art_rng, n_trials, n_art).into_vec();
    chosen.sort_unstable();
    let half_width = cfg.artifact_width_ms / 2000.0;
    let mut artifacts = Vec::with_capacity(n_art);
    for trial in chosen {
        let channel = art_rng.random_range(0..cfg.n_channels);
        let offset = art_rng.random_range(cfg.artifact_window_s[0]..=cfg.artifact_window_s[1]);
        let sign = if art_rng.random::<bool>() { 1.0 } else { -1.0 };
        let centre_s = events[trial].onset_s + offset;
        let amplitude = sign * cfg.artifact_amplitude_uv;
        let lo = (((centre_s - half_width) * fs).ceil().max(0.0)) as usize;
        let hi = (((centre_s + half_width) * fs).floor() as usize).min(len.saturating_sub(1));
        for i in lo..=hi {
            let u = (i as f64 / fs - centre_s) / half_width;
            // Hann bump, peak `amplitude` at the centre
            samples[channel][i] += amplitude * 0.5 * (1.0 + (PI * u).cos());
        }
        artifacts.push(PlantedArtifact {
            trial,
            channel,
            centre_s,
            amplitude_uv: amplitude,
        });
    }

    let mut recording = Recording::new(samples, fs, Recording::synthetic_labels(cfg.n_channels))?;
    recording.history.push(format!(
        "synthetic corpus: {} trials, snr {:?} dB, noise rms {:.3} uV, seed {}",
        n_trials, cfg.snr_db, noise_rms, cfg.seed
    ));
    Ok(SynthCorpus {
        recording,
        events,
        artifacts,
        noise_rms_uv: noise_rms,
        config: cfg.clone(),
    })
}

/// Unit-RMS Gaussian noise with a `1/f^exponent` power spectrum, shaped in the
/// frequency domain.
pub fn colored_noise(
    len: usize,
    sample_rate_hz: f64,
    cfg: &NoiseConfig,
    seed: u64,
    stream: u64,
) -> Vec<f64> {
    if len == 0 {
        return Vec::new();
    }
    let mut r = rng(seed, stream);
    let mut buf: Vec<Complex64> = (0..len)
        .map(|_| Complex64::new(r.sample::<f64, _>(StandardNormal), 0.0))
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(len).process(&mut buf);
    let df = sample_rate_hz / len as f64;
    buf[0] = Complex64::new(0.0, 0.0);
    for k in 1..len {
        let f = df * k.min(len - k) as f64;
        buf[k] *= f.max(cfg.corner_hz).powf(-cfg.exponent / 2.0);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let mut out: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let mean = out.iter().sum::<f64>() / len as f64;
    let rms = (out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / len as f64).sqrt();
    out.iter_mut().for_each(|v| *v = (*v - mean) / rms);
    out
}
