//! Ben's Spiker Algorithm (BSA): greedy matching of a low-pass FIR
//! reconstruction filter against the signal, plus the convolution decoder.
//!
//! At every tick τ the encoder compares the error of explaining the next
//! `M + 1` samples with one filter response,
//! `e1 = Σ_k |s(τ + k) − h(k)|`, against leaving them unexplained,
//! `e2 = Σ_k |s(τ + k)|`, and fires when `e1 < e2 − θ`. After a spike the
//! filter response is subtracted from the working signal.

mod fir;

pub use fir::{design_fir, design_fir_scaled, FirFilter, FirScaling};

use serde::{Deserialize, Serialize};

use crate::signal::Epoch;
use crate::{Error, Result, SpikeRaster};

/// Tolerance on the `[0, 1]` input range.
const RANGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `(x − min) / (max − min)` per channel per epoch.
    PerChannelMinMax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BsaConfig {
    pub threshold: f64,
    pub filter_order: usize,
    /// Filter cutoff as a fraction of Nyquist; default picked by `examples/bsa_sweep.rs`.
    pub cutoff_norm: f64,
    pub scaling: FirScaling,
    /// Multiplier applied to the scaled filter; sets how eagerly the encoder fires at a fixed threshold.
    pub filter_gain: f64,
    pub normalization: Normalization,
    /// Subtract the filter response from the working signal after each spike.
    pub subtract_residual: bool,
}

impl Default for BsaConfig {
    fn default() -> Self {
        BsaConfig {
            threshold: 0.9950,
            filter_order: 10,
            cutoff_norm: 0.1,
            scaling: FirScaling::UnitSum,
            filter_gain: 1.1,
            normalization: Normalization::PerChannelMinMax,
            subtract_residual: true,
        }
    }
}

impl BsaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold >= 0.0) {
            return Err(Error::param("threshold", "must be >= 0"));
        }
        if !(self.filter_gain > 0.0 && self.filter_gain.is_finite()) {
            return Err(Error::param("filter_gain", "must be positive and finite"));
        }
        self.filter().map(|_| ())
    }

    pub fn filter(&self) -> Result<FirFilter> {
        Ok(
            design_fir_scaled(self.filter_order, self.cutoff_norm, self.scaling)?
                .with_gain(self.filter_gain),
        )
    }
}

/// Min-max scaling into `[0, 1]`; a constant signal maps to 0.5.
pub fn normalize_unit(signal: &[f64]) -> Vec<f64> {
    let (lo, hi) = signal
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    if !(range > 0.0) {
        return vec![0.5; signal.len()];
    }
    signal.iter().map(|&v| (v - lo) / range).collect()
}

/// A configured encoder; holds the designed filter so it is built once.
#[derive(Debug, Clone)]
pub struct BsaEncoder {
    filter: FirFilter,
    threshold: f64,
    subtract_residual: bool,
}

impl BsaEncoder {
    pub fn new(cfg: &BsaConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(BsaEncoder {
            filter: cfg.filter()?,
            threshold: cfg.threshold,
            subtract_residual: cfg.subtract_residual,
        })
    }

    pub fn with_filter(filter: FirFilter, threshold: f64, subtract_residual: bool) -> Self {
        BsaEncoder {
            filter,
            threshold,
            subtract_residual,
        }
    }

    pub fn filter(&self) -> &FirFilter {
        &self.filter
    }

    /// Encodes a signal already scaled into `[0, 1]`. Output has the input
    /// length; the final `M` ticks are always 0.
    pub fn encode(&self, signal: &[f64]) -> Result<Vec<u8>> {
        let h = self.filter.coefficients();
        let taps = h.len();
        if signal.len() < taps {
            return Err(Error::param(
                "signal",
                format!("length {} shorter than filter length {taps}", signal.len()),
            ));
        }
        if let Some((index, &value)) = signal
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= -RANGE_TOL && **v <= 1.0 + RANGE_TOL))
        {
            return Err(Error::NotNormalized { index, value });
        }
        let mut work = signal.to_vec();
        let mut out = vec![0u8; signal.len()];
        for tau in 0..=signal.len() - taps {
            let window = &work[tau..tau + taps];
            let mut e1 = 0.0;
            let mut e2 = 0.0;
            for (s, hk) in window.iter().zip(h) {
                e1 += (s - hk).abs();
                e2 += s.abs();
            }
            if e1 < e2 - self.threshold {
                out[tau] = 1;
                if self.subtract_residual {
                    for (s, hk) in work[tau..tau + taps].iter_mut().zip(h) {
                        *s -= hk;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Normalizes and encodes every channel of an epoch.
    pub fn encode_epoch(&self, epoch: &Epoch) -> Result<SpikeRaster> {
        let mut raster =
            SpikeRaster::zeros(epoch.n_channels(), epoch.n_samples(), epoch.sample_rate_hz);
        for (c, row) in epoch.samples.iter().enumerate() {
            let spikes = self.encode(&normalize_unit(row))?;
            raster.row_mut(c).copy_from_slice(&spikes);
        }
        Ok(raster)
    }
}

pub fn bsa_encode(signal: &[f64], cfg: &BsaConfig) -> Result<Vec<u8>> {
    BsaEncoder::new(cfg)?.encode(signal)
}

/// Reconstruction: the spike train convolved with `h`, truncated to the input length.
pub fn bsa_decode(spikes: &[u8], filter: &FirFilter) -> Vec<f64> {
    let h = filter.coefficients();
    let mut out = vec![0.0; spikes.len()];
    for (t, _) in spikes.iter().enumerate().filter(|(_, &s)| s != 0) {
        for (k, hk) in h.iter().enumerate() {
            if let Some(o) = out.get_mut(t + k) {
                *o += hk;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::pearson;
    use proptest::prelude::*;

    fn peak_encoder(threshold: f64) -> BsaEncoder {
        BsaEncoder::with_filter(design_fir(10, 0.2).unwrap(), threshold, true)
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_unit(&[0.0, 5.0, 10.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(normalize_unit(&[7.0, 7.0, 7.0]), vec![0.5, 0.5, 0.5]);
    }

    proptest! {
        #[test]
        fn normalize_spans_unit_interval(x in proptest::collection::vec(-1e3f64..1e3, 2..64)) {
            let y = normalize_unit(&x);
            let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let range = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - x.iter().cloned().fold(f64::INFINITY, f64::min);
            if range > 0.0 {
                prop_assert_eq!(lo, 0.0);
                prop_assert!((hi - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn decode_is_linear_on_disjoint_trains(
            a in proptest::collection::vec(0u8..2, 60),
            mask in proptest::collection::vec(any::<bool>(), 60),
        ) {
            // split `a` into two disjoint trains
            let x: Vec<u8> = a.iter().zip(&mask).map(|(&s, &m)| if m { s } else { 0 }).collect();
            let y: Vec<u8> = a.iter().zip(&mask).map(|(&s, &m)| if m { 0 } else { s }).collect();
            let f = design_fir(10, 0.2).unwrap();
            let whole = bsa_decode(&a, &f);
            let parts: Vec<f64> = bsa_decode(&x, &f).iter().zip(bsa_decode(&y, &f)).map(|(p, q)| p + q).collect();
            for (w, p) in whole.iter().zip(&parts) {
                prop_assert!((w - p).abs() < 1e-12);
            }
        }

        #[test]
        fn encoding_is_causal_within_window(
            x in proptest::collection::vec(0.0f64..1.0, 40..80),
            tail in proptest::collection::vec(0.0f64..1.0, 10),
        ) {
            // changing samples after the last complete window cannot change earlier spikes
            let enc = BsaEncoder::new(&BsaConfig::default()).unwrap();
            let mut y = x.clone();
            let n = y.len();
            y[n - 10..].copy_from_slice(&tail);
            let (sx, sy) = (enc.encode(&x).unwrap(), enc.encode(&y).unwrap());
            // spike at τ depends on samples τ..=τ+M only
            prop_assert_eq!(&sx[..n - 20], &sy[..n - 20]);
        }

        #[test]
        fn literal_rule_spike_count_is_monotone_in_threshold(
            x in proptest::collection::vec(0.0f64..1.0, 11..120),
            lo in 0.0f64..1.5,
            step in 0.0f64..0.5,
        ) {
            let f = BsaConfig::default().filter().unwrap();
            let count = |t: f64| BsaEncoder::with_filter(f.clone(), t, false).encode(&x).unwrap().iter().filter(|&&s| s != 0).count();
            prop_assert!(count(lo + step) <= count(lo));
        }

        #[test]
        fn output_length_and_silent_tail(x in proptest::collection::vec(0.0f64..1.0, 11..100)) {
            let s = bsa_encode(&x, &BsaConfig::default()).unwrap();
            prop_assert_eq!(s.len(), x.len());
            prop_assert!(s[x.len() - 10..].iter().all(|&v| v == 0));
        }
    }

    #[test]
    fn zero_signal_never_fires() {
        let s = bsa_encode(&[0.0; 50], &BsaConfig::default()).unwrap();
        assert!(s.iter().all(|&v| v == 0));
        assert!(peak_encoder(0.0)
            .encode(&[0.0; 50])
            .unwrap()
            .iter()
            .all(|&v| v == 0));
    }

    #[test]
    fn filter_shaped_pulse_gives_one_spike_at_origin() {
        // hand evaluation: at τ=0, e1 = 0 and e2 = Σh ≈ 3.0, so the spike fires and the
        // residual becomes exactly zero; every later window then has e2 = 0.
        let f = design_fir(10, 0.2).unwrap();
        let mut x = f.coefficients().to_vec();
        x.extend(std::iter::repeat_n(0.0, 30));
        let s = BsaEncoder::with_filter(f, 0.1, true).encode(&x).unwrap();
        assert_eq!(s[0], 1);
        assert_eq!(s.iter().map(|&v| v as usize).sum::<usize>(), 1);
    }

    #[test]
    fn unnormalized_input_is_rejected() {
        let err = bsa_encode(
            &[0.0; 20]
                .iter()
                .chain([1.5].iter())
                .copied()
                .collect::<Vec<_>>(),
            &BsaConfig::default(),
        );
        assert!(matches!(err, Err(Error::NotNormalized { index: 20, .. })));
        assert!(bsa_encode(&[-0.01; 20], &BsaConfig::default()).is_err());
    }

    #[test]
    fn short_input_is_rejected() {
        assert!(bsa_encode(&[0.5; 5], &BsaConfig::default()).is_err());
    }

    #[test]
    fn decode_impulse_is_filter() {
        let f = design_fir(10, 0.2).unwrap();
        let mut spikes = vec![0u8; 20];
        spikes[0] = 1;
        let y = bsa_decode(&spikes, &f);
        assert_eq!(&y[..11], f.coefficients());
        assert!(y[11..].iter().all(|&v| v == 0.0));
        assert!(bsa_decode(&[0; 20], &f).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn slow_sine_round_trip() {
        let x: Vec<f64> = (0..1000)
            .map(|i| 0.5 + 0.45 * (2.0 * std::f64::consts::PI * 4.0 * i as f64 / 500.0).sin())
            .collect();
        let cfg = BsaConfig::default();
        let s = bsa_encode(&x, &cfg).unwrap();
        let y = bsa_decode(&s, &cfg.filter().unwrap());
        assert!(pearson(&x, &y) > 0.95);
    }

    #[test]
    fn band_limited_noise_round_trip() {
        use rand::{Rng, SeedableRng};
        use rand_distr::StandardNormal;
        use rustfft::{num_complex::Complex64, FftPlanner};
        // white noise masked to 0.5–45 Hz in the frequency domain
        let (n, fs) = (1000, 500.0);
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut buf: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(r.sample(StandardNormal), 0.0))
            .collect();
        let mut planner = FftPlanner::new();
        planner.plan_fft_forward(n).process(&mut buf);
        for (i, c) in buf.iter_mut().enumerate() {
            let f = i.min(n - i) as f64 * fs / n as f64;
            if !(0.5..=45.0).contains(&f) {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        planner.plan_fft_inverse(n).process(&mut buf);
        let x = normalize_unit(&buf.iter().map(|c| c.re).collect::<Vec<_>>());
        let cfg = BsaConfig::default();
        let s = bsa_encode(&x, &cfg).unwrap();
        let density = s.iter().filter(|&&v| v != 0).count() as f64 / n as f64;
        assert!(density > 0.0 && density < 1.0);
        assert!(pearson(&x, &bsa_decode(&s, &cfg.filter().unwrap())) >= 0.9);
    }

    #[test]
    fn without_subtraction_plateaus_fire_every_tick() {
        let f = design_fir_scaled(10, 0.2, FirScaling::UnitSum).unwrap();
        let plain = BsaEncoder::with_filter(f.clone(), 0.9, false)
            .encode(&[0.5; 40])
            .unwrap();
        let sub = BsaEncoder::with_filter(f, 0.9, true)
            .encode(&[0.5; 40])
            .unwrap();
        assert!(plain[..30].iter().all(|&v| v == 1));
        assert!(
            sub.iter().filter(|&&v| v == 1).count() < plain.iter().filter(|&&v| v == 1).count()
        );
    }
}
