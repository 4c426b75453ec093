//! Butterworth band-pass design (bilinear transform, second-order sections)
//! and forward-backward zero-phase application.

use std::f64::consts::PI;

use rayon::prelude::*;

use super::Recording;
use crate::{Error, Result};

/// One second-order section, `a0` normalized to 1, run in transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn normalized(b: [f64; 3], a0: f64, a1: f64, a2: f64) -> Biquad {
        Biquad {
            b: [b[0] / a0, b[1] / a0, b[2] / a0],
            a: [a1 / a0, a2 / a0],
        }
    }

    pub fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Complex frequency response magnitude at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64, sample_rate_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / sample_rate_hz;
        let (c1, s1, c2, s2) = (w.cos(), w.sin(), (2.0 * w).cos(), (2.0 * w).sin());
        let num_re = self.b[0] + self.b[1] * c1 + self.b[2] * c2;
        let num_im = -self.b[1] * s1 - self.b[2] * s2;
        let den_re = 1.0 + self.a[0] * c1 + self.a[1] * c2;
        let den_im = -self.a[0] * s1 - self.a[1] * s2;
        (num_re.hypot(num_im)) / (den_re.hypot(den_im))
    }

    /// State that makes the section's output constant for a unit-step input.
    fn step_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        let z2 = self.b[2] - self.a[1] * g;
        let z1 = self.b[1] - self.a[0] * g + z2;
        [z1, z2]
    }
}

/// Cascade of high-pass and low-pass Butterworth sections.
#[derive(Debug, Clone, PartialEq)]
pub struct BandpassDesign {
    pub sections: Vec<Biquad>,
    pub low_hz: f64,
    pub high_hz: f64,
    pub order: usize,
    pub sample_rate_hz: f64,
}

impl BandpassDesign {
    pub fn butterworth(
        low_hz: f64,
        high_hz: f64,
        order: usize,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        let nyquist = sample_rate_hz / 2.0;
        if !(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist) {
            return Err(Error::param(
                "band",
                format!("need 0 < low ({low_hz}) < high ({high_hz}) < Nyquist ({nyquist})"),
            ));
        }
        if order == 0 {
            return Err(Error::param("filter_order", "must be at least 1"));
        }
        let mut sections = butterworth_sections(order, low_hz / sample_rate_hz, Kind::HighPass);
        sections.extend(butterworth_sections(
            order,
            high_hz / sample_rate_hz,
            Kind::LowPass,
        ));
        Ok(BandpassDesign {
            sections,
            low_hz,
            high_hz,
            order,
            sample_rate_hz,
        })
    }

    /// Magnitude response of one forward pass.
    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        self.sections
            .iter()
            .map(|s| s.magnitude(freq_hz, self.sample_rate_hz))
            .product()
    }

    pub fn describe(&self) -> String {
        format!(
            "bandpass butterworth order {} ({}-{} Hz, {} sections), zero-phase forward-backward",
            self.order,
            self.low_hz,
            self.high_hz,
            self.sections.len()
        )
    }

    /// Zero-phase filtering of one channel, with odd-reflection padding and
    /// steady-state initial conditions on both passes.
    pub fn filtfilt(&self, x: &mut [f64]) {
        let n = x.len();
        if n < 2 {
            return;
        }
        let pad = (3 * (2 * self.sections.len() + 1)).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        let (first, last) = (x[0], x[n - 1]);
        ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * last - x[n - 1 - i]));

        self.run(&mut ext);
        ext.reverse();
        self.run(&mut ext);
        ext.reverse();
        x.copy_from_slice(&ext[pad..pad + n]);
    }

    fn run(&self, y: &mut [f64]) {
        let mut level = y[0];
        for s in &self.sections {
            let [mut z1, mut z2] = s.step_state().map(|z| z * level);
            level *= s.dc_gain();
            let [b0, b1, b2] = s.b;
            let [a1, a2] = s.a;
            for v in y.iter_mut() {
                let x = *v;
                let out = b0 * x + z1;
                z1 = b1 * x - a1 * out + z2;
                z2 = b2 * x - a2 * out;
                *v = out;
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Kind {
    LowPass,
    HighPass,
}

/// Digital Butterworth sections via the bilinear transform with pre-warping.
/// `cutoff` is in cycles per sample.
fn butterworth_sections(order: usize, cutoff: f64, kind: Kind) -> Vec<Biquad> {
    let w = (PI * cutoff).tan();
    let mut out = Vec::with_capacity(order.div_ceil(2));
    for k in 0..order / 2 {
        // conjugate pole pair on the unit circle; q = -2 Re(p)
        let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
        let q = -2.0 * theta.cos();
        let a0 = 1.0 + q * w + w * w;
        let a1 = 2.0 * (w * w - 1.0);
        let a2 = 1.0 - q * w + w * w;
        let b = match kind {
            Kind::LowPass => [w * w, 2.0 * w * w, w * w],
            Kind::HighPass => [1.0, -2.0, 1.0],
        };
        out.push(Biquad::normalized(b, a0, a1, a2));
    }
    if order % 2 == 1 {
        let b = match kind {
            Kind::LowPass => [w, w, 0.0],
            Kind::HighPass => [1.0, -1.0, 0.0],
        };
        out.push(Biquad::normalized(b, 1.0 + w, w - 1.0, 0.0));
    }
    out
}

/// Zero-phase band-pass with the default 4th-order Butterworth edges.
pub fn bandpass(rec: &Recording, low_hz: f64, high_hz: f64) -> Result<Recording> {
    let design = BandpassDesign::butterworth(low_hz, high_hz, 4, rec.sample_rate_hz())?;
    let mut out = rec.clone();
    bandpass_in_place(&mut out, &design)?;
    Ok(out)
}

pub fn bandpass_in_place(rec: &mut Recording, design: &BandpassDesign) -> Result<()> {
    if design.sample_rate_hz != rec.sample_rate_hz() {
        return Err(Error::param(
            "sample_rate_hz",
            format!(
                "filter designed for {} Hz, recording is {} Hz",
                design.sample_rate_hz,
                rec.sample_rate_hz()
            ),
        ));
    }
    rec.check_finite()?;
    rec.samples_mut()
        .par_iter_mut()
        .for_each(|row| design.filtfilt(row));
    rec.history.push(design.describe());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, fs: f64, n: usize, amp: f64) -> Vec<f64> {
        (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / fs).sin())
            .collect()
    }

    #[test]
    fn butterworth_lowpass_is_3db_at_cutoff() {
        for order in [1, 2, 4, 5] {
            let sections = butterworth_sections(order, 45.0 / 500.0, Kind::LowPass);
            let mag: f64 = sections.iter().map(|s| s.magnitude(45.0, 500.0)).product();
            assert!(
                (mag - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9,
                "order {order}: {mag}"
            );
            let dc: f64 = sections.iter().map(|s| s.dc_gain()).product();
            assert!((dc - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn highpass_blocks_dc() {
        let sections = butterworth_sections(4, 0.1 / 500.0, Kind::HighPass);
        let dc: f64 = sections.iter().map(|s| s.dc_gain()).product();
        assert!(dc.abs() < 1e-12);
    }

    #[test]
    fn rejects_band_above_nyquist() {
        assert!(BandpassDesign::butterworth(0.1, 260.0, 4, 500.0).is_err());
        assert!(BandpassDesign::butterworth(10.0, 5.0, 4, 500.0).is_err());
        assert!(BandpassDesign::butterworth(0.0, 45.0, 4, 500.0).is_err());
    }

    #[test]
    fn zero_in_zero_out() {
        let rec = Recording::new(
            vec![vec![0.0; 2000]; 3],
            500.0,
            Recording::synthetic_labels(3),
        )
        .unwrap();
        let out = bandpass(&rec, 0.1, 45.0).unwrap();
        assert!(out.samples().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn passband_tone_keeps_phase_and_amplitude() {
        let fs = 500.0;
        let x = sine(10.0, fs, 20_000, 1.0);
        let design = BandpassDesign::butterworth(0.1, 45.0, 4, fs).unwrap();
        let mut y = x.clone();
        design.filtfilt(&mut y);
        // zero phase: interior samples line up with the input
        let interior = 5_000..15_000;
        let err = interior.map(|i| (y[i] - x[i]).abs()).fold(0.0, f64::max);
        assert!(err < 1e-2, "max deviation {err}");
    }

    #[test]
    fn single_sample_is_left_alone() {
        let design = BandpassDesign::butterworth(0.1, 45.0, 4, 500.0).unwrap();
        let mut x = [3.0];
        design.filtfilt(&mut x);
        assert_eq!(x, [3.0]);
    }
}
