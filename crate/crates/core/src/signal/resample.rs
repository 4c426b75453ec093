//! Band-limited resampling by spectral truncation / zero-padding.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::Recording;
use crate::{Error, Result};

/// Resamples every channel to `target_hz`. Output length is
/// `round(n * target_hz / rate)`. Equal rates return an unmodified copy.
pub fn resample(rec: &Recording, target_hz: f64) -> Result<Recording> {
    if !(target_hz > 0.0 && target_hz.is_finite()) {
        return Err(Error::param(
            "target_hz",
            format!("must be positive, got {target_hz}"),
        ));
    }
    rec.check_finite()?;
    if target_hz == rec.sample_rate_hz() {
        return Ok(rec.clone());
    }
    let n = rec.n_samples();
    let m = (n as f64 * target_hz / rec.sample_rate_hz()).round() as usize;
    let rows: Vec<Vec<f64>> = rec
        .samples()
        .par_iter()
        .map(|row| resample_row(row, m))
        .collect();
    let mut out = rec.with_samples(rows, target_hz);
    out.history.push(format!(
        "resample fft {} Hz -> {} Hz ({} -> {} samples)",
        rec.sample_rate_hz(),
        target_hz,
        n,
        m
    ));
    Ok(out)
}

fn resample_row(x: &[f64], m: usize) -> Vec<f64> {
    let n = x.len();
    if n == 0 || m == 0 {
        return vec![0.0; m];
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut spec: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut spec);

    let mut out = vec![Complex64::new(0.0, 0.0); m];
    let h = n.min(m);
    for k in 0..=(h - 1) / 2 {
        out[k] = spec[k];
    }
    for k in 1..=(h - 1) / 2 {
        out[m - k] = spec[n - k];
    }
    if h % 2 == 0 {
        let k = h / 2;
        if n > m {
            // fold both halves into the new (real) Nyquist bin
            out[k] = spec[k] + spec[n - k];
        } else if n < m {
            // split the old Nyquist bin across the two new mirror bins
            out[k] = spec[k] * 0.5;
            out[m - k] = spec[k] * 0.5;
        } else {
            out[k] = spec[k];
        }
    }
    planner.plan_fft_inverse(m).process(&mut out);
    let scale = 1.0 / n as f64;
    out.iter().map(|c| c.re * scale).collect()
}
