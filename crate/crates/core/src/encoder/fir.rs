use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirScaling {
    /// Largest coefficient equals 1.
    UnitPeak,
    /// Coefficients sum to 1 (unit DC gain).
    UnitSum,
}

/// Linear-phase low-pass reconstruction filter `h(0..=M)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirFilter {
    coefficients: Vec<f64>,
    cutoff_norm: f64,
    scaling: FirScaling,
}

impl FirFilter {
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn cutoff_norm(&self) -> f64 {
        self.cutoff_norm
    }

    pub fn scaling(&self) -> FirScaling {
        self.scaling
    }

    /// The same filter with every coefficient multiplied by `gain`.
    pub fn with_gain(&self, gain: f64) -> FirFilter {
        FirFilter {
            coefficients: self.coefficients.iter().map(|h| h * gain).collect(),
            ..self.clone()
        }
    }

    /// Magnitude response at `freq_norm` (fraction of Nyquist).
    pub fn magnitude(&self, freq_norm: f64) -> f64 {
        let w = PI * freq_norm;
        let (re, im) = self
            .coefficients
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(re, im), (k, h)| {
                (re + h * (w * k as f64).cos(), im - h * (w * k as f64).sin())
            });
        re.hypot(im)
    }
}

/// Hamming-windowed sinc low-pass, largest coefficient scaled to 1.
pub fn design_fir(order: usize, cutoff_norm: f64) -> Result<FirFilter> {
    design_fir_scaled(order, cutoff_norm, FirScaling::UnitPeak)
}

pub fn design_fir_scaled(order: usize, cutoff_norm: f64, scaling: FirScaling) -> Result<FirFilter> {
    if order < 1 {
        return Err(Error::param("filter_order", "must be at least 1"));
    }
    if !(cutoff_norm > 0.0 && cutoff_norm < 1.0) {
        return Err(Error::param(
            "cutoff_norm",
            format!("must lie in (0, 1), got {cutoff_norm}"),
        ));
    }
    let m = order as f64;
    let mut h: Vec<f64> = (0..=order)
        .map(|k| {
            let x = k as f64 - m / 2.0;
            let window = 0.54 - 0.46 * (2.0 * PI * k as f64 / m).cos();
            cutoff_norm * sinc(cutoff_norm * x) * window
        })
        .collect();
    // sinc zeros land on the edge taps for some cutoffs; keep them exactly 0
    h.iter_mut()
        .filter(|v| v.abs() < 1e-12)
        .for_each(|v| *v = 0.0);
    let scale = match scaling {
        FirScaling::UnitPeak => h.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        FirScaling::UnitSum => h.iter().sum(),
    };
    h.iter_mut().for_each(|v| *v /= scale);
    if let Some(center) = h
        .get_mut(order / 2)
        .filter(|_| order % 2 == 0 && scaling == FirScaling::UnitPeak)
    {
        *center = 1.0;
    }
    Ok(FirFilter {
        coefficients: h,
        cutoff_norm,
        scaling,
    })
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}
