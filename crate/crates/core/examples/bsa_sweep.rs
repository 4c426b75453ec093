//! Round-trip correlation of BSA encode→decode versus filter cutoff and scaling,
//! on 0.5–45 Hz band-limited noise (flat and 1/f) and on channels of the
//! preprocessed synthetic corpus, all at 500 Hz. Used to pick the default cutoff.
//!
//! `cargo run --release --example bsa_sweep`

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use spike_reservoir::datagen::{generate, SynthConfig};
use spike_reservoir::encoder::{
    bsa_decode, design_fir_scaled, normalize_unit, BsaEncoder, FirScaling,
};
use spike_reservoir::signal::{preprocess, PreprocessConfig};
use spike_reservoir::util::{pearson, rng};

fn band_limited(len: usize, fs: f64, lo: f64, hi: f64, exponent: f64, seed: u64) -> Vec<f64> {
    let mut r = rng(seed, 0);
    let mut buf: Vec<Complex64> = (0..len)
        .map(|_| Complex64::new(r.sample(StandardNormal), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let f = fs * k.min(len - k) as f64 / len as f64;
        if f < lo || f > hi {
            *c = Complex64::new(0.0, 0.0);
        } else {
            *c *= f.powf(-exponent / 2.0);
        }
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    buf.iter().map(|c| c.re).collect()
}

/// Channels of preprocessed synthetic epochs: epoch `i`, channel `(7·i) mod 64`.
fn corpus_channels(n: usize) -> Vec<Vec<f64>> {
    let synth = SynthConfig {
        trials_per_class: n.div_ceil(3),
        ..SynthConfig::default()
    };
    let corpus = generate(&synth).unwrap();
    let pre = preprocess(
        corpus.recording,
        &corpus.events,
        &PreprocessConfig::default(),
    )
    .unwrap();
    pre.epochs
        .iter()
        .take(n)
        .enumerate()
        .map(|(i, e)| normalize_unit(&e.samples[(7 * i) % e.n_channels()]))
        .collect()
}

fn main() {
    println!(
        "{:<8} {:<10} {:>5} {:>8} {:>10} {:>10} {:>9}",
        "spectrum", "scaling", "gain", "cutoff", "mean r", "min r", "density"
    );
    for (name, exponent) in [("flat", 0.0), ("1/f", 1.0), ("corpus", f64::NAN)] {
        let signals: Vec<Vec<f64>> = if exponent.is_nan() {
            corpus_channels(100)
        } else {
            (0..100)
                .map(|s| normalize_unit(&band_limited(1000, 500.0, 0.5, 45.0, exponent, s)))
                .collect()
        };
        for (scaling, gain) in [
            (FirScaling::UnitPeak, 1.0),
            (FirScaling::UnitSum, 1.0),
            (FirScaling::UnitSum, 1.05),
            (FirScaling::UnitSum, 1.1),
            (FirScaling::UnitSum, 1.15),
            (FirScaling::UnitSum, 1.2),
            (FirScaling::UnitSum, 1.25),
            (FirScaling::UnitSum, 1.5),
        ] {
            for cutoff in [0.1, 0.15, 0.2, 0.3] {
                let filter = design_fir_scaled(10, cutoff, scaling)
                    .unwrap()
                    .with_gain(gain);
                let encoder = BsaEncoder::with_filter(filter.clone(), 0.9950, true);
                let (mut sum, mut min, mut density) = (0.0, f64::INFINITY, 0.0);
                for s in &signals {
                    let spikes = encoder.encode(s).unwrap();
                    let r = pearson(s, &bsa_decode(&spikes, &filter));
                    sum += r;
                    min = min.min(r);
                    density += spikes.iter().map(|&b| b as f64).sum::<f64>() / spikes.len() as f64;
                }
                let n = signals.len() as f64;
                println!(
                    "{:<8} {:<10} {:>5.2} {:>8.2} {:>10.3} {:>10.3} {:>9.3}",
                    name,
                    format!("{scaling:?}"),
                    gain,
                    cutoff,
                    sum / n,
                    min,
                    density / n
                );
            }
        }
    }
}
