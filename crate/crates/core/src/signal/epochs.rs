use serde::{Deserialize, Serialize};

use super::{Epoch, Recording, StimulusEvent, ALL_CLASSES};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedEvent {
    pub event_index: usize,
    pub onset_s: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub extracted: usize,
    pub skipped: Vec<SkippedEvent>,
}

/// Cuts one window per event, `pre_s` before onset, `duration_s` long.
/// Samples are copied verbatim; windows that leave the recording are skipped
/// and reported.
pub fn extract_epochs(
    rec: &Recording,
    events: &[StimulusEvent],
    pre_s: f64,
    duration_s: f64,
) -> (Vec<Epoch>, EpochSummary) {
    let fs = rec.sample_rate_hz();
    let len = (duration_s * fs).round() as usize;
    let n = rec.n_samples();
    let mut summary = EpochSummary::default();
    let mut epochs = Vec::with_capacity(events.len());
    for (event_index, ev) in events.iter().enumerate() {
        let start = ((ev.onset_s - pre_s) * fs).round();
        let reason = if !ev.onset_s.is_finite() {
            Some("non-finite onset".to_string())
        } else if start < 0.0 {
            Some(format!(
                "window starts {:.3} s before the recording",
                -(ev.onset_s - pre_s)
            ))
        } else if start as usize + len > n {
            Some(format!("window ends past the recording ({} samples)", n))
        } else {
            None
        };
        if let Some(reason) = reason {
            summary.skipped.push(SkippedEvent {
                event_index,
                onset_s: ev.onset_s,
                reason,
            });
            continue;
        }
        let start = start as usize;
        epochs.push(Epoch {
            samples: rec
                .samples()
                .iter()
                .map(|row| row[start..start + len].to_vec())
                .collect(),
            sample_rate_hz: fs,
            class_id: ev.class_id,
            pre_stimulus_s: pre_s,
            duration_s,
        });
    }
    summary.extracted = epochs.len();
    (epochs, summary)
}

/// Drops every epoch with any sample beyond `±limit_uv`; returns the kept
/// epochs in order and the indices of the rejected ones.
pub fn reject_artifacts(epochs: Vec<Epoch>, limit_uv: f64) -> Result<(Vec<Epoch>, Vec<usize>)> {
    if !(limit_uv > 0.0) {
        return Err(Error::param(
            "limit_uv",
            format!("must be positive, got {limit_uv}"),
        ));
    }
    let mut kept = Vec::with_capacity(epochs.len());
    let mut rejected = Vec::new();
    for (i, epoch) in epochs.into_iter().enumerate() {
        if epoch.peak_abs() > limit_uv {
            rejected.push(i);
        } else {
            kept.push(epoch);
        }
    }
    Ok((kept, rejected))
}

/// Subtracts the across-channel mean from every channel at every sample.
pub fn average_reference(epoch: &Epoch) -> Result<Epoch> {
    let c = epoch.n_channels();
    if c < 2 {
        return Err(Error::Degenerate(format!(
            "average reference needs at least 2 channels, got {c}"
        )));
    }
    let t = epoch.n_samples();
    let mut mean = vec![0.0; t];
    for row in &epoch.samples {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= c as f64);
    let samples = epoch
        .samples
        .iter()
        .map(|row| row.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();
    Ok(Epoch {
        samples,
        ..epoch.clone_meta()
    })
}

/// Element-wise mean over epochs (event-related potential).
pub fn compute_erp(epochs: &[Epoch]) -> Result<Epoch> {
    let first = epochs
        .first()
        .ok_or_else(|| Error::Degenerate("ERP of an empty epoch list".into()))?;
    let (c, t) = (first.n_channels(), first.n_samples());
    let mut acc = vec![vec![0.0; t]; c];
    for (i, e) in epochs.iter().enumerate() {
        if e.n_channels() != c || e.n_samples() != t || e.sample_rate_hz != first.sample_rate_hz {
            return Err(Error::ShapeMismatch(format!(
                "epoch {i} is {}x{} @ {} Hz, expected {c}x{t} @ {} Hz",
                e.n_channels(),
                e.n_samples(),
                e.sample_rate_hz,
                first.sample_rate_hz
            )));
        }
        for (a, row) in acc.iter_mut().zip(&e.samples) {
            for (x, v) in a.iter_mut().zip(row) {
                *x += v;
            }
        }
    }
    let n = epochs.len() as f64;
    acc.iter_mut().flatten().for_each(|x| *x /= n);
    Ok(Epoch {
        samples: acc,
        class_id: ALL_CLASSES,
        ..first.clone_meta()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn epoch(samples: Vec<Vec<f64>>) -> Epoch {
        Epoch {
            samples,
            sample_rate_hz: 500.0,
            class_id: 0,
            pre_stimulus_s: 0.5,
            duration_s: 2.0,
        }
    }

    fn ramp_recording(n: usize) -> Recording {
        let rows = (0..2)
            .map(|c| (0..n).map(|i| (i * 10 + c) as f64).collect())
            .collect();
        Recording::new(rows, 500.0, Recording::synthetic_labels(2)).unwrap()
    }

    #[test]
    fn epoch_window_is_time_locked() {
        let rec = ramp_recording(5000);
        let events = [StimulusEvent {
            onset_s: 5.0,
            class_id: 2,
        }];
        let (epochs, summary) = extract_epochs(&rec, &events, 0.5, 2.0);
        assert_eq!(summary.extracted, 1);
        let e = &epochs[0];
        assert_eq!(e.class_id, 2);
        assert_eq!(e.n_samples(), 1000);
        assert_eq!(e.samples[0][0], 2250.0 * 10.0);
        assert_eq!(e.samples[1][999], 3249.0 * 10.0 + 1.0);
    }

    #[test]
    fn epoch_slice_is_bit_exact() {
        let rec = ramp_recording(5000);
        let events = [StimulusEvent {
            onset_s: 3.3,
            class_id: 1,
        }];
        let (epochs, _) = extract_epochs(&rec, &events, 0.5, 2.0);
        let start = ((3.3 - 0.5) * 500.0_f64).round() as usize;
        for (row, src) in epochs[0].samples.iter().zip(rec.samples()) {
            assert_eq!(row.as_slice(), &src[start..start + 1000]);
        }
    }

    #[test]
    fn no_events_no_epochs() {
        let (epochs, summary) = extract_epochs(&ramp_recording(100), &[], 0.5, 2.0);
        assert!(epochs.is_empty());
        assert!(summary.skipped.is_empty());
    }

    #[test]
    fn out_of_bounds_events_are_reported() {
        let rec = ramp_recording(5000);
        let events = [
            StimulusEvent {
                onset_s: 0.2,
                class_id: 0,
            },
            StimulusEvent {
                onset_s: 9.0,
                class_id: 1,
            },
            StimulusEvent {
                onset_s: 2.0,
                class_id: 2,
            },
        ];
        let (epochs, summary) = extract_epochs(&rec, &events, 0.5, 2.0);
        assert_eq!(epochs.len(), 1);
        let skipped: Vec<usize> = summary.skipped.iter().map(|s| s.event_index).collect();
        assert_eq!(skipped, vec![0, 1]);
    }

    #[test]
    fn rejects_single_excursion() {
        let mut bad = vec![vec![0.0; 10]; 3];
        bad[2][4] = 80.0;
        let (kept, rejected) =
            reject_artifacts(vec![epoch(vec![vec![0.0; 10]; 3]), epoch(bad)], 75.0).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(rejected, vec![1]);
    }

    #[test]
    fn limit_is_inclusive() {
        let (kept, _) = reject_artifacts(vec![epoch(vec![vec![-75.0; 4]; 2])], 75.0).unwrap();
        assert_eq!(kept.len(), 1);
        assert!(reject_artifacts(vec![], 0.0).is_err());
    }

    #[test]
    fn planted_artifacts_are_exactly_the_rejections() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let planted = [1usize, 4, 8];
        let epochs: Vec<Epoch> = (0..10)
            .map(|i| {
                let mut s: Vec<Vec<f64>> = (0..4)
                    .map(|_| {
                        (0..200)
                            .map(|_| 10.0 * rng.sample::<f64, _>(StandardNormal))
                            .collect()
                    })
                    .collect();
                s.iter_mut()
                    .flatten()
                    .for_each(|v| *v = v.clamp(-60.0, 60.0));
                if planted.contains(&i) {
                    let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                    s[i % 4][50 + i] = sign * 100.0;
                }
                epoch(s)
            })
            .collect();
        let (kept, rejected) = reject_artifacts(epochs, 75.0).unwrap();
        assert_eq!(rejected, planted);
        assert_eq!(kept.len(), 7);
    }

    #[test]
    fn average_reference_arithmetic() {
        let e = epoch(vec![vec![1.0], vec![2.0], vec![3.0]]);
        let r = average_reference(&e).unwrap();
        assert_eq!(r.samples, vec![vec![-1.0], vec![0.0], vec![1.0]]);
    }

    #[test]
    fn average_reference_needs_two_channels() {
        assert!(average_reference(&epoch(vec![vec![1.0, 2.0]])).is_err());
    }

    #[test]
    fn average_reference_is_idempotent() {
        let e = epoch(vec![vec![1.0, -2.0], vec![-1.0, 2.0]]);
        let r = average_reference(&e).unwrap();
        for (a, b) in r.samples.iter().flatten().zip(e.samples.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn average_reference_zeroes_channel_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = (0..64)
            .map(|_| {
                (0..1000)
                    .map(|_| 30.0 * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let r = average_reference(&epoch(s)).unwrap();
        for t in 0..1000 {
            let sum: f64 = r.samples.iter().map(|row| row[t]).sum();
            assert!(sum.abs() < 1e-9, "sum {sum} at {t}");
        }
    }

    #[test]
    fn erp_of_copies_is_the_copy() {
        let e = epoch(vec![vec![1.5, -2.0, 3.0]; 2]);
        let erp = compute_erp(&vec![e.clone(); 5]).unwrap();
        assert_eq!(erp.samples, e.samples);
        assert_eq!(erp.class_id, ALL_CLASSES);
    }

    #[test]
    fn erp_of_opposites_is_zero() {
        let a = epoch(vec![vec![1.5, -2.0, 3.0]]);
        let b = epoch(vec![vec![-1.5, 2.0, -3.0]]);
        let erp = compute_erp(&[a, b]).unwrap();
        assert!(erp.samples[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn erp_errors() {
        assert!(compute_erp(&[]).is_err());
        let a = epoch(vec![vec![0.0; 3]]);
        let b = epoch(vec![vec![0.0; 4]]);
        assert!(matches!(compute_erp(&[a, b]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn erp_converges_to_template() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let template: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.03).sin() * 4.0).collect();
        let epochs: Vec<Epoch> = (0..50)
            .map(|_| {
                epoch(vec![template
                    .iter()
                    .map(|v| v + rng.sample::<f64, _>(StandardNormal))
                    .collect()])
            })
            .collect();
        let erp = compute_erp(&epochs).unwrap();
        let bound = 3.0 / 50f64.sqrt();
        let within = erp.samples[0]
            .iter()
            .zip(&template)
            .filter(|(a, b)| (*a - *b).abs() <= bound)
            .count();
        assert!(
            within as f64 >= 0.99 * 1000.0,
            "{within} of 1000 within bound"
        );
    }
}
