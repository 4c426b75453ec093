use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::signal::Epoch;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub accuracy: f64,
    pub adaptation_trials: usize,
    /// Mean network rate (spikes per tick) in the first and last regulation windows.
    pub adaptation_rate_first: Option<f64>,
    pub adaptation_rate_last: Option<f64>,
    pub weight_violations: usize,
    /// Share of neurons whose mean rate over the training trials lies in the target band.
    pub in_band_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall_accuracy: f64,
    /// Keyed by class id.
    pub per_class_accuracy: BTreeMap<String, f64>,
    pub class_labels: Vec<u32>,
    /// `confusion[true][predicted]`, in `class_labels` order.
    pub confusion: Vec<Vec<usize>>,
    pub per_fold: Vec<FoldMetrics>,
    pub n_trials: usize,
    pub channels: Vec<usize>,
    pub rejected_fraction: f64,
    pub config_digest: String,
}

impl EvalReport {
    pub(crate) fn assemble(
        class_labels: Vec<u32>,
        truth: &[u32],
        predicted: &[u32],
        per_fold: Vec<FoldMetrics>,
        channels: Vec<usize>,
        rejected_fraction: f64,
        config_digest: String,
    ) -> EvalReport {
        let index = |c: u32| {
            class_labels
                .iter()
                .position(|&l| l == c)
                .expect("label seen in training")
        };
        let k = class_labels.len();
        let mut confusion = vec![vec![0; k]; k];
        for (&t, &p) in truth.iter().zip(predicted) {
            confusion[index(t)][index(p)] += 1;
        }
        let correct: usize = (0..k).map(|i| confusion[i][i]).sum();
        let per_class_accuracy = class_labels
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let total: usize = confusion[i].iter().sum();
                let acc = if total == 0 {
                    0.0
                } else {
                    confusion[i][i] as f64 / total as f64
                };
                (c.to_string(), acc)
            })
            .collect();
        EvalReport {
            overall_accuracy: correct as f64 / truth.len().max(1) as f64,
            per_class_accuracy,
            class_labels,
            confusion,
            per_fold,
            n_trials: truth.len(),
            channels,
            rejected_fraction,
            config_digest,
        }
    }

    /// Half-width of a 3σ binomial interval around chance for this trial count.
    pub fn chance_band(&self) -> (f64, f64) {
        let p = 1.0 / self.class_labels.len() as f64;
        let sigma = (p * (1.0 - p) / self.n_trials as f64).sqrt();
        (p - 3.0 * sigma, p + 3.0 * sigma)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<10} {:>10}", "class", "accuracy");
        for (c, acc) in &self.per_class_accuracy {
            let _ = writeln!(s, "{:<10} {:>9.1}%", c, 100.0 * acc);
        }
        let _ = writeln!(
            s,
            "{:<10} {:>9.1}%",
            "overall",
            100.0 * self.overall_accuracy
        );
        let _ = writeln!(s, "rejected epochs: {:.1}%", 100.0 * self.rejected_fraction);
        let _ = writeln!(s, "\nconfusion (rows true, columns predicted)");
        let _ = write!(s, "{:>6}", "");
        for c in &self.class_labels {
            let _ = write!(s, "{c:>6}");
        }
        let _ = writeln!(s);
        for (c, row) in self.class_labels.iter().zip(&self.confusion) {
            let _ = write!(s, "{c:>6}");
            for v in row {
                let _ = write!(s, "{v:>6}");
            }
            let _ = writeln!(s);
        }
        let _ = writeln!(
            s,
            "\n{:<6} {:>6} {:>6} {:>9} {:>8}",
            "fold", "train", "test", "accuracy", "in-band"
        );
        for f in &self.per_fold {
            let _ = writeln!(
                s,
                "{:<6} {:>6} {:>6} {:>8.1}% {:>7.1}%",
                f.fold,
                f.n_train,
                f.n_test,
                100.0 * f.accuracy,
                100.0 * f.in_band_fraction
            );
        }
        s
    }

    pub fn confusion_csv(&self) -> String {
        let mut s = String::from("true\\predicted");
        for c in &self.class_labels {
            let _ = write!(s, ",{c}");
        }
        s.push('\n');
        for (c, row) in self.class_labels.iter().zip(&self.confusion) {
            let _ = write!(s, "{c}");
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

/// Accuracy per electrode count, one line per subset size.
pub fn subset_table(reports: &BTreeMap<usize, EvalReport>) -> String {
    let mut s = format!("{:<12} {:>10}\n", "electrodes", "accuracy");
    for (n, r) in reports {
        let _ = writeln!(s, "{:<12} {:>9.1}%", n, 100.0 * r.overall_accuracy);
    }
    s
}

/// Gnuplot data: `electrodes accuracy`.
pub fn accuracy_curve_dat(reports: &BTreeMap<usize, EvalReport>) -> String {
    let mut s = String::from("# electrodes accuracy\n");
    for (n, r) in reports {
        let _ = writeln!(s, "{n} {}", r.overall_accuracy);
    }
    s
}

/// Gnuplot data for ERPs: one block per class (blank-line separated), columns
/// `time_s` then one per channel.
pub fn erp_dat(erps: &[(u32, Epoch)], channel_labels: &[String]) -> String {
    let mut s = String::new();
    for (class, erp) in erps {
        let _ = writeln!(s, "# class {class}\n# time_s {}", channel_labels.join(" "));
        for i in 0..erp.n_samples() {
            let _ = write!(s, "{}", i as f64 / erp.sample_rate_hz - erp.pre_stimulus_s);
            for ch in &erp.samples {
                let _ = write!(s, " {}", ch[i]);
            }
            s.push('\n');
        }
        s.push_str("\n\n");
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
