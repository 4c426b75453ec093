//! Frame-rate state readout and the ridge-regression classifier.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::util::sha256_hex;
use crate::{Error, Result, SpikeRaster};

/// Per-frame mean firing rates, `frames × neurons`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub rates: Vec<f64>,
    pub n_frames: usize,
    pub n_neurons: usize,
    pub frame_ms: f64,
}

impl StateVector {
    pub fn frame(&self, f: usize) -> &[f64] {
        &self.rates[f * self.n_neurons..(f + 1) * self.n_neurons]
    }
}

/// Mean rate of every unit over consecutive non-overlapping frames. A trailing
/// partial frame is dropped.
pub fn frame_rates(raster: &SpikeRaster, frame_ms: f64) -> Result<StateVector> {
    let ticks_f = frame_ms / 1000.0 * raster.tick_rate_hz();
    if !(ticks_f.is_finite() && ticks_f >= 1.0 - 1e-9) {
        return Err(Error::param(
            "frame_ms",
            format!("{frame_ms} ms is shorter than one tick"),
        ));
    }
    let frame_ticks = ticks_f.round() as usize;
    let n_frames = raster.n_ticks() / frame_ticks;
    if n_frames == 0 {
        return Err(Error::ShapeMismatch(format!(
            "raster of {} ticks is shorter than one {frame_ticks}-tick frame",
            raster.n_ticks()
        )));
    }
    let n = raster.n_units();
    let mut rates = vec![0.0; n_frames * n];
    for u in 0..n {
        let row = raster.row(u);
        for f in 0..n_frames {
            let count: u32 = row[f * frame_ticks..(f + 1) * frame_ticks]
                .iter()
                .map(|&s| s as u32)
                .sum();
            rates[f * n + u] = count as f64 / frame_ticks as f64;
        }
    }
    Ok(StateVector {
        rates,
        n_frames,
        n_neurons: n,
        frame_ms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMode {
    /// All frames side by side: `frames × neurons` features.
    #[default]
    Concat,
    /// Rates averaged over frames: `neurons` features.
    MeanOverFrames,
}

/// How a trial's frames become one decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DecisionMode {
    /// One feature vector per trial.
    #[default]
    PerTrial,
    /// Every frame is classified on its own; the majority label wins, ties go
    /// to the lowest class id.
    FrameVote,
}

pub fn featurize(sv: &StateVector, mode: FeatureMode) -> Vec<f64> {
    match mode {
        FeatureMode::Concat => sv.rates.clone(),
        FeatureMode::MeanOverFrames => {
            let mut mean = vec![0.0; sv.n_neurons];
            for f in 0..sv.n_frames {
                for (m, r) in mean.iter_mut().zip(sv.frame(f)) {
                    *m += r;
                }
            }
            mean.iter_mut().for_each(|m| *m /= sv.n_frames as f64);
            mean
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadoutConfig {
    pub frame_ms: f64,
    pub features: FeatureMode,
    pub decision: DecisionMode,
    pub ridge_lambda: f64,
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        ReadoutConfig {
            frame_ms: 200.0,
            features: FeatureMode::Concat,
            decision: DecisionMode::PerTrial,
            ridge_lambda: 1e-3,
        }
    }
}

impl ReadoutConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_ms > 0.0 && self.frame_ms.is_finite()) {
            return Err(Error::param("frame_ms", "must be positive"));
        }
        if !(self.ridge_lambda >= 0.0 && self.ridge_lambda.is_finite()) {
            return Err(Error::param("ridge_lambda", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Linear map from features to per-class scores, `scores = Wᵀx + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutModel {
    /// `feature_dim × n_classes`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub feature_dim: usize,
    pub ridge_lambda: f64,
    pub class_labels: Vec<u32>,
}

impl ReadoutModel {
    pub fn n_classes(&self) -> usize {
        self.class_labels.len()
    }

    pub fn weight(&self, feature: usize, class: usize) -> f64 {
        self.weights[feature * self.n_classes() + class]
    }

    pub fn scores(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.feature_dim {
            return Err(Error::ShapeMismatch(format!(
                "feature vector has {} entries, model expects {}",
                features.len(),
                self.feature_dim
            )));
        }
        let c = self.n_classes();
        let mut scores = self.bias.clone();
        for (row, &x) in self.weights.chunks_exact(c).zip(features) {
            if x != 0.0 {
                for (s, w) in scores.iter_mut().zip(row) {
                    *s += w * x;
                }
            }
        }
        Ok(scores)
    }
}

/// Index of the largest score; the first one wins a tie.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub fn classify(model: &ReadoutModel, features: &[f64]) -> Result<(u32, Vec<f64>)> {
    let scores = model.scores(features)?;
    Ok((model.class_labels[argmax(&scores)], scores))
}

pub fn classify_batch(model: &ReadoutModel, features: &[Vec<f64>]) -> Result<Vec<u32>> {
    features
        .par_iter()
        .map(|x| classify(model, x).map(|(c, _)| c))
        .collect()
}

/// Majority vote over per-frame decisions; ties go to the lowest class id.
pub fn classify_frames(model: &ReadoutModel, frames: &[Vec<f64>]) -> Result<u32> {
    let mut votes = vec![0usize; model.n_classes()];
    for f in frames {
        votes[argmax(&model.scores(f)?)] += 1;
    }
    let mut best = 0;
    for (i, &v) in votes.iter().enumerate() {
        if v > votes[best] {
            best = i;
        }
    }
    Ok(model.class_labels[best])
}

/// Ridge regression onto one-hot class targets with an unpenalized bias.
///
/// Centering the features and targets removes the bias from the penalized
/// problem; it is recovered as `ȳ − Wᵀx̄`. The smaller of the primal
/// (`d × d`) and dual (`n × n`) systems is solved, by Cholesky when it is well
/// conditioned and by SVD pseudo-inverse otherwise.
pub fn train_readout(
    features: &[Vec<f64>],
    labels: &[u32],
    ridge_lambda: f64,
) -> Result<ReadoutModel> {
    let n = features.len();
    if n == 0 {
        return Err(Error::Degenerate("no training examples".into()));
    }
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{n} feature rows but {} labels",
            labels.len()
        )));
    }
    if !(ridge_lambda >= 0.0 && ridge_lambda.is_finite()) {
        return Err(Error::param("ridge_lambda", "must be finite and >= 0"));
    }
    let d = features[0].len();
    if let Some(i) = features.iter().position(|r| r.len() != d) {
        return Err(Error::ShapeMismatch(format!(
            "feature row {i} has {} entries, expected {d}",
            features[i].len()
        )));
    }
    let mut class_labels: Vec<u32> = labels.to_vec();
    class_labels.sort_unstable();
    class_labels.dedup();
    if class_labels.len() < 2 {
        return Err(Error::Degenerate(
            "training labels contain a single class".into(),
        ));
    }
    let c = class_labels.len();

    let mut x = DMatrix::from_fn(n, d, |i, j| features[i][j]);
    let mut y = DMatrix::from_fn(n, c, |i, k| (class_labels[k] == labels[i]) as u8 as f64);
    let x_mean: DVector<f64> = DVector::from_fn(d, |j, _| x.column(j).mean());
    let y_mean: DVector<f64> = DVector::from_fn(c, |k, _| y.column(k).mean());
    for j in 0..d {
        x.column_mut(j).add_scalar_mut(-x_mean[j]);
    }
    for k in 0..c {
        y.column_mut(k).add_scalar_mut(-y_mean[k]);
    }

    let w = if d <= n {
        let mut gram = x.tr_mul(&x);
        gram.fill_diagonal_add(ridge_lambda);
        solve_spd(gram, x.tr_mul(&y)).unwrap_or_else(|| pinv_solve(&x, &y))
    } else {
        let mut gram = &x * x.transpose();
        gram.fill_diagonal_add(ridge_lambda);
        match solve_spd(gram, y.clone()) {
            Some(alpha) => x.tr_mul(&alpha),
            None => pinv_solve(&x, &y),
        }
    };
    let bias = &y_mean - w.tr_mul(&x_mean);

    let mut weights = Vec::with_capacity(d * c);
    for j in 0..d {
        weights.extend(w.row(j).iter());
    }
    Ok(ReadoutModel {
        weights,
        bias: bias.iter().copied().collect(),
        feature_dim: d,
        ridge_lambda,
        class_labels,
    })
}

trait DiagonalAdd {
    fn fill_diagonal_add(&mut self, v: f64);
}

impl DiagonalAdd for DMatrix<f64> {
    fn fill_diagonal_add(&mut self, v: f64) {
        for i in 0..self.nrows().min(self.ncols()) {
            self[(i, i)] += v;
        }
    }
}

/// Cholesky solve, or `None` when the matrix is not numerically positive definite.
fn solve_spd(a: DMatrix<f64>, b: DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = a.cholesky()?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    // condition number of A is at least (hi/lo)^2
    if !(lo > 0.0) || (hi / lo).powi(2) > 1e12 {
        return None;
    }
    Some(chol.solve(&b))
}

/// Minimum-norm least squares `pinv(X)·Y`.
fn pinv_solve(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    log::debug!(
        "readout: falling back to pseudo-inverse ({}x{})",
        x.nrows(),
        x.ncols()
    );
    let svd = x.clone().svd(true, true);
    let tol = svd.singular_values.max() * x.nrows().max(x.ncols()) as f64 * f64::EPSILON;
    svd.solve(y, tol)
        .expect("both singular vector sets were requested")
}

const FORMAT: &str = "spike-reservoir-readout/1";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    feature_dim: usize,
    class_labels: Vec<u32>,
    ridge_lambda: f64,
    bias: Vec<f64>,
    weights_file: String,
    weights_sha256: String,
}

pub fn model_weights_path(json_path: &Path) -> PathBuf {
    json_path.with_extension("weights.bin")
}

/// Writes the model as JSON plus a little-endian `f64` weight file.
pub fn save_model(model: &ReadoutModel, json_path: &Path) -> Result<()> {
    let bin = model_weights_path(json_path);
    let blob: Vec<u8> = model.weights.iter().flat_map(|w| w.to_le_bytes()).collect();
    let file = ModelFile {
        format: FORMAT.into(),
        feature_dim: model.feature_dim,
        class_labels: model.class_labels.clone(),
        ridge_lambda: model.ridge_lambda,
        bias: model.bias.clone(),
        weights_file: bin
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        weights_sha256: sha256_hex(&blob),
    };
    std::fs::write(&bin, &blob).map_err(|e| Error::io(&bin, e))?;
    std::fs::write(json_path, serde_json::to_vec_pretty(&file)?)
        .map_err(|e| Error::io(json_path, e))
}

pub fn load_model(json_path: &Path) -> Result<ReadoutModel> {
    let text = std::fs::read(json_path).map_err(|e| Error::io(json_path, e))?;
    let file: ModelFile =
        serde_json::from_slice(&text).map_err(|e| Error::format(json_path, e.to_string()))?;
    if file.format != FORMAT {
        return Err(Error::format(
            json_path,
            format!("unsupported format {:?}", file.format),
        ));
    }
    let bin = json_path.with_file_name(&file.weights_file);
    let blob = std::fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    if sha256_hex(&blob) != file.weights_sha256 {
        return Err(Error::format(
            &bin,
            "weight file does not match its model JSON (sha256)",
        ));
    }
    let c = file.class_labels.len();
    if blob.len() != 8 * file.feature_dim * c || file.bias.len() != c || c < 2 {
        return Err(Error::format(
            json_path,
            "weight count does not match feature_dim x classes",
        ));
    }
    let weights = blob
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
        .collect();
    Ok(ReadoutModel {
        weights,
        bias: file.bias,
        feature_dim: file.feature_dim,
        ridge_lambda: file.ridge_lambda,
        class_labels: file.class_labels,
    })
}

/// CSV with a `label` column followed by `f0..f{d-1}`.
pub fn write_features_csv(path: &Path, features: &[Vec<f64>], labels: &[u32]) -> Result<()> {
    if features.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let d = features.first().map_or(0, Vec::len);
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        write!(w, "label")?;
        for j in 0..d {
            write!(w, ",f{j}")?;
        }
        writeln!(w)?;
        for (row, label) in features.iter().zip(labels) {
            write!(w, "{label}")?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}
