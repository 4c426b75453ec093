//! Cross-validated evaluation of the full pipeline, electrode ranking and the
//! accuracy-versus-electrode-count study.
//!
//! Per fold, the reservoir is adapted on training trials only and then frozen;
//! every trial is run through the frozen reservoir, the readout is fitted on
//! the training trials and scored on the held-out ones.

mod folds;
mod report;

pub use folds::FoldPlan;
pub use report::{accuracy_curve_dat, erp_dat, subset_table, write_text, EvalReport, FoldMetrics};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{BsaConfig, BsaEncoder};
use crate::readout::{
    classify, classify_frames, featurize, frame_rates, train_readout, DecisionMode, ReadoutConfig,
    StateVector,
};
use crate::reservoir::{
    build_topology, simulate, simulate_regulated, LifParams, RegulationConfig, Topology,
    TopologyConfig,
};
use crate::signal::io::EpochSet;
use crate::signal::PreprocessConfig;
use crate::util::{canonical_digest, mix_seed, rng};
use crate::{Error, Result, SpikeRaster};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptationConfig {
    pub enabled: bool,
    /// Training trials streamed through the reservoir per fold, in seeded random order.
    pub max_trials: usize,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        AdaptationConfig {
            enabled: true,
            max_trials: 100,
        }
    }
}

/// The cheaper pipeline used to score single channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankingConfig {
    pub grid_dims: [usize; 3],
    pub input_fraction: f64,
    pub n_folds: usize,
    pub adapt: bool,
}

impl Default for RankingConfig {
    fn default() -> Self {
        RankingConfig {
            grid_dims: [4, 4, 4],
            input_fraction: 0.25,
            n_folds: 3,
            adapt: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub bsa: BsaConfig,
    pub topology: TopologyConfig,
    pub lif: LifParams,
    pub regulation: RegulationConfig,
    pub adaptation: AdaptationConfig,
    pub readout: ReadoutConfig,
    pub ranking: RankingConfig,
    pub n_folds: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            preprocess: PreprocessConfig::default(),
            bsa: BsaConfig::default(),
            topology: TopologyConfig::default(),
            lif: LifParams::default(),
            regulation: RegulationConfig::default(),
            adaptation: AdaptationConfig::default(),
            readout: ReadoutConfig::default(),
            ranking: RankingConfig::default(),
            n_folds: 5,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        self.bsa.validate()?;
        self.topology.validate()?;
        self.lif.validate()?;
        self.regulation.validate()?;
        self.readout.validate()?;
        if self.n_folds < 2 {
            return Err(Error::param("n_folds", "must be >= 2"));
        }
        if self.ranking.n_folds < 2 {
            return Err(Error::param("ranking.n_folds", "must be >= 2"));
        }
        if self.adaptation.enabled && self.adaptation.max_trials == 0 {
            return Err(Error::param(
                "adaptation.max_trials",
                "must be >= 1 when adaptation is enabled",
            ));
        }
        if (self.lif.tick_rate_hz() - self.preprocess.target_hz).abs() > 1e-9 {
            return Err(Error::param(
                "lif.dt_ms",
                format!(
                    "one tick must equal one sample at {} Hz",
                    self.preprocess.target_hz
                ),
            ));
        }
        Ok(())
    }

    pub fn digest(&self) -> Result<String> {
        canonical_digest(self)
    }

    fn reduced_for_ranking(&self) -> PipelineConfig {
        let mut cfg = self.clone();
        cfg.topology.grid_dims = self.ranking.grid_dims;
        cfg.topology.input_fraction = self.ranking.input_fraction;
        cfg.adaptation.enabled = self.ranking.adapt;
        cfg.n_folds = self.ranking.n_folds;
        cfg
    }
}

const STREAM_TOPOLOGY: u64 = 21;
const STREAM_ADAPT_ORDER: u64 = 100;
const STREAM_SHUFFLE: u64 = 22;

/// The unadapted reservoir for `n_inputs` input channels, seeded from `cfg.seed`.
pub fn initial_topology(cfg: &PipelineConfig, n_inputs: usize) -> Result<Topology> {
    build_topology(&cfg.topology, n_inputs, mix_seed(cfg.seed, STREAM_TOPOLOGY))
}

/// BSA-encodes every epoch.
pub fn encode_epochs(set: &EpochSet, bsa: &BsaConfig) -> Result<Vec<SpikeRaster>> {
    let encoder = BsaEncoder::new(bsa)?;
    set.epochs
        .par_iter()
        .map(|e| encoder.encode_epoch(e))
        .collect()
}

/// Frame-rate states of `inputs` through a frozen reservoir.
pub fn reservoir_states(
    topology: &Topology,
    lif: &LifParams,
    inputs: &[SpikeRaster],
    frame_ms: f64,
) -> Result<Vec<StateVector>> {
    inputs
        .par_iter()
        .map(|r| frame_rates(&simulate(topology, lif, r)?, frame_ms))
        .collect()
}

/// A copy of `set` with class labels permuted by a seeded shuffle.
pub fn shuffle_labels(set: &EpochSet, seed: u64) -> EpochSet {
    let mut labels: Vec<u32> = set.epochs.iter().map(|e| e.class_id).collect();
    labels.shuffle(&mut rng(seed, STREAM_SHUFFLE));
    let mut out = set.clone();
    for (e, l) in out.epochs.iter_mut().zip(labels) {
        e.class_id = l;
    }
    out
}

pub fn cross_validate(set: &EpochSet, cfg: &PipelineConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let inputs = encode_epochs(set, &cfg.bsa)?;
    let channels = (0..set.channel_labels.len()).collect();
    cross_validate_encoded(
        &inputs,
        &labels_of(set),
        cfg,
        channels,
        set.rejected_fraction(),
    )
}

fn labels_of(set: &EpochSet) -> Vec<u32> {
    set.epochs.iter().map(|e| e.class_id).collect()
}

/// Cross-validation over already encoded inputs, one raster per trial.
pub fn cross_validate_encoded(
    inputs: &[SpikeRaster],
    labels: &[u32],
    cfg: &PipelineConfig,
    channels: Vec<usize>,
    rejected_fraction: f64,
) -> Result<EvalReport> {
    cfg.validate()?;
    if inputs.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} rasters but {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    let n_inputs = inputs.first().map_or(0, SpikeRaster::n_units);
    let plan = FoldPlan::stratified(labels, cfg.n_folds, cfg.seed)?;
    let base = initial_topology(cfg, n_inputs)?;
    // without adaptation every fold sees the same reservoir, so states are shared
    let shared = if cfg.adaptation.enabled {
        None
    } else {
        Some(reservoir_states(
            &base,
            &cfg.lif,
            inputs,
            cfg.readout.frame_ms,
        )?)
    };
    let outcomes: Vec<(FoldMetrics, Vec<(usize, u32)>)> = (0..cfg.n_folds)
        .into_par_iter()
        .map(|fold| run_fold(fold, &plan, inputs, labels, &base, cfg, shared.as_deref()))
        .collect::<Result<_>>()?;

    let mut predicted = vec![0u32; labels.len()];
    let mut per_fold = Vec::with_capacity(outcomes.len());
    for (metrics, preds) in outcomes {
        for (i, p) in preds {
            predicted[i] = p;
        }
        per_fold.push(metrics);
    }
    let mut class_labels = labels.to_vec();
    class_labels.sort_unstable();
    class_labels.dedup();
    Ok(EvalReport::assemble(
        class_labels,
        labels,
        &predicted,
        per_fold,
        channels,
        rejected_fraction,
        cfg.digest()?,
    ))
}

fn run_fold(
    fold: usize,
    plan: &FoldPlan,
    inputs: &[SpikeRaster],
    labels: &[u32],
    base: &Topology,
    cfg: &PipelineConfig,
    shared: Option<&[StateVector]>,
) -> Result<(FoldMetrics, Vec<(usize, u32)>)> {
    let train = plan.train(fold);
    let test = plan.test(fold);
    plan.check_training_provenance(fold, &train)?;

    let mut metrics = FoldMetrics {
        fold,
        n_train: train.len(),
        n_test: test.len(),
        accuracy: 0.0,
        adaptation_trials: 0,
        adaptation_rate_first: None,
        adaptation_rate_last: None,
        weight_violations: 0,
        in_band_fraction: 0.0,
    };

    let owned;
    let states: &[StateVector] = match shared {
        Some(s) => s,
        None => {
            let mut topology = base.clone();
            let mut order = train.clone();
            order.shuffle(&mut rng(cfg.seed, STREAM_ADAPT_ORDER + fold as u64));
            order.truncate(cfg.adaptation.max_trials);
            plan.check_training_provenance(fold, &order)?;
            let mut window_rates = Vec::new();
            for &i in &order {
                let run = simulate_regulated(&mut topology, &cfg.lif, &cfg.regulation, &inputs[i])?;
                window_rates.extend(run.window_rates);
                metrics.weight_violations += run.weight_violations;
            }
            metrics.adaptation_trials = order.len();
            metrics.adaptation_rate_first = window_rates.first().copied();
            metrics.adaptation_rate_last = window_rates.last().copied();
            owned = reservoir_states(&topology, &cfg.lif, inputs, cfg.readout.frame_ms)?;
            &owned
        }
    };
    metrics.in_band_fraction = in_band_fraction(
        &train.iter().map(|&i| &states[i]).collect::<Vec<_>>(),
        &cfg.regulation,
    );

    let preds = fit_and_predict(states, labels, &train, &test, &cfg.readout)?;
    let correct = preds.iter().filter(|(i, p)| labels[*i] == *p).count();
    metrics.accuracy = correct as f64 / test.len() as f64;
    Ok((metrics, preds))
}

/// Share of neurons whose mean rate across `states` lies in the regulation band.
pub fn in_band_fraction(states: &[&StateVector], reg: &RegulationConfig) -> f64 {
    let Some(first) = states.first() else {
        return 0.0;
    };
    let n = first.n_neurons;
    let mut sum = vec![0.0; n];
    let mut frames = 0usize;
    for sv in states {
        for f in 0..sv.n_frames {
            for (s, r) in sum.iter_mut().zip(sv.frame(f)) {
                *s += r;
            }
        }
        frames += sv.n_frames;
    }
    let inside = sum
        .iter()
        .filter(|&&s| reg.in_band(s / frames as f64))
        .count();
    inside as f64 / n as f64
}

fn fit_and_predict(
    states: &[StateVector],
    labels: &[u32],
    train: &[usize],
    test: &[usize],
    readout: &ReadoutConfig,
) -> Result<Vec<(usize, u32)>> {
    match readout.decision {
        DecisionMode::PerTrial => {
            let x: Vec<Vec<f64>> = train
                .iter()
                .map(|&i| featurize(&states[i], readout.features))
                .collect();
            let y: Vec<u32> = train.iter().map(|&i| labels[i]).collect();
            let model = train_readout(&x, &y, readout.ridge_lambda)?;
            test.par_iter()
                .map(|&i| {
                    Ok((
                        i,
                        classify(&model, &featurize(&states[i], readout.features))?.0,
                    ))
                })
                .collect()
        }
        DecisionMode::FrameVote => {
            let mut x = Vec::new();
            let mut y = Vec::new();
            for &i in train {
                for f in 0..states[i].n_frames {
                    x.push(states[i].frame(f).to_vec());
                    y.push(labels[i]);
                }
            }
            let model = train_readout(&x, &y, readout.ridge_lambda)?;
            test.par_iter()
                .map(|&i| {
                    let frames: Vec<Vec<f64>> = (0..states[i].n_frames)
                        .map(|f| states[i].frame(f).to_vec())
                        .collect();
                    Ok((i, classify_frames(&model, &frames)?))
                })
                .collect()
        }
    }
}

/// Channels ordered by single-channel cross-validated accuracy under the
/// reduced ranking pipeline, best first; ties go to the lower index.
pub fn rank_electrodes(set: &EpochSet, cfg: &PipelineConfig) -> Result<Vec<(usize, f64)>> {
    cfg.validate()?;
    let inputs = encode_epochs(set, &cfg.bsa)?;
    rank_encoded(&inputs, &labels_of(set), cfg)
}

fn rank_encoded(
    inputs: &[SpikeRaster],
    labels: &[u32],
    cfg: &PipelineConfig,
) -> Result<Vec<(usize, f64)>> {
    let n_channels = inputs.first().map_or(0, SpikeRaster::n_units);
    if n_channels == 0 {
        return Err(Error::Degenerate("no channels to rank".into()));
    }
    let reduced = cfg.reduced_for_ranking();
    let mut scores: Vec<(usize, f64)> = (0..n_channels)
        .into_par_iter()
        .map(|c| {
            let single: Vec<SpikeRaster> = inputs.iter().map(|r| r.select_units(&[c])).collect();
            let report = cross_validate_encoded(&single, labels, &reduced, vec![c], 0.0)?;
            Ok((c, report.overall_accuracy))
        })
        .collect::<Result<_>>()?;
    scores.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetStudy {
    /// `(channel, single-channel accuracy)`, best first.
    pub ranking: Vec<(usize, f64)>,
    pub reports: BTreeMap<usize, EvalReport>,
}

/// Cross-validates the top-`N` ranked channels for every requested `N`.
/// Selected channels keep their original (ascending) order.
pub fn evaluate_subsets(
    set: &EpochSet,
    cfg: &PipelineConfig,
    sizes: &[usize],
) -> Result<SubsetStudy> {
    cfg.validate()?;
    let n_channels = set.channel_labels.len();
    if let Some(&bad) = sizes.iter().find(|&&n| n == 0 || n > n_channels) {
        return Err(Error::param(
            "subset_sizes",
            format!("{bad} is outside 1..={n_channels}"),
        ));
    }
    let inputs = encode_epochs(set, &cfg.bsa)?;
    let labels = labels_of(set);
    let ranking = rank_encoded(&inputs, &labels, cfg)?;
    let mut reports = BTreeMap::new();
    for &n in sizes {
        let mut channels: Vec<usize> = ranking[..n].iter().map(|&(c, _)| c).collect();
        channels.sort_unstable();
        let sub: Vec<SpikeRaster> = if n == n_channels {
            inputs.clone()
        } else {
            inputs.iter().map(|r| r.select_units(&channels)).collect()
        };
        let report = cross_validate_encoded(&sub, &labels, cfg, channels, set.rejected_fraction())?;
        reports.insert(n, report);
    }
    Ok(SubsetStudy { ranking, reports })
}

/// Ridge readout on per-channel, per-frame log band power of the raw epochs,
/// cross-validated with the same folds as the reservoir pipeline.
pub fn cross_validate_band_power(set: &EpochSet, cfg: &PipelineConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let labels = labels_of(set);
    let plan = FoldPlan::stratified(&labels, cfg.n_folds, cfg.seed)?;
    let features: Vec<Vec<f64>> = set
        .epochs
        .iter()
        .map(|e| {
            let frame =
                ((cfg.readout.frame_ms / 1000.0 * e.sample_rate_hz).round() as usize).max(1);
            e.samples
                .iter()
                .flat_map(|ch| {
                    ch.chunks_exact(frame)
                        .map(|w| (w.iter().map(|v| v * v).sum::<f64>() / frame as f64 + 1e-12).ln())
                })
                .collect()
        })
        .collect();
    let mut predicted = vec![0u32; labels.len()];
    let mut per_fold = Vec::new();
    for fold in 0..cfg.n_folds {
        let (train, test) = (plan.train(fold), plan.test(fold));
        let x: Vec<Vec<f64>> = train.iter().map(|&i| features[i].clone()).collect();
        let y: Vec<u32> = train.iter().map(|&i| labels[i]).collect();
        let model = train_readout(&x, &y, cfg.readout.ridge_lambda)?;
        let mut correct = 0;
        for &i in &test {
            predicted[i] = classify(&model, &features[i])?.0;
            correct += (predicted[i] == labels[i]) as usize;
        }
        per_fold.push(FoldMetrics {
            fold,
            n_train: train.len(),
            n_test: test.len(),
            accuracy: correct as f64 / test.len() as f64,
            adaptation_trials: 0,
            adaptation_rate_first: None,
            adaptation_rate_last: None,
            weight_violations: 0,
            in_band_fraction: 0.0,
        });
    }
    let mut class_labels = labels.clone();
    class_labels.sort_unstable();
    class_labels.dedup();
    Ok(EvalReport::assemble(
        class_labels,
        &labels,
        &predicted,
        per_fold,
        (0..set.channel_labels.len()).collect(),
        set.rejected_fraction(),
        cfg.digest()?,
    ))
}
