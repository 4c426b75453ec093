//! End-to-end accuracy at a given SNR: `cargo run --release --example calibrate -- <snr_db> <seed> [trials_per_class]`.

use std::time::Instant;

use spike_reservoir::datagen::{generate, SynthConfig};
use spike_reservoir::experiment::{
    cross_validate, cross_validate_band_power, encode_epochs, evaluate_subsets, subset_table,
    PipelineConfig,
};
use spike_reservoir::reservoir::{build_topology, neuron_rates};
use spike_reservoir::signal::io::EpochSet;
use spike_reservoir::signal::preprocess;

fn main() -> spike_reservoir::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let snr: f64 = args.first().map_or(-6.0, |s| s.parse().expect("snr_db"));
    let seed: u64 = args.get(1).map_or(0, |s| s.parse().expect("seed"));
    let trials: usize = args
        .get(2)
        .map_or(200, |s| s.parse().expect("trials per class"));

    let base: SynthConfig = match std::env::var("CAL_SYNTH") {
        Ok(json) => serde_json::from_str(&json).expect("CAL_SYNTH is a synth config"),
        Err(_) => SynthConfig::default(),
    };
    let synth = SynthConfig {
        snr_db: Some(snr),
        trials_per_class: trials,
        seed,
        ..base
    };
    let t = Instant::now();
    let corpus = generate(&synth)?;
    println!(
        "generate: {:.1}s, noise rms {:.2} uV",
        t.elapsed().as_secs_f64(),
        corpus.noise_rms_uv
    );

    let mut cfg: PipelineConfig = match std::env::var("CAL_CFG") {
        Ok(json) => serde_json::from_str(&json).expect("CAL_CFG is a pipeline config"),
        Err(_) => PipelineConfig::default(),
    };
    cfg.seed = seed;
    let t = Instant::now();
    let pre = preprocess(corpus.recording, &corpus.events, &cfg.preprocess)?;
    println!(
        "preprocess: {:.1}s, rejected {}",
        t.elapsed().as_secs_f64(),
        pre.rejected.len()
    );
    let set = EpochSet {
        epochs: pre.epochs,
        channel_labels: pre.channel_labels,
        n_rejected: pre.rejected.len(),
    };

    let t = Instant::now();
    let base = cross_validate_band_power(&set, &cfg)?;
    println!(
        "band-power baseline: {:.3} ({:.1}s)",
        base.overall_accuracy,
        t.elapsed().as_secs_f64()
    );

    if std::env::var("CAL_SUBSETS").is_ok() {
        let t = Instant::now();
        let sizes: Vec<usize> = std::env::var("CAL_SUBSETS")
            .unwrap()
            .split(',')
            .map(|s| s.parse().unwrap())
            .collect();
        let study = evaluate_subsets(&set, &cfg, &sizes)?;
        println!("subsets: {:.1}s", t.elapsed().as_secs_f64());
        println!(
            "ranking top 10: {:?}",
            study.ranking[..10].iter().map(|r| r.0).collect::<Vec<_>>()
        );
        print!("{}", subset_table(&study.reports));
        return Ok(());
    }

    if std::env::var("CAL_DIAG").is_ok() {
        let labels: Vec<u32> = set.epochs.iter().map(|e| e.class_id).collect();
        let frame_mean = |rows: Vec<Vec<f64>>| -> Vec<f64> {
            rows.iter()
                .flat_map(|r| {
                    r.chunks_exact(100)
                        .map(|w| w.iter().sum::<f64>() / 100.0)
                        .collect::<Vec<_>>()
                })
                .collect()
        };
        let raw: Vec<Vec<f64>> = set
            .epochs
            .iter()
            .map(|e| frame_mean(e.samples.clone()))
            .collect();
        let inputs = encode_epochs(&set, &cfg.bsa)?;
        let enc: Vec<Vec<f64>> = inputs
            .iter()
            .map(|r| {
                frame_mean(
                    (0..r.n_units())
                        .map(|u| r.row(u).iter().map(|&b| b as f64).collect())
                        .collect(),
                )
            })
            .collect();
        for (name, x) in [("raw frame means", raw), ("encoded frame rates", enc)] {
            println!(
                "{name}: {:.3}",
                ridge_cv(&x, &labels, cfg.readout.ridge_lambda)
            );
        }
        return Ok(());
    }

    if std::env::var("CAL_RATES").is_ok() {
        let inputs = encode_epochs(&set, &cfg.bsa)?;
        println!(
            "input density {:.3}",
            inputs.iter().map(|r| r.density()).sum::<f64>() / inputs.len() as f64
        );
        let topo = build_topology(&cfg.topology, inputs[0].n_units(), 1)?;
        let rates = neuron_rates(&topo, &cfg.lif, &inputs[..60])?;
        let inside = rates.iter().filter(|&&r| cfg.regulation.in_band(r)).count();
        let mean = rates.iter().sum::<f64>() / rates.len() as f64;
        println!(
            "frozen rates: mean {mean:.3}, in band {inside}/{}",
            rates.len()
        );
        return Ok(());
    }

    let t = Instant::now();
    let report = cross_validate(&set, &cfg)?;
    println!("reservoir: {:.1}s", t.elapsed().as_secs_f64());
    print!("{}", report.render_table());
    for f in &report.per_fold {
        println!(
            "fold {} adapt rate {:?} -> {:?}, violations {}",
            f.fold, f.adaptation_rate_first, f.adaptation_rate_last, f.weight_violations
        );
    }
    Ok(())
}

fn ridge_cv(x: &[Vec<f64>], labels: &[u32], lambda: f64) -> f64 {
    use spike_reservoir::experiment::FoldPlan;
    use spike_reservoir::readout::{classify, train_readout};
    let plan = FoldPlan::stratified(labels, 5, 0).unwrap();
    let mut correct = 0;
    for f in 0..5 {
        let tr = plan.train(f);
        let xs: Vec<Vec<f64>> = tr.iter().map(|&i| x[i].clone()).collect();
        let ys: Vec<u32> = tr.iter().map(|&i| labels[i]).collect();
        let m = train_readout(&xs, &ys, lambda).unwrap();
        correct += plan
            .test(f)
            .iter()
            .filter(|&&i| classify(&m, &x[i]).unwrap().0 == labels[i])
            .count();
    }
    correct as f64 / labels.len() as f64
}
