//! `spike-reservoir`: command-line driver for the spiking-reservoir EEG pipeline.
//!
//! Results go to stdout, diagnostics to stderr. Failures print one JSON object
//! on stderr and exit with 2 (usage or configuration), 3 (missing input file)
//! or 1 (anything else). Every successful run writes `<command>.manifest.json`
//! into the output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use spike_reservoir::config::Config;
use spike_reservoir::datagen::generate;
use spike_reservoir::experiment::{
    accuracy_curve_dat, cross_validate, encode_epochs, erp_dat, evaluate_subsets, initial_topology,
    subset_table, write_text,
};
use spike_reservoir::raster::write_raster_set;
use spike_reservoir::reservoir::io::{save_topology, weights_path};
use spike_reservoir::reservoir::simulate_regulated;
use spike_reservoir::signal::io::{
    read_epochs, read_events_csv, read_recording_csv, write_epochs, EpochSet,
};
use spike_reservoir::signal::{compute_erp, preprocess};
use spike_reservoir::util::sha256_hex;

#[derive(Parser)]
#[command(
    name = "spike-reservoir",
    version,
    about = "Spiking-reservoir classification of evoked EEG epochs"
)]
struct Cli {
    /// JSON configuration file (sections `synth`, `pipeline`, `electrode_counts`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the corpus and pipeline seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labelled corpus (recording.csv, events.csv).
    Synth,
    /// Resample, band-pass, epoch, reject artifacts and re-reference.
    Preprocess {
        /// Recording CSV (one column per channel, `time_s` first)
        #[arg(long)]
        recording: PathBuf,
        /// Stimulus events CSV (`onset_s,class_id`)
        #[arg(long)]
        events: PathBuf,
    },
    /// BSA-encode every epoch into a packed raster set.
    Encode {
        /// Epoch set written by `preprocess`
        #[arg(long)]
        epochs: PathBuf,
    },
    /// Adapt a fresh reservoir on the encoded epochs and save the frozen topology.
    Adapt {
        /// Epoch set written by `preprocess`
        #[arg(long)]
        epochs: PathBuf,
    },
    /// Cross-validated classification report.
    Evaluate {
        /// Epoch set written by `preprocess`
        #[arg(long)]
        epochs: PathBuf,
    },
    /// Electrode ranking and accuracy versus electrode count.
    Electrodes {
        /// Epoch set written by `preprocess`
        #[arg(long)]
        epochs: PathBuf,
    },
    /// Per-class average evoked responses as gnuplot data.
    Erp {
        /// Epoch set written by `preprocess`
        #[arg(long)]
        epochs: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Preprocess { .. } => "preprocess",
            Command::Encode { .. } => "encode",
            Command::Adapt { .. } => "adapt",
            Command::Evaluate { .. } => "evaluate",
            Command::Electrodes { .. } => "electrodes",
            Command::Erp { .. } => "erp",
        }
    }

    fn inputs(&self) -> Vec<&Path> {
        match self {
            Command::Synth => vec![],
            Command::Preprocess { recording, events } => vec![recording, events],
            Command::Encode { epochs }
            | Command::Adapt { epochs }
            | Command::Evaluate { epochs }
            | Command::Electrodes { epochs }
            | Command::Erp { epochs } => vec![epochs],
        }
    }
}

enum Failure {
    Usage(String),
    Config { path: String, message: String },
    MissingFile(PathBuf),
    Runtime(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Config { .. } => 2,
            Failure::MissingFile(_) => 3,
            Failure::Runtime(_) => 1,
        }
    }

    fn to_json(&self) -> serde_json::Value {
        match self {
            Failure::Usage(m) => json!({"error": "usage", "message": m}),
            Failure::Config { path, message } => {
                json!({"error": "config", "path": path, "message": message})
            }
            Failure::MissingFile(p) => json!({"error": "missing_file", "path": p}),
            Failure::Runtime(m) => json!({"error": "runtime", "message": m}),
        }
    }
}

impl From<spike_reservoir::Error> for Failure {
    fn from(e: spike_reservoir::Error) -> Self {
        use spike_reservoir::Error;
        match e {
            Error::Io { path, source } if source.kind() == std::io::ErrorKind::NotFound => {
                Failure::MissingFile(path)
            }
            Error::InvalidParameter { name, reason } => Failure::Config {
                path: name.to_string(),
                message: reason,
            },
            other => Failure::Runtime(other.to_string()),
        }
    }
}

#[derive(Serialize)]
struct InputFile {
    path: PathBuf,
    sha256: String,
}

/// Everything needed to reproduce a run.
#[derive(Serialize)]
struct RunManifest {
    command: String,
    config_digest: String,
    seed: u64,
    versions: BTreeMap<&'static str, &'static str>,
    config: Config,
    inputs: Vec<InputFile>,
    outputs: Vec<PathBuf>,
    timings_s: BTreeMap<String, f64>,
}

struct Run {
    out: PathBuf,
    outputs: Vec<PathBuf>,
    timings: BTreeMap<String, f64>,
}

impl Run {
    fn stage<T>(
        &mut self,
        name: &str,
        f: impl FnOnce() -> Result<T, Failure>,
    ) -> Result<T, Failure> {
        let t = Instant::now();
        let value = f()?;
        let secs = t.elapsed().as_secs_f64();
        log::info!("{name}: {secs:.2}s");
        self.timings.insert(name.to_string(), secs);
        Ok(value)
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        self.outputs.push(p.clone());
        p
    }

    fn write(&mut self, name: &str, text: &str) -> Result<(), Failure> {
        let p = self.path(name);
        write_text(&p, text).map_err(Failure::from)
    }
}

fn load_config(path: Option<&Path>) -> Result<Config, Failure> {
    let Some(path) = path else {
        return Ok(Config::default());
    };
    let text =
        std::fs::read_to_string(path).map_err(|_| Failure::MissingFile(path.to_path_buf()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| Failure::Config {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

fn load_epochs(path: &Path) -> Result<EpochSet, Failure> {
    Ok(read_epochs(path)?)
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn emit(text: &str) -> Result<(), Failure> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
            Err(Failure::Runtime(format!("stdout: {e}")))
        }
        _ => Ok(()),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    emit(&format!("{text}\n"))
}

fn execute(cli: &Cli, cfg: &Config, run: &mut Run) -> Result<(), Failure> {
    let pipeline = &cfg.pipeline;
    match &cli.command {
        Command::Synth => {
            let corpus = run.stage("generate", || Ok(generate(&cfg.synth)?))?;
            let out = run.out.clone();
            run.stage("write", || Ok(corpus.write(&out)?))?;
            for name in [
                "recording.csv",
                "events.csv",
                "synth_config.json",
                "artifacts.json",
            ] {
                run.path(name);
            }
            print_json(&json!({
                "trials": corpus.events.len(),
                "channels": corpus.recording.n_channels(),
                "samples": corpus.recording.n_samples(),
                "noise_rms_uv": corpus.noise_rms_uv,
                "artifact_trials": corpus.artifacts.len(),
            }))
        }
        Command::Preprocess { recording, events } => {
            let rec = run.stage("read", || Ok(read_recording_csv(recording)?))?;
            let events = read_events_csv(events)?;
            let pre = run.stage("preprocess", || {
                Ok(preprocess(rec, &events, &pipeline.preprocess)?)
            })?;
            let set = EpochSet {
                epochs: pre.epochs,
                channel_labels: pre.channel_labels,
                n_rejected: pre.rejected.len(),
            };
            let path = run.path("epochs.bin");
            write_epochs(&set, &path)?;
            let summary = json!({
                "epochs": set.epochs.len(),
                "rejected": pre.rejected,
                "rejected_fraction": set.rejected_fraction(),
                "skipped_events": pre.summary.skipped.len(),
                "history": pre.history,
            });
            run.write("preprocess.json", &summary.to_string())?;
            print_json(&summary)
        }
        Command::Encode { epochs } => {
            let set = load_epochs(epochs)?;
            let rasters = run.stage("encode", || Ok(encode_epochs(&set, &pipeline.bsa)?))?;
            let labels: Vec<u32> = set.epochs.iter().map(|e| e.class_id).collect();
            let path = run.path("rasters.bin");
            write_raster_set(&path, &rasters, &labels)?;
            let density =
                rasters.iter().map(|r| r.density()).sum::<f64>() / rasters.len().max(1) as f64;
            print_json(&json!({"rasters": rasters.len(), "mean_density": density}))
        }
        Command::Adapt { epochs } => {
            let set = load_epochs(epochs)?;
            let rasters = run.stage("encode", || Ok(encode_epochs(&set, &pipeline.bsa)?))?;
            let n_inputs = set.channel_labels.len();
            let mut topology = initial_topology(pipeline, n_inputs)?;
            let limit = pipeline.adaptation.max_trials.min(rasters.len());
            let mut window_rates = Vec::new();
            let mut violations = 0;
            run.stage("adapt", || {
                for r in &rasters[..limit] {
                    let out =
                        simulate_regulated(&mut topology, &pipeline.lif, &pipeline.regulation, r)?;
                    window_rates.extend(out.window_rates);
                    violations += out.weight_violations;
                }
                Ok(())
            })?;
            let path = run.path("topology.json");
            save_topology(&topology, &path)?;
            run.outputs.push(weights_path(&path));
            let summary = json!({
                "adaptation_trials": limit,
                "window_rates": window_rates,
                "weight_violations": violations,
            });
            run.write("adaptation.json", &summary.to_string())?;
            print_json(&json!({
                "adaptation_trials": limit,
                "first_window_rate": window_rates.first(),
                "last_window_rate": window_rates.last(),
                "weight_violations": violations,
            }))
        }
        Command::Evaluate { epochs } => {
            let set = load_epochs(epochs)?;
            let report = run.stage("cross_validate", || Ok(cross_validate(&set, pipeline)?))?;
            let json = report.to_json()?;
            let table = report.render_table();
            run.write("report.json", &format!("{json}\n"))?;
            run.write("report.txt", &table)?;
            run.write("confusion.csv", &report.confusion_csv())?;
            emit(&format!("{json}\n{table}"))
        }
        Command::Electrodes { epochs } => {
            let set = load_epochs(epochs)?;
            let mut sizes: Vec<usize> = cfg
                .electrode_counts
                .iter()
                .copied()
                .filter(|&n| n < set.channel_labels.len())
                .collect();
            sizes.push(set.channel_labels.len());
            sizes.dedup();
            let study = run.stage("subsets", || Ok(evaluate_subsets(&set, pipeline, &sizes)?))?;
            let json = serde_json::to_string_pretty(&study)
                .map_err(|e| Failure::Runtime(e.to_string()))?;
            let table = subset_table(&study.reports);
            run.write("electrodes.json", &format!("{json}\n"))?;
            run.write("electrodes.txt", &table)?;
            run.write(
                "accuracy_vs_electrodes.dat",
                &accuracy_curve_dat(&study.reports),
            )?;
            let ranking: Vec<_> = study
                .ranking
                .iter()
                .map(|&(c, acc)| json!({"channel": set.channel_labels[c], "index": c, "accuracy": acc}))
                .collect();
            print_json(&json!({"ranking": ranking}))?;
            emit(&table)
        }
        Command::Erp { epochs } => {
            let set = load_epochs(epochs)?;
            let mut classes: Vec<u32> = set.epochs.iter().map(|e| e.class_id).collect();
            classes.sort_unstable();
            classes.dedup();
            let erps = classes
                .iter()
                .map(|&c| {
                    let members: Vec<_> = set
                        .epochs
                        .iter()
                        .filter(|e| e.class_id == c)
                        .cloned()
                        .collect();
                    Ok((c, compute_erp(&members)?))
                })
                .collect::<Result<Vec<_>, Failure>>()?;
            run.write("erp.dat", &erp_dat(&erps, &set.channel_labels))?;
            print_json(&json!({"classes": classes, "channels": set.channel_labels.len()}))
        }
    }
}

fn run_cli(cli: Cli) -> Result<(), Failure> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    cfg.validate()?;
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Failure::Config {
                path: "--jobs".into(),
                message: "must be >= 1".into(),
            });
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    let mut inputs = Vec::new();
    for path in cli.command.inputs() {
        let bytes = std::fs::read(path).map_err(|_| Failure::MissingFile(path.to_path_buf()))?;
        inputs.push(InputFile {
            path: path.to_path_buf(),
            sha256: sha256_hex(&bytes),
        });
    }
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", cli.out.display())))?;

    let mut run = Run {
        out: cli.out.clone(),
        outputs: Vec::new(),
        timings: BTreeMap::new(),
    };
    execute(&cli, &cfg, &mut run)?;

    let manifest = RunManifest {
        command: cli.command.name().to_string(),
        config_digest: cfg.digest()?,
        seed: cfg.pipeline.seed,
        versions: BTreeMap::from([
            ("spike-reservoir", spike_reservoir::VERSION),
            ("spike-reservoir-cli", env!("CARGO_PKG_VERSION")),
        ]),
        config: cfg,
        inputs,
        outputs: run.outputs,
        timings_s: run.timings,
    };
    let path = cli
        .out
        .join(format!("{}.manifest.json", cli.command.name()));
    let text =
        serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Runtime(e.to_string()))?;
    write_text(&path, &text)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SPIKE_RESERVOIR_LOG", "warn"))
        .init();
    let result = match Cli::try_parse() {
        Ok(cli) => run_cli(cli),
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = emit(&e.render().to_string());
            return ExitCode::SUCCESS;
        }
        Err(e) => Err(Failure::Usage(e.render().to_string())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.exit_code())
        }
    }
}
