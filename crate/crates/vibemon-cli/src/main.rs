//! vibemon: train a bearing-health model on the early life of a
//! run-to-failure vibration dataset, then monitor the full run for
//! degradation. Exit codes: 0 ok / no degradation, 2 sustained degradation
//! detected, 1 error.

mod config;
mod model;
mod pipeline;
mod report;

use clap::{Args, Parser, Subcommand};
use config::{parse_channel_map, PipelineConfig, SynthConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "vibemon",
    version,
    about = "Vibration-based bearing degradation detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the projection, sequence model, and healthy baseline
    Train(TrainArgs),
    /// Score every snapshot of a run against a trained model
    Monitor(MonitorArgs),
    /// Generate a synthetic run-to-failure dataset
    Synth(SynthArgs),
    /// Emit the k-vs-WCSS curve without training
    Elbow(ElbowArgs),
}

/// Every config key, mirrored as a flag; flags win over the file.
#[derive(Args)]
struct PipelineOverrides {
    /// pipeline configuration file (TOML); defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// dataset directory of timestamp-named snapshot files
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    bearing: Option<String>,
    /// channel map, e.g. "bearing2=3,4;bearing3=5,6"
    #[arg(long)]
    channels: Option<String>,
    #[arg(long)]
    sample_rate_hz: Option<f64>,
    #[arg(long)]
    window_len: Option<usize>,
    #[arg(long)]
    hop: Option<usize>,
    /// principal components kept per channel
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    center: Option<bool>,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    /// fixed HMM state count (skips the elbow)
    #[arg(long)]
    states: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    kmeans_max_iter: Option<usize>,
    #[arg(long)]
    hmm_tol: Option<f64>,
    #[arg(long)]
    hmm_max_iter: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    sustained: Option<usize>,
    #[arg(long)]
    train_first: Option<usize>,
    #[arg(long)]
    train_last: Option<usize>,
}

impl PipelineOverrides {
    fn resolve(&self) -> anyhow::Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = &self.dataset {
            c.dataset = Some(v.clone());
        }
        if let Some(v) = &self.bearing {
            c.bearing = Some(v.clone());
        }
        if let Some(v) = &self.channels {
            c.channel_map = parse_channel_map(v)?;
        }
        if let Some(v) = self.sample_rate_hz {
            c.sample_rate_hz = v;
        }
        if let Some(v) = self.window_len {
            c.window_len = v;
        }
        if let Some(v) = self.hop {
            c.hop = v;
        }
        if let Some(v) = self.p {
            c.p = v;
        }
        if let Some(v) = self.center {
            c.center = v;
        }
        if let Some(v) = self.k_min {
            c.k_min = v;
        }
        if let Some(v) = self.k_max {
            c.k_max = v;
        }
        if let Some(v) = self.states {
            c.states = Some(v);
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.restarts {
            c.restarts = v;
        }
        if let Some(v) = self.kmeans_max_iter {
            c.kmeans_max_iter = v;
        }
        if let Some(v) = self.hmm_tol {
            c.hmm_tol = v;
        }
        if let Some(v) = self.hmm_max_iter {
            c.hmm_max_iter = v;
        }
        if let Some(v) = self.threshold {
            c.threshold = v;
        }
        if let Some(v) = self.sustained {
            c.sustained = v;
        }
        if let Some(v) = self.train_first {
            c.train_first = Some(v);
        }
        if let Some(v) = self.train_last {
            c.train_last = Some(v);
        }
        Ok(c)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    overrides: PipelineOverrides,
    /// where to write the model
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    /// also write the k-vs-WCSS curve here
    #[arg(long)]
    elbow_csv: Option<PathBuf>,
}

#[derive(Args)]
struct MonitorArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// bearing to score; defaults to the one the model was trained on
    #[arg(long)]
    bearing: Option<String>,
    /// verdict CSV destination; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    sustained: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    /// run profile (TOML); defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// output directory for the snapshot files
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    snapshots: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    /// 1-based snapshot index where the fault starts
    #[arg(long)]
    onset: Option<usize>,
    #[arg(long)]
    growth: Option<f64>,
}

#[derive(Args)]
struct ElbowArgs {
    #[command(flatten)]
    overrides: PipelineOverrides,
    /// elbow CSV destination; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Train(args) => {
            let config = args.overrides.resolve()?;
            let artifacts = pipeline::train(&config)?;
            model::save_model(&args.out, &artifacts.model)?;
            match (&args.elbow_csv, &artifacts.elbow) {
                (Some(path), Some(curve)) => std::fs::write(path, report::elbow_csv(curve))?,
                (Some(_), None) => {
                    eprintln!("note: --elbow-csv ignored, state count was fixed")
                }
                _ => {}
            }
            print!("{}", report::train_summary(&artifacts));
            println!("model:               {}", args.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Monitor(args) => {
            let model = model::load_model(&args.model)?;
            let outcome = pipeline::monitor(
                &model,
                &args.dataset,
                args.bearing.as_deref(),
                args.threshold,
                args.sustained,
            )?;
            let csv = report::verdict_csv(&outcome.entries);
            match &args.out {
                Some(path) => {
                    std::fs::write(path, csv)?;
                    print!("{}", report::monitor_summary(&outcome));
                }
                None => {
                    print!("{csv}");
                    eprint!("{}", report::monitor_summary(&outcome));
                }
            }
            Ok(if outcome.onset.is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Synth(args) => {
            let mut config = match &args.config {
                Some(path) => SynthConfig::load(path)?,
                None => SynthConfig::default(),
            };
            if let Some(v) = args.seed {
                config.seed = v;
            }
            if let Some(v) = args.snapshots {
                config.n_snapshots = v;
            }
            if let Some(v) = args.samples {
                config.samples_per_snapshot = v;
            }
            if let Some(v) = args.channels {
                config.channels = v;
            }
            if let Some(v) = args.onset {
                config.fault_onset_index = v;
            }
            if let Some(v) = args.growth {
                config.amplitude_growth = v;
            }
            let profile = config.to_profile()?;
            let paths = vibemon_core::synth::write_run(&profile, &args.out)?;
            println!(
                "wrote {} snapshots to {} (fault onset at reading {})",
                paths.len(),
                args.out.display(),
                profile.fault_onset_index
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Elbow(args) => {
            let config = args.overrides.resolve()?;
            let curve = pipeline::elbow(&config)?;
            let csv = report::elbow_csv(&curve);
            match &args.out {
                Some(path) => std::fs::write(path, csv)?,
                None => print!("{csv}"),
            }
            eprintln!("selected k = {}", curve.selected_k);
            Ok(ExitCode::SUCCESS)
        }
    }
}
