//! `annoexp`: synthetic data, training, evaluation and ablation runs.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use annoexp_core::config::{DataSource, ExperimentConfig, load_config};
use annoexp_core::eval::{run_ablation, standard_grid};
use annoexp_core::predictor::load_checkpoint;
use annoexp_core::report::{RunDir, metric_text, write_ablation, write_experiment};
use annoexp_core::trainer::{AggregateReport, run_repeats};
use annoexp_core::{Error, evaluate};

#[derive(Parser, Debug)]
#[command(name = "annoexp", version, about = "Label-efficient training on precomputed embeddings")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset (features, annotations, split, schema).
    Synth(Common),
    /// Run one experiment and write reports and checkpoints.
    Train(Common),
    /// Score a checkpoint on the test rows of the configured dataset.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint directory (holding manifest.json and weights.bin).
        #[arg(long)]
        checkpoint: PathBuf,
        /// Print JSON instead of the aligned table.
        #[arg(long)]
        json: bool,
    },
    /// Run the standard ablation grid.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated total annotation budgets.
        #[arg(long, value_delimiter = ',', default_value = "0.10,0.01")]
        budgets: Vec<f64>,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, env = "ANNOEXP_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Failure> {
        let mut cfg = load_config(self.config.as_deref(), &self.overrides).map_err(Failure::usage)?;
        if let Some(dir) = &self.output_dir {
            cfg.output_dir = dir.clone();
        }
        Ok(cfg)
    }
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn usage(e: Error) -> Self {
        Self { code: 2, error: e.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<Error>() {
            Some(Error::Config { .. }) => 2,
            _ => 1,
        };
        Self { code, error }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            // core errors already embed their source in the message
            let mut msg = f.error.to_string();
            for cause in f.error.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Synth(common) => synth(&common.load()?),
        Command::Train(common) => train(&common.load()?),
        Command::Eval { common, checkpoint, json } => eval(&common.load()?, &checkpoint, json),
        Command::Ablate { common, budgets } => ablate(&common.load()?, &budgets),
    }
}

fn synth(cfg: &ExperimentConfig) -> Result<(), Failure> {
    if !matches!(cfg.data, DataSource::Synthetic(_)) {
        return Err(Failure::usage(Error::Config {
            key: "data_dir".into(),
            message: "synth needs a synthetic data source; remove data_dir/features keys".into(),
        }));
    }
    let ds = cfg.load_dataset()?;
    let dir = &cfg.output_dir;
    ds.write_dir(dir)?;
    let mut rd = RunDir::create(dir)?;
    rd.write("config.txt", cfg.to_text())?;
    for f in ["features.csv", "annotations.csv", "split.csv", "schema.txt"] {
        rd.track(f);
    }
    rd.finish("synth")?;
    let (train, test) = ds.split().counts();
    println!("wrote {} samples ({train} train, {test} test) to {}", ds.len(), dir.display());
    Ok(())
}

fn train(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let ds = cfg.load_dataset()?;
    log::info!("dataset: {} samples, dim {}, {} attributes", ds.len(), ds.dim(), ds.schema().len());
    let outcomes = run_repeats(&ds, &cfg.run, cfg.n_repeats, cfg.parallel_repeats)?;
    let agg = AggregateReport::from_runs(outcomes.iter().map(|o| o.report.clone()).collect());
    let dir = write_experiment(&cfg.output_dir, cfg, &ds, &outcomes, &agg)?;
    print!("{}", annoexp_core::report::aggregate_text(&agg));
    println!("\nwrote {}", dir.display());
    Ok(())
}

fn eval(cfg: &ExperimentConfig, checkpoint: &Path, json: bool) -> Result<(), Failure> {
    let ds = cfg.load_dataset()?;
    let pred = load_checkpoint(checkpoint, ds.schema())
        .with_context(|| format!("loading {}", checkpoint.display()))?;
    let report = evaluate(&pred, &ds, ds.test_rows())?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report).context("serialising report")?);
    } else {
        print!("{}", metric_text(&report));
    }
    Ok(())
}

fn ablate(cfg: &ExperimentConfig, budgets: &[f64]) -> Result<(), Failure> {
    if budgets.iter().any(|b| !(*b > 0.0 && *b <= 1.0)) {
        return Err(Failure { code: 2, error: anyhow::anyhow!("--budgets must lie in (0, 1]") });
    }
    let ds = cfg.load_dataset()?;
    let result = run_ablation(&ds, &cfg.run, &standard_grid(), budgets, cfg.n_repeats, cfg.parallel_repeats)?;
    let dir = write_ablation(&cfg.output_dir, cfg, &result)?;
    print!("{}", result.to_text());
    println!("\nwrote {}", dir.display());
    Ok(())
}
