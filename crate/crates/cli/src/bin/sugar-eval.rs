//! Runs a multi-seed experiment, evaluates checkpoints, or renders report
//! tables.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use serde::Serialize;
use sugar::harness::{metrics_table, run_experiment, ExperimentConfig, ExperimentReport};
use sugar::trainer::checkpoint::{list_checkpoints, load_checkpoint};
use sugar::trainer::{validate, Metric};
use sugar_cli::{parse_enum, read_config, read_data, run, write_json, CliError, CliResult};

#[derive(Parser, Debug)]
#[command(
    name = "sugar-eval",
    about = "Evaluate: run an experiment config, score checkpoints, or tabulate reports"
)]
struct Args {
    /// Experiment config JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replace the config's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Where to write the experiment report (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print a table built from these existing report files.
    #[arg(long, num_args = 1..)]
    table: Vec<PathBuf>,
    /// Score every checkpoint in this directory instead.
    #[arg(long)]
    checkpoints: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// train | val | test
    #[arg(long, default_value = "test")]
    split: String,
    /// Edge budget for each model's own subgraph; omit for the full graph.
    #[arg(long)]
    ratio: Option<f64>,
    /// accuracy | roc_auc
    #[arg(long, value_parser = parse_enum::<Metric>, default_value = "accuracy")]
    metric: Metric,
}

#[derive(Serialize)]
struct CheckpointScore {
    checkpoint: String,
    metric: f64,
}

fn score_checkpoints(args: &Args, dir: &Path) -> CliResult<()> {
    let data_dir = args
        .data
        .as_ref()
        .ok_or_else(|| CliError::Config("--checkpoints requires --data".into()))?;
    let data = read_data(data_dir)?;
    let split = match args.split.as_str() {
        "train" => &data.train,
        "val" => &data.val,
        "test" => &data.test,
        other => return Err(CliError::Config(format!("unknown split `{other}`"))),
    };
    let mut scores = Vec::new();
    for path in list_checkpoints(dir)? {
        let model = load_checkpoint(&path)?;
        scores.push(CheckpointScore {
            checkpoint: path.display().to_string(),
            metric: validate(&model, split, args.ratio, args.metric)?,
        });
    }
    match &args.out {
        Some(out) => write_json(out, &scores),
        None => {
            println!(
                "{}",
                serde_json::to_string_pretty(&scores).map_err(sugar::SugarError::from)?
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    run("sugar-eval", || {
        if !args.table.is_empty() {
            let reports = args
                .table
                .iter()
                .map(|p| read_config::<ExperimentReport>(p))
                .collect::<CliResult<Vec<_>>>()?;
            print!("{}", metrics_table(&reports));
            return Ok(());
        }
        if let Some(dir) = &args.checkpoints {
            return score_checkpoints(&args, dir);
        }
        let path = args
            .config
            .as_ref()
            .ok_or_else(|| CliError::Config("need --config, --checkpoints or --table".into()))?;
        let mut config: ExperimentConfig = read_config(path)?;
        if let Some(s) = args.seed {
            config.seeds = vec![s];
        }
        if let Some(out) = &args.out {
            config.report = Some(out.clone());
        }
        let report = run_experiment(&config)?;
        print!("{}", metrics_table(std::slice::from_ref(&report)));
        Ok(())
    })
}
