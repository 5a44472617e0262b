//! Trains the base models on a dataset directory.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use sugar::trainer::{train_sugar, write_outcome, TrainConfig};
use sugar_cli::{config_or_default, read_data, run, write_json, CliError};

#[derive(Parser, Debug)]
#[command(name = "sugar-train", about = "Train n invariant GNNs jointly")]
struct Args {
    /// Run config; mirrors the TrainConfig fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory with train/val/test.jsonl.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to the first entry of `seeds` in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    n_models: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    run("sugar-train", || {
        let mut config: TrainConfig = config_or_default(args.config.as_deref())?;
        if let Some(e) = args.epochs {
            config.epochs = e;
        }
        if let Some(n) = args.n_models {
            config.n_models = n;
        }
        let seed = match args.seed.or_else(|| config.seeds.first().copied()) {
            Some(s) => s,
            None => return Err(CliError::Config("no --seed and an empty `seeds` list".into())),
        };
        config.validate()?;
        let data = read_data(&args.data)?;
        let outcome = train_sugar(&config, &data, seed)?;
        let summary = write_outcome(&outcome, &config, &data, &args.out)?;
        write_json(&args.out.join("run.json"), &config)?;
        for m in &summary.models {
            log::info!(
                "model {}: best epoch {}, val {:.4}, test {:.4}",
                m.index,
                m.best_epoch,
                m.val_metric,
                m.test_metric
            );
        }
        Ok(())
    })
}
