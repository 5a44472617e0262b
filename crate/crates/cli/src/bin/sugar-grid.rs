//! Grid search over the contrastive weight, diversity weight and sampling
//! ratio, scored by the greedy-ensemble validation metric.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use rayon::prelude::*;
use serde::Serialize;
use sugar::aggregate::{select_greedy, AggregationConfig};
use sugar::trainer::{train_sugar, TrainConfig};
use sugar_cli::{config_or_default, read_data, run, write_json, CliError};

#[derive(Parser, Debug)]
#[command(name = "sugar-grid", about = "Hyperparameter grid search")]
struct Args {
    /// Base run config (TrainConfig fields).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0])]
    alpha: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.1, 1.0, 2.0, 4.0, 8.0])]
    beta: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.85, 0.9, 0.95])]
    ratio: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct Cell {
    alpha: f64,
    beta: f64,
    ratio: f64,
    val_metric: f64,
    chosen: Vec<usize>,
}

#[derive(Serialize)]
struct GridReport {
    seed: u64,
    cells: Vec<Cell>,
    best: Cell,
}

fn main() -> ExitCode {
    let args = Args::parse();
    run("sugar-grid", || {
        let base: TrainConfig = config_or_default(args.config.as_deref())?;
        let seed = match args.seed.or_else(|| base.seeds.first().copied()) {
            Some(s) => s,
            None => return Err(CliError::Config("no --seed and an empty `seeds` list".into())),
        };
        let mut grid = Vec::new();
        for &alpha in &args.alpha {
            for &beta in &args.beta {
                for &ratio in &args.ratio {
                    let mut c = base.clone();
                    c.objective.alpha = alpha;
                    c.objective.beta = beta;
                    c.sampler.ratio = ratio;
                    c.validate()?;
                    grid.push(c);
                }
            }
        }
        if grid.is_empty() {
            return Err(CliError::Config("empty grid".into()));
        }
        let data = read_data(&args.data)?;
        let agg = AggregationConfig {
            k_ratio: base.s_c,
            metric: base.metric,
            ..AggregationConfig::default()
        };
        let cells = grid
            .par_iter()
            .map(|c| {
                let outcome = train_sugar(c, &data, seed)?;
                let sel = select_greedy(&outcome.models, &data.val, &agg)?;
                log::info!(
                    "alpha {} beta {} r {}: val {:?}",
                    c.objective.alpha,
                    c.objective.beta,
                    c.sampler.ratio,
                    sel.metric
                );
                Ok(Cell {
                    alpha: c.objective.alpha,
                    beta: c.objective.beta,
                    ratio: c.sampler.ratio,
                    val_metric: sel.metric.unwrap_or(f64::NEG_INFINITY),
                    chosen: sel.chosen_indices,
                })
            })
            .collect::<sugar::Result<Vec<_>>>()?;
        // First cell in grid order wins ties.
        let mut best = &cells[0];
        for c in &cells[1..] {
            if c.val_metric > best.val_metric {
                best = c;
            }
        }
        let mut best_config = base.clone();
        best_config.objective.alpha = best.alpha;
        best_config.objective.beta = best.beta;
        best_config.sampler.ratio = best.ratio;
        write_json(&args.out.join("best_run.json"), &best_config)?;
        write_json(
            &args.out.join("grid.json"),
            &GridReport {
                seed,
                best: best.clone(),
                cells: cells.clone(),
            },
        )?;
        log::info!(
            "best: alpha {} beta {} r {} (val {:.4})",
            best.alpha,
            best.beta,
            best.ratio,
            best.val_metric
        );
        Ok(())
    })
}
