//! Selects and aggregates trained checkpoints, then reports metrics.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde::Serialize;
use sugar::aggregate::{
    select_greedy, select_uniform, weight_averaged_model, AggregationConfig, AggregationMode, EnsCache, Merge,
    Selection, SelectionResult, Vote,
};
use sugar::trainer::checkpoint::{list_checkpoints, load_checkpoint};
use sugar::trainer::validate;
use sugar::{Graph, InvariantGNN, SubgraphSelection};
use sugar_cli::{config_or_default, parse_enum, read_data, run, write_json, CliError, CliResult};

#[derive(Parser, Debug)]
#[command(
    name = "sugar-aggregate",
    about = "Aggregate base models by ensembling or weight averaging"
)]
struct Args {
    /// Aggregation config JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// ens | wa
    #[arg(long, value_parser = parse_enum::<AggregationMode>)]
    mode: Option<AggregationMode>,
    /// avg | max
    #[arg(long, value_parser = parse_enum::<Merge>)]
    merge: Option<Merge>,
    /// soft | hard
    #[arg(long, value_parser = parse_enum::<Vote>)]
    vote: Option<Vote>,
    /// uniform | greedy
    #[arg(long = "select", value_parser = parse_enum::<Selection>)]
    selection: Option<Selection>,
    #[arg(long)]
    k_ratio: Option<f64>,
    /// Directory holding model_{i}.bin/.json.
    #[arg(long)]
    checkpoints: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Recorded in the report; aggregation itself is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    /// Include the aggregate's selected edges for every test graph.
    #[arg(long)]
    with_selections: bool,
}

#[derive(Serialize)]
struct SingleMetrics {
    index: usize,
    val: f64,
    test: f64,
}

#[derive(Serialize)]
struct GraphSelection {
    graph: usize,
    edges: Option<Vec<usize>>,
}

#[derive(Serialize)]
struct Report {
    config: AggregationConfig,
    seed: Option<u64>,
    checkpoints: Vec<String>,
    single: Vec<SingleMetrics>,
    selection: SelectionResult,
    val_metric: f64,
    test_metric: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    selections: Option<Vec<GraphSelection>>,
}

fn evaluate(
    models: &[InvariantGNN],
    chosen: &[usize],
    split: &[Graph],
    config: &AggregationConfig,
) -> CliResult<(f64, Vec<Option<SubgraphSelection>>)> {
    match config.mode {
        AggregationMode::Ens => {
            let cache = EnsCache::new(models, split)?;
            let preds = cache.predict(chosen, config)?;
            Ok((
                cache.metric(chosen, config)?,
                preds.into_iter().map(|p| p.merged).collect(),
            ))
        }
        AggregationMode::Wa => {
            let members: Vec<&InvariantGNN> = chosen.iter().map(|&i| &models[i]).collect();
            let avg = weight_averaged_model(&members)?;
            let metric = validate(&avg, split, Some(config.k_ratio), config.metric)?;
            let sels = split
                .iter()
                .map(|g| sugar::aggregate::single_predict(&avg, g, Some(config.k_ratio)).map(|(_, s)| s))
                .collect::<sugar::Result<Vec<_>>>()?;
            Ok((metric, sels))
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    run("sugar-aggregate", || {
        let mut config: AggregationConfig = config_or_default(args.config.as_deref())?;
        if let Some(m) = args.mode {
            config.mode = m;
        }
        if let Some(m) = args.merge {
            config.merge = m;
        }
        if let Some(v) = args.vote {
            config.vote = v;
        }
        if let Some(s) = args.selection {
            config.selection = s;
        }
        if let Some(r) = args.k_ratio {
            config.k_ratio = r;
        }
        if !(config.k_ratio > 0.0 && config.k_ratio <= 1.0) {
            return Err(CliError::Config(format!("k_ratio {} outside (0, 1]", config.k_ratio)));
        }
        let paths = list_checkpoints(&args.checkpoints)?;
        if paths.is_empty() {
            return Err(CliError::Config(format!(
                "no checkpoints in {}",
                args.checkpoints.display()
            )));
        }
        let models = paths
            .iter()
            .map(|p| load_checkpoint(p))
            .collect::<sugar::Result<Vec<_>>>()?;
        let data = read_data(&args.data)?;

        let single = models
            .iter()
            .enumerate()
            .map(|(index, m)| {
                Ok(SingleMetrics {
                    index,
                    val: validate(m, &data.val, Some(config.k_ratio), config.metric)?,
                    test: validate(m, &data.test, Some(config.k_ratio), config.metric)?,
                })
            })
            .collect::<sugar::Result<Vec<_>>>()?;
        let selection = match config.selection {
            Selection::Greedy => select_greedy(&models, &data.val, &config)?,
            Selection::Uniform => select_uniform(models.len())?,
        };
        let (val_metric, _) = evaluate(&models, &selection.chosen_indices, &data.val, &config)?;
        let (test_metric, sels) = evaluate(&models, &selection.chosen_indices, &data.test, &config)?;
        log::info!(
            "chosen {:?}: val {val_metric:.4}, test {test_metric:.4}",
            selection.chosen_indices
        );
        let report = Report {
            config,
            seed: args.seed,
            checkpoints: paths.iter().map(|p| p.display().to_string()).collect(),
            single,
            selection,
            val_metric,
            test_metric,
            selections: args.with_selections.then(|| {
                sels.into_iter()
                    .enumerate()
                    .map(|(graph, s)| GraphSelection {
                        graph,
                        edges: s.map(|s| s.edge_indices().to_vec()),
                    })
                    .collect()
            }),
        };
        write_json(&args.out, &report)
    })
}
