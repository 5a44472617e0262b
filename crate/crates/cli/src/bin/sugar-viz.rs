//! Writes a Graphviz DOT rendering of one graph's edge weights.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde::{Deserialize, Serialize};
use sugar::aggregate::merge;
use sugar::graph::{ratio_to_k, top_k_edges};
use sugar::harness::{export_subgraph_viz, VizInput};
use sugar::trainer::checkpoint::{list_checkpoints, load_checkpoint};
use sugar::EdgeWeights;
use sugar_cli::{config_or_default, parse_enum, read_data, run, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
enum Source {
    /// Merged featurizer weights of all checkpoints.
    #[default]
    Weights,
    /// Top-k of the merged weights, drawn as a binary selection.
    Selection,
    /// Ground-truth motif mask.
    Truth,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct VizConfig {
    source: Source,
    split: String,
    index: Option<usize>,
    k_ratio: f64,
    merge: sugar::aggregate::Merge,
}

impl Default for VizConfig {
    fn default() -> Self {
        VizConfig {
            source: Source::Weights,
            split: "test".into(),
            index: None,
            k_ratio: 0.5,
            merge: sugar::aggregate::Merge::Average,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "sugar-viz", about = "Export a graph's edge weights as DOT")]
struct Args {
    #[arg(long)]
    config: Option<PathBuf>,
    /// weights | selection | truth
    #[arg(long, value_parser = parse_enum::<Source>)]
    source: Option<Source>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    split: Option<String>,
    /// Graph index; when omitted one is drawn using --seed.
    #[arg(long)]
    index: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    checkpoints: Option<PathBuf>,
    #[arg(long)]
    k_ratio: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let args = Args::parse();
    run("sugar-viz", || {
        let mut config: VizConfig = config_or_default(args.config.as_deref())?;
        if let Some(s) = args.source {
            config.source = s;
        }
        if let Some(s) = &args.split {
            config.split = s.clone();
        }
        if args.index.is_some() {
            config.index = args.index;
        }
        if let Some(r) = args.k_ratio {
            config.k_ratio = r;
        }
        let data = read_data(&args.data)?;
        let split = match config.split.as_str() {
            "train" => &data.train,
            "val" => &data.val,
            "test" => &data.test,
            other => return Err(CliError::Config(format!("unknown split `{other}`"))),
        };
        if split.is_empty() {
            return Err(CliError::Config(format!("split `{}` is empty", config.split)));
        }
        let index = config
            .index
            .unwrap_or_else(|| (args.seed.unwrap_or(0) % split.len() as u64) as usize);
        let graph = split
            .get(index)
            .ok_or_else(|| CliError::Config(format!("index {index} out of range for {} graphs", split.len())))?;

        let weights = if config.source == Source::Truth {
            EdgeWeights::from_truth(graph).ok_or_else(|| CliError::Config("graph has no truth mask".into()))?
        } else {
            let dir = args
                .checkpoints
                .as_ref()
                .ok_or_else(|| CliError::Config("--checkpoints is required for this source".into()))?;
            let sets = list_checkpoints(dir)?
                .iter()
                .map(|p| load_checkpoint(p).and_then(|m| m.featurize(graph)))
                .collect::<sugar::Result<Vec<_>>>()?;
            merge(&sets, config.merge)?
        };
        if config.source == Source::Selection {
            let sel = top_k_edges(&weights, ratio_to_k(config.k_ratio, graph.num_edges())?)?;
            export_subgraph_viz(graph, &VizInput::Selection(&sel), &args.out)?;
        } else {
            export_subgraph_viz(graph, &VizInput::Weights(&weights), &args.out)?;
        }
        log::info!("wrote {} (graph {index}, label {})", args.out.display(), graph.label());
        Ok(())
    })
}
