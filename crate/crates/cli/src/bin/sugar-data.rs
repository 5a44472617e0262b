//! Generates an SPMotif or SUMotif dataset directory.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use sugar::synthgen::{gen_dataset, SynthConfig, SynthMode};
use sugar_cli::{config_or_default, parse_enum, run};

#[derive(Parser, Debug)]
#[command(name = "sugar-data", about = "Generate a synthetic motif dataset")]
struct Args {
    /// JSON file with a dataset config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// spmotif | sumotif
    #[arg(long, value_parser = parse_enum::<SynthMode>)]
    mode: Option<SynthMode>,
    #[arg(long)]
    bias: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train_per_class: Option<usize>,
    #[arg(long)]
    eval_per_class: Option<usize>,
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let args = Args::parse();
    run("sugar-data", || {
        let mut config: SynthConfig = config_or_default(args.config.as_deref())?;
        if let Some(m) = args.mode {
            config.mode = m;
        }
        if let Some(b) = args.bias {
            config.bias = b;
        }
        if let Some(s) = args.seed {
            config.seed = s;
        }
        if let Some(n) = args.train_per_class {
            config.train_per_class = n;
        }
        if let Some(n) = args.eval_per_class {
            config.eval_per_class = n;
        }
        if let Some(d) = args.feature_dim {
            config.feature_dim = d;
        }
        let data = gen_dataset(&config)?;
        data.write(&args.out)?;
        log::info!(
            "wrote {} / {} / {} graphs to {}",
            data.train.len(),
            data.val.len(),
            data.test.len(),
            args.out.display()
        );
        Ok(())
    })
}
