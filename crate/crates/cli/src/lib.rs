//! Shared plumbing for the `sugar-*` binaries: error-to-exit-code mapping,
//! JSON config loading and worker-pool setup.

use std::fs;
use std::path::Path;
use std::process::ExitCode;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sugar::harness::init_worker_pool;
use sugar::synthgen::DatasetSplit;
use sugar::SugarError;
use thiserror::Error;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Sugar(#[from] SugarError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Sugar(e) if e.is_config_error() => EXIT_CONFIG,
            CliError::Sugar(_) => EXIT_RUNTIME,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Initialises logging and the worker pool, runs `body`, and turns the
/// outcome into a process exit code.
pub fn run(name: &str, body: impl FnOnce() -> CliResult<()>) -> ExitCode {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    let result = init_worker_pool().map_err(CliError::from).and_then(|workers| {
        log::debug!("{name}: {workers} worker(s)");
        body()
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{name}: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Reads a JSON config. Missing files and parse failures are config errors.
pub fn read_config<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Config from `--config` when given, otherwise the type's default.
pub fn config_or_default<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    path.map_or_else(|| Ok(T::default()), read_config)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| SugarError::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(SugarError::from)? + "\n";
    fs::write(path, text).map_err(|e| SugarError::io(path, e).into())
}

/// Parses a lowercase enum name through its serde representation.
pub fn parse_enum<T: DeserializeOwned>(raw: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(raw.to_string())).map_err(|e| e.to_string())
}

/// Reads a dataset directory; a missing directory or split file is a
/// config error, a malformed one a runtime error.
pub fn read_data(dir: &Path) -> CliResult<DatasetSplit> {
    for f in ["train.jsonl", "val.jsonl", "test.jsonl"] {
        if !dir.join(f).is_file() {
            return Err(CliError::Config(format!("{} not found", dir.join(f).display())));
        }
    }
    Ok(DatasetSplit::read(dir)?)
}
