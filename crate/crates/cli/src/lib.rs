//! Command-line front end for the `arbband` library.
//!
//! Every subcommand reads one TOML [`RunConfig`], writes CSV files and a
//! `manifest.json` into `run.output_dir`, and maps failures onto exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 2 | configuration file or I/O error |
//! | 3 | parameter domain error |
//! | 4 | solver configuration or numerical breakdown |
//! | 5 | an accuracy gate failed |

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use thiserror::Error;

mod commands;
pub mod config;

pub use config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Price,
    Band,
    Usurface,
    Covpde,
    Smile,
    McValidate,
    NoiseCheck,
    Xval,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Price => "price",
            Command::Band => "band",
            Command::Usurface => "usurface",
            Command::Covpde => "covpde",
            Command::Smile => "smile",
            Command::McValidate => "mc-validate",
            Command::NoiseCheck => "noise-check",
            Command::Xval => "xval",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] arbband::Error),
    #[error("{0}")]
    Gate(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use arbband::Error as E;
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Core(E::Domain(_) | E::NoRoot(_) | E::InsufficientData(_)) => 3,
            CliError::Core(E::Config(_) | E::Breakdown(_)) => 4,
            CliError::Core(E::Accuracy(_)) | CliError::Gate(_) => 5,
        }
    }

    pub fn kind(&self) -> &'static str {
        use arbband::Error as E;
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Core(E::Domain(_)) => "domain",
            CliError::Core(E::NoRoot(_)) => "no_root",
            CliError::Core(E::InsufficientData(_)) => "insufficient_data",
            CliError::Core(E::Config(_)) => "solver_config",
            CliError::Core(E::Breakdown(_)) => "breakdown",
            CliError::Core(E::Accuracy(_)) | CliError::Gate(_) => "accuracy",
        }
    }

    /// One line: `error code=<n> kind=<kind> message="<text>"`.
    pub fn diagnostic(&self) -> String {
        let msg = self
            .to_string()
            .replace('\\', "\\\\")
            .replace('"', "\\\"")
            .replace('\n', " ");
        format!(
            "error code={} kind={} message=\"{msg}\"",
            self.exit_code(),
            self.kind()
        )
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// An accuracy check recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gate {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Gate {
    pub fn new(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

/// What a run produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    pub gates: Vec<Gate>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.gates.iter().all(|g| g.passed)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    version: &'static str,
    seed: u64,
    threads: usize,
    config: &'a RunConfig,
    outputs: Vec<String>,
    gates: &'a [Gate],
    passed: bool,
    timestamp_unix: u64,
}

/// Runs `cmd`, writes the manifest, and fails with exit code 5 if any gate
/// failed. Artifacts are written either way.
pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Outcome, CliError> {
    let dir = &cfg.run.output_dir;
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let outcome = pool.install(|| commands::dispatch(cmd, cfg))?;
    write_manifest(cmd, cfg, &outcome)?;
    if let Some(g) = outcome.gates.iter().find(|g| !g.passed) {
        return Err(CliError::Gate(format!(
            "{} = {:e} exceeds tolerance {:e}",
            g.name, g.value, g.tolerance
        )));
    }
    Ok(outcome)
}

fn write_manifest(cmd: Command, cfg: &RunConfig, outcome: &Outcome) -> Result<(), CliError> {
    let timestamp_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let manifest = Manifest {
        command: cmd.name(),
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.run.seed,
        threads: cfg.run.threads,
        config: cfg,
        outputs: outcome
            .outputs
            .iter()
            .map(|p| {
                p.file_name()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned()
            })
            .collect(),
        gates: &outcome.gates,
        passed: outcome.passed(),
        timestamp_unix,
    };
    let path = cfg.run.output_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(&path, text + "\n")?;
    Ok(())
}

/// Loads `path` and runs `cmd`, returning the process exit code. Errors
/// are reported on stderr as a single [`CliError::diagnostic`] line.
pub fn main_with(cmd: Command, path: &Path, output_dir: Option<PathBuf>) -> i32 {
    let result = RunConfig::load(path).and_then(|mut cfg| {
        if let Some(dir) = output_dir {
            cfg.run.output_dir = dir;
        }
        run(cmd, &cfg)
    });
    match result {
        Ok(outcome) => {
            for p in &outcome.outputs {
                println!("wrote {}", p.display());
            }
            for g in &outcome.gates {
                println!(
                    "gate {} value={:e} tolerance={:e} passed={}",
                    g.name, g.value, g.tolerance, g.passed
                );
            }
            0
        }
        Err(e) => {
            eprintln!("{}", e.diagnostic());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct_per_class() {
        use arbband::Error as E;
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Core(E::Domain("x".into())).exit_code(), 3);
        assert_eq!(CliError::Core(E::NoRoot("x".into())).exit_code(), 3);
        assert_eq!(CliError::Core(E::Config("x".into())).exit_code(), 4);
        assert_eq!(CliError::Core(E::Breakdown("x".into())).exit_code(), 4);
        assert_eq!(CliError::Gate("x".into()).exit_code(), 5);
    }

    #[test]
    fn diagnostic_is_one_line() {
        let e = CliError::Core(arbband::Error::Domain("bad \"spot\"\nvalue".into()));
        let d = e.diagnostic();
        assert!(!d.contains('\n'));
        assert!(d.starts_with("error code=3 kind=domain message=\""));
        assert!(d.contains("\\\"spot\\\""));
    }
}
