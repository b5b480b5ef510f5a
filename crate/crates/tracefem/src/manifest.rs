use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;

use crate::commands::{self, Dumps, Outcome};
use crate::config::LoadedConfig;
use crate::error::CliError;
use crate::formats::write_text;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Solve,
    Converge { levels: Option<usize> },
    Adapt,
    Shishkin,
    ExtractSurface,
    Check,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Converge { .. } => "converge",
            Command::Adapt => "adapt",
            Command::Shishkin => "shishkin",
            Command::ExtractSurface => "extract-surface",
            Command::Check => "check",
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
}

/// Record of one run: the config text verbatim, what was produced, and how long it took.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub core_version: String,
    pub threads: usize,
    pub config: String,
    pub status: String,
    pub error: Option<ErrorRecord>,
    pub artifacts: Vec<PathBuf>,
    pub seconds: f64,
}

pub struct RunResult {
    pub exit_code: i32,
    pub manifest: Manifest,
    pub summary: String,
}

/// Run `cmd`, write `manifest.json` next to the artifacts, and optionally a text report.
pub fn execute(cmd: Command, cfg: &LoadedConfig, dumps: Dumps, report: Option<&PathBuf>) -> RunResult {
    let start = Instant::now();
    let c = &cfg.config;
    let result: Result<Outcome, CliError> = match cmd {
        Command::Solve => commands::solve(c, dumps),
        Command::Converge { levels } => commands::converge(c, levels.unwrap_or(c.converge.levels), dumps),
        Command::Adapt => commands::adapt(c, dumps),
        Command::Shishkin => commands::shishkin(c, dumps),
        Command::ExtractSurface => commands::extract(c, dumps),
        Command::Check => commands::check(c, dumps),
    };
    let result = result.and_then(|mut out| {
        if let Some(path) = report {
            write_text(path, &out.summary)?;
            out.artifacts.push(path.clone());
        }
        Ok(out)
    });
    let (exit_code, error, artifacts, summary) = match result {
        Ok(out) => (0, None, out.artifacts, out.summary),
        Err(e) => {
            let msg = e.to_string();
            (e.exit_code(), Some(ErrorRecord { kind: e.kind().into(), message: msg.clone() }), Vec::new(), msg)
        }
    };
    let mut manifest = Manifest {
        command: cmd.name().into(),
        version: env!("CARGO_PKG_VERSION").into(),
        core_version: tracefem_core::VERSION.into(),
        threads: rayon::current_num_threads(),
        config: cfg.text.clone(),
        status: if exit_code == 0 { "ok".into() } else { "error".into() },
        error,
        artifacts,
        seconds: start.elapsed().as_secs_f64(),
    };
    let path = c.output.dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let exit_code = match write_text(&path, &text) {
        Ok(()) => exit_code,
        Err(e) => {
            manifest.status = "error".into();
            manifest.error = Some(ErrorRecord { kind: e.kind().into(), message: e.to_string() });
            if exit_code == 0 {
                1
            } else {
                exit_code
            }
        }
    };
    RunResult { exit_code, manifest, summary }
}
