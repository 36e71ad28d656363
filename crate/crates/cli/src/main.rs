mod args;
mod commands;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::error::ErrorKind;
use clap::Parser;
use serde::Serialize;

use args::{Cli, Command};
use output::Output;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Lib(#[from] intfactor::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Lib(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

/// Run facts that vary between invocations, kept out of the payload.
#[derive(Serialize)]
struct Meta {
    command: String,
    version: &'static str,
    argv: Vec<String>,
    jobs: usize,
    started_unix: u64,
    elapsed_seconds: f64,
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Factors(_) => "factors",
        Command::Fit(_) => "fit",
        Command::TestModality(_) => "test-modality",
        Command::TestLinear(_) => "test-linear",
        Command::Contribution(_) => "contribution",
        Command::Simulate(_) => "simulate",
        Command::Table2(_) => "table2",
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = &cli.global;
    let jobs = g
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
    {
        log::debug!("global worker pool already set: {e}");
    }
    let name = command_name(&cli.command);
    let out = Output::new(
        &g.out_dir,
        g.stem.clone().unwrap_or_else(|| name.to_string()),
        g.csv,
    )?;
    let started = Instant::now();
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());

    match &cli.command {
        Command::Factors(a) => commands::factors(a, &out)?,
        Command::Fit(a) => commands::fit(a, &out)?,
        Command::TestModality(a) => commands::test_modality(a, &out)?,
        Command::TestLinear(a) => commands::test_linear_cmd(a, &out)?,
        Command::Contribution(a) => commands::contribution(a, &out)?,
        Command::Simulate(a) => commands::simulate(a, &out, jobs)?,
        Command::Table2(a) => commands::table2(a, &out, jobs)?,
    }

    out.json(
        ".meta.json",
        &Meta {
            command: name.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            argv: std::env::args().collect(),
            jobs,
            started_unix,
            elapsed_seconds: started.elapsed().as_secs_f64(),
        },
    )?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
