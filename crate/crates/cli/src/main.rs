use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dcsim_cli::csv_out::emit_csv;
use dcsim_cli::schema::{ScenarioFile, SchemaError};
use dcsim_cli::{builtin, schema};

/// Transient simulation of data-center loads on a small test grid.
#[derive(Parser)]
#[command(name = "dcsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write CSV logs.
    Run {
        /// Builtin scenario name or path to a scenario file.
        #[arg(long)]
        scenario: String,
        /// Override the random seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the integration step size (s).
        #[arg(long)]
        dt: Option<f64>,
        /// Override the simulated duration (s).
        #[arg(long)]
        duration: Option<f64>,
        /// Output directory (default: out/<scenario name>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a scenario without running it.
    Validate {
        #[arg(long)]
        scenario: String,
    },
    /// List the builtin scenarios.
    ListBuiltin,
}

enum CliError {
    /// Scenario or model error: exit code 1.
    Scenario(String),
    /// I/O error: exit code 2.
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Scenario(_) => 1,
            CliError::Io(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Scenario(m) | CliError::Io(m) => m,
        }
    }
}

impl From<SchemaError> for CliError {
    fn from(e: SchemaError) -> Self {
        match e {
            SchemaError::Io(err) => CliError::Io(err.to_string()),
            other => CliError::Scenario(other.to_string()),
        }
    }
}

fn load(scenario: &str) -> Result<ScenarioFile, CliError> {
    if let Some(text) = builtin::get(scenario) {
        return Ok(ScenarioFile::parse_str(text).expect("builtin scenarios always parse"));
    }
    let path = Path::new(scenario);
    if !path.exists() {
        return Err(CliError::Io(format!(
            "scenario '{scenario}' is neither a builtin name nor an existing file"
        )));
    }
    Ok(schema::ScenarioFile::parse_file(path)?)
}

fn cmd_run(
    scenario: &str,
    seed: Option<u64>,
    dt: Option<f64>,
    duration: Option<f64>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let file = load(scenario)?;
    let mut scen = file.to_scenario()?;
    if let Some(seed) = seed {
        scen.seed = seed;
    }
    if let Some(dt) = dt {
        scen.dt_s = dt;
    }
    if let Some(duration) = duration {
        scen.duration_s = duration;
    }
    scen.validate().map_err(|e| CliError::Scenario(e.to_string()))?;

    let started = std::time::Instant::now();
    let log = dcsim_core::engine::run(&scen).map_err(|e| CliError::Scenario(e.to_string()))?;
    let elapsed = started.elapsed();

    let out_dir = out.unwrap_or_else(|| PathBuf::from("out").join(&file.name));
    emit_csv(&log, &out_dir).map_err(|e| CliError::Io(e.to_string()))?;

    println!(
        "{}: {} rows, {} events, {:.2} s wall -> {}",
        file.name,
        log.rows(),
        log.events.len(),
        elapsed.as_secs_f64(),
        out_dir.display()
    );
    Ok(())
}

fn cmd_validate(scenario: &str) -> Result<(), CliError> {
    let file = load(scenario)?;
    let scen = file.to_scenario()?;
    println!(
        "{}: ok ({} buses, {} facilities, {} events, duration {} s)",
        file.name,
        scen.grid.buses.len(),
        scen.dcs.len(),
        scen.events.len(),
        scen.duration_s
    );
    Ok(())
}

fn cmd_list_builtin() {
    for (name, text) in builtin::BUILTINS {
        let descr = ScenarioFile::parse_str(text)
            .map(|f| f.description)
            .unwrap_or_default();
        println!("{name:<28} {descr}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            seed,
            dt,
            duration,
            out,
        } => cmd_run(&scenario, seed, dt, duration, out),
        Command::Validate { scenario } => cmd_validate(&scenario),
        Command::ListBuiltin => {
            cmd_list_builtin();
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
