use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use dicke_cli::config::parse_mode;
use dicke_cli::{run, CliError, RawConfig, Task};

#[derive(Debug, Parser)]
#[command(name = "dicke", version, about = "Driven-dissipative Dicke model: atom-only master equations, semiclassics and a cavity oracle")]
struct Cli {
    #[command(subcommand)]
    task: Command,

    /// Config file of `key = value` lines (a result CSV also works)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config key; repeatable, later wins
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    /// Output CSV path (default: stdout)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Sweep worker threads (0 = one per core)
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    /// full, secular, large-detuning or secular-large-detuning
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<dicke_core::ApproximationMode>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Time evolution from a slightly tilted all-down state
    Evolve,
    /// Steady state of the atom-only master equation
    Steady,
    /// Steady states over a parameter grid
    Sweep,
    /// Semiclassical fixed points and their eigenvalues
    Stability,
    /// Atom+cavity steady states against the atom-only ones
    OracleCompare,
}

impl Command {
    fn task(&self) -> Task {
        match self {
            Command::Evolve => Task::Evolve,
            Command::Steady => Task::Steady,
            Command::Sweep => Task::Sweep,
            Command::Stability => Task::Stability,
            Command::OracleCompare => Task::OracleCompare,
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let task = cli.task.task();
    let mut raw = RawConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        raw.merge_text(&text)?;
    }
    if raw.value("task").is_some_and(|t| t != task.name()) {
        return Err(CliError::Config(format!("config file is for a different task than '{}'", task.name())));
    }
    raw.set("task", task.name())?;
    if let Some(mode) = cli.mode {
        raw.set("mode", mode.name())?;
    }
    for s in &cli.set {
        raw.set_assignment(s)?;
    }
    let config = raw.build()?;
    if config.task != task {
        return Err(CliError::Config(format!("task is set by the subcommand '{}'", task.name())));
    }

    let table = run(&config, cli.workers)?;
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let stamp = format!("{stamp}");
    match &cli.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            table.write_csv(&mut w, &config, &stamp)?;
            w.flush()?;
        }
        None => {
            let mut w = BufWriter::new(io::stdout().lock());
            table.write_csv(&mut w, &config, &stamp)?;
            w.flush()?;
        }
    }
    let failed = table.failed_rows();
    if failed > 0 {
        return Err(CliError::FailedRows {
            failed,
            total: table.rows.len(),
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dicke: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
