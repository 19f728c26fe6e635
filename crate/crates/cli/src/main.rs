use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hts_cli::{analyze, cmd_diffusion, cmd_experiment, cmd_simulate, load_config, value_grid, CliError, CliResult};

#[derive(Parser)]
#[command(name = "hts", version, about = "Heavy-traffic control of the 2x2 parallel server system")]
struct Cli {
    /// JSON configuration file.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the LP structure and workload control solution as JSON.
    Analyze {
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Simulate the n-th queueing system under the policy.
    Simulate {
        #[arg(short, long)]
        out_dir: Option<PathBuf>,
    },
    /// Monte Carlo for the limiting reflected diffusion.
    Diffusion {
        #[arg(short, long)]
        out_dir: Option<PathBuf>,
    },
    /// Run the n-ladder experiment(s).
    Experiment {
        #[arg(short, long)]
        out_dir: Option<PathBuf>,
    },
    /// Write V_WCP on a grid of workload values as CSV.
    DumpValueGrid {
        x0: f64,
        x1: f64,
        npts: usize,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn init_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var("HTS_THREADS") {
        let n: usize = v.parse().map_err(|_| CliError::Config(format!("HTS_THREADS={v:?} is not a count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Other(e.to_string()))?;
    }
    Ok(())
}

fn emit(text: &str, out: Option<&PathBuf>) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    init_threads()?;
    let path = cli.config.ok_or_else(|| CliError::Config("--config is required".into()))?;
    let cfg = load_config(&path, cli.seed)?;
    match cli.command {
        Command::Analyze { out } => {
            let rep = analyze(&cfg.config.system)?;
            let text = serde_json::to_string_pretty(&rep).map_err(|e| CliError::Other(e.to_string()))? + "\n";
            emit(&text, out.as_ref())?;
        }
        Command::Simulate { out_dir } => {
            let d = cmd_simulate(&cfg, out_dir.as_deref())?;
            eprintln!("wrote {}", d.display());
        }
        Command::Diffusion { out_dir } => {
            let d = cmd_diffusion(&cfg, out_dir.as_deref())?;
            eprintln!("wrote {}", d.display());
        }
        Command::Experiment { out_dir } => {
            let d = cmd_experiment(&cfg, out_dir.as_deref())?;
            eprintln!("wrote {}", d.display());
        }
        Command::DumpValueGrid { x0, x1, npts, out } => {
            emit(&value_grid(&cfg.config.system, x0, x1, npts)?, out.as_ref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hts: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
