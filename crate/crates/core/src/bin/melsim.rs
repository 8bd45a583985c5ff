use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use melsim::harness::{cmd_analyze, cmd_simulate, cmd_verify, load_config, render_verify, Config};
use melsim::pads::FaultHook;
use melsim::SimError;

/// Multi-level parallel traffic simulation.
#[derive(Parser)]
#[command(name = "melsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print steps per second to stderr.
    #[arg(long)]
    progress: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Rank intersections by betweenness.
    Analyze(Common),
    /// Run the configured scenario in parallel and write metrics.
    Simulate(Common),
    /// Compare parallel traces against the sequential run.
    Verify {
        #[command(flatten)]
        common: Common,
        /// LP counts to check, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        lps: Vec<usize>,
        /// Perturb one entity on LP:STEP (self-test of the comparison).
        #[arg(long, value_parser = parse_fault, hide = true)]
        inject_fault: Option<FaultHook>,
    },
}

fn parse_fault(s: &str) -> Result<FaultHook, String> {
    let (lp, step) = s.split_once(':').ok_or("expected LP:STEP")?;
    Ok(FaultHook {
        lp: lp.parse().map_err(|e| format!("LP: {e}"))?,
        step: step.parse().map_err(|e| format!("STEP: {e}"))?,
    })
}

fn setup(c: &Common) -> Result<(Config, PathBuf), SimError> {
    let cfg = load_config(&c.config)?;
    let out = c.out.clone().unwrap_or_else(|| cfg.output.clone());
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<bool, SimError> {
    match cli.command {
        Command::Analyze(c) => {
            let (cfg, out) = setup(&c)?;
            let s = cmd_analyze(&cfg, &out)?;
            println!("nodes {} arcs {} max_score {}", s.nodes, s.arcs, s.max_score);
            Ok(true)
        }
        Command::Simulate(c) => {
            let (cfg, out) = setup(&c)?;
            let s = cmd_simulate(&cfg, &out, None, c.progress)?;
            println!("steps {} lps {} final {}", s.report.trace.len(), s.n_lps, s.report.trace.final_hash());
            Ok(true)
        }
        Command::Verify {
            common,
            lps,
            inject_fault,
        } => {
            let (cfg, out) = setup(&common)?;
            let r = cmd_verify(&cfg, &out, &lps, inject_fault, common.progress)?;
            render_verify(&r, std::io::stdout().lock())?;
            Ok(r.all_match())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MELSIM_LOG", "error")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ SimError::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
