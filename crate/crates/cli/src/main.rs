use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lgh_cli::commands::{self, CmdResult, CommandError, Reference, EXIT_FAILURE};
use lgh_cli::config::{Loaded, RunConfig};
use lgh_cli::output::OutputDir;
use lgh_core::check::BatterySize;

#[derive(Parser)]
#[command(name = "lgh", version, about = "Hybrid optimal control on SO(3): shooting, switching optimization and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a piecewise-constant control through at most one switch.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// CSV with header t,u1[,u2[,u3]].
        #[arg(long)]
        controls: PathBuf,
    },
    /// Solve one phase boundary-value problem by multi-start shooting.
    Shoot {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        phase: u8,
        /// JSON array with the nine row-major entries of the switching state.
        #[arg(long)]
        target: PathBuf,
    },
    /// Descend the value function over switching state and time.
    Optimize {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the invariant battery.
    Check {
        /// Defaults to the embedded satellite configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Swap the costate law before checking.
        #[arg(long, hide = true)]
        flip_costate_sign: bool,
    },
    /// `optimize` with the embedded satellite configuration.
    RunSatellite,
}

fn load(path: Option<&Path>) -> CmdResult<Loaded> {
    let config = match path {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::satellite(),
    };
    let loaded = config.load()?;
    for note in &loaded.notes {
        eprintln!("note: {note}");
    }
    Ok(loaded)
}

fn output_dir(loaded: &Loaded) -> CmdResult<OutputDir> {
    Ok(OutputDir::create(&loaded.config.resolved_output_dir())?)
}

fn report_files(out: &OutputDir) {
    for path in out.written() {
        println!("wrote {}", path.display());
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> CmdResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CommandError {
        code: EXIT_FAILURE,
        message: e.to_string(),
    })?;
    println!("{text}");
    Ok(())
}

fn run(cli: Cli) -> CmdResult<()> {
    match cli.command {
        Command::Simulate { config, controls } => {
            let loaded = load(Some(&config))?;
            let mut out = output_dir(&loaded)?;
            let result = commands::simulate(&loaded, &controls, &mut out);
            report_files(&out);
            let report = result?;
            for e in &report.events {
                println!("switch at t = {} (transversality {:.3e})", e.t, e.transversality);
            }
        }
        Command::Shoot { config, phase, target } => {
            let mut loaded = load(Some(&config))?;
            let target = commands::read_matrix(&target, &mut loaded.notes)?;
            for note in &loaded.notes {
                eprintln!("note: {note}");
            }
            let mut out = output_dir(&loaded)?;
            let report = commands::shoot(&loaded, phase, &target, &mut out)?;
            report_files(&out);
            print_json(&report.result)?;
        }
        Command::Optimize { config } => {
            let loaded = load(Some(&config))?;
            optimize(&loaded, None)?;
        }
        Command::RunSatellite => {
            let loaded = load(None)?;
            optimize(&loaded, Some(&Reference::satellite()))?;
        }
        Command::Check { config, flip_costate_sign } => {
            let loaded = load(config.as_deref())?;
            let mut out = output_dir(&loaded)?;
            let report = commands::check_run(&loaded, flip_costate_sign, BatterySize::default(), &mut out)?;
            report_files(&out);
            for item in &report.items {
                let tag = if item.passed { "pass" } else { "FAIL" };
                println!("{tag} {:<36} {:.3e} (tol {:.1e})", item.name, item.measured, item.tolerance);
            }
            if !report.passed {
                return Err(CommandError {
                    code: EXIT_FAILURE,
                    message: "invariant check failed".into(),
                });
            }
        }
    }
    Ok(())
}

fn optimize(loaded: &Loaded, reference: Option<&Reference>) -> CmdResult<()> {
    let mut out = output_dir(loaded)?;
    let result = commands::optimize_run(loaded, reference, &mut out);
    report_files(&out);
    let summary = result?;
    println!(
        "stop: {:?} after {} iterations; t_s = {:.6}, v = {:.10}, stationarity {:.3e}, hamiltonian gap {:.3e}",
        summary.stop_reason,
        summary.iterations,
        summary.last.t_s,
        summary.last.v,
        summary.last.stationarity,
        summary.residuals.hamiltonian_gap
    );
    for note in &summary.notes {
        println!("note: {note}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_FAILURE as u8) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
