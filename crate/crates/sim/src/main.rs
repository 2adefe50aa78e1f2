use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use tiltcargo_sim::config::scenario_name;
use tiltcargo_sim::output::emit_outputs;
use tiltcargo_sim::{run_scenario, ScenarioId, SimConfig, Termination};

/// Runs one simulated flight and writes its log, plot data and summary.
#[derive(Debug, Parser)]
#[command(name = "tiltcargo", version)]
struct Cli {
    /// estimate_fixed_payload | transport_no_esc | transport_with_esc | custom
    #[arg(long)]
    scenario: Option<String>,
    /// TOML config layered over the scenario preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Simulated duration [s].
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Dotted-path override, e.g. `estimator.g2=0.4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Print the resolved config and exit.
    #[arg(long)]
    print_config: bool,
}

fn run(cli: Cli) -> Result<Termination, String> {
    let scenario = cli
        .scenario
        .as_deref()
        .map(|s| ScenarioId::parse(s).ok_or_else(|| format!("unknown scenario `{s}`")))
        .transpose()?;
    let mut overrides = cli.set;
    if let Some(d) = cli.duration {
        overrides.push(format!("duration={d:?}"));
    }
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    let cfg = SimConfig::load(scenario, cli.config.as_deref(), &overrides).map_err(|e| e.to_string())?;
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(Termination::Completed);
    }
    let log = run_scenario(&cfg).map_err(|e| e.to_string())?;
    let name = scenario_name(cfg.scenario);
    emit_outputs(&log, &cli.out, name, cfg.seed, &cfg.to_toml()).map_err(|e| e.to_string())?;
    eprintln!("{name}: {} at t = {:.3} s, outputs in {}", log.termination.label(), log.end_time, cli.out.display());
    Ok(log.termination)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Termination::Completed) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
