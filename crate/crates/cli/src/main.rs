use std::path::PathBuf;
use std::process::ExitCode;

use avlab::harness::{cmd_metrics, cmd_replay, cmd_run, cmd_sweep, cmd_trace, HarnessError, MetricSpec, RunConfig, SweepAxes};
use avlab::syncbridge::LatencyModel;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "avlab", version, about = "Run, sweep, replay and score simulated driving experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Run config JSON; when absent the scenario flag builds a default config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bundled scenario name or scenario file path.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    preset: Option<String>,
    /// Target speed, m/s.
    #[arg(long)]
    speed: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fixed planning latency override, microseconds.
    #[arg(long)]
    latency_micros: Option<u64>,
}

impl Overrides {
    fn config(&self) -> Result<RunConfig, HarnessError> {
        let mut cfg = match (&self.config, &self.scenario) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(s)) => RunConfig::new(s.clone()),
            (None, None) => return Err(HarnessError::Config("either --config or --scenario is required".into())),
        };
        if let (Some(_), Some(s)) = (&self.config, &self.scenario) {
            cfg.scenario = s.clone();
        }
        if let Some(p) = &self.preset {
            cfg.preset = p.clone();
        }
        if let Some(v) = self.speed {
            cfg.target_speed = Some(v);
        }
        if let Some(s) = self.seed {
            cfg.seed = Some(s);
        }
        if let Some(micros) = self.latency_micros {
            cfg.components.planning.latency = Some(LatencyModel::Fixed { micros });
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Execute one run and write its directory.
    Run {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every preset x speed (x latency) cell in parallel.
    Sweep {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_delimiter = ',', required = true)]
        presets: Vec<String>,
        #[arg(long, value_delimiter = ',', required = true)]
        speeds: Vec<f64>,
        /// Planning latencies to inject, microseconds.
        #[arg(long, value_delimiter = ',')]
        latencies: Option<Vec<u64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-execute a run directory and compare logs byte for byte.
    Replay { dir: PathBuf },
    /// Compute timely accuracy and jerk metrics for a run directory.
    Metrics {
        dir: PathBuf,
        /// Runtimes at which to evaluate timely metrics, microseconds.
        #[arg(long, value_delimiter = ',')]
        runtimes: Option<Vec<u64>>,
    },
    /// Replay a run directory and write its Chrome trace JSON.
    Trace {
        dir: PathBuf,
        /// Output file; defaults to trace.json inside the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { overrides, out } => {
            let outcome = cmd_run(&overrides.config()?, &out)?;
            println!(
                "collided={} goal_reached={} completion={} planner_p99_micros={} hash={}",
                outcome.collided, outcome.goal_reached, outcome.completion_time, outcome.planner_p99_micros, outcome.runlog_hash
            );
        }
        Command::Sweep {
            overrides,
            presets,
            speeds,
            latencies,
            out,
        } => {
            let axes = SweepAxes {
                presets,
                speeds,
                latencies_micros: latencies,
            };
            for r in cmd_sweep(&overrides.config()?, &axes, &out)? {
                println!(
                    "{} speed={} latency={} -> {}",
                    r.preset,
                    r.target_speed,
                    r.latency_micros.map_or("preset".into(), |l| l.to_string()),
                    if r.collided { "collide" } else { "avoid" }
                );
            }
        }
        Command::Replay { dir } => {
            cmd_replay(&dir)?;
            println!("replay identical");
        }
        Command::Metrics { dir, runtimes } => {
            let mut spec = MetricSpec::default();
            if let Some(r) = runtimes {
                spec.runtimes_micros = r;
            }
            let summary = cmd_metrics(&dir, &spec)?;
            println!("{summary:#}");
        }
        Command::Trace { dir, out } => {
            let path = cmd_trace(&dir, out.as_deref())?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
