use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use beamtrack::harness::{self, ConstraintMode, ExperimentConfig, ExperimentKind, OneOrMany};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "beamtrack", version, about = "Sensor-network beamforming and tracking experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mean posterior MSE versus number of sensors.
    MseSweep(Common),
    /// Equal-power outage probability versus total power.
    OutageSweep(Common),
    /// Multi-step tracking: filter recursion against simulated error.
    Track(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Sum,
    Individual,
    Equal,
    All,
}

impl From<Mode> for ConstraintMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Sum => ConstraintMode::Sum,
            Mode::Individual => ConstraintMode::Individual,
            Mode::Equal => ConstraintMode::EqualPower,
            Mode::All => ConstraintMode::All,
        }
    }
}

#[derive(Args)]
struct Common {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sensor counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    sensors: Option<Vec<usize>>,
    /// Total power budgets, comma separated.
    #[arg(long, value_delimiter = ',')]
    pmax: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Outage MSE threshold.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Monte Carlo trials per point.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    realizations: Option<usize>,
    /// Tracking steps.
    #[arg(long)]
    steps: Option<usize>,
    /// CSV output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a JSON mirror next to the CSV.
    #[arg(long)]
    json: bool,
}

fn build_config(kind: ExperimentKind, c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    cfg.experiment = kind;
    if let Some(s) = c.seed {
        cfg.seed = Some(s);
    }
    if let Some(n) = &c.sensors {
        cfg.n_sensors = Some(OneOrMany::Many(n.clone()));
    }
    if let Some(p) = &c.pmax {
        cfg.p_max = Some(OneOrMany::Many(p.clone()));
    }
    if let Some(m) = c.mode {
        cfg.constraint_mode = m.into();
    }
    if let Some(e) = c.epsilon {
        cfg.epsilon = e;
    }
    if let Some(t) = c.trials {
        cfg.trials = t;
    }
    if let Some(r) = c.realizations {
        cfg.realizations = r;
    }
    if let Some(s) = c.steps {
        cfg.steps = s;
    }
    if let Some(o) = &c.out {
        cfg.output_path = Some(o.display().to_string());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let (kind, common) = match &cli.command {
        Command::MseSweep(c) => (ExperimentKind::MseVsSensors, c),
        Command::OutageSweep(c) => (ExperimentKind::OutageVsPower, c),
        Command::Track(c) => (ExperimentKind::TrackingTrace, c),
    };
    let cfg = build_config(kind, common)?;
    let rows = harness::run(&cfg)?;
    match &cfg.output_path {
        Some(path) => harness::emit_results(&rows, path.as_ref(), common.json)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(harness::to_csv(&rows).as_bytes())?;
            if common.json {
                writeln!(stdout, "{}", harness::output::to_json(&rows))?;
            }
        }
    }
    Ok(())
}
