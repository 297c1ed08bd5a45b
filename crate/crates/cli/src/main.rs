//! `fmq`: command-line front end to the simulation harness.

use clap::{Args, Parser, Subcommand, ValueEnum};
use fmq_core::harness::{self, Command, ExperimentConfig, GridSpec, HarnessError, Overrides, SweepAttack};
use fmq_core::spectral::{CrosstalkMode, CrosstalkModel};
use fmq_core::Mode;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "fmq", version, about = "Frequency-multiplexed QKD and teleportation simulator")]
struct Cli {
    /// JSON experiment config; command-line flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Output directory for report.json and CSV tables.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ModeArg {
    Expectation,
    Sampled,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum AttackArg {
    Steal,
    StealResend,
    InterceptResend,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum LeakModeArg {
    Intensity,
    PhaseBlur,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run a multi-channel key distribution session.
    RunQkd,
    /// Sweep an attack over the tap transmission.
    AttackSweep(SweepArgs),
    /// Teleportation Monte Carlo over a squeezing grid.
    RunTeleport(TeleportArgs),
    /// Channel grid and pulse-shaper optics.
    DesignSetup(DesignArgs),
    /// Neighbour-leakage scan.
    CrosstalkTest(CrosstalkArgs),
    /// Run the built-in consistency suite.
    Validate,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_enum)]
    attack: Option<AttackArg>,
    /// Transmission grid as start:stop:step.
    #[arg(long)]
    t_grid: Option<String>,
    /// Parametric gain for the sweep; defaults to the session gain.
    #[arg(long)]
    gain: Option<f64>,
    /// Channel-bit trials per grid point.
    #[arg(long)]
    trials: Option<u64>,
}

#[derive(Args, Debug)]
struct TeleportArgs {
    /// Comma-separated squeezing gains.
    #[arg(long, value_delimiter = ',')]
    g_grid: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct DesignArgs {
    /// Modulator pixel pitch, m.
    #[arg(long)]
    pixel: Option<f64>,
    /// Beam diameter, m.
    #[arg(long)]
    aperture: Option<f64>,
    /// Centre wavelength, m.
    #[arg(long)]
    lambda: Option<f64>,
    /// Modulator span, m.
    #[arg(long)]
    span: Option<f64>,
}

#[derive(Args, Debug)]
struct CrosstalkArgs {
    /// Leakage per neighbour: `eps` or `left:right`; repeat or comma-separate.
    #[arg(long, value_delimiter = ',')]
    leak: Option<Vec<String>>,
    #[arg(long, value_enum, default_value = "intensity")]
    leak_mode: LeakModeArg,
}

fn parse_leak(s: &str, mode: CrosstalkMode) -> Result<CrosstalkModel, HarnessError> {
    let num = |p: &str| {
        p.trim()
            .parse::<f64>()
            .map_err(|_| HarnessError::Config(format!("bad leak value '{s}'")))
    };
    let (left, right) = match s.split_once(':') {
        Some((l, r)) => (num(l)?, num(r)?),
        None => {
            let e = num(s)?;
            (e, e)
        }
    };
    Ok(CrosstalkModel { left, right, mode })
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let command = match cli.command {
        Cmd::RunQkd => Command::RunQkd,
        Cmd::AttackSweep(_) => Command::AttackSweep,
        Cmd::RunTeleport(_) => Command::RunTeleport,
        Cmd::DesignSetup(_) => Command::DesignSetup,
        Cmd::CrosstalkTest(_) => Command::CrosstalkTest,
        Cmd::Validate => Command::Validate,
    };
    let mut config = match &cli.config {
        Some(path) => {
            let c = harness::read_config(path, false)?;
            if c.command != command {
                return Err(HarnessError::Config(format!(
                    "{}: config is for '{}' but '{}' was requested",
                    path.display(),
                    c.command.name(),
                    command.name()
                )));
            }
            c
        }
        None => ExperimentConfig::new(command),
    };
    let mut o = Overrides {
        seed: cli.seed,
        mode: cli.mode.map(|m| match m {
            ModeArg::Expectation => Mode::Expectation,
            ModeArg::Sampled => Mode::Sampled,
        }),
        output_dir: cli.out.clone(),
        ..Overrides::default()
    };
    match &cli.command {
        Cmd::AttackSweep(a) => {
            o.sweep_attack = a.attack.map(|a| match a {
                AttackArg::Steal => SweepAttack::Steal,
                AttackArg::StealResend => SweepAttack::StealResend,
                AttackArg::InterceptResend => SweepAttack::InterceptResend,
            });
            o.t_grid = a.t_grid.as_deref().map(GridSpec::parse).transpose()?;
            o.sweep_gain = a.gain;
            o.trials_per_point = a.trials;
        }
        Cmd::RunTeleport(a) => o.g_grid = a.g_grid.clone(),
        Cmd::DesignSetup(a) => {
            o.pixel = a.pixel;
            o.aperture = a.aperture;
            o.wavelength = a.lambda;
            o.span = a.span;
        }
        Cmd::CrosstalkTest(a) => {
            let mode = match a.leak_mode {
                LeakModeArg::Intensity => CrosstalkMode::Intensity,
                LeakModeArg::PhaseBlur => CrosstalkMode::PhaseBlur,
            };
            o.leaks = a
                .leak
                .as_ref()
                .map(|v| v.iter().map(|s| parse_leak(s, mode)).collect::<Result<Vec<_>, _>>())
                .transpose()?;
        }
        Cmd::RunQkd | Cmd::Validate => {}
    }
    o.apply(&mut config);
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli) -> Result<i32, HarnessError> {
    let config = build_config(cli)?;
    let bundle = harness::execute(&config)?;
    let dir = config.output_dir.clone().unwrap_or_else(|| PathBuf::from("fmq-out"));
    let files = harness::emit(&bundle, &dir)?;
    for c in &bundle.checks {
        let tag = match c.status {
            harness::CheckStatus::Pass => "PASS",
            harness::CheckStatus::Fail => "FAIL",
            harness::CheckStatus::Report => "INFO",
        };
        println!("{tag} {}: {}", c.name, c.detail);
    }
    for f in &files {
        println!("wrote {}", f.display());
    }
    match &bundle.error {
        Some(e) => eprintln!("error: {e}"),
        None => println!("{}: ok ({:.2} s)", config.command.name(), bundle.metadata.elapsed_seconds),
    }
    Ok(bundle.exit_code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let code = match run(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
