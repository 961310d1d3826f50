//! Command-line front end for the `qthermo` simulator.
//!
//! Exit codes: 0 on success, 1 for invalid input, 2 when a check fails.

pub mod checks;
pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qthermo::demon::FeedbackKind;
use qthermo::emulator::ThermalAngle;
use qthermo::states::CorrelationKind;

use crate::commands::{Invalid, Outcome};
use crate::config::{RunConfig, SchemeChoice};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "qthermo",
    version,
    about = "Conditional entropy production and dissipative information simulator"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Quasistatic collisional work-extraction protocol.
    Collision(CollisionArgs),
    /// Exact two-point-measurement trajectory statistics of one collision.
    Trajectories(TrajectoryArgs),
    /// Random feedback gates applied by a qubit demon.
    Demon(DemonArgs),
    /// Shot-level emulation of the circuit experiment.
    Emulate(EmulateArgs),
    /// Randomized checks of the entropy-production identities and bounds.
    Verify(VerifyArgs),
}

fn parse_kind<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_lowercase())).map_err(|e| e.to_string())
}

fn correlation(s: &str) -> Result<CorrelationKind, String> {
    parse_kind(s)
}

fn feedback(s: &str) -> Result<FeedbackKind, String> {
    parse_kind(s)
}

#[derive(Debug, Args)]
pub struct CollisionArgs {
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub e_initial: Option<f64>,
    #[arg(long)]
    pub e_final: Option<f64>,
    #[arg(long)]
    pub delta_e: Option<f64>,
    #[arg(long)]
    pub g: Option<f64>,
    /// classical, quantum or product.
    #[arg(long, value_parser = correlation)]
    pub correlation: Option<CorrelationKind>,
    #[arg(long)]
    pub noise: Option<f64>,
    /// Keep each collision's M-S-R state and report the per-step conditional
    /// mutual information.
    #[arg(long)]
    pub retain_msr: bool,
}

#[derive(Debug, Args)]
pub struct TrajectoryArgs {
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub e_s: Option<f64>,
    #[arg(long)]
    pub e_r: Option<f64>,
    #[arg(long)]
    pub g: Option<f64>,
    #[arg(long, value_parser = correlation)]
    pub correlation: Option<CorrelationKind>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeChoice>,
}

#[derive(Debug, Args)]
pub struct DemonArgs {
    /// Inverse temperature; repeat for several scatter files.
    #[arg(long = "beta")]
    pub betas: Vec<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// unitary or measurement.
    #[arg(long, value_parser = feedback)]
    pub kind: Option<FeedbackKind>,
}

#[derive(Debug, Args)]
pub struct EmulateArgs {
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub e_s: Option<f64>,
    #[arg(long)]
    pub e_r: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub g: Option<f64>,
    #[arg(long)]
    pub shots: Option<u64>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Per-qubit readout flip probability.
    #[arg(long)]
    pub readout_flip: Option<f64>,
    /// Use exact circuit probabilities instead of sampled counts.
    #[arg(long)]
    pub exact: bool,
    /// Prepare the reservoir with the 2·arctan(e^{βE}) angle, which inverts its populations.
    #[arg(long)]
    pub inverted_thermal_angle: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub instances: Option<usize>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeChoice>,
    /// Negate the dissipative information before checking.
    #[arg(long)]
    pub inject_sign_flip: bool,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

/// Configuration after applying file values, then flags.
pub fn resolve(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.common.config {
        Some(path) => RunConfig::load(path).map_err(|e| Invalid(format!("{e:#}")))?,
        None => RunConfig::default(),
    };
    set(&mut cfg.seed, cli.common.seed);
    match &cli.command {
        Command::Collision(a) => {
            let c = &mut cfg.collision;
            set(&mut c.beta, a.beta);
            set(&mut c.e_initial, a.e_initial);
            set(&mut c.e_final, a.e_final);
            set(&mut c.delta_e, a.delta_e);
            set(&mut c.g, a.g);
            set(&mut c.correlation, a.correlation);
            set(&mut c.noise, a.noise);
            c.retain_msr |= a.retain_msr;
        }
        Command::Trajectories(a) => {
            let t = &mut cfg.trajectories;
            set(&mut t.beta, a.beta);
            set(&mut t.e_s, a.e_s);
            set(&mut t.e_r, a.e_r);
            set(&mut t.g, a.g);
            set(&mut t.correlation, a.correlation);
            set(&mut t.noise, a.noise);
            set(&mut t.scheme, a.scheme);
        }
        Command::Demon(a) => {
            let d = &mut cfg.demon;
            if !a.betas.is_empty() {
                d.betas = a.betas.clone();
            }
            set(&mut d.samples, a.samples);
            set(&mut d.kind, a.kind);
        }
        Command::Emulate(a) => {
            let e = &mut cfg.emulate;
            set(&mut e.beta, a.beta);
            set(&mut e.e_s, a.e_s);
            set(&mut e.e_r, a.e_r);
            set(&mut e.noise, a.noise);
            set(&mut e.g, a.g);
            set(&mut e.shots_per_rep, a.shots);
            set(&mut e.reps, a.reps);
            if a.readout_flip.is_some() {
                e.readout_flip_prob = a.readout_flip;
            }
            e.exact |= a.exact;
            if a.inverted_thermal_angle {
                e.thermal_angle = ThermalAngle::Inverted;
            }
        }
        Command::Verify(a) => {
            let v = &mut cfg.verify;
            set(&mut v.instances, a.instances);
            set(&mut v.scheme, a.scheme);
            v.inject_sign_flip |= a.inject_sign_flip;
        }
    }
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> anyhow::Result<Outcome> {
    let cfg = resolve(cli)?;
    let (out, format) = (&cli.common.out, cli.common.format);
    match cli.command {
        Command::Collision(_) => commands::cmd_collision(&cfg, out, format),
        Command::Trajectories(_) => commands::cmd_trajectories(&cfg, out, format),
        Command::Demon(_) => commands::cmd_demon(&cfg, out, format),
        Command::Emulate(_) => commands::cmd_emulate(&cfg, out, format),
        Command::Verify(_) => commands::cmd_verify(&cfg, out, format),
    }
}

/// Parse, run and report; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
        }
    };
    match execute(&cli) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            match outcome.check_failure {
                Some(msg) => {
                    eprintln!("check failed: {msg}");
                    EXIT_CHECK_FAILED
                }
                None => EXIT_OK,
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_INVALID
        }
    }
}
