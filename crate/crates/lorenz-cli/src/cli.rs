//! Command-line front end. Every subcommand builds a [`Config`] and runs
//! the same pipeline `lorenz run` would.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lorenz_measures::induced::{DEFAULT_DEPTH, DEFAULT_R_MAX};
use lorenz_measures::orbit::DEFAULT_C_TOL;
use lorenz_measures::recurrence::DEFAULT_DELTA;
use lorenz_measures::Side;

use crate::config::{
    CertifyConfig, Config, ConstructConfig, Fixture, InduceConfig, MapSource, MeasureConfig, OrbitConfig, SrbConfig,
    TuneConfig, TuneSide,
};
use crate::pipeline::run;

/// Exit status when a pipeline finishes but an invariant check fails.
pub const EXIT_VIOLATION: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "lorenz", version, about = "Expanding Lorenz maps, induced towers and super-expanding measures")]
pub struct Cli {
    /// Directory for report.json and CSV series; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a JSON config document.
    Run { config: PathBuf },
    /// Orbit as CSV: step, x, symbol, f', cumulative log-derivative.
    Orbit(OrbitArgs),
    /// Recurrence constants, bound-period checks and the Birkhoff certificate.
    Recurrence(RecurrenceArgs),
    /// Nice interval, first-return branches and the cylinder tower.
    Induce(InduceArgs),
    /// Zeta-weighted measure report plus sampled prefix averages.
    Measure(MeasureArgs),
    /// Full construction report: gate, induced structure and measure.
    Construct(ConstructArgs),
    /// Move a singular value so its orbit hits c.
    Tune(TuneArgs),
    /// Birkhoff averages from the singular values against random starts.
    Srb(SrbArgs),
}

#[derive(Debug, Args)]
pub struct MapArgs {
    /// Map document (JSON).
    #[arg(long, conflicts_with = "fixture", required_unless_present = "fixture")]
    pub map: Option<PathBuf>,
    /// Built-in reference map.
    #[arg(long, value_parser = parse_fixture)]
    pub fixture: Option<Fixture>,
}

impl MapArgs {
    fn source(&self) -> MapSource {
        match (&self.map, self.fixture) {
            (Some(file), _) => MapSource::File { file: file.clone() },
            (None, Some(f)) => MapSource::Fixture(f),
            (None, None) => unreachable!("clap requires one of --map and --fixture"),
        }
    }
}

fn parse_fixture(s: &str) -> Result<Fixture, String> {
    match s.to_ascii_uppercase().as_str() {
        "K1" => Ok(Fixture::K1),
        "K2" => Ok(Fixture::K2),
        _ => Err(format!("unknown fixture {s:?}; expected K1 or K2")),
    }
}

fn parse_side(s: &str) -> Result<Side, String> {
    match s {
        "left" | "L" => Ok(Side::Left),
        "right" | "R" => Ok(Side::Right),
        _ => Err(format!("side must be left or right, not {s:?}")),
    }
}

fn parse_tune_side(s: &str) -> Result<TuneSide, String> {
    match s {
        "both" => Ok(TuneSide::Both),
        s => parse_side(s).map(|side| match side {
            Side::Left => TuneSide::Left,
            Side::Right => TuneSide::Right,
        }),
    }
}

fn parse_bracket(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("bracket is lo,hi")?;
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    Ok((num(a)?, num(b)?))
}

#[derive(Debug, Args)]
pub struct OrbitArgs {
    #[command(flatten)]
    pub map: MapArgs,
    #[arg(long, conflicts_with = "side", required_unless_present = "side")]
    pub x0: Option<f64>,
    /// Start at f(c-) (left) or f(c+) (right).
    #[arg(long, value_parser = parse_side)]
    pub side: Option<Side>,
    #[arg(long)]
    pub steps: usize,
    #[arg(long, default_value_t = DEFAULT_C_TOL)]
    pub ctol: f64,
}

#[derive(Debug, Args)]
pub struct RecurrenceArgs {
    #[command(flatten)]
    pub map: MapArgs,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    /// Horizon of the singular-orbit averages behind M.
    #[arg(long, default_value_t = 10_000)]
    pub horizon: usize,
    #[arg(long, default_value_t = 4)]
    pub nmax: usize,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    /// Random starts for the Birkhoff certificate.
    #[arg(long, default_value_t = 20)]
    pub starts: usize,
    #[arg(long, default_value_t = 10_000)]
    pub steps: usize,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct InducedArgs {
    #[arg(long, default_value_t = 0.1)]
    pub rcap: f64,
    #[arg(long, default_value_t = 12)]
    pub max_word_len: usize,
    #[arg(long, default_value_t = DEFAULT_R_MAX)]
    pub rmax: usize,
    #[arg(long, default_value_t = DEFAULT_DEPTH)]
    pub depth: usize,
}

#[derive(Debug, Args)]
pub struct InduceArgs {
    #[command(flatten)]
    pub map: MapArgs,
    #[command(flatten)]
    pub induced: InducedArgs,
    /// List branches with return time up to this value.
    #[arg(long, default_value_t = 16)]
    pub list_through: usize,
}

#[derive(Debug, Args)]
pub struct MeasureArgs {
    #[command(flatten)]
    pub map: MapArgs,
    #[command(flatten)]
    pub induced: InducedArgs,
    #[arg(long)]
    pub ell: usize,
    #[arg(long)]
    pub alpha_mass: f64,
    #[arg(long, default_value_t = 10_000)]
    pub segments: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pub n_partial: usize,
}

#[derive(Debug, Args)]
pub struct ConstructArgs {
    #[command(flatten)]
    pub map: MapArgs,
    #[command(flatten)]
    pub induced: InducedArgs,
    #[arg(long)]
    pub ell: usize,
    #[arg(long)]
    pub alpha_mass: f64,
    #[arg(long, default_value_t = 10_000)]
    pub n_partial: usize,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub map: MapArgs,
    /// left, right or both.
    #[arg(long, value_parser = parse_tune_side)]
    pub side: TuneSide,
    /// Window for the moved singular value; the left window with `both`.
    #[arg(long, required_unless_present = "shoot_t")]
    pub eps: Option<f64>,
    /// Right window when both sides are tuned.
    #[arg(long)]
    pub eps_right: Option<f64>,
    #[arg(long, default_value_t = 60)]
    pub depth: usize,
    /// Shoot for this hit time instead of searching preimage chains.
    #[arg(long, requires = "bracket", conflicts_with = "eps")]
    pub shoot_t: Option<usize>,
    /// Parameter bracket `lo,hi` for shooting.
    #[arg(long, value_parser = parse_bracket, allow_hyphen_values = true)]
    pub bracket: Option<(f64, f64)>,
    /// Check the induced-structure hypotheses on the result at this cap.
    #[arg(long)]
    pub rcap: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SrbArgs {
    #[command(flatten)]
    pub map: MapArgs,
    #[arg(long, default_value_t = 2_000)]
    pub steps: usize,
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
    #[arg(long)]
    pub seed: u64,
}

impl Command {
    /// The config this invocation stands for.
    pub fn config(&self) -> anyhow::Result<Config> {
        Ok(match self {
            Command::Run { config } => {
                let text = std::fs::read_to_string(config)
                    .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", config.display()))?;
                let base = config.parent().unwrap_or(Path::new("."));
                Config::parse(&text, base)?
            }
            Command::Orbit(a) => Config::Orbit(OrbitConfig {
                map: a.map.source(),
                x0: a.x0,
                side: a.side,
                steps: a.steps,
                ctol: a.ctol,
            }),
            Command::Recurrence(a) => Config::TheoremBCertify(CertifyConfig {
                map: a.map.source(),
                seed: a.seed,
                delta: a.delta,
                horizon: a.horizon,
                n_max: a.nmax,
                samples: a.samples,
                starts: a.starts,
                steps: a.steps,
            }),
            Command::Induce(a) => Config::Induce(InduceConfig {
                map: a.map.source(),
                r_cap: a.induced.rcap,
                max_word_len: a.induced.max_word_len,
                r_max: a.induced.rmax,
                depth: a.induced.depth,
                list_through: a.list_through,
            }),
            Command::Measure(a) => Config::Measure(MeasureConfig {
                map: a.map.source(),
                ell: a.ell,
                alpha_mass: a.alpha_mass,
                seed: a.seed,
                segments: a.segments,
                r_cap: a.induced.rcap,
                max_word_len: a.induced.max_word_len,
                r_max: a.induced.rmax,
                depth: a.induced.depth,
                n_partial: a.n_partial,
            }),
            Command::Construct(a) => Config::TheoremAConstruct(ConstructConfig {
                map: a.map.source(),
                ell: a.ell,
                alpha_mass: a.alpha_mass,
                r_cap: a.induced.rcap,
                max_word_len: a.induced.max_word_len,
                r_max: a.induced.rmax,
                depth: a.induced.depth,
                n_partial: a.n_partial,
            }),
            Command::Tune(a) => Config::TuneToD(TuneConfig {
                map: a.map.source(),
                side: a.side,
                eps: a.eps,
                eps_right: a.eps_right,
                depth: a.depth,
                shoot_t: a.shoot_t,
                bracket: a.bracket,
                r_cap: a.rcap,
            }),
            Command::Srb(a) => Config::SrbDiagnostic(SrbConfig {
                map: a.map.source(),
                seed: a.seed,
                steps: a.steps,
                samples: a.samples,
            }),
        })
    }
}

/// Parse arguments, run, write artifacts. Errors go to stderr with exit 1;
/// invariant violations keep the artifacts and exit with [`EXIT_VIOLATION`].
pub fn main_with(cli: Cli) -> ExitCode {
    match execute(&cli) {
        Ok(violations) if violations.is_empty() => ExitCode::SUCCESS,
        Ok(violations) => {
            for v in &violations {
                eprintln!("violation: {v}");
            }
            ExitCode::from(EXIT_VIOLATION)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: &Cli) -> anyhow::Result<Vec<String>> {
    let config = cli.command.config()?;
    let artifacts = run(&config)?;
    match &cli.out {
        Some(dir) => artifacts.write_to(dir)?,
        None => print!("{}", artifacts.stdout_text()),
    }
    Ok(artifacts.violations)
}
