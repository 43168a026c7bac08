//! The `entsim` command line: Monte-Carlo sweeps and closed-form analysis
//! for entanglement routing on repeater grids, written as CSV.

mod commands;
mod config;
mod error;
mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{canonical_key, read_config_file, RawConfig, Settings};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "entsim", version, about, arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Single-path rate for each distance.
    SweepDistance(Opts),
    /// Single-path rate for p = 0.1, 0.2, …, 1.0.
    SweepP(Opts),
    /// Link-disjoint multipath rate (k defaults to 4).
    Multipath(Opts),
    /// Mean route length over iterations that found a route.
    Hops(Opts),
    /// Closed-form rates, bounds and root geometry per distance.
    Analyze(Opts),
    /// Self-avoiding path counts between two nodes.
    EnumeratePaths(Opts),
}

#[derive(Debug, Args)]
struct Opts {
    /// Flat `key = value` file; flags override its values.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// sync, dodag or ghs; a comma-separated list runs each in turn.
    #[arg(long)]
    protocol: Option<String>,
    #[arg(long)]
    side: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    q: Option<String>,
    /// Coherence time in unit times, or `inf`.
    #[arg(long = "t-co", value_name = "N|inf")]
    t_co: Option<String>,
    /// `4`, `2,4,6`, `1..10` or `2..10:2`.
    #[arg(long)]
    distance: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    iterations: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Maintenance unit times before each request (default 3·T_co + 2·side).
    #[arg(long)]
    warmup: Option<String>,
    /// Route DODAG requests through the root.
    #[arg(long)]
    via_root_only: bool,
    /// Keep each async network running across an epoch of requests instead
    /// of rebuilding it for every iteration.
    #[arg(long)]
    continuous: bool,
    /// Requests per warm-up in continuous mode (default 500).
    #[arg(long)]
    epoch: Option<String>,
    /// Output CSV path; stdout when absent.
    #[arg(long, value_name = "FILE")]
    out: Option<String>,
    /// Write the protocol trace of the first iteration of each point here.
    #[arg(long, value_name = "FILE")]
    trace: Option<String>,
    /// Node index (enumerate-paths).
    #[arg(long)]
    source: Option<String>,
    #[arg(long)]
    target: Option<String>,
    /// Number of path lengths to enumerate.
    #[arg(long)]
    m: Option<String>,
}

impl Opts {
    fn raw(&self) -> Result<RawConfig, CliError> {
        let mut raw = match &self.config {
            Some(path) => read_config_file(path)?,
            None => RawConfig::new(),
        };
        let flags = [
            ("protocol", &self.protocol),
            ("side", &self.side),
            ("p", &self.p),
            ("q", &self.q),
            ("t_co", &self.t_co),
            ("distance", &self.distance),
            ("k", &self.k),
            ("iterations", &self.iterations),
            ("seed", &self.seed),
            ("warmup", &self.warmup),
            ("epoch", &self.epoch),
            ("out", &self.out),
            ("trace", &self.trace),
            ("source", &self.source),
            ("target", &self.target),
            ("m", &self.m),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                raw.insert(canonical_key(key), v.clone());
            }
        }
        for (key, set) in [("via_root_only", self.via_root_only), ("continuous", self.continuous)] {
            if set {
                raw.insert(key.to_string(), "true".into());
            }
        }
        Ok(raw)
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("ENTSIM_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::Usage(format!("invalid ENTSIM_THREADS `{value}`: expected a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let (name, opts) = match &cli.command {
        Command::SweepDistance(o) => ("sweep-distance", o),
        Command::SweepP(o) => ("sweep-p", o),
        Command::Multipath(o) => ("multipath", o),
        Command::Hops(o) => ("hops", o),
        Command::Analyze(o) => ("analyze", o),
        Command::EnumeratePaths(o) => ("enumerate-paths", o),
    };
    let settings = Settings::resolve(&opts.raw()?)?;
    let bytes = match cli.command {
        Command::SweepDistance(_) => commands::sweep_distance(name, &settings)?,
        Command::SweepP(_) => commands::sweep_p(name, &settings)?,
        Command::Multipath(_) => commands::multipath(name, &settings)?,
        Command::Hops(_) => commands::hops(name, &settings)?,
        Command::Analyze(_) => commands::analyze(&settings)?,
        Command::EnumeratePaths(_) => commands::enumerate_paths(&settings)?,
    };
    output::emit(settings.out.as_deref(), &bytes)
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status: 0, 1 for runtime errors, 2 for usage errors.
pub fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::parse_from(args);
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("entsim: {e}");
            e.exit_code() as u8
        }
    }
}
