//! mplab: a command-line lab for multiperiodic sequences and processes.
//!
//! Subcommands cover token generation, closed-form verification against
//! simulation, exact entropy oracles for capped schedules, scaling scans
//! of the memory-based learner, exponent fits, and SVG plots. Every
//! command writes a run manifest with output digests, and every
//! stochastic command takes an explicit `--rng-seed` — there is no silent
//! entropy source, so reruns are byte-identical.
//!
//! Exit codes: 0 success/pass, 1 verification failure or runtime error,
//! 2 usage error, 3 unsupported request or enumeration budget exceeded.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

mod manifest;
mod run;
mod svg;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_UNSUPPORTED: i32 = 3;

#[derive(Parser)]
#[command(
    name = "mplab",
    version,
    about = "Multiperiodic sequence lab: generate, verify, measure, scan, fit, plot"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a token stream (optionally coupled with knowledge bits).
    Generate(GenerateArgs),
    /// Check closed-form statistics against generated streams.
    Verify(VerifyArgs),
    /// Exact block entropies of a capped schedule by full enumeration.
    Entropy(EntropyArgs),
    /// Scaling scan of the memory-based learner over an (N, T) grid.
    Scan(ScanArgs),
    /// Fit scaling exponents from a scan table.
    Fit(FitArgs),
    /// Emit SVG figures.
    Plot(PlotArgs),
}

#[derive(Args)]
pub struct GenerateArgs {
    /// Schedule literal: constant:p | linear:c | power:c:gamma |
    /// capped:p1,p2,... | explicit:p1,...;tail=<literal>
    #[arg(long)]
    pub schedule: String,
    /// Seed mode: minimal | list:s1,s2,... | random
    #[arg(long, default_value = "minimal")]
    pub seeds: String,
    /// RNG seed (mandatory when any randomness is requested).
    #[arg(long)]
    pub rng_seed: Option<u64>,
    /// Number of tokens.
    #[arg(short = 'T', long = "tokens")]
    pub tokens: u64,
    /// Couple with knowledge bits: iid:SEED | fixed:SEED
    #[arg(long)]
    pub knowledge: Option<String>,
    /// txt (one token per line), csv (t,k,z when coupled), or bin
    /// (little-endian u32, plus one fact byte when coupled).
    #[arg(long, default_value = "txt")]
    pub format: String,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub schedule: String,
    /// Largest type index checked.
    #[arg(long, default_value_t = 20)]
    pub r_max: u64,
    /// Length of the minimal-seed stream used for frequency checks.
    #[arg(short = 'T', long = "tokens", default_value_t = 1_000_000)]
    pub tokens: u64,
    /// Base seed for the random-seed bound checks.
    #[arg(long)]
    pub rng_seed: Option<u64>,
    /// Number of random-seed runs for the uniform waiting bound.
    #[arg(long, default_value_t = 200)]
    pub reps: u64,
    /// Tolerance for |f_hat − f|.
    #[arg(long, default_value_t = 0.01)]
    pub tolerance: f64,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args)]
pub struct EntropyArgs {
    /// Capped schedule literal.
    #[arg(long)]
    pub schedule: String,
    #[arg(short = 'T', long = "tokens")]
    pub tokens: u64,
    /// Display entropies in bits instead of nats (formatting only).
    #[arg(long, default_value_t = false)]
    pub bits: bool,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args)]
pub struct ScanArgs {
    /// Linear-growth schedule literal (e.g. linear:1).
    #[arg(long)]
    pub schedule: String,
    /// Parameter grid: pow2:4..14 or a comma list.
    #[arg(long)]
    pub n_grid: String,
    /// Training-token grid: pow10:3..7 or a comma list.
    #[arg(long)]
    pub t_grid: String,
    /// Scored test tokens per cell.
    #[arg(long, default_value_t = 1_000_000)]
    pub test_tokens: u64,
    #[arg(long, default_value_t = 5)]
    pub reps: u32,
    #[arg(long)]
    pub rng_seed: u64,
    /// Worker threads for grid cells.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args)]
pub struct FitArgs {
    /// Path to scan.csv.
    #[arg(long)]
    pub scan: PathBuf,
    /// Schedule literal; defaults to the scan manifest's schedule.
    #[arg(long)]
    pub schedule: Option<String>,
    /// Defaults to the scan file's directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args)]
pub struct PlotArgs {
    #[command(subcommand)]
    pub cmd: PlotCmd,
}

#[derive(Subcommand)]
pub enum PlotCmd {
    /// Type growth n_t for one or more schedules, with power-law fits.
    TypeGrowth {
        /// Comma-separated schedule literals.
        #[arg(long)]
        schedules: String,
        #[arg(short = 'T', long = "tokens")]
        tokens: u64,
        #[arg(long, default_value_t = 16)]
        checkpoints_per_decade: u32,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Risk-vs-N and risk-vs-T panels from a scan table.
    Risk {
        #[arg(long)]
        scan: PathBuf,
        #[arg(long)]
        schedule: Option<String>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn main() {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Generate(a) => run::cmd_generate(a, argv),
        Cmd::Verify(a) => run::cmd_verify(a, argv),
        Cmd::Entropy(a) => run::cmd_entropy(a, argv),
        Cmd::Scan(a) => run::cmd_scan(a, argv),
        Cmd::Fit(a) => run::cmd_fit(a, argv),
        Cmd::Plot(a) => run::cmd_plot(a, argv),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("mplab: {e}");
            std::process::exit(e.code);
        }
    }
}
