use std::net::Ipv4Addr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Packet-level signatures for smart-home device events.
#[derive(Debug, Parser)]
#[command(name = "pktsig", version, about)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract signatures from a labelled training capture.
    Train(TrainArgs),
    /// Match signatures against a capture.
    Detect(DetectArgs),
    /// Check signatures against a labelled capture: every match must fall in an event window.
    Validate(ValidateArgs),
    /// Compare two signatures position by position.
    Compare(CompareArgs),
    /// Simulate a traffic-shaping defense and score what still leaks.
    Defend(DefendArgs),
    /// Generate a synthetic capture with ground truth.
    Gen(GenArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Wan,
    Wifi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Match {
    Exact,
    Range,
    Relaxed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Strategy {
    PadMtuVpn,
    PadMtuTlsPerConn,
    PadMtuHybrid,
    StpVpn,
}

#[derive(Debug, Args)]
struct CaptureArgs {
    /// Capture file (classic pcap, Ethernet or radiotap).
    #[arg(long)]
    pcap: PathBuf,
    /// Roster of local device and phone addresses (TOML).
    #[arg(long)]
    roster: PathBuf,
}

#[derive(Debug, Args)]
struct MatchArgs {
    #[arg(long, value_enum, default_value = "wan")]
    mode: Mode,
    #[arg(long = "match", value_enum, default_value = "range")]
    strategy: Match,
    /// Bytes added on both sides of each position under relaxed matching.
    #[arg(long, required_if_eq("strategy", "relaxed"))]
    delta: Option<u32>,
    /// Range-matching radius in bytes.
    #[arg(long, default_value_t = 10.0)]
    eps: f64,
    /// Frame overhead added to layer-3 lengths in WiFi mode.
    #[arg(long)]
    layer2_offset: Option<u32>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    capture: CaptureArgs,
    /// Event log: one `<epoch seconds> <label>` per line.
    #[arg(long)]
    events: PathBuf,
    /// Device name used in signature ids.
    #[arg(long)]
    device: String,
    /// Event window in seconds.
    #[arg(long = "window-t", default_value_t = 15.0)]
    window_t: f64,
    /// Clustering radius in bytes.
    #[arg(long, default_value_t = 10.0)]
    eps: f64,
    /// Override the minimum cluster density (default 0.9 × events per label).
    #[arg(long)]
    min_pts: Option<usize>,
    #[arg(long, default_value_t = 80)]
    layer2_offset: u32,
    /// Matching used when validating candidates.
    #[arg(long = "match", value_enum, default_value = "range")]
    strategy: Match,
    /// Directory for the `.sig` files.
    #[arg(long)]
    out: PathBuf,
    /// Structured report (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[command(flatten)]
    capture: CaptureArgs,
    /// Signature files.
    #[arg(long = "sig", required = true, num_args = 1..)]
    sigs: Vec<PathBuf>,
    #[command(flatten)]
    matching: MatchArgs,
    /// Event log to score against.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Seconds after an event within which a match counts for it.
    #[arg(long = "window-t", default_value_t = 15.0)]
    window_t: f64,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[command(flatten)]
    capture: CaptureArgs,
    #[arg(long)]
    events: PathBuf,
    #[arg(long = "sig", required = true, num_args = 1..)]
    sigs: Vec<PathBuf>,
    #[arg(long = "window-t", default_value_t = 15.0)]
    window_t: f64,
    #[command(flatten)]
    matching: MatchArgs,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    first: PathBuf,
    second: PathBuf,
}

#[derive(Debug, Args)]
struct DefendArgs {
    #[command(flatten)]
    capture: CaptureArgs,
    #[arg(long)]
    sig: PathBuf,
    #[arg(long, value_enum)]
    strategy: Strategy,
    #[arg(long, default_value_t = 1500)]
    mtu: u32,
    #[arg(long, default_value_t = 52)]
    vpn_header_c2s: u32,
    #[arg(long, default_value_t = 49)]
    vpn_header_s2c: u32,
    /// Dummy events to inject (STP only).
    #[arg(long, default_value_t = 0)]
    dummies: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep only connections with these servers in the per-connection view.
    #[arg(long = "server")]
    servers: Vec<Ipv4Addr>,
    /// Event log of the true events.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long = "window-t", default_value_t = 15.0)]
    window_t: f64,
    /// Matching used to locate true events for STP.
    #[arg(long = "match", value_enum, default_value = "range")]
    strategy_match: Match,
    #[arg(long, required_if_eq("strategy_match", "relaxed"))]
    delta: Option<u32>,
    #[arg(long, default_value_t = 10.0)]
    eps: f64,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Trace profile (TOML).
    #[arg(long)]
    profile: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Noise to add, as `kind=rate` (retransmissions, interleaved-flows, off-window-chatter).
    #[arg(long)]
    noise: Vec<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { commands::EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match commands::run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
