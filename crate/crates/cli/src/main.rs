mod commands;
mod report;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Emulator for an eight-ion ququart processor.
#[derive(Debug, Parser)]
#[command(name = "ququart", version, about)]
pub struct Cli {
    /// Master seed; every shot draws from its own stream derived from it.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Shots per circuit (each command has its own default).
    #[arg(long, global = true)]
    pub shots: Option<usize>,
    /// Calibration file, `default`, or `off`. Falls back to
    /// $QUQUART_CALIBRATION, then `default`.
    #[arg(long, global = true)]
    pub noise: Option<String>,
    /// Write the full report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a circuit file and print the outcome histogram.
    Run(RunArgs),
    #[command(subcommand)]
    Bench(BenchCommand),
    #[command(subcommand)]
    Algo(AlgoCommand),
    #[command(subcommand)]
    Chain(ChainCommand),
    #[command(subcommand)]
    Iqae(IqaeCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Qubit,
    Ququart,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub circuit: String,
    /// Encoding for qubit-level circuits.
    #[arg(long, value_enum, default_value_t = RegimeArg::Qubit)]
    pub regime: RegimeArg,
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Single-ququart randomized benchmarking on one `0↔j` transition.
    Rb(RbArgs),
    /// Bell-state fidelity from population and parity oscillation.
    Parity(ParityArgs),
}

#[derive(Debug, Args)]
pub struct RbArgs {
    #[arg(long, default_value_t = 1)]
    pub level: usize,
    /// Synthetic depolarizing strength per Clifford instead of calibrated noise.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, default_value_t = 100)]
    pub max_length: usize,
    #[arg(long, default_value_t = 2)]
    pub step: usize,
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct ParityArgs {
    #[arg(long, default_value = "0,1")]
    pub ions: String,
    #[arg(long, default_value = "pi/4")]
    pub chi: String,
    #[arg(long, default_value_t = 16)]
    pub points: usize,
    /// State-vector probabilities instead of shots.
    #[arg(long)]
    pub exact: bool,
}

#[derive(Debug, Subcommand)]
pub enum AlgoCommand {
    /// Bernstein–Vazirani for a secret bit string.
    Bv(BvArgs),
    /// One Grover iteration on two qubits.
    Grover(GroverArgs),
}

#[derive(Debug, Args)]
pub struct BvArgs {
    /// Secret bit string, or `all` for both one-bit secrets.
    #[arg(long, default_value = "all")]
    pub secret: String,
    #[arg(long, value_enum, default_value_t = RegimeArg::Qubit)]
    pub regime: RegimeArg,
    #[arg(long)]
    pub exact: bool,
}

#[derive(Debug, Args)]
pub struct GroverArgs {
    /// Marked item 0..3, or `all`.
    #[arg(long, default_value = "all")]
    pub secret: String,
    #[arg(long)]
    pub exact: bool,
}

#[derive(Debug, Subcommand)]
pub enum ChainCommand {
    /// Equilibrium positions and normal modes.
    Modes(TrapArgs),
    /// Amplitude-segmented MS pulse that closes every radial mode.
    PulseShape(PulseArgs),
}

#[derive(Debug, Args)]
pub struct TrapArgs {
    /// TOML trap file; flags below override its fields.
    #[arg(long)]
    pub config: Option<String>,
    #[arg(long)]
    pub n_ions: Option<usize>,
    /// Radial x secular frequency, Hz.
    #[arg(long)]
    pub fx: Option<f64>,
    #[arg(long)]
    pub fy: Option<f64>,
    /// Axial secular frequency, Hz.
    #[arg(long)]
    pub fz: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PulseArgs {
    #[command(flatten)]
    pub trap: TrapArgs,
    #[arg(long, default_value = "0,1")]
    pub ions: String,
    #[arg(long, default_value = "pi/4")]
    pub chi: String,
    /// Gate duration, µs.
    #[arg(long, default_value_t = 800.0)]
    pub duration_us: f64,
    /// Drive detuning above the highest radial mode, kHz.
    #[arg(long, default_value_t = 10.0)]
    pub detuning_khz: f64,
    /// Defaults to 2N+1.
    #[arg(long)]
    pub segments: Option<usize>,
    /// Peak Rabi frequency cap, kHz (×2π).
    #[arg(long, default_value_t = 500.0)]
    pub power_cap_khz: f64,
    /// Points on the ±2 kHz secular-drift scan.
    #[arg(long, default_value_t = 41)]
    pub robustness_points: usize,
}

#[derive(Debug, Subcommand)]
pub enum IqaeCommand {
    /// Ground-energy estimate from a Hamiltonian file.
    Solve(IqaeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Exact,
    Sampled,
}

#[derive(Debug, Args)]
pub struct IqaeArgs {
    pub hamiltonian: String,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Initial bit string; overrides an `init` line in the file.
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long, value_enum, default_value_t = BackendArg::Exact)]
    pub backend: BackendArg,
    #[arg(long, default_value_t = ququart::iqae::DEFAULT_EPS_CUT)]
    pub eps_cut: f64,
}

/// Exit status per error category.
fn exit_code(category: &str) -> u8 {
    match category {
        "usage" => 2,
        "parse" => 3,
        "io" => 4,
        "validation" => 5,
        "unsupported" => 6,
        "numerical" => 7,
        "capacity" => 8,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("error_category = usage");
            eprint!("{e}");
            return ExitCode::from(exit_code("usage"));
        }
    };
    match commands::execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error_category = {}", e.category());
            eprintln!("error = {e}");
            ExitCode::from(exit_code(e.category()))
        }
    }
}
