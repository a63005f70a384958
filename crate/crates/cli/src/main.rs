mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use einslot::{KeyConfig, KeyMode, TransformMethod};

use report::{execute, Failure, Settings};

#[derive(Parser)]
#[command(name = "einslot", version, about = "Einsum over packed slot vectors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an expression, check it against the plaintext oracle and report costs.
    Run(RunArgs),
    /// Print the phase-annotated operation listing of a reference-backend run.
    Trace(ExprArgs),
    /// List the rotation keys of a key configuration.
    Keys(KeysArgs),
}

#[derive(Args, Clone)]
pub struct ExprArgs {
    /// Explicit-output einsum equation, e.g. "ij,jk->ik".
    pub equation: String,
    /// Operand shapes, e.g. 4x5,5x2 (inputs drawn uniformly from [-1, 1)).
    #[arg(long, value_parser = parse_shapes, required_unless_present = "input", conflicts_with = "input")]
    pub shapes: Option<Shapes>,
    /// Operand tensor JSON files ({"shape": [..], "data": [..]}), one per operand.
    #[arg(long, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub slots: usize,
    /// Starting level of the encrypted inputs.
    #[arg(long, default_value_t = 4)]
    pub level: u32,
    /// Seed for random inputs and noise.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Transform::Bsgs)]
    pub transform: Transform,
}

#[derive(Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub expr: ExprArgs,
    #[arg(long, value_enum, default_value_t = BackendKind::Metered)]
    pub backend: BackendKind,
    #[arg(long, default_value_t = KeyMode::PowerOfTwo)]
    pub keys: KeyMode,
    /// Standard deviation of the Gaussian noise model.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Include the full operation trace in the report.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Args)]
struct KeysArgs {
    #[arg(long, default_value_t = 16384)]
    slots: usize,
    #[arg(long, default_value_t = KeyMode::PowerOfTwo)]
    keys: KeyMode,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Ref,
    Metered,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Transform {
    Bsgs,
    Hs,
}

impl From<Transform> for TransformMethod {
    fn from(t: Transform) -> Self {
        match t {
            Transform::Bsgs => TransformMethod::Bsgs,
            Transform::Hs => TransformMethod::HaleviShoup,
        }
    }
}

/// Operand shapes parsed from `4x5,5x2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shapes(pub Vec<Vec<usize>>);

fn parse_shapes(s: &str) -> Result<Shapes, String> {
    s.split(',')
        .map(|shape| {
            let shape = shape.trim();
            if shape.is_empty() {
                return Ok(Vec::new());
            }
            shape
                .split(['x', 'X', '×'])
                .map(|d| {
                    d.trim()
                        .parse::<usize>()
                        .map_err(|e| format!("bad extent {d:?} in {shape:?}: {e}"))
                })
                .collect()
        })
        .collect::<Result<_, _>>()
        .map(Shapes)
}

fn keys(args: &KeysArgs) -> ExitCode {
    let config = match KeyConfig::new(args.keys, args.slots) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let join = |v: Vec<i64>| v.iter().map(i64::to_string).collect::<Vec<_>>().join(" ");
    println!("{} keys at S={}", config.mode(), config.slot_count());
    println!(
        "power-of-two (+/-): {}",
        join(config.power_of_two_amounts())
    );
    if config.mode() == KeyMode::PowerOfTwoPlusBsgs {
        println!("baby steps: {}", join(config.baby_steps()));
        println!("giant steps: {}", join(config.giant_steps()));
    }
    println!("key count: {}", config.key_count());
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Keys(args) => return keys(args),
        Command::Run(args) => report::run(args),
        Command::Trace(args) => execute(args, &Settings::dry_run())
            .map(|outcome| println!("{}", outcome.output.trace))
            .map_err(Failure::Error),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Mismatch) => ExitCode::from(4),
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
