use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Instant;

use einslot::{
    decrypt_tensor, encrypt_tensor, naive_einsum_oracle, Backend, BackendConfig, CostReport,
    EinsumOutput, Engine, EngineOptions, ExecutionTrace, KeyMode, MeteredBackend, Operand,
    PackedTensor, ReferenceBackend, Tensor,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::{BackendKind, ExprArgs, RunArgs};

pub const EXACT_TOLERANCE: f64 = 1e-12;
pub const NOISY_TOLERANCE: f64 = 1e-4;

#[derive(Debug)]
pub enum CliError {
    Engine(einslot::Error),
    Input(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Engine(e) => e.kind(),
            CliError::Input(_) => "InvalidInput",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Engine(e) if e.is_capacity() => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Engine(e) => e.fmt(f),
            CliError::Input(msg) => f.write_str(msg),
        }
    }
}

impl From<einslot::Error> for CliError {
    fn from(e: einslot::Error) -> Self {
        CliError::Engine(e)
    }
}

pub enum Failure {
    Mismatch,
    Error(CliError),
}

pub struct Settings {
    pub backend: BackendKind,
    pub keys: KeyMode,
    pub noise: Option<f64>,
}

impl Settings {
    pub fn dry_run() -> Self {
        Settings {
            backend: BackendKind::Ref,
            keys: KeyMode::PowerOfTwo,
            noise: None,
        }
    }
}

pub struct Outcome {
    pub output: EinsumOutput,
    pub result: Tensor,
    pub inputs: Vec<Tensor>,
    pub wall_time_ms: f64,
}

#[derive(Debug, Serialize)]
pub struct Correctness {
    pub max_abs_error: f64,
    pub oracle_match: bool,
    pub tolerance: f64,
}

#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub kind: String,
    pub message: String,
}

/// The JSON document written by `run`. Every field is always present;
/// fields that do not apply are `null`.
#[derive(Debug, Serialize)]
pub struct ReportDocument {
    pub equation: String,
    pub shapes: Vec<Vec<usize>>,
    pub slot_count: usize,
    pub key_mode: Option<KeyMode>,
    pub backend: &'static str,
    pub correctness: Option<Correctness>,
    pub cost: Option<CostReport>,
    pub depth: Option<u32>,
    pub wall_time_ms: Option<f64>,
    pub trace: Option<ExecutionTrace>,
    pub error: Option<ErrorReport>,
}

fn load_inputs(args: &ExprArgs) -> Result<Vec<Tensor>, CliError> {
    if let Some(shapes) = &args.shapes {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        return Ok(shapes
            .0
            .iter()
            .map(|s| Tensor::random(s.clone(), &mut rng))
            .collect());
    }
    args.input.iter().map(|p| read_tensor(p)).collect()
}

fn read_tensor(path: &Path) -> Result<Tensor, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn make_backend(args: &ExprArgs, settings: &Settings) -> Result<Box<dyn Backend>, CliError> {
    let mut config = BackendConfig::new(args.slots, args.level);
    if let Some(stddev) = settings.noise {
        config = config.with_noise(stddev, args.seed);
    }
    Ok(match settings.backend {
        BackendKind::Ref => Box::new(ReferenceBackend::new(config)?),
        BackendKind::Metered => Box::new(MeteredBackend::new(config, settings.keys)?),
    })
}

/// Encrypt the inputs, evaluate and decrypt.
pub fn execute(args: &ExprArgs, settings: &Settings) -> Result<Outcome, CliError> {
    let inputs = load_inputs(args)?;
    let backend = make_backend(args, settings)?;
    let packed = inputs
        .iter()
        .map(|t| encrypt_tensor(backend.as_ref(), t))
        .collect::<einslot::Result<Vec<PackedTensor>>>()?;
    let operands: Vec<Operand> = packed.iter().map(Operand::Encrypted).collect();
    let options = EngineOptions {
        transform: args.transform.into(),
    };
    let engine = Engine::with_options(backend.as_ref(), options);
    let start = Instant::now();
    let output = engine.einsum(&args.equation, &operands)?;
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    let result = decrypt_tensor(backend.as_ref(), &output.tensor);
    Ok(Outcome {
        output,
        result,
        inputs,
        wall_time_ms,
    })
}

pub fn run(args: &RunArgs) -> Result<(), Failure> {
    let settings = Settings {
        backend: args.backend,
        keys: args.keys,
        noise: args.noise,
    };
    let mut doc = ReportDocument {
        equation: args.expr.equation.clone(),
        shapes: args.expr.shapes.clone().map(|s| s.0).unwrap_or_default(),
        slot_count: args.expr.slots,
        key_mode: (args.backend == BackendKind::Metered).then_some(args.keys),
        backend: match args.backend {
            BackendKind::Ref => "ref",
            BackendKind::Metered => "metered",
        },
        correctness: None,
        cost: None,
        depth: None,
        wall_time_ms: None,
        trace: None,
        error: None,
    };

    let result = execute(&args.expr, &settings).and_then(|outcome| {
        let expected = naive_einsum_oracle(&args.expr.equation, &outcome.inputs)?;
        Ok((outcome, expected))
    });
    let status = match result {
        Ok((outcome, expected)) => {
            let tolerance = if args.noise.is_some() {
                NOISY_TOLERANCE
            } else {
                EXACT_TOLERANCE
            };
            let max_abs_error = outcome.result.max_abs_diff(&expected);
            let oracle_match = max_abs_error <= tolerance;
            doc.shapes = outcome.inputs.iter().map(|t| t.shape().to_vec()).collect();
            doc.correctness = Some(Correctness {
                max_abs_error,
                oracle_match,
                tolerance,
            });
            doc.cost = Some(outcome.output.cost.clone());
            doc.depth = Some(outcome.output.depth);
            doc.wall_time_ms = Some(outcome.wall_time_ms);
            doc.trace = args.trace.then_some(outcome.output.trace);
            if oracle_match {
                Ok(())
            } else {
                Err(Failure::Mismatch)
            }
        }
        Err(e) => {
            doc.error = Some(ErrorReport {
                kind: e.kind().to_string(),
                message: e.to_string(),
            });
            Err(Failure::Error(e))
        }
    };

    let json = serde_json::to_string_pretty(&doc).expect("report serializes");
    match &args.json {
        Some(path) => {
            if let Err(e) = fs::write(path, json + "\n") {
                return Err(Failure::Error(CliError::Input(format!(
                    "{}: {e}",
                    path.display()
                ))));
            }
            if let (Some(c), Some(cost)) = (&doc.correctness, &doc.cost) {
                println!(
                    "{}: oracle_match={} max_abs_error={:e} depth={} rotations={}",
                    doc.equation,
                    c.oracle_match,
                    c.max_abs_error,
                    doc.depth.unwrap_or_default(),
                    cost.totals.rotations_total
                );
            }
        }
        None => println!("{json}"),
    }
    status
}
