//! Command implementations behind the `cnotbench` binary.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage, config or
//! schema errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use cnotbench::circuit::Circuit;
use cnotbench::experiment::{run_asymmetry_experiment, ExperimentConfig, ExperimentError};
use cnotbench::mitigation::{run_mitigation_experiment, CalibrationOptions, MitigationError};
use cnotbench::noise::NoiseModel;
use cnotbench::transpiler::{
    enforce_direction_with, orient_for_error, verify_equivalence, CouplingMap, DirectionPolicy,
    TranspileError, TranspileOptions,
};

/// Largest unitary deviation `--verify` accepts.
pub const VERIFY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{file}: {message}")]
    Schema { file: PathBuf, message: String },
    #[error("{0}")]
    Runtime(String),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("rewritten circuit deviates from the input by {0:e}")]
    VerifyFailed(f64),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Schema { .. } => 2,
            CliError::Runtime(_) | CliError::Output { .. } | CliError::VerifyFailed(_) => 1,
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::InvalidConfig { .. } | ExperimentError::NotAPair(..) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<MitigationError> for CliError {
    fn from(e: MitigationError) -> Self {
        match e {
            MitigationError::Experiment(inner) => inner.into(),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<TranspileError> for CliError {
    fn from(e: TranspileError) -> Self {
        match e {
            TranspileError::Uncoupled { .. } | TranspileError::MissingRate(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cnotbench", version, about = "CNOT orientation asymmetry benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the n-stage protocol on both orientations of a pair.
    Bench(BenchArgs),
    /// Run the protocol, calibrate readout and compare raw with mitigated results.
    Mitigate(MitigateArgs),
    /// Rewrite a circuit's CNOT orientations against a noise model.
    Transpile(TranspileArgs),
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Noise model JSON.
    #[arg(long)]
    pub model: PathBuf,
    /// Coupled pair, e.g. `0,1`; the first qubit is the control of the first orientation.
    #[arg(long, value_parser = parse_pair)]
    pub pair: (usize, usize),
    #[arg(long, default_value_t = 6)]
    pub stages: usize,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    #[arg(long, default_value_t = 4096)]
    pub shots: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.02)]
    pub threshold: f64,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

impl BenchArgs {
    fn config(&self) -> ExperimentConfig {
        ExperimentConfig {
            max_stages: self.stages,
            repetitions: self.reps,
            shots_per_rep: self.shots,
            threshold: self.threshold,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct MitigateArgs {
    #[command(flatten)]
    pub bench: BenchArgs,
    /// Build the assignment matrix from exact distributions instead of sampled shots.
    #[arg(long)]
    pub exact_calibration: bool,
    /// Make the X preparation gates of the calibration circuits noiseless.
    #[arg(long)]
    pub no_prep_noise: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Rewrite CNOTs that run against the physical direction.
    Enforce,
    /// Pick the realization with the highest estimated success.
    Optimize,
}

#[derive(Debug, Clone, Args)]
pub struct TranspileArgs {
    #[arg(long)]
    pub circuit: PathBuf,
    /// Noise model JSON providing the coupling map and error rates.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Enforce)]
    pub mode: Mode,
    /// Cancel H·H pairs not separated by other instructions or barriers.
    #[arg(long)]
    pub cancel_hadamards: bool,
    /// Check unitary equivalence of input and output (at most 3 active qubits).
    #[arg(long)]
    pub verify: bool,
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `a,b`, got `{s}`"))?;
    let parse = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|e| format!("`{t}`: {e}"))
    };
    let (a, b) = (parse(a)?, parse(b)?);
    if a == b {
        return Err("pair needs two distinct qubits".into());
    }
    Ok((a, b))
}

fn read_input(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

pub fn load_model(path: &Path) -> Result<NoiseModel, CliError> {
    NoiseModel::from_json_str(&read_input(path)?).map_err(|e| CliError::Schema {
        file: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn load_circuit(path: &Path) -> Result<Circuit, CliError> {
    Circuit::from_json_str(&read_input(path)?).map_err(|e| CliError::Schema {
        file: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Output {
        path: path.to_path_buf(),
        source,
    })
}

fn output_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Output {
        path: dir.to_path_buf(),
        source,
    })
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}

fn with_newline(mut s: String) -> String {
    s.push('\n');
    s
}

pub fn cmd_bench(args: &BenchArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let config = args.config();
    config.validate()?;
    let report = run_asymmetry_experiment(args.pair, &model, &config)?;
    output_dir(&args.out)?;
    write_file(&args.out.join("results.csv"), csv_bytes(&report.rows())?)?;
    write_file(&args.out.join("report.json"), with_newline(report.to_json()))?;
    writeln!(
        stdout,
        "pair {}-{}: {} (max_f = {:.4} at n = {})",
        args.pair.0,
        args.pair.1,
        report.verdict(),
        report.max_f,
        report.argmax_n
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(())
}

pub fn cmd_mitigate(args: &MitigateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let model = load_model(&args.bench.model)?;
    let config = args.bench.config();
    config.validate()?;
    let calibration = CalibrationOptions {
        shots: (!args.exact_calibration).then(|| config.total_shots()),
        seed: config.seed,
        prep_gate_noise: !args.no_prep_noise,
    };
    let run = run_mitigation_experiment(args.bench.pair, &model, &config, calibration)?;
    let out = &args.bench.out;
    output_dir(out)?;
    let c = &run.comparison;
    write_file(&out.join("comparison.json"), with_newline(c.to_json()))?;
    write_file(&out.join("mitigation_plot.csv"), csv_bytes(&c.plot_rows())?)?;
    let change = c
        .max_f_relative_change
        .map_or("n/a".to_string(), |r| format!("{:+.2}%", 100.0 * r));
    writeln!(
        stdout,
        "mean g {:.4} -> {:.4}; max_f {:.4} -> {:.4} ({change}){}",
        c.mean_g_raw,
        c.mean_g_mit,
        c.max_f_raw,
        c.max_f_mit,
        if c.exacerbated { "; asymmetry exacerbated" } else { "" }
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(())
}

pub fn cmd_transpile(args: &TranspileArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let circuit = load_circuit(&args.circuit)?;
    let model = load_model(&args.model)?;
    let map = CouplingMap::from_noise_model(&model);
    let options = TranspileOptions {
        cancel_adjacent_hadamards: args.cancel_hadamards,
    };
    let report = match args.mode {
        Mode::Enforce => {
            enforce_direction_with(&circuit, &map, model.qubits(), DirectionPolicy::Physical, options)?
        }
        Mode::Optimize => orient_for_error(&circuit, &map, model.qubits(), options)?,
    };
    if args.verify {
        let deviation = verify_equivalence(&circuit, &report.circuit)?;
        if !(deviation <= VERIFY_TOLERANCE) {
            return Err(CliError::VerifyFailed(deviation));
        }
    }
    output_dir(&args.out)?;
    write_file(&args.out.join("circuit.json"), with_newline(report.circuit.to_json()))?;
    write_file(&args.out.join("decisions.jsonl"), report.decision_log_jsonl())?;
    let success = report
        .estimated_success
        .map_or("n/a".to_string(), |s| s.to_string());
    writeln!(
        stdout,
        "gates {} -> {}; estimated success {success}{}",
        report.gates_before,
        report.gates_after,
        if args.verify { "; verified" } else { "" }
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(())
}

pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Bench(a) => cmd_bench(a, stdout),
        Command::Mitigate(a) => cmd_mitigate(a, stdout),
        Command::Transpile(a) => cmd_transpile(a, stdout),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_parsing() {
        assert_eq!(parse_pair("0,1"), Ok((0, 1)));
        assert_eq!(parse_pair(" 4 , 3"), Ok((4, 3)));
        assert!(parse_pair("1,1").is_err());
        assert!(parse_pair("1").is_err());
        assert!(parse_pair("a,1").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage(String::new()).exit_code(), 2);
        assert_eq!(CliError::VerifyFailed(1.0).exit_code(), 1);
        let e: CliError = ExperimentError::NotAPair(0, 5).into();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from([
            "cnotbench", "bench", "--model", "m.json", "--pair", "0,1", "--out", "o",
        ])
        .unwrap();
        let Command::Bench(b) = cli.command else { panic!() };
        assert_eq!(b.config(), ExperimentConfig::default());
        assert!(Cli::try_parse_from(["cnotbench", "transpile", "--circuit", "c", "--model", "m", "--out", "o", "--mode", "fast"]).is_err());
    }
}
