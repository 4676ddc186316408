//! Measurement-error mitigation with a full assignment matrix.
//!
//! Column `j` of the assignment matrix is the observed outcome distribution
//! when basis state `j` is prepared. Mitigation solves
//! `min ‖A·x − c‖₂` subject to `x ≥ 0` and renormalizes `x`, so results are
//! always valid distributions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{build_readout_calibration_circuits, CircuitError};
use crate::experiment::{
    relative_change, run_asymmetry_experiment, AsymmetryReport, ExperimentConfig, ExperimentError,
    OrientationResult, StageResult,
};
use crate::noise::NoiseModel;
use crate::sim::{derive_seed, sample_distribution, simulate_exact, Counts, ReadoutError, SimError};

/// Condition numbers above this make mitigation unreliable.
pub const MAX_CONDITION_NUMBER: f64 = 1e8;
pub const COLUMN_TOLERANCE: f64 = 1e-9;
const MAX_MITIGATION_QUBITS: usize = 3;
const CALIBRATION_STREAM: u64 = 0xca1b;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MitigationError {
    #[error("expected {expected} calibration sets, got {got}")]
    CalibrationSetCount { expected: usize, got: usize },
    #[error("calibration set {0} has zero total")]
    ZeroTotal(usize),
    #[error("width mismatch: matrix covers {expected} bits, data has {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("assignment column {column}: {message}")]
    InvalidColumn { column: usize, message: String },
    #[error("assignment matrix condition number {0:e} exceeds {MAX_CONDITION_NUMBER:e}; mitigation is unreliable")]
    IllConditioned(f64),
    #[error("reports are not comparable: {0}")]
    MismatchedReports(String),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentMatrix {
    k: usize,
    matrix: DMatrix<f64>,
}

fn width_of(len: usize) -> Option<usize> {
    (1..=MAX_MITIGATION_QUBITS).find(|&k| 1 << k == len)
}

impl AssignmentMatrix {
    pub fn identity(k: usize) -> Self {
        Self {
            k,
            matrix: DMatrix::identity(1 << k, 1 << k),
        }
    }

    /// Tensor product of independent per-bit confusions; `readout[j]` acts on bit `j`.
    pub fn from_readout(readout: &[ReadoutError]) -> Self {
        let k = readout.len();
        let dim = 1 << k;
        let matrix = DMatrix::from_fn(dim, dim, |read, truth| {
            readout
                .iter()
                .enumerate()
                .map(|(b, r)| r.transition(read >> b & 1 == 1, truth >> b & 1 == 1))
                .product()
        });
        Self { k, matrix }
    }

    /// Builds the matrix from observed distributions, one per prepared state.
    pub fn from_distributions(columns: &[Vec<f64>]) -> Result<Self, MitigationError> {
        let k = width_of(columns.len()).ok_or(MitigationError::CalibrationSetCount {
            expected: columns.len().next_power_of_two().clamp(2, 1 << MAX_MITIGATION_QUBITS),
            got: columns.len(),
        })?;
        let dim = 1 << k;
        for (j, col) in columns.iter().enumerate() {
            if col.len() != dim {
                return Err(MitigationError::InvalidColumn {
                    column: j,
                    message: format!("length {} instead of {dim}", col.len()),
                });
            }
            if let Some(p) = col.iter().find(|p| !(**p >= 0.0 && p.is_finite())) {
                return Err(MitigationError::InvalidColumn {
                    column: j,
                    message: format!("entry {p} is not a probability"),
                });
            }
            let sum: f64 = col.iter().sum();
            if (sum - 1.0).abs() > COLUMN_TOLERANCE {
                return Err(MitigationError::InvalidColumn {
                    column: j,
                    message: format!("sums to {sum}"),
                });
            }
        }
        let matrix = DMatrix::from_fn(dim, dim, |i, j| columns[j][i]);
        Ok(Self { k, matrix })
    }

    /// Builds the matrix from calibration counts; set `j` must come from
    /// preparing basis state `j`.
    pub fn from_counts(sets: &[Counts]) -> Result<Self, MitigationError> {
        let k = sets.first().map(Counts::width).unwrap_or(0);
        if k == 0 || k > MAX_MITIGATION_QUBITS || sets.len() != 1 << k {
            return Err(MitigationError::CalibrationSetCount {
                expected: 1 << k.clamp(1, MAX_MITIGATION_QUBITS),
                got: sets.len(),
            });
        }
        let mut columns = Vec::with_capacity(sets.len());
        for (j, c) in sets.iter().enumerate() {
            if c.width() != k {
                return Err(MitigationError::WidthMismatch {
                    expected: k,
                    got: c.width(),
                });
            }
            if c.total() == 0 {
                return Err(MitigationError::ZeroTotal(j));
            }
            let t = c.total() as f64;
            columns.push(c.to_dense().into_iter().map(|n| n as f64 / t).collect());
        }
        Self::from_distributions(&columns)
    }

    pub fn num_qubits(&self) -> usize {
        self.k
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn is_identity(&self) -> bool {
        self.matrix == DMatrix::identity(self.matrix.nrows(), self.matrix.ncols())
    }

    pub fn condition_number(&self) -> f64 {
        let sv = self.matrix.clone().singular_values();
        let min = sv.min();
        if min <= 0.0 {
            f64::INFINITY
        } else {
            sv.max() / min
        }
    }
}

/// Non-negative least squares, Lawson–Hanson active-set method.
fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let tol = 1e-14 * a.norm().max(1.0) * b.norm().max(1.0);
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let gradient = |x: &DVector<f64>| a.transpose() * (b - a * x);
    let solve_passive = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let sub = a.select_columns(idx.iter());
        let qr = sub.qr();
        let z = qr
            .r()
            .solve_upper_triangular(&(qr.q().transpose() * b))
            .unwrap_or_else(|| DVector::zeros(idx.len()));
        let mut full = DVector::zeros(n);
        for (k, &j) in idx.iter().enumerate() {
            full[j] = z[k];
        }
        full
    };
    for _ in 0..3 * n {
        let w = gradient(&x);
        let Some(j) = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&p, &q| w[p].total_cmp(&w[q]))
        else {
            break;
        };
        passive[j] = true;
        loop {
            let z = solve_passive(&passive);
            if (0..n).filter(|&j| passive[j]).all(|j| z[j] > 0.0) {
                x = z;
                break;
            }
            let alpha = (0..n)
                .filter(|&j| passive[j] && z[j] <= 0.0)
                .map(|j| x[j] / (x[j] - z[j]))
                .fold(f64::INFINITY, f64::min);
            x += (z - &x) * alpha;
            for j in 0..n {
                if passive[j] && x[j] <= tol {
                    passive[j] = false;
                    x[j] = 0.0;
                }
            }
            if passive.iter().all(|p| !p) {
                break;
            }
        }
    }
    x
}

/// Mitigated outcome distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mitigated {
    pub probabilities: Vec<f64>,
    /// Shot count the distribution was derived from; 0 for exact inputs.
    pub total: u64,
}

impl Mitigated {
    pub fn pseudo_counts(&self) -> Vec<f64> {
        self.probabilities
            .iter()
            .map(|p| p * self.total as f64)
            .collect()
    }

    /// Integer counts summing to `total`, by largest remainder.
    pub fn rounded_counts(&self) -> Vec<u64> {
        let exact = self.pseudo_counts();
        let mut out: Vec<u64> = exact.iter().map(|c| c.floor() as u64).collect();
        let short = self.total.saturating_sub(out.iter().sum());
        let mut order: Vec<usize> = (0..exact.len()).collect();
        order.sort_by(|&a, &b| {
            (exact[b] - exact[b].floor())
                .total_cmp(&(exact[a] - exact[a].floor()))
                .then(a.cmp(&b))
        });
        for &i in order.iter().take(short as usize) {
            out[i] += 1;
        }
        out
    }
}

/// Corrects a normalized outcome distribution.
pub fn mitigate_distribution(
    distribution: &[f64],
    a: &AssignmentMatrix,
) -> Result<Vec<f64>, MitigationError> {
    let dim = a.matrix.nrows();
    if distribution.len() != dim {
        return Err(MitigationError::WidthMismatch {
            expected: a.k,
            got: width_of(distribution.len()).unwrap_or(0),
        });
    }
    if a.is_identity() {
        let sum: f64 = distribution.iter().sum();
        return Ok(distribution.iter().map(|p| p / sum).collect());
    }
    let cond = a.condition_number();
    if !(cond <= MAX_CONDITION_NUMBER) {
        return Err(MitigationError::IllConditioned(cond));
    }
    let x = nnls(&a.matrix, &DVector::from_column_slice(distribution));
    let sum = x.sum();
    Ok(x.iter().map(|v| v.max(0.0) / sum).collect())
}

pub fn mitigate(counts: &Counts, a: &AssignmentMatrix) -> Result<Mitigated, MitigationError> {
    if counts.width() != a.k {
        return Err(MitigationError::WidthMismatch {
            expected: a.k,
            got: counts.width(),
        });
    }
    if counts.total() == 0 {
        return Err(MitigationError::ZeroTotal(0));
    }
    let t = counts.total() as f64;
    let c: Vec<f64> = counts.to_dense().into_iter().map(|n| n as f64 / t).collect();
    Ok(Mitigated {
        probabilities: if a.is_identity() {
            c
        } else {
            mitigate_distribution(&c, a)?
        },
        total: counts.total(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CalibrationOptions {
    /// Shots per calibration circuit; `None` uses exact distributions.
    pub shots: Option<u64>,
    pub seed: u64,
    /// Keep the noise of the X preparation gates.
    pub prep_gate_noise: bool,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            shots: None,
            seed: 0,
            prep_gate_noise: true,
        }
    }
}

/// Runs the basis-state calibration circuits on `qubits` (qubit `qubits[j]`
/// read into bit `j`) and builds the assignment matrix.
pub fn calibrate(
    noise: &NoiseModel,
    qubits: &[usize],
    options: CalibrationOptions,
) -> Result<AssignmentMatrix, MitigationError> {
    let model = if options.prep_gate_noise {
        noise.clone()
    } else {
        noise.without_single_qubit_gate_noise()
    };
    let circuits = build_readout_calibration_circuits(qubits.len())?;
    let mut columns = Vec::with_capacity(circuits.len());
    let mut sets = Vec::with_capacity(circuits.len());
    for (i, c) in circuits.iter().enumerate() {
        let placed = c.remap_qubits(qubits, model.num_qubits())?;
        let exact = simulate_exact(&placed, &model)?;
        match options.shots {
            None => columns.push(exact.observed),
            Some(shots) => {
                if shots == 0 {
                    return Err(SimError::ZeroShots.into());
                }
                let seed = derive_seed(options.seed, &[CALIBRATION_STREAM, i as u64]);
                sets.push(sample_distribution(&exact.observed, shots, seed, qubits.len()));
            }
        }
    }
    match options.shots {
        None => AssignmentMatrix::from_distributions(&columns),
        Some(_) => AssignmentMatrix::from_counts(&sets),
    }
}

/// Applies mitigation to every stage of `raw`.
///
/// Stage `g` values are the mitigated probabilities of `00`, not ratios of
/// integers; `counts` holds the largest-remainder rounding of the mitigated
/// pseudo-counts. `f` is recomputed from the mitigated `g` values.
pub fn mitigate_report(
    raw: &AsymmetryReport,
    a: &AssignmentMatrix,
) -> Result<AsymmetryReport, MitigationError> {
    let stage = |s: &StageResult| -> Result<StageResult, MitigationError> {
        let m = mitigate(&s.counts, a)?;
        let exact = mitigate_distribution(&s.exact_distribution, a)?;
        let mut counts = Counts::new(s.counts.width());
        for (i, n) in m.rounded_counts().into_iter().enumerate() {
            counts.add_index(i, n);
        }
        Ok(StageResult {
            n: s.n,
            ground_count: counts.ground_count(),
            total: s.total,
            g: m.probabilities[0],
            exact_p00: exact[0],
            counts,
            exact_distribution: exact,
        })
    };
    let orientation = |o: &OrientationResult| -> Result<OrientationResult, MitigationError> {
        Ok(OrientationResult {
            control: o.control,
            target: o.target,
            per_n: o.per_n.iter().map(stage).collect::<Result<_, _>>()?,
        })
    };
    let fwd = orientation(raw.forward())?;
    let rev = orientation(raw.reverse())?;
    let mut f = std::collections::BTreeMap::new();
    let mut f_exact = std::collections::BTreeMap::new();
    for a in &fwd.per_n {
        let b = rev.stage(a.n).ok_or_else(|| {
            MitigationError::MismatchedReports(format!("stage {} missing in reverse orientation", a.n))
        })?;
        f.insert(a.n, (a.g - b.g).abs());
        f_exact.insert(a.n, (a.exact_p00 - b.exact_p00).abs());
    }
    Ok(AsymmetryReport::assemble(raw.pair, raw.config, [fwd, rev], f, f_exact)?)
}

/// One row of the two-series plot table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub n: usize,
    pub g_raw_01: f64,
    pub g_raw_10: f64,
    pub g_mit_01: f64,
    pub g_mit_10: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub n: usize,
    pub g_raw_01: f64,
    pub g_raw_10: f64,
    pub g_mit_01: f64,
    pub g_mit_10: f64,
    pub f_raw: f64,
    pub f_mit: f64,
    pub delta_g_01: f64,
    pub delta_g_10: f64,
    pub delta_f: f64,
    pub f_raw_exact: f64,
    pub f_mit_exact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationComparison {
    pub pair: (usize, usize),
    pub rows: Vec<ComparisonRow>,
    pub max_f_raw: f64,
    pub max_f_mit: f64,
    /// `None` when the raw maximum is zero.
    pub max_f_relative_change: Option<f64>,
    /// Mitigated `max_f` strictly above the raw one.
    pub exacerbated: bool,
    pub mean_g_raw: f64,
    pub mean_g_mit: f64,
    pub max_f_raw_exact: f64,
    pub max_f_mit_exact: f64,
    pub exacerbated_exact: bool,
}

impl MitigationComparison {
    pub fn plot_rows(&self) -> Vec<PlotRow> {
        self.rows
            .iter()
            .map(|r| PlotRow {
                n: r.n,
                g_raw_01: r.g_raw_01,
                g_raw_10: r.g_raw_10,
                g_mit_01: r.g_mit_01,
                g_mit_10: r.g_mit_10,
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes")
    }
}

fn mean_g(report: &AsymmetryReport) -> f64 {
    let gs: Vec<f64> = report
        .orientations
        .iter()
        .flat_map(|o| o.per_n.iter().map(|s| s.g))
        .collect();
    gs.iter().sum::<f64>() / gs.len().max(1) as f64
}

pub fn compare_mitigated(
    raw: &AsymmetryReport,
    mitigated: &AsymmetryReport,
) -> Result<MitigationComparison, MitigationError> {
    if raw.pair != mitigated.pair {
        return Err(MitigationError::MismatchedReports(format!(
            "pairs {:?} and {:?}",
            raw.pair, mitigated.pair
        )));
    }
    if raw.config != mitigated.config {
        return Err(MitigationError::MismatchedReports("configs differ".into()));
    }
    let mut rows = Vec::new();
    for (&n, &f_raw) in &raw.f {
        let lookup = |r: &AsymmetryReport, i: usize| {
            r.orientations[i].stage(n).cloned().ok_or_else(|| {
                MitigationError::MismatchedReports(format!("stage {n} missing"))
            })
        };
        let (r01, r10, m01, m10) = (lookup(raw, 0)?, lookup(raw, 1)?, lookup(mitigated, 0)?, lookup(mitigated, 1)?);
        let f_mit = *mitigated
            .f
            .get(&n)
            .ok_or_else(|| MitigationError::MismatchedReports(format!("f({n}) missing")))?;
        rows.push(ComparisonRow {
            n,
            g_raw_01: r01.g,
            g_raw_10: r10.g,
            g_mit_01: m01.g,
            g_mit_10: m10.g,
            f_raw,
            f_mit,
            delta_g_01: m01.g - r01.g,
            delta_g_10: m10.g - r10.g,
            delta_f: f_mit - f_raw,
            f_raw_exact: raw.f_exact[&n],
            f_mit_exact: mitigated.f_exact.get(&n).copied().unwrap_or(f64::NAN),
        });
    }
    Ok(MitigationComparison {
        pair: raw.pair,
        rows,
        max_f_raw: raw.max_f,
        max_f_mit: mitigated.max_f,
        max_f_relative_change: relative_change(raw.max_f, mitigated.max_f).ok(),
        exacerbated: mitigated.max_f > raw.max_f,
        mean_g_raw: mean_g(raw),
        mean_g_mit: mean_g(mitigated),
        max_f_raw_exact: raw.max_f_exact,
        max_f_mit_exact: mitigated.max_f_exact,
        exacerbated_exact: mitigated.max_f_exact > raw.max_f_exact,
    })
}

/// Raw report, mitigated report and their comparison for one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MitigationRun {
    pub raw: AsymmetryReport,
    pub mitigated: AsymmetryReport,
    pub assignment: AssignmentMatrix,
    pub comparison: MitigationComparison,
}

/// Runs the experiment on `pair`, calibrates the pair's readout and mitigates.
pub fn run_mitigation_experiment(
    pair: (usize, usize),
    noise: &NoiseModel,
    config: &ExperimentConfig,
    calibration: CalibrationOptions,
) -> Result<MitigationRun, MitigationError> {
    let raw = run_asymmetry_experiment(pair, noise, config)?;
    // n-stage circuits read the lower-index qubit into bit 0
    let qubits = [pair.0.min(pair.1), pair.0.max(pair.1)];
    let assignment = calibrate(noise, &qubits, calibration)?;
    let mitigated = mitigate_report(&raw, &assignment)?;
    let comparison = compare_mitigated(&raw, &mitigated)?;
    Ok(MitigationRun {
        raw,
        mitigated,
        assignment,
        comparison,
    })
}
