//! Exact density-matrix simulation of small noisy circuits.
//!
//! Each unitary instruction is followed by its noise: depolarizing error on
//! the gate's qubits, thermal relaxation of every active qubit for the gate's
//! duration, then the coherent error of the CNOT orientation, if any.
//! Measurements are deferred to the end and sampled once from the exact
//! outcome distribution.

mod channels;
mod sampling;
mod state;

use thiserror::Error;

pub use channels::{
    amplitude_damping_channel, coherent_overrotation_channel, depolarizing_channel, parse_axis,
    phase_damping_channel, thermal_relaxation_channel, KrausChannel, PauliAxis,
};
pub use sampling::{
    apply_readout, bitstring, derive_seed, parse_bitstring, sample_counts, sample_distribution,
    Counts, ReadoutError,
};
pub use state::{DensityState, COMPLETENESS_TOLERANCE, EIGENVALUE_FLOOR, MAX_SIM_QUBITS, STATE_TOLERANCE};

use crate::circuit::{Circuit, Gate};
use crate::noise::{NoiseModel, NoiseModelError};
use crate::unitary::gate_matrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("{0} active qubits requested; at most {MAX_SIM_QUBITS} (and at least 1) are supported")]
    TooManyQubits(usize),
    #[error("qubit {qubit} out of range for a {num_qubits}-qubit state")]
    QubitOutOfRange { qubit: usize, num_qubits: usize },
    #[error("`{0}` has no unitary action")]
    NotUnitary(String),
    #[error("operand count mismatch: expected {expected}, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("channel violates completeness by {0:e}")]
    IncompleteChannel(f64),
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    #[error("invalid density state: {0}")]
    InvalidState(String),
    #[error("unsupported coherent error axis `{0}`")]
    UnsupportedAxis(String),
    #[error("readout probability {0} outside [0, 1]")]
    InvalidReadout(f64),
    #[error("no qubits are measured")]
    NothingMeasured,
    #[error("shot count must be at least 1")]
    ZeroShots,
    #[error("invalid counts: {0}")]
    InvalidCounts(String),
    #[error("gate acts on qubit {0} after it was measured")]
    GateAfterMeasure(usize),
    #[error("missing noise parameters: {0}")]
    MissingNoise(#[from] NoiseModelError),
}

/// Exact result of running a circuit, before sampling.
#[derive(Debug, Clone)]
pub struct ExactOutcome {
    /// Final state over the active qubits, in ascending physical order.
    pub state: DensityState,
    /// Physical indices of the simulated qubits.
    pub active_qubits: Vec<usize>,
    /// Outcome distribution over the classical register with perfect readout.
    pub ideal: Vec<f64>,
    /// Outcome distribution after readout error.
    pub observed: Vec<f64>,
    pub num_clbits: usize,
}

impl ExactOutcome {
    /// Probability of reading all zeros.
    pub fn ground_probability(&self) -> f64 {
        self.observed[0]
    }
}

/// Qubits touched by any non-barrier instruction, ascending.
pub fn active_qubits(circuit: &Circuit) -> Vec<usize> {
    let mut qs: Vec<usize> = circuit
        .instructions()
        .iter()
        .filter(|g| !matches!(g, Gate::Barrier(_)))
        .flat_map(|g| g.qubits())
        .collect();
    qs.sort_unstable();
    qs.dedup();
    qs
}

/// Runs `circuit` under `noise` and returns exact outcome probabilities.
pub fn simulate_exact(circuit: &Circuit, noise: &NoiseModel) -> Result<ExactOutcome, SimError> {
    let active = active_qubits(circuit);
    if active.is_empty() || active.len() > MAX_SIM_QUBITS {
        return Err(SimError::TooManyQubits(active.len()));
    }
    let local = |q: usize| active.binary_search(&q).expect("active qubit");
    let params = active
        .iter()
        .map(|&q| noise.qubit(q).copied())
        .collect::<Result<Vec<_>, _>>()?;
    let relax: Vec<(usize, f64, f64)> = params
        .iter()
        .enumerate()
        .map(|(i, p)| (i, p.t1_us, p.t2_us))
        .collect();

    let mut state = DensityState::ground(active.len())?;
    let mut measured: Vec<(usize, usize)> = Vec::new(); // (clbit, physical qubit)
    for gate in circuit.instructions() {
        match gate {
            Gate::Barrier(_) => continue,
            Gate::Measure { qubit, clbit } => {
                measured.push((*clbit, *qubit));
                continue;
            }
            _ => {}
        }
        let operands = gate.qubits();
        if let Some(&(_, q)) = measured.iter().find(|(_, q)| operands.contains(q)) {
            return Err(SimError::GateAfterMeasure(q));
        }
        let locals: Vec<usize> = operands.iter().map(|&q| local(q)).collect();
        let (matrix, _) = gate_matrix(gate).expect("unitary gate");
        state = state.apply_unitary(&matrix, &locals);

        let (error, duration, coherent) = match gate {
            Gate::Cnot { control, target } => {
                let edge = noise.require_edge(*control, *target)?;
                let coherent = edge
                    .coherent_axis
                    .filter(|_| edge.coherent_angle_rad != 0.0)
                    .map(|axis| (axis, edge.coherent_angle_rad));
                (edge.cnot_error, edge.duration_ns, coherent)
            }
            _ => {
                let (e, d) = params[locals[0]].single_qubit_cost(gate);
                (e, d, None)
            }
        };
        if error > 0.0 {
            state = state.apply_channel(&depolarizing_channel(error, locals.len())?, &locals)?;
        }
        if duration > 0.0 {
            for &(q, t1, t2) in &relax {
                let ch = thermal_relaxation_channel(duration, t1, t2)?;
                state = state.apply_channel(&ch, &[q])?;
            }
        }
        if let Some((axis, angle)) = coherent {
            state = state.apply_channel(&coherent_overrotation_channel(axis, angle)?, &locals)?;
        }
    }

    measured.sort_unstable();
    let measured_locals: Vec<usize> = measured.iter().map(|&(_, q)| local(q)).collect();
    let readout: Vec<ReadoutError> = measured
        .iter()
        .map(|&(_, q)| params[local(q)].readout())
        .collect();
    let marginal = state.marginal_probabilities(&measured_locals);
    let noisy = apply_readout(&marginal, &readout);
    let width = circuit.num_clbits();
    let scatter = |dist: &[f64]| -> Vec<f64> {
        let mut full = vec![0.0; 1 << width];
        for (i, p) in dist.iter().enumerate() {
            let idx = measured
                .iter()
                .enumerate()
                .fold(0usize, |acc, (j, &(clbit, _))| acc | ((i >> j & 1) << clbit));
            full[idx] += p;
        }
        full
    };
    Ok(ExactOutcome {
        ideal: scatter(&marginal),
        observed: scatter(&noisy),
        state,
        active_qubits: active,
        num_clbits: width,
    })
}

/// Runs `circuit` under `noise` and samples `shots` measurement records.
pub fn simulate(
    circuit: &Circuit,
    noise: &NoiseModel,
    shots: u64,
    seed: u64,
) -> Result<Counts, SimError> {
    if shots == 0 {
        return Err(SimError::ZeroShots);
    }
    if circuit.measure_count() == 0 {
        return Err(SimError::NothingMeasured);
    }
    let exact = simulate_exact(circuit, noise)?;
    Ok(sample_distribution(
        &exact.observed,
        shots,
        seed,
        circuit.num_clbits(),
    ))
}
