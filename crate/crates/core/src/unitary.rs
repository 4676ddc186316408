//! Gate matrices and whole-circuit unitaries.
//!
//! A multi-qubit operator acting on operand list `[q0, q1, ..]` is indexed
//! little-endian over its operands: local index `b0 + 2*b1 + ...` where `bj`
//! is the bit of operand `qj`.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::circuit::{Circuit, Gate};

pub type CMatrix = DMatrix<Complex64>;

/// Registers above this size are refused by [`circuit_unitary`].
pub const MAX_UNITARY_QUBITS: usize = 10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

pub fn hadamard() -> CMatrix {
    let s = c(FRAC_1_SQRT_2, 0.0);
    CMatrix::from_row_slice(2, 2, &[s, s, s, -s])
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

pub fn sqrt_x() -> CMatrix {
    let a = c(0.5, 0.5);
    let b = c(0.5, -0.5);
    CMatrix::from_row_slice(2, 2, &[a, b, b, a])
}

pub fn u_gate(theta: f64, phi: f64, lambda: f64) -> CMatrix {
    let (s, co) = (theta / 2.0).sin_cos();
    CMatrix::from_row_slice(
        2,
        2,
        &[
            c(co, 0.0),
            -Complex64::from_polar(s, lambda),
            Complex64::from_polar(s, phi),
            Complex64::from_polar(co, phi + lambda),
        ],
    )
}

/// CNOT over operands `[control, target]`.
pub fn cnot() -> CMatrix {
    // local index = control_bit + 2 * target_bit
    let mut m = CMatrix::zeros(4, 4);
    m[(0, 0)] = ONE; // c=0,t=0
    m[(2, 2)] = ONE; // c=0,t=1
    m[(3, 1)] = ONE; // c=1,t=0 -> c=1,t=1
    m[(1, 3)] = ONE;
    m
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Local matrix of a unitary gate together with its operands.
pub fn gate_matrix(gate: &Gate) -> Option<(CMatrix, Vec<usize>)> {
    let m = match gate {
        Gate::H(_) => hadamard(),
        Gate::X(_) => pauli_x(),
        Gate::SX(_) => sqrt_x(),
        Gate::U {
            theta, phi, lambda, ..
        } => u_gate(*theta, *phi, *lambda),
        Gate::Cnot { .. } => cnot(),
        Gate::Barrier(_) | Gate::Measure { .. } => return None,
    };
    Some((m, gate.qubits()))
}

fn local_index(x: usize, operands: &[usize]) -> usize {
    operands
        .iter()
        .enumerate()
        .fold(0, |acc, (j, &q)| acc | ((x >> q & 1) << j))
}

/// Lifts `op` (acting on `operands`) to the full `num_qubits` register.
pub fn embed(op: &CMatrix, operands: &[usize], num_qubits: usize) -> CMatrix {
    let dim = 1usize << num_qubits;
    debug_assert_eq!(op.nrows(), 1 << operands.len());
    let mask = operands.iter().fold(0usize, |m, &q| m | 1 << q);
    CMatrix::from_fn(dim, dim, |r, col| {
        if r & !mask != col & !mask {
            ZERO
        } else {
            op[(local_index(r, operands), local_index(col, operands))]
        }
    })
}

/// Product of all unitary instructions; barriers and measurements are skipped.
pub fn circuit_unitary(circuit: &Circuit) -> Option<CMatrix> {
    let n = circuit.num_qubits();
    if n > MAX_UNITARY_QUBITS {
        return None;
    }
    let mut u = identity(1 << n);
    for g in circuit.instructions() {
        if let Some((m, ops)) = gate_matrix(g) {
            u = embed(&m, &ops, n) * u;
        }
    }
    Some(u)
}

/// Product of a gate list on an `num_qubits` register.
pub fn sequence_unitary(gates: &[Gate], num_qubits: usize) -> CMatrix {
    let mut u = identity(1 << num_qubits);
    for g in gates {
        if let Some((m, ops)) = gate_matrix(g) {
            u = embed(&m, &ops, num_qubits) * u;
        }
    }
    u
}

/// Largest elementwise deviation `max |a - b|`.
pub fn max_deviation(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Largest elementwise deviation after removing the best single global phase,
/// taken from the largest-magnitude entry of `b`.
pub fn max_deviation_up_to_phase(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let (idx, pivot) = b
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))
        .expect("non-empty matrix");
    if pivot.norm() == 0.0 {
        return max_deviation(a, b);
    }
    let ratio = a.as_slice()[idx] / pivot;
    if ratio.norm() == 0.0 {
        return max_deviation(a, b);
    }
    let phase = ratio / ratio.norm();
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - phase * y).norm())
        .fold(0.0, f64::max)
}

pub fn dagger(m: &CMatrix) -> CMatrix {
    m.adjoint()
}
