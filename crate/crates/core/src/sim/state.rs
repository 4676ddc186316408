use nalgebra::DMatrix;
use num_complex::Complex64;

use super::channels::KrausChannel;
use super::SimError;
use crate::circuit::Gate;
use crate::unitary::{embed, gate_matrix, CMatrix};

/// Hermiticity and trace tolerance.
pub const STATE_TOLERANCE: f64 = 1e-10;
/// Most negative eigenvalue tolerated as numerical noise.
pub const EIGENVALUE_FLOOR: f64 = -1e-9;
/// Completeness defect above which a channel is refused.
pub const COMPLETENESS_TOLERANCE: f64 = 1e-8;
pub const MAX_SIM_QUBITS: usize = 3;

/// Density matrix of a register of at most three qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    num_qubits: usize,
    matrix: CMatrix,
}

impl DensityState {
    /// `|0...0><0...0|`.
    pub fn ground(num_qubits: usize) -> Result<Self, SimError> {
        Self::check_size(num_qubits)?;
        let dim = 1 << num_qubits;
        let mut matrix = CMatrix::zeros(dim, dim);
        matrix[(0, 0)] = Complex64::new(1.0, 0.0);
        Ok(Self { num_qubits, matrix })
    }

    /// Computational basis state `|index>` (little-endian).
    pub fn basis(num_qubits: usize, index: usize) -> Result<Self, SimError> {
        Self::check_size(num_qubits)?;
        let dim = 1 << num_qubits;
        if index >= dim {
            return Err(SimError::InvalidState(format!(
                "basis index {index} out of range for {num_qubits} qubits"
            )));
        }
        let mut matrix = CMatrix::zeros(dim, dim);
        matrix[(index, index)] = Complex64::new(1.0, 0.0);
        Ok(Self { num_qubits, matrix })
    }

    /// `|psi><psi|` for a normalized amplitude vector.
    pub fn from_pure(amplitudes: &[Complex64]) -> Result<Self, SimError> {
        let dim = amplitudes.len();
        if !dim.is_power_of_two() || dim < 2 {
            return Err(SimError::InvalidState(format!(
                "amplitude vector length {dim} is not a power of two"
            )));
        }
        let num_qubits = dim.trailing_zeros() as usize;
        Self::check_size(num_qubits)?;
        let matrix = CMatrix::from_fn(dim, dim, |r, c| amplitudes[r] * amplitudes[c].conj());
        Self::from_matrix(num_qubits, matrix)
    }

    /// Wraps a matrix after checking the density-matrix invariants.
    pub fn from_matrix(num_qubits: usize, matrix: CMatrix) -> Result<Self, SimError> {
        Self::check_size(num_qubits)?;
        let dim = 1 << num_qubits;
        if matrix.shape() != (dim, dim) {
            return Err(SimError::InvalidState(format!(
                "matrix shape {:?} does not match {num_qubits} qubits",
                matrix.shape()
            )));
        }
        let state = Self { num_qubits, matrix };
        state.validate()?;
        Ok(state)
    }

    fn check_size(num_qubits: usize) -> Result<(), SimError> {
        if num_qubits == 0 || num_qubits > MAX_SIM_QUBITS {
            return Err(SimError::TooManyQubits(num_qubits));
        }
        Ok(())
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        1 << self.num_qubits
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    /// Diagonal of the density matrix: outcome probabilities over all qubits.
    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re).collect()
    }

    /// Marginal distribution of `measured` (bit `j` of the outcome index is
    /// the value of qubit `measured[j]`).
    pub fn marginal_probabilities(&self, measured: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; 1 << measured.len()];
        for (i, p) in self.probabilities().into_iter().enumerate() {
            let key = measured
                .iter()
                .enumerate()
                .fold(0usize, |acc, (j, &q)| acc | ((i >> q & 1) << j));
            out[key] += p;
        }
        out
    }

    /// `<psi| rho |psi>`.
    pub fn fidelity_with_pure(&self, amplitudes: &[Complex64]) -> f64 {
        let psi = nalgebra::DVector::from_column_slice(amplitudes);
        (psi.adjoint() * &self.matrix * &psi)[(0, 0)].re
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        // symmetrize before decomposing so round-off cannot produce complex eigenvalues
        let herm: DMatrix<Complex64> = (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        herm.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks Hermiticity, unit trace and (approximate) positivity.
    pub fn validate(&self) -> Result<(), SimError> {
        let herm = self.hermiticity_defect();
        if herm > STATE_TOLERANCE {
            return Err(SimError::InvalidState(format!(
                "not Hermitian (defect {herm:e})"
            )));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > STATE_TOLERANCE || tr.im.abs() > STATE_TOLERANCE {
            return Err(SimError::InvalidState(format!("trace {tr} is not 1")));
        }
        let min = self.min_eigenvalue();
        if min < EIGENVALUE_FLOOR {
            return Err(SimError::InvalidState(format!(
                "negative eigenvalue {min:e}"
            )));
        }
        Ok(())
    }

    fn check_operands(&self, qubits: &[usize]) -> Result<(), SimError> {
        for &q in qubits {
            if q >= self.num_qubits {
                return Err(SimError::QubitOutOfRange {
                    qubit: q,
                    num_qubits: self.num_qubits,
                });
            }
        }
        Ok(())
    }

    /// `rho -> U rho U†` for a unitary gate. Barriers and measurements are refused.
    pub fn apply_gate(&self, gate: &Gate) -> Result<DensityState, SimError> {
        let (local, operands) =
            gate_matrix(gate).ok_or_else(|| SimError::NotUnitary(gate.name().to_string()))?;
        self.check_operands(&operands)?;
        Ok(self.apply_unitary(&local, &operands))
    }

    pub(crate) fn apply_unitary(&self, local: &CMatrix, operands: &[usize]) -> DensityState {
        let u = embed(local, operands, self.num_qubits);
        DensityState {
            num_qubits: self.num_qubits,
            matrix: &u * &self.matrix * u.adjoint(),
        }
    }

    /// `rho -> Σ K rho K†` with the channel acting on `qubits`.
    pub fn apply_channel(
        &self,
        channel: &KrausChannel,
        qubits: &[usize],
    ) -> Result<DensityState, SimError> {
        if qubits.len() != channel.arity() {
            return Err(SimError::ArityMismatch {
                expected: channel.arity(),
                got: qubits.len(),
            });
        }
        self.check_operands(qubits)?;
        let defect = channel.completeness_defect();
        if defect > COMPLETENESS_TOLERANCE {
            return Err(SimError::IncompleteChannel(defect));
        }
        let dim = self.dim();
        let mut out = CMatrix::zeros(dim, dim);
        for k in channel.operators() {
            let full = embed(k, qubits, self.num_qubits);
            out += &full * &self.matrix * full.adjoint();
        }
        Ok(DensityState {
            num_qubits: self.num_qubits,
            matrix: out,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::channels::{amplitude_damping_channel, depolarizing_channel};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn bell() -> Vec<Complex64> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        vec![
            Complex64::new(s, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(s, 0.0),
        ]
    }

    #[test]
    fn hadamard_on_ground() {
        let s = DensityState::ground(2).unwrap().apply_gate(&Gate::H(0)).unwrap();
        let p = s.probabilities();
        for (got, want) in p.iter().zip([0.5, 0.5, 0.0, 0.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
    }

    #[test]
    fn cnot_truth_table_little_endian() {
        // bitstring "01": qubit 0 set
        let s = DensityState::basis(2, 0b01)
            .unwrap()
            .apply_gate(&Gate::Cnot {
                control: 0,
                target: 1,
            })
            .unwrap();
        assert_abs_diff_eq!(s.probabilities()[0b11], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn barrier_and_measure_refused() {
        let s = DensityState::ground(2).unwrap();
        assert!(matches!(
            s.apply_gate(&Gate::Barrier(vec![0, 1])),
            Err(SimError::NotUnitary(_))
        ));
        assert!(matches!(
            s.apply_gate(&Gate::Measure { qubit: 0, clbit: 0 }),
            Err(SimError::NotUnitary(_))
        ));
        assert!(s.apply_gate(&Gate::H(2)).is_err());
    }

    #[test]
    fn full_depolarizing_gives_maximally_mixed() {
        let s = DensityState::ground(1)
            .unwrap()
            .apply_channel(&depolarizing_channel(1.0, 1).unwrap(), &[0])
            .unwrap();
        assert_abs_diff_eq!(s.probabilities()[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.probabilities()[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn complete_amplitude_damping_decays_to_ground() {
        let s = DensityState::basis(1, 1)
            .unwrap()
            .apply_channel(&amplitude_damping_channel(1.0).unwrap(), &[0])
            .unwrap();
        assert_abs_diff_eq!(s.probabilities()[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn two_qubit_depolarizing_bell_fidelity() {
        // oracle: weight 1 − 15p/16 on II and p/16 on each other Pauli;
        // state fidelity adds |<B|P|B>|² for the Paulis, which is 1 for XX, YY, ZZ
        use crate::unitary::{identity, kron, pauli_x, pauli_y, pauli_z};
        let p = 0.1;
        let psi = bell();
        let v = nalgebra::DVector::from_column_slice(&psi);
        let singles = [identity(2), pauli_x(), pauli_y(), pauli_z()];
        let mut oracle = 0.0;
        for (i, a) in singles.iter().enumerate() {
            for (j, b) in singles.iter().enumerate() {
                let w = if i == 0 && j == 0 { 1.0 - 15.0 * p / 16.0 } else { p / 16.0 };
                let overlap = (v.adjoint() * kron(a, b) * &v)[(0, 0)].norm_sqr();
                oracle += w * overlap;
            }
        }
        let ch = depolarizing_channel(p, 2).unwrap();
        let s = DensityState::from_pure(&psi).unwrap().apply_channel(&ch, &[0, 1]).unwrap();
        let f = s.fidelity_with_pure(&psi);
        assert_abs_diff_eq!(f, oracle, epsilon = 1e-12);
        assert_abs_diff_eq!(f, 0.925, epsilon = 1e-12);
        // 1 − 15p/16 is the channel's process fidelity
        assert_abs_diff_eq!(ch.process_fidelity(), 1.0 - 15.0 * p / 16.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ch.process_fidelity(), 0.90625, epsilon = 1e-12);
    }

    #[test]
    fn incomplete_channel_rejected() {
        let half = CMatrix::identity(2, 2) * Complex64::new(0.5, 0.0);
        let ch = KrausChannel::new(vec![half]).unwrap();
        let err = DensityState::ground(1).unwrap().apply_channel(&ch, &[0]);
        assert!(matches!(err, Err(SimError::IncompleteChannel(_))));
    }

    #[test]
    fn invalid_matrices_rejected() {
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 0)] = Complex64::new(0.5, 0.0);
        assert!(DensityState::from_matrix(1, m.clone()).is_err());
        m[(1, 1)] = Complex64::new(0.5, 0.0);
        m[(0, 1)] = Complex64::new(0.0, 0.1);
        assert!(DensityState::from_matrix(1, m.clone()).is_err());
        m[(1, 0)] = Complex64::new(0.0, -0.1);
        assert!(DensityState::from_matrix(1, m.clone()).is_ok());
        m[(0, 1)] = Complex64::new(0.9, 0.0);
        m[(1, 0)] = Complex64::new(0.9, 0.0);
        assert!(DensityState::from_matrix(1, m).is_err());
        assert!(DensityState::ground(4).is_err());
    }

    fn arb_gate(n: usize) -> impl Strategy<Value = Gate> {
        let q = 0..n;
        prop_oneof![
            q.clone().prop_map(Gate::H),
            q.clone().prop_map(Gate::X),
            q.clone().prop_map(Gate::SX),
            (q.clone(), -7.0f64..7.0, -7.0f64..7.0, -7.0f64..7.0).prop_map(
                |(qubit, theta, phi, lambda)| Gate::U {
                    qubit,
                    theta,
                    phi,
                    lambda
                }
            ),
            (q.clone(), q)
                .prop_filter("distinct", |(a, b)| a != b)
                .prop_map(|(control, target)| Gate::Cnot { control, target }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn hundred_random_gates_preserve_state(gates in proptest::collection::vec(arb_gate(3), 100)) {
            let mut s = DensityState::ground(3).unwrap();
            for g in &gates {
                s = s.apply_gate(g).unwrap();
            }
            prop_assert!((s.trace().re - 1.0).abs() < 1e-10);
            prop_assert!(s.validate().is_ok());
        }

        #[test]
        fn channels_preserve_state(p in 0.0f64..=1.0, gamma in 0.0f64..=1.0, gates in proptest::collection::vec(arb_gate(2), 10)) {
            let mut s = DensityState::ground(2).unwrap();
            for g in &gates {
                s = s.apply_gate(g).unwrap();
                s = s.apply_channel(&depolarizing_channel(p, 2).unwrap(), &[1, 0]).unwrap();
                s = s.apply_channel(&amplitude_damping_channel(gamma).unwrap(), &[0]).unwrap();
            }
            prop_assert!(s.validate().is_ok());
        }
    }
}
