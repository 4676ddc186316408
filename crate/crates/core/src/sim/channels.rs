//! Kraus-operator noise channels.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::unitary::{identity, kron, pauli_x, pauli_y, pauli_z, CMatrix};

/// A CPTP map given by its Kraus operators, all of size `2^arity`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausChannel {
    arity: usize,
    operators: Vec<CMatrix>,
}

impl KrausChannel {
    /// Builds a channel from operators of a common power-of-two size.
    /// Completeness is not enforced here; [`DensityState::apply_channel`]
    /// refuses channels that fail it.
    ///
    /// [`DensityState::apply_channel`]: super::DensityState::apply_channel
    pub fn new(operators: Vec<CMatrix>) -> Result<Self, SimError> {
        let first = operators
            .first()
            .ok_or_else(|| SimError::InvalidChannel("no Kraus operators".into()))?;
        let dim = first.nrows();
        if !dim.is_power_of_two() || dim < 2 {
            return Err(SimError::InvalidChannel(format!(
                "operator dimension {dim} is not a power of two"
            )));
        }
        if operators.iter().any(|k| k.shape() != (dim, dim)) {
            return Err(SimError::InvalidChannel(
                "Kraus operators differ in shape".into(),
            ));
        }
        Ok(Self {
            arity: dim.trailing_zeros() as usize,
            operators,
        })
    }

    pub fn identity(arity: usize) -> Self {
        Self {
            arity,
            operators: vec![identity(1 << arity)],
        }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn operators(&self) -> &[CMatrix] {
        &self.operators
    }

    /// `max |Σ K†K − I|` elementwise.
    pub fn completeness_defect(&self) -> f64 {
        let dim = 1 << self.arity;
        let sum = self
            .operators
            .iter()
            .fold(CMatrix::zeros(dim, dim), |acc, k| acc + k.adjoint() * k);
        (sum - identity(dim))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Channel that applies `self` first and then `next`.
    pub fn then(&self, next: &KrausChannel) -> KrausChannel {
        assert_eq!(self.arity, next.arity, "composed channels must share arity");
        let operators = next
            .operators
            .iter()
            .flat_map(|b| self.operators.iter().map(move |a| b * a))
            .collect();
        KrausChannel {
            arity: self.arity,
            operators,
        }
    }

    /// Entanglement fidelity `Σ|tr K|² / d²`.
    pub fn process_fidelity(&self) -> f64 {
        let d = (1usize << self.arity) as f64;
        self.operators.iter().map(|k| k.trace().norm_sqr()).sum::<f64>() / (d * d)
    }

    /// `1 − F_avg` with `F_avg = (Σ|tr K|² + d) / (d(d+1))`.
    pub fn average_gate_infidelity(&self) -> f64 {
        let d = (1usize << self.arity) as f64;
        let overlap: f64 = self.operators.iter().map(|k| k.trace().norm_sqr()).sum();
        1.0 - (overlap + d) / (d * (d + 1.0))
    }
}

fn check_probability(name: &str, p: f64) -> Result<(), SimError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(SimError::InvalidChannel(format!(
            "{name} = {p} is outside [0, 1]"
        )));
    }
    Ok(())
}

fn scaled(m: CMatrix, factor: f64) -> CMatrix {
    m * Complex64::new(factor, 0.0)
}

fn single_paulis() -> [CMatrix; 4] {
    [identity(2), pauli_x(), pauli_y(), pauli_z()]
}

/// Depolarizing channel `rho -> (1 − p) rho + p I/d` on 1 or 2 qubits.
pub fn depolarizing_channel(p: f64, arity: usize) -> Result<KrausChannel, SimError> {
    check_probability("depolarizing probability", p)?;
    if p == 0.0 {
        return Ok(KrausChannel::identity(arity.clamp(1, 2)));
    }
    let paulis: Vec<CMatrix> = match arity {
        1 => single_paulis().into_iter().collect(),
        2 => {
            let s = single_paulis();
            s.iter()
                .flat_map(|hi| s.iter().map(move |lo| kron(hi, lo)))
                .collect()
        }
        other => {
            return Err(SimError::InvalidChannel(format!(
                "depolarizing arity must be 1 or 2, got {other}"
            )))
        }
    };
    let d2 = (1usize << (2 * arity)) as f64;
    let mut ops = Vec::with_capacity(paulis.len());
    let mut iter = paulis.into_iter();
    let id = iter.next().expect("identity first");
    ops.push(scaled(id, (1.0 - p * (d2 - 1.0) / d2).sqrt()));
    ops.extend(iter.map(|pm| scaled(pm, (p / d2).sqrt())));
    KrausChannel::new(ops)
}

pub fn amplitude_damping_channel(gamma: f64) -> Result<KrausChannel, SimError> {
    check_probability("damping gamma", gamma)?;
    let zero = Complex64::new(0.0, 0.0);
    let k0 = CMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(1.0, 0.0),
            zero,
            zero,
            Complex64::new((1.0 - gamma).sqrt(), 0.0),
        ],
    );
    let k1 = CMatrix::from_row_slice(2, 2, &[zero, Complex64::new(gamma.sqrt(), 0.0), zero, zero]);
    KrausChannel::new(vec![k0, k1])
}

/// Pure dephasing that multiplies coherences by `lambda`.
pub fn phase_damping_channel(lambda: f64) -> Result<KrausChannel, SimError> {
    check_probability("coherence factor", lambda)?;
    KrausChannel::new(vec![
        scaled(identity(2), ((1.0 + lambda) / 2.0).sqrt()),
        scaled(pauli_z(), ((1.0 - lambda) / 2.0).sqrt()),
    ])
}

/// Relaxation of one qubit over `duration_ns` with times `t1_us`, `t2_us`:
/// populations relax with `exp(−t/T1)` and coherences decay with `exp(−t/T2)`.
pub fn thermal_relaxation_channel(
    duration_ns: f64,
    t1_us: f64,
    t2_us: f64,
) -> Result<KrausChannel, SimError> {
    if !(duration_ns >= 0.0) || !duration_ns.is_finite() {
        return Err(SimError::InvalidChannel(format!(
            "duration {duration_ns} ns must be finite and non-negative"
        )));
    }
    if !(t1_us > 0.0) || !(t2_us > 0.0) {
        return Err(SimError::InvalidChannel(format!(
            "T1 = {t1_us} us and T2 = {t2_us} us must be positive"
        )));
    }
    if t2_us > 2.0 * t1_us {
        return Err(SimError::InvalidChannel(format!(
            "T2 = {t2_us} us exceeds 2*T1 = {} us",
            2.0 * t1_us
        )));
    }
    if duration_ns == 0.0 {
        return Ok(KrausChannel::identity(1));
    }
    let t = duration_ns / 1000.0;
    let gamma = 1.0 - (-t / t1_us).exp();
    // amplitude damping alone already decays coherences by exp(−t / 2T1)
    let lambda = (-t * (1.0 / t2_us - 0.5 / t1_us)).exp().min(1.0);
    Ok(amplitude_damping_channel(gamma)?.then(&phase_damping_channel(lambda)?))
}

/// Two-qubit Pauli axes supported for coherent over-rotations. The first
/// letter acts on the first operand (the CNOT control).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PauliAxis {
    ZX,
    XI,
    IX,
    ZZ,
}

impl PauliAxis {
    pub const ALL: [PauliAxis; 4] = [PauliAxis::ZX, PauliAxis::XI, PauliAxis::IX, PauliAxis::ZZ];

    pub fn label(self) -> &'static str {
        match self {
            PauliAxis::ZX => "ZX",
            PauliAxis::XI => "XI",
            PauliAxis::IX => "IX",
            PauliAxis::ZZ => "ZZ",
        }
    }

    /// Operator on operands `[first, second]`, little-endian.
    pub fn matrix(self) -> CMatrix {
        let (first, second) = match self {
            PauliAxis::ZX => (pauli_z(), pauli_x()),
            PauliAxis::XI => (pauli_x(), identity(2)),
            PauliAxis::IX => (identity(2), pauli_x()),
            PauliAxis::ZZ => (pauli_z(), pauli_z()),
        };
        kron(&second, &first)
    }
}

impl fmt::Display for PauliAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PauliAxis {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PauliAxis::ALL
            .into_iter()
            .find(|a| a.label() == s)
            .ok_or_else(|| SimError::UnsupportedAxis(s.to_string()))
    }
}

/// Unitary error `exp(−i·angle·P/2)` about a two-qubit Pauli axis.
pub fn coherent_overrotation_channel(axis: PauliAxis, angle: f64) -> Result<KrausChannel, SimError> {
    if !angle.is_finite() {
        return Err(SimError::InvalidChannel(format!(
            "over-rotation angle {angle} is not finite"
        )));
    }
    let (s, c) = (angle / 2.0).sin_cos();
    // P² = I, so exp(−iθP/2) = cos(θ/2) I − i sin(θ/2) P
    let u = identity(4) * Complex64::new(c, 0.0) + axis.matrix() * Complex64::new(0.0, -s);
    KrausChannel::new(vec![u])
}

/// Parses an axis label, rejecting anything outside the supported set.
pub fn parse_axis(label: &str) -> Result<PauliAxis, SimError> {
    label.parse()
}
