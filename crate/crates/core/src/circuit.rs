//! Circuit intermediate representation and the benchmark circuit constructors.
//!
//! Qubit indices are abstract until a circuit is bound to hardware by the
//! transpiler or the experiment runner. Bitstrings everywhere in this crate
//! are little-endian: classical bit 0 is the rightmost character.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest register accepted by the readout calibration builder.
pub const MAX_CALIBRATION_QUBITS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("CNOT control and target must differ (both are qubit {0})")]
    SameControlTarget(usize),
    #[error("qubit {qubit} out of range for a {num_qubits}-qubit circuit")]
    QubitOutOfRange { qubit: usize, num_qubits: usize },
    #[error("classical bit {clbit} out of range for {num_clbits} classical bits")]
    ClbitOutOfRange { clbit: usize, num_clbits: usize },
    #[error("U gate angle {0} is not finite")]
    NonFiniteAngle(f64),
    #[error("qubit {0} is measured more than once")]
    QubitMeasuredTwice(usize),
    #[error("classical bit {0} is written by more than one measurement")]
    ClbitWrittenTwice(usize),
    #[error("barrier must cover at least one qubit")]
    EmptyBarrier,
    #[error("barrier lists qubit {0} more than once")]
    DuplicateBarrierQubit(usize),
    #[error("stage count must be at least 1")]
    ZeroStages,
    #[error("calibration register size must be in 1..={max}, got {got}", max = MAX_CALIBRATION_QUBITS)]
    CalibrationSize { got: usize },
    #[error("invalid circuit document at {path}: {message}")]
    Document { path: String, message: String },
}

/// A single instruction.
#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    H(usize),
    X(usize),
    SX(usize),
    /// `U(theta, phi, lambda) = Rz(phi) Ry(theta) Rz(lambda)` up to global phase.
    U {
        qubit: usize,
        theta: f64,
        phi: f64,
        lambda: f64,
    },
    Cnot {
        control: usize,
        target: usize,
    },
    Barrier(Vec<usize>),
    Measure {
        qubit: usize,
        clbit: usize,
    },
}

impl Gate {
    /// Qubits the instruction touches, in operand order.
    pub fn qubits(&self) -> Vec<usize> {
        match self {
            Gate::H(q) | Gate::X(q) | Gate::SX(q) => vec![*q],
            Gate::U { qubit, .. } => vec![*qubit],
            Gate::Cnot { control, target } => vec![*control, *target],
            Gate::Barrier(qs) => qs.clone(),
            Gate::Measure { qubit, .. } => vec![*qubit],
        }
    }

    /// True for gates with a unitary action (everything but barriers and measurements).
    pub fn is_unitary(&self) -> bool {
        !matches!(self, Gate::Barrier(_) | Gate::Measure { .. })
    }

    pub fn is_cnot(&self) -> bool {
        matches!(self, Gate::Cnot { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Gate::H(_) => "h",
            Gate::X(_) => "x",
            Gate::SX(_) => "sx",
            Gate::U { .. } => "u",
            Gate::Cnot { .. } => "cnot",
            Gate::Barrier(_) => "barrier",
            Gate::Measure { .. } => "measure",
        }
    }

    fn check(&self) -> Result<(), CircuitError> {
        match self {
            Gate::Cnot { control, target } if control == target => {
                Err(CircuitError::SameControlTarget(*control))
            }
            Gate::U {
                theta, phi, lambda, ..
            } => {
                for a in [*theta, *phi, *lambda] {
                    if !a.is_finite() {
                        return Err(CircuitError::NonFiniteAngle(a));
                    }
                }
                Ok(())
            }
            Gate::Barrier(qs) => {
                if qs.is_empty() {
                    return Err(CircuitError::EmptyBarrier);
                }
                let mut seen = BTreeSet::new();
                for q in qs {
                    if !seen.insert(*q) {
                        return Err(CircuitError::DuplicateBarrierQubit(*q));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Rewrites every qubit operand through `map`.
    pub fn map_qubits(&self, map: impl Fn(usize) -> usize) -> Gate {
        match self {
            Gate::H(q) => Gate::H(map(*q)),
            Gate::X(q) => Gate::X(map(*q)),
            Gate::SX(q) => Gate::SX(map(*q)),
            Gate::U {
                qubit,
                theta,
                phi,
                lambda,
            } => Gate::U {
                qubit: map(*qubit),
                theta: *theta,
                phi: *phi,
                lambda: *lambda,
            },
            Gate::Cnot { control, target } => Gate::Cnot {
                control: map(*control),
                target: map(*target),
            },
            Gate::Barrier(qs) => Gate::Barrier(qs.iter().map(|q| map(*q)).collect()),
            Gate::Measure { qubit, clbit } => Gate::Measure {
                qubit: map(*qubit),
                clbit: *clbit,
            },
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gate::H(q) => write!(f, "h q{q}"),
            Gate::X(q) => write!(f, "x q{q}"),
            Gate::SX(q) => write!(f, "sx q{q}"),
            Gate::U {
                qubit,
                theta,
                phi,
                lambda,
            } => write!(f, "u({theta},{phi},{lambda}) q{qubit}"),
            Gate::Cnot { control, target } => write!(f, "cnot q{control},q{target}"),
            Gate::Barrier(qs) => {
                let list: Vec<String> = qs.iter().map(|q| format!("q{q}")).collect();
                write!(f, "barrier {}", list.join(","))
            }
            Gate::Measure { qubit, clbit } => write!(f, "measure q{qubit} -> c{clbit}"),
        }
    }
}

/// An ordered instruction list over indexed qubits and classical bits.
///
/// Every instruction is validated on insertion, so a `Circuit` value always
/// satisfies its range and measurement invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    num_qubits: usize,
    num_clbits: usize,
    instructions: Vec<Gate>,
}

impl Circuit {
    pub fn new(num_qubits: usize, num_clbits: usize) -> Self {
        Self {
            num_qubits,
            num_clbits,
            instructions: Vec::new(),
        }
    }

    pub fn from_gates(
        num_qubits: usize,
        num_clbits: usize,
        gates: impl IntoIterator<Item = Gate>,
    ) -> Result<Self, CircuitError> {
        let mut c = Self::new(num_qubits, num_clbits);
        for g in gates {
            c.push(g)?;
        }
        Ok(c)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn num_clbits(&self) -> usize {
        self.num_clbits
    }

    pub fn instructions(&self) -> &[Gate] {
        &self.instructions
    }

    pub fn into_instructions(self) -> Vec<Gate> {
        self.instructions
    }

    pub fn push(&mut self, gate: Gate) -> Result<(), CircuitError> {
        gate.check()?;
        for q in gate.qubits() {
            if q >= self.num_qubits {
                return Err(CircuitError::QubitOutOfRange {
                    qubit: q,
                    num_qubits: self.num_qubits,
                });
            }
        }
        if let Gate::Measure { qubit, clbit } = gate {
            if clbit >= self.num_clbits {
                return Err(CircuitError::ClbitOutOfRange {
                    clbit,
                    num_clbits: self.num_clbits,
                });
            }
            for existing in &self.instructions {
                if let Gate::Measure {
                    qubit: q,
                    clbit: c,
                } = existing
                {
                    if *q == qubit {
                        return Err(CircuitError::QubitMeasuredTwice(qubit));
                    }
                    if *c == clbit {
                        return Err(CircuitError::ClbitWrittenTwice(clbit));
                    }
                }
            }
        }
        self.instructions.push(gate);
        Ok(())
    }

    pub fn extend(&mut self, gates: impl IntoIterator<Item = Gate>) -> Result<(), CircuitError> {
        for g in gates {
            self.push(g)?;
        }
        Ok(())
    }

    /// Gate count excluding barriers and measurements.
    pub fn gate_count(&self) -> usize {
        self.instructions.iter().filter(|g| g.is_unitary()).count()
    }

    pub fn barrier_count(&self) -> usize {
        self.instructions
            .iter()
            .filter(|g| matches!(g, Gate::Barrier(_)))
            .count()
    }

    pub fn measure_count(&self) -> usize {
        self.instructions
            .iter()
            .filter(|g| matches!(g, Gate::Measure { .. }))
            .count()
    }

    pub fn cnot_count(&self) -> usize {
        self.instructions.iter().filter(|g| g.is_cnot()).count()
    }

    /// Copy of the circuit with measurements dropped.
    pub fn without_measurements(&self) -> Circuit {
        Circuit {
            num_qubits: self.num_qubits,
            num_clbits: self.num_clbits,
            instructions: self
                .instructions
                .iter()
                .filter(|g| !matches!(g, Gate::Measure { .. }))
                .cloned()
                .collect(),
        }
    }

    /// Relabels qubits through `map` (indexed by old qubit) onto a register of
    /// `num_qubits` qubits.
    pub fn remap_qubits(&self, map: &[usize], num_qubits: usize) -> Result<Circuit, CircuitError> {
        let mut out = Circuit::new(num_qubits, self.num_clbits);
        for g in &self.instructions {
            for q in g.qubits() {
                if q >= map.len() {
                    return Err(CircuitError::QubitOutOfRange {
                        qubit: q,
                        num_qubits: map.len(),
                    });
                }
            }
            out.push(g.map_qubits(|q| map[q]))?;
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&CircuitDoc::from(self)).expect("circuit document serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Circuit, CircuitError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let doc: CircuitDoc = serde_path_to_error::deserialize(de).map_err(|e| {
            CircuitError::Document {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            }
        })?;
        doc.try_into()
    }
}

/// H on the control, CNOT, barrier, CNOT, H on the control: a Bell pair
/// followed by its inverse.
pub fn build_identity_op(control: usize, target: usize) -> Result<Circuit, CircuitError> {
    if control == target {
        return Err(CircuitError::SameControlTarget(control));
    }
    let mut c = Circuit::new(control.max(target) + 1, 0);
    c.extend(identity_op_gates(control, target))?;
    Ok(c)
}

fn identity_op_gates(control: usize, target: usize) -> [Gate; 5] {
    let pair = ordered_pair(control, target);
    [
        Gate::H(control),
        Gate::Cnot { control, target },
        Gate::Barrier(pair.to_vec()),
        Gate::Cnot { control, target },
        Gate::H(control),
    ]
}

fn ordered_pair(a: usize, b: usize) -> [usize; 2] {
    [a.min(b), a.max(b)]
}

/// `n` identity operations separated by barriers, then both qubits measured.
///
/// The lower-indexed qubit of the pair is measured into classical bit 0, so
/// the ground outcome is `"00"` for either orientation.
pub fn build_n_stage(control: usize, target: usize, n: usize) -> Result<Circuit, CircuitError> {
    if n == 0 {
        return Err(CircuitError::ZeroStages);
    }
    if control == target {
        return Err(CircuitError::SameControlTarget(control));
    }
    let pair = ordered_pair(control, target);
    let mut c = Circuit::new(pair[1] + 1, 2);
    for stage in 0..n {
        if stage > 0 {
            c.push(Gate::Barrier(pair.to_vec()))?;
        }
        c.extend(identity_op_gates(control, target))?;
    }
    c.push(Gate::Measure {
        qubit: pair[0],
        clbit: 0,
    })?;
    c.push(Gate::Measure {
        qubit: pair[1],
        clbit: 1,
    })?;
    Ok(c)
}

/// Hadamard-sandwich realization of `CNOT(control, target)` using a CNOT in
/// the opposite direction.
pub fn reverse_cnot(control: usize, target: usize) -> Result<Vec<Gate>, CircuitError> {
    if control == target {
        return Err(CircuitError::SameControlTarget(control));
    }
    Ok(vec![
        Gate::H(control),
        Gate::H(target),
        Gate::Cnot {
            control: target,
            target: control,
        },
        Gate::H(control),
        Gate::H(target),
    ])
}

/// One circuit per computational basis state of a `k`-qubit register.
/// Circuit `i` applies X to each set bit of `i` and measures qubit `q` into
/// classical bit `q`.
pub fn build_readout_calibration_circuits(k: usize) -> Result<Vec<Circuit>, CircuitError> {
    if k == 0 || k > MAX_CALIBRATION_QUBITS {
        return Err(CircuitError::CalibrationSize { got: k });
    }
    (0..1usize << k)
        .map(|state| {
            let mut c = Circuit::new(k, k);
            for q in 0..k {
                if state >> q & 1 == 1 {
                    c.push(Gate::X(q))?;
                }
            }
            for q in 0..k {
                c.push(Gate::Measure { qubit: q, clbit: q })?;
            }
            Ok(c)
        })
        .collect()
}

// JSON document form: {num_qubits, num_clbits, instructions:[{kind, qubits, params?, clbits?}]}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CircuitDoc {
    num_qubits: usize,
    num_clbits: usize,
    instructions: Vec<InstructionDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstructionDoc {
    kind: String,
    qubits: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    params: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    clbits: Option<Vec<usize>>,
}

impl From<&Circuit> for CircuitDoc {
    fn from(c: &Circuit) -> Self {
        let instructions = c
            .instructions
            .iter()
            .map(|g| {
                let (params, clbits) = match g {
                    Gate::U {
                        theta, phi, lambda, ..
                    } => (Some(vec![*theta, *phi, *lambda]), None),
                    Gate::Measure { clbit, .. } => (None, Some(vec![*clbit])),
                    _ => (None, None),
                };
                InstructionDoc {
                    kind: g.name().to_string(),
                    qubits: g.qubits(),
                    params,
                    clbits,
                }
            })
            .collect();
        CircuitDoc {
            num_qubits: c.num_qubits,
            num_clbits: c.num_clbits,
            instructions,
        }
    }
}

impl TryFrom<CircuitDoc> for Circuit {
    type Error = CircuitError;

    fn try_from(doc: CircuitDoc) -> Result<Self, Self::Error> {
        let mut c = Circuit::new(doc.num_qubits, doc.num_clbits);
        for (i, inst) in doc.instructions.into_iter().enumerate() {
            let path = format!("instructions[{i}]");
            let gate = inst.into_gate(&path)?;
            c.push(gate).map_err(|e| CircuitError::Document {
                path: path.clone(),
                message: e.to_string(),
            })?;
        }
        Ok(c)
    }
}

impl InstructionDoc {
    fn into_gate(self, path: &str) -> Result<Gate, CircuitError> {
        let bad = |field: &str, message: String| CircuitError::Document {
            path: format!("{path}.{field}"),
            message,
        };
        let expect_qubits = |n: usize| -> Result<(), CircuitError> {
            if self.qubits.len() != n {
                return Err(bad(
                    "qubits",
                    format!("`{}` takes {n} qubit(s), got {}", self.kind, self.qubits.len()),
                ));
            }
            Ok(())
        };
        let no_params = || -> Result<(), CircuitError> {
            if self.params.is_some() {
                return Err(bad("params", format!("`{}` takes no params", self.kind)));
            }
            Ok(())
        };
        let no_clbits = || -> Result<(), CircuitError> {
            if self.clbits.is_some() {
                return Err(bad("clbits", format!("`{}` takes no clbits", self.kind)));
            }
            Ok(())
        };
        let gate = match self.kind.as_str() {
            "h" | "x" | "sx" => {
                expect_qubits(1)?;
                no_params()?;
                no_clbits()?;
                let q = self.qubits[0];
                match self.kind.as_str() {
                    "h" => Gate::H(q),
                    "x" => Gate::X(q),
                    _ => Gate::SX(q),
                }
            }
            "u" => {
                expect_qubits(1)?;
                no_clbits()?;
                let params = self.params.as_deref().unwrap_or_default();
                if params.len() != 3 {
                    return Err(bad(
                        "params",
                        format!("`u` takes 3 params, got {}", params.len()),
                    ));
                }
                Gate::U {
                    qubit: self.qubits[0],
                    theta: params[0],
                    phi: params[1],
                    lambda: params[2],
                }
            }
            "cnot" | "cx" => {
                expect_qubits(2)?;
                no_params()?;
                no_clbits()?;
                Gate::Cnot {
                    control: self.qubits[0],
                    target: self.qubits[1],
                }
            }
            "barrier" => {
                no_params()?;
                no_clbits()?;
                Gate::Barrier(self.qubits.clone())
            }
            "measure" => {
                expect_qubits(1)?;
                no_params()?;
                let clbits = self.clbits.as_deref().unwrap_or_default();
                if clbits.len() != 1 {
                    return Err(bad(
                        "clbits",
                        format!("`measure` takes 1 clbit, got {}", clbits.len()),
                    ));
                }
                Gate::Measure {
                    qubit: self.qubits[0],
                    clbit: clbits[0],
                }
            }
            other => return Err(bad("kind", format!("unknown instruction kind `{other}`"))),
        };
        Ok(gate)
    }
}
