//! Directional noise description: per-qubit decoherence and readout, plus a
//! separate characterization for each CNOT orientation of a coupled pair.
//!
//! The JSON form is
//!
//! ```json
//! {"qubits": [{"t1_us": 80, "t2_us": 100, "readout_p01": 0.025, "readout_p10": 0.025,
//!              "u2_error": 0.00042, "u2_duration_ns": 35.5}],
//!  "edges": [{"control": 0, "target": 1, "cnot_error": 0.00862, "duration_ns": 348,
//!             "coherent_axis": "ZX", "coherent_angle_rad": 0.1}],
//!  "physical_direction": {"0-1": 0}}
//! ```
//!
//! U1 (virtual Z) gates carry no error; U3-class gates carry twice the U2
//! error and duration.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::Gate;
use crate::sim::{PauliAxis, ReadoutError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseModelError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("no parameters for qubit {0}")]
    MissingQubit(usize),
    #[error("no characterization for CNOT {control}->{target}")]
    MissingEdge { control: usize, target: usize },
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> NoiseModelError {
    NoiseModelError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitParams {
    pub t1_us: f64,
    pub t2_us: f64,
    /// P(read 1 | prepared 0)
    pub readout_p01: f64,
    /// P(read 0 | prepared 1)
    pub readout_p10: f64,
    pub u2_error: f64,
    pub u2_duration_ns: f64,
}

impl QubitParams {
    /// A qubit with no decoherence, readout or gate error.
    pub const IDEAL: QubitParams = QubitParams {
        t1_us: f64::MAX,
        t2_us: f64::MAX,
        readout_p01: 0.0,
        readout_p10: 0.0,
        u2_error: 0.0,
        u2_duration_ns: 0.0,
    };

    pub fn readout(&self) -> ReadoutError {
        ReadoutError {
            p01: self.readout_p01,
            p10: self.readout_p10,
        }
    }

    /// Error of a U3-class pulse pair (X, general U).
    pub fn u3_error(&self) -> f64 {
        (2.0 * self.u2_error).min(1.0)
    }

    pub fn u3_duration_ns(&self) -> f64 {
        2.0 * self.u2_duration_ns
    }

    /// Error probability and duration of a single-qubit gate on this qubit.
    /// H and SX are one U2-class pulse, X and general U are U3-class, and a U
    /// with `theta == 0` is a virtual frame change.
    pub fn single_qubit_cost(&self, gate: &Gate) -> (f64, f64) {
        match gate {
            Gate::H(_) | Gate::SX(_) => (self.u2_error, self.u2_duration_ns),
            Gate::U { theta, .. } if *theta == 0.0 => (0.0, 0.0),
            Gate::X(_) | Gate::U { .. } => (self.u3_error(), self.u3_duration_ns()),
            Gate::Cnot { .. } | Gate::Barrier(_) | Gate::Measure { .. } => (0.0, 0.0),
        }
    }

    fn validate(&self, path: &str) -> Result<(), NoiseModelError> {
        for (name, v) in [("t1_us", self.t1_us), ("t2_us", self.t2_us)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(
                    format!("{path}.{name}"),
                    format!("must be a positive finite time, got {v}"),
                ));
            }
        }
        if self.t2_us > 2.0 * self.t1_us {
            return Err(invalid(
                format!("{path}.t2_us"),
                format!(
                    "t2 ({}) exceeds 2*t1 ({})",
                    self.t2_us,
                    2.0 * self.t1_us
                ),
            ));
        }
        for (name, v) in [
            ("readout_p01", self.readout_p01),
            ("readout_p10", self.readout_p10),
            ("u2_error", self.u2_error),
        ] {
            check_probability(&format!("{path}.{name}"), v)?;
        }
        check_duration(&format!("{path}.u2_duration_ns"), self.u2_duration_ns)
    }
}

fn check_probability(path: &str, v: f64) -> Result<(), NoiseModelError> {
    if !(0.0..=1.0).contains(&v) {
        return Err(invalid(path, format!("probability {v} outside [0, 1]")));
    }
    Ok(())
}

fn check_duration(path: &str, v: f64) -> Result<(), NoiseModelError> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(invalid(path, format!("duration {v} must be finite and >= 0")));
    }
    Ok(())
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

/// Characterization of one CNOT orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectedEdgeParams {
    pub control: usize,
    pub target: usize,
    pub cnot_error: f64,
    pub duration_ns: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coherent_axis: Option<PauliAxis>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub coherent_angle_rad: f64,
}

impl DirectedEdgeParams {
    pub fn new(control: usize, target: usize, cnot_error: f64, duration_ns: f64) -> Self {
        Self {
            control,
            target,
            cnot_error,
            duration_ns,
            coherent_axis: None,
            coherent_angle_rad: 0.0,
        }
    }

    pub fn with_coherent_error(mut self, axis: PauliAxis, angle_rad: f64) -> Self {
        self.coherent_axis = Some(axis);
        self.coherent_angle_rad = angle_rad;
        self
    }

    pub fn key(&self) -> (usize, usize) {
        (self.control, self.target)
    }

    fn validate(&self, path: &str, num_qubits: usize) -> Result<(), NoiseModelError> {
        for (name, q) in [("control", self.control), ("target", self.target)] {
            if q >= num_qubits {
                return Err(invalid(
                    format!("{path}.{name}"),
                    format!("qubit {q} is not declared ({num_qubits} qubits)"),
                ));
            }
        }
        if self.control == self.target {
            return Err(invalid(
                format!("{path}.target"),
                "control and target must differ",
            ));
        }
        check_probability(&format!("{path}.cnot_error"), self.cnot_error)?;
        check_duration(&format!("{path}.duration_ns"), self.duration_ns)?;
        if !self.coherent_angle_rad.is_finite() {
            return Err(invalid(
                format!("{path}.coherent_angle_rad"),
                "angle must be finite",
            ));
        }
        Ok(())
    }
}

/// Validated noise model. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    qubits: Vec<QubitParams>,
    edges: Vec<DirectedEdgeParams>,
    /// Undirected pair `(low, high)` to the qubit allowed to act as control.
    physical_direction: BTreeMap<(usize, usize), usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseModelDoc {
    qubits: Vec<QubitParams>,
    edges: Vec<DirectedEdgeParams>,
    physical_direction: BTreeMap<String, usize>,
}

fn parse_pair_key(key: &str) -> Option<(usize, usize)> {
    let (a, b) = key.split_once('-')?;
    let parse = |s: &str| -> Option<usize> {
        if s.is_empty() || !s.bytes().all(|c| c.is_ascii_digit()) {
            return None;
        }
        s.parse().ok()
    };
    Some((parse(a)?, parse(b)?))
}

fn undirected(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl NoiseModel {
    /// Validates and assembles a model; `physical_direction` is keyed by
    /// unordered pairs in either order.
    pub fn new(
        qubits: Vec<QubitParams>,
        edges: Vec<DirectedEdgeParams>,
        physical_direction: impl IntoIterator<Item = ((usize, usize), usize)>,
    ) -> Result<Self, NoiseModelError> {
        let mut dirs = BTreeMap::new();
        for ((a, b), control) in physical_direction {
            let path = format!("physical_direction.{a}-{b}");
            if dirs.insert(undirected(a, b), control).is_some() {
                return Err(invalid(path, "pair listed more than once"));
            }
        }
        let model = Self {
            qubits,
            edges,
            physical_direction: dirs,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<(), NoiseModelError> {
        for (i, q) in self.qubits.iter().enumerate() {
            q.validate(&format!("qubits[{i}]"))?;
        }
        let mut seen = BTreeSet::new();
        for (i, e) in self.edges.iter().enumerate() {
            let path = format!("edges[{i}]");
            e.validate(&path, self.qubits.len())?;
            if !seen.insert(e.key()) {
                return Err(invalid(
                    path,
                    format!("duplicate entry for CNOT {}->{}", e.control, e.target),
                ));
            }
        }
        for (&(a, b), &control) in &self.physical_direction {
            let path = format!("physical_direction.{a}-{b}");
            if a == b {
                return Err(invalid(path, "pair endpoints must differ"));
            }
            if b >= self.qubits.len() {
                return Err(invalid(
                    path,
                    format!("qubit {b} is not declared ({} qubits)", self.qubits.len()),
                ));
            }
            if control != a && control != b {
                return Err(invalid(
                    path,
                    format!("control {control} is not an endpoint of the pair"),
                ));
            }
        }
        for (i, e) in self.edges.iter().enumerate() {
            if !self
                .physical_direction
                .contains_key(&undirected(e.control, e.target))
            {
                return Err(invalid(
                    format!("edges[{i}]"),
                    format!(
                        "no physical_direction entry for pair {}-{}",
                        e.control.min(e.target),
                        e.control.max(e.target)
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Ideal qubits with every ordered pair characterized as error-free and
    /// instantaneous. The lower index is the physical control.
    pub fn noiseless(num_qubits: usize) -> Self {
        let mut edges = Vec::new();
        let mut dirs = BTreeMap::new();
        for a in 0..num_qubits {
            for b in 0..num_qubits {
                if a != b {
                    edges.push(DirectedEdgeParams::new(a, b, 0.0, 0.0));
                }
                if a < b {
                    dirs.insert((a, b), a);
                }
            }
        }
        Self {
            qubits: vec![QubitParams::IDEAL; num_qubits],
            edges,
            physical_direction: dirs,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self, NoiseModelError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let doc: NoiseModelDoc = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let path = path.strip_suffix(".?").unwrap_or(&path);
            invalid(if path == "." { "$" } else { path }, e.inner().to_string())
        })?;
        let mut dirs = Vec::with_capacity(doc.physical_direction.len());
        let mut seen = BTreeSet::new();
        for (key, control) in doc.physical_direction {
            let path = format!("physical_direction.{key}");
            let (a, b) = parse_pair_key(&key)
                .ok_or_else(|| invalid(&path, "key must have the form \"<a>-<b>\""))?;
            if !seen.insert(undirected(a, b)) {
                return Err(invalid(path, "pair listed more than once"));
            }
            dirs.push(((a, b), control));
        }
        Self::new(doc.qubits, doc.edges, dirs)
    }

    pub fn to_json(&self) -> String {
        let doc = NoiseModelDoc {
            qubits: self.qubits.clone(),
            edges: self.edges.clone(),
            physical_direction: self
                .physical_direction
                .iter()
                .map(|(&(a, b), &c)| (format!("{a}-{b}"), c))
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("noise model serializes")
    }

    pub fn num_qubits(&self) -> usize {
        self.qubits.len()
    }

    pub fn qubits(&self) -> &[QubitParams] {
        &self.qubits
    }

    pub fn edges(&self) -> &[DirectedEdgeParams] {
        &self.edges
    }

    pub fn physical_directions(&self) -> impl Iterator<Item = ((usize, usize), usize)> + '_ {
        self.physical_direction.iter().map(|(&k, &v)| (k, v))
    }

    pub fn qubit(&self, q: usize) -> Result<&QubitParams, NoiseModelError> {
        self.qubits.get(q).ok_or(NoiseModelError::MissingQubit(q))
    }

    pub fn edge(&self, control: usize, target: usize) -> Option<&DirectedEdgeParams> {
        self.edges
            .iter()
            .find(|e| e.control == control && e.target == target)
    }

    pub fn require_edge(&self, control: usize, target: usize) -> Result<&DirectedEdgeParams, NoiseModelError> {
        self.edge(control, target)
            .ok_or(NoiseModelError::MissingEdge { control, target })
    }

    /// The qubit allowed to act as control on the pair `{a, b}`.
    pub fn physical_control(&self, a: usize, b: usize) -> Option<usize> {
        self.physical_direction.get(&undirected(a, b)).copied()
    }

    /// Copy with the readout parameters of `qubit` replaced.
    pub fn with_readout(&self, qubit: usize, p01: f64, p10: f64) -> Result<Self, NoiseModelError> {
        let mut qubits = self.qubits.clone();
        let q = qubits
            .get_mut(qubit)
            .ok_or(NoiseModelError::MissingQubit(qubit))?;
        q.readout_p01 = p01;
        q.readout_p10 = p10;
        Self::new(qubits, self.edges.clone(), self.physical_direction.clone())
    }

    /// Copy with every qubit's readout made perfect.
    pub fn without_readout_error(&self) -> Self {
        let mut m = self.clone();
        for q in &mut m.qubits {
            q.readout_p01 = 0.0;
            q.readout_p10 = 0.0;
        }
        m
    }

    /// Copy whose single-qubit gates are instantaneous and error-free.
    pub fn without_single_qubit_gate_noise(&self) -> Self {
        let mut m = self.clone();
        for q in &mut m.qubits {
            q.u2_error = 0.0;
            q.u2_duration_ns = 0.0;
        }
        m
    }

    /// Copy with the characterization of `edge.control -> edge.target` replaced or added.
    pub fn with_edge(&self, edge: DirectedEdgeParams) -> Result<Self, NoiseModelError> {
        let mut edges: Vec<_> = self
            .edges
            .iter()
            .filter(|e| e.key() != edge.key())
            .copied()
            .collect();
        edges.push(edge);
        Self::new(self.qubits.clone(), edges, self.physical_direction.clone())
    }
}

/// Two-qubit model used by the toolkit's synthetic experiments.
pub const SYNTH_QUBIT: QubitParams = QubitParams {
    t1_us: 80.0,
    t2_us: 100.0,
    readout_p01: 0.0,
    readout_p10: 0.0,
    u2_error: 0.00042,
    u2_duration_ns: 35.5,
};

/// CNOT durations of the natively supported and the reversed orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeDurations {
    pub physical_ns: f64,
    pub reversed_ns: f64,
}

impl EdgeDurations {
    pub fn symmetric(ns: f64) -> Self {
        Self {
            physical_ns: ns,
            reversed_ns: ns,
        }
    }

    pub fn ratio(&self) -> f64 {
        self.reversed_ns / self.physical_ns
    }
}

impl Default for EdgeDurations {
    /// 13-gate (348 ns) native schedule vs 21-gate (384 ns) reversed schedule.
    fn default() -> Self {
        Self {
            physical_ns: 348.0,
            reversed_ns: 384.0,
        }
    }
}

/// Two identical qubits with physical direction 0→1. The native direction
/// carries `base_error`, the reversed one `base_error * asymmetry_factor`.
pub fn synth_asymmetric_model(
    base_error: f64,
    asymmetry_factor: f64,
    durations: EdgeDurations,
) -> Result<NoiseModel, NoiseModelError> {
    check_probability("base_error", base_error)?;
    if !(asymmetry_factor >= 1.0) || !asymmetry_factor.is_finite() {
        return Err(invalid(
            "asymmetry_factor",
            format!("must be a finite value >= 1, got {asymmetry_factor}"),
        ));
    }
    let reversed = base_error * asymmetry_factor;
    check_probability("base_error * asymmetry_factor", reversed)?;
    NoiseModel::new(
        vec![SYNTH_QUBIT; 2],
        vec![
            DirectedEdgeParams::new(0, 1, base_error, durations.physical_ns),
            DirectedEdgeParams::new(1, 0, reversed, durations.reversed_ns),
        ],
        [((0, 1), 0)],
    )
}
