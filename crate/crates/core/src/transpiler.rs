//! CNOT orientation passes.
//!
//! [`enforce_direction`] rewrites every CNOT that runs against the physical
//! direction of its pair into the Hadamard sandwich around the allowed
//! direction. [`orient_for_error`] instead picks, per logical CNOT, whichever
//! characterized realization has the higher estimated success.
//!
//! The objective is this toolkit's own choice: the product of `(1 − ε)` over
//! all gates, with the direction-specific CNOT error for each CNOT and the
//! U2/U3 error of each single-qubit gate. Idle decoherence and readout are not
//! part of it. Because the factors of different CNOTs are independent,
//! choosing each CNOT's best realization locally maximizes the product.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{reverse_cnot, Circuit, CircuitError, Gate};
use crate::noise::{DirectedEdgeParams, NoiseModel, QubitParams};
use crate::sim::{active_qubits, MAX_SIM_QUBITS};
use crate::unitary::{circuit_unitary, max_deviation_up_to_phase};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TranspileError {
    #[error("CNOT {control}->{target} acts on an uncoupled pair")]
    Uncoupled { control: usize, target: usize },
    #[error("no error rate for `{0}`")]
    MissingRate(String),
    #[error("verification needs at most {MAX_SIM_QUBITS} active qubits, found {0}")]
    TooLargeToVerify(usize),
    #[error("circuits differ outside their unitary part: {0}")]
    StructureMismatch(String),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

/// Directed coupling graph with per-direction characterizations.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMap {
    num_qubits: usize,
    edges: BTreeMap<(usize, usize), DirectedEdgeParams>,
    physical_direction: BTreeMap<(usize, usize), usize>,
}

fn undirected(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl CouplingMap {
    pub fn new(
        num_qubits: usize,
        edges: impl IntoIterator<Item = DirectedEdgeParams>,
        physical_direction: impl IntoIterator<Item = ((usize, usize), usize)>,
    ) -> Self {
        Self {
            num_qubits,
            edges: edges.into_iter().map(|e| (e.key(), e)).collect(),
            physical_direction: physical_direction
                .into_iter()
                .map(|((a, b), c)| (undirected(a, b), c))
                .collect(),
        }
    }

    pub fn from_noise_model(model: &NoiseModel) -> Self {
        Self::new(
            model.num_qubits(),
            model.edges().iter().copied(),
            model.physical_directions(),
        )
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn edge(&self, control: usize, target: usize) -> Option<&DirectedEdgeParams> {
        self.edges.get(&(control, target))
    }

    pub fn physical_control(&self, a: usize, b: usize) -> Option<usize> {
        self.physical_direction.get(&undirected(a, b)).copied()
    }

    /// True when `control -> target` is the pair's physical direction.
    pub fn is_physical(&self, control: usize, target: usize) -> bool {
        self.physical_control(control, target) == Some(control)
    }

    pub fn is_coupled(&self, a: usize, b: usize) -> bool {
        self.physical_direction.contains_key(&undirected(a, b))
            || self.edges.contains_key(&(a, b))
            || self.edges.contains_key(&(b, a))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Realization {
    Direct,
    Sandwich,
}

impl Realization {
    pub fn gate_count(self) -> usize {
        match self {
            Realization::Direct => 1,
            Realization::Sandwich => 5,
        }
    }
}

/// Decision taken for one logical CNOT of the input circuit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnotDecision {
    /// Position of the CNOT in the input instruction list.
    pub index: usize,
    pub logical: (usize, usize),
    pub realization: Realization,
    pub est_success_direct: Option<f64>,
    pub est_success_sandwich: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranspileReport {
    pub circuit: Circuit,
    pub decisions: Vec<CnotDecision>,
    /// Success-product estimate of the rewritten circuit, when every gate it
    /// uses has an error rate.
    pub estimated_success: Option<f64>,
    pub gates_before: usize,
    pub gates_after: usize,
}

impl TranspileReport {
    pub fn gate_delta(&self) -> isize {
        self.gates_after as isize - self.gates_before as isize
    }

    /// One JSON object per CNOT decision, newline-terminated.
    pub fn decision_log_jsonl(&self) -> String {
        self.decisions
            .iter()
            .map(|d| serde_json::to_string(d).expect("decision serializes") + "\n")
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TranspileOptions {
    /// Cancel H·H pairs on the same qubit when nothing (including a barrier)
    /// separates them.
    pub cancel_adjacent_hadamards: bool,
}

/// Which CNOT directions a rewrite may execute natively.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionPolicy {
    /// Only the pair's physical direction.
    Physical,
    /// Any direction that has its own characterization; the pair's physical
    /// direction is used for uncharacterized ones.
    Characterized,
}

fn qubit_params(params: &[QubitParams], q: usize) -> Result<&QubitParams, TranspileError> {
    params
        .get(q)
        .ok_or_else(|| TranspileError::MissingRate(format!("single-qubit gates on q{q}")))
}

/// Success factor of one gate under the objective.
fn gate_success(gate: &Gate, map: &CouplingMap, params: &[QubitParams]) -> Result<f64, TranspileError> {
    match gate {
        Gate::Barrier(_) | Gate::Measure { .. } => Ok(1.0),
        Gate::Cnot { control, target } => map
            .edge(*control, *target)
            .map(|e| 1.0 - e.cnot_error)
            .ok_or_else(|| TranspileError::MissingRate(gate.to_string())),
        single => {
            let q = single.qubits()[0];
            let (err, _) = qubit_params(params, q)?.single_qubit_cost(single);
            Ok(1.0 - err)
        }
    }
}

/// Product of `(1 − ε)` over every gate of `circuit`.
pub fn estimate_success(
    circuit: &Circuit,
    map: &CouplingMap,
    params: &[QubitParams],
) -> Result<f64, TranspileError> {
    circuit
        .instructions()
        .iter()
        .try_fold(1.0, |acc, g| Ok(acc * gate_success(g, map, params)?))
}

fn realization_gates(control: usize, target: usize, r: Realization) -> Vec<Gate> {
    match r {
        Realization::Direct => vec![Gate::Cnot { control, target }],
        Realization::Sandwich => reverse_cnot(control, target).expect("distinct operands"),
    }
}

/// Estimated success of realizing `CNOT(control, target)` as `r`, or `None`
/// when a rate it needs is missing.
pub fn realization_success(
    control: usize,
    target: usize,
    r: Realization,
    map: &CouplingMap,
    params: &[QubitParams],
) -> Option<f64> {
    realization_gates(control, target, r)
        .iter()
        .try_fold(1.0, |acc, g| gate_success(g, map, params).ok().map(|s| acc * s))
}

fn rewrite(
    circuit: &Circuit,
    mut choose: impl FnMut(usize, usize, usize) -> Result<CnotDecision, TranspileError>,
    map: &CouplingMap,
    params: &[QubitParams],
    options: TranspileOptions,
) -> Result<TranspileReport, TranspileError> {
    let mut out = Circuit::new(circuit.num_qubits(), circuit.num_clbits());
    let mut decisions = Vec::new();
    for (index, gate) in circuit.instructions().iter().enumerate() {
        if let Gate::Cnot { control, target } = *gate {
            if !map.is_coupled(control, target) {
                return Err(TranspileError::Uncoupled { control, target });
            }
            let decision = choose(index, control, target)?;
            out.extend(realization_gates(control, target, decision.realization))?;
            decisions.push(decision);
        } else {
            out.push(gate.clone())?;
        }
    }
    if options.cancel_adjacent_hadamards {
        out = cancel_adjacent_hadamards(&out);
    }
    Ok(TranspileReport {
        estimated_success: estimate_success(&out, map, params).ok(),
        gates_before: circuit.gate_count(),
        gates_after: out.gate_count(),
        circuit: out,
        decisions,
    })
}

/// Replaces each CNOT that runs against its pair's physical direction with the
/// Hadamard sandwich around the allowed direction.
pub fn enforce_direction(
    circuit: &Circuit,
    map: &CouplingMap,
    params: &[QubitParams],
) -> Result<TranspileReport, TranspileError> {
    enforce_direction_with(circuit, map, params, DirectionPolicy::Physical, TranspileOptions::default())
}

pub fn enforce_direction_with(
    circuit: &Circuit,
    map: &CouplingMap,
    params: &[QubitParams],
    policy: DirectionPolicy,
    options: TranspileOptions,
) -> Result<TranspileReport, TranspileError> {
    let choose = |index, control, target| {
        let native = match policy {
            DirectionPolicy::Physical => map.is_physical(control, target),
            DirectionPolicy::Characterized => {
                map.edge(control, target).is_some() || map.is_physical(control, target)
            }
        };
        if !native && map.physical_control(control, target).is_none() {
            // neither direction is declared executable
            if map.edge(target, control).is_none() {
                return Err(TranspileError::Uncoupled { control, target });
            }
        }
        Ok(CnotDecision {
            index,
            logical: (control, target),
            realization: if native {
                Realization::Direct
            } else {
                Realization::Sandwich
            },
            est_success_direct: realization_success(control, target, Realization::Direct, map, params),
            est_success_sandwich: realization_success(
                control,
                target,
                Realization::Sandwich,
                map,
                params,
            ),
        })
    };
    rewrite(circuit, choose, map, params, options)
}

/// Orders candidates: higher success, then fewer gates, then the one whose
/// native CNOT runs in the physical direction.
fn better(
    a: (Realization, f64),
    b: (Realization, f64),
    control: usize,
    target: usize,
    map: &CouplingMap,
) -> bool {
    if a.1 != b.1 {
        return a.1 > b.1;
    }
    if a.0.gate_count() != b.0.gate_count() {
        return a.0.gate_count() < b.0.gate_count();
    }
    let physical = |r: Realization| match r {
        Realization::Direct => map.is_physical(control, target),
        Realization::Sandwich => map.is_physical(target, control),
    };
    physical(a.0) && !physical(b.0)
}

/// Chooses, for every logical CNOT, the characterized realization with the
/// highest estimated success.
pub fn orient_for_error(
    circuit: &Circuit,
    map: &CouplingMap,
    params: &[QubitParams],
    options: TranspileOptions,
) -> Result<TranspileReport, TranspileError> {
    let choose = |index, control, target| {
        let direct = realization_success(control, target, Realization::Direct, map, params);
        let sandwich = realization_success(control, target, Realization::Sandwich, map, params);
        let mut best: Option<(Realization, f64)> = None;
        for cand in [
            direct.map(|s| (Realization::Direct, s)),
            sandwich.map(|s| (Realization::Sandwich, s)),
        ]
        .into_iter()
        .flatten()
        {
            best = match best {
                Some(b) if !better(cand, b, control, target, map) => Some(b),
                _ => Some(cand),
            };
        }
        let (realization, _) = best.ok_or(TranspileError::MissingRate(format!(
            "cnot q{control},q{target} in either direction"
        )))?;
        Ok(CnotDecision {
            index,
            logical: (control, target),
            realization,
            est_success_direct: direct,
            est_success_sandwich: sandwich,
        })
    };
    rewrite(circuit, choose, map, params, options)
}

/// Removes pairs of Hadamards on the same qubit that have no instruction
/// touching that qubit between them. Barriers block cancellation.
pub fn cancel_adjacent_hadamards(circuit: &Circuit) -> Circuit {
    let mut kept: Vec<Option<Gate>> = Vec::with_capacity(circuit.instructions().len());
    let mut open_h: HashMap<usize, usize> = HashMap::new();
    for gate in circuit.instructions() {
        if let Gate::H(q) = gate {
            if let Some(pos) = open_h.remove(q) {
                kept[pos] = None;
                continue;
            }
            open_h.insert(*q, kept.len());
        } else {
            for q in gate.qubits() {
                open_h.remove(&q);
            }
        }
        kept.push(Some(gate.clone()));
    }
    Circuit::from_gates(
        circuit.num_qubits(),
        circuit.num_clbits(),
        kept.into_iter().flatten(),
    )
    .expect("subset of a valid circuit")
}

/// Largest elementwise deviation, up to global phase, between the unitaries
/// of two circuits over their active qubits. Measurements must agree exactly.
pub fn verify_equivalence(original: &Circuit, rewritten: &Circuit) -> Result<f64, TranspileError> {
    let measures = |c: &Circuit| -> Vec<Gate> {
        c.instructions()
            .iter()
            .filter(|g| matches!(g, Gate::Measure { .. }))
            .cloned()
            .collect()
    };
    if measures(original) != measures(rewritten) {
        return Err(TranspileError::StructureMismatch(
            "measurement lists differ".into(),
        ));
    }
    let mut active = active_qubits(original);
    active.extend(active_qubits(rewritten));
    active.sort_unstable();
    active.dedup();
    if active.len() > MAX_SIM_QUBITS {
        return Err(TranspileError::TooLargeToVerify(active.len()));
    }
    let width = active.len().max(1);
    let n = original.num_qubits().max(rewritten.num_qubits());
    let mut map = vec![0; n];
    for (i, &q) in active.iter().enumerate() {
        map[q] = i;
    }
    let compact = |c: &Circuit| -> Result<Circuit, TranspileError> {
        let stripped = Circuit::from_gates(
            c.num_qubits(),
            0,
            c.instructions()
                .iter()
                .filter(|g| g.is_unitary())
                .cloned(),
        )?;
        Ok(stripped.remap_qubits(&map[..c.num_qubits()], width)?)
    };
    let a = circuit_unitary(&compact(original)?).expect("small register");
    let b = circuit_unitary(&compact(rewritten)?).expect("small register");
    Ok(max_deviation_up_to_phase(&b, &a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::build_n_stage;
    use approx::assert_abs_diff_eq;

    const CNOT_ERR: f64 = 0.00862;
    const U2_ERR: f64 = 0.00042;

    fn params(u2: f64) -> Vec<QubitParams> {
        vec![
            QubitParams {
                u2_error: u2,
                ..QubitParams::IDEAL
            };
            2
        ]
    }

    fn one_way_map() -> CouplingMap {
        CouplingMap::new(2, [DirectedEdgeParams::new(0, 1, CNOT_ERR, 348.0)], [((0, 1), 0)])
    }

    fn dual_map(e01: f64, e10: f64) -> CouplingMap {
        CouplingMap::new(
            2,
            [
                DirectedEdgeParams::new(0, 1, e01, 348.0),
                DirectedEdgeParams::new(1, 0, e10, 384.0),
            ],
            [((0, 1), 0)],
        )
    }

    fn single(gates: Vec<Gate>) -> Circuit {
        Circuit::from_gates(2, 0, gates).unwrap()
    }

    #[test]
    fn disallowed_cnot_becomes_sandwich() {
        let c = single(vec![Gate::Cnot {
            control: 1,
            target: 0,
        }]);
        let report = enforce_direction(&c, &one_way_map(), &params(U2_ERR)).unwrap();
        assert_eq!(
            report.circuit.instructions(),
            &[
                Gate::H(1),
                Gate::H(0),
                Gate::Cnot {
                    control: 0,
                    target: 1
                },
                Gate::H(1),
                Gate::H(0),
            ]
        );
        assert_eq!(report.decisions[0].realization, Realization::Sandwich);
        assert_eq!(report.gate_delta(), 4);
        assert!(verify_equivalence(&c, &report.circuit).unwrap() < 1e-12);
    }

    #[test]
    fn allowed_cnot_untouched() {
        let c = single(vec![Gate::Cnot {
            control: 0,
            target: 1,
        }]);
        let report = enforce_direction(&c, &one_way_map(), &params(U2_ERR)).unwrap();
        assert_eq!(report.circuit, c);
        assert_eq!(report.decisions[0].realization, Realization::Direct);
    }

    #[test]
    fn uncoupled_pair_rejected() {
        let c = Circuit::from_gates(
            3,
            0,
            [Gate::Cnot {
                control: 0,
                target: 2,
            }],
        )
        .unwrap();
        assert_eq!(
            enforce_direction(&c, &one_way_map(), &params(U2_ERR)),
            Err(TranspileError::Uncoupled {
                control: 0,
                target: 2
            })
        );
    }

    #[test]
    fn success_product_examples() {
        let map = one_way_map();
        let p = params(U2_ERR);
        assert_eq!(estimate_success(&Circuit::new(2, 0), &map, &p).unwrap(), 1.0);
        let one = single(vec![Gate::Cnot {
            control: 0,
            target: 1,
        }]);
        assert_abs_diff_eq!(estimate_success(&one, &map, &p).unwrap(), 0.99138, epsilon = 1e-12);
        let sandwich = single(reverse_cnot(1, 0).unwrap());
        let expected = (1.0 - U2_ERR).powi(4) * (1.0 - CNOT_ERR);
        assert_abs_diff_eq!(estimate_success(&sandwich, &map, &p).unwrap(), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(expected, 0.98971, epsilon = 1e-5);
        let missing = single(vec![Gate::Cnot {
            control: 1,
            target: 0,
        }]);
        assert!(matches!(
            estimate_success(&missing, &map, &p),
            Err(TranspileError::MissingRate(_))
        ));
        let mut measured = Circuit::new(2, 1);
        measured.push(Gate::Barrier(vec![0, 1])).unwrap();
        measured.push(Gate::Measure { qubit: 0, clbit: 0 }).unwrap();
        assert_eq!(estimate_success(&measured, &map, &p).unwrap(), 1.0);
    }

    #[test]
    fn symmetric_rates_keep_direct() {
        let c = single(vec![
            Gate::Cnot {
                control: 0,
                target: 1,
            },
            Gate::Cnot {
                control: 1,
                target: 0,
            },
        ]);
        let r = orient_for_error(&c, &dual_map(0.01, 0.01), &params(U2_ERR), TranspileOptions::default())
            .unwrap();
        assert!(r.decisions.iter().all(|d| d.realization == Realization::Direct));
        // even with free single-qubit gates the tie goes to the shorter realization
        let r = orient_for_error(&c, &dual_map(0.01, 0.01), &params(0.0), TranspileOptions::default())
            .unwrap();
        assert!(r.decisions.iter().all(|d| d.realization == Realization::Direct));
    }

    #[test]
    fn large_direction_gap_prefers_sandwich() {
        let c = single(vec![Gate::Cnot {
            control: 0,
            target: 1,
        }]);
        let r = orient_for_error(&c, &dual_map(0.03, 0.005), &params(0.0004), TranspileOptions::default())
            .unwrap();
        let d = &r.decisions[0];
        assert_eq!(d.realization, Realization::Sandwich);
        assert_abs_diff_eq!(d.est_success_direct.unwrap(), 0.97, epsilon = 1e-15);
        assert_abs_diff_eq!(d.est_success_sandwich.unwrap(), 0.9934, epsilon = 1e-4);
        assert!(verify_equivalence(&c, &r.circuit).unwrap() < 1e-12);
    }

    #[test]
    fn hadamard_cleanup_respects_barriers() {
        let c = single(vec![Gate::H(0), Gate::H(0), Gate::H(1), Gate::Barrier(vec![0, 1]), Gate::H(1)]);
        let cleaned = cancel_adjacent_hadamards(&c);
        assert_eq!(
            cleaned.instructions(),
            &[Gate::H(1), Gate::Barrier(vec![0, 1]), Gate::H(1)]
        );
        let across_cnot = single(vec![
            Gate::H(0),
            Gate::Cnot {
                control: 0,
                target: 1,
            },
            Gate::H(0),
        ]);
        assert_eq!(cancel_adjacent_hadamards(&across_cnot), across_cnot);
    }

    #[test]
    fn cleanup_between_unseparated_sandwiches() {
        let c = single(vec![
            Gate::Cnot {
                control: 1,
                target: 0,
            },
            Gate::Cnot {
                control: 1,
                target: 0,
            },
        ]);
        let opts = TranspileOptions {
            cancel_adjacent_hadamards: true,
        };
        let map = one_way_map();
        let r = enforce_direction_with(&c, &map, &params(U2_ERR), DirectionPolicy::Physical, opts)
            .unwrap();
        assert_eq!(r.circuit.gate_count(), 6);
        assert!(verify_equivalence(&c, &r.circuit).unwrap() < 1e-12);
        // cancellation never crosses the stage barriers
        let staged = build_n_stage(1, 0, 3).unwrap();
        let r = enforce_direction_with(&staged, &map, &params(U2_ERR), DirectionPolicy::Physical, opts)
            .unwrap();
        let plain = enforce_direction(&staged, &map, &params(U2_ERR)).unwrap();
        assert!(r.circuit.gate_count() < plain.circuit.gate_count());
        assert_eq!(r.circuit.barrier_count(), plain.circuit.barrier_count());
        assert!(verify_equivalence(&staged, &r.circuit).unwrap() < 1e-12);
    }

    #[test]
    fn characterized_policy_keeps_characterized_directions() {
        let c = single(vec![Gate::Cnot {
            control: 1,
            target: 0,
        }]);
        let map = dual_map(0.01, 0.02);
        let r = enforce_direction_with(&c, &map, &params(U2_ERR), DirectionPolicy::Characterized, TranspileOptions::default())
            .unwrap();
        assert_eq!(r.circuit, c);
        let r = enforce_direction_with(&c, &one_way_map(), &params(U2_ERR), DirectionPolicy::Characterized, TranspileOptions::default())
            .unwrap();
        assert_eq!(r.decisions[0].realization, Realization::Sandwich);
    }

    #[test]
    fn decision_log_lines() {
        let c = single(vec![
            Gate::H(0),
            Gate::Cnot {
                control: 1,
                target: 0,
            },
        ]);
        let r = enforce_direction(&c, &one_way_map(), &params(U2_ERR)).unwrap();
        let log = r.decision_log_jsonl();
        let line: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
        assert_eq!(line["index"], 1);
        assert_eq!(line["logical"], serde_json::json!([1, 0]));
        assert_eq!(line["realization"], "sandwich");
        assert!(line["est_success_direct"].is_null());
        assert!(line["est_success_sandwich"].as_f64().unwrap() > 0.98);
    }
}
