//! Exhaustive checks of the orientation pass against brute-force enumeration.

use cnotbench::circuit::{Circuit, Gate};
use cnotbench::noise::{DirectedEdgeParams, QubitParams};
use cnotbench::transpiler::{
    orient_for_error, verify_equivalence, CouplingMap, Realization, TranspileOptions,
};

const ALPHABET: [Gate; 6] = [
    Gate::Cnot { control: 0, target: 1 },
    Gate::Cnot { control: 1, target: 0 },
    Gate::H(0),
    Gate::X(1),
    Gate::SX(0),
    Gate::H(1),
];

/// Every word over the alphabet (plus barriers) of length ≤ `max_len` with
/// at most four CNOTs.
fn corpus(max_len: usize) -> Vec<Circuit> {
    let mut words: Vec<Vec<Gate>> = vec![vec![]];
    let mut frontier = words.clone();
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &frontier {
            for g in ALPHABET.iter().cloned().chain([Gate::Barrier(vec![0, 1])]) {
                let mut w = w.clone();
                w.push(g);
                if w.iter().filter(|g| g.is_cnot()).count() <= 4 {
                    next.push(w);
                }
            }
        }
        words.extend(next.iter().cloned());
        frontier = next;
    }
    words
        .into_iter()
        .map(|w| Circuit::from_gates(2, 0, w).unwrap())
        .collect()
}

/// CNOT-only words with exactly 1..=4 CNOTs.
fn cnot_words() -> Vec<Circuit> {
    let mut out = Vec::new();
    for len in 1..=4 {
        for bits in 0..1u32 << len {
            let gates = (0..len).map(|i| ALPHABET[(bits >> i & 1) as usize].clone());
            out.push(Circuit::from_gates(2, 0, gates).unwrap());
        }
    }
    out
}

struct Rates {
    e01: Option<f64>,
    e10: Option<f64>,
    u2: f64,
}

impl Rates {
    fn map(&self) -> CouplingMap {
        let mut edges = Vec::new();
        if let Some(e) = self.e01 {
            edges.push(DirectedEdgeParams::new(0, 1, e, 348.0));
        }
        if let Some(e) = self.e10 {
            edges.push(DirectedEdgeParams::new(1, 0, e, 384.0));
        }
        CouplingMap::new(2, edges, [((0, 1), 0)])
    }

    fn params(&self) -> Vec<QubitParams> {
        vec![
            QubitParams {
                u2_error: self.u2,
                ..QubitParams::IDEAL
            };
            2
        ]
    }

    fn scaled(&self, lambda: f64) -> Rates {
        Rates {
            e01: self.e01.map(|e| e * lambda),
            e10: self.e10.map(|e| e * lambda),
            u2: self.u2 * lambda,
        }
    }

    fn cnot_error(&self, c: usize) -> Option<f64> {
        if c == 0 {
            self.e01
        } else {
            self.e10
        }
    }

    /// Independent success factor of one gate.
    fn factor(&self, g: &Gate) -> Option<f64> {
        Some(match g {
            Gate::Cnot { control, .. } => 1.0 - self.cnot_error(*control)?,
            Gate::H(_) | Gate::SX(_) => 1.0 - self.u2,
            Gate::X(_) => 1.0 - 2.0 * self.u2,
            _ => 1.0,
        })
    }
}

/// Best success over all direct/sandwich assignments, by enumeration.
fn brute_force(circuit: &Circuit, rates: &Rates) -> Option<f64> {
    let cnots: Vec<usize> = circuit
        .instructions()
        .iter()
        .enumerate()
        .filter(|(_, g)| g.is_cnot())
        .map(|(i, _)| i)
        .collect();
    let mut best: Option<f64> = None;
    'assign: for mask in 0..1u32 << cnots.len() {
        let mut success = 1.0;
        for (i, g) in circuit.instructions().iter().enumerate() {
            let factor = match (g, cnots.iter().position(|&j| j == i)) {
                (Gate::Cnot { target, .. }, Some(k)) if mask >> k & 1 == 1 => {
                    let Some(e) = rates.cnot_error(*target) else {
                        continue 'assign;
                    };
                    (1.0 - rates.u2).powi(4) * (1.0 - e)
                }
                _ => match rates.factor(g) {
                    Some(f) => f,
                    None => continue 'assign,
                },
            };
            success *= factor;
        }
        best = Some(best.map_or(success, |b: f64| b.max(success)));
    }
    best
}

fn rate_sets() -> Vec<Rates> {
    vec![
        Rates { e01: Some(0.00862), e10: Some(0.00862), u2: 0.00042 },
        Rates { e01: Some(0.03), e10: Some(0.005), u2: 0.0004 },
        Rates { e01: Some(0.01), e10: Some(0.0095), u2: 0.00042 },
        Rates { e01: Some(0.006), e10: Some(0.02), u2: 0.001 },
        Rates { e01: Some(0.00862), e10: None, u2: 0.00042 },
        Rates { e01: None, e10: Some(0.012), u2: 0.0 },
    ]
}

#[test]
fn pass_matches_brute_force_maximum() {
    let corpus = corpus(5);
    assert!(corpus.len() > 9000);
    for rates in rate_sets() {
        let (map, params) = (rates.map(), rates.params());
        for c in &corpus {
            let report = orient_for_error(c, &map, &params, TranspileOptions::default()).unwrap();
            let best = brute_force(c, &rates).expect("some realization exists");
            let got = report.estimated_success.unwrap();
            assert!((got - best).abs() < 1e-12, "{got} vs {best} for {:?}", c.instructions());
            for d in &report.decisions {
                if let Some(direct) = d.est_success_direct {
                    let chosen = match d.realization {
                        Realization::Direct => direct,
                        Realization::Sandwich => d.est_success_sandwich.unwrap(),
                    };
                    assert!(chosen >= direct);
                }
            }
        }
    }
}

#[test]
fn rewrites_preserve_semantics_and_are_idempotent() {
    for rates in rate_sets() {
        let (map, params) = (rates.map(), rates.params());
        for c in cnot_words().iter().chain(corpus(3).iter()) {
            let once = orient_for_error(c, &map, &params, TranspileOptions::default()).unwrap();
            assert!(verify_equivalence(c, &once.circuit).unwrap() < 1e-10);
            let twice = orient_for_error(&once.circuit, &map, &params, TranspileOptions::default()).unwrap();
            assert_eq!(twice.circuit, once.circuit);
        }
    }
}

#[test]
fn decisions_stable_under_rate_scaling() {
    let stable = [
        Rates { e01: Some(0.03), e10: Some(0.005), u2: 0.0004 },
        Rates { e01: Some(0.006), e10: Some(0.02), u2: 0.001 },
        Rates { e01: Some(0.00862), e10: Some(0.00862), u2: 0.00042 },
    ];
    for rates in stable {
        let reference: Vec<Vec<Realization>> = cnot_words()
            .iter()
            .map(|c| {
                orient_for_error(c, &rates.map(), &rates.params(), TranspileOptions::default())
                    .unwrap()
                    .decisions
                    .iter()
                    .map(|d| d.realization)
                    .collect()
            })
            .collect();
        for lambda in [0.5, 1.0, 2.0] {
            let r = rates.scaled(lambda);
            for (c, want) in cnot_words().iter().zip(&reference) {
                let got: Vec<Realization> = orient_for_error(c, &r.map(), &r.params(), TranspileOptions::default())
                    .unwrap()
                    .decisions
                    .iter()
                    .map(|d| d.realization)
                    .collect();
                assert_eq!(&got, want, "lambda {lambda}");
            }
        }
    }
}
