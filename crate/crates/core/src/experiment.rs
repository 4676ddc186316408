//! The orientation-asymmetry protocol.
//!
//! For a coupled pair `(a, b)` both orientations `a→b` and `b→a` run n-stage
//! circuits for `n = 1..=max_stages`. Every repetition draws its own shots
//! from a seed derived from `(seed, control, target, n, repetition)`, counts
//! are summed over repetitions, and `g = G / T` is the ground fraction.
//! `f(n) = |g_ab(n) − g_ba(n)|`, and the pair is asymmetric when any `f(n)`
//! reaches the threshold.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{build_n_stage, CircuitError};
use crate::noise::NoiseModel;
use crate::sim::{derive_seed, sample_distribution, simulate_exact, Counts, SimError};
use crate::transpiler::{enforce_direction_with, CouplingMap, DirectionPolicy, TranspileError, TranspileOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("invalid config `{field}`: {message}")]
    InvalidConfig { field: &'static str, message: String },
    #[error("counts have zero total")]
    ZeroTotal,
    #[error("no asymmetry values to classify")]
    EmptyAsymmetry,
    #[error("relative change from a zero baseline is undefined")]
    ZeroBaseline,
    #[error("qubits {0} and {1} are not a coupled pair in the noise model")]
    NotAPair(usize, usize),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Transpile(#[from] TranspileError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub max_stages: usize,
    pub repetitions: usize,
    pub shots_per_rep: u64,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            max_stages: 6,
            repetitions: 3,
            shots_per_rep: 4096,
            threshold: 0.02,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |field, message: &str| {
            Err(ExperimentError::InvalidConfig {
                field,
                message: message.to_string(),
            })
        };
        if self.max_stages == 0 {
            return bad("max_stages", "must be at least 1");
        }
        if self.repetitions == 0 {
            return bad("repetitions", "must be at least 1");
        }
        if self.shots_per_rep == 0 {
            return bad("shots_per_rep", "must be at least 1");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold", "must lie strictly between 0 and 1");
        }
        Ok(())
    }

    /// Shots per (orientation, n) cell after aggregation.
    pub fn total_shots(&self) -> u64 {
        self.repetitions as u64 * self.shots_per_rep
    }
}

/// Fraction of shots that read all zeros.
pub fn ground_fraction(counts: &Counts) -> Result<f64, ExperimentError> {
    if counts.total() == 0 {
        return Err(ExperimentError::ZeroTotal);
    }
    Ok(counts.ground_count() as f64 / counts.total() as f64)
}

pub fn asymmetry(g01: f64, g10: f64) -> f64 {
    (g01 - g10).abs()
}

/// `|G1/T1 − G2/T2|` evaluated on the integer cross products, so the result is
/// the correctly rounded value of the exact rational.
pub fn asymmetry_from_counts(g1: u64, t1: u64, g2: u64, t2: u64) -> Result<f64, ExperimentError> {
    if t1 == 0 || t2 == 0 {
        return Err(ExperimentError::ZeroTotal);
    }
    let num = (g1 as i128 * t2 as i128 - g2 as i128 * t1 as i128).unsigned_abs();
    let den = t1 as u128 * t2 as u128;
    Ok(ratio_to_f64(num, den))
}

fn ratio_to_f64(num: u128, den: u128) -> f64 {
    // both fit in 2^53 for any realistic shot count, making the division exact-rounded
    if num < (1 << 53) && den < (1 << 53) {
        num as f64 / den as f64
    } else {
        let g = gcd(num, den);
        (num / g) as f64 / (den / g) as f64
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

/// True when any value reaches `threshold` (inclusive).
pub fn classify(f_by_n: &BTreeMap<usize, f64>, threshold: f64) -> Result<bool, ExperimentError> {
    if f_by_n.is_empty() {
        return Err(ExperimentError::EmptyAsymmetry);
    }
    Ok(f_by_n.values().any(|&f| f >= threshold))
}

pub fn relative_change(before: f64, after: f64) -> Result<f64, ExperimentError> {
    if before == 0.0 {
        return Err(ExperimentError::ZeroBaseline);
    }
    Ok((after - before) / before)
}

/// Aggregated outcome of one (orientation, n) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub n: usize,
    pub ground_count: u64,
    pub total: u64,
    pub g: f64,
    /// Sampling-free probability of reading `00`.
    pub exact_p00: f64,
    pub counts: Counts,
    /// Sampling-free outcome distribution, indexed by the little-endian
    /// bitstring value.
    pub exact_distribution: Vec<f64>,
}

impl StageResult {
    pub fn from_counts(n: usize, counts: Counts, exact_distribution: Vec<f64>) -> Result<Self, ExperimentError> {
        let g = ground_fraction(&counts)?;
        Ok(Self {
            n,
            ground_count: counts.ground_count(),
            total: counts.total(),
            g,
            exact_p00: exact_distribution.first().copied().unwrap_or(0.0),
            counts,
            exact_distribution,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientationResult {
    pub control: usize,
    pub target: usize,
    pub per_n: Vec<StageResult>,
}

impl OrientationResult {
    pub fn stage(&self, n: usize) -> Option<&StageResult> {
        self.per_n.iter().find(|s| s.n == n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymmetryReport {
    pub pair: (usize, usize),
    pub config: ExperimentConfig,
    /// `pair.0 → pair.1` first, then the reverse.
    pub orientations: [OrientationResult; 2],
    pub f: BTreeMap<usize, f64>,
    pub f_exact: BTreeMap<usize, f64>,
    pub classified_asymmetric: bool,
    pub classified_exact: bool,
    pub max_f: f64,
    pub argmax_n: usize,
    pub max_f_exact: f64,
    pub argmax_n_exact: usize,
}

fn argmax(f: &BTreeMap<usize, f64>) -> (usize, f64) {
    f.iter().fold((0, f64::NEG_INFINITY), |best, (&n, &v)| {
        if v > best.1 {
            (n, v)
        } else {
            best
        }
    })
}

impl AsymmetryReport {
    /// Derives `f`, the classification and the maxima from two orientations
    /// that cover the same stage counts.
    pub fn from_orientations(
        pair: (usize, usize),
        config: ExperimentConfig,
        forward: OrientationResult,
        reverse: OrientationResult,
    ) -> Result<Self, ExperimentError> {
        let mut f = BTreeMap::new();
        let mut f_exact = BTreeMap::new();
        for a in &forward.per_n {
            let b = reverse.stage(a.n).ok_or(ExperimentError::InvalidConfig {
                field: "max_stages",
                message: format!("orientations disagree on stage {}", a.n),
            })?;
            f.insert(a.n, asymmetry_from_counts(a.ground_count, a.total, b.ground_count, b.total)?);
            f_exact.insert(a.n, asymmetry(a.exact_p00, b.exact_p00));
        }
        Self::assemble(pair, config, [forward, reverse], f, f_exact)
    }

    pub(crate) fn assemble(
        pair: (usize, usize),
        config: ExperimentConfig,
        orientations: [OrientationResult; 2],
        f: BTreeMap<usize, f64>,
        f_exact: BTreeMap<usize, f64>,
    ) -> Result<Self, ExperimentError> {
        let classified_asymmetric = classify(&f, config.threshold)?;
        let classified_exact = classify(&f_exact, config.threshold)?;
        let (argmax_n, max_f) = argmax(&f);
        let (argmax_n_exact, max_f_exact) = argmax(&f_exact);
        Ok(Self {
            pair,
            config,
            orientations,
            f,
            f_exact,
            classified_asymmetric,
            classified_exact,
            max_f,
            argmax_n,
            max_f_exact,
            argmax_n_exact,
        })
    }

    pub fn forward(&self) -> &OrientationResult {
        &self.orientations[0]
    }

    pub fn reverse(&self) -> &OrientationResult {
        &self.orientations[1]
    }

    pub fn verdict(&self) -> &'static str {
        if self.classified_asymmetric {
            "asymmetric"
        } else {
            "symmetric"
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One CSV record per orientation and stage.
    pub fn rows(&self) -> Vec<ResultRow> {
        let pair = format!("{}-{}", self.pair.0, self.pair.1);
        self.orientations
            .iter()
            .flat_map(|o| {
                let pair = pair.clone();
                o.per_n.iter().map(move |s| ResultRow {
                    pair: pair.clone(),
                    control: o.control,
                    target: o.target,
                    n: s.n,
                    shots: s.total,
                    ground_count: s.ground_count,
                    g: s.g,
                    exact_p00: s.exact_p00,
                })
            })
            .collect()
    }
}

/// Column layout of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub pair: String,
    pub control: usize,
    pub target: usize,
    pub n: usize,
    pub shots: u64,
    pub ground_count: u64,
    pub g: f64,
    pub exact_p00: f64,
}

fn check_pair(noise: &NoiseModel, control: usize, target: usize) -> Result<(), ExperimentError> {
    let coupled = control != target
        && control < noise.num_qubits()
        && target < noise.num_qubits()
        && (noise.physical_control(control, target).is_some()
            || noise.edge(control, target).is_some()
            || noise.edge(target, control).is_some());
    if coupled {
        Ok(())
    } else {
        Err(ExperimentError::NotAPair(control, target))
    }
}

fn run_stage(
    control: usize,
    target: usize,
    n: usize,
    noise: &NoiseModel,
    map: &CouplingMap,
    config: &ExperimentConfig,
) -> Result<StageResult, ExperimentError> {
    // A characterized direction is executed as-is: its parameters describe
    // the compiled realization, including the hardware's own reversal.
    let lowered = enforce_direction_with(
        &build_n_stage(control, target, n)?,
        map,
        noise.qubits(),
        DirectionPolicy::Characterized,
        TranspileOptions::default(),
    )?
    .circuit;
    let exact = simulate_exact(&lowered, noise)?;
    let mut counts = Counts::new(lowered.num_clbits());
    for rep in 0..config.repetitions {
        let seed = derive_seed(config.seed, &[control as u64, target as u64, n as u64, rep as u64]);
        let sample = sample_distribution(&exact.observed, config.shots_per_rep, seed, lowered.num_clbits());
        counts.merge(&sample)?;
    }
    StageResult::from_counts(n, counts, exact.observed)
}

pub fn run_orientation(
    control: usize,
    target: usize,
    noise: &NoiseModel,
    config: &ExperimentConfig,
) -> Result<OrientationResult, ExperimentError> {
    config.validate()?;
    check_pair(noise, control, target)?;
    let map = CouplingMap::from_noise_model(noise);
    let per_n = (1..=config.max_stages)
        .into_par_iter()
        .map(|n| run_stage(control, target, n, noise, &map, config))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(OrientationResult {
        control,
        target,
        per_n,
    })
}

/// Runs both orientations of `pair` and derives the asymmetry report.
pub fn run_asymmetry_experiment(
    pair: (usize, usize),
    noise: &NoiseModel,
    config: &ExperimentConfig,
) -> Result<AsymmetryReport, ExperimentError> {
    let (a, b) = pair;
    let (forward, reverse) = rayon::join(
        || run_orientation(a, b, noise, config),
        || run_orientation(b, a, noise, config),
    );
    AsymmetryReport::from_orientations(pair, *config, forward?, reverse?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{synth_asymmetric_model, EdgeDurations};
    use approx::assert_abs_diff_eq;

    fn counts(pairs: &[(&str, u64)]) -> Counts {
        Counts::from_pairs(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn ground_fraction_examples() {
        assert_eq!(ground_fraction(&counts(&[("00", 12288)])).unwrap(), 1.0);
        let mixed = counts(&[("00", 11288), ("01", 500), ("10", 300), ("11", 200)]);
        assert_eq!(ground_fraction(&mixed).unwrap(), 11288.0 / 12288.0);
        assert_abs_diff_eq!(ground_fraction(&mixed).unwrap(), 0.91862, epsilon = 5e-6);
        assert_eq!(ground_fraction(&counts(&[("01", 12288)])).unwrap(), 0.0);
        assert_eq!(ground_fraction(&Counts::new(2)), Err(ExperimentError::ZeroTotal));
    }

    #[test]
    fn asymmetry_and_relative_change() {
        assert_eq!(asymmetry(0.95, 0.95), 0.0);
        assert_abs_diff_eq!(asymmetry(0.9, 0.9555), 0.0555, epsilon = 1e-12);
        assert_abs_diff_eq!(relative_change(0.0555, 0.0618).unwrap(), 0.113_513_5, epsilon = 1e-6);
        assert_eq!(relative_change(0.3, 0.3).unwrap(), 0.0);
        assert_eq!(relative_change(0.02, 0.01).unwrap(), -0.5);
        assert_eq!(relative_change(0.0, 0.1), Err(ExperimentError::ZeroBaseline));
    }

    #[test]
    fn classification_is_inclusive() {
        let rising: BTreeMap<usize, f64> =
            [(1, 0.005), (2, 0.008), (3, 0.01), (4, 0.013), (5, 0.017), (6, 0.021)].into();
        assert!(classify(&rising, 0.02).unwrap());
        let flat: BTreeMap<usize, f64> = (1..=6).map(|n| (n, 0.019)).collect();
        assert!(!classify(&flat, 0.02).unwrap());
        assert!(classify(&[(1, 0.02)].into(), 0.02).unwrap());
        assert_eq!(classify(&BTreeMap::new(), 0.02), Err(ExperimentError::EmptyAsymmetry));
    }

    #[test]
    fn count_asymmetry_matches_rational() {
        let f = asymmetry_from_counts(11288, 12288, 11000, 12288).unwrap();
        assert_eq!(f, 288.0 / 12288.0);
        assert_eq!(asymmetry_from_counts(1, 3, 1, 3).unwrap(), 0.0);
        assert_eq!(asymmetry_from_counts(1, 0, 1, 3), Err(ExperimentError::ZeroTotal));
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        assert_eq!(ExperimentConfig::default().total_shots(), 12288);
        for bad in [
            ExperimentConfig { max_stages: 0, ..Default::default() },
            ExperimentConfig { repetitions: 0, ..Default::default() },
            ExperimentConfig { shots_per_rep: 0, ..Default::default() },
            ExperimentConfig { threshold: 0.0, ..Default::default() },
            ExperimentConfig { threshold: 1.0, ..Default::default() },
            ExperimentConfig { threshold: f64::NAN, ..Default::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn noiseless_orientation_is_perfect() {
        let cfg = ExperimentConfig::default().with_seed(5);
        let r = run_orientation(1, 0, &NoiseModel::noiseless(2), &cfg).unwrap();
        assert_eq!(r.per_n.len(), 6);
        for s in &r.per_n {
            assert_eq!(s.g, 1.0);
            assert_eq!(s.total, 12288);
            assert_eq!(s.ground_count, 12288);
        }
    }

    #[test]
    fn lossier_orientation_decays_faster() {
        let model = synth_asymmetric_model(0.01, 2.0, EdgeDurations::default()).unwrap();
        let cfg = ExperimentConfig::default();
        let fwd = run_orientation(0, 1, &model, &cfg).unwrap();
        let rev = run_orientation(1, 0, &model, &cfg).unwrap();
        for w in fwd.per_n.windows(2).chain(rev.per_n.windows(2)) {
            assert!(w[1].exact_p00 < w[0].exact_p00);
        }
        for (a, b) in fwd.per_n.iter().zip(&rev.per_n) {
            assert!(b.exact_p00 < a.exact_p00);
        }
    }

    #[test]
    fn report_invariants() {
        let model = synth_asymmetric_model(0.01, 2.0, EdgeDurations::default()).unwrap();
        let cfg = ExperimentConfig::default().with_seed(11);
        let report = run_asymmetry_experiment((0, 1), &model, &cfg).unwrap();
        for (&n, &f) in &report.f {
            let (a, b) = (report.forward().stage(n).unwrap(), report.reverse().stage(n).unwrap());
            let num = (a.ground_count as i128 * b.total as i128 - b.ground_count as i128 * a.total as i128).abs();
            assert_eq!(f, num as f64 / (a.total as f64 * b.total as f64));
        }
        assert!(report.classified_exact);
        assert_eq!(report.argmax_n_exact, 6);

        let swapped = run_asymmetry_experiment((1, 0), &model, &cfg).unwrap();
        assert_eq!(swapped.f, report.f);
        assert_eq!(swapped.classified_asymmetric, report.classified_asymmetric);

        let again = run_asymmetry_experiment((0, 1), &model, &cfg).unwrap();
        assert_eq!(again.to_json(), report.to_json());
        let back: AsymmetryReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn symmetric_model_has_zero_exact_asymmetry() {
        let model = synth_asymmetric_model(0.01, 1.0, EdgeDurations::symmetric(348.0)).unwrap();
        let report = run_asymmetry_experiment((0, 1), &model, &ExperimentConfig::default()).unwrap();
        assert!(report.f_exact.values().all(|&f| f < 1e-12));
        assert!(!report.classified_exact);
    }

    #[test]
    fn unknown_pair_rejected() {
        let model = NoiseModel::noiseless(2);
        assert_eq!(
            run_orientation(0, 2, &model, &ExperimentConfig::default()),
            Err(ExperimentError::NotAPair(0, 2))
        );
    }
}
