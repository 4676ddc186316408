use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::{DensityState, SimError};

/// Per-qubit readout confusion: `p01 = P(read 1 | prepared 0)`,
/// `p10 = P(read 0 | prepared 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReadoutError {
    pub p01: f64,
    pub p10: f64,
}

impl ReadoutError {
    pub const PERFECT: ReadoutError = ReadoutError { p01: 0.0, p10: 0.0 };

    pub fn new(p01: f64, p10: f64) -> Result<Self, SimError> {
        let r = Self { p01, p10 };
        r.check()?;
        Ok(r)
    }

    pub fn symmetric(p: f64) -> Result<Self, SimError> {
        Self::new(p, p)
    }

    fn check(&self) -> Result<(), SimError> {
        for p in [self.p01, self.p10] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::InvalidReadout(p));
            }
        }
        Ok(())
    }

    /// `P(read | true)` for single bits.
    pub fn transition(&self, read: bool, truth: bool) -> f64 {
        match (truth, read) {
            (false, false) => 1.0 - self.p01,
            (false, true) => self.p01,
            (true, false) => self.p10,
            (true, true) => 1.0 - self.p10,
        }
    }
}

/// Formats outcome `index` as a `width`-character bitstring, bit 0 rightmost.
pub fn bitstring(index: usize, width: usize) -> String {
    (0..width)
        .rev()
        .map(|b| if index >> b & 1 == 1 { '1' } else { '0' })
        .collect()
}

/// Parses a bitstring produced by [`bitstring`].
pub fn parse_bitstring(s: &str) -> Option<usize> {
    if s.is_empty() || s.len() > usize::BITS as usize {
        return None;
    }
    s.chars().try_fold(0usize, |acc, ch| match ch {
        '0' => Some(acc << 1),
        '1' => Some(acc << 1 | 1),
        _ => None,
    })
}

/// Measurement histogram keyed by little-endian bitstrings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    width: usize,
    counts: BTreeMap<String, u64>,
    total: u64,
}

impl Counts {
    pub fn new(width: usize) -> Self {
        Self {
            width,
            counts: BTreeMap::new(),
            total: 0,
        }
    }

    /// Builds counts from `(bitstring, count)` pairs; all keys must share a width.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, u64)>) -> Result<Self, SimError> {
        let mut width = None;
        let mut out = Counts::new(0);
        for (key, n) in pairs {
            if parse_bitstring(key).is_none() {
                return Err(SimError::InvalidCounts(format!("`{key}` is not a bitstring")));
            }
            match width {
                None => width = Some(key.len()),
                Some(w) if w != key.len() => {
                    return Err(SimError::InvalidCounts(format!(
                        "bitstring `{key}` does not have width {w}"
                    )))
                }
                _ => {}
            }
            out.width = key.len();
            out.add(key, n);
        }
        Ok(out)
    }

    fn add(&mut self, key: &str, n: u64) {
        if n == 0 {
            return;
        }
        *self.counts.entry(key.to_string()).or_insert(0) += n;
        self.total += n;
    }

    pub fn add_index(&mut self, index: usize, n: u64) {
        let key = bitstring(index, self.width);
        self.add(&key, n);
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn get(&self, key: &str) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Shots observed in the all-zeros outcome.
    pub fn ground_count(&self) -> u64 {
        self.get(&"0".repeat(self.width))
    }

    /// Counts as a dense vector indexed by outcome.
    pub fn to_dense(&self) -> Vec<u64> {
        let mut v = vec![0; 1 << self.width];
        for (k, n) in &self.counts {
            if let Some(i) = parse_bitstring(k) {
                v[i] += n;
            }
        }
        v
    }

    /// Sums two histograms of equal width.
    pub fn merge(&mut self, other: &Counts) -> Result<(), SimError> {
        if other.total > 0 && self.total > 0 && other.width != self.width {
            return Err(SimError::InvalidCounts(format!(
                "cannot merge widths {} and {}",
                self.width, other.width
            )));
        }
        if self.total == 0 {
            self.width = other.width;
        }
        for (k, n) in &other.counts {
            self.add(k, *n);
        }
        Ok(())
    }
}

/// Pushes an ideal outcome distribution through independent per-bit readout errors.
/// Bit `j` of an outcome index is read through `readout[j]`.
pub fn apply_readout(distribution: &[f64], readout: &[ReadoutError]) -> Vec<f64> {
    let width = readout.len();
    assert_eq!(distribution.len(), 1 << width, "distribution width mismatch");
    let mut out = distribution.to_vec();
    // bitwise stochastic maps commute, apply them one bit at a time
    for (bit, r) in readout.iter().enumerate() {
        let mut next = vec![0.0; out.len()];
        for (i, p) in out.iter().enumerate() {
            let truth = i >> bit & 1 == 1;
            let i0 = i & !(1 << bit);
            next[i0] += p * r.transition(false, truth);
            next[i0 | 1 << bit] += p * r.transition(true, truth);
        }
        out = next;
    }
    out
}

/// Draws `shots` outcomes from `probabilities` with a seeded multinomial.
pub fn sample_distribution(probabilities: &[f64], shots: u64, seed: u64, width: usize) -> Counts {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clean: Vec<f64> = probabilities.iter().map(|p| p.max(0.0)).collect();
    let mut remaining_mass: f64 = clean.iter().sum();
    let mut remaining = shots;
    let mut counts = Counts::new(width);
    for (i, &p) in clean.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        let is_last = clean[i + 1..].iter().all(|&q| q == 0.0);
        let n = if is_last {
            remaining
        } else if p <= 0.0 || remaining_mass <= 0.0 {
            0
        } else {
            let q = (p / remaining_mass).clamp(0.0, 1.0);
            Binomial::new(remaining, q)
                .expect("binomial parameters are in range")
                .sample(&mut rng)
        };
        counts.add_index(i, n);
        remaining -= n;
        remaining_mass -= p;
    }
    counts
}

/// Samples measurement outcomes of `measured` qubits from `state`, with each
/// read bit flipped independently according to `readout` (one entry per
/// measured qubit). Deterministic for a given seed.
pub fn sample_counts(
    state: &DensityState,
    measured: &[usize],
    shots: u64,
    readout: &[ReadoutError],
    seed: u64,
) -> Result<Counts, SimError> {
    if measured.is_empty() {
        return Err(SimError::NothingMeasured);
    }
    if shots == 0 {
        return Err(SimError::ZeroShots);
    }
    if readout.len() != measured.len() {
        return Err(SimError::ArityMismatch {
            expected: measured.len(),
            got: readout.len(),
        });
    }
    for r in readout {
        r.check()?;
    }
    for &q in measured {
        if q >= state.num_qubits() {
            return Err(SimError::QubitOutOfRange {
                qubit: q,
                num_qubits: state.num_qubits(),
            });
        }
    }
    let ideal = state.marginal_probabilities(measured);
    let observed = apply_readout(&ideal, readout);
    Ok(sample_distribution(&observed, shots, seed, measured.len()))
}

/// Mixes values into a seed with the SplitMix64 finalizer. The result only
/// depends on the inputs and their order, never on scheduling.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bitstrings_are_little_endian() {
        assert_eq!(bitstring(1, 2), "01");
        assert_eq!(bitstring(2, 2), "10");
        assert_eq!(bitstring(5, 3), "101");
        assert_eq!(parse_bitstring("10"), Some(2));
        assert_eq!(parse_bitstring("1x"), None);
        assert_eq!(parse_bitstring(""), None);
    }

    #[test]
    fn perfect_readout_ground_state() {
        let s = DensityState::ground(2).unwrap();
        let c = sample_counts(&s, &[0, 1], 4096, &[ReadoutError::PERFECT; 2], 1).unwrap();
        assert_eq!(c.get("00"), 4096);
        assert_eq!(c.total(), 4096);
        assert_eq!(c.iter().count(), 1);
    }

    #[test]
    fn seeded_sampling_is_deterministic() {
        let s = DensityState::ground(2)
            .unwrap()
            .apply_gate(&crate::circuit::Gate::H(0))
            .unwrap();
        let r = [ReadoutError::new(0.02, 0.03).unwrap(); 2];
        let a = sample_counts(&s, &[0, 1], 4096, &r, 7).unwrap();
        let b = sample_counts(&s, &[0, 1], 4096, &r, 7).unwrap();
        assert_eq!(a, b);
        let c = sample_counts(&s, &[0, 1], 4096, &r, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn readout_flips_within_binomial_band() {
        let shots = 12288u64;
        let p = 0.025;
        let expected = shots as f64 * (1.0 - p) * (1.0 - p);
        assert_abs_diff_eq!(expected, 11681.0, epsilon = 1.0);
        let q = expected / shots as f64;
        let sigma = (shots as f64 * q * (1.0 - q)).sqrt();
        let s = DensityState::ground(2).unwrap();
        for seed in 0..20 {
            let c = sample_counts(&s, &[0, 1], shots, &[ReadoutError::new(p, 0.0).unwrap(); 2], seed)
                .unwrap();
            let got = c.get("00") as f64;
            assert!((got - expected).abs() < 4.0 * sigma, "seed {seed}: {got}");
        }
    }

    #[test]
    fn sampling_rejects_bad_arguments() {
        let s = DensityState::ground(2).unwrap();
        assert!(matches!(
            sample_counts(&s, &[], 10, &[], 0),
            Err(SimError::NothingMeasured)
        ));
        assert!(sample_counts(&s, &[0], 0, &[ReadoutError::PERFECT], 0).is_err());
        assert!(sample_counts(&s, &[0], 10, &[ReadoutError { p01: 1.5, p10: 0.0 }], 0).is_err());
        assert!(sample_counts(&s, &[2], 10, &[ReadoutError::PERFECT], 0).is_err());
    }

    #[test]
    fn readout_map_closed_form() {
        let r = [ReadoutError::new(0.025, 0.01).unwrap(), ReadoutError::new(0.035, 0.02).unwrap()];
        let out = apply_readout(&[1.0, 0.0, 0.0, 0.0], &r);
        assert_abs_diff_eq!(out[0], 0.975 * 0.965, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1], 0.025 * 0.965, epsilon = 1e-15);
        assert_abs_diff_eq!(out[2], 0.975 * 0.035, epsilon = 1e-15);
        assert_abs_diff_eq!(out.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn counts_bookkeeping() {
        let mut c = Counts::from_pairs([("00", 11288), ("01", 500), ("10", 300), ("11", 200)]).unwrap();
        assert_eq!(c.total(), 12288);
        assert_eq!(c.ground_count(), 11288);
        assert_eq!(c.to_dense(), vec![11288, 500, 300, 200]);
        let other = Counts::from_pairs([("01", 12)]).unwrap();
        c.merge(&other).unwrap();
        assert_eq!(c.get("01"), 512);
        assert!(Counts::from_pairs([("00", 1), ("1", 1)]).is_err());
        assert!(c.merge(&Counts::from_pairs([("1", 1)]).unwrap()).is_err());
    }

    #[test]
    fn derived_seeds_differ_per_cell() {
        let a = derive_seed(7, &[0, 1, 3, 0]);
        assert_eq!(a, derive_seed(7, &[0, 1, 3, 0]));
        assert_ne!(a, derive_seed(7, &[1, 0, 3, 0]));
        assert_ne!(a, derive_seed(7, &[0, 1, 3, 1]));
        assert_ne!(a, derive_seed(8, &[0, 1, 3, 0]));
    }
}
