//! Sandwich synchronization sequences.
//!
//! Layout: `[random flank | 1,0,1,0,...,1,0 | random flank]`, flanks of equal
//! length, flank symbols i.i.d. equiprobable. The middle length is the even
//! integer nearest `alpha * L` (ties toward the smaller even value), which
//! needs `L` even for the flanks to come out equal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, RNG_NAME};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    /// Length in symbols.
    pub length: usize,
    /// Requested fraction of the alternating middle part.
    pub alpha_nominal: f64,
    pub seed: u64,
}

impl SequenceSpec {
    pub fn new(length: usize, alpha_nominal: f64, seed: u64) -> Self {
        SequenceSpec {
            length,
            alpha_nominal,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.length < 4 {
            return Err(Error::InvalidSequence(format!(
                "length {} < 4",
                self.length
            )));
        }
        if !self.length.is_multiple_of(2) {
            return Err(Error::InvalidSequence(format!(
                "length {} is odd; flanks must be equal",
                self.length
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha_nominal) {
            return Err(Error::InvalidSequence(format!(
                "alpha {} outside [0, 1]",
                self.alpha_nominal
            )));
        }
        Ok(())
    }
}

/// Even integer nearest to `x >= 0`; exact odd integers round down.
fn nearest_even(x: f64) -> usize {
    let lower = 2.0 * (x / 2.0).floor();
    let upper = lower + 2.0;
    if x - lower <= upper - x {
        lower as usize
    } else {
        upper as usize
    }
}

/// Length of the alternating part for `alpha` on a sequence of even `length`.
pub fn middle_length(length: usize, alpha: f64) -> usize {
    nearest_even(alpha * length as f64).min(length)
}

/// `alpha` actually realised on a sequence of even `length`.
pub fn alpha_effective(length: usize, alpha: f64) -> f64 {
    middle_length(length, alpha) as f64 / length as f64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncSequence {
    symbols: Vec<u8>,
    middle_start: usize,
    middle_end: usize,
}

impl SyncSequence {
    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// First index of the alternating part.
    pub fn middle_start(&self) -> usize {
        self.middle_start
    }

    /// One past the last index of the alternating part.
    pub fn middle_end(&self) -> usize {
        self.middle_end
    }

    pub fn middle_len(&self) -> usize {
        self.middle_end - self.middle_start
    }

    pub fn alpha_effective(&self) -> f64 {
        self.middle_len() as f64 / self.len() as f64
    }

    pub fn ones(&self) -> usize {
        self.symbols.iter().filter(|&&s| s == 1).count()
    }

    /// Single-line `0`/`1` text form.
    pub fn to_text(&self) -> String {
        self.symbols
            .iter()
            .map(|&s| if s == 1 { '1' } else { '0' })
            .collect()
    }

    /// Wraps explicit symbols, for tests and hand-built frames. The middle
    /// part is recorded as empty.
    pub fn from_symbols(symbols: Vec<u8>) -> Result<Self> {
        if symbols.iter().any(|&s| s > 1) {
            return Err(Error::InvalidSequence("symbols must be 0 or 1".into()));
        }
        if symbols.is_empty() {
            return Err(Error::InvalidSequence("empty sequence".into()));
        }
        let half = symbols.len() / 2;
        Ok(SyncSequence {
            symbols,
            middle_start: half,
            middle_end: half,
        })
    }
}

/// Builds the sandwich sequence described by `spec`.
pub fn build_sandwich(spec: &SequenceSpec) -> Result<SyncSequence> {
    spec.validate()?;
    let len = spec.length;
    let middle = middle_length(len, spec.alpha_nominal);
    let flank = (len - middle) / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut symbols = Vec::with_capacity(len);
    for _ in 0..flank {
        symbols.push(rng.random_range(0..2u8));
    }
    for j in 0..middle {
        symbols.push(if j % 2 == 0 { 1 } else { 0 });
    }
    for _ in 0..flank {
        symbols.push(rng.random_range(0..2u8));
    }
    Ok(SyncSequence {
        symbols,
        middle_start: flank,
        middle_end: flank + middle,
    })
}

/// `2 s_i - 1` for every symbol.
pub fn bipolar(seq: &SyncSequence) -> Vec<i64> {
    seq.symbols.iter().map(|&s| 2 * s as i64 - 1).collect()
}

/// JSON sidecar written next to the text form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceMetadata {
    #[serde(rename = "L")]
    pub length: usize,
    pub alpha_nominal: f64,
    pub alpha_effective: f64,
    pub middle_start: usize,
    pub middle_end: usize,
    pub seed: u64,
    pub rng_name: String,
}

impl SequenceMetadata {
    pub fn new(spec: &SequenceSpec, seq: &SyncSequence) -> Self {
        SequenceMetadata {
            length: seq.len(),
            alpha_nominal: spec.alpha_nominal,
            alpha_effective: seq.alpha_effective(),
            middle_start: seq.middle_start,
            middle_end: seq.middle_end,
            seed: spec.seed,
            rng_name: RNG_NAME.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn l8_half() {
        let s = build_sandwich(&SequenceSpec::new(8, 0.5, 42)).unwrap();
        assert_eq!(&s.symbols()[2..6], &[1, 0, 1, 0]);
        assert_eq!(s.middle_start(), 2);
        assert_eq!(s.middle_end(), 6);
        assert_eq!(s.alpha_effective(), 0.5);
    }

    #[test]
    fn all_alternating() {
        let s = build_sandwich(&SequenceSpec::new(4, 1.0, 7)).unwrap();
        assert_eq!(s.symbols(), &[1, 0, 1, 0]);
        assert_eq!(s.alpha_effective(), 1.0);
    }

    #[test]
    fn l128_rounding() {
        // 0.707 * 128 = 90.496 -> 90
        let s = build_sandwich(&SequenceSpec::new(128, 0.707, 1)).unwrap();
        assert_eq!(s.middle_len(), 90);
        assert_eq!(s.alpha_effective(), 0.703125);
        assert_eq!(s.middle_start(), 19);
    }

    #[test]
    fn odd_tie_rounds_down() {
        // 0.5 * 10 = 5 exactly -> 4
        assert_eq!(middle_length(10, 0.5), 4);
        // 0.7 * 10 rounds to exactly 7.0, another tie
        assert_eq!(middle_length(10, 0.7), 6);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(build_sandwich(&SequenceSpec::new(2, 0.5, 0)).is_err());
        assert!(build_sandwich(&SequenceSpec::new(9, 0.5, 0)).is_err());
        assert!(build_sandwich(&SequenceSpec::new(8, 1.5, 0)).is_err());
        assert!(build_sandwich(&SequenceSpec::new(8, -0.1, 0)).is_err());
        assert!(build_sandwich(&SequenceSpec::new(8, f64::NAN, 0)).is_err());
    }

    #[test]
    fn bipolar_map() {
        let s = SyncSequence::from_symbols(vec![1, 0, 1, 0]).unwrap();
        assert_eq!(bipolar(&s), vec![1, -1, 1, -1]);
        let s = SyncSequence::from_symbols(vec![0, 0, 0, 0]).unwrap();
        assert_eq!(bipolar(&s), vec![-1, -1, -1, -1]);
        let s = SyncSequence::from_symbols(vec![0, 1, 1, 0]).unwrap();
        assert_eq!(bipolar(&s), vec![-1, 1, 1, -1]);
    }

    #[test]
    fn text_form() {
        let s = build_sandwich(&SequenceSpec::new(128, 0.707, 3)).unwrap();
        let t = s.to_text();
        assert_eq!(t.len(), 128);
        assert!(t.chars().all(|c| c == '0' || c == '1'));
    }

    proptest! {
        #[test]
        fn structure(half in 2usize..300, alpha in 0.0f64..=1.0, seed in any::<u64>()) {
            let len = 2 * half;
            let spec = SequenceSpec::new(len, alpha, seed);
            let s = build_sandwich(&spec).unwrap();
            prop_assert_eq!(s.len(), len);
            let mid = &s.symbols()[s.middle_start()..s.middle_end()];
            prop_assert_eq!(mid.len() % 2, 0);
            for (j, &v) in mid.iter().enumerate() {
                prop_assert_eq!(v, if j % 2 == 0 { 1 } else { 0 });
            }
            prop_assert_eq!(s.middle_start(), len - s.middle_end());
            let ones = mid.iter().filter(|&&v| v == 1).count();
            prop_assert_eq!(2 * ones, mid.len());
            prop_assert!((s.alpha_effective() - alpha).abs() <= 1.0 / len as f64 + 1e-12);
            prop_assert_eq!(build_sandwich(&spec).unwrap(), s);
        }

        #[test]
        fn alpha_effective_monotone(half in 2usize..300, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let len = 2 * half;
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(alpha_effective(len, lo) <= alpha_effective(len, hi));
        }
    }
}
