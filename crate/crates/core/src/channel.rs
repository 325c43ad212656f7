//! Discrete-time Poisson channel at chip resolution.
//!
//! Time is measured in symbol durations (`T_s = 1`), chips last `1/n`. The
//! received buffer holds `guard` zero symbols, the sequence, and another
//! `guard` zero symbols. The transmitted waveform is shifted by the systematic
//! offset ε relative to the chip grid: symbol `i` of the sequence occupies
//! `[guard + i + ε, guard + i + 1 + ε)`. Background light (rate `λ_b` per
//! symbol) is present everywhere in the buffer, signal light (rate `λ_s` per
//! symbol) only while a `1` is on air.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::sequence::SyncSequence;
use crate::{Error, Result};

/// Default zero-symbol padding on each side of the sequence.
pub const DEFAULT_GUARD: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Mean signal photoelectrons per symbol.
    pub lambda_s: f64,
    /// Mean background photoelectrons per symbol.
    pub lambda_b: f64,
    /// Chips per symbol.
    pub chips_per_symbol: usize,
    pub guard_symbols: usize,
}

impl ChannelParams {
    pub fn new(lambda_s: f64, lambda_b: f64, chips_per_symbol: usize) -> Self {
        ChannelParams {
            lambda_s,
            lambda_b,
            chips_per_symbol,
            guard_symbols: DEFAULT_GUARD,
        }
    }

    pub fn with_guard(mut self, guard_symbols: usize) -> Self {
        self.guard_symbols = guard_symbols;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.chips_per_symbol < 2 {
            return Err(Error::InvalidChannel(format!(
                "chips per symbol {} < 2",
                self.chips_per_symbol
            )));
        }
        for (name, v) in [("lambda_s", self.lambda_s), ("lambda_b", self.lambda_b)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidChannel(format!("{name}={v} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// Chip duration in symbol units.
    pub fn chip_duration(&self) -> f64 {
        1.0 / self.chips_per_symbol as f64
    }

    pub fn half_chip(&self) -> f64 {
        0.5 * self.chip_duration()
    }

    pub fn buffer_symbols(&self, seq_len: usize) -> usize {
        seq_len + 2 * self.guard_symbols
    }

    pub fn buffer_chips(&self, seq_len: usize) -> usize {
        self.buffer_symbols(seq_len) * self.chips_per_symbol
    }

    /// Chip whose left edge is nearest the true sequence start.
    pub fn origin_chip(&self) -> usize {
        self.guard_symbols * self.chips_per_symbol
    }

    fn check_epsilon(&self, epsilon: f64) -> Result<()> {
        let half = self.half_chip();
        if epsilon.is_nan() || epsilon.abs() > half * (1.0 + 1e-12) {
            return Err(Error::EpsilonOutOfRange {
                epsilon,
                half_chip: half,
            });
        }
        Ok(())
    }
}

/// Per-chip photoelectron counts of one received frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ChipCounts {
    pub counts: Vec<u32>,
    pub epsilon: f64,
    pub origin_chip: usize,
}

impl ChipCounts {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// `index,count` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{i},{c}\n"));
        }
        out
    }
}

/// Draws ε uniformly on `[-T_c/2, T_c/2]`.
pub fn sample_epsilon<R: Rng + ?Sized>(chips_per_symbol: usize, rng: &mut R) -> f64 {
    let half = 0.5 / chips_per_symbol as f64;
    rng.random_range(-half..=half)
}

/// Exact expected count of every chip: the rate integrated over the chip.
pub fn chip_means(seq: &SyncSequence, params: &ChannelParams, epsilon: f64) -> Result<Vec<f64>> {
    params.validate()?;
    params.check_epsilon(epsilon)?;
    let n = params.chips_per_symbol;
    let len = params.buffer_chips(seq.len());
    let mut means = vec![params.lambda_b / n as f64; len];
    let per_chip = params.lambda_s / n as f64;
    for (i, &s) in seq.symbols().iter().enumerate() {
        if s == 0 {
            continue;
        }
        let start = ((params.guard_symbols + i) * n) as f64 + epsilon * n as f64;
        let first = start.floor();
        let frac = start - first;
        let first = first as i64;
        // Partial chip at each end, full chips in between.
        add_clipped(&mut means, first, per_chip * (1.0 - frac));
        for t in 1..n as i64 {
            add_clipped(&mut means, first + t, per_chip);
        }
        add_clipped(&mut means, first + n as i64, per_chip * frac);
    }
    Ok(means)
}

fn add_clipped(buf: &mut [f64], idx: i64, v: f64) {
    if idx >= 0 && (idx as usize) < buf.len() {
        buf[idx as usize] += v;
    }
}

/// Simulates one received frame with systematic offset `epsilon`.
///
/// Arrivals are generated as Poisson processes: a Poisson total per
/// constant-rate segment, positions i.i.d. uniform inside it, then binned to
/// chips. The resulting per-chip counts are independent Poisson variables with
/// the means of [`chip_means`]. Arrivals that spill outside the buffer (only
/// possible with zero guard symbols) are not observed.
pub fn simulate_frame<R: Rng + ?Sized>(
    seq: &SyncSequence,
    params: &ChannelParams,
    epsilon: f64,
    rng: &mut R,
) -> Result<ChipCounts> {
    params.validate()?;
    params.check_epsilon(epsilon)?;
    let n = params.chips_per_symbol;
    let nf = n as f64;
    let total_symbols = params.buffer_symbols(seq.len());
    let mut counts = vec![0u32; total_symbols * n];
    let len = counts.len() as i64;

    if params.lambda_b > 0.0 {
        let bg = Poisson::new(params.lambda_b).expect("positive finite rate");
        for j in 0..total_symbols {
            let k = bg.sample(rng) as u64;
            let base = j * n;
            for _ in 0..k {
                let u: f64 = rng.random();
                let c = ((u * nf) as usize).min(n - 1);
                counts[base + c] += 1;
            }
        }
    }
    if params.lambda_s > 0.0 {
        let sig = Poisson::new(params.lambda_s).expect("positive finite rate");
        for (i, &s) in seq.symbols().iter().enumerate() {
            if s == 0 {
                continue;
            }
            let start = ((params.guard_symbols + i) * n) as f64 + epsilon * nf;
            let k = sig.sample(rng) as u64;
            for _ in 0..k {
                let u: f64 = rng.random();
                let c = (start + u * nf).floor() as i64;
                if (0..len).contains(&c) {
                    counts[c as usize] += 1;
                }
            }
        }
    }
    Ok(ChipCounts {
        counts,
        epsilon,
        origin_chip: params.origin_chip(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ones(len: usize) -> SyncSequence {
        SyncSequence::from_symbols(vec![1; len]).unwrap()
    }

    #[test]
    fn epsilon_range_and_determinism() {
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let x = sample_epsilon(100, &mut a);
            assert!((-0.005..=0.005).contains(&x));
            assert_eq!(x, sample_epsilon(100, &mut b));
        }
    }

    #[test]
    fn epsilon_mean_within_three_se() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let draws = 100_000;
        let mean: f64 = (0..draws).map(|_| sample_epsilon(100, &mut rng)).sum::<f64>() / draws as f64;
        let sigma = 0.01 / 12f64.sqrt();
        assert!(mean.abs() < 3.0 * sigma / (draws as f64).sqrt());
    }

    #[test]
    fn zero_rates_give_zero_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = ChannelParams::new(0.0, 0.0, 10);
        let f = simulate_frame(&ones(8), &p, 0.03, &mut rng).unwrap();
        assert!(f.counts.iter().all(|&c| c == 0));
    }

    #[test]
    fn chip_mean_all_ones_monte_carlo() {
        let p = ChannelParams::new(10.0, 1.0, 100).with_guard(0);
        let seq = ones(4);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let trials = 100_000;
        let chip = 150;
        let mut sum = 0.0;
        for _ in 0..trials {
            sum += simulate_frame(&seq, &p, 0.0, &mut rng).unwrap().counts[chip] as f64;
        }
        let mean = sum / trials as f64;
        let se = (0.11f64 / trials as f64).sqrt();
        assert!((mean - 0.11).abs() < 3.0 * se, "mean={mean}");
    }

    #[test]
    fn shifted_boundary_chip_mean() {
        // One symbol, n=2, waveform shifted right by a quarter symbol:
        // chip 0 sees 0.25 of background only, then 0.25 of signal+background.
        let (ls, lb) = (6.0, 2.0);
        let p = ChannelParams::new(ls, lb, 2).with_guard(0);
        let seq = SyncSequence::from_symbols(vec![1]).unwrap();
        let m = chip_means(&seq, &p, 0.25).unwrap();
        assert!((m[0] - (0.25 * lb + 0.25 * (ls + lb))).abs() < 1e-12);
        assert!((m[1] - 0.5 * (ls + lb)).abs() < 1e-12);
    }

    #[test]
    fn rejects_large_epsilon() {
        let p = ChannelParams::new(1.0, 1.0, 100);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(simulate_frame(&ones(4), &p, 0.006, &mut rng).is_err());
        assert!(chip_means(&ones(4), &p, -0.0051).is_err());
    }

    #[test]
    fn rate_conservation() {
        let p = ChannelParams::new(7.0, 0.5, 20).with_guard(2);
        let seq = SyncSequence::from_symbols(vec![1, 0, 1, 1, 0, 1]).unwrap();
        for &e in &[-0.025, -0.01, 0.0, 0.013, 0.025] {
            let total: f64 = chip_means(&seq, &p, e).unwrap().iter().sum();
            let expect = 7.0 * 4.0 + 0.5 * 10.0;
            assert!((total - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn aligned_chips_within_symbol_have_equal_means() {
        let p = ChannelParams::new(3.0, 1.0, 10).with_guard(1);
        let seq = SyncSequence::from_symbols(vec![1, 0, 1, 1]).unwrap();
        let m = chip_means(&seq, &p, 0.0).unwrap();
        for sym in m.chunks(10) {
            assert!(sym.iter().all(|&v| (v - sym[0]).abs() < 1e-15));
        }
    }

    #[test]
    fn sample_means_match_chip_means_and_dispersion_is_one() {
        let p = ChannelParams::new(10.0, 1.0, 4).with_guard(1);
        let seq = SyncSequence::from_symbols(vec![1, 0, 1, 1, 0, 0]).unwrap();
        let eps = 0.1;
        let means = chip_means(&seq, &p, eps).unwrap();
        let trials = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut s1 = vec![0.0; means.len()];
        let mut s2 = vec![0.0; means.len()];
        for _ in 0..trials {
            let f = simulate_frame(&seq, &p, eps, &mut rng).unwrap();
            for (i, &c) in f.counts.iter().enumerate() {
                s1[i] += c as f64;
                s2[i] += (c as f64) * (c as f64);
            }
        }
        let t = trials as f64;
        for i in 0..means.len() {
            let mean = s1[i] / t;
            let var = s2[i] / t - mean * mean;
            let se = (means[i] / t).sqrt();
            assert!((mean - means[i]).abs() < 4.5 * se, "chip {i}: {mean} vs {}", means[i]);
            if means[i] > 0.5 {
                assert!((var / mean - 1.0).abs() < 0.05, "chip {i} dispersion {}", var / mean);
            }
        }
    }

    #[test]
    fn csv_rows() {
        let c = ChipCounts {
            counts: vec![3, 0, 1],
            epsilon: 0.0,
            origin_chip: 0,
        };
        assert_eq!(c.to_csv(), "index,count\n0,3\n1,0\n2,1\n");
    }
}
