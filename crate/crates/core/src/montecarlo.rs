//! Monte Carlo harness: trial ensembles, empirical moments, KS normality
//! and empirical squared synchronization error.

use std::ops::Range;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{sample_epsilon, simulate_frame, ChannelParams};
use crate::exec::Exec;
use crate::normal::phi;
use crate::sequence::{bipolar, build_sandwich, SequenceSpec, SyncSequence};
use crate::sync::{default_window, synchronize, Correlator};
use crate::{Error, Result};

/// Minimum sample size accepted by [`ks_normality`].
pub const KS_MIN_SAMPLES: usize = 50;

/// Chip offsets from `-span` to `+span` symbols in steps of `stride` chips.
pub fn offset_grid(chips_per_symbol: usize, span_symbols: usize, stride: usize) -> Vec<i64> {
    let stride = stride.max(1) as i64;
    let lim = (span_symbols * chips_per_symbol) as i64;
    (-lim..=lim).step_by(stride as usize).collect()
}

/// RNG for one trial: stream `trial` of the generator seeded by `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Correlation samples from repeated frames of one fixed sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialEnsemble {
    /// Chip offsets from the true start.
    pub offsets: Vec<i64>,
    pub n_trials: usize,
    pub seed: u64,
    pub epsilons: Vec<f64>,
    /// `C_{0,0}` of every trial, for covariances.
    pub c00: Vec<i64>,
    /// `samples[j][t]`: offset `offsets[j]`, trial `t`.
    pub samples: Vec<Vec<i64>>,
}

fn check_offsets(offsets: &[i64], params: &ChannelParams) -> Result<()> {
    let guard = (params.guard_symbols * params.chips_per_symbol) as i64;
    if let Some(&bad) = offsets.iter().find(|o| o.abs() > guard) {
        return Err(Error::Window {
            start: bad,
            end: bad,
            len: params.guard_symbols * params.chips_per_symbol,
        });
    }
    Ok(())
}

/// Simulates `n_trials` frames and correlates each at every offset.
///
/// Trial `t` uses [`trial_rng`]`(seed, t)` for ε and the frame, so results
/// do not depend on scheduling.
pub fn run_ensemble(
    seq: &SyncSequence,
    params: &ChannelParams,
    offsets: &[i64],
    n_trials: usize,
    seed: u64,
    exec: Exec,
) -> Result<TrialEnsemble> {
    params.validate()?;
    check_offsets(offsets, params)?;
    if n_trials == 0 {
        return Err(Error::InvalidConfig("n_trials must be positive".into()));
    }
    let bip = bipolar(seq);
    let n = params.chips_per_symbol;
    let rows = exec.map_indexed(n_trials, |t| -> Result<(f64, i64, Vec<i64>)> {
        let mut rng = trial_rng(seed, t as u64);
        let eps = sample_epsilon(n, &mut rng);
        let frame = simulate_frame(seq, params, eps, &mut rng)?;
        let cor = Correlator::new(&frame, &bip, n);
        let row = offsets
            .iter()
            .map(|&o| cor.at_offset(o))
            .collect::<Result<Vec<_>>>()?;
        Ok((eps, cor.at_offset(0)?, row))
    });
    let mut epsilons = Vec::with_capacity(n_trials);
    let mut c00 = Vec::with_capacity(n_trials);
    let mut samples = vec![Vec::with_capacity(n_trials); offsets.len()];
    for r in rows {
        let (e, c, row) = r?;
        epsilons.push(e);
        c00.push(c);
        for (col, v) in samples.iter_mut().zip(row) {
            col.push(v);
        }
    }
    Ok(TrialEnsemble {
        offsets: offsets.to_vec(),
        n_trials,
        seed,
        epsilons,
        c00,
        samples,
    })
}

/// One sequence of a sequence-averaged run.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRun {
    pub sequence: SyncSequence,
    pub ensemble: TrialEnsemble,
}

/// Draws `sequences` sandwich sequences of the given shape and runs
/// `trials_per_sequence` trials on each. Sequence and trial seeds come from
/// one generator seeded by `seed`.
#[allow(clippy::too_many_arguments)]
pub fn run_sequence_averaged(
    length: usize,
    alpha: f64,
    params: &ChannelParams,
    offsets: &[i64],
    sequences: usize,
    trials_per_sequence: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<SequenceRun>> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<(u64, u64)> = (0..sequences)
        .map(|_| (master.next_u64(), master.next_u64()))
        .collect();
    seeds
        .into_iter()
        .map(|(s_seq, s_trials)| {
            let sequence = build_sandwich(&SequenceSpec::new(length, alpha, s_seq))?;
            let ensemble = run_ensemble(&sequence, params, offsets, trials_per_sequence, s_trials, exec)?;
            Ok(SequenceRun { sequence, ensemble })
        })
        .collect()
}

/// Sample moments at one offset with standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMoments {
    pub offset_chips: i64,
    pub mean: f64,
    pub variance: f64,
    pub cov_with_c00: f64,
    pub se_mean: f64,
    pub se_variance: f64,
    pub se_cov: f64,
}

fn mean_of(x: impl Iterator<Item = f64>) -> f64 {
    let mut n = 0usize;
    let mut s = 0.0;
    for v in x {
        s += v;
        n += 1;
    }
    s / n as f64
}

fn moments_of(offset: i64, x: &[i64], y: &[i64]) -> EmpiricalMoments {
    let n = x.len() as f64;
    let mx = mean_of(x.iter().map(|&v| v as f64));
    let my = mean_of(y.iter().map(|&v| v as f64));
    let (mut s2, mut s4, mut sxy, mut sxy2) = (0.0, 0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let dx = a as f64 - mx;
        let dy = b as f64 - my;
        s2 += dx * dx;
        s4 += dx * dx * dx * dx;
        sxy += dx * dy;
        sxy2 += dx * dx * dy * dy;
    }
    let (variance, cov) = if x.len() > 1 {
        (s2 / (n - 1.0), sxy / (n - 1.0))
    } else {
        (0.0, 0.0)
    };
    let m2 = s2 / n;
    let m4 = s4 / n;
    let mxy = sxy / n;
    EmpiricalMoments {
        offset_chips: offset,
        mean: mx,
        variance,
        cov_with_c00: cov,
        se_mean: (variance / n).sqrt(),
        se_variance: ((m4 - m2 * m2).max(0.0) / n).sqrt(),
        se_cov: ((sxy2 / n - mxy * mxy).max(0.0) / n).sqrt(),
    }
}

/// Sample mean, unbiased variance and covariance with `C_{0,0}` per offset.
pub fn empirical_moments(ens: &TrialEnsemble) -> Vec<EmpiricalMoments> {
    ens.offsets
        .iter()
        .zip(&ens.samples)
        .map(|(&o, s)| moments_of(o, s, &ens.c00))
        .collect()
}

/// Averages per-sequence moments over a sequence-averaged run. Standard
/// errors come from the spread between sequences, so they cover both the
/// trial noise and the draw of the random flanks. A single run falls back
/// to [`empirical_moments`].
pub fn pooled_moments(runs: &[SequenceRun]) -> Result<Vec<EmpiricalMoments>> {
    match runs {
        [] => Err(Error::InvalidConfig("no sequences".into())),
        [one] => Ok(empirical_moments(&one.ensemble)),
        _ => {
            let per: Vec<Vec<EmpiricalMoments>> = runs.iter().map(|r| empirical_moments(&r.ensemble)).collect();
            let s = runs.len() as f64;
            let spread = |v: &[f64]| -> (f64, f64) {
                let m = v.iter().sum::<f64>() / s;
                let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (s - 1.0);
                (m, (var / s).sqrt())
            };
            Ok((0..per[0].len())
                .map(|j| {
                    let col = |f: fn(&EmpiricalMoments) -> f64| per.iter().map(|p| f(&p[j])).collect::<Vec<_>>();
                    let (mean, se_mean) = spread(&col(|m| m.mean));
                    let (variance, se_variance) = spread(&col(|m| m.variance));
                    let (cov, se_cov) = spread(&col(|m| m.cov_with_c00));
                    EmpiricalMoments {
                        offset_chips: per[0][j].offset_chips,
                        mean,
                        variance,
                        cov_with_c00: cov,
                        se_mean,
                        se_variance,
                        se_cov,
                    }
                })
                .collect())
        }
    }
}

/// One-sample KS test of standardized data against the standard normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
    /// Zero sample variance; p-value is defined as 0.
    pub degenerate: bool,
}

impl KsTest {
    pub fn accepted(&self) -> bool {
        self.p_value > 0.05
    }
}

/// Asymptotic Kolmogorov distribution tail `P(K > lambda)`.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        // Theta-function form, fast for small λ.
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        let s: f64 = (1..=20)
            .map(|k| {
                let j = (2 * k - 1) as f64;
                (-j * j * c).exp()
            })
            .sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// KS test after standardizing with the sample mean and standard deviation.
pub fn ks_normality(samples: &[f64]) -> Result<KsTest> {
    if samples.len() < KS_MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: KS_MIN_SAMPLES,
            got: samples.len(),
        });
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    if var.is_nan() || var <= 0.0 {
        return Ok(KsTest {
            statistic: 1.0,
            p_value: 0.0,
            degenerate: true,
        });
    }
    let sd = var.sqrt();
    let mut z: Vec<f64> = samples.iter().map(|x| (x - mean) / sd).collect();
    z.sort_by(f64::total_cmp);
    let mut d = 0.0f64;
    for (i, &v) in z.iter().enumerate() {
        let f = phi(v);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(KsTest {
        statistic: d,
        p_value: kolmogorov_tail(n.sqrt() * d),
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub offsets: Vec<i64>,
    pub tests: Vec<KsTest>,
    pub accepted: usize,
    pub rejected: usize,
    pub mean_p: f64,
}

impl KsReport {
    pub fn acceptance_fraction(&self) -> f64 {
        self.accepted as f64 / self.tests.len() as f64
    }
}

/// KS test at every offset of an ensemble. `dither` adds U(-0.5, 0.5) noise
/// from a generator with that seed before testing.
pub fn ks_report(ens: &TrialEnsemble, dither: Option<u64>, exec: Exec) -> Result<KsReport> {
    let tests = exec
        .map_indexed(ens.offsets.len(), |j| {
            let mut x: Vec<f64> = ens.samples[j].iter().map(|&v| v as f64).collect();
            if let Some(seed) = dither {
                let mut rng = trial_rng(seed, j as u64);
                for v in &mut x {
                    *v += rng.random_range(-0.5..0.5);
                }
            }
            ks_normality(&x)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let accepted = tests.iter().filter(|t| t.accepted()).count();
    let mean_p = tests.iter().map(|t| t.p_value).sum::<f64>() / tests.len().max(1) as f64;
    Ok(KsReport {
        offsets: ens.offsets.clone(),
        rejected: tests.len() - accepted,
        accepted,
        mean_p,
        tests,
    })
}

/// Squared synchronization error statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseEstimate {
    pub mse: f64,
    pub se: f64,
    pub n_trials: usize,
    /// Estimates within half a symbol of the truth.
    pub near: usize,
    /// Estimates nearest an even nonzero number of symbols.
    pub even_side: usize,
    /// Estimates nearest an odd number of symbols.
    pub odd_side: usize,
}

impl MseEstimate {
    pub fn odd_rate(&self) -> f64 {
        self.odd_side as f64 / self.n_trials as f64
    }

    pub fn even_rate(&self) -> f64 {
        self.even_side as f64 / self.n_trials as f64
    }
}

/// Mean over trials of `(t̂ - ε)²` in symbol² units. `window` is in
/// absolute start chips; `None` uses [`default_window`].
pub fn empirical_mse(
    seq: &SyncSequence,
    params: &ChannelParams,
    n_trials: usize,
    window: Option<Range<i64>>,
    seed: u64,
    exec: Exec,
) -> Result<MseEstimate> {
    params.validate()?;
    if n_trials == 0 {
        return Err(Error::InvalidConfig("n_trials must be positive".into()));
    }
    let n = params.chips_per_symbol;
    let window = window.unwrap_or_else(|| default_window(params.origin_chip(), n));
    let errs = exec.map_indexed(n_trials, |t| -> Result<f64> {
        let mut rng = trial_rng(seed, t as u64);
        let eps = sample_epsilon(n, &mut rng);
        let frame = simulate_frame(seq, params, eps, &mut rng)?;
        let est = synchronize(&frame, seq, n, window.clone())?;
        Ok(est.time(n) - eps)
    });
    let errs = errs.into_iter().collect::<Result<Vec<_>>>()?;
    let nt = n_trials as f64;
    let sq: Vec<f64> = errs.iter().map(|e| e * e).collect();
    let mse = sq.iter().sum::<f64>() / nt;
    let var = if n_trials > 1 {
        sq.iter().map(|s| (s - mse) * (s - mse)).sum::<f64>() / (nt - 1.0)
    } else {
        0.0
    };
    let mut out = MseEstimate {
        mse,
        se: (var / nt).sqrt(),
        n_trials,
        near: 0,
        even_side: 0,
        odd_side: 0,
    };
    for e in &errs {
        let whole = e.round() as i64;
        match whole {
            0 => out.near += 1,
            w if w % 2 == 0 => out.even_side += 1,
            _ => out.odd_side += 1,
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::MomentModel;
    use crate::quadrature::EpsilonRule;
    use crate::sync::synchronize;
    use rand_distr::{Distribution, StandardNormal};

    fn group1_seq() -> SyncSequence {
        build_sandwich(&SequenceSpec::new(128, 0.707, 1)).unwrap()
    }

    #[test]
    fn grid_shape() {
        let g = offset_grid(100, 10, 1);
        assert_eq!(g.len(), 2001);
        assert_eq!((g[0], g[2000]), (-1000, 1000));
        assert_eq!(offset_grid(100, 10, 10).len(), 201);
    }

    #[test]
    fn single_trial_and_dark_channel() {
        let seq = group1_seq();
        let p = ChannelParams::new(10.0, 1.0, 100);
        let offs = offset_grid(100, 10, 100);
        let e = run_ensemble(&seq, &p, &offs, 1, 3, Exec::Sequential).unwrap();
        assert!(e.samples.iter().all(|s| s.len() == 1));
        let dark = ChannelParams::new(0.0, 0.0, 100);
        let e = run_ensemble(&seq, &dark, &offs, 20, 3, Exec::Sequential).unwrap();
        assert!(e.samples.iter().flatten().all(|&v| v == 0));
        assert!(run_ensemble(&seq, &p, &[1300], 1, 3, Exec::Sequential).is_err());
    }

    #[test]
    fn ensemble_is_schedule_independent() {
        let seq = group1_seq();
        let p = ChannelParams::new(10.0, 1.0, 100);
        let offs = offset_grid(100, 10, 50);
        let a = run_ensemble(&seq, &p, &offs, 64, 77, Exec::Sequential).unwrap();
        let b = run_ensemble(&seq, &p, &offs, 64, 77, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        let c = crate::campaign::with_threads(3, || run_ensemble(&seq, &p, &offs, 64, 77, Exec::Parallel))
            .unwrap()
            .unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn aligned_mean_matches_theory() {
        let seq = group1_seq();
        let p = ChannelParams::new(10.0, 1.0, 100);
        let e = run_ensemble(&seq, &p, &[0], 10_000, 5, Exec::Parallel).unwrap();
        let m = empirical_moments(&e)[0];
        // Fixed-sequence expectation from the exact chip rates.
        let rule = EpsilonRule::gauss(p.half_chip(), 21);
        let exact = rule.average(|eps| {
            let means = crate::channel::chip_means(&seq, &p, eps).unwrap();
            let bip = bipolar(&seq);
            bip.iter()
                .enumerate()
                .map(|(i, &b)| {
                    let s = p.origin_chip() + i * 100;
                    b as f64 * means[s..s + 100].iter().sum::<f64>()
                })
                .sum()
        });
        assert!((m.mean - exact).abs() < 4.0 * m.se_mean, "{} vs {exact} (se {})", m.mean, m.se_mean);
        let theory = MomentModel::for_sequence(&seq, &p).unwrap().marginal_mean(0, &rule).unwrap();
        assert!((theory - 640.0).abs() < 1e-9);
    }

    #[test]
    fn moment_identities() {
        let ens = TrialEnsemble {
            offsets: vec![0, 5],
            n_trials: 4,
            seed: 0,
            epsilons: vec![0.0; 4],
            c00: vec![1, 2, 3, 6],
            samples: vec![vec![1, 2, 3, 6], vec![7, 7, 7, 7]],
        };
        let m = empirical_moments(&ens);
        assert_eq!(m[0].variance, m[0].cov_with_c00);
        assert_eq!(m[0].mean, 3.0);
        assert!((m[0].variance - 14.0 / 3.0).abs() < 1e-12);
        assert_eq!(m[1].variance, 0.0);
        assert_eq!(m[1].cov_with_c00, 0.0);
    }

    #[test]
    fn pooled_single_falls_back() {
        let p = ChannelParams::new(10.0, 1.0, 20);
        let runs = run_sequence_averaged(64, 0.5, &p, &[0, 40], 1, 200, 9, Exec::Parallel).unwrap();
        assert_eq!(pooled_moments(&runs).unwrap(), empirical_moments(&runs[0].ensemble));
        let runs = run_sequence_averaged(64, 0.5, &p, &[0, 40], 4, 200, 9, Exec::Parallel).unwrap();
        let pooled = pooled_moments(&runs).unwrap();
        let m0: f64 = runs.iter().map(|r| empirical_moments(&r.ensemble)[0].mean).sum::<f64>() / 4.0;
        assert!((pooled[0].mean - m0).abs() < 1e-9);
        assert!(runs[0].sequence != runs[1].sequence);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // Critical values of the limiting distribution.
        assert!((kolmogorov_tail(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_tail(1.2238) - 0.10).abs() < 1e-4);
        assert!((kolmogorov_tail(1.6276) - 0.01).abs() < 1e-4);
        // The two series agree where they meet.
        let below = kolmogorov_tail(1.0 - 1e-12);
        let above = kolmogorov_tail(1.0);
        assert!((below - above).abs() < 1e-10);
        assert_eq!(kolmogorov_tail(0.0), 1.0);
        assert!(kolmogorov_tail(0.2) > 0.999);
    }

    #[test]
    fn ks_degenerate_and_small() {
        let t = ks_normality(&[3.0; 60]).unwrap();
        assert!(t.degenerate);
        assert_eq!(t.p_value, 0.0);
        assert!(matches!(ks_normality(&[1.0; 10]), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn ks_size_and_power() {
        let mut accepted_normal = 0;
        let mut rejected_uniform = 0;
        for rep in 0..100u64 {
            let mut rng = trial_rng(2024, rep);
            let x: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
            accepted_normal += ks_normality(&x).unwrap().accepted() as usize;
            let u: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
            rejected_uniform += (!ks_normality(&u).unwrap().accepted()) as usize;
        }
        // Estimated parameters make the test conservative under H0.
        assert!((85..=100).contains(&accepted_normal), "{accepted_normal}");
        assert!(rejected_uniform >= 99, "{rejected_uniform}");
    }

    #[test]
    fn ks_report_counts_and_dither() {
        let seq = group1_seq();
        let p = ChannelParams::new(10.0, 1.0, 100);
        let e = run_ensemble(&seq, &p, &offset_grid(100, 2, 50), 500, 1, Exec::Parallel).unwrap();
        let r = ks_report(&e, None, Exec::Parallel).unwrap();
        assert_eq!(r.accepted + r.rejected, e.offsets.len());
        assert_eq!(r.accepted, r.tests.iter().filter(|t| t.p_value > 0.05).count());
        let d = ks_report(&e, Some(4), Exec::Sequential).unwrap();
        assert_eq!(d, ks_report(&e, Some(4), Exec::Parallel).unwrap());
    }

    #[test]
    fn strong_signal_mse_is_quantization() {
        let seq = group1_seq();
        let p = ChannelParams::new(1000.0, 1.0, 100);
        let m = empirical_mse(&seq, &p, 2000, None, 8, Exec::Parallel).unwrap();
        let target = 1e-4 / 12.0;
        assert!((m.mse / target - 1.0).abs() < 0.1, "{} vs {target}", m.mse);
        assert_eq!(m.near, 2000);
    }

    #[test]
    fn noiseless_single_trial_error_is_epsilon() {
        // Huge signal, no background: the aligned start wins, so the error
        // is the offset itself.
        let seq = group1_seq();
        let p = ChannelParams::new(1e5, 0.0, 10);
        let m = empirical_mse(&seq, &p, 1, None, 12, Exec::Sequential).unwrap();
        let mut rng = trial_rng(12, 0);
        let eps = sample_epsilon(10, &mut rng);
        let frame = simulate_frame(&seq, &p, eps, &mut rng).unwrap();
        let est = synchronize(&frame, &seq, 10, default_window(p.origin_chip(), 10)).unwrap();
        assert_eq!(est.offset.chips(10), 0);
        assert_eq!(m.mse, eps * eps);
    }

    #[test]
    fn mse_schedule_independent() {
        let seq = group1_seq();
        let p = ChannelParams::new(5.0, 1.0, 100);
        let a = empirical_mse(&seq, &p, 100, None, 3, Exec::Sequential).unwrap();
        let b = empirical_mse(&seq, &p, 100, None, 3, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.near + a.even_side + a.odd_side, 100);
    }
}
