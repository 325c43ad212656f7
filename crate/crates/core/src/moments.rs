//! Conditional moments of correlation values for the three offset cases, and
//! their average over the systematic offset ε.
//!
//! Expectations are over the random flank symbols of the sandwich sequence
//! (an ensemble of sequences sharing `L` and α) and over Poisson noise.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::quadrature::EpsilonRule;
use crate::sequence::SyncSequence;
use crate::sync::OffsetIndex;
use crate::{Error, Result};

/// Raw closed forms. No domain checks; `l` and `alpha` are real so callers
/// may pass `alpha * L` off the realizable grid.
pub mod closed {
    pub fn mean_c00(l: f64, alpha: f64, ls: f64, eps: f64) -> f64 {
        l * ls / 2.0 * (1.0 - (1.0 + alpha) * eps) + eps * ls / 2.0
    }

    pub fn var_c00(l: f64, ls: f64, lb: f64) -> f64 {
        l * (ls / 2.0 + lb)
    }

    /// `kn` is `k / n`.
    pub fn mean_c0k(l: f64, alpha: f64, ls: f64, kn: f64, eps: f64) -> f64 {
        let d = kn - eps;
        l * ls / 2.0 * (1.0 - (1.0 + alpha) * d) + d * ls / 2.0
    }

    pub fn cov_c00_c0k(l: f64, alpha: f64, ls: f64, lb: f64, kn: f64, eps: f64) -> f64 {
        let r = ls / 2.0 + lb;
        l * r * (1.0 - (1.0 + alpha) * kn) + kn * r - eps * ls / 2.0
    }

    pub fn mean_c2mk(l: f64, alpha: f64, ls: f64, m: f64, kn: f64, eps: f64) -> f64 {
        let d = kn - eps;
        ls / 2.0 * ((alpha * l - 2.0 * m) * (1.0 - 2.0 * d) + d)
    }

    pub fn var_c2mk(l: f64, m: f64, ls: f64, lb: f64) -> f64 {
        (l - 2.0 * m) * (ls / 2.0 + lb)
    }

    pub fn cov_c00_c2mk(l: f64, alpha: f64, ls: f64, lb: f64, m: f64, kn: f64, eps: f64) -> f64 {
        let r = ls / 2.0 + lb;
        r * (alpha * l - 2.0 * m) * (1.0 - 2.0 * kn) + kn * r - eps * ls / 2.0
    }
}

/// Which closed form governs an offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    /// Correct hypothesis.
    Aligned,
    /// Offset shorter than one symbol.
    SubSymbol,
    /// Offset near an even number of symbols.
    SidePeak,
}

impl Case {
    pub fn number(self) -> u8 {
        match self {
            Case::Aligned => 1,
            Case::SubSymbol => 2,
            Case::SidePeak => 3,
        }
    }
}

/// What to do with side-peak offsets beyond the feasibility limit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feasibility {
    #[default]
    Strict,
    /// Evaluate the closed forms anyway.
    Extrapolate,
}

/// Grid offset reduced to a closed-form case: `m`, nonnegative `k`, and the
/// sign applied to ε by the mirror symmetry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reduced {
    pub case: Case,
    pub m: i64,
    pub k: i64,
    pub eps_sign: f64,
}

/// Maps an offset of `chips` chips from the true start onto a case.
///
/// Negative offsets and negative chip remainders use the mirror rule
/// (|offset|, -ε). Whole-symbol parts are rounded to the nearest even count
/// so that `k` lies in `[-n, n-1]` before mirroring.
pub fn reduce(chips: i64, n: usize) -> Reduced {
    let n = n as i64;
    let a = chips.abs();
    let mut sign = if chips < 0 { -1.0 } else { 1.0 };
    if a == 0 {
        return Reduced {
            case: Case::Aligned,
            m: 0,
            k: 0,
            eps_sign: 1.0,
        };
    }
    if a < n {
        return Reduced {
            case: Case::SubSymbol,
            m: 0,
            k: a,
            eps_sign: sign,
        };
    }
    let m = (a + n).div_euclid(2 * n);
    let mut k = a - 2 * m * n;
    if k < 0 {
        k = -k;
        sign = -sign;
    }
    Reduced {
        case: Case::SidePeak,
        m,
        k,
        eps_sign: sign,
    }
}

/// Mean, variance and covariance with `C_{0,0}` of one correlation value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub mean: f64,
    pub variance: f64,
    pub cov_with_c00: f64,
    pub offset: OffsetIndex,
    /// Conditioning offset; NaN for ε-averaged moments.
    pub epsilon: f64,
}

/// Parameters of the closed forms with α already effective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentModel {
    pub length: usize,
    pub alpha: f64,
    pub lambda_s: f64,
    pub lambda_b: f64,
    pub chips_per_symbol: usize,
}

impl MomentModel {
    pub fn new(
        length: usize,
        alpha: f64,
        lambda_s: f64,
        lambda_b: f64,
        chips_per_symbol: usize,
    ) -> Result<Self> {
        let model = MomentModel {
            length,
            alpha,
            lambda_s,
            lambda_b,
            chips_per_symbol,
        };
        model.validate()?;
        Ok(model)
    }

    /// Model for a concrete sequence: α is the realized middle fraction.
    pub fn for_sequence(seq: &SyncSequence, params: &ChannelParams) -> Result<Self> {
        params.validate()?;
        Self::new(
            seq.len(),
            seq.alpha_effective(),
            params.lambda_s,
            params.lambda_b,
            params.chips_per_symbol,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::Domain("L must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Domain(format!("alpha={} outside [0, 1]", self.alpha)));
        }
        if self.chips_per_symbol < 2 {
            return Err(Error::Domain(format!("n={} < 2", self.chips_per_symbol)));
        }
        for (name, v) in [("lambda_s", self.lambda_s), ("lambda_b", self.lambda_b)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Domain(format!("{name}={v} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    fn l(&self) -> f64 {
        self.length as f64
    }

    fn n(&self) -> f64 {
        self.chips_per_symbol as f64
    }

    pub fn half_chip(&self) -> f64 {
        0.5 / self.n()
    }

    fn check_eps(&self, eps: f64) -> Result<()> {
        let half = self.half_chip();
        if eps.abs() <= half * (1.0 + 1e-12) {
            Ok(())
        } else {
            Err(Error::EpsilonOutOfRange {
                epsilon: eps,
                half_chip: half,
            })
        }
    }

    /// Largest admissible `2m`: `min(αL, (1-α)L/2)`.
    pub fn side_peak_limit(&self) -> f64 {
        (self.alpha * self.l()).min((1.0 - self.alpha) * self.l() / 2.0)
    }

    pub fn is_feasible(&self, m: i64) -> bool {
        m >= 1 && (2 * m) as f64 <= self.side_peak_limit() + 1e-9
    }

    fn check_feasible(&self, m: i64) -> Result<()> {
        if m < 1 {
            return Err(Error::Domain(format!("side-peak m={m} < 1")));
        }
        if !self.is_feasible(m) {
            return Err(Error::Infeasible {
                two_m: 2 * m,
                alpha_l: self.alpha * self.l(),
                flank_limit: (1.0 - self.alpha) * self.l() / 2.0,
            });
        }
        Ok(())
    }

    /// Applies the mirror rule to a signed chip offset inside one symbol.
    fn mirror(&self, k: i64, eps: f64) -> Result<(f64, f64)> {
        let n = self.chips_per_symbol as i64;
        if k.abs() > n {
            return Err(Error::Domain(format!("chip offset k={k} outside [-n, n]")));
        }
        let s = if k < 0 { -1.0 } else { 1.0 };
        Ok((k.abs() as f64 / self.n(), s * eps))
    }

    pub fn mean_c00(&self, eps: f64) -> Result<f64> {
        self.check_eps(eps)?;
        Ok(closed::mean_c00(self.l(), self.alpha, self.lambda_s, eps))
    }

    pub fn var_c00(&self) -> f64 {
        closed::var_c00(self.l(), self.lambda_s, self.lambda_b)
    }

    /// Negative `k` is evaluated as `(|k|, -ε)`.
    pub fn mean_c0k(&self, k: i64, eps: f64) -> Result<f64> {
        self.check_eps(eps)?;
        let (kn, e) = self.mirror(k, eps)?;
        Ok(closed::mean_c0k(self.l(), self.alpha, self.lambda_s, kn, e))
    }

    pub fn var_c0k(&self) -> f64 {
        self.var_c00()
    }

    pub fn cov_c00_c0k(&self, k: i64, eps: f64) -> Result<f64> {
        self.check_eps(eps)?;
        let (kn, e) = self.mirror(k, eps)?;
        Ok(closed::cov_c00_c0k(
            self.l(),
            self.alpha,
            self.lambda_s,
            self.lambda_b,
            kn,
            e,
        ))
    }

    pub fn mean_c2mk(&self, m: i64, k: i64, eps: f64) -> Result<f64> {
        self.check_eps(eps)?;
        self.check_feasible(m)?;
        let (kn, e) = self.mirror(k, eps)?;
        Ok(closed::mean_c2mk(self.l(), self.alpha, self.lambda_s, m as f64, kn, e))
    }

    pub fn var_c2mk(&self, m: i64) -> Result<f64> {
        if m < 1 || 2 * m as usize > self.length {
            return Err(Error::Domain(format!("m={m} outside [1, L/2]")));
        }
        Ok(closed::var_c2mk(self.l(), m as f64, self.lambda_s, self.lambda_b))
    }

    pub fn cov_c00_c2mk(&self, m: i64, k: i64, eps: f64) -> Result<f64> {
        self.check_eps(eps)?;
        self.check_feasible(m)?;
        let (kn, e) = self.mirror(k, eps)?;
        Ok(closed::cov_c00_c2mk(
            self.l(),
            self.alpha,
            self.lambda_s,
            self.lambda_b,
            m as f64,
            kn,
            e,
        ))
    }

    /// Moments of the offset reduced by [`reduce`], evaluated at `eps`
    /// after the mirror sign. Also returns `E(C_{0,0})` at the same mirrored
    /// ε, which is what the pairwise bound compares against.
    pub fn reduced_moments(&self, r: Reduced, eps: f64, policy: Feasibility) -> Result<(f64, f64, f64, f64)> {
        self.check_eps(eps)?;
        let (l, a, ls, lb) = (self.l(), self.alpha, self.lambda_s, self.lambda_b);
        let e = r.eps_sign * eps;
        let kn = r.k as f64 / self.n();
        let e00 = closed::mean_c00(l, a, ls, e);
        let v00 = self.var_c00();
        Ok(match r.case {
            Case::Aligned => (e00, v00, v00, e00),
            Case::SubSymbol => (
                closed::mean_c0k(l, a, ls, kn, e),
                v00,
                closed::cov_c00_c0k(l, a, ls, lb, kn, e),
                e00,
            ),
            Case::SidePeak => {
                if policy == Feasibility::Strict {
                    self.check_feasible(r.m)?;
                }
                let m = r.m as f64;
                (
                    closed::mean_c2mk(l, a, ls, m, kn, e),
                    closed::var_c2mk(l, m, ls, lb),
                    closed::cov_c00_c2mk(l, a, ls, lb, m, kn, e),
                    e00,
                )
            }
        })
    }

    /// Conditional moments at a grid offset of `chips` chips.
    pub fn conditional(&self, chips: i64, eps: f64, policy: Feasibility) -> Result<MomentSet> {
        let r = reduce(chips, self.chips_per_symbol);
        let (mean, variance, cov, _) = self.reduced_moments(r, eps, policy)?;
        Ok(MomentSet {
            mean,
            variance,
            cov_with_c00: cov,
            offset: OffsetIndex::from_chips(chips, self.chips_per_symbol),
            epsilon: eps,
        })
    }

    pub fn marginal_mean(&self, chips: i64, rule: &EpsilonRule) -> Result<f64> {
        Ok(self.marginal(chips, rule)?.mean)
    }

    /// Conditional moments averaged over ε.
    ///
    /// No `Var_ε(E)` or `Cov_ε(E, E_{0,0})` corrections. The closed-form
    /// means are affine in ε and overshoot for ε < 0, which makes those
    /// terms spurious; the exact flank oracle puts the true ones inside
    /// Monte Carlo noise.
    pub fn marginal(&self, chips: i64, rule: &EpsilonRule) -> Result<MomentSet> {
        let mut mean = 0.0;
        let mut var = 0.0;
        let mut cov = 0.0;
        for (&e, &w) in rule.nodes.iter().zip(&rule.weights) {
            let c = self.conditional(chips, e, Feasibility::Strict)?;
            mean += w * c.mean;
            var += w * c.variance;
            cov += w * c.cov_with_c00;
        }
        Ok(MomentSet {
            mean,
            variance: var,
            cov_with_c00: cov,
            offset: OffsetIndex::from_chips(chips, self.chips_per_symbol),
            epsilon: f64::NAN,
        })
    }
}

/// Moments computed directly from chip-level rates, averaged exactly over
/// the random flank symbols of `seq` (the middle part and guards are fixed).
///
/// Variance and covariance are the flank averages of the conditional
/// Poisson moments, the same quantity the closed forms describe. Used as an
/// independent check on the closed forms.
pub fn flank_averaged(
    seq: &SyncSequence,
    params: &ChannelParams,
    chips: i64,
    eps: f64,
) -> Result<MomentSet> {
    params.validate()?;
    let n = params.chips_per_symbol as i64;
    if eps.abs() > params.half_chip() * (1.0 + 1e-12) {
        return Err(Error::EpsilonOutOfRange {
            epsilon: eps,
            half_chip: params.half_chip(),
        });
    }
    let len = seq.len() as i64;
    let g = params.guard_symbols as i64;
    let origin = g * n;
    let total = params.buffer_chips(seq.len()) as i64;
    if origin + chips < 0 || origin + chips + len * n > total {
        return Err(Error::Window {
            start: origin + chips,
            end: origin + chips + len * n,
            len: total as usize,
        });
    }
    let (ls, lb) = (params.lambda_s, params.lambda_b);
    let nf = n as f64;
    let sym = Symbols { seq };

    // Window symbol index covering chip t for a window starting at `start`.
    let q = |t: i64, start: i64| -> Option<i64> {
        let d = t - start;
        (d >= 0 && d < len * n).then_some(d / n)
    };

    let (mut mean, mut var, mut cov) = (0.0, 0.0, 0.0);
    let lo = (origin + chips).min(origin);
    let hi = (origin + chips).max(origin) + len * n;
    for t in lo..hi {
        let qj = q(t, origin + chips);
        let q0 = q(t, origin);
        if qj.is_none() {
            continue;
        }
        let qj = qj.unwrap();
        // Symbols overlapping chip t, in buffer-relative sequence indices.
        let u = t as f64 / nf - g as f64 - eps;
        let first = u.floor() as i64;
        for i in [first, first + 1] {
            let a = (t as f64 / nf).max((g + i) as f64 + eps);
            let b = ((t + 1) as f64 / nf).min((g + i + 1) as f64 + eps);
            let d = b - a;
            if d <= 0.0 {
                continue;
            }
            let rate = |v: [f64; 3]| ls * v[2] + lb;
            mean += d * sym.expect([qj, qj, i], |v| (2.0 * v[0] - 1.0) * rate(v));
            var += d * sym.expect([i, i, i], rate);
            if let Some(q0) = q0 {
                cov += d * sym.expect([qj, q0, i], |v| {
                    (2.0 * v[0] - 1.0) * (2.0 * v[1] - 1.0) * rate(v)
                });
            }
        }
    }
    Ok(MomentSet {
        mean,
        variance: var,
        cov_with_c00: cov,
        offset: OffsetIndex::from_chips(chips, params.chips_per_symbol),
        epsilon: eps,
    })
}

struct Symbols<'a> {
    seq: &'a SyncSequence,
}

impl Symbols<'_> {
    /// `None` for a random flank symbol, otherwise its fixed value.
    fn fixed(&self, i: i64) -> Option<f64> {
        if i < 0 || i >= self.seq.len() as i64 {
            return Some(0.0);
        }
        let iu = i as usize;
        if iu >= self.seq.middle_start() && iu < self.seq.middle_end() {
            Some(self.seq.symbols()[iu] as f64)
        } else {
            None
        }
    }

    /// Expectation of `f(s_a, s_b, s_c)` over the random symbols among
    /// `idx`, each equiprobable 0/1 and independent.
    fn expect(&self, idx: [i64; 3], f: impl Fn([f64; 3]) -> f64) -> f64 {
        let mut random: Vec<i64> = Vec::with_capacity(3);
        for &i in &idx {
            if self.fixed(i).is_none() && !random.contains(&i) {
                random.push(i);
            }
        }
        let combos = 1usize << random.len();
        let mut acc = 0.0;
        for mask in 0..combos {
            let v = idx.map(|i| match self.fixed(i) {
                Some(x) => x,
                None => {
                    let p = random.iter().position(|&r| r == i).unwrap();
                    ((mask >> p) & 1) as f64
                }
            });
            acc += f(v);
        }
        acc / combos as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::{build_sandwich, SequenceSpec};
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    fn group1() -> MomentModel {
        // middle length 90 of 128
        MomentModel::new(128, 90.0 / 128.0, 10.0, 1.0, 100).unwrap()
    }

    #[test]
    fn case1_values() {
        let nominal = MomentModel::new(128, 0.707, 10.0, 1.0, 100).unwrap();
        assert_eq!(nominal.mean_c00(0.0).unwrap(), 640.0);
        let v = nominal.mean_c00(0.005).unwrap();
        assert!((v - 634.5626).abs() < 5e-5, "{v}");
        assert!((v - (640.0 * (1.0 - 0.008535) + 0.025)).abs() < 1e-9);
        let dark = MomentModel::new(128, 0.3, 0.0, 1.0, 100).unwrap();
        for e in [-0.005, 0.0, 0.002] {
            assert_eq!(dark.mean_c00(e).unwrap(), 0.0);
        }
        assert_eq!(nominal.var_c00(), 768.0);
        assert_eq!(MomentModel::new(256, 0.5, 8.0, 1.0, 100).unwrap().var_c00(), 1280.0);
        assert_eq!(MomentModel::new(64, 0.5, 0.0, 0.0, 10).unwrap().var_c00(), 0.0);
    }

    #[test]
    fn case2_values() {
        let m = MomentModel::new(128, 0.707, 10.0, 1.0, 100).unwrap();
        let v = m.mean_c0k(1, 0.0).unwrap();
        assert!((v - 629.1252).abs() < 5e-5, "{v}");
        let c = m.cov_c00_c0k(1, 0.0).unwrap();
        // 768 (1 - 0.01707) + 0.01 * 6
        assert!((c - 754.95024).abs() < 1e-9, "{c}");
        assert_eq!(m.var_c0k(), 768.0);
        let zero = MomentModel::new(128, 0.707, 0.0, 0.0, 100).unwrap();
        assert_eq!(zero.mean_c0k(3, 0.001).unwrap(), 0.0);
        assert_eq!(zero.cov_c00_c0k(3, 0.001).unwrap(), 0.0);
        // k/n = ε removes the offset.
        let kn = 0.03;
        assert!(close(closed::mean_c0k(128.0, 0.707, 10.0, kn, kn), 640.0, 1e-12));
        // Zero offset covariance is the variance.
        assert_eq!(m.cov_c00_c0k(0, 0.0).unwrap(), m.var_c00());
        assert!(m.mean_c0k(101, 0.0).is_err());
        assert!(m.mean_c0k(1, 0.006).is_err());
    }

    #[test]
    fn case3_values() {
        let m = group1();
        assert!(close(m.mean_c2mk(1, 0, 0.0).unwrap(), 440.0, 1e-12));
        assert_eq!(m.var_c2mk(1).unwrap(), 756.0);
        let c = m.cov_c00_c2mk(1, 1, 0.0).unwrap();
        assert!((c - 517.5).abs() < 0.01, "{c}");
        assert!(close(c, 6.0 * 88.0 * 0.98 + 0.06, 1e-12));
        // 2m = αL: mean vanishes when k/n = ε, covariance when k = ε = 0.
        assert!(closed::mean_c2mk(128.0, 90.0 / 128.0, 10.0, 45.0, 0.004, 0.004).abs() < 1e-12);
        assert!(closed::cov_c00_c2mk(128.0, 90.0 / 128.0, 10.0, 1.0, 45.0, 0.0, 0.0).abs() < 1e-12);
        assert_eq!(closed::var_c2mk(128.0, 64.0, 10.0, 1.0), 0.0);
        let dark = MomentModel::new(128, 0.5, 0.0, 0.0, 100).unwrap();
        assert_eq!(dark.mean_c2mk(2, 5, 0.001).unwrap(), 0.0);
        assert_eq!(dark.var_c2mk(2).unwrap(), 0.0);
        assert_eq!(dark.cov_c00_c2mk(2, 5, 0.001).unwrap(), 0.0);
    }

    #[test]
    fn case3_feasibility() {
        let m = group1();
        // (1 - α) L / 2 = 19
        assert!(m.is_feasible(9));
        assert!(!m.is_feasible(10));
        assert!(matches!(m.mean_c2mk(10, 0, 0.0), Err(Error::Infeasible { two_m: 20, .. })));
        assert!(m.cov_c00_c2mk(10, 0, 0.0).is_err());
        assert!(m.mean_c2mk(0, 0, 0.0).is_err());
        let all_random = MomentModel::new(128, 0.0, 10.0, 1.0, 100).unwrap();
        assert!(!all_random.is_feasible(1));
        assert!(all_random
            .conditional(200, 0.0, Feasibility::Extrapolate)
            .is_ok());
        assert!(all_random.conditional(200, 0.0, Feasibility::Strict).is_err());
    }

    #[test]
    fn reduce_cases() {
        let n = 100;
        assert_eq!(reduce(0, n).case, Case::Aligned);
        let r = reduce(-3, n);
        assert_eq!((r.case, r.m, r.k, r.eps_sign), (Case::SubSymbol, 0, 3, -1.0));
        let r = reduce(99, n);
        assert_eq!((r.case, r.k, r.eps_sign), (Case::SubSymbol, 99, 1.0));
        // One symbol late sits at the lower edge of the m=1 side peak.
        let r = reduce(100, n);
        assert_eq!((r.case, r.m, r.k, r.eps_sign), (Case::SidePeak, 1, 100, -1.0));
        let r = reduce(201, n);
        assert_eq!((r.m, r.k, r.eps_sign), (1, 1, 1.0));
        let r = reduce(-201, n);
        assert_eq!((r.m, r.k, r.eps_sign), (1, 1, -1.0));
        let r = reduce(-199, n);
        assert_eq!((r.m, r.k, r.eps_sign), (1, 1, 1.0));
        let r = reduce(299, n);
        assert_eq!((r.m, r.k), (1, 99));
        let r = reduce(300, n);
        assert_eq!((r.m, r.k, r.eps_sign), (2, 100, -1.0));
    }

    #[test]
    fn case2_tends_to_case1() {
        let a = closed::mean_c0k(200.0, 0.6, 7.0, 0.0, 0.0);
        assert!((a - closed::mean_c00(200.0, 0.6, 7.0, 0.0)).abs() < 1e-12);
        let c = closed::cov_c00_c0k(200.0, 0.6, 7.0, 1.5, 0.0, 0.0);
        assert!((c - closed::var_c00(200.0, 7.0, 1.5)).abs() < 1e-12);
    }

    #[test]
    fn marginal_mean_of_affine_forms() {
        let m = MomentModel::new(128, 0.707, 10.0, 1.0, 100).unwrap();
        let mid = EpsilonRule::midpoint(m.half_chip(), 1);
        let gl = EpsilonRule::gauss(m.half_chip(), 21);
        assert_eq!(m.marginal_mean(0, &mid).unwrap(), 640.0);
        assert!(close(m.marginal_mean(0, &gl).unwrap(), 640.0, 1e-13));
        for chips in [1, 7, -7, 250, -250] {
            let a = m.marginal_mean(chips, &mid).unwrap();
            let b = m.marginal_mean(chips, &gl).unwrap();
            assert!(close(a, b, 1e-12), "{chips}: {a} vs {b}");
        }
    }

    #[test]
    fn marginal_mean_decreases_into_side_region() {
        let m = group1();
        let rule = EpsilonRule::gauss(m.half_chip(), 21);
        let mut prev = f64::INFINITY;
        for k in 0..100 {
            let v = m.marginal_mean(k, &rule).unwrap();
            assert!(v < prev, "k={k}");
            prev = v;
        }
    }

    #[test]
    fn marginal_zero_offset() {
        let m = group1();
        let rule = EpsilonRule::gauss(m.half_chip(), 21);
        let s = m.marginal(0, &rule).unwrap();
        assert!(close(s.mean, 640.0, 1e-12));
        assert!(close(s.variance, 768.0, 1e-12));
        assert_eq!(s.cov_with_c00, s.variance);
    }

    #[test]
    fn flank_average_matches_closed_forms() {
        // The closed forms assume the residual shift k/n - ε is nonnegative
        // and drop O(λs) boundary terms; the side-peak variance also omits
        // background collected over the 2m guard symbols.
        let seq = build_sandwich(&SequenceSpec::new(128, 0.707, 11)).unwrap();
        let p = ChannelParams::new(10.0, 1.0, 20);
        let model = MomentModel::for_sequence(&seq, &p).unwrap();
        let tol = 0.65 * p.lambda_s;
        for eps in [-0.025, -0.01, 0.0, 0.01, 0.025] {
            for chips in (-200..=200).step_by(7) {
                let r = reduce(chips, 20);
                if (r.k as f64 / 20.0) < r.eps_sign * eps || r.k > 10 {
                    continue;
                }
                let exact = flank_averaged(&seq, &p, chips, eps).unwrap();
                let cf = model.conditional(chips, eps, Feasibility::Strict).unwrap();
                let guard_bg = 2.0 * r.m as f64 * p.lambda_b;
                assert!((exact.mean - cf.mean).abs() < tol, "mean {chips} {eps}: {} vs {}", exact.mean, cf.mean);
                assert!(
                    (exact.variance - cf.variance - guard_bg).abs() < 0.3 * p.lambda_s,
                    "var {chips} {eps}: {} vs {}",
                    exact.variance,
                    cf.variance
                );
                assert!((exact.cov_with_c00 - cf.cov_with_c00).abs() < tol, "cov {chips} {eps}: {} vs {}", exact.cov_with_c00, cf.cov_with_c00);
            }
        }
    }

    #[test]
    fn aligned_mean_overshoots_for_negative_epsilon() {
        // Outside the derivation's sign assumption the aligned mean grows
        // with |ε| instead of shrinking.
        let seq = build_sandwich(&SequenceSpec::new(128, 0.707, 11)).unwrap();
        let p = ChannelParams::new(10.0, 1.0, 20);
        let model = MomentModel::for_sequence(&seq, &p).unwrap();
        let eps = -0.025;
        let exact = flank_averaged(&seq, &p, 0, eps).unwrap().mean;
        let mirrored = model.mean_c00(-eps).unwrap();
        assert!(model.mean_c00(eps).unwrap() > 640.0);
        assert!((exact - mirrored).abs() < 0.5);
    }

    #[test]
    fn flank_average_zero_offset_cov_is_variance() {
        let seq = build_sandwich(&SequenceSpec::new(64, 0.5, 2)).unwrap();
        let p = ChannelParams::new(6.0, 0.5, 10);
        for eps in [-0.05, 0.0, 0.03] {
            let s = flank_averaged(&seq, &p, 0, eps).unwrap();
            assert!(close(s.cov_with_c00, s.variance, 1e-12));
        }
    }

    proptest! {
        #[test]
        fn mirror_symmetry(k in 1i64..100, eps in -0.005f64..0.005, m in 1i64..10) {
            let model = group1();
            prop_assert_eq!(model.mean_c0k(-k, eps).unwrap(), model.mean_c0k(k, -eps).unwrap());
            prop_assert_eq!(model.cov_c00_c0k(-k, eps).unwrap(), model.cov_c00_c0k(k, -eps).unwrap());
            prop_assert_eq!(model.mean_c2mk(m, -k, eps).unwrap(), model.mean_c2mk(m, k, -eps).unwrap());
        }

        #[test]
        fn cauchy_schwarz_on_grid(chips in -1000i64..=1000, eps in -0.005f64..0.005) {
            let model = group1();
            let s = model.conditional(chips, eps, Feasibility::Strict).unwrap();
            prop_assert!(s.variance >= 0.0);
            prop_assert!(s.cov_with_c00.abs() <= (s.variance * model.var_c00()).sqrt() + 1e-9);
        }
    }
}
