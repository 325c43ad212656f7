//! Gaussian pairwise upper bounds on misestimate probabilities and on the
//! mean squared synchronization error.

use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::moments::{reduce, Case, Feasibility, MomentModel};
use crate::normal::phi;
use crate::quadrature::EpsilonRule;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuadratureKind {
    #[default]
    Gauss,
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConfig {
    pub length: usize,
    pub alpha: f64,
    pub lambda_s: f64,
    pub lambda_b: f64,
    pub chips_per_symbol: usize,
    pub m_max: usize,
    pub eta: f64,
    pub quadrature_nodes: usize,
    #[serde(default)]
    pub quadrature: QuadratureKind,
    /// Side-peak terms beyond `2m <= min(αL, (1-α)L/2)`: dropped
    /// (`Strict`) or evaluated by the same closed forms (`Extrapolate`).
    #[serde(default = "default_feasibility")]
    pub feasibility: Feasibility,
}

fn default_feasibility() -> Feasibility {
    Feasibility::Extrapolate
}

impl BoundConfig {
    pub fn new(length: usize, alpha: f64, lambda_s: f64, lambda_b: f64, chips_per_symbol: usize) -> Self {
        BoundConfig {
            length,
            alpha,
            lambda_s,
            lambda_b,
            chips_per_symbol,
            m_max: 10,
            eta: 1e-8,
            quadrature_nodes: 21,
            quadrature: QuadratureKind::Gauss,
            feasibility: Feasibility::Extrapolate,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model()?;
        if self.eta.is_nan() || self.eta <= 0.0 {
            return Err(Error::InvalidConfig(format!("eta={} must be > 0", self.eta)));
        }
        if self.m_max < 1 {
            return Err(Error::InvalidConfig("m_max must be >= 1".into()));
        }
        if self.quadrature_nodes < 1 {
            return Err(Error::InvalidConfig("quadrature_nodes must be >= 1".into()));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<MomentModel> {
        MomentModel::new(
            self.length,
            self.alpha,
            self.lambda_s,
            self.lambda_b,
            self.chips_per_symbol,
        )
        .map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn half_chip(&self) -> f64 {
        0.5 / self.chips_per_symbol as f64
    }

    pub fn rule(&self) -> EpsilonRule {
        match self.quadrature {
            QuadratureKind::Gauss => EpsilonRule::gauss(self.half_chip(), self.quadrature_nodes),
            QuadratureKind::Midpoint => EpsilonRule::midpoint(self.half_chip(), self.quadrature_nodes),
        }
    }
}

/// One bound value with its flags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PBar {
    pub value: f64,
    /// Variance combination was not positive; value is the σ → 0 limit.
    pub degenerate: bool,
    /// Side peak beyond feasibility; value is 0 under `Strict`.
    pub infeasible: bool,
}

/// `Φ(num / √den)` with the σ → 0 limit when `den <= 0`.
fn gauss_ratio(num: f64, den: f64) -> (f64, bool) {
    if den > 0.0 {
        (phi(num / den.sqrt()), false)
    } else if num >= 0.0 {
        (1.0, true)
    } else {
        (0.0, true)
    }
}

/// Closed-form bound for a sub-symbol offset `k/n` at residual ε.
fn p0k_closed(l: f64, a: f64, ls: f64, lb: f64, kn: f64, e: f64) -> (f64, bool) {
    let r = ls / 2.0 + lb;
    let num = (ls / 2.0) * (2.0 * e - kn) * (l * (1.0 + a) - 1.0);
    let den = 2.0 * kn * r * ((1.0 + a) * l - 1.0) + e * ls;
    gauss_ratio(num, den)
}

/// Closed-form bound for a side-peak offset `2m + k/n`.
fn p2mk_closed(l: f64, a: f64, ls: f64, lb: f64, m: f64, kn: f64, e: f64) -> (f64, bool) {
    let r = ls / 2.0 + lb;
    let h = ls / 2.0;
    let num = (a * l - 2.0 * m) * h * (1.0 - 2.0 * (kn - e)) - l * h * (1.0 - (1.0 + a) * e) - (2.0 * e - kn) * h;
    let den = 2.0 * r * ((l - m) - (a * l - 2.0 * m) * (1.0 - 2.0 * kn) - kn) + e * ls;
    gauss_ratio(num, den)
}

/// Pairwise bound `Φ(-(E00 - E) / √(V00 + V - 2 Cov))` from moments.
fn pairwise(e00: f64, v00: f64, mean: f64, var: f64, cov: f64) -> (f64, bool) {
    gauss_ratio(mean - e00, v00 + var - 2.0 * cov)
}

impl BoundConfig {
    fn l(&self) -> f64 {
        self.length as f64
    }

    fn kn(&self, k: i64) -> f64 {
        k as f64 / self.chips_per_symbol as f64
    }

    /// Bound for the grid offset `chips` from the true start at offset ε,
    /// from the hand-composed closed forms. `(0,0)` is `1 - p̄(0,1)`.
    pub fn p_bar(&self, chips: i64, eps: f64) -> Result<PBar> {
        let model = self.model()?;
        check_eps(self, eps)?;
        let r = reduce(chips, self.chips_per_symbol);
        let (l, a, ls, lb) = (self.l(), self.alpha, self.lambda_s, self.lambda_b);
        let e = r.eps_sign * eps;
        let (value, degenerate, infeasible) = match r.case {
            Case::Aligned => {
                let (p, d) = p0k_closed(l, a, ls, lb, self.kn(1), eps);
                (1.0 - p, d, false)
            }
            Case::SubSymbol => {
                let (p, d) = p0k_closed(l, a, ls, lb, self.kn(r.k), e);
                (p, d, false)
            }
            Case::SidePeak => {
                let feasible = model.is_feasible(r.m);
                if !feasible && self.feasibility == Feasibility::Strict {
                    (0.0, false, true)
                } else {
                    let (p, d) = p2mk_closed(l, a, ls, lb, r.m as f64, self.kn(r.k), e);
                    (p, d, !feasible)
                }
            }
        };
        Ok(PBar {
            value: value.clamp(0.0, 1.0),
            degenerate,
            infeasible,
        })
    }

    /// Same bound assembled from the moment closed forms.
    pub fn p_bar_generic(&self, chips: i64, eps: f64) -> Result<PBar> {
        let model = self.model()?;
        check_eps(self, eps)?;
        let red = reduce(chips, self.chips_per_symbol);
        if red.case == Case::Aligned {
            let (mean, var, cov, e00) = model.reduced_moments(reduce(1, self.chips_per_symbol), eps, self.feasibility)?;
            let (p, d) = pairwise(e00, model.var_c00(), mean, var, cov);
            return Ok(PBar {
                value: (1.0 - p).clamp(0.0, 1.0),
                degenerate: d,
                infeasible: false,
            });
        }
        let infeasible = red.case == Case::SidePeak && !model.is_feasible(red.m);
        if infeasible && self.feasibility == Feasibility::Strict {
            return Ok(PBar {
                value: 0.0,
                degenerate: false,
                infeasible,
            });
        }
        let (mean, var, cov, e00) = model.reduced_moments(red, eps, Feasibility::Extrapolate)?;
        let (p, d) = pairwise(e00, model.var_c00(), mean, var, cov);
        Ok(PBar {
            value: p.clamp(0.0, 1.0),
            degenerate: d,
            infeasible,
        })
    }

    /// Full per-ε evaluation of both sums with their flags.
    fn at_epsilon(&self, model: &MomentModel, eps: f64) -> Terms {
        let (l, a, ls, lb) = (self.l(), self.alpha, self.lambda_s, self.lambda_b);
        let n = self.chips_per_symbol as i64;
        let mut t = Terms::default();

        let (p01, d) = p0k_closed(l, a, ls, lb, self.kn(1), eps);
        let p00 = (1.0 - p01).clamp(0.0, 1.0);
        t.degenerate += d as usize;
        t.mse += eps * eps * p00;

        let mut sub = 0.0;
        for k in 1..n {
            let kn = self.kn(k);
            let (p, d) = p0k_closed(l, a, ls, lb, kn, eps);
            t.degenerate += d as usize;
            sub += (kn - eps) * (kn - eps) * p;
        }
        t.mse += 2.0 * sub;

        let mut side_mse = 0.0;
        let mut side_p = 0.0;
        for m in 1..=self.m_max as i64 {
            let feasible = model.is_feasible(m);
            if !feasible {
                t.infeasible += 1;
                if self.feasibility == Feasibility::Strict {
                    continue;
                }
            }
            let mf = m as f64;
            for k in -(n - 1)..=n {
                let (kn, e) = (self.kn(k.abs()), if k < 0 { -eps } else { eps });
                let (p, d) = p2mk_closed(l, a, ls, lb, mf, kn, e);
                t.degenerate += d as usize;
                let err = 2.0 * mf + self.kn(k) - eps;
                side_p += p;
                side_mse += err * err * p;
            }
        }
        t.case3 = 2.0 * side_p;
        t.mse += 2.0 * side_mse;
        t
    }

    /// ε-averaged totals.
    pub fn summary(&self) -> Result<BoundSummary> {
        self.validate()?;
        let model = self.model()?;
        let rule = self.rule();
        let mut out = BoundSummary {
            alpha: self.alpha,
            mse_bound: 0.0,
            p_case3_total: 0.0,
            infeasible_m: 0,
            degenerate_terms: 0,
        };
        for (&e, &w) in rule.nodes.iter().zip(&rule.weights) {
            let t = self.at_epsilon(&model, e);
            out.mse_bound += w * t.mse;
            out.p_case3_total += w * t.case3;
            out.infeasible_m = t.infeasible;
            out.degenerate_terms += t.degenerate;
        }
        Ok(out)
    }

    /// `2 Σ_{m=1}^{m_max} Σ_{k=-(n-1)}^{n} p̄_{2m,k}`, averaged over ε.
    pub fn p_case3_total(&self) -> Result<f64> {
        Ok(self.summary()?.p_case3_total)
    }

    /// Upper bound on `E(e²)` in symbol² units.
    pub fn mse_bound(&self) -> Result<f64> {
        Ok(self.summary()?.mse_bound)
    }

    /// Summaries over several α values.
    pub fn sweep(&self, alphas: &[f64], exec: Exec) -> Result<Vec<BoundSummary>> {
        exec.map_slice(alphas, |&a| self.with_alpha(a).summary())
            .into_iter()
            .collect()
    }
}

fn check_eps(cfg: &BoundConfig, eps: f64) -> Result<()> {
    let half = cfg.half_chip();
    if eps.abs() <= half * (1.0 + 1e-12) {
        Ok(())
    } else {
        Err(Error::EpsilonOutOfRange {
            epsilon: eps,
            half_chip: half,
        })
    }
}

#[derive(Debug, Default)]
struct Terms {
    mse: f64,
    case3: f64,
    infeasible: usize,
    degenerate: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    pub alpha: f64,
    pub mse_bound: f64,
    pub p_case3_total: f64,
    /// Side-peak orders `m <= m_max` beyond the feasibility limit.
    pub infeasible_m: usize,
    /// Terms evaluated at a non-positive variance combination, summed over
    /// quadrature nodes.
    pub degenerate_terms: usize,
}

/// Closed-form and generic routes for one offset, for regression checks.
pub fn route_gap(cfg: &BoundConfig, chips: i64, eps: f64) -> Result<(f64, f64)> {
    Ok((cfg.p_bar(chips, eps)?.value, cfg.p_bar_generic(chips, eps)?.value))
}
