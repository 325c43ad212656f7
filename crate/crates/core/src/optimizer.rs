//! Choice of α: backward threshold scan on the side-peak budget, then a
//! golden-section search of the MSE bound below the threshold.

use serde::{Deserialize, Serialize};

use crate::bounds::BoundConfig;
use crate::exec::Exec;
use crate::sequence::alpha_effective;
use crate::{Error, Result};

pub const GOLDEN_LO: f64 = 0.382;
pub const GOLDEN_HI: f64 = 0.618;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Search accuracy.
    pub h: f64,
    /// Uniform points evaluated before golden search; 0 disables the scan.
    pub prescan: usize,
    /// Evaluate the objective at the realizable α (even middle length).
    pub quantize: bool,
    pub exec: Exec,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            h: 1e-3,
            prescan: 25,
            quantize: false,
            exec: Exec::Parallel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Scan,
    Golden,
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    /// Whether the point belongs to the constrained search on
    /// `[0, alpha_threshold]`.
    pub constrained: bool,
    pub phase: Phase,
    pub alpha: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub alpha_threshold: f64,
    /// False when no grid α met the budget; `alpha_threshold` is then 0.
    pub threshold_found: bool,
    pub alpha_star: f64,
    pub objective_star: f64,
    pub alpha_unconstrained: f64,
    pub objective_unconstrained: f64,
    pub h: f64,
    pub trace: Vec<TracePoint>,
}

/// Outcome of one golden-section run.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldenOutcome {
    pub alpha: f64,
    pub iterations: usize,
    pub evaluations: Vec<(f64, f64)>,
}

/// Number of loop iterations the search performs on an interval of width
/// `width`: the interval shrinks by 0.618 per iteration.
pub fn golden_iterations(width: f64, h: f64) -> usize {
    if width < h {
        0
    } else {
        ((h / width).ln() / GOLDEN_HI.ln()).ceil() as usize
    }
}

/// Golden-section minimization on `[a, b]`.
///
/// Interior points at `a + 0.382(b-a)` and `a + 0.618(b-a)`; the surviving
/// point and its value are carried into the next iteration. Stops once
/// `b - a < h` and returns the midpoint of the two interior points.
pub fn golden_search<F>(mut objective: F, a: f64, b: f64, h: f64) -> Result<GoldenOutcome>
where
    F: FnMut(f64) -> Result<f64>,
{
    if a.is_nan() || b.is_nan() || a >= b || h.is_nan() || h <= 0.0 {
        return Err(Error::Domain(format!("golden search needs a < b and h > 0 (a={a}, b={b}, h={h})")));
    }
    let mut evaluations = Vec::new();
    let mut eval = |x: f64| -> Result<f64> {
        let v = objective(x)?;
        if !v.is_finite() {
            return Err(Error::NonFiniteObjective(x));
        }
        evaluations.push((x, v));
        Ok(v)
    };
    let (mut a, mut b) = (a, b);
    let mut x1 = a + GOLDEN_LO * (b - a);
    let mut x2 = a + GOLDEN_HI * (b - a);
    let mut f1 = eval(x1)?;
    let mut f2 = eval(x2)?;
    let mut iterations = 0;
    // Shrink by the exact ratio so the count matches `golden_iterations`.
    let mut width = b - a;
    while width >= h {
        iterations += 1;
        if f1 > f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN_HI * (b - a);
            f2 = eval(x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = a + GOLDEN_LO * (b - a);
            f1 = eval(x1)?;
        }
        width *= GOLDEN_HI;
    }
    Ok(GoldenOutcome {
        alpha: 0.5 * (x1 + x2),
        iterations,
        evaluations,
    })
}

/// Largest `α ∈ {1-h, 1-2h, …, 0}` with total side-peak bound `<= η`,
/// scanning backwards from 1. `None` if no grid point qualifies.
pub fn find_alpha_threshold(cfg: &BoundConfig, h: f64, exec: Exec) -> Result<Option<f64>> {
    cfg.validate()?;
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::InvalidConfig(format!("h={h} must lie in (0, 1)")));
    }
    let steps = (1.0 / h + 1e-9).floor() as usize;
    // Blocks keep the scan order while evaluating several α at once.
    let block = if exec.is_parallel() { 32 } else { 1 };
    let mut i = 1;
    while i <= steps {
        let hi = (i + block).min(steps + 1);
        let alphas: Vec<f64> = (i..hi).map(|j| (1.0 - j as f64 * h).max(0.0)).collect();
        let totals: Vec<Result<f64>> = exec.map_slice(&alphas, |&a| cfg.with_alpha(a).p_case3_total());
        for (a, t) in alphas.iter().zip(totals) {
            if t? <= cfg.eta {
                return Ok(Some(*a));
            }
        }
        i = hi;
    }
    Ok(None)
}

fn objective(cfg: &BoundConfig, opt: &OptimizerConfig, alpha: f64) -> Result<f64> {
    let a = if opt.quantize {
        alpha_effective(cfg.length, alpha)
    } else {
        alpha
    };
    cfg.with_alpha(a).mse_bound()
}

/// Scan plus golden search of the MSE bound on `[lo, hi]`; returns the best
/// evaluated point.
fn minimize(
    cfg: &BoundConfig,
    opt: &OptimizerConfig,
    lo: f64,
    hi: f64,
    constrained: bool,
    trace: &mut Vec<TracePoint>,
) -> Result<(f64, f64)> {
    let push = |trace: &mut Vec<TracePoint>, phase, alpha, objective| {
        trace.push(TracePoint {
            constrained,
            phase,
            alpha,
            objective,
        })
    };
    if hi - lo < opt.h {
        let v = objective(cfg, opt, lo)?;
        push(trace, Phase::Final, lo, v);
        return Ok((lo, v));
    }
    let (mut a, mut b) = (lo, hi);
    if opt.prescan >= 3 {
        let count = opt.prescan;
        let grid: Vec<f64> = (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect();
        let vals = opt.exec.map_slice(&grid, |&x| objective(cfg, opt, x));
        let mut best = 0;
        let mut best_val = f64::INFINITY;
        for (i, (x, v)) in grid.iter().zip(vals).enumerate() {
            let v = v?;
            if !v.is_finite() {
                return Err(Error::NonFiniteObjective(*x));
            }
            push(trace, Phase::Scan, *x, v);
            if v < best_val {
                best_val = v;
                best = i;
            }
        }
        a = grid[best.saturating_sub(1)];
        b = grid[(best + 1).min(count - 1)];
    }
    let g = golden_search(|x| objective(cfg, opt, x), a, b, opt.h)?;
    for &(x, v) in &g.evaluations {
        push(trace, Phase::Golden, x, v);
    }
    let v = objective(cfg, opt, g.alpha)?;
    push(trace, Phase::Final, g.alpha, v);
    // Keep the golden result unless an evaluated point is strictly better.
    let mut best = (g.alpha, v);
    for t in trace.iter().filter(|t| t.constrained == constrained) {
        if t.objective < best.1 && t.alpha >= lo && t.alpha <= hi {
            best = (t.alpha, t.objective);
        }
    }
    Ok(best)
}

/// Threshold scan, constrained minimization on `[0, α_threshold]`, and the
/// unconstrained minimization on `[0, 1-h]` for comparison.
pub fn optimize_alpha(cfg: &BoundConfig, opt: &OptimizerConfig) -> Result<OptimizationResult> {
    cfg.validate()?;
    let threshold = find_alpha_threshold(cfg, opt.h, opt.exec)?;
    let mut trace = Vec::new();
    let thr = threshold.unwrap_or(0.0);
    let (alpha_star, objective_star) = minimize(cfg, opt, 0.0, thr, true, &mut trace)?;
    let (alpha_unconstrained, objective_unconstrained) =
        minimize(cfg, opt, 0.0, 1.0 - opt.h, false, &mut trace)?;
    Ok(OptimizationResult {
        alpha_threshold: thr,
        threshold_found: threshold.is_some(),
        alpha_star,
        objective_star,
        alpha_unconstrained,
        objective_unconstrained,
        h: opt.h,
        trace,
    })
}
