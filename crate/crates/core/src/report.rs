//! CSV tables for every output family. One header line, one row per record,
//! `\n` line endings, reals via [`csvfmt::real`].

use crate::bounds::BoundSummary;
use crate::campaign::CriterionReport;
use crate::csvfmt::{line, real};
use crate::moments::{Case, MomentSet};
use crate::montecarlo::{EmpiricalMoments, KsReport, MseEstimate};
use crate::optimizer::{OptimizationResult, Phase, TracePoint};

fn table(header: &[&str], rows: impl IntoIterator<Item = String>) -> String {
    let mut out = line(header.iter());
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

fn time(chips: i64, n: usize) -> String {
    real(chips as f64 / n as f64)
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// One offset of the moments table. `theory` is `None` when the offset is
/// beyond the side-peak feasibility limit.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentRow {
    pub offset_chips: i64,
    pub case: Case,
    pub theory: Option<MomentSet>,
    pub empirical: Option<EmpiricalMoments>,
}

/// Flags `|empirical - theory| > k · SE` for mean, variance, covariance.
pub fn deviation_flags(theory: &MomentSet, emp: &EmpiricalMoments, k: f64) -> [bool; 3] {
    [
        (emp.mean - theory.mean).abs() > k * emp.se_mean,
        (emp.variance - theory.variance).abs() > k * emp.se_variance,
        (emp.cov_with_c00 - theory.cov_with_c00).abs() > k * emp.se_cov,
    ]
}

pub fn moments_csv(rows: &[MomentRow], chips_per_symbol: usize) -> String {
    let with_emp = rows.iter().any(|r| r.empirical.is_some());
    let mut header = vec!["offset_time", "case", "mean", "var", "cov"];
    if with_emp {
        header.extend([
            "emp_mean", "emp_var", "emp_cov", "se_mean", "se_var", "se_cov", "flag_mean", "flag_var", "flag_cov",
        ]);
    }
    let rows = rows.iter().map(|r| {
        let mut f = vec![time(r.offset_chips, chips_per_symbol), r.case.number().to_string()];
        match &r.theory {
            Some(t) => f.extend([real(t.mean), real(t.variance), real(t.cov_with_c00)]),
            None => f.extend([String::new(), String::new(), String::new()]),
        }
        if with_emp {
            match &r.empirical {
                Some(e) => {
                    f.extend([
                        real(e.mean),
                        real(e.variance),
                        real(e.cov_with_c00),
                        real(e.se_mean),
                        real(e.se_variance),
                        real(e.se_cov),
                    ]);
                    match &r.theory {
                        Some(t) => f.extend(deviation_flags(t, e, 4.0).map(|b| flag(b).to_string())),
                        None => f.extend([String::new(), String::new(), String::new()]),
                    }
                }
                None => f.extend(std::iter::repeat_n(String::new(), 9)),
            }
        }
        line(f)
    });
    table(&header, rows)
}

pub fn bounds_csv(rows: &[BoundSummary]) -> String {
    table(
        &["alpha", "mse_bound", "p_case3_total", "infeasible_m"],
        rows.iter().map(|s| {
            line([
                real(s.alpha),
                real(s.mse_bound),
                real(s.p_case3_total),
                s.infeasible_m.to_string(),
            ])
        }),
    )
}

/// Per-offset bound rows: offset in chips, case, ε-averaged p̄, flags.
pub fn p_bar_csv(rows: &[(i64, Case, f64, bool)], chips_per_symbol: usize) -> String {
    table(
        &["offset_time", "case", "p_bar", "infeasible"],
        rows.iter().map(|&(c, case, p, inf)| {
            line([
                time(c, chips_per_symbol),
                case.number().to_string(),
                real(p),
                flag(inf).to_string(),
            ])
        }),
    )
}

pub fn optimize_csv(length: usize, r: &OptimizationResult) -> String {
    table(
        &["L", "alpha_unconstrained", "alpha_threshold", "alpha_chosen", "threshold_found", "mse_bound_chosen"],
        [line([
            length.to_string(),
            real(r.alpha_unconstrained),
            real(r.alpha_threshold),
            real(r.alpha_star),
            flag(r.threshold_found).to_string(),
            real(r.objective_star),
        ])],
    )
}

pub fn trace_csv(trace: &[TracePoint]) -> String {
    table(
        &["search", "phase", "alpha", "objective"],
        trace.iter().map(|t| {
            let search = if t.constrained { "constrained" } else { "unconstrained" };
            let phase = match t.phase {
                Phase::Scan => "scan",
                Phase::Golden => "golden",
                Phase::Final => "final",
            };
            line([search.to_string(), phase.to_string(), real(t.alpha), real(t.objective)])
        }),
    )
}

pub fn ks_csv(r: &KsReport, chips_per_symbol: usize) -> String {
    table(
        &["offset_time", "statistic", "p_value", "accepted"],
        r.offsets.iter().zip(&r.tests).map(|(&o, t)| {
            line([
                time(o, chips_per_symbol),
                real(t.statistic),
                real(t.p_value),
                flag(t.accepted()).to_string(),
            ])
        }),
    )
}

/// Empirical and bound MSE per α: `(alpha, alpha_effective, estimate, bound)`.
pub fn mse_csv(rows: &[(f64, f64, MseEstimate, f64)]) -> String {
    table(
        &["alpha", "alpha_effective", "empirical_mse", "se", "mse_bound", "odd_rate", "even_rate"],
        rows.iter().map(|(a, ae, m, b)| {
            line([
                real(*a),
                real(*ae),
                real(m.mse),
                real(m.se),
                real(*b),
                real(m.odd_rate()),
                real(m.even_rate()),
            ])
        }),
    )
}

/// Criterion outcomes. The free-text detail is quoted.
pub fn verify_csv(reports: &[CriterionReport]) -> String {
    table(
        &["criterion", "name", "passed", "detail"],
        reports.iter().map(|r| {
            line([
                r.id.to_string(),
                r.name.clone(),
                flag(r.passed).to_string(),
                format!("\"{}\"", r.detail.replace('"', "\"\"")),
            ])
        }),
    )
}
