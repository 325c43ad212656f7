//! The verification campaign: one check per acceptance criterion, shared
//! by the `verify` command and the acceptance tests.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::BoundConfig;
use crate::channel::ChannelParams;
use crate::exec::Exec;
use crate::moments::{closed, MomentModel};
use crate::montecarlo::{
    empirical_moments, empirical_mse, ks_report, offset_grid, pooled_moments, run_ensemble,
    run_sequence_averaged,
};
use crate::optimizer::{find_alpha_threshold, golden_search, optimize_alpha, OptimizerConfig};
use crate::quadrature::EpsilonRule;
use crate::report::{bounds_csv, ks_csv, moments_csv, mse_csv, MomentRow};
use crate::sequence::{alpha_effective, bipolar, build_sandwich, SequenceSpec};
use crate::{Error, Result};

/// Published optimization results: `(L, α_threshold, unconstrained argmin)`.
pub const PUBLISHED_OPTIMA: [(usize, f64, f64); 3] = [(128, 0.719, 0.770), (256, 0.853, 0.863), (512, 0.913, 0.917)];

/// Published squared errors: `(L, α tuned, e² at α = 0, e² at α tuned)`.
pub const PUBLISHED_MSE: [(usize, f64, f64, f64); 2] = [
    (128, 0.72, 9.749_649_531_025_25e-5, 3.449_115_891_038_36e-5),
    (256, 0.86, 2.632_141_545_504_94e-5, 1.368_432_122_597_68e-5),
];

/// Published KS acceptance fraction for Group 2.
pub const PUBLISHED_KS_ACCEPT: f64 = 1781.0 / 2001.0;

/// Simulation groups: `(L, α, λs, λb)` with `n = 100`.
pub const GROUP1: (usize, f64, f64, f64) = (128, 0.707, 10.0, 1.0);
pub const GROUP2: (usize, f64, f64, f64) = (256, 0.853, 8.0, 1.0);

pub const CHIPS_PER_SYMBOL: usize = 100;

/// Size of the Monte Carlo parts of the campaign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    /// Trials per configuration. Sequence-averaged runs split them evenly.
    pub trials: usize,
    /// Offset grid stride in chips over ±10 symbols.
    pub grid_stride: usize,
    /// Sequences drawn for the moment comparison.
    pub sequences: usize,
    /// Random points in the bound-route regression.
    pub sweep_points: usize,
    pub seed: u64,
    pub exec: Exec,
}

impl Scale {
    pub fn paper() -> Self {
        Scale {
            trials: 10_000,
            grid_stride: 10,
            sequences: 20,
            sweep_points: 10_000,
            seed: 1,
            exec: Exec::Parallel,
        }
    }

    pub fn smoke() -> Self {
        Scale {
            trials: 500,
            grid_stride: 10,
            sequences: 5,
            sweep_points: 1_000,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.trials < 50 {
            bad.push("trials (>= 50)");
        }
        if self.grid_stride == 0 {
            bad.push("grid_stride (>= 1)");
        }
        if self.sequences < 2 || self.sequences > self.trials {
            bad.push("sequences (2..=trials)");
        }
        if self.sweep_points == 0 {
            bad.push("sweep_points (>= 1)");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid fields: {}", bad.join(", "))))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CriterionReport {
    fn new(id: u8, name: &str, passed: bool, detail: String) -> Self {
        CriterionReport {
            id,
            name: name.into(),
            passed,
            detail,
        }
    }

    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        format!("criterion {} {}: {} ({})", self.id, verdict, self.name, self.detail)
    }
}

fn optimization_config(length: usize) -> BoundConfig {
    BoundConfig::new(length, 0.5, 5.0, 1.0, CHIPS_PER_SYMBOL)
}

fn group_params(g: (usize, f64, f64, f64)) -> ChannelParams {
    ChannelParams::new(g.2, g.3, CHIPS_PER_SYMBOL)
}

/// Published optima: threshold within ±0.002, unconstrained argmin within ±0.01.
pub fn criterion1(exec: Exec) -> Result<CriterionReport> {
    let opt = OptimizerConfig {
        exec,
        ..Default::default()
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for (l, thr, arg) in PUBLISHED_OPTIMA {
        let r = optimize_alpha(&optimization_config(l), &opt)?;
        let pass = r.threshold_found
            && (r.alpha_threshold - thr).abs() <= 0.002 + 1e-9
            && (r.alpha_unconstrained - arg).abs() <= 0.01 + 1e-9;
        ok &= pass;
        parts.push(format!(
            "L={l} threshold {:.3} vs {thr}, argmin {:.4} vs {arg}",
            r.alpha_threshold, r.alpha_unconstrained
        ));
    }
    Ok(CriterionReport::new(1, "published optima", ok, parts.join("; ")))
}

/// Pass counts of one moment comparison: `[mean, variance, covariance]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentAgreement {
    pub points: usize,
    pub within: [usize; 3],
}

impl MomentAgreement {
    pub fn fractions(&self) -> [f64; 3] {
        self.within.map(|w| w as f64 / self.points as f64)
    }
}

/// Sequence-averaged empirical moments against the ε-marginalized closed
/// forms, with a `k`-standard-error band.
pub fn moment_agreement(g: (usize, f64, f64, f64), scale: &Scale, k: f64) -> Result<MomentAgreement> {
    let params = group_params(g);
    let offsets = offset_grid(CHIPS_PER_SYMBOL, 10, scale.grid_stride);
    let per_seq = scale.trials / scale.sequences;
    let runs = run_sequence_averaged(g.0, g.1, &params, &offsets, scale.sequences, per_seq, scale.seed, scale.exec)?;
    let emp = pooled_moments(&runs)?;
    let model = MomentModel::for_sequence(&runs[0].sequence, &params)?;
    let rule = EpsilonRule::gauss(params.half_chip(), 21);
    let mut within = [0; 3];
    for e in &emp {
        let th = model.marginal(e.offset_chips, &rule)?;
        let flags = crate::report::deviation_flags(&th, e, k);
        for (w, f) in within.iter_mut().zip(flags) {
            *w += !f as usize;
        }
    }
    Ok(MomentAgreement {
        points: emp.len(),
        within,
    })
}

pub fn criterion2(scale: &Scale) -> Result<CriterionReport> {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, g) in [("group 1", GROUP1), ("group 2", GROUP2)] {
        let a = moment_agreement(g, scale, 4.0)?;
        let [fm, fv, fc] = a.fractions();
        ok &= fm >= 0.95 && fv >= 0.90 && fc >= 0.95;
        parts.push(format!(
            "{name}: mean {}/{n}, var {}/{n}, cov {}/{n}",
            a.within[0],
            a.within[1],
            a.within[2],
            n = a.points
        ));
    }
    Ok(CriterionReport::new(2, "moment agreement", ok, parts.join("; ")))
}

/// KS normality on Group 2 with one fixed sequence.
pub fn criterion3(scale: &Scale) -> Result<CriterionReport> {
    let params = group_params(GROUP2);
    let seq = build_sandwich(&SequenceSpec::new(GROUP2.0, GROUP2.1, scale.seed))?;
    let offsets = offset_grid(CHIPS_PER_SYMBOL, 10, scale.grid_stride);
    let ens = run_ensemble(&seq, &params, &offsets, scale.trials, scale.seed, scale.exec)?;
    let r = ks_report(&ens, None, scale.exec)?;
    let frac = r.acceptance_fraction();
    let ok = (frac - PUBLISHED_KS_ACCEPT).abs() <= 0.10 && r.mean_p > 0.05;
    Ok(CriterionReport::new(
        3,
        "KS normality",
        ok,
        format!(
            "accepted {}/{} = {:.3} (published {:.3}), mean p {:.4}",
            r.accepted,
            r.tests.len(),
            frac,
            PUBLISHED_KS_ACCEPT,
            r.mean_p
        ),
    ))
}

/// `(α nominal, α effective, empirical, bound)` for L with λs = 5, λb = 1.
pub fn mse_curve(length: usize, alphas: &[f64], scale: &Scale) -> Result<Vec<MseRow>> {
    let params = ChannelParams::new(5.0, 1.0, CHIPS_PER_SYMBOL);
    alphas
        .iter()
        .map(|&a| {
            let seq = build_sandwich(&SequenceSpec::new(length, a, scale.seed))?;
            let emp = empirical_mse(&seq, &params, scale.trials, None, scale.seed, scale.exec)?;
            let ae = seq.alpha_effective();
            let bound = optimization_config(length).with_alpha(ae).mse_bound()?;
            Ok(MseRow {
                alpha: a,
                alpha_effective: ae,
                empirical: emp,
                bound,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseRow {
    pub alpha: f64,
    pub alpha_effective: f64,
    pub empirical: crate::montecarlo::MseEstimate,
    pub bound: f64,
}

fn tenths() -> Vec<f64> {
    (0..10).map(|i| i as f64 / 10.0).collect()
}

pub fn criterion4(scale: &Scale) -> Result<CriterionReport> {
    let rows = mse_curve(128, &tenths(), scale)?;
    let bad: Vec<String> = rows
        .iter()
        .filter(|r| r.empirical.mse > r.bound)
        .map(|r| format!("{}", r.alpha))
        .collect();
    let worst = rows
        .iter()
        .map(|r| r.empirical.mse / r.bound)
        .fold(0.0, f64::max);
    Ok(CriterionReport::new(
        4,
        "bound dominance",
        bad.is_empty(),
        format!(
            "{} of {} alphas violate; largest empirical/bound {:.3}{}",
            bad.len(),
            rows.len(),
            worst,
            if bad.is_empty() {
                String::new()
            } else {
                format!(" at {}", bad.join(","))
            }
        ),
    ))
}

pub fn criterion5(scale: &Scale) -> Result<CriterionReport> {
    let mut ok = true;
    let mut parts = Vec::new();
    for ((l, tuned, p0, pt), need) in PUBLISHED_MSE.into_iter().zip([2.0, 1.5]) {
        let rows = mse_curve(l, &[0.0, tuned], scale)?;
        let (e0, et) = (rows[0].empirical.mse, rows[1].empirical.mse);
        let ratio = e0 / et;
        let near = |x: f64, p: f64| x <= 3.0 * p && x >= p / 3.0;
        ok &= ratio >= need && near(e0, p0) && near(et, pt);
        parts.push(format!(
            "L={l}: e2(0) {e0:.4e} (published {p0:.4e}), e2({tuned}) {et:.4e} (published {pt:.4e}), ratio {ratio:.2} (need {need})"
        ));
    }
    Ok(CriterionReport::new(5, "accuracy improvement", ok, parts.join("; ")))
}

/// Largest relative gap between the two bound routes over random
/// parameters, and the number of points drawn.
pub fn route_regression(points: usize, seed: u64, exec: Exec) -> Result<(f64, usize)> {
    let n = CHIPS_PER_SYMBOL;
    let gaps = exec.map_indexed(points, |i| -> Result<f64> {
        let mut rng = crate::montecarlo::trial_rng(seed, i as u64);
        let l = 2 * rng.random_range(32..=256usize);
        let alpha = rng.random_range(0.0..=0.95);
        let lambda_s = rng.random_range(0.5..20.0);
        let lambda_b = rng.random_range(0.0..5.0);
        let cfg = BoundConfig::new(l, alpha, lambda_s, lambda_b, n);
        let model = cfg.model()?;
        let m_lim = model.side_peak_limit().floor() as i64;
        let k = rng.random_range(1..n as i64);
        let m = if m_lim >= 1 { rng.random_range(0..=m_lim) } else { 0 };
        let eps = rng.random_range(-cfg.half_chip()..=cfg.half_chip());
        let sign = if rng.random_bool(0.5) { 1 } else { -1 };
        let chips = sign * (2 * m * n as i64 + k);
        let (a, b) = crate::bounds::route_gap(&cfg, chips, eps)?;
        Ok(rel_gap(a, b))
    });
    let mut worst: f64 = 0.0;
    for g in gaps {
        worst = worst.max(g?);
    }
    Ok((worst, points))
}

fn rel_gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

pub fn criterion6(scale: &Scale) -> Result<CriterionReport> {
    let (worst, points) = route_regression(scale.sweep_points, scale.seed, scale.exec)?;
    Ok(CriterionReport::new(
        6,
        "bound route regression",
        worst <= 1e-9,
        format!("{points} points, worst relative gap {worst:.3e}"),
    ))
}

/// Exact examples and identities; returns the names of those that fail.
pub fn identity_failures() -> Result<Vec<&'static str>> {
    let mut fails = Vec::new();
    let mut check = |name: &'static str, ok: bool| {
        if !ok {
            fails.push(name);
        }
    };

    let s = build_sandwich(&SequenceSpec::new(8, 0.5, 3))?;
    check("sandwich L=8", s.middle_start() == 2 && s.symbols()[2..6] == [1, 0, 1, 0]);
    check("alpha_effective", alpha_effective(8, 0.5) == 0.5 && alpha_effective(4, 1.0) == 1.0);
    let s = build_sandwich(&SequenceSpec::new(4, 1.0, 3))?;
    check("all alternating", s.symbols() == [1, 0, 1, 0]);
    check("bipolar", bipolar(&s) == [1, -1, 1, -1]);
    check("dark mean", closed::mean_c00(128.0, 0.7, 0.0, 0.003) == 0.0);
    check("dark variance", closed::var_c00(128.0, 0.0, 0.0) == 0.0);
    check("var_c2mk at 2m=L", closed::var_c2mk(128.0, 64.0, 10.0, 1.0) == 0.0);

    let cfg = BoundConfig::new(128, 0.707, 10.0, 1.0, CHIPS_PER_SYMBOL);
    check("half offset bound", cfg.p_bar(1, 0.005)?.value == 0.5);
    let mut loose = optimization_config(128);
    loose.eta = 1.0;
    check("loose budget", find_alpha_threshold(&loose, 1e-3, Exec::Sequential)? == Some(0.999));
    let mut zero = optimization_config(128);
    zero.m_max = 0;
    check("m_max = 0 rejected", zero.validate().is_err());
    let g = golden_search(|x| Ok((x - 0.3) * (x - 0.3)), 0.0, 1.0, 1e-4)?;
    check("golden quadratic", (g.alpha - 0.3).abs() <= 1e-4);

    // Identities to 1e-12 over a small parameter grid.
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
    let mut cov_var = true;
    let mut cancel = true;
    let mut vanish = true;
    for &(l, ls, lb) in &[(64.0, 1.0, 0.5), (128.0, 10.0, 1.0), (256.0, 8.0, 2.0), (512.0, 5.0, 1.0)] {
        for &a in &[0.0, 0.25, 0.5, 0.75] {
            for &eps in &[-0.005, -0.001, 0.0, 0.002, 0.005] {
                cov_var &= close(closed::cov_c00_c0k(l, a, ls, lb, 0.0, 0.0), closed::var_c00(l, ls, lb));
                cancel &= close(closed::mean_c0k(l, a, ls, eps, eps), l * ls / 2.0);
                let m = a * l / 2.0;
                vanish &= close(closed::mean_c2mk(l, a, ls, m, eps, eps), 0.0);
            }
        }
        let model = MomentModel::new(l as usize, 0.5, ls, lb, CHIPS_PER_SYMBOL)?;
        for &eps in &[-0.005, 0.0, 0.004] {
            let c = model.conditional(0, eps, Default::default())?;
            cov_var &= c.cov_with_c00 == c.variance;
        }
    }
    check("cov at zero offset equals variance", cov_var);
    check("k/n = eps cancellation", cancel);
    check("2m = alpha L vanishing mean", vanish);
    Ok(fails)
}

/// Squared error at a very strong signal: `(bound, empirical, T_c²/12)`.
pub fn strong_signal(scale: &Scale) -> Result<(f64, f64, f64)> {
    let (l, a) = (GROUP1.0, GROUP1.1);
    let cfg = BoundConfig::new(l, a, 1e3, 1.0, CHIPS_PER_SYMBOL);
    let seq = build_sandwich(&SequenceSpec::new(l, a, scale.seed))?;
    let bound = cfg.with_alpha(seq.alpha_effective()).mse_bound()?;
    let params = ChannelParams::new(1e3, 1.0, CHIPS_PER_SYMBOL);
    let emp = empirical_mse(&seq, &params, scale.trials, None, scale.seed, scale.exec)?;
    let tc = 1.0 / CHIPS_PER_SYMBOL as f64;
    Ok((bound, emp.mse, tc * tc / 12.0))
}

pub fn criterion7(scale: &Scale) -> Result<CriterionReport> {
    let fails = identity_failures()?;
    let (bound, emp, target) = strong_signal(scale)?;
    let within = |x: f64| (x - target).abs() <= 0.1 * target;
    let ok = fails.is_empty() && within(bound) && within(emp);
    let detail = format!(
        "{} exact checks failed{}; at lambda_s=1e3 bound {:.4e}, empirical {:.4e}, Tc^2/12 {:.4e}",
        fails.len(),
        if fails.is_empty() {
            String::new()
        } else {
            format!(" ({})", fails.join(", "))
        },
        bound,
        emp,
        target
    );
    Ok(CriterionReport::new(7, "property suite", ok, detail))
}

/// CSV outputs of a small campaign slice, for determinism checks.
pub fn determinism_fingerprint(scale: &Scale) -> Result<Vec<String>> {
    let params = group_params(GROUP1);
    let seq = build_sandwich(&SequenceSpec::new(GROUP1.0, GROUP1.1, scale.seed))?;
    let offsets = offset_grid(CHIPS_PER_SYMBOL, 10, scale.grid_stride.max(1) * 5);
    let trials = scale.trials.min(500);
    let ens = run_ensemble(&seq, &params, &offsets, trials, scale.seed, scale.exec)?;
    let model = MomentModel::for_sequence(&seq, &params)?;
    let rule = EpsilonRule::gauss(params.half_chip(), 21);
    let rows = empirical_moments(&ens)
        .into_iter()
        .map(|e| {
            Ok(MomentRow {
                offset_chips: e.offset_chips,
                case: crate::moments::reduce(e.offset_chips, CHIPS_PER_SYMBOL).case,
                theory: Some(model.marginal(e.offset_chips, &rule)?),
                empirical: Some(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ks = ks_report(&ens, None, scale.exec)?;
    let sweep = optimization_config(128).sweep(&tenths(), scale.exec)?;
    let mse = mse_curve(128, &[0.0, 0.7], &Scale { trials, ..*scale })?
        .into_iter()
        .map(|r| (r.alpha, r.alpha_effective, r.empirical, r.bound))
        .collect::<Vec<_>>();
    Ok(vec![
        moments_csv(&rows, CHIPS_PER_SYMBOL),
        ks_csv(&ks, CHIPS_PER_SYMBOL),
        bounds_csv(&sweep),
        mse_csv(&mse),
    ])
}

/// Runs `f` on a dedicated pool of `threads` workers.
#[cfg(feature = "parallel")]
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<T: Send>(_threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    Ok(f())
}

pub fn criterion8(scale: &Scale) -> Result<CriterionReport> {
    let reference = with_threads(1, || determinism_fingerprint(scale))??;
    let mut ok = true;
    for threads in [2, 4] {
        let other = with_threads(threads, || determinism_fingerprint(scale))??;
        ok &= other == reference;
    }
    let seq = determinism_fingerprint(&Scale {
        exec: Exec::Sequential,
        ..*scale
    })?;
    ok &= seq == reference;
    let bytes: usize = reference.iter().map(String::len).sum();
    Ok(CriterionReport::new(
        8,
        "determinism",
        ok,
        format!("{} CSVs, {bytes} bytes, compared across 1/2/4 threads and sequential", reference.len()),
    ))
}

/// Runs one criterion by number.
pub fn run_criterion(id: u8, scale: &Scale) -> Result<CriterionReport> {
    scale.validate()?;
    match id {
        1 => criterion1(scale.exec),
        2 => criterion2(scale),
        3 => criterion3(scale),
        4 => criterion4(scale),
        5 => criterion5(scale),
        6 => criterion6(scale),
        7 => criterion7(scale),
        8 => criterion8(scale),
        _ => Err(Error::InvalidConfig(format!("no criterion {id}"))),
    }
}

pub fn run_all(scale: &Scale) -> Result<Vec<CriterionReport>> {
    (1..=8).map(|id| run_criterion(id, scale)).collect()
}
