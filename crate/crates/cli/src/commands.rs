use std::path::Path;

use anyhow::{Context, Result};
use uvsync::campaign::{run_criterion, Scale};
use uvsync::exec::Exec;
use uvsync::moments::{reduce, MomentModel};
use uvsync::montecarlo::{
    empirical_moments, empirical_mse, ks_report, pooled_moments, run_ensemble, run_sequence_averaged,
    KS_MIN_SAMPLES,
};
use uvsync::optimizer::optimize_alpha;
use uvsync::report::{
    bounds_csv, ks_csv, moments_csv, mse_csv, optimize_csv, p_bar_csv, trace_csv, verify_csv, MomentRow,
};
use uvsync::sequence::{build_sandwich, SequenceMetadata, SequenceSpec};
use uvsync::Error;

use crate::config::RunConfig;
use crate::{EXIT_INFEASIBLE, EXIT_VERIFY};

/// Errors caused by the configuration rather than the run.
pub fn is_validation(e: &Error) -> bool {
    !matches!(e, Error::NonFiniteObjective(_))
}

fn write(cfg: &RunConfig, name: &str, contents: &str) -> Result<()> {
    let path = cfg.out.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn echo_config(cfg: &RunConfig) -> Result<()> {
    let mut text = serde_json::to_string_pretty(cfg)?;
    text.push('\n');
    write(cfg, "config.json", &text)
}

fn announce(cfg: &RunConfig, names: &[&str]) {
    for n in names {
        println!("wrote {}", Path::new(&cfg.out).join(n).display());
    }
}

pub fn gen_seq(cfg: &RunConfig) -> Result<u8> {
    let spec = cfg.sequence_spec();
    let seq = build_sandwich(&spec)?;
    echo_config(cfg)?;
    write(cfg, "sequence.txt", &(seq.to_text() + "\n"))?;
    let meta = SequenceMetadata::new(&spec, &seq);
    write(cfg, "sequence.json", &(serde_json::to_string_pretty(&meta)? + "\n"))?;
    announce(cfg, &["sequence.txt", "sequence.json"]);
    Ok(0)
}

pub fn moments(cfg: &RunConfig) -> Result<u8> {
    let params = cfg.channel();
    let seq = build_sandwich(&cfg.sequence_spec())?;
    let model = MomentModel::for_sequence(&seq, &params)?;
    let rule = cfg.bound_config(seq.alpha_effective()).rule();
    let n = cfg.chips_per_symbol;
    let offsets = cfg.offsets();
    echo_config(cfg)?;
    let mut written = vec!["moments.csv"];

    let empirical = if cfg.empirical && !offsets.is_empty() {
        let trials = cfg.trials();
        if cfg.sequences() > 1 {
            let per_seq = (trials / cfg.sequences()).max(1);
            let runs = run_sequence_averaged(
                cfg.length,
                cfg.alpha,
                &params,
                &offsets,
                cfg.sequences(),
                per_seq,
                cfg.seed,
                Exec::Parallel,
            )?;
            Some(pooled_moments(&runs)?)
        } else {
            let ens = run_ensemble(&seq, &params, &offsets, trials, cfg.seed, Exec::Parallel)?;
            if trials >= KS_MIN_SAMPLES {
                let ks = ks_report(&ens, cfg.dither, Exec::Parallel)?;
                write(cfg, "ks.csv", &ks_csv(&ks, n))?;
                written.push("ks.csv");
                println!(
                    "KS: {}/{} accepted, mean p {:.4}",
                    ks.accepted,
                    ks.tests.len(),
                    ks.mean_p
                );
            }
            Some(empirical_moments(&ens))
        }
    } else {
        None
    };

    let rows = offsets
        .iter()
        .enumerate()
        .map(|(j, &o)| {
            let theory = match model.marginal(o, &rule) {
                Ok(m) => Some(m),
                Err(Error::Infeasible { .. }) => None,
                Err(e) => return Err(e),
            };
            Ok(MomentRow {
                offset_chips: o,
                case: reduce(o, n).case,
                theory,
                empirical: empirical.as_ref().map(|e| e[j]),
            })
        })
        .collect::<uvsync::Result<Vec<_>>>()?;
    write(cfg, "moments.csv", &moments_csv(&rows, n))?;
    announce(cfg, &written);
    Ok(0)
}

pub fn bounds(cfg: &RunConfig) -> Result<u8> {
    let alphas = cfg.alphas();
    let base = cfg.bound_config(cfg.alpha);
    base.validate()?;
    echo_config(cfg)?;
    let sweep = base.sweep(&alphas, Exec::Parallel)?;
    write(cfg, "bounds.csv", &bounds_csv(&sweep))?;
    let mut written = vec!["bounds.csv"];

    if cfg.per_offset {
        let n = cfg.chips_per_symbol;
        let rule = base.rule();
        let offsets = cfg.offsets();
        let rows = Exec::Parallel
            .map_slice(&offsets, |&o| -> uvsync::Result<_> {
                let mut p = 0.0;
                let mut infeasible = false;
                for (&e, &w) in rule.nodes.iter().zip(&rule.weights) {
                    let b = base.p_bar(o, e)?;
                    p += w * b.value;
                    infeasible |= b.infeasible;
                }
                Ok((o, reduce(o, n).case, p, infeasible))
            })
            .into_iter()
            .collect::<uvsync::Result<Vec<_>>>()?;
        write(cfg, "p_bar.csv", &p_bar_csv(&rows, n))?;
        written.push("p_bar.csv");
    }

    if cfg.empirical {
        let params = cfg.channel();
        // The bound here is taken at the realized α of the simulated sequence.
        let rows = alphas
            .iter()
            .map(|&a| -> uvsync::Result<_> {
                let seq = build_sandwich(&SequenceSpec::new(cfg.length, a, cfg.seed))?;
                let est = empirical_mse(&seq, &params, cfg.trials(), None, cfg.seed, Exec::Parallel)?;
                let bound = base.with_alpha(seq.alpha_effective()).mse_bound()?;
                Ok((a, seq.alpha_effective(), est, bound))
            })
            .collect::<uvsync::Result<Vec<_>>>()?;
        write(cfg, "mse.csv", &mse_csv(&rows))?;
        written.push("mse.csv");
    }
    announce(cfg, &written);
    Ok(0)
}

pub fn optimize(cfg: &RunConfig) -> Result<u8> {
    let bc = cfg.bound_config(cfg.alpha);
    let r = optimize_alpha(&bc, &cfg.optimizer())?;
    echo_config(cfg)?;
    write(cfg, "optimize.csv", &optimize_csv(cfg.length, &r))?;
    write(cfg, "trace.csv", &trace_csv(&r.trace))?;
    println!("L,alpha_unconstrained,alpha_threshold,alpha_chosen");
    println!(
        "{},{:.3},{:.3},{:.3}",
        cfg.length, r.alpha_unconstrained, r.alpha_threshold, r.alpha_star
    );
    announce(cfg, &["optimize.csv", "trace.csv"]);
    if r.threshold_found {
        Ok(0)
    } else {
        eprintln!("uvsync: no feasible alpha: the side-peak budget eta is exceeded for every alpha");
        Ok(EXIT_INFEASIBLE)
    }
}

pub fn verify(cfg: &RunConfig) -> Result<u8> {
    let scale = cfg.campaign_scale();
    scale.validate()?;
    echo_config(cfg)?;
    if scale.trials < Scale::paper().trials {
        println!(
            "note: {} trials; the Monte Carlo criteria (2-5) are specified at {}, verdicts here are indicative",
            scale.trials,
            Scale::paper().trials
        );
    }
    let mut reports = Vec::new();
    for id in 1..=8 {
        let r = run_criterion(id, &scale)?;
        println!("{}", r.line());
        reports.push(r);
    }
    write(cfg, "verify.csv", &verify_csv(&reports))?;
    announce(cfg, &["verify.csv"]);
    Ok(if reports.iter().all(|r| r.passed) { 0 } else { EXIT_VERIFY })
}
