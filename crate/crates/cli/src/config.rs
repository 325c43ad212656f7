//! Run configuration: a JSON document with every field optional, overridden
//! by command-line flags and echoed into the output directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uvsync::bounds::{BoundConfig, QuadratureKind};
use uvsync::campaign::Scale;
use uvsync::channel::{ChannelParams, DEFAULT_GUARD};
use uvsync::exec::Exec;
use uvsync::moments::Feasibility;
use uvsync::optimizer::OptimizerConfig;
use uvsync::sequence::SequenceSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ScaleName {
    Smoke,
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub length: usize,
    pub alpha: f64,
    pub lambda_s: f64,
    pub lambda_b: f64,
    pub chips_per_symbol: usize,
    pub guard_symbols: usize,
    pub seed: u64,

    pub m_max: usize,
    pub eta: f64,
    pub quadrature_nodes: usize,
    pub quadrature: QuadratureKind,
    pub feasibility: Feasibility,

    pub h: f64,
    pub prescan: usize,
    pub quantize: bool,

    /// Unset fields take the value of `scale`.
    pub scale: ScaleName,
    pub trials: Option<usize>,
    pub grid_stride: Option<usize>,
    /// Sequences for empirical moments; 1 keeps the sequence fixed.
    pub sequences: Option<usize>,
    pub sweep_points: Option<usize>,
    /// Grid half-width in symbols.
    pub grid_span: usize,
    /// Explicit chip offsets; replaces the grid when present.
    pub offsets: Option<Vec<i64>>,

    /// α values for `bounds`; defaults to `alpha` alone.
    pub alphas: Option<Vec<f64>>,
    /// Add Monte Carlo columns to `moments` and `bounds`.
    pub empirical: bool,
    /// Per-offset bound table in `bounds`.
    pub per_offset: bool,
    /// Seed for uniform dither before the KS test; off when unset.
    pub dither: Option<u64>,

    pub out: PathBuf,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            length: 128,
            alpha: 0.707,
            lambda_s: 10.0,
            lambda_b: 1.0,
            chips_per_symbol: 100,
            guard_symbols: DEFAULT_GUARD,
            seed: 1,
            m_max: 10,
            eta: 1e-8,
            quadrature_nodes: 21,
            quadrature: QuadratureKind::Gauss,
            feasibility: Feasibility::Extrapolate,
            h: 1e-3,
            prescan: 25,
            quantize: false,
            scale: ScaleName::Paper,
            trials: None,
            grid_stride: None,
            sequences: None,
            sweep_points: None,
            grid_span: 10,
            offsets: None,
            alphas: None,
            empirical: false,
            per_offset: false,
            dither: None,
            out: PathBuf::from("out"),
            threads: None,
        }
    }
}

/// Flag values that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub grid_stride: Option<usize>,
    pub scale: Option<ScaleName>,
}

/// Failure to produce a usable configuration.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ConfigError(format!("bad config {}: {e}", path.display())))
    }

    /// Applies flags, then fills scale-dependent fields.
    pub fn resolve(mut self, o: &Overrides) -> Self {
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        if o.threads.is_some() {
            self.threads = o.threads;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.scale {
            self.scale = v;
        }
        if o.trials.is_some() {
            self.trials = o.trials;
        }
        if o.grid_stride.is_some() {
            self.grid_stride = o.grid_stride;
        }
        let preset = self.preset();
        self.trials.get_or_insert(preset.trials);
        self.grid_stride.get_or_insert(preset.grid_stride);
        self.sequences.get_or_insert(1);
        self.sweep_points.get_or_insert(preset.sweep_points);
        self
    }

    fn preset(&self) -> Scale {
        match self.scale {
            ScaleName::Smoke => Scale::smoke(),
            ScaleName::Paper => Scale::paper(),
        }
    }

    pub fn trials(&self) -> usize {
        self.trials.unwrap_or(self.preset().trials)
    }

    pub fn grid_stride(&self) -> usize {
        self.grid_stride.unwrap_or(self.preset().grid_stride)
    }

    pub fn sequences(&self) -> usize {
        self.sequences.unwrap_or(1)
    }

    /// Campaign scale for `verify`. The moment comparison always averages
    /// over the preset's number of sequences.
    pub fn campaign_scale(&self) -> Scale {
        let p = self.preset();
        Scale {
            trials: self.trials(),
            grid_stride: self.grid_stride(),
            sequences: p.sequences,
            sweep_points: self.sweep_points.unwrap_or(p.sweep_points),
            seed: self.seed,
            exec: Exec::Parallel,
        }
    }

    pub fn sequence_spec(&self) -> SequenceSpec {
        SequenceSpec::new(self.length, self.alpha, self.seed)
    }

    pub fn channel(&self) -> ChannelParams {
        ChannelParams::new(self.lambda_s, self.lambda_b, self.chips_per_symbol).with_guard(self.guard_symbols)
    }

    pub fn bound_config(&self, alpha: f64) -> BoundConfig {
        BoundConfig {
            m_max: self.m_max,
            eta: self.eta,
            quadrature_nodes: self.quadrature_nodes,
            quadrature: self.quadrature,
            feasibility: self.feasibility,
            ..BoundConfig::new(self.length, alpha, self.lambda_s, self.lambda_b, self.chips_per_symbol)
        }
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            h: self.h,
            prescan: self.prescan,
            quantize: self.quantize,
            exec: Exec::Parallel,
        }
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.alphas.clone().unwrap_or_else(|| vec![self.alpha])
    }

    pub fn offsets(&self) -> Vec<i64> {
        self.offsets.clone().unwrap_or_else(|| {
            uvsync::montecarlo::offset_grid(self.chips_per_symbol, self.grid_span, self.grid_stride())
        })
    }

    /// Checks every field and lists all offending ones.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut bad: Vec<String> = Vec::new();
        let mut need = |ok: bool, field: &str, rule: &str| {
            if !ok {
                bad.push(format!("{field} ({rule})"));
            }
        };
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        need(self.length >= 2 && self.length.is_multiple_of(2), "length", "even, >= 2");
        need(unit(self.alpha), "alpha", "in [0, 1]");
        need(self.lambda_s.is_finite() && self.lambda_s >= 0.0, "lambda_s", "finite, >= 0");
        need(self.lambda_b.is_finite() && self.lambda_b >= 0.0, "lambda_b", "finite, >= 0");
        need(self.chips_per_symbol >= 1, "chips_per_symbol", ">= 1");
        need(self.m_max >= 1, "m_max", ">= 1");
        need(self.eta > 0.0 && self.eta <= 1.0, "eta", "in (0, 1]");
        need(self.quadrature_nodes >= 1, "quadrature_nodes", ">= 1");
        need(self.h > 0.0 && self.h < 1.0, "h", "in (0, 1)");
        need(self.trials() >= 1, "trials", ">= 1");
        need(self.grid_stride() >= 1, "grid_stride", ">= 1");
        need(self.sequences() >= 1, "sequences", ">= 1");
        need(self.sweep_points.is_none_or(|v| v >= 1), "sweep_points", ">= 1");
        need(self.threads.is_none_or(|t| t >= 1), "threads", ">= 1");
        need(self.grid_span <= self.guard_symbols, "grid_span", "<= guard_symbols");
        let guard = (self.guard_symbols * self.chips_per_symbol) as i64;
        need(
            self.offsets.as_ref().is_none_or(|o| o.iter().all(|x| x.abs() <= guard)),
            "offsets",
            "within the guard interval",
        );
        need(
            self.alphas.as_ref().is_none_or(|a| a.iter().all(|&x| unit(x))),
            "alphas",
            "each in [0, 1]",
        );
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ConfigError(format!("invalid config: {}", bad.join(", "))))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_and_scale_fills_gaps() {
        let c: RunConfig = serde_json::from_str(r#"{"trials": 77, "seed": 3}"#).unwrap();
        let c = c.resolve(&Overrides {
            seed: Some(9),
            scale: Some(ScaleName::Smoke),
            ..Default::default()
        });
        assert_eq!((c.trials, c.seed), (Some(77), 9));
        assert_eq!(c.grid_stride, Some(Scale::smoke().grid_stride));
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"lenght": 64}"#).is_err());
    }

    #[test]
    fn validation_lists_every_bad_field() {
        let c = RunConfig {
            alpha: 1.5,
            length: 7,
            eta: 0.0,
            ..Default::default()
        };
        let msg = c.validate().unwrap_err().0;
        for f in ["length", "alpha", "eta"] {
            assert!(msg.contains(f), "{msg}");
        }
    }
}
