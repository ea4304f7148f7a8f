//! One-axis parameter sweeps over a shared stream.

use std::str::FromStr;

use serde::Serialize;

use super::lifelong::run_with_router;
use super::router::build_router;
use super::stream::generate_stream;
use super::BenchConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// Refinement steps `M`.
    Steps,
    Gamma,
    Beta,
    Threshold,
    ParaphraseAngle,
}

impl SweepAxis {
    pub const NAMES: &'static str = "steps (M), gamma, beta, threshold (c), paraphrase-angle";

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Steps => "steps",
            SweepAxis::Gamma => "gamma",
            SweepAxis::Beta => "beta",
            SweepAxis::Threshold => "threshold",
            SweepAxis::ParaphraseAngle => "paraphrase-angle",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "M" | "m" | "steps" => SweepAxis::Steps,
            "gamma" => SweepAxis::Gamma,
            "beta" => SweepAxis::Beta,
            "c" | "threshold" => SweepAxis::Threshold,
            "paraphrase-angle" | "theta" => SweepAxis::ParaphraseAngle,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown sweep axis '{other}'; valid axes: {}",
                    SweepAxis::NAMES
                )))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub reliability: f64,
    pub generalization: f64,
    pub locality: f64,
    pub op: f64,
    pub codebook_size: usize,
    /// Mean distance the router moves a locality probe before matching.
    pub mean_unrelated_displacement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

fn apply(base: &BenchConfig, axis: SweepAxis, value: f64) -> Result<BenchConfig> {
    let mut cfg = base.clone();
    match axis {
        SweepAxis::Steps => {
            if value < 0.0 || value.fract() != 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "step counts must be non-negative integers, got {value}"
                )));
            }
            cfg.params.max_steps = value as usize;
        }
        SweepAxis::Gamma => cfg.params.gamma = value,
        SweepAxis::Beta => cfg.params.beta = value,
        SweepAxis::Threshold => cfg.params.threshold = value,
        SweepAxis::ParaphraseAngle => cfg.stream.paraphrase_angle = value,
    }
    cfg.params.validate()?;
    Ok(cfg)
}

/// Runs the lifelong loop once per value. The stream is shared across values
/// (regenerated from the same seed when the paraphrase angle is the axis).
pub fn sweep(base: &BenchConfig, axis: SweepAxis, values: &[f64]) -> Result<SweepReport> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one value".into()));
    }
    let shared = generate_stream(&base.stream)?;
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let cfg = apply(base, axis, value)?;
        let own;
        let stream = if axis == SweepAxis::ParaphraseAngle {
            own = generate_stream(&cfg.stream)?;
            &own
        } else {
            &shared
        };
        let mut router = build_router(cfg.router, cfg.stream.dim, cfg.params, cfg.adaptor)?;
        let report = run_with_router(router.as_mut(), stream, &cfg.adaptor, &cfg.checkpoints, None, |_, _| {})?;
        let evaluated = report.per_checkpoint.last().map_or(0, |m| m.edits);
        let mut displacement = 0.0;
        for s in &stream[..evaluated] {
            displacement += router.displacement(s.locality_query.as_slice())?;
        }
        rows.push(SweepRow {
            value,
            reliability: report.reliability,
            generalization: report.generalization,
            locality: report.locality,
            op: report.op,
            codebook_size: router.len(),
            mean_unrelated_displacement: displacement / evaluated.max(1) as f64,
        });
    }
    Ok(SweepReport { axis, rows })
}
