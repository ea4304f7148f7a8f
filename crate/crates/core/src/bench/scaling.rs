//! Long-stream stress run: metrics, memory and match latency as the
//! codebook grows.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lifelong::{check_checkpoints, run_with_router, CheckpointMetrics};
use super::router::NormalizedRouter;
use super::stream::{generate_stream, StreamConfig};
use crate::adaptor::AdaptorConfig;
use crate::codebook::Codebook;
use crate::error::Result;
use crate::geometry::UnitVector;
use crate::hopfield::HopfieldParams;
use crate::sampling::random_unit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalingConfig {
    pub stream: StreamConfig,
    pub params: HopfieldParams,
    pub adaptor: AdaptorConfig,
    pub checkpoints: Vec<usize>,
    pub time_limit_secs: f64,
    /// Queries per timing round in the latency measurement.
    pub latency_queries: usize,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            stream: StreamConfig {
                n_edits: 50_000,
                dim: 64,
                paraphrase_angle: 0.15,
                seed: 2024,
                ..Default::default()
            },
            params: HopfieldParams::default(),
            adaptor: AdaptorConfig::default(),
            checkpoints: vec![1_000, 10_000, 20_000, 50_000],
            time_limit_secs: 30.0 * 60.0,
            latency_queries: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingCheckpoint {
    pub metrics: CheckpointMetrics,
    /// Wall time since the start of the run, including evaluation.
    pub elapsed_secs: f64,
    /// Median per-query time of a bare match over the whole codebook.
    pub match_latency_secs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Largest `|y − ŷ| / ŷ` over the fitted points.
    pub max_relative_deviation: f64,
}

/// Ordinary least squares of `ys` on `xs`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let max_relative_deviation = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let fit = slope * x + intercept;
            if fit.abs() > 0.0 {
                ((y - fit) / fit).abs()
            } else {
                (y - fit).abs()
            }
        })
        .fold(0.0, f64::max);
    LinearFit {
        slope,
        intercept,
        r_squared,
        max_relative_deviation,
    }
}

/// Median over `rounds` of the mean per-query time of `match_query`.
pub fn match_latency(book: &Codebook, queries: &[UnitVector], threshold: f64, rounds: usize) -> Result<f64> {
    let mut samples = Vec::with_capacity(rounds);
    let mut sink = 0usize;
    for _ in 0..rounds.max(1) {
        let start = Instant::now();
        for q in queries {
            let d = book.match_query(q, threshold)?;
            sink = sink.wrapping_add(d.best_index.unwrap_or(0));
        }
        samples.push(start.elapsed().as_secs_f64() / queries.len().max(1) as f64);
    }
    std::hint::black_box(sink);
    samples.sort_by(f64::total_cmp);
    Ok(samples[samples.len() / 2])
}

/// Per-query match times of two codebooks, measured in alternating rounds
/// after one warm-up round each. Returns the medians and the median of the
/// per-round ratios `a / b`.
pub fn paired_latency(
    a: &Codebook,
    b: &Codebook,
    queries: &[UnitVector],
    threshold: f64,
    rounds: usize,
) -> Result<(f64, f64, f64)> {
    match_latency(a, queries, threshold, 1)?;
    match_latency(b, queries, threshold, 1)?;
    let (mut ta, mut tb, mut ratios) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..rounds.max(1) {
        let y = match_latency(b, queries, threshold, 1)?;
        let x = match_latency(a, queries, threshold, 1)?;
        ta.push(x);
        tb.push(y);
        ratios.push(x / y);
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    Ok((median(&mut ta), median(&mut tb), median(&mut ratios)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub checkpoints: Vec<ScalingCheckpoint>,
    /// Parameter count against codebook size over the checkpoints.
    pub memory_fit: LinearFit,
    /// Per-query match time on the final codebook and on its first half.
    pub latency_full_secs: f64,
    pub latency_half_secs: f64,
    /// Median of the per-round ratios, full over half.
    pub latency_ratio: f64,
    pub total_secs: f64,
}

/// Allowed deviation of parameter counts from their linear fit.
pub const MEMORY_TOLERANCE: f64 = 0.05;
/// Accepted range of match time at `C` over match time at `C/2`.
pub const LATENCY_RATIO_RANGE: (f64, f64) = (1.7, 2.3);

impl ScalingReport {
    pub fn memory_is_linear(&self) -> bool {
        self.memory_fit.max_relative_deviation <= MEMORY_TOLERANCE
    }

    pub fn latency_is_linear(&self) -> bool {
        (LATENCY_RATIO_RANGE.0..=LATENCY_RATIO_RANGE.1).contains(&self.latency_ratio)
    }
}

pub fn scaling_stress(cfg: &ScalingConfig) -> Result<ScalingReport> {
    let checkpoints = check_checkpoints(&cfg.checkpoints, cfg.stream.n_edits)?;
    let start = Instant::now();
    let stream = generate_stream(&cfg.stream)?;
    let mut router = NormalizedRouter::new(cfg.stream.dim, cfg.params, cfg.adaptor);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.stream.seed ^ 0x5eed);
    let probes: Vec<UnitVector> = (0..cfg.latency_queries.max(1))
        .map(|_| random_unit(&mut rng, cfg.stream.dim))
        .collect();

    let mut points = Vec::with_capacity(checkpoints.len());
    let mut latency_error = None;
    let threshold = cfg.params.threshold;
    run_with_router(
        &mut router,
        &stream,
        &cfg.adaptor,
        &checkpoints,
        Some(Duration::from_secs_f64(cfg.time_limit_secs)),
        |m, r| {
            let any: &dyn std::any::Any = r.as_any();
            let book = any
                .downcast_ref::<NormalizedRouter>()
                .expect("stress run uses the normalized router")
                .book();
            let latency = match match_latency(book, &probes, threshold, 5) {
                Ok(l) => l,
                Err(e) => {
                    latency_error.get_or_insert(e);
                    f64::NAN
                }
            };
            points.push(ScalingCheckpoint {
                metrics: *m,
                elapsed_secs: start.elapsed().as_secs_f64(),
                match_latency_secs: latency,
            });
        },
    )?;
    if let Some(e) = latency_error {
        return Err(e);
    }

    let xs: Vec<f64> = points.iter().map(|p| p.metrics.codebook_size as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.metrics.parameter_count as f64).collect();
    let memory_fit = linear_fit(&xs, &ys);

    let book = router.book();
    let half = book.prefix(book.len() / 2);
    let (latency_full_secs, latency_half_secs, latency_ratio) = paired_latency(book, &half, &probes, threshold, 15)?;
    Ok(ScalingReport {
        checkpoints: points,
        memory_fit,
        latency_full_secs,
        latency_half_secs,
        latency_ratio,
        total_secs: start.elapsed().as_secs_f64(),
    })
}
