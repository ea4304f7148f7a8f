//! Sequential editing with Reliability / Generalization / Locality metrics.

use std::time::{Duration, Instant};

use serde::Serialize;

use super::router::{build_router, EditRouter, RouterKind};
use super::stream::EditSample;
use crate::adaptor::{evaluate_payload, AdaptorConfig};
use crate::codebook::EditOutcome;
use crate::error::{Error, Result};
use crate::hopfield::HopfieldParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheckpointMetrics {
    /// Edits applied so far; the evaluation set is exactly these edits.
    pub edits: usize,
    pub codebook_size: usize,
    pub parameter_count: usize,
    pub reliability: f64,
    pub generalization: f64,
    pub locality: f64,
    pub op: f64,
    pub inserted: usize,
    pub refined: usize,
    pub conflict_inserted: usize,
    pub adaptor_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub router: RouterKind,
    pub reliability: f64,
    pub generalization: f64,
    pub locality: f64,
    pub op: f64,
    pub per_checkpoint: Vec<CheckpointMetrics>,
    pub inserted: usize,
    pub refined: usize,
    pub conflict_inserted: usize,
    pub adaptor_failures: usize,
}

/// Geometric mean of the three metric axes.
pub fn overall(reliability: f64, generalization: f64, locality: f64) -> f64 {
    (reliability * generalization * locality).cbrt()
}

/// Scores the first `samples.len()` edits against the router's current state.
///
/// Reliability and Generalization require routing to an entry carrying the
/// edit's label whose payload is within `loss_threshold` of the edit's
/// target; Locality counts probes that match nothing.
pub fn evaluate(router: &dyn EditRouter, samples: &[EditSample], loss_threshold: f64) -> Result<(f64, f64, f64)> {
    if samples.is_empty() {
        return Ok((1.0, 1.0, 1.0));
    }
    let served = |queries: Vec<&[f64]>| -> Result<usize> {
        let hits = router.lookup_many(&queries)?;
        Ok(hits
            .iter()
            .zip(samples)
            .filter(|(hit, s)| match hit {
                Some(i) => {
                    router.label(*i) == &s.label
                        && evaluate_payload(router.payload(*i), &s.target) <= loss_threshold
                }
                None => false,
            })
            .count())
    };
    let n = samples.len() as f64;
    let rel = served(samples.iter().map(|s| s.edit_query.as_slice()).collect())? as f64 / n;
    let gen = served(samples.iter().map(|s| s.paraphrase_query.as_slice()).collect())? as f64 / n;
    let probes: Vec<&[f64]> = samples.iter().map(|s| s.locality_query.as_slice()).collect();
    let untouched = router.lookup_many(&probes)?.iter().filter(|h| h.is_none()).count();
    Ok((rel, gen, untouched as f64 / n))
}

pub(crate) fn check_checkpoints(checkpoints: &[usize], n: usize) -> Result<Vec<usize>> {
    if checkpoints.is_empty() {
        return Ok(vec![n]);
    }
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig(format!(
            "checkpoints must be strictly increasing: {checkpoints:?}"
        )));
    }
    if checkpoints[0] == 0 || *checkpoints.last().unwrap() > n {
        return Err(Error::InvalidConfig(format!(
            "checkpoints must lie in 1..={n}: {checkpoints:?}"
        )));
    }
    Ok(checkpoints.to_vec())
}

/// Applies the stream strictly in order and evaluates at each checkpoint.
pub fn run_lifelong(
    stream: &[EditSample],
    kind: RouterKind,
    params: &HopfieldParams,
    adaptor_cfg: &AdaptorConfig,
    checkpoints: &[usize],
) -> Result<MetricsReport> {
    let dim = stream
        .first()
        .map(|s| s.edit_query.dim())
        .ok_or_else(|| Error::InvalidConfig("empty stream".into()))?;
    let mut router = build_router(kind, dim, *params, *adaptor_cfg)?;
    run_with_router(router.as_mut(), stream, adaptor_cfg, checkpoints, None, |_, _| {})
}

/// Drives an existing router; `on_checkpoint` sees the metrics and the
/// router right after each evaluation.
pub(crate) fn run_with_router(
    router: &mut dyn EditRouter,
    stream: &[EditSample],
    adaptor_cfg: &AdaptorConfig,
    checkpoints: &[usize],
    time_limit: Option<Duration>,
    mut on_checkpoint: impl FnMut(&CheckpointMetrics, &dyn EditRouter),
) -> Result<MetricsReport> {
    let checkpoints = check_checkpoints(checkpoints, stream.len())?;
    let start = Instant::now();
    let mut counts = [0usize; 4];
    let mut per_checkpoint = Vec::with_capacity(checkpoints.len());
    let mut next = 0;
    for (t, sample) in stream.iter().enumerate().take(*checkpoints.last().unwrap()) {
        let step = router.apply_edit(sample.edit_query.as_slice(), &sample.target)?;
        match step.outcome {
            EditOutcome::Inserted { .. } => counts[0] += 1,
            EditOutcome::Refined { .. } => counts[1] += 1,
            EditOutcome::ConflictInserted { .. } => counts[2] += 1,
        }
        counts[3] += usize::from(step.adaptor_failed);
        if let Some(limit) = time_limit {
            if start.elapsed() > limit {
                return Err(Error::ResourceBudgetExceeded {
                    limit_secs: limit.as_secs_f64(),
                    edits: t + 1,
                });
            }
        }
        if t + 1 == checkpoints[next] {
            let (r, g, l) = evaluate(&*router, &stream[..=t], adaptor_cfg.loss_threshold)?;
            let m = CheckpointMetrics {
                edits: t + 1,
                codebook_size: router.len(),
                parameter_count: router.parameter_count(),
                reliability: r,
                generalization: g,
                locality: l,
                op: overall(r, g, l),
                inserted: counts[0],
                refined: counts[1],
                conflict_inserted: counts[2],
                adaptor_failures: counts[3],
            };
            on_checkpoint(&m, &*router);
            per_checkpoint.push(m);
            next += 1;
        }
    }
    let last = *per_checkpoint.last().expect("at least one checkpoint");
    Ok(MetricsReport {
        router: router.kind(),
        reliability: last.reliability,
        generalization: last.generalization,
        locality: last.locality,
        op: last.op,
        per_checkpoint,
        inserted: counts[0],
        refined: counts[1],
        conflict_inserted: counts[2],
        adaptor_failures: counts[3],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::stream::{generate_stream, StreamConfig};

    fn run(kind: RouterKind, cfg: &StreamConfig, checkpoints: &[usize]) -> MetricsReport {
        let s = generate_stream(cfg).unwrap();
        run_lifelong(&s, kind, &HopfieldParams::default(), &AdaptorConfig::default(), checkpoints).unwrap()
    }

    #[test]
    fn single_exact_edit() {
        let cfg = StreamConfig { n_edits: 1, dim: 64, paraphrase_angle: 0.0, seed: 5, ..Default::default() };
        let r = run(RouterKind::Horen, &cfg, &[]);
        assert_eq!((r.reliability, r.generalization, r.locality), (1.0, 1.0, 1.0));
        assert_eq!(r.inserted, 1);
    }

    #[test]
    fn op_is_geometric_mean() {
        let cfg = StreamConfig { n_edits: 200, dim: 16, paraphrase_angle: 0.6, seed: 2, hard_locality: true, ..Default::default() };
        let r = run(RouterKind::Horen, &cfg, &[50, 100, 200]);
        assert_eq!(r.per_checkpoint.len(), 3);
        for m in &r.per_checkpoint {
            for x in [m.reliability, m.generalization, m.locality, m.op] {
                assert!((0.0..=1.0).contains(&x));
            }
            assert!((m.op - (m.reliability * m.generalization * m.locality).powf(1.0 / 3.0)).abs() <= 1e-9);
        }
    }

    #[test]
    fn zero_angle_gives_equal_reliability_and_generalization() {
        let cfg = StreamConfig { n_edits: 300, dim: 8, paraphrase_angle: 0.0, seed: 4, ..Default::default() };
        for kind in RouterKind::ALL {
            let r = run(kind, &cfg, &[]);
            assert_eq!(r.reliability, r.generalization, "{kind}");
        }
    }

    #[test]
    fn seeded_runs_repeat_exactly() {
        let cfg = StreamConfig { n_edits: 150, dim: 16, seed: 8, magnitude_jitter: 1.0, conflict_fraction: 0.1, reassert_fraction: 0.1, ..Default::default() };
        for kind in RouterKind::ALL {
            assert_eq!(run(kind, &cfg, &[75, 150]), run(kind, &cfg, &[75, 150]));
        }
    }

    #[test]
    fn checkpoint_evaluation_is_a_prefix() {
        let cfg = StreamConfig { n_edits: 120, dim: 16, seed: 12, ..Default::default() };
        let a = run(RouterKind::Horen, &cfg, &[60, 120]);
        let b = run(RouterKind::Horen, &cfg, &[60]);
        assert_eq!(a.per_checkpoint[0], b.per_checkpoint[0]);
    }

    #[test]
    fn replays_exercise_all_outcomes() {
        let cfg = StreamConfig { n_edits: 400, dim: 32, seed: 3, reassert_fraction: 0.2, conflict_fraction: 0.1, ..Default::default() };
        let r = run(RouterKind::Horen, &cfg, &[]);
        assert!(r.inserted > 0 && r.refined > 0 && r.conflict_inserted > 0, "{r:?}");
        assert_eq!(r.inserted + r.refined + r.conflict_inserted, 400);
        assert_eq!(r.per_checkpoint[0].codebook_size, r.inserted + r.conflict_inserted);
    }

    #[test]
    fn normalized_verdicts_ignore_jitter() {
        let base = StreamConfig { n_edits: 300, dim: 16, seed: 6, paraphrase_angle: 0.5, ..Default::default() };
        let jittered = StreamConfig { magnitude_jitter: 3.0, ..base.clone() };
        // Same directions: the stream draws gains from the same RNG positions.
        let a = run(RouterKind::Horen, &base, &[]);
        let b = run(RouterKind::Horen, &jittered, &[]);
        assert_eq!(a, b);
        let a = run(RouterKind::Euclidean, &base, &[]);
        let b = run(RouterKind::Euclidean, &jittered, &[]);
        assert_ne!(a.generalization, b.generalization);
    }

    #[test]
    fn bad_checkpoints_rejected() {
        let s = generate_stream(&StreamConfig { n_edits: 10, dim: 4, ..Default::default() }).unwrap();
        let p = HopfieldParams::default();
        let a = AdaptorConfig::default();
        for cps in [vec![5, 5], vec![6, 3], vec![0], vec![11]] {
            assert!(run_lifelong(&s, RouterKind::Horen, &p, &a, &cps).is_err());
        }
    }
}
