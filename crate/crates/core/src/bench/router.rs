//! Routers compared by the benchmark.
//!
//! `Horen` and `CosineOnly` both sit on the normalized [`Codebook`]; the
//! latter simply skips refinement. The two baselines keep raw, unnormalized
//! keys: `Euclidean` matches by distance inside a fixed radius, and
//! `HopfieldUnnormalized` runs the same damped refinement as `Horen` with
//! every normalization removed and matches on raw inner products.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptor::{train_payload, AdaptorConfig, EditTarget, EntryLabel, Payload};
use crate::codebook::{best_of, Codebook, CodebookEntry, EditOutcome};
use crate::error::{Error, Result};
use crate::geometry::{distance_unchecked, normalize, KeyMatrix, UnitVector};
use crate::hopfield::{refine_loop, HopfieldParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum RouterKind {
    Horen,
    CosineOnly,
    Euclidean,
    HopfieldUnnormalized,
}

impl RouterKind {
    pub const ALL: [RouterKind; 4] = [
        RouterKind::Horen,
        RouterKind::CosineOnly,
        RouterKind::Euclidean,
        RouterKind::HopfieldUnnormalized,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            RouterKind::Horen => "horen",
            RouterKind::CosineOnly => "cosine-only",
            RouterKind::Euclidean => "euclidean",
            RouterKind::HopfieldUnnormalized => "hopfield-unnormalized",
        }
    }
}

impl std::fmt::Display for RouterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Outcome of one edit as seen by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EditStep {
    pub outcome: EditOutcome,
    pub adaptor_failed: bool,
}

/// A lifelong-editing memory: applies edits and answers lookups.
pub trait EditRouter: Send + Sync {
    fn kind(&self) -> RouterKind;

    fn as_any(&self) -> &dyn std::any::Any;

    fn apply_edit(&mut self, raw_query: &[f64], target: &EditTarget) -> Result<EditStep>;

    /// Index of the matched entry for each raw query, `None` on no-match.
    fn lookup_many(&self, raw_queries: &[&[f64]]) -> Result<Vec<Option<usize>>>;

    fn label(&self, i: usize) -> &EntryLabel;

    fn payload(&self, i: usize) -> &Payload;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stored floats (keys plus payloads).
    fn parameter_count(&self) -> usize;

    /// How far routing moves the query before matching, measured on the
    /// unit sphere for normalized routers and relative to `‖x‖` otherwise.
    fn displacement(&self, raw_query: &[f64]) -> Result<f64>;
}

pub fn build_router(
    kind: RouterKind,
    dim: usize,
    params: HopfieldParams,
    adaptor: AdaptorConfig,
) -> Result<Box<dyn EditRouter>> {
    params.validate()?;
    adaptor.validate()?;
    Ok(match kind {
        RouterKind::Horen => Box::new(NormalizedRouter::new(dim, params, adaptor)),
        RouterKind::CosineOnly => Box::new(NormalizedRouter::cosine_only(dim, params, adaptor)),
        RouterKind::Euclidean | RouterKind::HopfieldUnnormalized => {
            Box::new(RawRouter::new(kind, dim, params, adaptor))
        }
    })
}

/// Router over the normalized codebook.
#[derive(Debug, Clone)]
pub struct NormalizedRouter {
    book: Codebook,
    params: HopfieldParams,
    adaptor: AdaptorConfig,
    kind: RouterKind,
}

impl NormalizedRouter {
    pub fn new(dim: usize, params: HopfieldParams, adaptor: AdaptorConfig) -> Self {
        NormalizedRouter {
            book: Codebook::new(dim),
            params,
            adaptor,
            kind: RouterKind::Horen,
        }
    }

    pub fn cosine_only(dim: usize, params: HopfieldParams, adaptor: AdaptorConfig) -> Self {
        NormalizedRouter {
            book: Codebook::new(dim),
            params: HopfieldParams { max_steps: 0, ..params },
            adaptor,
            kind: RouterKind::CosineOnly,
        }
    }

    pub fn book(&self) -> &Codebook {
        &self.book
    }

    pub fn params(&self) -> &HopfieldParams {
        &self.params
    }
}

impl EditRouter for NormalizedRouter {
    fn kind(&self) -> RouterKind {
        self.kind
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }

    fn apply_edit(&mut self, raw_query: &[f64], target: &EditTarget) -> Result<EditStep> {
        let r = self.book.apply_edit(raw_query, target, &self.params, &self.adaptor)?;
        Ok(EditStep {
            outcome: r.outcome,
            adaptor_failed: r.adaptor_failed,
        })
    }

    fn lookup_many(&self, raw_queries: &[&[f64]]) -> Result<Vec<Option<usize>>> {
        let units: Vec<UnitVector> = raw_queries
            .iter()
            .map(|x| normalize(x))
            .collect::<Result<_>>()?;
        let chunks: Vec<Vec<Option<usize>>> = units
            .par_chunks(256)
            .map(|chunk| {
                self.book.route_batch(chunk, &self.params).map(|vs| {
                    vs.into_iter()
                        .map(|v| v.best_index.filter(|_| v.matched))
                        .collect()
                })
            })
            .collect::<Result<_>>()?;
        Ok(chunks.into_iter().flatten().collect())
    }

    fn label(&self, i: usize) -> &EntryLabel {
        &self.book.entry(i).label
    }

    fn payload(&self, i: usize) -> &Payload {
        &self.book.entry(i).payload
    }

    fn len(&self) -> usize {
        self.book.len()
    }

    fn parameter_count(&self) -> usize {
        self.book.parameter_count()
    }

    fn displacement(&self, raw_query: &[f64]) -> Result<f64> {
        let q0 = normalize(raw_query)?;
        let d = self.book.route_normalized(&q0, &self.params)?;
        Ok(distance_unchecked(d.refined_query.as_slice(), q0.as_slice()))
    }
}

/// Router over raw (unnormalized) keys, for the ablation baselines.
#[derive(Debug, Clone)]
pub struct RawRouter {
    kind: RouterKind,
    keys: KeyMatrix,
    entries: Vec<CodebookEntry>,
    params: HopfieldParams,
    adaptor: AdaptorConfig,
    edits_applied: u64,
}

impl RawRouter {
    /// `kind` must be one of the two raw-key baselines.
    pub fn new(kind: RouterKind, dim: usize, params: HopfieldParams, adaptor: AdaptorConfig) -> Self {
        assert!(
            matches!(kind, RouterKind::Euclidean | RouterKind::HopfieldUnnormalized),
            "{kind} is not a raw-key router"
        );
        RawRouter {
            kind,
            keys: KeyMatrix::new(dim),
            entries: Vec::new(),
            params,
            adaptor,
            edits_applied: 0,
        }
    }

    /// Distance radius equivalent to the cosine threshold on the unit
    /// sphere: `‖a − b‖ < √(2(1 − c))` iff `a·b > c` for unit `a`, `b`.
    pub fn radius(&self) -> f64 {
        (2.0 * (1.0 - self.params.threshold)).max(0.0).sqrt()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        self.keys.check_query(x)?;
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(())
    }

    /// Matched index and the query after refinement.
    fn route(&self, x: &[f64]) -> Result<(Option<usize>, Vec<f64>)> {
        self.check(x)?;
        if self.entries.is_empty() {
            return Ok((None, x.to_vec()));
        }
        match self.kind {
            RouterKind::Euclidean => {
                let dist: Vec<f64> = self.keys.iter_rows().map(|k| distance_unchecked(k, x)).collect();
                let neg: Vec<f64> = dist.iter().map(|d| -d).collect();
                let (i, nd) = best_of(&neg).expect("non-empty");
                Ok(((-nd < self.radius()).then_some(i), x.to_vec()))
            }
            _ => {
                let r = refine_loop(x, &self.keys, &self.params, false, None);
                let (i, s) = best_of(&r.scores).expect("non-empty");
                Ok(((s > self.params.threshold).then_some(i), r.query))
            }
        }
    }
}

impl EditRouter for RawRouter {
    fn kind(&self) -> RouterKind {
        self.kind
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }

    fn apply_edit(&mut self, raw_query: &[f64], target: &EditTarget) -> Result<EditStep> {
        let (matched, _) = self.route(raw_query)?;
        let t = self.edits_applied;
        self.edits_applied += 1;
        let train = |init: &Payload| match train_payload(init, target, &self.adaptor) {
            Ok(p) => Ok((p, false)),
            Err(Error::NonFiniteLoss { .. }) => Ok((Payload { trained: false, ..init.clone() }, true)),
            Err(e) => Err(e),
        };
        match matched {
            Some(i) if self.entries[i].label == target.label => {
                let (p, failed) = train(&self.entries[i].payload)?;
                self.entries[i].payload = p;
                Ok(EditStep {
                    outcome: EditOutcome::Refined { index: i },
                    adaptor_failed: failed,
                })
            }
            other => {
                let (p, failed) = train(&Payload::zeros(self.keys.dim()))?;
                self.keys.push(raw_query)?;
                self.entries.push(CodebookEntry {
                    payload: p,
                    label: target.label.clone(),
                    created_at: t,
                });
                let index = self.entries.len() - 1;
                let outcome = match other {
                    Some(contested) => EditOutcome::ConflictInserted { index, contested },
                    None => EditOutcome::Inserted { index },
                };
                Ok(EditStep {
                    outcome,
                    adaptor_failed: failed,
                })
            }
        }
    }

    fn lookup_many(&self, raw_queries: &[&[f64]]) -> Result<Vec<Option<usize>>> {
        raw_queries
            .par_iter()
            .map(|x| self.route(x).map(|(m, _)| m))
            .collect()
    }

    fn label(&self, i: usize) -> &EntryLabel {
        &self.entries[i].label
    }

    fn payload(&self, i: usize) -> &Payload {
        &self.entries[i].payload
    }

    fn len(&self) -> usize {
        self.entries.len()
    }

    fn parameter_count(&self) -> usize {
        self.entries.len() * 2 * self.keys.dim()
    }

    fn displacement(&self, raw_query: &[f64]) -> Result<f64> {
        let (_, q) = self.route(raw_query)?;
        let n = crate::geometry::norm(raw_query);
        if n < crate::geometry::ZERO_NORM_FLOOR {
            return Err(Error::ZeroNorm { norm: n });
        }
        Ok(distance_unchecked(&q, raw_query) / n)
    }
}
