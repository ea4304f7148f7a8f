//! Key–value–label store with cosine-threshold matching.
//!
//! Keys are unit vectors and never change once stored. Routing normalizes
//! the raw query, refines it with the damped Hopfield step, then takes the
//! best-scoring key; an edit stores the *unrefined* normalized query as its
//! key, so the refinement never feeds back into the stored geometry.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::adaptor::{train_payload, AdaptorConfig, EditTarget, EntryLabel, Payload};
use crate::error::{Error, Result};
use crate::geometry::{
    distance_unchecked, norm, normalize, softmax_into, KeyMatrix, UnitVector, Vector, ZERO_NORM_FLOOR,
};
use crate::hopfield::{refine_loop, HopfieldParams};

#[derive(Debug, Clone, PartialEq)]
pub struct CodebookEntry {
    pub payload: Payload,
    pub label: EntryLabel,
    /// Index of the edit that created the entry.
    pub created_at: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    keys: KeyMatrix,
    entries: Vec<CodebookEntry>,
    edits_applied: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutingDecision {
    /// Query after refinement (equal to the normalized input when nothing was refined).
    pub refined_query: UnitVector,
    /// `a = qKᵀ` for the refined query.
    pub scores: Vec<f64>,
    /// Lowest index attaining the maximum score.
    pub best_index: Option<usize>,
    /// Maximum score, or `-inf` on an empty codebook.
    pub best_score: f64,
    pub matched: bool,
    pub hopfield_steps_taken: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EditOutcome {
    /// No stored basin accepted the query; a fresh entry was added.
    Inserted { index: usize },
    /// The matched entry carries the same label; its payload was fine-tuned.
    Refined { index: usize },
    /// The matched entry carries a different label; a new entry was added
    /// alongside it.
    ConflictInserted { index: usize, contested: usize },
}

impl EditOutcome {
    pub fn index(&self) -> usize {
        match *self {
            EditOutcome::Inserted { index }
            | EditOutcome::Refined { index }
            | EditOutcome::ConflictInserted { index, .. } => index,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditReport {
    pub outcome: EditOutcome,
    pub decision: RoutingDecision,
    pub payload_trained: bool,
    /// Payload training hit a non-finite loss; the entry kept its starting payload.
    pub adaptor_failed: bool,
}

/// Argmax with ties going to the lowest index.
pub(crate) fn best_of(scores: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((i, s)),
        }
    }
    best
}

impl Codebook {
    pub fn new(dim: usize) -> Self {
        Codebook {
            keys: KeyMatrix::new(dim),
            entries: Vec::new(),
            edits_applied: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.keys.dim()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> &KeyMatrix {
        &self.keys
    }

    pub fn key(&self, i: usize) -> &[f64] {
        self.keys.row(i)
    }

    pub fn entry(&self, i: usize) -> &CodebookEntry {
        &self.entries[i]
    }

    pub fn entries(&self) -> &[CodebookEntry] {
        &self.entries
    }

    pub fn edits_applied(&self) -> u64 {
        self.edits_applied
    }

    /// Stored floats: one key and one payload vector per entry.
    pub fn parameter_count(&self) -> usize {
        self.entries.len() * 2 * self.dim()
    }

    /// A copy holding only the first `n` entries.
    pub fn prefix(&self, n: usize) -> Codebook {
        let n = n.min(self.len());
        let mut keys = self.keys.clone();
        keys.truncate(n);
        Codebook {
            keys,
            entries: self.entries[..n].to_vec(),
            edits_applied: self.edits_applied,
        }
    }

    fn push(&mut self, key: &UnitVector, payload: Payload, label: EntryLabel, created_at: u64) -> Result<usize> {
        if payload.value.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: payload.value.dim(),
            });
        }
        self.keys.push(key.as_slice())?;
        self.entries.push(CodebookEntry {
            payload,
            label,
            created_at,
        });
        Ok(self.entries.len() - 1)
    }

    /// Scores a unit query against every key; matched iff the best score is
    /// strictly above `threshold`.
    pub fn match_query(&self, q: &UnitVector, threshold: f64) -> Result<RoutingDecision> {
        self.keys.check_query(q.as_slice())?;
        let mut scores = vec![0.0; self.len()];
        self.keys.scores_into(q.as_slice(), &mut scores);
        Ok(decide(q.clone(), scores, threshold, 0))
    }

    /// Normalizes `raw_query`, refines it (skipped on an empty codebook) and
    /// matches the refined query.
    pub fn route(&self, raw_query: &[f64], params: &HopfieldParams) -> Result<RoutingDecision> {
        params.validate()?;
        let q0 = normalize(raw_query)?;
        self.route_normalized(&q0, params)
    }

    pub fn route_normalized(&self, q0: &UnitVector, params: &HopfieldParams) -> Result<RoutingDecision> {
        self.keys.check_query(q0.as_slice())?;
        if self.is_empty() {
            return Ok(decide(q0.clone(), Vec::new(), params.threshold, 0));
        }
        let r = refine_loop(q0.as_slice(), &self.keys, params, true, None);
        let q = UnitVector::from_unit(r.query)?;
        Ok(decide(q, r.scores, params.threshold, r.steps_taken))
    }

    /// Applies one edit under the three-case policy:
    ///
    /// * no match: insert `(q₀, fresh payload, label)`;
    /// * match with the same label: fine-tune the matched payload in place;
    /// * match with a different label: insert a new entry, leaving the
    ///   matched one untouched.
    ///
    /// `q₀` is the normalized query before refinement.
    pub fn apply_edit(
        &mut self,
        raw_query: &[f64],
        target: &EditTarget,
        params: &HopfieldParams,
        adaptor_cfg: &AdaptorConfig,
    ) -> Result<EditReport> {
        params.validate()?;
        adaptor_cfg.validate()?;
        let q0 = normalize(raw_query)?;
        let decision = self.route_normalized(&q0, params)?;
        let t = self.edits_applied;
        self.edits_applied += 1;

        let matched = decision.best_index.filter(|_| decision.matched);
        let (outcome, payload_trained, adaptor_failed) = match matched {
            Some(i) if self.entries[i].label == target.label => {
                let (payload, failed) = train_or_keep(&self.entries[i].payload, target, adaptor_cfg)?;
                let trained = payload.trained;
                self.entries[i].payload = payload;
                (EditOutcome::Refined { index: i }, trained, failed)
            }
            other => {
                let (payload, failed) = train_or_keep(&Payload::zeros(self.dim()), target, adaptor_cfg)?;
                let trained = payload.trained;
                let index = self.push(&q0, payload, target.label.clone(), t)?;
                let outcome = match other {
                    Some(contested) => EditOutcome::ConflictInserted { index, contested },
                    None => EditOutcome::Inserted { index },
                };
                (outcome, trained, failed)
            }
        };
        Ok(EditReport {
            outcome,
            decision,
            payload_trained,
            adaptor_failed,
        })
    }

    /// Entry count per label.
    pub fn label_histogram(&self) -> BTreeMap<&str, usize> {
        let mut h = BTreeMap::new();
        for e in &self.entries {
            *h.entry(e.label.as_str()).or_insert(0) += 1;
        }
        h
    }

    /// Smallest and largest creation index, if any entries exist.
    pub fn created_range(&self) -> Option<(u64, u64)> {
        let min = self.entries.iter().map(|e| e.created_at).min()?;
        let max = self.entries.iter().map(|e| e.created_at).max()?;
        Some((min, max))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Loads and additionally requires the stored dimension to be `dim`.
    pub fn load_with_dim(path: impl AsRef<Path>, dim: usize) -> Result<Self> {
        let book = Self::load(path)?;
        if book.dim() != dim {
            return Err(Error::Format(format!(
                "dimension mismatch: file has {}, expected {dim}",
                book.dim()
            )));
        }
        Ok(book)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(&self.to_bytes())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.dim();
        let mut buf = Vec::with_capacity(HEADER_LEN + self.len() * (16 * d + 64) + DIGEST_LEN);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(d as u32).to_le_bytes());
        buf.extend_from_slice(&(self.len() as u64).to_le_bytes());
        buf.extend_from_slice(&self.edits_applied.to_le_bytes());
        for (i, e) in self.entries.iter().enumerate() {
            for x in self.keys.row(i) {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            for x in e.payload.value.as_slice() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            buf.push(u8::from(e.payload.trained));
            buf.extend_from_slice(&e.payload.final_loss.to_le_bytes());
            buf.extend_from_slice(&(e.payload.steps_used as u32).to_le_bytes());
            let label = e.label.as_str().as_bytes();
            buf.extend_from_slice(&(label.len() as u32).to_le_bytes());
            buf.extend_from_slice(label);
            buf.extend_from_slice(&e.created_at.to_le_bytes());
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Format("missing codebook magic header".into()));
        }
        if bytes.len() < HEADER_LEN + DIGEST_LEN {
            return Err(Error::Format("file truncated inside header".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        let mut r = Reader { buf: body, pos: MAGIC.len() };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Format("checksum mismatch: file is truncated or corrupted".into()));
        }
        let d = r.u32()? as usize;
        if d == 0 {
            return Err(Error::Format("dimension must be at least 1".into()));
        }
        let count = r.u64()? as usize;
        let edits_applied = r.u64()?;
        let mut book = Codebook::new(d);
        for i in 0..count {
            let key = r.f64s(d)?;
            let key = UnitVector::from_unit(key)
                .map_err(|e| Error::Format(format!("entry {i}: key is not unit norm ({e})")))?;
            let value = Vector::new(r.f64s(d)?)
                .map_err(|e| Error::Format(format!("entry {i}: bad payload ({e})")))?;
            let trained = match r.u8()? {
                0 => false,
                1 => true,
                b => return Err(Error::Format(format!("entry {i}: bad trained flag {b}"))),
            };
            let final_loss = r.f64()?;
            let steps_used = r.u32()? as usize;
            let len = r.u32()? as usize;
            let label = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Format(format!("entry {i}: label is not UTF-8")))?
                .to_owned();
            let created_at = r.u64()?;
            book.push(
                &key,
                Payload {
                    value,
                    trained,
                    final_loss,
                    steps_used,
                },
                EntryLabel(label),
                created_at,
            )?;
        }
        if r.pos != body.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after the last entry",
                body.len() - r.pos
            )));
        }
        book.edits_applied = edits_applied;
        Ok(book)
    }
}

/// Verdict of a batched route: the decision without the score vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub best_index: Option<usize>,
    pub best_score: f64,
    pub matched: bool,
}

impl From<&RoutingDecision> for Verdict {
    fn from(d: &RoutingDecision) -> Self {
        Verdict {
            best_index: d.best_index,
            best_score: d.best_score,
            matched: d.matched,
        }
    }
}

/// Rows per block in [`Codebook::route_batch`].
const BATCH_ROWS: usize = 64;

impl Codebook {
    /// Routes many normalized queries at once. Same iteration as
    /// [`Codebook::route_normalized`], but the score and recombination
    /// products run as matrix–matrix multiplies over blocks of queries, so
    /// results can differ from the single-query path in the last bits.
    pub fn route_batch(&self, queries: &[UnitVector], params: &HopfieldParams) -> Result<Vec<Verdict>> {
        params.validate()?;
        for q in queries {
            self.keys.check_query(q.as_slice())?;
        }
        if self.is_empty() {
            return Ok(queries
                .iter()
                .map(|_| Verdict {
                    best_index: None,
                    best_score: f64::NEG_INFINITY,
                    matched: false,
                })
                .collect());
        }
        let mut out = Vec::with_capacity(queries.len());
        for block in queries.chunks(BATCH_ROWS) {
            out.extend(self.route_block(block, params));
        }
        Ok(out)
    }

    fn route_block(&self, block: &[UnitVector], params: &HopfieldParams) -> Vec<Verdict> {
        let b = block.len();
        let c = self.len();
        let d = self.dim();
        let mut q: Vec<f64> = block.iter().flat_map(|u| u.as_slice().iter().copied()).collect();
        let mut scores = vec![0.0; b * c];
        let mut weights = vec![0.0; b * c];
        let mut proposal = vec![0.0; b * d];
        let mut active = vec![true; b];
        let keys = self.keys.as_flat();

        let score_all = |q: &[f64], scores: &mut [f64]| unsafe {
            // scores (b×c) = q (b×d) · Kᵀ (d×c)
            matrixmultiply::dgemm(
                b, d, c, 1.0,
                q.as_ptr(), d as isize, 1,
                keys.as_ptr(), 1, d as isize,
                0.0, scores.as_mut_ptr(), c as isize, 1,
            );
        };
        score_all(&q, &mut scores);

        for _ in 0..params.max_steps {
            if !active.iter().any(|&a| a) {
                break;
            }
            for r in 0..b {
                let w = &mut weights[r * c..(r + 1) * c];
                if active[r] {
                    softmax_into(&scores[r * c..(r + 1) * c], params.beta, w);
                } else {
                    w.iter_mut().for_each(|x| *x = 0.0);
                }
            }
            // proposal (b×d) = weights (b×c) · K (c×d)
            unsafe {
                matrixmultiply::dgemm(
                    b, c, d, 1.0,
                    weights.as_ptr(), c as isize, 1,
                    keys.as_ptr(), d as isize, 1,
                    0.0, proposal.as_mut_ptr(), d as isize, 1,
                );
            }
            for r in 0..b {
                if !active[r] {
                    continue;
                }
                let qr = &mut q[r * d..(r + 1) * d];
                let pr = &mut proposal[r * d..(r + 1) * d];
                let n = norm(pr);
                if n < ZERO_NORM_FLOOR {
                    active[r] = false;
                    continue;
                }
                pr.iter_mut().for_each(|x| *x /= n);
                if distance_unchecked(pr, qr) <= params.epsilon {
                    active[r] = false;
                    continue;
                }
                let mixed: Vec<f64> = qr
                    .iter()
                    .zip(pr.iter())
                    .map(|(a, p)| (1.0 - params.gamma) * a + params.gamma * p)
                    .collect();
                let n = norm(&mixed);
                if n < ZERO_NORM_FLOOR {
                    active[r] = false;
                    continue;
                }
                qr.iter_mut().zip(&mixed).for_each(|(x, m)| *x = m / n);
            }
            score_all(&q, &mut scores);
        }

        (0..b)
            .map(|r| {
                let best = best_of(&scores[r * c..(r + 1) * c]);
                let best_score = best.map_or(f64::NEG_INFINITY, |(_, s)| s);
                Verdict {
                    best_index: best.map(|(i, _)| i),
                    best_score,
                    matched: best.is_some() && best_score > params.threshold,
                }
            })
            .collect()
    }
}

fn decide(q: UnitVector, scores: Vec<f64>, threshold: f64, steps: usize) -> RoutingDecision {
    let best = best_of(&scores);
    let best_score = best.map_or(f64::NEG_INFINITY, |(_, s)| s);
    RoutingDecision {
        refined_query: q,
        best_index: best.map(|(i, _)| i),
        best_score,
        matched: best.is_some() && best_score > threshold,
        scores,
        hopfield_steps_taken: steps,
    }
}

fn train_or_keep(init: &Payload, target: &EditTarget, cfg: &AdaptorConfig) -> Result<(Payload, bool)> {
    match train_payload(init, target, cfg) {
        Ok(p) => Ok((p, false)),
        Err(Error::NonFiniteLoss { .. }) => {
            let mut p = init.clone();
            p.trained = false;
            Ok((p, true))
        }
        Err(e) => Err(e),
    }
}

const MAGIC: &[u8; 8] = b"HRNCBOOK";
const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 8 + 8;
const DIGEST_LEN: usize = 32;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format("unexpected end of file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}
