//! Normalized key-value codebook with damped Hopfield query refinement.
//!
//! Keys live on the unit sphere and match by cosine threshold. Before
//! matching, a query can be pulled toward stored keys by a few damped,
//! renormalized Hopfield steps; the codebook itself always stores the
//! unrefined query. [`bench`] drives the whole thing over synthetic
//! lifelong-editing streams.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptor;
pub mod bench;
pub mod cli;
pub mod codebook;
pub mod error;
pub mod geometry;
pub mod hopfield;
pub mod sampling;

pub use adaptor::{AdaptorConfig, EditTarget, EntryLabel, Payload};
pub use codebook::{Codebook, EditOutcome, EditReport, RoutingDecision};
pub use error::{Error, Result};
pub use geometry::{KeyMatrix, UnitVector, Vector};
pub use hopfield::{HopfieldParams, IterationTrace};
