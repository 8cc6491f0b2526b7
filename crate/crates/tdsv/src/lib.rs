//! Scoring and evaluation engine for text-dependent speaker verification.
//!
//! The crate covers the full backend of a two-subsystem verifier:
//!
//! - [`data`] — domain types and bit-exact readers/writers for embeddings,
//!   trial lists, model definitions, phrase posteriors and score files.
//! - [`backend`] — enrollment averaging, batched cosine scoring, adaptive
//!   score normalization against a speaker cohort, and score fusion.
//! - [`gate`] — the 11-way phrase decision that rejects wrong-phrase trials
//!   before speaker scores are evaluated.
//! - [`metrics`] — DET operating points, EER and the normalized minimum
//!   detection cost function.
//! - [`pooling`] / [`loss`] — reference numerics for the aggregation and
//!   margin-softmax kernels used by upstream embedding extractors.
//! - [`synth`] — a deterministic synthetic-population generator that turns
//!   the whole pipeline into a desk-scale, self-checking fixture.

pub mod backend;
pub mod data;
pub mod gate;
pub mod loss;
pub mod metrics;
pub mod pooling;
pub mod synth;
