//! Cost-aware routing of verifiable tasks across a ladder of model tiers.
//!
//! The pipeline: ingest a task corpus, collect M-trial success profiles per
//! tier, map profiles to complexity levels, evaluate a complexity classifier,
//! route tasks to the cheapest tier predicted capable, and account for the
//! compute saved against always using the largest tier.

pub mod backends;
pub mod classifier;
pub mod corpus;
pub mod cost;
pub mod io;
pub mod labeling;
pub mod router;
pub mod verifier;
