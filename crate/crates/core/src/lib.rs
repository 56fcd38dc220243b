//! Speculative decoding laboratory.
//!
//! * [`model`]: seeded table-driven draft/target models.
//! * [`specdec`]: draft, verify, rollback and the exact-emission oracle.
//! * [`metrics`]: acceptance rate, speedup, Amdahl bound and device cost model.
//! * [`pipeline`]: cycle-level model of a pipelined verification unit.
//! * [`harness`]: gamma sweeps, device comparisons, reports and the
//!   invariant suite behind the `speclab` CLI.

pub mod dist;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod specdec;

pub use dist::{argmax_token, sample_token, ProbDist, TokenId};
pub use error::{Error, Result};
pub use model::{build_table_model, make_model_pair, ModelPair, ModelSpec, TableModel};
pub use specdec::{
    autoregressive_decode, draft_phase, exact_emission_distribution, residual_dist,
    speculative_decode, verify_phase, DecodeMode, DecodeTrace, IterationRecord, SpecConfig,
};
