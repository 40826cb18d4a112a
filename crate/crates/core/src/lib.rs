//! Two-stage demonstration selection over embedded corpora.
//!
//! Stage 1 retrieves a budget-constrained candidate pool from a corpus by
//! greedily maximizing facility-location coverage plus a log-determinant
//! diversity term (lazy greedy over a stale-gain max-heap). Stage 2 ranks
//! the pool by singleton conditional gains against a test-query set and
//! the winners are assembled into a demonstration prompt.
//!
//! The `oracle` module carries independent brute-force implementations of
//! everything the optimized paths compute, plus the property harnesses
//! built on them.

mod chol;

pub mod embeddings;
pub mod error;
pub mod kernel;
pub mod objective;
pub mod oracle;
pub mod prompt;
pub mod report;
pub mod run;
pub mod selector;
pub mod synth;

pub use embeddings::{
    load_embeddings, save_embeddings, EmbeddingFormat, EmbeddingRecord, EmbeddingSet, SetRole,
};
pub use error::{Error, Result};
pub use kernel::{cosine_kernel, dispersion_stats, export_kernel, DispersionStats, SimilarityKernel};
pub use objective::{
    conditional_gain, coverage, log_det_diversity, objective_value, Gain, ObjectiveConfig,
    ObjectiveValue, SelectionState, TieBreak,
};
pub use oracle::{
    brute_force_optimum, check_modular_upper_bound, check_monotonicity,
    check_projection_identity, check_submodularity, BruteForceOptimum, CheckMode, PropertyReport,
    Witness,
};
pub use prompt::{assemble_prompt, enumerate_permutations, DEFAULT_TEMPLATE};
pub use report::{ConfigEcho, SelectionReport};
pub use run::{run_select, DemoOrder, Method, RunConfig, RunOverrides};
pub use selector::{
    lambda_bound_probe, naive_greedy, random_stage1, rank_stage2, retrieve_stage1,
    similarity_rank_stage2, LambdaProbe, LambdaViolation, Stage1Outcome, Stage1Step, Stage2Step,
};
