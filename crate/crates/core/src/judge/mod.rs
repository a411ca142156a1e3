//! The pairwise judge: candidate features, a small tanh scorer, the
//! verifiable reward and the DPO/KTO/ORPO/GRPO objectives.

mod checkpoint;
mod features;
mod losses;
mod policy;
mod scorer;

pub use checkpoint::{JudgeCheckpoint, CHECKPOINT_VERSION};
pub use features::{feature_schema_hash, featurize, FeatureVector, FEATURE_DIM, FEATURE_NAMES};
pub use losses::{
    group_advantages, grpo_surrogate, kto_samples, loss_dpo, loss_grpo, loss_kto, loss_orpo,
    sample_group, GrpoGroup, KtoSample, LossConfig, Objective, ADVANTAGE_EPS, DEFAULT_BETA,
    DEFAULT_EPS_MALFORMED, DEFAULT_GROUP_SIZE,
};
pub use policy::{
    build_prompts, log_prob, log_prob_from_gap, make_pairs, malformed_log_prob, prob_a, reward,
    rollout, sample_preferences, score_gap, score_gap_on, select_deterministic, select_pair,
    JudgeSample, PreferencePair, Prompt, Selection, Side,
};
pub use scorer::{JudgeParams, ScorerShape, DEFAULT_HIDDEN};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JudgeError {
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("group size must be at least 2, got {0}")]
    GroupTooSmall(usize),
    #[error("unknown objective {0:?} (expected dpo, kto, orpo or grpo)")]
    UnknownObjective(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
