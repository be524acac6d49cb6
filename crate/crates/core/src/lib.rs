//! Soft-voting fusion of per-pixel semantic confidences with class-agnostic
//! segment proposals, plus the metrics, augmentations, codecs and synthetic
//! data used to train and evaluate such pipelines.
//!
//! The core entry point is [`soft_vote_fuse`]: every proposal is labeled by
//! summing the class confidences of its pixels and taking the argmax, and
//! every pixel takes the label of the proposal that owns it.

pub mod augment;
pub mod cli;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod par;
pub mod proposal;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use fusion::{
    fallback_labels, fuse_detailed, segment_vote, soft_vote_fuse, vote_winner, FallbackPolicy,
    FusionConfig, OverlapPolicy, TiePolicy, VoteVector,
};
pub use metrics::{auc, confusion, evaluate, ConfusionMatrix, MetricReport, ScoreMap};
pub use proposal::{filter_proposals, gen_prompt_grid, FilterConfig, PromptGrid};
pub use types::{
    validate_probmap, BinaryMask, ClassId, ClassPlanes, Image, LabelMask, ProbMap,
    RawConfidences, Segment, SegmentSet,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator behind every seeded operation. ChaCha8 output is fixed by
/// the algorithm itself, so seeds reproduce across platforms and releases.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
