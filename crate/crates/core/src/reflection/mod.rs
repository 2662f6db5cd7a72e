//! Dual-stage reflection: per-step local checks and post-episode review.

mod global;
mod local;

use thiserror::Error;

pub use global::{
    global_reflect, segment, Attribution, EpisodeReview, GlobalConfig, GlobalReflection, Segment,
    SegmentLabel,
};
pub use local::{
    expected_outcome, hazards_ahead, local_check, micro_plan, post_check, scene_features, LocalFlag, LocalVerdict,
    MatchedExperience, PostCheck,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReflectionError {
    #[error("no traversable alternative to the vetoed action")]
    NoAlternative,
    #[error("verdict passed; nothing to veto")]
    NothingToVeto,
}
