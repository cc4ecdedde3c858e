//! Constrained sentence generation: entity assignment, mask skeletons,
//! completion and quality/diversity filtering.

mod entities;
mod filter;
mod skeleton;

pub use entities::{
    assign_entities, candidate_similarities, splice, EntityAssignment, EntityCandidate,
    EntityCandidateSet, EntitySource,
};
pub use filter::{
    complete_sentence, dis, dis_from_encodings, ppl, sample_sentences, score, score_and_filter,
    score_order, select_top, DisMode, GeneratedCandidate, PairRef,
};
pub use skeleton::{build_skeleton, mask_count, Skeleton};
