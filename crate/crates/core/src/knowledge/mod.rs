//! Knowledge-guided pair acquisition: lexical expansion, connective
//! introduction, and filtering in a learned causal space.

mod connective;
mod lexicon;
mod pairs;
mod select;
mod space;

pub use connective::{introduce_connective, ConnectivePatternSet};
pub use lexicon::{LexicalRelation, LexiconAdapter};
pub use pairs::{
    annotated_pairs, expand_lexical, load_jsonl, save_jsonl, CandidatePair, OriginIndex,
    Provenance,
};
pub use select::{
    rank_and_select, rank_order, ScoredPair, SelectedPairRecord, Selection, SelectionReport,
};
pub use space::{
    causal_distance, init_causal_space, train_causal_space, CausalSpaceModel, SpaceConfig,
    SpaceGradient,
};
