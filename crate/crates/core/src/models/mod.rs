//! Neural components: the encoder backend interface, the tiny reference
//! backend, the causality identifier and the two generators.

mod backend;
mod generator;
mod identifier;
mod optim;
mod params;
mod tape;
mod tensor;
mod vocab;

pub use backend::{
    embed_entity_in_context, encode_sentence, EncoderBackend, EncoderConfig, EncoderSlots,
    MaskFiller, TinyBackend,
};
pub use generator::{
    fill_masks, fill_masks_by_name, fill_with, mlm_example, pretrain_generators,
    sequence_objective, FillOrder, FillResult, FillStep, GeneratorConfig, GeneratorPair,
    GeneratorPretrainLog, MlmExample, MlmTrainConfig, PgObjective, MASK_TOKEN,
};
pub use identifier::{
    identify, negatives_kept, predicted_label, pretrain_identifier, FeatureConfig,
    FeatureExtractor, IdentifierConfig, IdentifierModel, PairExample, TrainConfig, TrainLog,
};
pub use optim::{Optimizer, OptimizerKind};
pub use params::{Checkpoint, CheckpointHeader, Grads, Param, ParamSet, TensorMeta};
pub use tape::{NodeId, Tape};
pub use tensor::{cosine, softmax, Matrix};
pub use vocab::{Vocab, CLS, MASK, PAD, SPECIALS, UNK};
