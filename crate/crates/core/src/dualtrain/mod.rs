//! Dual reinforcement training of the generators and the identifier, and
//! further training on augmented data.

mod cycles;
mod further;
mod rewards;
mod schedule;

pub use cycles::{dual_cycle, primal_cycle, substituted_sentence, CycleOrder, DualConfig, DualItem};
pub use further::{
    further_train, further_train_mix, select_augmented, AugmentationPlan, FurtherTrainReport,
    Ratio,
};
pub use rewards::{
    alignment_from_probs, causality_reward, mix_dual, mix_primal, reward_from_probs,
    semantic_alignment_reward, Cycle, RewardRecord,
};
pub use schedule::{dual_train, dual_train_with, DualOutcome, EarlyStopper, RoundLog};
