//! Baseline augmentation (MUNGE), teacher labeling (soft, hard, KNOW) and
//! assembly of student training sets.

mod labels;
mod munge;
mod targets;

pub use labels::{assemble, harden, hunge_labels, know_targets, teacher_label, KNOW_DEFAULT_HARD_WEIGHT, KNOW_DEFAULT_TEMPERATURE};
pub use munge::{munge, munge_distance, munge_scales, nearest_neighbors, MungeParams, MUNGE_LOCAL_VARIANCES, MUNGE_SWAP_PROBS};
pub use targets::{one_hot, DistillSet, Origin, SoftTargets};
