//! The committed benchmark configuration.
//!
//! Values here were chosen once by sweeping scene size, class separation,
//! balancing mode and self-training schedule, then frozen. The acceptance
//! suite and the CLI's `--preset benchmark` both read from this module so
//! the two cannot drift apart.

use crate::classifier::TrainConfig;
use crate::selftrain::{PolicyKind, SelfTrainConfig};
use crate::synthgen::GeneratorConfig;

/// Larger scenes than the generator default so each batch holds enough
/// unannotated candidates for the thresholds to matter.
pub fn generator() -> GeneratorConfig {
    GeneratorConfig {
        entities_min: 20,
        entities_max: 30,
        ..GeneratorConfig::default()
    }
}

pub fn pretrain() -> TrainConfig {
    TrainConfig {
        n_epochs: 60,
        oversample: true,
        ..TrainConfig::default()
    }
}

pub fn selftrain(policy: PolicyKind) -> SelfTrainConfig {
    SelfTrainConfig {
        policy,
        learning_rate: 0.1,
        max_iterations: 3000,
        oversample: true,
        ..SelfTrainConfig::default()
    }
}

/// Frozen regression bound: minimum tail-group mR@K gain (points) of CATM
/// self-training over the pretrained model at the headline K.
pub const MIN_TAIL_MR_GAIN: f64 = 1.0;

/// Frozen regression bound: largest tolerated F@K drop (points).
pub const MAX_F_DROP: f64 = 1.0;
