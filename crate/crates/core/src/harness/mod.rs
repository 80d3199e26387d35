//! Synthetic zero-shot experiments: data generation, the trainable model,
//! the training loop and evaluation metrics.

mod ablation;
mod eval;
mod metrics;
mod model;
mod synthetic;
mod train;

pub use ablation::{ablation_suite, ablation_table, baseline_report, AblationRow};
pub use eval::{evaluate, evaluate_baseline, mean_ad, scene_logits, EvalReport};
pub use metrics::{
    action_dissimilarity, average_precision, harmonic_mean, mean_dissimilarity, AdNormalization,
    ObjectDissimilarity,
};
pub use model::{Ablation, Bound, LossGraph, Model, ModelConfig, SceneOutputs};
pub use synthetic::{
    generate_synthetic, SplitMode, SyntheticComponents, SyntheticConfig, SyntheticData,
    SyntheticScene,
};
pub use train::{fixed_batches, moving_average, train, StepRecord, TrainConfig};
