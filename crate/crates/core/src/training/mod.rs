//! Training the compression network on synthetic radiometric scenes.
//!
//! [`scene`] generates scenes with known objects and boundaries,
//! [`dataset`] stores them, [`loss`] provides the surrogate task losses and
//! [`trainer`] runs Adam over embeddings with per-step period resampling.

pub mod dataset;
pub mod loss;
pub mod scene;
pub mod trainer;

pub use dataset::{load_dataset, write_dataset, Dataset, Manifest, Sample};
pub use loss::{loss_edge_fidelity, loss_object_contrast, loss_reconstruction, TaskLoss, DEFAULT_EDGE_LAMBDA};
pub use scene::{generate_scene, generate_scenes, synthetic_profile, SceneAnnotations, SceneParams, SyntheticScene};
pub use trainer::{
    artifact_rejection_probe, evaluate_loss, infer, mean_weights, model_checkpoint, model_from_checkpoint, train,
    train_from, LogRecord, TrainConfig, TrainLog, TrainedModel,
};
