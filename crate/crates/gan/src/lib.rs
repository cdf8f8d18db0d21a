//! Cycle-consistent unpaired image translation (two generators, two patch
//! discriminators, least-squares adversarial loss, L1 cycle and identity
//! terms) and label-preserving dataset synthesis.

pub mod checkpoint;
pub mod config;
pub mod generate;
pub mod losses;
pub mod model;
pub mod synthesis;
pub mod train;

use std::path::PathBuf;

use advaug_core::dataset::DatasetError;
use advaug_core::imaging::ImageError;
use advaug_core::nn::BlobError;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointRef};
pub use config::{DiscriminatorKind, GanConfig, GeneratorKind};
pub use generate::{generate, Direction, Translator};
pub use losses::{adversarial_loss, cycle_loss, identity_loss};
pub use synthesis::{synthesize_dataset, verify_label_preservation, LabelReport, ResizePolicy, SynthesisJob};
pub use train::{epoch_cycle_means, generator_objective, resume, train, GanTrainState, LossRecord};

#[derive(Debug, thiserror::Error)]
pub enum GanError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("training diverged at step {step}: {message} (state saved to {})", snapshot.display())]
    Diverged { step: u64, message: String, snapshot: PathBuf },
    #[error("checkpoint {}: {message}", path.display())]
    Checkpoint { path: PathBuf, message: String },
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Blob(#[from] BlobError),
}
