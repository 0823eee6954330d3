//! The representation models, the recognizer, training, and checkpoints.

pub mod checkpoint;
mod generative;
mod layers;
mod recognizer;
pub mod train;
mod windowed;

pub use checkpoint::{Checkpoint, Model};
pub use generative::{GenerativeConfig, GenerativeModel};
pub use recognizer::{argmax_rows, Recognizer, RecognizerConfig};
pub use train::{train, train_generative, train_recognizer, train_windowed, LabeledSequence, TrainConfig, TrainingTrace};
pub use windowed::{WindowConfig, WindowTask, WindowedModel};

use crate::error::{Error, Result};
use crate::math::Matrix;

/// Maps a kinematic sequence to the per-frame features fed to recognition.
/// Encoders take no labels.
#[derive(Clone, Debug)]
pub enum FeatureExtractor {
    Raw,
    Generative(GenerativeModel),
    Windowed(WindowedModel),
}

impl FeatureExtractor {
    pub fn from_model(model: Model) -> Result<Self> {
        match model {
            Model::Generative(m) => Ok(FeatureExtractor::Generative(m)),
            Model::Windowed(m) => Ok(FeatureExtractor::Windowed(m)),
            Model::Recognizer(_) => Err(Error::Usage("a recognizer checkpoint cannot produce features".into())),
        }
    }

    pub fn feature_dim(&self, n_x: usize) -> usize {
        match self {
            FeatureExtractor::Raw => n_x,
            FeatureExtractor::Generative(m) => m.config().n_h,
            FeatureExtractor::Windowed(m) => m.config().n_h,
        }
    }

    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            FeatureExtractor::Raw => Ok(x.clone()),
            FeatureExtractor::Generative(m) => m.encode(x),
            FeatureExtractor::Windowed(m) => m.encode(x),
        }
    }
}
