//! Experiment configuration: one JSON document plus `--key value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::SynthConfig;
use crate::error::{Error, Result};
use crate::models::{GenerativeConfig, RecognizerConfig, TrainConfig, WindowConfig, WindowTask};
use crate::optim::{LR_RECOGNIZER, LR_REPRESENTATION};

/// Which features feed the recognizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Genmodel,
    Autoencoder,
    Futurepred,
    Raw,
}

impl FeatureKind {
    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Genmodel => "genmodel",
            FeatureKind::Autoencoder => "autoencoder",
            FeatureKind::Futurepred => "futurepred",
            FeatureKind::Raw => "raw",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenmodelSection {
    pub n_h: usize,
    pub n_c: usize,
}

impl Default for GenmodelSection {
    fn default() -> Self {
        GenmodelSection { n_h: 128, n_c: 8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowedSection {
    pub n_h: usize,
    pub n_c: usize,
    pub window: usize,
}

impl Default for WindowedSection {
    fn default() -> Self {
        WindowedSection { n_h: 64, n_c: 16, window: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub clip_norm: Option<f64>,
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection { lr: LR_REPRESENTATION, epochs: 100, batch_size: 1, clip_norm: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecognizerSection {
    pub layers: usize,
    pub hidden: usize,
    pub bidirectional: bool,
    pub hidden_is_total: bool,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub clip_norm: Option<f64>,
    /// Trial ids used by `train-rec`; every labeled trial when absent.
    pub train_trials: Option<Vec<String>>,
}

impl Default for RecognizerSection {
    fn default() -> Self {
        RecognizerSection {
            layers: 3,
            hidden: 64,
            bidirectional: true,
            hidden_is_total: false,
            lr: LR_RECOGNIZER,
            epochs: 100,
            batch_size: 1,
            clip_norm: None,
            train_trials: None,
        }
    }
}

impl RecognizerSection {
    pub fn model_config(&self, input_dim: usize, n_classes: usize) -> RecognizerConfig {
        RecognizerConfig {
            input_dim,
            n_classes,
            layers: self.layers,
            hidden: self.hidden,
            hidden_is_total: self.hidden_is_total,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig { epochs: self.epochs, lr: self.lr, seed, clip_norm: self.clip_norm }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub n_labeled_min: usize,
    /// Upper end of the range; one less than the subject count when absent.
    pub n_labeled_max: Option<usize>,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection { n_labeled_min: 1, n_labeled_max: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub trial: Option<String>,
    /// Frames of the trial (after downsampling) fed as the prefix.
    pub prefix: usize,
    pub horizon: usize,
    pub n_samples: usize,
}

impl Default for SampleSection {
    fn default() -> Self {
        SampleSection { trial: None, prefix: 20, horizon: 40, n_samples: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: FeatureKind,
    pub dataset: Option<PathBuf>,
    /// Representation checkpoint (written by `train-rep`, read elsewhere).
    pub checkpoint: Option<PathBuf>,
    /// Recognizer checkpoint written by `train-rec`.
    pub recognizer_checkpoint: Option<PathBuf>,
    pub output: PathBuf,
    pub seed: u64,
    pub downsample: usize,
    pub workers: usize,
    pub genmodel: GenmodelSection,
    pub windowed: WindowedSection,
    pub representation: TrainingSection,
    pub recognizer: RecognizerSection,
    pub splits: SplitSection,
    pub sample: SampleSection,
    pub synth: SynthConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: FeatureKind::Genmodel,
            dataset: None,
            checkpoint: None,
            recognizer_checkpoint: None,
            output: PathBuf::from("out"),
            seed: 0,
            downsample: 6,
            workers: 1,
            genmodel: GenmodelSection::default(),
            windowed: WindowedSection::default(),
            representation: TrainingSection::default(),
            recognizer: RecognizerSection::default(),
            splits: SplitSection::default(),
            sample: SampleSection::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Reads `path` (or starts from defaults) and applies `overrides`, a flat
    /// list of `--dotted.key value` pairs.
    pub fn resolve(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                serde_json::from_str::<Value>(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => Value::Object(Default::default()),
        };
        // fill defaults first so overrides can address nested keys
        let base: ExperimentConfig = serde_json::from_value(doc.clone()).map_err(|e| Error::Config(e.to_string()))?;
        doc = serde_json::to_value(&base).expect("config serializes");
        let mut it = overrides.iter();
        while let Some(flag) = it.next() {
            let key = flag
                .strip_prefix("--")
                .ok_or_else(|| Error::Usage(format!("expected `--key value`, found `{flag}`")))?;
            let raw = it
                .next()
                .ok_or_else(|| Error::Usage(format!("`--{key}` needs a value")))?;
            set_path(&mut doc, key, raw)?;
        }
        let cfg: ExperimentConfig = serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.downsample == 0 {
            return bad("downsample must be at least 1");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if self.representation.batch_size != 1 || self.recognizer.batch_size != 1 {
            return bad("only batch_size 1 is supported");
        }
        if !self.recognizer.bidirectional {
            return bad("the recognizer is always bidirectional");
        }
        for lr in [self.representation.lr, self.recognizer.lr] {
            if !(lr.is_finite() && lr >= 0.0) {
                return bad("learning rates must be finite and non-negative");
            }
        }
        Ok(())
    }

    pub fn dataset_path(&self) -> Result<&Path> {
        self.dataset
            .as_deref()
            .ok_or_else(|| Error::Usage("no dataset manifest given; pass `--dataset PATH`".into()))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.output.join(format!("{}.ckpt", self.model.name())))
    }

    pub fn representation_train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.representation.epochs,
            lr: self.representation.lr,
            seed: self.seed,
            clip_norm: self.representation.clip_norm,
        }
    }

    pub fn generative_config(&self, n_x: usize) -> GenerativeConfig {
        GenerativeConfig { n_x, n_h: self.genmodel.n_h, n_c: self.genmodel.n_c }
    }

    pub fn window_config(&self, task: WindowTask, n_x: usize) -> WindowConfig {
        WindowConfig {
            task,
            n_x,
            n_h: self.windowed.n_h,
            n_c: self.windowed.n_c,
            window: self.windowed.window,
        }
    }
}

fn set_path(doc: &mut Value, key: &str, raw: &str) -> Result<()> {
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Usage(format!("`{key}` does not name a config section")))?;
        let entry = obj
            .get_mut(*part)
            .ok_or_else(|| Error::Usage(format!("unknown config key `{key}`")))?;
        if i + 1 == parts.len() {
            // JSON literal when it parses, bare string otherwise
            *entry = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            return Ok(());
        }
        node = entry;
    }
    unreachable!("split yields at least one part")
}
