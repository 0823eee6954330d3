//! Trials, datasets, preprocessing, evaluation splits, and synthetic data.

mod io;
mod splits;
mod synth;

pub use io::{load_dataset, save_dataset, Manifest, ManifestTrial};
pub use splits::{make_splits, Split, SplitMode, SplitPlan, EXHAUSTIVE_CAP, RANDOM_SPLITS};
pub use synth::{synth_generate, SynthConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Matrix;

/// Per-frame activity labels.
pub type LabelSequence = Vec<usize>;

/// One recorded performance: kinematics plus optional per-frame labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    pub trial_id: String,
    pub subject_id: String,
    pub kinematics: Matrix,
    pub labels: Option<LabelSequence>,
}

impl Trial {
    pub fn len(&self) -> usize {
        self.kinematics.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.kinematics.rows() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub trials: Vec<Trial>,
    pub activity_names: Vec<String>,
    pub sample_rate_hz: f64,
}

impl Dataset {
    pub fn n_classes(&self) -> usize {
        self.activity_names.len()
    }

    pub fn n_x(&self) -> Option<usize> {
        self.trials.first().map(|t| t.kinematics.cols())
    }

    /// Distinct subjects in order of first appearance.
    pub fn subjects(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for t in &self.trials {
            if !out.contains(&t.subject_id) {
                out.push(t.subject_id.clone());
            }
        }
        out
    }

    pub fn trial(&self, id: &str) -> Option<&Trial> {
        self.trials.iter().find(|t| t.trial_id == id)
    }

    /// Checks id uniqueness, label lengths and ranges, and finiteness.
    pub fn validate(&self) -> Result<()> {
        let k = self.n_classes();
        for (i, t) in self.trials.iter().enumerate() {
            if self.trials[..i].iter().any(|o| o.trial_id == t.trial_id) {
                return Err(Error::invalid(format!("duplicate trial id `{}`", t.trial_id)));
            }
            if t.kinematics.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("trial `{}` has non-finite kinematics", t.trial_id)));
            }
            if let Some(labels) = &t.labels {
                if labels.len() != t.len() {
                    return Err(Error::invalid(format!(
                        "trial `{}` has {} labels for {} frames",
                        t.trial_id,
                        labels.len(),
                        t.len()
                    )));
                }
                if let Some(bad) = labels.iter().find(|&&y| y >= k) {
                    return Err(Error::invalid(format!(
                        "trial `{}` has label {bad} but only {k} activities",
                        t.trial_id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Every trial decimated by `factor`.
    pub fn downsampled(&self, factor: usize) -> Result<Dataset> {
        let mut trials = Vec::with_capacity(self.trials.len());
        for t in &self.trials {
            let (kinematics, labels) = downsample(&t.kinematics, t.labels.as_deref(), factor)?;
            trials.push(Trial {
                trial_id: t.trial_id.clone(),
                subject_id: t.subject_id.clone(),
                kinematics,
                labels,
            });
        }
        Ok(Dataset {
            trials,
            activity_names: self.activity_names.clone(),
            sample_rate_hz: self.sample_rate_hz / factor as f64,
        })
    }
}

/// Keeps frames `0, factor, 2·factor, …` and the matching labels.
pub fn downsample(x: &Matrix, labels: Option<&[usize]>, factor: usize) -> Result<(Matrix, Option<LabelSequence>)> {
    if factor == 0 {
        return Err(Error::invalid("downsampling factor must be at least 1"));
    }
    if let Some(l) = labels {
        if l.len() != x.rows() {
            return Err(Error::invalid("labels and kinematics differ in length"));
        }
    }
    let keep: Vec<usize> = (0..x.rows()).step_by(factor).collect();
    let rows: Vec<Vec<f64>> = keep.iter().map(|&i| x.row(i).to_vec()).collect();
    let out = Matrix::from_rows(&rows, x.cols())?;
    let labels = labels.map(|l| keep.iter().map(|&i| l[i]).collect());
    Ok((out, labels))
}

pub const STD_FLOOR: f64 = 1e-8;

/// Per-channel mean and standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    /// Pooled over every frame of every sequence; population std floored at
    /// [`STD_FLOOR`].
    pub fn fit<'a>(seqs: impl IntoIterator<Item = &'a Matrix>) -> Result<Self> {
        let seqs: Vec<&Matrix> = seqs.into_iter().collect();
        let d = seqs
            .first()
            .map(|m| m.cols())
            .ok_or_else(|| Error::invalid("standardization needs at least one training sequence"))?;
        let n: usize = seqs.iter().map(|m| m.rows()).sum();
        if n == 0 {
            return Err(Error::invalid("training sequences have no frames"));
        }
        if seqs.iter().any(|m| m.cols() != d) {
            return Err(Error::invalid("sequences differ in channel count"));
        }
        let mut mean = vec![0.0; d];
        for m in &seqs {
            for r in m.iter_rows() {
                for (a, v) in mean.iter_mut().zip(r) {
                    *a += v;
                }
            }
        }
        mean.iter_mut().for_each(|v| *v /= n as f64);
        let mut var = vec![0.0; d];
        for m in &seqs {
            for r in m.iter_rows() {
                for ((a, v), mu) in var.iter_mut().zip(r).zip(&mean) {
                    *a += (v - mu) * (v - mu);
                }
            }
        }
        let std = var.iter().map(|v| (v / n as f64).sqrt().max(STD_FLOOR)).collect();
        Ok(ChannelStats { mean, std })
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        self.map(x, |v, m, s| (v - m) / s)
    }

    pub fn invert(&self, z: &Matrix) -> Result<Matrix> {
        self.map(z, |v, m, s| v * s + m)
    }

    fn map(&self, x: &Matrix, f: impl Fn(f64, f64, f64) -> f64) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return Err(Error::invalid(format!(
                "sequence has {} channels, statistics have {}",
                x.cols(),
                self.mean.len()
            )));
        }
        let mut data = Vec::with_capacity(x.data().len());
        for r in x.iter_rows() {
            for ((v, m), s) in r.iter().zip(&self.mean).zip(&self.std) {
                data.push(f(*v, *m, *s));
            }
        }
        Matrix::from_vec(x.rows(), x.cols(), data)
    }
}

/// Fits statistics on `train` only and applies them to both sets.
pub fn standardize(train: &[Matrix], test: &[Matrix]) -> Result<(Vec<Matrix>, Vec<Matrix>, ChannelStats)> {
    let stats = ChannelStats::fit(train)?;
    let tr = train.iter().map(|m| stats.apply(m)).collect::<Result<_>>()?;
    let te = test.iter().map(|m| stats.apply(m)).collect::<Result<_>>()?;
    Ok((tr, te, stats))
}
