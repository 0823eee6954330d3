//! The annotation-scarce evaluation protocol: per split, standardize features
//! with training statistics, train one recognizer on the labeled trials, and
//! score it on the held-out subjects.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::data::{ChannelStats, Dataset, Split, SplitPlan};
use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::metrics::{score_set, SetScores};
use crate::models::{train_recognizer, FeatureExtractor, LabeledSequence, Recognizer};

use super::config::RecognizerSection;

/// Per-trial features keyed by trial id.
pub type FeatureTable = BTreeMap<String, Matrix>;

/// Encodes every trial of `ds`, standardizing kinematics with `normalizer`
/// first when one is given. Labels are never touched.
pub fn encode_dataset(
    ds: &Dataset,
    extractor: &FeatureExtractor,
    normalizer: Option<&ChannelStats>,
) -> Result<FeatureTable> {
    let mut out = FeatureTable::new();
    for t in &ds.trials {
        let x = match normalizer {
            Some(s) => s.apply(&t.kinematics)?,
            None => t.kinematics.clone(),
        };
        out.insert(t.trial_id.clone(), extractor.encode(&x)?);
    }
    Ok(out)
}

/// Deterministic per-split seed, independent of scheduling.
pub fn split_seed(master: u64, n_labeled: usize, split_id: usize) -> u64 {
    let mut z = master ^ splitmix64(((n_labeled as u64) << 32) | split_id as u64);
    z = splitmix64(z);
    z
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitResult {
    pub n_labeled: usize,
    pub split_id: usize,
    pub scores: SetScores,
}

fn lookup<'a>(features: &'a FeatureTable, id: &str) -> Result<&'a Matrix> {
    features
        .get(id)
        .ok_or_else(|| Error::invalid(format!("no features for trial `{id}`")))
}

/// Trains the recognizer of one split. Labels are requested through
/// `train_label` for the split's training trials only.
pub fn train_split<'a, L>(
    features: &FeatureTable,
    split: &Split,
    n_classes: usize,
    rec: &RecognizerSection,
    seed: u64,
    train_label: L,
) -> Result<(Recognizer, ChannelStats)>
where
    L: Fn(&str) -> Result<&'a [usize]>,
{
    let train_feats = split.train.iter().map(|id| lookup(features, id)).collect::<Result<Vec<_>>>()?;
    let stats = ChannelStats::fit(train_feats.iter().copied())?;
    let scaled = train_feats.iter().map(|m| stats.apply(m)).collect::<Result<Vec<_>>>()?;
    let labels = split.train.iter().map(|id| train_label(id)).collect::<Result<Vec<_>>>()?;
    let examples: Vec<LabeledSequence<'_>> = scaled
        .iter()
        .zip(&labels)
        .map(|(features, labels)| LabeledSequence { features, labels })
        .collect();
    let input_dim = scaled[0].cols();
    let mut model = Recognizer::new(rec.model_config(input_dim, n_classes), seed)?;
    train_recognizer(&mut model, &examples, &rec.train_config(seed))?;
    Ok((model, stats))
}

/// Predicts every test trial of `split`.
pub fn predict_split(
    features: &FeatureTable,
    split: &Split,
    model: &Recognizer,
    stats: &ChannelStats,
) -> Result<Vec<Vec<usize>>> {
    split
        .test
        .iter()
        .map(|id| model.predict(&stats.apply(lookup(features, id)?)?))
        .collect()
}

fn labels_of<'a>(ds: &'a Dataset, id: &str) -> Result<&'a [usize]> {
    ds.trial(id)
        .and_then(|t| t.labels.as_deref())
        .ok_or_else(|| Error::invalid(format!("trial `{id}` has no labels")))
}

/// Trains, predicts, and scores one split. Test labels are read only after
/// predictions exist.
pub fn run_split(
    ds: &Dataset,
    features: &FeatureTable,
    plan: &SplitPlan,
    split: &Split,
    rec: &RecognizerSection,
    master_seed: u64,
) -> Result<SplitResult> {
    let seed = split_seed(master_seed, plan.n_labeled, split.split_id);
    let (model, stats) = train_split(features, split, ds.n_classes(), rec, seed, |id| labels_of(ds, id))?;
    let preds = predict_split(features, split, &model, &stats)?;
    let truths = split.test.iter().map(|id| labels_of(ds, id)).collect::<Result<Vec<_>>>()?;
    Ok(SplitResult {
        n_labeled: plan.n_labeled,
        split_id: split.split_id,
        scores: score_set(&preds, &truths)?,
    })
}

/// Runs every split of `plan` on a pool of `workers` threads. Results come
/// back in split order whatever the width.
pub fn evaluate_plan(
    ds: &Dataset,
    features: &FeatureTable,
    plan: &SplitPlan,
    rec: &RecognizerSection,
    master_seed: u64,
    workers: usize,
) -> Result<Vec<SplitResult>> {
    if workers <= 1 {
        return plan
            .splits
            .iter()
            .map(|s| run_split(ds, features, plan, s, rec, master_seed))
            .collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| {
        plan.splits
            .par_iter()
            .map(|s| run_split(ds, features, plan, s, rec, master_seed))
            .collect()
    })
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn results_csv(rows: &[SplitResult]) -> String {
    let mut s = String::from("n_labeled,split_id,error_rate,edit_distance\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{}\n",
            r.n_labeled, r.split_id, r.scores.error_rate, r.scores.edit_distance
        ));
    }
    s
}

pub fn summary_csv(rows: &[SplitResult]) -> String {
    let mut s = String::from("n_labeled,n_splits,error_rate_mean,error_rate_std,edit_distance_mean,edit_distance_std\n");
    let mut groups: BTreeMap<usize, Vec<&SplitResult>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.n_labeled).or_default().push(r);
    }
    for (n, g) in groups {
        let er: Vec<f64> = g.iter().map(|r| r.scores.error_rate).collect();
        let ed: Vec<f64> = g.iter().map(|r| r.scores.edit_distance).collect();
        let (em, es) = mean_std(&er);
        let (dm, ds) = mean_std(&ed);
        s.push_str(&format!("{n},{},{em},{es},{dm},{ds}\n", g.len()));
    }
    s
}
