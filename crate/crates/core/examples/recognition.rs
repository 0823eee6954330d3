//! Trains a recognizer on two labeled trials and scores it on held-out
//! subjects, once from raw kinematics and once from generative-model
//! features learned on all unlabeled trials.
//!
//! cargo run --release --example recognition

use surgrec::cli::RecognizerSection;
use surgrec::data::{synth_generate, ChannelStats, SynthConfig};
use surgrec::math::Matrix;
use surgrec::metrics::score_set;
use surgrec::models::{
    train_generative, train_recognizer, FeatureExtractor, GenerativeConfig, GenerativeModel, LabeledSequence,
    Recognizer, TrainConfig,
};

fn main() -> surgrec::Result<()> {
    let ds = synth_generate(&SynthConfig::default())?.downsampled(6)?;
    let stats = ChannelStats::fit(ds.trials.iter().map(|t| &t.kinematics))?;
    let z: Vec<Matrix> = ds.trials.iter().map(|t| stats.apply(&t.kinematics)).collect::<Result<_, _>>()?;

    let mut gen = GenerativeModel::new(GenerativeConfig { n_x: ds.n_x().unwrap(), n_h: 32, n_c: 4 }, 0)?;
    train_generative(&mut gen, &z, &TrainConfig { epochs: 20, lr: 0.005, seed: 0, clip_norm: None })?;

    // the first trial of subjects 0 and 1 is labeled; subjects 2.. are test
    let subjects = ds.subjects();
    let train_idx: Vec<usize> = subjects[..2]
        .iter()
        .map(|s| ds.trials.iter().position(|t| &t.subject_id == s).unwrap())
        .collect();
    let test_idx: Vec<usize> = (0..ds.trials.len()).filter(|&i| !subjects[..2].contains(&ds.trials[i].subject_id)).collect();

    let rec = RecognizerSection { layers: 2, hidden: 32, epochs: 40, ..RecognizerSection::default() };
    for (name, extractor) in [("raw", FeatureExtractor::Raw), ("genmodel", FeatureExtractor::Generative(gen))] {
        let feats: Vec<Matrix> = z.iter().map(|x| extractor.encode(x)).collect::<Result<_, _>>()?;
        let norm = ChannelStats::fit(train_idx.iter().map(|&i| &feats[i]))?;
        let feats: Vec<Matrix> = feats.iter().map(|f| norm.apply(f)).collect::<Result<_, _>>()?;

        let examples: Vec<LabeledSequence> = train_idx
            .iter()
            .map(|&i| LabeledSequence { features: &feats[i], labels: ds.trials[i].labels.as_deref().unwrap() })
            .collect();
        let mut model = Recognizer::new(rec.model_config(feats[0].cols(), ds.n_classes()), 0)?;
        train_recognizer(&mut model, &examples, &rec.train_config(0))?;

        let preds: Vec<Vec<usize>> = test_idx.iter().map(|&i| model.predict(&feats[i])).collect::<Result<_, _>>()?;
        let truths: Vec<&[usize]> = test_idx.iter().map(|&i| ds.trials[i].labels.as_deref().unwrap()).collect();
        let scores = score_set(&preds, &truths)?;
        println!(
            "{name:>8}: test error {:.1}%, normalized edit distance {:.1}",
            100.0 * scores.error_rate,
            scores.edit_distance
        );
    }
    Ok(())
}
