//! Trains the windowed autoencoder and future predictor, then extracts
//! sliding-window features from one trial.
//!
//! cargo run --release --example windowed_models

use surgrec::data::{synth_generate, ChannelStats, SynthConfig};
use surgrec::models::{train_windowed, FeatureExtractor, TrainConfig, WindowConfig, WindowTask, WindowedModel};

fn main() -> surgrec::Result<()> {
    let ds = synth_generate(&SynthConfig::default())?.downsampled(6)?;
    let stats = ChannelStats::fit(ds.trials.iter().map(|t| &t.kinematics))?;
    let z: Vec<_> = ds.trials.iter().map(|t| stats.apply(&t.kinematics)).collect::<Result<_, _>>()?;
    let n_x = ds.n_x().unwrap();

    for task in [WindowTask::Autoencoder, WindowTask::FuturePrediction] {
        let cfg = WindowConfig { n_h: 16, n_c: 4, window: 16, ..WindowConfig::new(task, n_x) };
        let mut model = WindowedModel::new(cfg, 0)?;
        let trace = train_windowed(&mut model, &z, &TrainConfig { epochs: 200, lr: 0.005, seed: 0, clip_norm: None })?;
        println!(
            "{task:?}: loss per frame {:.3} -> {:.3} over {} epochs",
            trace.first().unwrap(),
            trace.last().unwrap(),
            trace.epoch_losses.len()
        );
        let feats = FeatureExtractor::Windowed(model).encode(&z[0])?;
        println!("  features for trial {}: {} x {}", ds.trials[0].trial_id, feats.rows(), feats.cols());
    }
    Ok(())
}
