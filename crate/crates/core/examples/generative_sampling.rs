//! Trains the generative model on unlabeled synthetic kinematics, then
//! samples continuations of a held-out prefix and compares them with the
//! recorded frames.
//!
//! cargo run --release --example generative_sampling

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use surgrec::data::{synth_generate, ChannelStats, SynthConfig};
use surgrec::models::{train_generative, GenerativeConfig, GenerativeModel, TrainConfig};

fn main() -> surgrec::Result<()> {
    let ds = synth_generate(&SynthConfig::default())?.downsampled(6)?;
    let stats = ChannelStats::fit(ds.trials.iter().map(|t| &t.kinematics))?;
    let z: Vec<_> = ds.trials.iter().map(|t| stats.apply(&t.kinematics)).collect::<Result<_, _>>()?;
    let (train, held_out) = z.split_at(z.len() - 1);

    let mut model = GenerativeModel::new(GenerativeConfig { n_x: ds.n_x().unwrap(), n_h: 32, n_c: 4 }, 0)?;
    let before = model.nll(&held_out[0])?;
    let trace = train_generative(&mut model, train, &TrainConfig { epochs: 15, lr: 0.005, seed: 0, clip_norm: None })?;
    println!("training NLL per frame: {:.3} -> {:.3}", trace.first().unwrap(), trace.last().unwrap());
    println!("held-out NLL per frame: {before:.3} -> {:.3}", model.nll(&held_out[0])?);

    let (prefix, horizon) = (40, 20);
    let trial = &held_out[0];
    let truth = trial.slice_rows(prefix, prefix + horizon);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..3 {
        let sample = model.sample(&trial.slice_rows(0, prefix), horizon, &mut rng)?;
        let mse: f64 = sample
            .iter_rows()
            .zip(truth.iter_rows())
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)))
            .sum::<f64>()
            / (horizon * trial.cols()) as f64;
        println!("sample {i}: mean squared deviation from the recording {mse:.3} (standardized units)");
    }
    Ok(())
}
