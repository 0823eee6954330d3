//! Generates the default synthetic dataset, prints its shape and label
//! statistics, and writes it to disk in the manifest format the CLI reads.
//!
//! cargo run --release --example synth_dataset [OUTPUT_DIR]

use surgrec::data::{save_dataset, synth_generate, SynthConfig};
use surgrec::metrics::to_segments;

fn main() -> surgrec::Result<()> {
    let cfg = SynthConfig::default();
    let ds = synth_generate(&cfg)?;
    println!(
        "{} trials from {} subjects, {} channels, {} activities",
        ds.trials.len(),
        ds.subjects().len(),
        ds.n_x().unwrap_or(0),
        ds.n_classes()
    );

    let mut class_frames = vec![0usize; ds.n_classes()];
    let mut segments = 0;
    for t in &ds.trials {
        let labels = t.labels.as_deref().unwrap_or_default();
        for &y in labels {
            class_frames[y] += 1;
        }
        segments += to_segments(labels).len();
    }
    let frames: usize = class_frames.iter().sum();
    println!("mean segment length {:.1} raw frames", frames as f64 / segments as f64);
    for (name, n) in ds.activity_names.iter().zip(&class_frames) {
        println!("  {name}: {:.1}% of frames", 100.0 * *n as f64 / frames as f64);
    }

    let small = ds.downsampled(6)?;
    println!("after downsampling by 6: {} frames per trial", small.trials[0].len());

    if let Some(dir) = std::env::args().nth(1) {
        let manifest = save_dataset(&ds, std::path::Path::new(&dir))?;
        println!("wrote {}", manifest.display());
    }
    Ok(())
}
