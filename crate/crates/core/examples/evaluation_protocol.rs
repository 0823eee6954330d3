//! Builds split plans for each labeled-user count and runs the per-split
//! evaluation on raw features with a small recognizer.
//!
//! cargo run --release --example evaluation_protocol

use surgrec::cli::{encode_dataset, evaluate_plan, summary_csv, RecognizerSection};
use surgrec::data::{make_splits, synth_generate, SynthConfig};
use surgrec::models::FeatureExtractor;

fn main() -> surgrec::Result<()> {
    let cfg = SynthConfig { n_subjects: 4, trials_per_subject: 2, ..SynthConfig::default() };
    let ds = synth_generate(&cfg)?.downsampled(6)?;
    let feats = encode_dataset(&ds, &FeatureExtractor::Raw, None)?;
    let rec = RecognizerSection { layers: 1, hidden: 16, epochs: 20, ..RecognizerSection::default() };

    let mut rows = Vec::new();
    for n in 1..ds.subjects().len() {
        let plan = make_splits(&ds, n, 0)?;
        plan.check(&ds)?;
        println!("n_labeled {n}: {:?} mode, {} splits", plan.mode, plan.splits.len());
        if let Some(s) = plan.splits.first() {
            println!("  split 0 trains on {:?}, tests on {} trials", s.train, s.test.len());
        }
        rows.extend(evaluate_plan(&ds, &feats, &plan, &rec, 0, 1)?);
    }
    print!("{}", summary_csv(&rows));
    Ok(())
}
