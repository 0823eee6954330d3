//! The subcommands. Each writes its artifacts under the configured output
//! directory and a short report to `out`.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{ExperimentConfig, FeatureKind};
use super::protocol::{encode_dataset, evaluate_plan, results_csv, summary_csv, train_split, FeatureTable, SplitResult};
use crate::data::{load_dataset, make_splits, save_dataset, synth_generate, ChannelStats, Dataset, Split, Trial};
use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::metrics::{error_rate, to_segments};
use crate::models::{
    train_generative, train_windowed, Checkpoint, FeatureExtractor, GenerativeConfig, GenerativeModel, Model, Recognizer,
    RecognizerConfig, TrainingTrace, WindowConfig, WindowTask, WindowedModel,
};
use crate::optim::{grad_check, GradCheckOptions, Gradients, HasParameters};

/// Relative error above which a gradient check fails.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

fn io_out(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn matrix_csv(m: &Matrix) -> String {
    let mut s = String::new();
    for row in m.iter_rows() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&fields.join(","));
        s.push('\n');
    }
    s
}

/// Loads the configured dataset and decimates it.
pub fn load_prepared(cfg: &ExperimentConfig) -> Result<Dataset> {
    load_dataset(cfg.dataset_path()?)?.downsampled(cfg.downsample)
}

pub fn cmd_synth(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    let ds = synth_generate(&cfg.synth)?;
    let manifest = save_dataset(&ds, &cfg.output)?;
    let mut segments = 0usize;
    let mut frames = 0usize;
    for t in &ds.trials {
        segments += to_segments(t.labels.as_deref().unwrap_or(&[])).len();
        frames += t.len();
    }
    writeln!(
        out,
        "wrote {}: {} trials, {} subjects, K={}, mean segment length {:.1} frames",
        manifest.display(),
        ds.trials.len(),
        ds.subjects().len(),
        ds.n_classes(),
        frames as f64 / segments.max(1) as f64
    )
    .map_err(io_out)
}

/// Trains the configured representation on `trials` (already standardized).
pub fn train_representation(cfg: &ExperimentConfig, trials: &[Matrix]) -> Result<(Model, TrainingTrace)> {
    let n_x = trials
        .first()
        .map(|t| t.cols())
        .ok_or_else(|| Error::invalid("representation training needs at least one trial"))?;
    let tc = cfg.representation_train();
    match cfg.model {
        FeatureKind::Genmodel => {
            let mut m = GenerativeModel::new(cfg.generative_config(n_x), cfg.seed)?;
            let trace = train_generative(&mut m, trials, &tc)?;
            Ok((Model::Generative(m), trace))
        }
        FeatureKind::Autoencoder | FeatureKind::Futurepred => {
            let task = if cfg.model == FeatureKind::Autoencoder {
                WindowTask::Autoencoder
            } else {
                WindowTask::FuturePrediction
            };
            let mut m = WindowedModel::new(cfg.window_config(task, n_x), cfg.seed)?;
            let trace = train_windowed(&mut m, trials, &tc)?;
            Ok((Model::Windowed(m), trace))
        }
        FeatureKind::Raw => Err(Error::Usage("raw features have no representation to train".into())),
    }
}

pub fn cmd_train_rep(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    if cfg.model == FeatureKind::Raw {
        return Err(Error::Usage("raw features have no representation to train".into()));
    }
    let ds = load_prepared(cfg)?;
    let stats = ChannelStats::fit(ds.trials.iter().map(|t| &t.kinematics))?;
    let trials = ds.trials.iter().map(|t| stats.apply(&t.kinematics)).collect::<Result<Vec<_>>>()?;
    let (model, trace) = train_representation(cfg, &trials)?;
    let path = cfg.checkpoint_path();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Checkpoint { model, normalizer: Some(stats) }.save(&path)?;
    let trace_path = cfg.output.join(format!("{}_trace.csv", cfg.model.name()));
    write_file(&trace_path, &trace.to_csv())?;
    match (trace.first(), trace.last()) {
        (Some(a), Some(b)) => writeln!(out, "{}: loss {a:.4} -> {b:.4} over {} epochs", cfg.model.name(), trace.epoch_losses.len()),
        _ => writeln!(out, "{}: initialized without training", cfg.model.name()),
    }
    .map_err(io_out)?;
    writeln!(out, "checkpoint {}\ntrace {}", path.display(), trace_path.display()).map_err(io_out)
}

/// The extractor and input normalizer for the configured feature kind.
pub fn load_extractor(cfg: &ExperimentConfig) -> Result<(FeatureExtractor, Option<ChannelStats>)> {
    if cfg.model == FeatureKind::Raw {
        return Ok((FeatureExtractor::Raw, None));
    }
    let path = cfg
        .checkpoint
        .as_deref()
        .ok_or_else(|| Error::Usage(format!("{} features need `--checkpoint PATH`", cfg.model.name())))?;
    let ckpt = Checkpoint::load(path)?;
    if ckpt.model.kind_name() != cfg.model.name() {
        return Err(Error::Usage(format!(
            "checkpoint holds a {} model but the config asks for {}",
            ckpt.model.kind_name(),
            cfg.model.name()
        )));
    }
    Ok((FeatureExtractor::from_model(ckpt.model)?, ckpt.normalizer))
}

pub fn extract_features(cfg: &ExperimentConfig, ds: &Dataset) -> Result<FeatureTable> {
    let (extractor, normalizer) = load_extractor(cfg)?;
    encode_dataset(ds, &extractor, normalizer.as_ref())
}

pub fn cmd_encode(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    let ds = load_prepared(cfg)?;
    let feats = extract_features(cfg, &ds)?;
    let encoded = Dataset {
        trials: ds
            .trials
            .iter()
            .map(|t| Trial { kinematics: feats[&t.trial_id].clone(), ..t.clone() })
            .collect(),
        ..ds
    };
    let manifest = save_dataset(&encoded, &cfg.output)?;
    writeln!(
        out,
        "wrote {} {}-dimensional feature sequences to {}",
        encoded.trials.len(),
        encoded.n_x().unwrap_or(0),
        manifest.display()
    )
    .map_err(io_out)
}

pub fn cmd_train_rec(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    let ds = load_prepared(cfg)?;
    let ids: Vec<String> = match &cfg.recognizer.train_trials {
        Some(ids) => ids.clone(),
        None => ds.trials.iter().filter(|t| t.labels.is_some()).map(|t| t.trial_id.clone()).collect(),
    };
    if ids.is_empty() {
        return Err(Error::invalid("no labeled trials to train on"));
    }
    let feats = extract_features(cfg, &ds)?;
    let split = Split { split_id: 0, train: ids, test: Vec::new() };
    let label = |id: &str| -> Result<&[usize]> {
        let t = ds.trial(id).ok_or_else(|| Error::invalid(format!("unknown trial `{id}`")))?;
        t.labels.as_deref().ok_or_else(|| Error::invalid(format!("trial `{id}` has no labels")))
    };
    let (model, stats) = train_split(&feats, &split, ds.n_classes(), &cfg.recognizer, cfg.seed, label)?;
    let mut errors = Vec::new();
    for id in &split.train {
        let pred = model.predict(&stats.apply(&feats[id])?)?;
        errors.push(error_rate(&pred, label(id)?)?);
    }
    let path = cfg
        .recognizer_checkpoint
        .clone()
        .unwrap_or_else(|| cfg.output.join("recognizer.ckpt"));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Checkpoint { model: Model::Recognizer(model), normalizer: Some(stats) }.save(&path)?;
    writeln!(
        out,
        "recognizer on {} trials: training error {:.4}; checkpoint {}",
        split.train.len(),
        errors.iter().sum::<f64>() / errors.len() as f64,
        path.display()
    )
    .map_err(io_out)
}

/// Range of labeled-trial counts the config asks for, given `u` subjects.
pub fn n_labeled_range(cfg: &ExperimentConfig, u: usize) -> Result<std::ops::RangeInclusive<usize>> {
    if u < 2 {
        return Err(Error::invalid(format!(
            "the protocol needs at least 2 subjects, the dataset has {u}"
        )));
    }
    let hi = cfg.splits.n_labeled_max.unwrap_or(u - 1);
    let lo = cfg.splits.n_labeled_min;
    if lo < 1 || lo > hi || hi > u - 1 {
        return Err(Error::invalid(format!("n_labeled range {lo}..={hi} must lie within 1..={}", u - 1)));
    }
    Ok(lo..=hi)
}

/// Every split of every configured labeled-trial count.
pub fn evaluate(cfg: &ExperimentConfig, ds: &Dataset, feats: &FeatureTable) -> Result<Vec<SplitResult>> {
    let mut rows = Vec::new();
    for n in n_labeled_range(cfg, ds.subjects().len())? {
        let plan = make_splits(ds, n, cfg.seed)?;
        plan.save(&cfg.output.join(format!("splits_n{n}.json")))?;
        rows.extend(evaluate_plan(ds, feats, &plan, &cfg.recognizer, cfg.seed, cfg.workers)?);
    }
    Ok(rows)
}

pub fn cmd_evaluate(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    let ds = load_prepared(cfg)?;
    let feats = extract_features(cfg, &ds)?;
    fs::create_dir_all(&cfg.output).map_err(|e| Error::io(&cfg.output, e))?;
    let rows = evaluate(cfg, &ds, &feats)?;
    let results = cfg.output.join("results.csv");
    let summary = cfg.output.join("summary.csv");
    write_file(&results, &results_csv(&rows))?;
    let summary_text = summary_csv(&rows);
    write_file(&summary, &summary_text)?;
    write!(out, "{summary_text}").map_err(io_out)?;
    writeln!(out, "results {}\nsummary {}", results.display(), summary.display()).map_err(io_out)
}

pub fn cmd_sample(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    let s = &cfg.sample;
    if s.horizon == 0 {
        return Err(Error::invalid("sampling horizon must be at least 1"));
    }
    if s.n_samples == 0 {
        return Err(Error::invalid("n_samples must be at least 1"));
    }
    let path = cfg
        .checkpoint
        .as_deref()
        .ok_or_else(|| Error::Usage("sampling needs `--checkpoint PATH` to a genmodel".into()))?;
    let ckpt = Checkpoint::load(path)?;
    let Model::Generative(model) = ckpt.model else {
        return Err(Error::Usage(format!("sampling needs a genmodel checkpoint, got {}", ckpt.model.kind_name())));
    };
    let ds = load_prepared(cfg)?;
    let trial = match &s.trial {
        Some(id) => ds.trial(id).ok_or_else(|| Error::invalid(format!("unknown trial `{id}`")))?,
        None => ds.trials.first().ok_or_else(|| Error::invalid("dataset has no trials"))?,
    };
    if s.prefix > trial.len() {
        return Err(Error::invalid(format!(
            "prefix of {} frames exceeds trial `{}` of {} frames",
            s.prefix,
            trial.trial_id,
            trial.len()
        )));
    }
    let identity = ChannelStats { mean: vec![0.0; trial.kinematics.cols()], std: vec![1.0; trial.kinematics.cols()] };
    let stats = ckpt.normalizer.unwrap_or(identity);
    let z = stats.apply(&trial.kinematics)?;
    let prefix = z.slice_rows(0, s.prefix);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for i in 0..s.n_samples {
        let sample = stats.invert(&model.sample(&prefix, s.horizon, &mut rng)?)?;
        write_file(&cfg.output.join(format!("sample_{i:02}.csv")), &matrix_csv(&sample))?;
    }
    let end = (s.prefix + s.horizon).min(trial.len());
    write_file(&cfg.output.join("prefix.csv"), &matrix_csv(&trial.kinematics.slice_rows(0, s.prefix)))?;
    write_file(&cfg.output.join("ground_truth.csv"), &matrix_csv(&trial.kinematics.slice_rows(s.prefix, end)))?;
    writeln!(
        out,
        "wrote {} samples of {} frames after a {}-frame prefix of `{}` to {}",
        s.n_samples,
        s.horizon,
        s.prefix,
        trial.trial_id,
        cfg.output.display()
    )
    .map_err(io_out)
}

/// Outcome of one loss's gradient check.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckLine {
    pub loss: &'static str,
    pub max_error: f64,
    pub worst_tensor: String,
}

impl GradCheckLine {
    pub fn passed(&self) -> bool {
        self.max_error < GRADCHECK_TOLERANCE
    }
}

pub const GRADCHECK_LOSSES: [&str; 4] = ["genmodel", "autoencoder", "futurepred", "recognizer"];

fn random_matrix(t: usize, d: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let data = (0..t * d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            GRADCHECK_INPUT_SCALE * z
        })
        .collect();
    Matrix::from_vec(t, d, data).expect("finite")
}

/// Weight spread applied to the tiny models before checking. At the small
/// initialization some gradient coordinates fall near 1e-8, where roundoff in
/// the central difference alone exceeds the tolerance.
const GRADCHECK_WEIGHT_SCALE: f64 = 3.0;
const GRADCHECK_INPUT_SCALE: f64 = 2.0;

fn check_one<M: HasParameters>(
    loss: &'static str,
    model: &mut M,
    f: impl Fn(&M) -> Result<f64>,
    mut grads: Gradients,
    fault: bool,
    seed: u64,
) -> Result<GradCheckLine> {
    if fault {
        let first = model.params().ids().next().expect("models have tensors");
        grads.get_mut(first).iter_mut().for_each(|g| *g *= 2.0);
    }
    let report = grad_check(model, f, &grads, GradCheckOptions { seed, ..GradCheckOptions::default() })?;
    let (worst, max) = report.worst_tensor().map(|(n, e)| (n.to_string(), e)).unwrap_or_default();
    Ok(GradCheckLine { loss, max_error: max, worst_tensor: worst })
}

/// Gradient checks of every training loss on tiny seeded models. `fault`
/// doubles the analytic gradient of one tensor of the named loss.
pub fn run_gradchecks(seed: u64, fault: Option<&str>) -> Result<Vec<GradCheckLine>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_x = 3;
    let faulty = |name: &str| fault == Some(name);
    let mut lines = Vec::new();

    let mut gen = GenerativeModel::new(GenerativeConfig { n_x, n_h: 5, n_c: 3 }, seed)?;
    gen.params_mut().scale_values(GRADCHECK_WEIGHT_SCALE);
    let x = random_matrix(10, n_x, &mut rng);
    let (_, g) = gen.nll_grad(&x)?;
    lines.push(check_one("genmodel", &mut gen, |m| m.nll(&x), g, faulty("genmodel"), seed)?);

    let mut ae = WindowedModel::new(WindowConfig { task: WindowTask::Autoencoder, n_x, n_h: 4, n_c: 2, window: 8 }, seed)?;
    ae.params_mut().scale_values(GRADCHECK_WEIGHT_SCALE);
    let w = random_matrix(8, n_x, &mut rng);
    let (_, g) = ae.autoencoder_loss_grad(&w)?;
    lines.push(check_one("autoencoder", &mut ae, |m| m.autoencoder_loss(&w), g, faulty("autoencoder"), seed)?);

    let mut fp = WindowedModel::new(WindowConfig { task: WindowTask::FuturePrediction, n_x, n_h: 4, n_c: 2, window: 6 }, seed)?;
    fp.params_mut().scale_values(GRADCHECK_WEIGHT_SCALE);
    let past = random_matrix(6, n_x, &mut rng);
    let future = random_matrix(6, n_x, &mut rng);
    let (_, g) = fp.futurepred_loss_grad(&past, &future)?;
    lines.push(check_one("futurepred", &mut fp, |m| m.futurepred_loss(&past, &future), g, faulty("futurepred"), seed)?);

    let rc = RecognizerConfig { input_dim: n_x, n_classes: 3, layers: 2, hidden: 3, hidden_is_total: false };
    let mut rec = Recognizer::new(rc, seed)?;
    rec.params_mut().scale_values(GRADCHECK_WEIGHT_SCALE);
    let feats = random_matrix(12, n_x, &mut rng);
    let labels: Vec<usize> = (0..12).map(|t| (t / 4) % 3).collect();
    let (_, g) = rec.loss_grad(&feats, &labels)?;
    lines.push(check_one("recognizer", &mut rec, |m| m.loss(&feats, &labels), g, faulty("recognizer"), seed)?);
    Ok(lines)
}

/// Prints one line per loss; fails when any exceeds the tolerance.
pub fn cmd_gradcheck(seed: u64, fault: Option<&str>, out: &mut dyn Write) -> Result<()> {
    if let Some(f) = fault {
        if !GRADCHECK_LOSSES.contains(&f) {
            return Err(Error::Usage(format!("unknown loss `{f}`")));
        }
    }
    let lines = run_gradchecks(seed, fault)?;
    for l in &lines {
        writeln!(
            out,
            "{:<12} max_rel_error={:.3e} worst={} {}",
            l.loss,
            l.max_error,
            l.worst_tensor,
            if l.passed() { "PASS" } else { "FAIL" }
        )
        .map_err(io_out)?;
    }
    match lines.iter().find(|l| !l.passed()) {
        Some(l) => Err(Error::invalid(format!(
            "gradient check failed for {} (tensor `{}`, relative error {:.3e})",
            l.loss, l.worst_tensor, l.max_error
        ))),
        None => Ok(()),
    }
}
