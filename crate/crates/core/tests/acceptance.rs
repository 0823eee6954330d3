//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.
//!
//! `ACCEPTANCE_ONLY=1,3` restricts the run to the listed criteria.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use surgrec::cli::{
    encode_dataset, evaluate_plan, mean_std, run_gradchecks, ExperimentConfig, FeatureKind, RecognizerSection,
    GRADCHECK_LOSSES,
};
use surgrec::data::{make_splits, synth_generate, ChannelStats, Dataset, SplitMode, SynthConfig, Trial};
use surgrec::math::Matrix;
use surgrec::mdn::{mdn_nll, mdn_params, MdnParams, MdnWeights, VARIANCE_FLOOR};
use surgrec::optim::LR_RECOGNIZER;
use surgrec::metrics::{edit_distance, error_rate, levenshtein, to_segments};
use surgrec::models::{
    train_generative, train_recognizer, FeatureExtractor, GenerativeConfig, GenerativeModel, LabeledSequence,
    Recognizer, RecognizerConfig, TrainConfig,
};

type Outcome = Result<String, String>;

/// Prefix of a successful outcome that did not run; such criteria are unscored.
const SKIPPED: &str = "skipped: ";
type Criterion = (u32, &'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: u64, what: &str) -> Result<(), String> {
    check(elapsed.as_secs_f64() < limit_s as f64, || {
        format!("{what} took {:.1}s, limit {limit_s}s", elapsed.as_secs_f64())
    })
}

fn default_data() -> Dataset {
    synth_generate(&SynthConfig::default())
        .and_then(|d| d.downsampled(6))
        .expect("default synthetic dataset")
}

fn standardized(ds: &Dataset) -> (ChannelStats, Vec<Matrix>) {
    let stats = ChannelStats::fit(ds.trials.iter().map(|t| &t.kinematics)).unwrap();
    let z = ds.trials.iter().map(|t| stats.apply(&t.kinematics).unwrap()).collect();
    (stats, z)
}

// ---------------------------------------------------------------- 1

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let lines = run_gradchecks(0, None).map_err(|e| e.to_string())?;
    let names: Vec<&str> = lines.iter().map(|l| l.loss).collect();
    check(names == GRADCHECK_LOSSES, || format!("losses covered: {names:?}"))?;
    let mut detail = Vec::new();
    for l in &lines {
        check(l.max_error < 1e-4, || format!("{} max relative error {:.3e} in {}", l.loss, l.max_error, l.worst_tensor))?;
        detail.push(format!("{}={:.1e}", l.loss, l.max_error));
    }
    within(start.elapsed(), 60, "gradient check")?;
    Ok(detail.join(" "))
}

// ---------------------------------------------------------------- 2

fn normal_pdf(x: f64, mu: f64, v: f64) -> f64 {
    (-(x - mu) * (x - mu) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt()
}

fn random_params(rng: &mut ChaCha8Rng) -> (MdnParams, Vec<f64>) {
    let nc = rng.random_range(1..=6);
    let nx = rng.random_range(1..=4);
    let raw: Vec<f64> = (0..nc).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let pi = raw.iter().map(|p| p / total).collect();
    let mu: Vec<Vec<f64>> = (0..nc).map(|_| (0..nx).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let v = (0..nc).map(|_| (0..nx).map(|_| rng.random_range(0.2..3.0)).collect()).collect();
    let x = (0..nx).map(|_| rng.random_range(-3.0..3.0)).collect();
    (MdnParams { pi, mu, v }, x)
}

fn likelihood_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let (p, x) = random_params(&mut rng);
        let density: f64 = (0..p.n_c())
            .map(|c| p.pi[c] * x.iter().enumerate().map(|(d, xd)| normal_pdf(*xd, p.mu[c][d], p.v[c][d])).product::<f64>())
            .sum();
        let oracle = -density.ln();
        let got = mdn_nll(&p, &x).map_err(|e| e.to_string())?;
        let err = (got - oracle).abs();
        check(err < 1e-10, || format!("case {case}: nll {got} vs oracle {oracle}"))?;
        worst = worst.max(err);
    }

    // head outputs, including pre-activations far into saturation
    let mut max_sum_err: f64 = 0.0;
    let mut min_var = f64::INFINITY;
    for _ in 0..1000 {
        let (nc, nx, nh) = (rng.random_range(1..=6), rng.random_range(1..=4), rng.random_range(1..=8));
        let scale = [0.1, 1.0, 30.0, 1000.0][rng.random_range(0..4)];
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect() };
        let (pi_w, pi_b, mu_w, mu_b, v_w, v_b) =
            (draw(nc * nh), draw(nc), draw(nc * nx * nh), draw(nc * nx), draw(nc * nx * nh), draw(nc * nx));
        let h = draw(nh);
        let w = MdnWeights {
            n_c: nc,
            n_x: nx,
            n_h: nh,
            pi_w: &pi_w,
            pi_b: &pi_b,
            mu_w: &mu_w,
            mu_b: &mu_b,
            v_w: &v_w,
            v_b: &v_b,
        };
        let p = mdn_params(&h, &w).map_err(|e| e.to_string())?;
        max_sum_err = max_sum_err.max((p.pi.iter().sum::<f64>() - 1.0).abs());
        min_var = p.v.iter().flatten().copied().fold(min_var, f64::min);
    }
    check(max_sum_err <= 1e-12, || format!("mixture weights sum off by {max_sum_err:e}"))?;
    check(min_var >= VARIANCE_FLOOR, || format!("variance {min_var:e} below the floor"))?;
    Ok(format!("max |nll - oracle| = {worst:.1e}, max |sum pi - 1| = {max_sum_err:.1e}, min v = {min_var:.1e}"))
}

// ---------------------------------------------------------------- 3

fn naive_levenshtein(a: &[usize], b: &[usize]) -> usize {
    match (a.split_first(), b.split_first()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => {
            let sub = naive_levenshtein(ra, rb) + usize::from(x != y);
            sub.min(naive_levenshtein(ra, b) + 1).min(naive_levenshtein(a, rb) + 1)
        }
    }
}

/// A label sequence whose segment string is `symbols` (adjacent repeats
/// merged), each segment 1-3 frames long.
fn expand(symbols: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut out = Vec::new();
    for &s in symbols {
        let n = rng.random_range(1..=3);
        out.extend(std::iter::repeat_n(s, n));
    }
    out
}

fn segment_string(labels: &[usize]) -> Vec<usize> {
    to_segments(labels).iter().map(|s| s.activity).collect()
}

fn metric_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let random_string = |rng: &mut ChaCha8Rng, max_len: usize, alphabet: usize| -> Vec<usize> {
        let n = rng.random_range(0..=max_len);
        (0..n).map(|_| rng.random_range(0..alphabet)).collect()
    };
    for case in 0..1000 {
        let alphabet = rng.random_range(1..=5);
        let a = random_string(&mut rng, 8, alphabet);
        let b = random_string(&mut rng, 8, alphabet);
        let la = expand(&a, &mut rng);
        let lb = expand(&b, &mut rng);
        let (sa, sb) = (segment_string(&la), segment_string(&lb));
        let got = edit_distance(&to_segments(&la), &to_segments(&lb));
        let want = naive_levenshtein(&sa, &sb);
        check(got == want, || format!("case {case}: {sa:?} vs {sb:?} gave {got}, oracle {want}"))?;
    }
    for case in 0..1000 {
        let t = rng.random_range(1..=40);
        let p: Vec<usize> = (0..t).map(|_| rng.random_range(0..4)).collect();
        let q: Vec<usize> = (0..t).map(|_| rng.random_range(0..4)).collect();
        let mut wrong = 0;
        for i in 0..t {
            if p[i] != q[i] {
                wrong += 1;
            }
        }
        let e = error_rate(&p, &q).map_err(|e| e.to_string())?;
        check(e == wrong as f64 / t as f64, || format!("error-rate case {case}"))?;
        check(e == error_rate(&q, &p).unwrap() && (0.0..=1.0).contains(&e), || format!("error-rate symmetry case {case}"))?;
    }
    for case in 0..2000 {
        let alphabet = rng.random_range(1..=5);
        let a = random_string(&mut rng, 10, alphabet);
        let b = random_string(&mut rng, 10, alphabet);
        let c = random_string(&mut rng, 10, alphabet);
        let (ab, ba) = (levenshtein(&a, &b), levenshtein(&b, &a));
        check(ab == ba, || format!("symmetry fails on case {case}"))?;
        check((ab == 0) == (a == b), || format!("identity fails on case {case}"))?;
        check(levenshtein(&a, &c) <= ab + levenshtein(&b, &c), || format!("triangle fails on case {case}"))?;
    }
    within(start.elapsed(), 30, "metric checks")?;
    Ok(format!("1000 oracle pairs, 1000 error-rate cases, 2000 axiom triples in {:.2}s", start.elapsed().as_secs_f64()))
}

// ---------------------------------------------------------------- 4

fn overfit_sanity() -> Outcome {
    let start = Instant::now();
    let ds = default_data();
    let (_, z) = standardized(&ds);
    let trial = &z[0];
    let mut g = GenerativeModel::new(GenerativeConfig { n_x: trial.cols(), n_h: 32, n_c: 4 }, 4).map_err(|e| e.to_string())?;
    let tc = TrainConfig { epochs: 100, lr: 0.005, seed: 4, clip_norm: None };
    let trace = train_generative(&mut g, std::slice::from_ref(trial), &tc).map_err(|e| e.to_string())?;
    let (first, last) = (trace.first().ok_or("no epochs ran")?, trace.last().ok_or("no epochs ran")?);
    check(first - last >= 1.0, || format!("genmodel NLL fell only {first:.3} -> {last:.3} nats/frame"))?;

    let labels = ds.trials[0].labels.as_deref().unwrap();
    let mut r = Recognizer::new(RecognizerConfig::new(trial.cols(), ds.n_classes()), 4).map_err(|e| e.to_string())?;
    let ex = [LabeledSequence { features: trial, labels }];
    train_recognizer(&mut r, &ex, &TrainConfig { epochs: 100, lr: LR_RECOGNIZER, seed: 4, clip_norm: None })
        .map_err(|e| e.to_string())?;
    let err = error_rate(&r.predict(trial).map_err(|e| e.to_string())?, labels).map_err(|e| e.to_string())?;
    check(err < 0.05, || format!("recognizer training error {err:.3}"))?;
    within(start.elapsed(), 300, "overfit sanity")?;
    Ok(format!("genmodel NLL {first:.3} -> {last:.3} nats/frame; recognizer training error {err:.3}"))
}

// ---------------------------------------------------------------- 5

const TREND_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn genmodel_features(ds: &Dataset, seed: u64) -> Result<BTreeMap<String, Matrix>, String> {
    let (stats, z) = standardized(ds);
    let mut g = GenerativeModel::new(GenerativeConfig::new(ds.n_x().unwrap()), seed).map_err(|e| e.to_string())?;
    let tc = ExperimentConfig { seed, ..ExperimentConfig::default() }.representation_train();
    train_generative(&mut g, &z, &tc).map_err(|e| e.to_string())?;
    encode_dataset(ds, &FeatureExtractor::Generative(g), Some(&stats)).map_err(|e| e.to_string())
}

fn errors_for(ds: &Dataset, feats: &BTreeMap<String, Matrix>, n: usize, seed: u64) -> Result<Vec<f64>, String> {
    let plan = make_splits(ds, n, seed).map_err(|e| e.to_string())?;
    let rows = evaluate_plan(ds, feats, &plan, &RecognizerSection::default(), seed, 1).map_err(|e| e.to_string())?;
    Ok(rows.iter().map(|r| r.scores.error_rate).collect())
}

fn directional_trend() -> Outcome {
    let start = Instant::now();
    let ds = default_data();
    let u = ds.subjects().len();
    let raw = encode_dataset(&ds, &FeatureExtractor::Raw, None).map_err(|e| e.to_string())?;
    let (mut raw_err, mut gen_err) = (Vec::new(), Vec::new());
    let mut seed0_features = None;
    for &seed in &TREND_SEEDS {
        let gen = genmodel_features(&ds, seed)?;
        raw_err.extend(errors_for(&ds, &raw, 1, seed)?);
        gen_err.extend(errors_for(&ds, &gen, 1, seed)?);
        eprintln!(
            "  seed {seed}: running means raw {:.4} genmodel {:.4} ({:.0}s)",
            mean_std(&raw_err).0,
            mean_std(&gen_err).0,
            start.elapsed().as_secs_f64()
        );
        if seed0_features.is_none() {
            seed0_features = Some(gen);
        }
    }
    let (raw_mean, _) = mean_std(&raw_err);
    let (gen_mean, _) = mean_std(&gen_err);
    let mut curve = vec![(gen_mean, mean_std(&gen_err).1, gen_err.len())];
    let gen = seed0_features.unwrap();
    for n in 2..u {
        let e = errors_for(&ds, &gen, n, TREND_SEEDS[0])?;
        let (m, s) = mean_std(&e);
        eprintln!("  n_labeled {n}: mean {m:.4} over {} splits ({:.0}s)", e.len(), start.elapsed().as_secs_f64());
        curve.push((m, s, e.len()));
    }
    let curve_text: Vec<String> = curve.iter().enumerate().map(|(i, c)| format!("{}:{:.3}", i + 1, c.0)).collect();
    check(gen_mean <= raw_mean, || {
        format!("n_labeled=1 genmodel error {gen_mean:.4} > raw error {raw_mean:.4}; curve {}", curve_text.join(" "))
    })?;
    for w in curve.windows(2) {
        let (m0, s0, n0) = w[0];
        let (m1, s1, n1) = w[1];
        let pooled = (s0 * s0 / n0 as f64 + s1 * s1 / n1 as f64).sqrt();
        check(m1 <= m0 + pooled, || {
            format!("error rises beyond one pooled standard error: curve {}", curve_text.join(" "))
        })?;
    }
    within(start.elapsed(), 7200, "directional trend")?;
    Ok(format!(
        "n_labeled=1 mean error raw {raw_mean:.4} vs genmodel {gen_mean:.4} over {} runs; genmodel curve {}",
        raw_err.len(),
        curve_text.join(" ")
    ))
}

// ---------------------------------------------------------------- 6

fn protocol_correctness() -> Outcome {
    let ds = default_data();
    let u = ds.subjects().len();
    let mut counts = Vec::new();
    for n in 1..u {
        for seed in [0, 1] {
            let plan = make_splits(&ds, n, seed).map_err(|e| e.to_string())?;
            plan.check(&ds).map_err(|e| e.to_string())?;
            for s in &plan.splits {
                let train_subjects: Vec<&str> = s.train.iter().map(|id| ds.trial(id).unwrap().subject_id.as_str()).collect();
                let mut distinct = train_subjects.clone();
                distinct.sort();
                distinct.dedup();
                check(s.train.len() == n && distinct.len() == n, || format!("split {} of n={n} breaks one-per-user", s.split_id))?;
                check(
                    s.test.iter().all(|id| !train_subjects.contains(&ds.trial(id).unwrap().subject_id.as_str())),
                    || format!("split {} of n={n} shares a subject", s.split_id),
                )?;
            }
            if seed == 0 {
                counts.push(plan.splits.len());
            }
        }
    }
    let one = make_splits(&ds, 1, 0).unwrap();
    check(one.mode == SplitMode::Exhaustive && one.splits.len() == ds.trials.len(), || {
        format!("n_labeled=1 gave {} splits for {} trials", one.splits.len(), ds.trials.len())
    })?;

    // 39 trials over 15 subjects, as in the larger public dataset
    let mut trials = Vec::new();
    for s in 0..15 {
        for j in 0..if s < 9 { 3 } else { 2 } {
            trials.push(Trial {
                trial_id: format!("{s}_{j}"),
                subject_id: format!("{s}"),
                kinematics: Matrix::zeros(2, 1),
                labels: Some(vec![0, 0]),
            });
        }
    }
    let big = Dataset { trials, activity_names: vec!["a".into()], sample_rate_hz: 30.0 };
    let plan = make_splits(&big, 1, 0).unwrap();
    check(plan.splits.len() == 39, || format!("39-trial dataset gave {} splits", plan.splits.len()))?;
    Ok(format!("split counts for n_labeled 1..{}: {counts:?}", u - 1))
}

// ---------------------------------------------------------------- 7

fn run_cli(args: &[&str]) -> Result<String, String> {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = surgrec::cli::main_with_args(std::iter::once("surgrec").chain(args.iter().copied()), &mut out, &mut err);
    if code != 0 {
        return Err(format!("`{}` exited {code}: {}", args.join(" "), String::from_utf8_lossy(&err)));
    }
    Ok(String::from_utf8_lossy(&out).into_owned())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |s: &str| dir.path().join(s).to_string_lossy().into_owned();
    let (data, rep) = (p("data"), p("rep"));
    let manifest = format!("{data}/manifest.json");
    run_cli(&["synth", "--output", &data, "--synth.n_subjects", "4", "--synth.trials_per_subject", "2", "--synth.trial_len", "480"])?;
    let small = ["--genmodel.n_h", "8", "--genmodel.n_c", "2", "--representation.epochs", "2"];
    let mut args = vec!["train-rep", "--dataset", &manifest, "--output", &rep];
    args.extend(small);
    run_cli(&args)?;
    let ckpt = format!("{rep}/genmodel.ckpt");
    let mut reference: Option<(String, String)> = None;
    let mut runs = 0;
    for (model, width) in [("raw", "1"), ("raw", "1"), ("raw", "4"), ("genmodel", "1"), ("genmodel", "1"), ("genmodel", "8")] {
        let out = p(&format!("eval_{model}_{width}_{runs}"));
        let mut args = vec!["evaluate", "--dataset", &manifest, "--output", &out, "--model", model, "--workers", width];
        args.extend(["--recognizer.epochs", "3", "--recognizer.hidden", "6", "--recognizer.layers", "2", "--seed", "7"]);
        if model == "genmodel" {
            args.extend(["--checkpoint", ckpt.as_str()]);
        }
        run_cli(&args)?;
        let csv = std::fs::read_to_string(format!("{out}/results.csv")).map_err(|e| e.to_string())?;
        match &reference {
            Some((m, r)) if m == model => check(r == &csv, || format!("{model} results differ at width {width}"))?,
            _ => reference = Some((model.to_string(), csv)),
        }
        runs += 1;
    }
    Ok(format!("{runs} evaluate runs, byte-identical per feature kind across widths 1, 4, 8"))
}

// ---------------------------------------------------------------- 8

fn real_data_pipeline() -> Outcome {
    let Ok(manifest) = std::env::var("SURGREC_REAL_MANIFEST") else {
        return Ok(format!("{SKIPPED}set SURGREC_REAL_MANIFEST to a kinematics manifest to run it"));
    };
    let cfg = ExperimentConfig::default();
    check(cfg.model == FeatureKind::Genmodel && cfg.downsample == 6, || "defaults changed".into())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().to_string_lossy().into_owned();
    let rep = format!("{out}/rep");
    run_cli(&["train-rep", "--dataset", &manifest, "--output", &rep])?;
    let ckpt = format!("{rep}/genmodel.ckpt");
    let mut curves = String::new();
    for (model, extra) in [("raw", None), ("genmodel", Some(ckpt.as_str()))] {
        let dest = format!("{out}/{model}");
        let mut args = vec!["evaluate", "--dataset", &manifest, "--output", &dest, "--model", model];
        if let Some(c) = extra {
            args.extend(["--checkpoint", c]);
        }
        run_cli(&args)?;
        let summary = std::fs::read_to_string(format!("{dest}/summary.csv")).map_err(|e| e.to_string())?;
        curves.push_str(&format!("\n{model}:\n{summary}"));
    }
    Ok(format!("curves (no tolerance):{curves}"))
}

fn main() {
    let criteria: [Criterion; 8] = [
        (1, "gradient correctness", gradient_correctness),
        (2, "likelihood correctness", likelihood_correctness),
        (3, "metric correctness", metric_correctness),
        (4, "overfit sanity", overfit_sanity),
        (5, "directional trend", directional_trend),
        (6, "protocol correctness", protocol_correctness),
        (7, "determinism", determinism),
        (8, "real-data pipeline", real_data_pipeline),
    ];
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = 0;
    for (id, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => match detail.strip_prefix(SKIPPED) {
                Some(why) => println!("criterion {id} ({name}): SKIP {why}"),
                None => println!("criterion {id} ({name}): PASS [{secs:.1}s] {detail}"),
            },
            Err(why) => {
                failed += 1;
                println!("criterion {id} ({name}): FAIL [{secs:.1}s] {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
