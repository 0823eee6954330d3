//! The default synthetic dataset is learnable but not trivial: a frame-wise
//! quadratic discriminant trained on half the subjects errs on 5-40% of the
//! other half's frames.

use surgrec::data::{synth_generate, Dataset, SynthConfig};

struct Gaussian {
    mean: Vec<f64>,
    chol: Vec<f64>,
    log_det: f64,
    log_prior: f64,
}

fn cholesky(a: &[f64], d: usize) -> Vec<f64> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum();
            if i == j {
                l[i * d + i] = (a[i * d + i] - s).sqrt();
            } else {
                l[i * d + j] = (a[i * d + j] - s) / l[j * d + j];
            }
        }
    }
    l
}

fn fit(frames: &[&[f64]], d: usize, total: usize) -> Gaussian {
    let n = frames.len() as f64;
    let mut mean = vec![0.0; d];
    for f in frames {
        for (m, v) in mean.iter_mut().zip(*f) {
            *m += v / n;
        }
    }
    let mut cov = vec![0.0; d * d];
    for f in frames {
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += (f[i] - mean[i]) * (f[j] - mean[j]) / n;
            }
        }
    }
    for i in 0..d {
        cov[i * d + i] += 1e-6;
    }
    let chol = cholesky(&cov, d);
    let log_det = 2.0 * (0..d).map(|i| chol[i * d + i].ln()).sum::<f64>();
    Gaussian { mean, chol, log_det, log_prior: (n / total as f64).ln() }
}

fn score(g: &Gaussian, x: &[f64], d: usize) -> f64 {
    // forward substitution for L z = x - mean
    let mut z = vec![0.0; d];
    for i in 0..d {
        let s: f64 = (0..i).map(|k| g.chol[i * d + k] * z[k]).sum();
        z[i] = (x[i] - g.mean[i] - s) / g.chol[i * d + i];
    }
    g.log_prior - 0.5 * g.log_det - 0.5 * z.iter().map(|v| v * v).sum::<f64>()
}

fn qda_error(ds: &Dataset) -> f64 {
    let subjects = ds.subjects();
    let train_subjects = &subjects[..subjects.len() / 2];
    let d = ds.n_x().unwrap();
    let k = ds.n_classes();
    let mut by_class: Vec<Vec<&[f64]>> = vec![Vec::new(); k];
    let mut total = 0;
    for t in ds.trials.iter().filter(|t| train_subjects.contains(&t.subject_id)) {
        for (row, &y) in t.kinematics.iter_rows().zip(t.labels.as_ref().unwrap()) {
            by_class[y].push(row);
            total += 1;
        }
    }
    let models: Vec<Gaussian> = by_class.iter().map(|f| fit(f, d, total)).collect();
    let (mut wrong, mut n) = (0usize, 0usize);
    for t in ds.trials.iter().filter(|t| !train_subjects.contains(&t.subject_id)) {
        for (row, &y) in t.kinematics.iter_rows().zip(t.labels.as_ref().unwrap()) {
            let pred = (0..k)
                .max_by(|&a, &b| score(&models[a], row, d).total_cmp(&score(&models[b], row, d)))
                .unwrap();
            wrong += usize::from(pred != y);
            n += 1;
        }
    }
    wrong as f64 / n as f64
}

#[test]
fn default_config_is_learnable_but_not_trivial() {
    for seed in 0..3 {
        let ds = synth_generate(&SynthConfig { seed, ..SynthConfig::default() }).unwrap();
        let err = qda_error(&ds.downsampled(6).unwrap());
        println!("seed {seed}: QDA frame error {err:.3}");
        assert!((0.05..=0.40).contains(&err), "seed {seed}: error {err}");
    }
}
