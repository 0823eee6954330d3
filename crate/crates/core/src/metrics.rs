//! Frame-wise error rate and segment-level edit distance.

use crate::error::{Error, Result};

/// A maximal run of one activity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub activity: usize,
    pub start: usize,
    pub len: usize,
}

pub type SegmentSequence = Vec<Segment>;

/// Fraction of frames where `pred` and `truth` disagree.
pub fn error_rate(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::invalid(format!(
            "prediction has {} frames, ground truth has {}",
            pred.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::invalid("error rate needs at least one frame"));
    }
    let wrong = pred.iter().zip(truth).filter(|(p, t)| p != t).count();
    Ok(wrong as f64 / truth.len() as f64)
}

/// Run-length encoding of `labels`.
pub fn to_segments(labels: &[usize]) -> SegmentSequence {
    let mut out: SegmentSequence = Vec::new();
    for (i, &y) in labels.iter().enumerate() {
        match out.last_mut() {
            Some(s) if s.activity == y => s.len += 1,
            _ => out.push(Segment { activity: y, start: i, len: 1 }),
        }
    }
    out
}

/// Expands segments back to frame labels.
pub fn from_segments(segments: &[Segment]) -> Vec<usize> {
    segments.iter().flat_map(|s| std::iter::repeat_n(s.activity, s.len)).collect()
}

/// Levenshtein distance between two symbol strings, unit costs.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Levenshtein distance over the activity strings of two segmentations.
pub fn edit_distance(a: &[Segment], b: &[Segment]) -> usize {
    let sa: Vec<usize> = a.iter().map(|s| s.activity).collect();
    let sb: Vec<usize> = b.iter().map(|s| s.activity).collect();
    levenshtein(&sa, &sb)
}

/// Per-trial distances as percentages of the largest ground-truth segment
/// count in the evaluation set, averaged over trials.
pub fn normalized_edit_distance(distances: &[usize], true_segment_counts: &[usize]) -> Result<f64> {
    if distances.is_empty() {
        return Err(Error::invalid("normalized edit distance needs at least one trial"));
    }
    if distances.len() != true_segment_counts.len() {
        return Err(Error::invalid("one segment count is needed per trial"));
    }
    let max = *true_segment_counts.iter().max().expect("non-empty");
    if max == 0 {
        return Err(Error::invalid("ground truth has no segments"));
    }
    let sum: f64 = distances.iter().map(|&d| 100.0 * d as f64 / max as f64).sum();
    Ok(sum / distances.len() as f64)
}

/// Scores of one evaluation set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SetScores {
    /// Mean of per-trial frame error rates.
    pub error_rate: f64,
    /// Normalized edit distance in percent.
    pub edit_distance: f64,
}

/// Scores predicted label sequences against truth, trial by trial.
pub fn score_set(preds: &[Vec<usize>], truths: &[&[usize]]) -> Result<SetScores> {
    if preds.len() != truths.len() {
        return Err(Error::invalid("one prediction is needed per trial"));
    }
    let mut errors = Vec::with_capacity(preds.len());
    let mut dists = Vec::with_capacity(preds.len());
    let mut counts = Vec::with_capacity(preds.len());
    for (p, t) in preds.iter().zip(truths) {
        errors.push(error_rate(p, t)?);
        let ts = to_segments(t);
        dists.push(edit_distance(&to_segments(p), &ts));
        counts.push(ts.len());
    }
    let edit_distance = normalized_edit_distance(&dists, &counts)?;
    Ok(SetScores {
        error_rate: errors.iter().sum::<f64>() / errors.len() as f64,
        edit_distance,
    })
}
