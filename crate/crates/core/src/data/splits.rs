//! Split plans for the one-labeled-trial-per-user protocol.
//!
//! Each split labels one trial from each of `n_labeled` subjects and tests on
//! every trial of the remaining subjects.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// Largest exhaustive enumeration before falling back to random splits.
pub const EXHAUSTIVE_CAP: usize = 200;
/// Number of sampled splits in random mode.
pub const RANDOM_SPLITS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    Exhaustive,
    Random,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub split_id: usize,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub mode: SplitMode,
    pub n_labeled: usize,
    pub splits: Vec<Split>,
}

impl SplitPlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split plan serializes") + "\n"
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("split plan: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Checks disjointness, the one-trial-per-subject rule, and the count.
    pub fn check(&self, ds: &Dataset) -> Result<()> {
        for s in &self.splits {
            let subject = |id: &String| {
                ds.trial(id)
                    .map(|t| t.subject_id.clone())
                    .ok_or_else(|| Error::invalid(format!("split {} names unknown trial `{id}`", s.split_id)))
            };
            let train_subjects = s.train.iter().map(subject).collect::<Result<Vec<_>>>()?;
            let test_subjects = s.test.iter().map(subject).collect::<Result<BTreeSet<_>>>()?;
            let distinct: BTreeSet<_> = train_subjects.iter().cloned().collect();
            if s.train.len() != self.n_labeled || distinct.len() != s.train.len() {
                return Err(Error::invalid(format!(
                    "split {} must label {} trials from distinct subjects",
                    s.split_id, self.n_labeled
                )));
            }
            if s.test.is_empty() || distinct.iter().any(|u| test_subjects.contains(u)) {
                return Err(Error::invalid(format!("split {} mixes train and test subjects", s.split_id)));
            }
        }
        Ok(())
    }
}

/// Subject-trial table: subjects in first-appearance order, each with its
/// trial ids in dataset order.
fn by_subject(ds: &Dataset) -> Vec<(String, Vec<String>)> {
    ds.subjects()
        .into_iter()
        .map(|u| {
            let ids = ds.trials.iter().filter(|t| t.subject_id == u).map(|t| t.trial_id.clone()).collect();
            (u, ids)
        })
        .collect()
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        let Some(i) = (0..k).rev().find(|&i| cur[i] != i + n - k) else {
            return out;
        };
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

fn build_split(table: &[(String, Vec<String>)], subjects: &[usize], choice: &[usize], split_id: usize) -> Split {
    let train = subjects.iter().zip(choice).map(|(&u, &c)| table[u].1[c].clone()).collect();
    let test = (0..table.len())
        .filter(|u| !subjects.contains(u))
        .flat_map(|u| table[u].1.iter().cloned())
        .collect();
    Split { split_id, train, test }
}

/// Builds the split plan for `n_labeled` labeled trials.
pub fn make_splits(ds: &Dataset, n_labeled: usize, seed: u64) -> Result<SplitPlan> {
    let table = by_subject(ds);
    let u = table.len();
    if u < 2 {
        return Err(Error::invalid(format!(
            "splitting needs at least 2 subjects, the dataset has {u}"
        )));
    }
    if n_labeled < 1 || n_labeled > u - 1 {
        return Err(Error::invalid(format!("n_labeled must lie in 1..={}, got {n_labeled}", u - 1)));
    }
    let subject_sets = combinations(u, n_labeled);
    let count_for = |set: &[usize]| set.iter().map(|&s| table[s].1.len()).product::<usize>();
    let total = subject_sets
        .iter()
        .try_fold(0usize, |acc, s| acc.checked_add(count_for(s)))
        .unwrap_or(usize::MAX);
    let exhaustive = (n_labeled == 1 || n_labeled == u - 1) && total <= EXHAUSTIVE_CAP;

    let mut splits = Vec::new();
    if exhaustive {
        for set in &subject_sets {
            // odometer over one trial index per chosen subject
            let mut choice = vec![0usize; set.len()];
            loop {
                splits.push(build_split(&table, set, &choice, splits.len()));
                let Some(i) = (0..set.len()).rev().find(|&i| choice[i] + 1 < table[set[i]].1.len()) else {
                    break;
                };
                choice[i] += 1;
                choice[i + 1..].iter_mut().for_each(|c| *c = 0);
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wanted = RANDOM_SPLITS.min(total);
        let mut seen = BTreeSet::new();
        let mut attempts = 0;
        while splits.len() < wanted && attempts < 1000 * RANDOM_SPLITS {
            attempts += 1;
            let mut set = index::sample(&mut rng, u, n_labeled).into_vec();
            set.sort_unstable();
            let choice: Vec<usize> = set
                .iter()
                .map(|&s| rng.random_range(0..table[s].1.len()))
                .collect();
            if seen.insert((set.clone(), choice.clone())) {
                splits.push(build_split(&table, &set, &choice, splits.len()));
            }
        }
    }
    Ok(SplitPlan {
        seed,
        mode: if exhaustive { SplitMode::Exhaustive } else { SplitMode::Random },
        n_labeled,
        splits,
    })
}
