//! JSON manifest plus per-trial CSV files.
//!
//! Kinematics CSVs have no header and one frame per row. Label CSVs have one
//! entry per row, either an activity index or an activity name from the
//! manifest's list.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dataset, Trial};
use crate::error::{Error, Result};
use crate::math::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestTrial {
    pub trial_id: String,
    pub subject_id: String,
    pub kinematics_csv: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_csv: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub activities: Vec<String>,
    pub sample_rate_hz: f64,
    /// Expected channel count; inferred from the first trial when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_x: Option<usize>,
    #[serde(default)]
    pub trials: Vec<ManifestTrial>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn load_error(path: &Path, line: Option<usize>, msg: impl Into<String>) -> Error {
    Error::Load {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn read_kinematics(path: &Path, n_x: Option<usize>) -> Result<Matrix> {
    let text = read_text(path)?;
    let mut width = n_x;
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, record) in csv_reader(&text).records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| load_error(path, Some(line), e.to_string()))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(load_error(
                path,
                Some(line),
                format!("row has {} columns, expected {w}", record.len()),
            ));
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| load_error(path, Some(line), format!("`{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(load_error(path, Some(line), format!("non-finite value `{field}`")));
            }
            data.push(v);
        }
        rows += 1;
    }
    Matrix::from_vec(rows, width.unwrap_or(0), data).map_err(|e| load_error(path, None, e.to_string()))
}

fn read_labels(path: &Path, activities: &[String]) -> Result<Vec<usize>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, record) in csv_reader(&text).records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| load_error(path, Some(line), e.to_string()))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 1 {
            return Err(load_error(path, Some(line), "label rows must have exactly one entry"));
        }
        let field = &record[0];
        let label = match field.parse::<usize>() {
            Ok(k) if k < activities.len() => k,
            Ok(k) => {
                return Err(load_error(
                    path,
                    Some(line),
                    format!("label {k} outside the {} listed activities", activities.len()),
                ))
            }
            Err(_) => activities
                .iter()
                .position(|a| a == field)
                .ok_or_else(|| load_error(path, Some(line), format!("unknown activity `{field}`")))?,
        };
        out.push(label);
    }
    Ok(out)
}

/// Reads a manifest and every file it references, validating as it goes.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let text = read_text(manifest_path)?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| load_error(manifest_path, Some(e.line()), e.to_string()))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut n_x = manifest.n_x;
    let mut trials = Vec::with_capacity(manifest.trials.len());
    for entry in &manifest.trials {
        if trials.iter().any(|t: &Trial| t.trial_id == entry.trial_id) {
            return Err(load_error(manifest_path, None, format!("duplicate trial id `{}`", entry.trial_id)));
        }
        let kin_path = base.join(&entry.kinematics_csv);
        let kinematics = read_kinematics(&kin_path, n_x)?;
        if kinematics.rows() == 0 {
            return Err(load_error(&kin_path, None, "trial has no frames"));
        }
        n_x.get_or_insert(kinematics.cols());
        let labels = match &entry.labels_csv {
            Some(rel) => {
                let lp = base.join(rel);
                let labels = read_labels(&lp, &manifest.activities)?;
                if labels.len() != kinematics.rows() {
                    return Err(load_error(
                        &lp,
                        None,
                        format!("{} labels for {} frames", labels.len(), kinematics.rows()),
                    ));
                }
                Some(labels)
            }
            None => None,
        };
        trials.push(Trial {
            trial_id: entry.trial_id.clone(),
            subject_id: entry.subject_id.clone(),
            kinematics,
            labels,
        });
    }
    let ds = Dataset {
        trials,
        activity_names: manifest.activities,
        sample_rate_hz: manifest.sample_rate_hz,
    };
    ds.validate().map_err(|e| load_error(manifest_path, None, e.to_string()))?;
    Ok(ds)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `manifest.json`, `kinematics/<id>.csv`, and `labels/<id>.csv`
/// under `dir`. Returns the manifest path. Values are written in shortest
/// round-trip form, so reloading reproduces every payload exactly.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(ds.trials.len());
    for t in &ds.trials {
        let kin_rel = format!("kinematics/{}.csv", t.trial_id);
        let mut s = String::new();
        for row in t.kinematics.iter_rows() {
            let fields: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            s.push_str(&fields.join(","));
            s.push('\n');
        }
        write_file(&dir.join(&kin_rel), &s)?;
        let labels_csv = match &t.labels {
            Some(labels) => {
                let rel = format!("labels/{}.csv", t.trial_id);
                let s: String = labels.iter().map(|y| format!("{y}\n")).collect();
                write_file(&dir.join(&rel), &s)?;
                Some(rel)
            }
            None => None,
        };
        entries.push(ManifestTrial {
            trial_id: t.trial_id.clone(),
            subject_id: t.subject_id.clone(),
            kinematics_csv: kin_rel,
            labels_csv,
        });
    }
    let manifest = Manifest {
        activities: ds.activity_names.clone(),
        sample_rate_hz: ds.sample_rate_hz,
        n_x: ds.n_x(),
        trials: entries,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&path, &(json + "\n"))?;
    Ok(path)
}
