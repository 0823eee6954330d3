//! Binary model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        16 bytes  "SURGREC-MODEL\0\0\0"
//! version      u32
//! count        u32       number of tensors
//! per tensor:
//!   name_len   u32
//!   name       name_len bytes, UTF-8
//!   rank       u32
//!   dims       rank x u64
//!   payload    prod(dims) x f64
//! ```
//!
//! Trainable tensors carry their parameter-store names. Tensors whose name
//! starts with `meta.` describe the model kind, its sizes, and the input
//! normalization.

use std::io::{Read, Write};
use std::path::Path;

use crate::data::ChannelStats;
use crate::error::{Error, Result};
use crate::models::{
    GenerativeConfig, GenerativeModel, Recognizer, RecognizerConfig, WindowConfig, WindowTask, WindowedModel,
};
use crate::optim::{HasParameters, ParameterStore};

pub const MAGIC: [u8; 16] = *b"SURGREC-MODEL\0\0\0";
pub const VERSION: u32 = 1;

/// A named tensor as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

pub fn write_tensors<W: Write>(mut out: W, tensors: &[NamedTensor]) -> std::io::Result<()> {
    out.write_all(&MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        out.write_all(&(t.name.len() as u32).to_le_bytes())?;
        out.write_all(t.name.as_bytes())?;
        out.write_all(&(t.dims.len() as u32).to_le_bytes())?;
        for d in &t.dims {
            out.write_all(&(*d as u64).to_le_bytes())?;
        }
        for v in &t.data {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()
}

fn read_u32(bytes: &[u8], pos: &mut usize) -> Result<u32> {
    let b = bytes
        .get(*pos..*pos + 4)
        .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
    *pos += 4;
    Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
}

fn read_u64(bytes: &[u8], pos: &mut usize) -> Result<u64> {
    let b = bytes
        .get(*pos..*pos + 8)
        .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
    *pos += 8;
    Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
}

pub fn read_tensors(bytes: &[u8]) -> Result<Vec<NamedTensor>> {
    if bytes.len() < 16 || bytes[..16] != MAGIC {
        return Err(Error::Checkpoint("not a model checkpoint (bad magic)".into()));
    }
    let mut pos = 16;
    let version = read_u32(bytes, &mut pos)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let count = read_u32(bytes, &mut pos)? as usize;
    let mut tensors = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name_len = read_u32(bytes, &mut pos)? as usize;
        let name_bytes = bytes
            .get(pos..pos + name_len)
            .ok_or_else(|| Error::Checkpoint("truncated tensor name".into()))?;
        let name = std::str::from_utf8(name_bytes)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        pos += name_len;
        let rank = read_u32(bytes, &mut pos)? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(read_u64(bytes, &mut pos)? as usize);
        }
        let n: usize = dims.iter().product();
        let payload = bytes
            .get(pos..pos + 8 * n)
            .ok_or_else(|| Error::Checkpoint(format!("truncated payload for `{name}`")))?;
        pos += 8 * n;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.push(NamedTensor { name, dims, data });
    }
    if pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
    }
    Ok(tensors)
}

/// Any model this library can persist.
#[derive(Clone, Debug)]
pub enum Model {
    Generative(GenerativeModel),
    Windowed(WindowedModel),
    Recognizer(Recognizer),
}

impl Model {
    pub fn params(&self) -> &ParameterStore {
        match self {
            Model::Generative(m) => m.params(),
            Model::Windowed(m) => m.params(),
            Model::Recognizer(m) => m.params(),
        }
    }

    fn params_mut(&mut self) -> &mut ParameterStore {
        match self {
            Model::Generative(m) => m.params_mut(),
            Model::Windowed(m) => m.params_mut(),
            Model::Recognizer(m) => m.params_mut(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Model::Generative(_) => "genmodel",
            Model::Windowed(m) => match m.config().task {
                WindowTask::Autoencoder => "autoencoder",
                WindowTask::FuturePrediction => "futurepred",
            },
            Model::Recognizer(_) => "recognizer",
        }
    }

    fn meta(&self) -> (f64, Vec<f64>) {
        match self {
            Model::Generative(m) => {
                let c = m.config();
                (0.0, vec![c.n_x as f64, c.n_h as f64, c.n_c as f64])
            }
            Model::Windowed(m) => {
                let c = m.config();
                let kind = match c.task {
                    WindowTask::Autoencoder => 1.0,
                    WindowTask::FuturePrediction => 2.0,
                };
                (kind, vec![c.n_x as f64, c.n_h as f64, c.n_c as f64, c.window as f64])
            }
            Model::Recognizer(m) => {
                let c = m.config();
                (
                    3.0,
                    vec![
                        c.input_dim as f64,
                        c.n_classes as f64,
                        c.layers as f64,
                        c.hidden as f64,
                        if c.hidden_is_total { 1.0 } else { 0.0 },
                    ],
                )
            }
        }
    }
}

/// A model plus the channel statistics its inputs were standardized with.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub normalizer: Option<ChannelStats>,
}

impl Checkpoint {
    pub fn to_tensors(&self) -> Vec<NamedTensor> {
        let (kind, sizes) = self.model.meta();
        let mut out = vec![
            NamedTensor {
                name: "meta.kind".into(),
                dims: vec![1],
                data: vec![kind],
            },
            NamedTensor {
                name: "meta.sizes".into(),
                dims: vec![sizes.len()],
                data: sizes,
            },
        ];
        if let Some(n) = &self.normalizer {
            out.push(NamedTensor {
                name: "meta.norm.mean".into(),
                dims: vec![n.mean.len()],
                data: n.mean.clone(),
            });
            out.push(NamedTensor {
                name: "meta.norm.std".into(),
                dims: vec![n.std.len()],
                data: n.std.clone(),
            });
        }
        for (name, dims, data) in self.model.params().tensors() {
            out.push(NamedTensor {
                name: name.to_string(),
                dims: dims.to_vec(),
                data: data.to_vec(),
            });
        }
        out
    }

    pub fn from_tensors(tensors: Vec<NamedTensor>) -> Result<Self> {
        let find = |name: &str| tensors.iter().find(|t| t.name == name);
        let kind = find("meta.kind")
            .and_then(|t| t.data.first().copied())
            .ok_or_else(|| Error::Checkpoint("missing meta.kind".into()))?;
        let sizes: Vec<usize> = find("meta.sizes")
            .ok_or_else(|| Error::Checkpoint("missing meta.sizes".into()))?
            .data
            .iter()
            .map(|v| *v as usize)
            .collect();
        let need = |n: usize| {
            if sizes.len() == n {
                Ok(())
            } else {
                Err(Error::Checkpoint(format!("meta.sizes has {} entries, expected {n}", sizes.len())))
            }
        };
        let mut model = match kind as u32 {
            0 => {
                need(3)?;
                Model::Generative(GenerativeModel::new(
                    GenerativeConfig {
                        n_x: sizes[0],
                        n_h: sizes[1],
                        n_c: sizes[2],
                    },
                    0,
                )?)
            }
            1 | 2 => {
                need(4)?;
                let task = if kind as u32 == 1 {
                    WindowTask::Autoencoder
                } else {
                    WindowTask::FuturePrediction
                };
                Model::Windowed(WindowedModel::new(
                    WindowConfig {
                        task,
                        n_x: sizes[0],
                        n_h: sizes[1],
                        n_c: sizes[2],
                        window: sizes[3],
                    },
                    0,
                )?)
            }
            3 => {
                need(5)?;
                Model::Recognizer(Recognizer::new(
                    RecognizerConfig {
                        input_dim: sizes[0],
                        n_classes: sizes[1],
                        layers: sizes[2],
                        hidden: sizes[3],
                        hidden_is_total: sizes[4] != 0,
                    },
                    0,
                )?)
            }
            other => return Err(Error::Checkpoint(format!("unknown model kind {other}"))),
        };

        let store = model.params_mut();
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let name = store.name(id).to_string();
            let t = find(&name).ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
            if t.dims != store.dims(id) {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has dims {:?}, expected {:?}",
                    t.dims,
                    store.dims(id)
                )));
            }
            store.value_mut(id).copy_from_slice(&t.data);
        }
        let normalizer = match (find("meta.norm.mean"), find("meta.norm.std")) {
            (Some(m), Some(s)) => Some(ChannelStats {
                mean: m.data.clone(),
                std: s.data.clone(),
            }),
            _ => None,
        };
        Ok(Checkpoint { model, normalizer })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        write_tensors(&mut buf, &self.to_tensors()).expect("writing to memory cannot fail");
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Checkpoint::from_tensors(read_tensors(bytes)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn same_weights(a: &ParameterStore, b: &ParameterStore) -> bool {
        a.tensors().zip(b.tensors()).all(|((na, da, va), (nb, db, vb))| {
            na == nb && da == db && va.iter().zip(vb).all(|(x, y)| x.to_bits() == y.to_bits())
        }) && a.len() == b.len()
    }

    #[test]
    fn round_trip_every_kind() {
        let models = vec![
            Model::Generative(GenerativeModel::new(GenerativeConfig { n_x: 3, n_h: 4, n_c: 2 }, 1).unwrap()),
            Model::Windowed(
                WindowedModel::new(
                    WindowConfig {
                        task: WindowTask::FuturePrediction,
                        n_x: 3,
                        n_h: 4,
                        n_c: 2,
                        window: 5,
                    },
                    2,
                )
                .unwrap(),
            ),
            Model::Recognizer(Recognizer::new(RecognizerConfig::new(6, 3), 3).unwrap()),
        ];
        for model in models {
            let ck = Checkpoint {
                model,
                normalizer: Some(ChannelStats {
                    mean: vec![0.1, -0.2, 1e-300],
                    std: vec![1.0, 2.0, 3.0],
                }),
            };
            let bytes = ck.to_bytes();
            assert_eq!(&bytes[..16], &MAGIC);
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(back.model.kind_name(), ck.model.kind_name());
            assert!(same_weights(back.model.params(), ck.model.params()));
            assert_eq!(back.normalizer, ck.normalizer);
            assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let ck = Checkpoint {
            model: Model::Generative(GenerativeModel::new(GenerativeConfig { n_x: 2, n_h: 3, n_c: 1 }, 1).unwrap()),
            normalizer: None,
        };
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut wrong_version = bytes.clone();
        wrong_version[16] = 9;
        assert!(Checkpoint::from_bytes(&wrong_version).is_err());
    }
}
