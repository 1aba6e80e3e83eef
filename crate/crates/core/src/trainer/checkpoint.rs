//! Checkpoint file, little-endian: `"DTPC"`, `u32` version, `u32` header
//! length and UTF-8 JSON header, `u32` tensor count, then per tensor a
//! `u16`-prefixed name, `u32` rank, dims as `u32`, and `f32` data. The table
//! holds the weights, their `/m` and `/v` Adam buffers, and best-so-far weights
//! under a `best/` prefix. A `u64` step counter and `f64` best validation loss
//! close the file.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamState, EpochRecord, TrainConfig};
use crate::kernel::Tensor;
use crate::model::{param_shapes, DtpNet, DtpNetConfig, ModelError};

const MAGIC: [u8; 4] = *b"DTPC";
const VERSION: u32 = 1;
const BEST_PREFIX: &str = "best/";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("bad magic {found:?}, expected \"DTPC\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated checkpoint at byte {offset}")]
    Truncated { offset: usize },
    #[error("{0} trailing bytes after the checkpoint")]
    TrailingBytes(usize),
    #[error("header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("header is not UTF-8")]
    HeaderEncoding,
    #[error("tensor table: {0}")]
    Table(String),
    #[error("tensor {name:?}: expected shape {expected:?}, found {actual:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    model: DtpNetConfig,
    train: TrainConfig,
    epoch: usize,
    epochs_since_improvement: usize,
    history: Vec<EpochRecord>,
}

/// Everything needed to resume training or to run the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: DtpNetConfig,
    pub train: TrainConfig,
    /// Completed epochs.
    pub epoch: usize,
    pub epochs_since_improvement: usize,
    pub history: Vec<EpochRecord>,
    /// Current weights in canonical order.
    pub weights: Vec<Tensor<f32>>,
    pub adam: AdamState,
    /// Weights at the lowest validation loss seen.
    pub best: Option<Vec<Tensor<f32>>>,
    pub best_val_loss: f64,
}

impl Checkpoint {
    /// A fresh checkpoint around `model` with zeroed optimizer state.
    pub fn initial(model: &DtpNet<f32>, train: &TrainConfig) -> Self {
        let params = model.params();
        Self {
            model: model.config().clone(),
            train: train.clone(),
            epoch: 0,
            epochs_since_improvement: 0,
            history: Vec::new(),
            adam: AdamState::zeros_like(&params),
            weights: params.into_iter().cloned().collect(),
            best: None,
            best_val_loss: f64::INFINITY,
        }
    }

    pub fn current_model(&self) -> Result<DtpNet<f32>, ModelError> {
        DtpNet::from_tensors(self.model.clone(), self.weights.clone())
    }

    /// The best-validation model, or the current one if no epoch finished.
    pub fn best_model(&self) -> Result<DtpNet<f32>, ModelError> {
        DtpNet::from_tensors(self.model.clone(), self.best.clone().unwrap_or_else(|| self.weights.clone()))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CheckpointError> {
        let header = serde_json::to_vec(&Header {
            model: self.model.clone(),
            train: self.train.clone(),
            epoch: self.epoch,
            epochs_since_improvement: self.epochs_since_improvement,
            history: self.history.clone(),
        })?;
        let names: Vec<String> = param_shapes(&self.model).into_iter().map(|(n, _)| n).collect();
        let mut table: Vec<(String, &[usize], &[f32])> = Vec::new();
        for (name, w) in names.iter().zip(&self.weights) {
            table.push((name.clone(), w.shape(), w.data()));
        }
        for (suffix, bufs) in [("/m", &self.adam.m), ("/v", &self.adam.v)] {
            for ((name, w), b) in names.iter().zip(&self.weights).zip(bufs) {
                table.push((format!("{name}{suffix}"), w.shape(), b));
            }
        }
        if let Some(best) = &self.best {
            for (name, w) in names.iter().zip(best) {
                table.push((format!("{BEST_PREFIX}{name}"), w.shape(), w.data()));
            }
        }

        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(table.len() as u32).to_le_bytes());
        for (name, shape, data) in table {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for &d in shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.adam.t.to_le_bytes());
        out.extend_from_slice(&self.best_val_loss.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, at: 0 };
        let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
        if magic != MAGIC {
            return Err(CheckpointError::BadMagic { found: magic });
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let header_len = r.u32()? as usize;
        let header = std::str::from_utf8(r.take(header_len)?).map_err(|_| CheckpointError::HeaderEncoding)?;
        let header: Header = serde_json::from_str(header)?;
        header.model.validate().map_err(ModelError::from)?;

        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| CheckpointError::Table("tensor name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            if rank > 3 {
                return Err(CheckpointError::Table(format!("{name:?} has rank {rank}")));
            }
            let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let n: usize = dims.iter().product();
            let data = r
                .take(4 * n)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect::<Vec<_>>();
            entries.push((name, dims, data));
        }
        let step = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let best_val_loss = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        if r.at != bytes.len() {
            return Err(CheckpointError::TrailingBytes(bytes.len() - r.at));
        }

        let shapes = param_shapes(&header.model);
        let p = shapes.len();
        if entries.len() != 3 * p && entries.len() != 4 * p {
            return Err(CheckpointError::Table(format!(
                "{} tensors for a model with {p} parameters",
                entries.len()
            )));
        }
        let has_best = entries.len() == 4 * p;
        let mut it = entries.into_iter();
        let mut section = |prefix: &str, suffix: &str| -> Result<Vec<(Vec<usize>, Vec<f32>)>, CheckpointError> {
            shapes
                .iter()
                .map(|(name, shape)| {
                    let (found, dims, data) = it.next().expect("counted above");
                    let expected_name = format!("{prefix}{name}{suffix}");
                    if found != expected_name {
                        return Err(CheckpointError::Table(format!("expected {expected_name:?}, found {found:?}")));
                    }
                    if &dims != shape {
                        return Err(CheckpointError::Shape {
                            name: found,
                            expected: shape.clone(),
                            actual: dims,
                        });
                    }
                    Ok((dims, data))
                })
                .collect()
        };
        let to_tensors = |v: Vec<(Vec<usize>, Vec<f32>)>| -> Vec<Tensor<f32>> {
            v.into_iter()
                .map(|(d, x)| Tensor::new(&d, x).expect("length checked"))
                .collect()
        };
        let weights = to_tensors(section("", "")?);
        let m = section("", "/m")?.into_iter().map(|(_, x)| x).collect();
        let v = section("", "/v")?.into_iter().map(|(_, x)| x).collect();
        let best = if has_best {
            Some(to_tensors(section(BEST_PREFIX, "")?))
        } else {
            None
        };
        Ok(Self {
            model: header.model,
            train: header.train,
            epoch: header.epoch,
            epochs_since_improvement: header.epochs_since_improvement,
            history: header.history,
            weights,
            adam: AdamState { m, v, t: step },
            best,
            best_val_loss,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(CheckpointError::Truncated { offset: self.bytes.len() })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Checkpoint {
        let cfg = DtpNetConfig::new(8, 8, 8, 3, 2, 1).with_growth(4);
        let model = DtpNet::<f32>::build(cfg, 5).unwrap();
        let mut c = Checkpoint::initial(&model, &TrainConfig::default());
        c.adam.t = 17;
        c.adam.m[0][3] = 0.5;
        c.adam.v[1][0] = 0.25;
        c.best = Some(c.weights.clone());
        c.best_val_loss = 0.125;
        c.history.push(EpochRecord {
            epoch: 1,
            train_loss: 0.3,
            val_loss: 0.125,
        });
        c.epoch = 1;
        c
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let c = toy();
        let bytes = c.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        let mut fresh = toy();
        fresh.best = None;
        fresh.best_val_loss = f64::INFINITY;
        let b2 = fresh.to_bytes().unwrap();
        assert_eq!(Checkpoint::from_bytes(&b2).unwrap(), fresh);
    }

    #[test]
    fn corruption_is_structured() {
        let bytes = toy().to_bytes().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'Z';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(CheckpointError::BadMagic { .. })));
        let mut v9 = bytes.clone();
        v9[4] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&v9),
            Err(CheckpointError::UnsupportedVersion(9))
        ));
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 1]),
            Err(CheckpointError::Truncated { .. })
        ));
        // tensor-count field sits right after the header
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let mut short_table = bytes.clone();
        let at = 12 + header_len;
        let n = u32::from_le_bytes(short_table[at..at + 4].try_into().unwrap());
        short_table[at..at + 4].copy_from_slice(&(n - 1).to_le_bytes());
        assert!(Checkpoint::from_bytes(&short_table).is_err());
        let mut long_table = bytes;
        long_table[at..at + 4].copy_from_slice(&(n + 1).to_le_bytes());
        assert!(Checkpoint::from_bytes(&long_table).is_err());
    }
}
