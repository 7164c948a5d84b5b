//! Checkpoint directory layout: `config.json` (snapshot + metadata),
//! `weights.bin` (adapter tensors and the alpha logit, f64 little-endian),
//! `metrics.csv` (per-epoch log).

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::encoder::{BackendConfig, FeatureExtractor};
use crate::error::{Error, Result};

use super::{EpochRecord, ModelParams, QualityModel, TrainConfig};

const WEIGHTS_MAGIC: &[u8; 4] = b"TSPW";
const WEIGHTS_VERSION: u32 = 1;

/// Metadata stored next to the weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub train_config: TrainConfig,
    pub backend: BackendConfig,
    /// Epoch whose parameters are stored.
    pub epoch: usize,
    pub best_val_srcc: f64,
    /// Path of the split manifest this run used, when one was written.
    pub split_manifest: Option<String>,
    /// True when the checkpoint was selected by validation SRCC; validation
    /// is the held-out test split, so treat reported numbers accordingly.
    pub selected_on_validation: bool,
}

/// Restored parameters plus metadata.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    /// Rebuilds a scoring model over the given frozen backbone.
    pub fn into_model<F: FeatureExtractor>(self, base: F) -> Result<QualityModel<F>> {
        QualityModel::from_params(
            base,
            &self.params,
            self.meta.train_config.scoring.clone(),
            self.meta.train_config.alpha_mode,
        )
    }
}

fn write_tensor<W: Write>(out: &mut W, name: &str, shape: &[usize], data: &[f64]) -> Result<()> {
    out.write_u32::<LittleEndian>(name.len() as u32)?;
    out.write_all(name.as_bytes())?;
    out.write_u32::<LittleEndian>(shape.len() as u32)?;
    for &d in shape {
        out.write_u64::<LittleEndian>(d as u64)?;
    }
    for &x in data {
        out.write_f64::<LittleEndian>(x)?;
    }
    Ok(())
}

fn read_tensor<R: Read>(input: &mut R) -> Result<(String, Vec<usize>, Vec<f64>)> {
    let name_len = input.read_u32::<LittleEndian>()? as usize;
    let mut name_bytes = vec![0u8; name_len];
    input.read_exact(&mut name_bytes)?;
    let name = String::from_utf8(name_bytes)
        .map_err(|_| Error::Dataset("weights blob has a non-UTF-8 tensor name".into()))?;
    let ndim = input.read_u32::<LittleEndian>()? as usize;
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        shape.push(input.read_u64::<LittleEndian>()? as usize);
    }
    let len: usize = shape.iter().product();
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        data.push(input.read_f64::<LittleEndian>()?);
    }
    Ok((name, shape, data))
}

/// Writes `config.json`, `weights.bin` and `metrics.csv` into `dir`.
pub fn save_checkpoint(
    dir: &Path,
    params: &ModelParams,
    meta: &CheckpointMeta,
    log: &[EpochRecord],
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(meta)?)?;

    let mut blob = Vec::new();
    blob.write_all(WEIGHTS_MAGIC)?;
    blob.write_u32::<LittleEndian>(WEIGHTS_VERSION)?;
    blob.write_u32::<LittleEndian>(3)?;
    write_tensor(
        &mut blob,
        "w_image",
        &[params.w_image.nrows(), params.w_image.ncols()],
        params.w_image.as_slice().expect("standard layout"),
    )?;
    write_tensor(
        &mut blob,
        "w_text",
        &[params.w_text.nrows(), params.w_text.ncols()],
        params.w_text.as_slice().expect("standard layout"),
    )?;
    write_tensor(&mut blob, "alpha_theta", &[1], &[params.alpha_theta])?;
    fs::write(dir.join("weights.bin"), blob)?;

    let mut writer = csv::Writer::from_path(dir.join("metrics.csv"))?;
    writer.write_record(["epoch", "lr", "train_mae", "val_srcc", "val_plcc"])?;
    for r in log {
        writer.write_record([
            r.epoch.to_string(),
            r.lr.to_string(),
            r.train_mae.to_string(),
            r.val_srcc.to_string(),
            r.val_plcc.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(dir.to_path_buf())
}

/// Reads a checkpoint directory back.
pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let meta: CheckpointMeta =
        serde_json::from_str(&fs::read_to_string(dir.join("config.json"))?)?;
    let blob = fs::read(dir.join("weights.bin"))?;
    let mut cursor = std::io::Cursor::new(blob);
    let mut magic = [0u8; 4];
    cursor.read_exact(&mut magic)?;
    if &magic != WEIGHTS_MAGIC {
        return Err(Error::Dataset("weights blob has a bad magic number".into()));
    }
    let version = cursor.read_u32::<LittleEndian>()?;
    if version != WEIGHTS_VERSION {
        return Err(Error::Dataset(format!(
            "unsupported weights version {version}"
        )));
    }
    let count = cursor.read_u32::<LittleEndian>()?;
    let mut w_image = None;
    let mut w_text = None;
    let mut alpha_theta = None;
    for _ in 0..count {
        let (name, shape, data) = read_tensor(&mut cursor)?;
        match name.as_str() {
            "w_image" | "w_text" => {
                if shape.len() != 2 {
                    return Err(Error::Dataset(format!("tensor {name} is not 2-d")));
                }
                let arr = Array2::from_shape_vec((shape[0], shape[1]), data)
                    .map_err(|e| Error::Dataset(format!("bad tensor {name}: {e}")))?;
                if name == "w_image" {
                    w_image = Some(arr);
                } else {
                    w_text = Some(arr);
                }
            }
            "alpha_theta" => alpha_theta = data.first().copied(),
            other => log::warn!("ignoring unknown tensor {other} in weights blob"),
        }
    }
    let params = ModelParams {
        w_image: w_image.ok_or_else(|| Error::Dataset("weights blob lacks w_image".into()))?,
        w_text: w_text.ok_or_else(|| Error::Dataset("weights blob lacks w_text".into()))?,
        alpha_theta: alpha_theta
            .ok_or_else(|| Error::Dataset("weights blob lacks alpha_theta".into()))?,
    };
    Ok(Checkpoint { params, meta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::ScoringConfig;
    use crate::prompting::{PromptScheme, TaskKind};

    #[test]
    fn weights_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut params = ModelParams::identity(6);
        params.w_image[[1, 2]] = 0.123456789123456789;
        params.w_text[[3, 4]] = -7.5e-11;
        params.alpha_theta = 0.4242;
        let meta = CheckpointMeta {
            train_config: TrainConfig::new(ScoringConfig::new(
                TaskKind::Perception,
                PromptScheme::Adjective,
            )),
            backend: BackendConfig::stub(6),
            epoch: 3,
            best_val_srcc: 0.9,
            split_manifest: None,
            selected_on_validation: true,
        };
        let log = vec![EpochRecord {
            epoch: 0,
            lr: 5e-6,
            train_mae: 1.25,
            val_srcc: 0.5,
            val_plcc: 0.6,
        }];
        save_checkpoint(dir.path(), &params, &meta, &log).unwrap();
        let restored = load_checkpoint(dir.path()).unwrap();
        assert_eq!(restored.params.w_image, params.w_image);
        assert_eq!(restored.params.w_text, params.w_text);
        assert_eq!(restored.params.alpha_theta, params.alpha_theta);
        assert_eq!(restored.meta.epoch, 3);
        assert!(dir.path().join("metrics.csv").exists());
    }

    #[test]
    fn load_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("weights.bin"), b"nope").unwrap();
        fs::write(
            dir.path().join("config.json"),
            serde_json::to_string(&CheckpointMeta {
                train_config: TrainConfig::new(ScoringConfig::new(
                    TaskKind::Perception,
                    PromptScheme::Antonym,
                )),
                backend: BackendConfig::stub(4),
                epoch: 0,
                best_val_srcc: f64::NAN,
                split_manifest: None,
                selected_on_validation: false,
            })
            .unwrap(),
        )
        .unwrap();
        assert!(load_checkpoint(dir.path()).is_err());
    }
}
