//! Model checkpoints: a versioned JSON header line (layer manifest, shapes,
//! kernel size, feature count, dropout ratio) followed by a 64-bit
//! little-endian parameter payload and, optionally, the optimizer state.
//! Save → load → save is byte-identical.
//!
//! Payload order: the 30 trainable tensors in [`CipsModel::trainable_names`]
//! order, then per batch-norm layer its running mean, running variance, and
//! update count, then (when present) the optimizer step count and the first
//! and second moment tensors in trainable order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{init_params, CipsConfig, CipsModel};
use crate::stack::{parse_header, read_header_line, FORMAT_VERSION};
use crate::train::AdamState;

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    version: u32,
    config: CipsConfig,
    tensors: Vec<TensorInfo>,
    batch_norms: usize,
    optimizer: bool,
}

#[derive(Serialize, Deserialize, PartialEq, Eq)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

fn manifest(model: &CipsModel) -> Vec<TensorInfo> {
    CipsModel::trainable_names()
        .iter()
        .zip(model.trainables())
        .map(|(name, t)| TensorInfo {
            name: name.to_string(),
            shape: t.shape().to_vec(),
        })
        .collect()
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &CipsModel, optimizer: Option<&AdamState>) -> Result<()> {
    let header = CheckpointHeader {
        version: FORMAT_VERSION,
        config: model.config,
        tensors: manifest(model),
        batch_norms: 3,
        optimizer: optimizer.is_some(),
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;

    let mut write_values = |values: &[f64]| -> Result<()> {
        let mut buf = Vec::with_capacity(values.len() * 8);
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    };

    for t in model.trainables() {
        write_values(t.data())?;
    }
    for bn in [&model.bn1, &model.bn2, &model.bn3] {
        write_values(&bn.running_mean)?;
        write_values(&bn.running_var)?;
        write_values(&[bn.steps as f64])?;
    }
    if let Some(opt) = optimizer {
        write_values(&[opt.t as f64])?;
        for t in &opt.m {
            write_values(t.data())?;
        }
        for t in &opt.v {
            write_values(t.data())?;
        }
    }
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(CipsModel, Option<AdamState>)> {
    let mut reader = BufReader::new(File::open(path)?);
    let line = read_header_line(&mut reader)?;
    let header: CheckpointHeader = parse_header(&line)?;
    header.config.validate()?;
    if header.batch_norms != 3 {
        return Err(Error::MalformedHeader(format!(
            "checkpoint declares {} batch-norm layers, model has 3",
            header.batch_norms
        )));
    }

    // Build the skeleton from the config, then overwrite every value.
    let mut model = init_params(&header.config, 0)?;
    if manifest(&model) != header.tensors {
        return Err(Error::MalformedHeader(
            "checkpoint tensor manifest does not match its declared config".into(),
        ));
    }

    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    let trainable_len: usize = model.trainables().iter().map(|t| t.len()).sum();
    let bn_len = 3 * (2 * header.config.hidden + 1);
    let base_len = (trainable_len + bn_len) as u64 * 8;
    let opt_len = if header.optimizer {
        (1 + 2 * trainable_len) as u64 * 8
    } else {
        0
    };
    let expected = base_len + opt_len;
    if (payload.len() as u64) < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len() as u64,
        });
    }
    if (payload.len() as u64) > expected {
        return Err(Error::TrailingData {
            extra: payload.len() as u64 - expected,
        });
    }

    let mut values = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]]));
    let mut take = |n: usize| -> Vec<f64> { values.by_ref().take(n).collect() };

    for t in model.trainables_mut() {
        let n = t.len();
        t.data_mut().copy_from_slice(&take(n));
    }
    for bn in [&mut model.bn1, &mut model.bn2, &mut model.bn3] {
        let h = bn.running_mean.len();
        bn.running_mean.copy_from_slice(&take(h));
        bn.running_var.copy_from_slice(&take(h));
        bn.steps = take(1)[0] as u64;
    }
    let optimizer = if header.optimizer {
        let t = take(1)[0] as u64;
        let mut state = AdamState::new(&model.trainables());
        state.t = t;
        for m in &mut state.m {
            let n = m.len();
            m.data_mut().copy_from_slice(&take(n));
        }
        for v in &mut state.v {
            let n = v.len();
            v.data_mut().copy_from_slice(&take(n));
        }
        Some(state)
    } else {
        None
    };

    Ok((model, optimizer))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::CipsConfig;

    fn small_model() -> CipsModel {
        init_params(
            &CipsConfig {
                features: 2,
                kernel_size: 3,
                hidden: 3,
                dropout: 0.2,
            },
            13,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        let mut model = small_model();
        model.bn1.steps = 5;
        model.bn1.running_mean[0] = 0.123456789;
        let mut opt = AdamState::new(&model.trainables());
        opt.t = 17;
        opt.m[0].data_mut()[0] = -0.5;

        save_checkpoint(&p1, &model, Some(&opt)).unwrap();
        let (back, opt_back) = load_checkpoint(&p1).unwrap();
        assert_eq!(back, model);
        let opt_back = opt_back.unwrap();
        assert_eq!(opt_back.t, 17);
        assert_eq!(opt_back.m[0].data()[0], -0.5);
        save_checkpoint(&p2, &back, Some(&opt_back)).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn optimizer_state_is_optional() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let model = small_model();
        save_checkpoint(&p, &model, None).unwrap();
        let (back, opt) = load_checkpoint(&p).unwrap();
        assert_eq!(back, model);
        assert!(opt.is_none());
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        save_checkpoint(&p, &small_model(), None).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::TruncatedPayload { .. })));
    }
}
