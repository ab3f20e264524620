//! Binary checkpoint: the space, the genotype, and every named tensor with
//! exact f64 bit patterns, so a save/load cycle is bit-identical.

use super::{Result, TrainError};
use crate::model::{build_network, Genotype, Network, SearchSpaceConfig};
use crate::tensor::Real;
use std::path::Path;

const MAGIC: &[u8; 8] = b"KWSCKPT1";

fn ck_err(path: &Path, msg: impl Into<String>) -> TrainError {
    TrainError::Checkpoint {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

pub fn save_checkpoint(path: &Path, net: &Network) -> Result<()> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(MAGIC);

    let space_json = serde_json::to_string(net.space()).expect("space serialization");
    let genotype_json = net.genotype().to_json(&net.space().config_hash());
    for blob in [space_json.as_bytes(), genotype_json.as_bytes()] {
        bytes.extend_from_slice(&(blob.len() as u32).to_le_bytes());
        bytes.extend_from_slice(blob);
    }

    let entries: Vec<_> = net.store().iter().collect();
    bytes.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, tensor, trainable) in entries {
        bytes.extend_from_slice(&(name.len() as u16).to_le_bytes());
        bytes.extend_from_slice(name.as_bytes());
        bytes.push(trainable as u8);
        bytes.extend_from_slice(&(tensor.numel() as u32).to_le_bytes());
        for &v in tensor.values() {
            bytes.extend_from_slice(&(v as f64).to_le_bytes());
        }
    }
    std::fs::write(path, bytes).map_err(|e| TrainError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    let bytes = std::fs::read(path).map_err(|e| TrainError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut at = 0usize;
    let take = |at: &mut usize, n: usize| -> Result<&[u8]> {
        let slice = bytes
            .get(*at..*at + n)
            .ok_or_else(|| ck_err(path, format!("truncated at byte {at}")))?;
        *at += n;
        Ok(slice)
    };
    if take(&mut at, 8)? != MAGIC {
        return Err(ck_err(path, "bad magic"));
    }
    let read_u32 = |at: &mut usize| -> Result<u32> {
        let b = take(at, 4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    };

    let space_len = read_u32(&mut at)? as usize;
    let space: SearchSpaceConfig = serde_json::from_slice(take(&mut at, space_len)?)
        .map_err(|e| ck_err(path, format!("bad space json: {e}")))?;
    let genotype_len = read_u32(&mut at)? as usize;
    let genotype_text = std::str::from_utf8(take(&mut at, genotype_len)?)
        .map_err(|_| ck_err(path, "genotype json is not utf-8"))?;
    let (genotype, _hash) =
        Genotype::from_json(genotype_text).map_err(|e| ck_err(path, e.to_string()))?;

    let mut net = build_network(&genotype, &space, 0).map_err(|e| ck_err(path, e.to_string()))?;

    let n_entries = read_u32(&mut at)? as usize;
    if n_entries != net.store().len() {
        return Err(ck_err(
            path,
            format!(
                "checkpoint has {n_entries} tensors, model expects {}",
                net.store().len()
            ),
        ));
    }
    for _ in 0..n_entries {
        let name_len = {
            let b = take(&mut at, 2)?;
            u16::from_le_bytes([b[0], b[1]]) as usize
        };
        let name = std::str::from_utf8(take(&mut at, name_len)?)
            .map_err(|_| ck_err(path, "tensor name is not utf-8"))?
            .to_string();
        let _trainable = take(&mut at, 1)?[0];
        let numel = read_u32(&mut at)? as usize;
        let raw = take(&mut at, numel * 8)?;
        let values: Vec<Real> = raw
            .chunks_exact(8)
            .map(|c| {
                f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]) as Real
            })
            .collect();
        if !net.store_mut().load_values(&name, &values) {
            return Err(ck_err(path, format!("unknown or misshapen tensor {name}")));
        }
    }
    if at != bytes.len() {
        return Err(ck_err(path, "trailing bytes after last tensor"));
    }
    Ok(net)
}
