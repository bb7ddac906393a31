//! Checkpoint container.
//!
//! Layout: 4 magic bytes "BNO1", format version u16 little-endian, a
//! u32-length-prefixed UTF-8 JSON metadata block, then one blob per
//! parameter tensor: u32 name length, name bytes, dtype tag (1 = f32,
//! 2 = f64), rank as u8, dims as u32 each, then the little-endian payload.
//! Tensors are written in packing order and read until end of file.
//! Parameters are stored as f64, so a round-trip is bit-exact.
//!
//! The architecture is reconstructed from the tensor dims themselves
//! (kh, kw, in_chan, out_chan); the JSON block carries everything the
//! tensors cannot: model kind, Koopman configuration, window layout,
//! normalization statistics, and creation info.

use super::{BanachLayer, BnoModel, CnnModel, CnnStage, ModelError, ModelMeta};
use crate::data::{NormStats, WindowSpec};
use crate::neural::{Activation, ConvLayer};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"BNO1";
const VERSION: u16 = 1;

/// Either model kind, as stored on disk.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Bno(BnoModel),
    Cnn(CnnModel),
}

impl AnyModel {
    pub fn kind(&self) -> &'static str {
        match self {
            AnyModel::Bno(_) => "bno",
            AnyModel::Cnn(_) => "cnn",
        }
    }

    pub fn norm_stats(&self) -> NormStats {
        match self {
            AnyModel::Bno(m) => m.norm_stats,
            AnyModel::Cnn(m) => m.norm_stats,
        }
    }

    pub fn window(&self) -> WindowSpec {
        match self {
            AnyModel::Bno(m) => m.window,
            AnyModel::Cnn(m) => m.window,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MetaJson {
    kind: String,
    seed: u64,
    trained_nx: usize,
    trained_ny: usize,
    window: WindowSpec,
    norm: NormStats,
    n_layers: usize,
    dmd_rank: usize,
    dmd_horizon: usize,
    stop_gradient_exact: bool,
}

fn write_tensor(buf: &mut Vec<u8>, name: &str, dims: &[usize], data: &[f64]) {
    buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
    buf.push(2u8);
    buf.push(dims.len() as u8);
    for d in dims {
        buf.extend_from_slice(&(*d as u32).to_le_bytes());
    }
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn save_common(
    path: &Path,
    meta: &MetaJson,
    tensors: &[(String, Vec<usize>, &[f64])],
) -> Result<(), ModelError> {
    let json = serde_json::to_string(meta)
        .map_err(|e| ModelError::BadCheckpoint(format!("metadata serialization: {e}")))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(json.as_bytes());
    for (name, dims, data) in tensors {
        write_tensor(&mut buf, name, dims, data);
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

/// Writes a hybrid model checkpoint.
pub fn save_bno_checkpoint(path: &Path, model: &BnoModel) -> Result<(), ModelError> {
    model.validate()?;
    let first = &model.layers[0];
    let meta = MetaJson {
        kind: "bno".into(),
        seed: model.meta.seed,
        trained_nx: model.meta.trained_nx,
        trained_ny: model.meta.trained_ny,
        window: model.window,
        norm: model.norm_stats,
        n_layers: model.layers.len(),
        dmd_rank: first.dmd_rank,
        dmd_horizon: first.dmd_horizon,
        stop_gradient_exact: model.meta.stop_gradient_exact,
    };
    save_common(path, &meta, &super::bno_named_tensors(model))
}

/// Writes a baseline model checkpoint.
pub fn save_cnn_checkpoint(path: &Path, model: &CnnModel) -> Result<(), ModelError> {
    let meta = MetaJson {
        kind: "cnn".into(),
        seed: model.meta.seed,
        trained_nx: model.meta.trained_nx,
        trained_ny: model.meta.trained_ny,
        window: model.window,
        norm: model.norm_stats,
        n_layers: model.stages.len(),
        dmd_rank: 0,
        dmd_horizon: 0,
        stop_gradient_exact: model.meta.stop_gradient_exact,
    };
    save_common(path, &meta, &super::cnn_named_tensors(model))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.pos + n > self.bytes.len() {
            return Err(ModelError::BadCheckpoint(format!(
                "truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }

    fn done(&self) -> bool {
        self.pos >= self.bytes.len()
    }
}

type TensorMap = BTreeMap<String, (Vec<usize>, Vec<f64>)>;

fn read_tensors(cur: &mut Cursor) -> Result<TensorMap, ModelError> {
    let mut out = TensorMap::new();
    while !cur.done() {
        let name_len = cur.u32()? as usize;
        let name = String::from_utf8(cur.take(name_len)?.to_vec())
            .map_err(|_| ModelError::BadCheckpoint("tensor name is not UTF-8".into()))?;
        let dtype = cur.u8()?;
        let rank = cur.u8()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(cur.u32()? as usize);
        }
        let count = dims.iter().product::<usize>();
        let data: Vec<f64> = match dtype {
            1 => cur
                .take(count * 4)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            2 => cur
                .take(count * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            t => {
                return Err(ModelError::BadCheckpoint(format!(
                    "unknown dtype tag {t} for tensor {name}"
                )))
            }
        };
        if out.insert(name.clone(), (dims, data)).is_some() {
            return Err(ModelError::BadCheckpoint(format!("duplicate tensor {name}")));
        }
    }
    Ok(out)
}

fn conv_from_tensors(
    tensors: &mut TensorMap,
    prefix: &str,
    activation: Activation,
) -> Result<ConvLayer, ModelError> {
    let (wdims, weights) = tensors
        .remove(&format!("{prefix}.weight"))
        .ok_or_else(|| ModelError::BadCheckpoint(format!("missing tensor {prefix}.weight")))?;
    let (bdims, bias) = tensors
        .remove(&format!("{prefix}.bias"))
        .ok_or_else(|| ModelError::BadCheckpoint(format!("missing tensor {prefix}.bias")))?;
    if wdims.len() != 4 || bdims.len() != 1 {
        return Err(ModelError::BadCheckpoint(format!("bad dims for {prefix}")));
    }
    ConvLayer::from_parts(wdims[0], wdims[1], wdims[2], wdims[3], weights, bias, activation)
        .map_err(|e| ModelError::BadCheckpoint(format!("{prefix}: {e}")))
}

fn stage_from_tensors(
    tensors: &mut TensorMap,
    li: usize,
) -> Result<(Vec<ConvLayer>, ConvLayer), ModelError> {
    let mut cnn_branch = Vec::new();
    let mut ci = 0;
    while tensors.contains_key(&format!("layer{li}.cnn{ci}.weight")) {
        cnn_branch.push(conv_from_tensors(
            tensors,
            &format!("layer{li}.cnn{ci}"),
            Activation::Relu,
        )?);
        ci += 1;
    }
    if cnn_branch.is_empty() {
        return Err(ModelError::BadCheckpoint(format!("layer {li} has no branch tensors")));
    }
    let head = conv_from_tensors(tensors, &format!("layer{li}.head"), Activation::Linear)?;
    Ok((cnn_branch, head))
}

/// Writes a checkpoint of either kind.
pub fn save_checkpoint(path: &Path, model: &AnyModel) -> Result<(), ModelError> {
    match model {
        AnyModel::Bno(m) => save_bno_checkpoint(path, m),
        AnyModel::Cnn(m) => save_cnn_checkpoint(path, m),
    }
}

/// Reads a checkpoint of either kind.
pub fn load_checkpoint(path: &Path) -> Result<AnyModel, ModelError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 4 || &bytes[0..4] != MAGIC {
        return Err(ModelError::BadMagic);
    }
    let mut cur = Cursor { bytes: &bytes, pos: 4 };
    let version = u16::from_le_bytes(cur.take(2)?.try_into().unwrap());
    if version != VERSION {
        return Err(ModelError::VersionMismatch { found: version });
    }
    let json_len = cur.u32()? as usize;
    let meta: MetaJson = serde_json::from_slice(cur.take(json_len)?)
        .map_err(|e| ModelError::BadCheckpoint(format!("metadata block: {e}")))?;
    let mut tensors = read_tensors(&mut cur)?;

    let model_meta = ModelMeta {
        seed: meta.seed,
        trained_nx: meta.trained_nx,
        trained_ny: meta.trained_ny,
        stop_gradient_exact: meta.stop_gradient_exact,
    };
    let model = match meta.kind.as_str() {
        "bno" => {
            let mut layers = Vec::with_capacity(meta.n_layers);
            for li in 0..meta.n_layers {
                let (cnn_branch, head) = stage_from_tensors(&mut tensors, li)?;
                let fuse_chan = head.in_chan;
                layers.push(BanachLayer {
                    cnn_branch,
                    head,
                    dmd_rank: meta.dmd_rank,
                    dmd_horizon: meta.dmd_horizon,
                    fuse_chan,
                });
            }
            let m = BnoModel {
                layers,
                norm_stats: meta.norm,
                window: meta.window,
                meta: model_meta,
            };
            m.validate()?;
            AnyModel::Bno(m)
        }
        "cnn" => {
            let mut stages = Vec::with_capacity(meta.n_layers);
            for li in 0..meta.n_layers {
                let (cnn_branch, head) = stage_from_tensors(&mut tensors, li)?;
                stages.push(CnnStage { cnn_branch, head });
            }
            AnyModel::Cnn(CnnModel {
                stages,
                norm_stats: meta.norm,
                window: meta.window,
                meta: model_meta,
            })
        }
        k => return Err(ModelError::BadCheckpoint(format!("unknown model kind {k:?}"))),
    };
    if !tensors.is_empty() {
        let names: Vec<&String> = tensors.keys().collect();
        return Err(ModelError::BadCheckpoint(format!("unclaimed tensors {names:?}")));
    }
    Ok(model)
}

/// Reads a checkpoint that must be a hybrid model.
pub fn load_bno_checkpoint(path: &Path) -> Result<BnoModel, ModelError> {
    match load_checkpoint(path)? {
        AnyModel::Bno(m) => Ok(m),
        AnyModel::Cnn(_) => {
            Err(ModelError::BadCheckpoint("expected a hybrid checkpoint, found baseline".into()))
        }
    }
}
