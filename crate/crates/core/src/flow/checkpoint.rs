//! Binary checkpoint layout (all integers little-endian):
//!
//! ```text
//! "INFL"  u32 version
//! u32 field count, then per field: u32 key length, key, u32 value length, value
//! u32 array count, then per array: u32 rank, rank × u32 dims, numel × f32
//! ```
//!
//! Header values are UTF-8 text. Arrays follow the model's parameter
//! declaration order (block by block; `s` then `t`; weight then bias per
//! layer).

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use super::subnet::{Init, SubnetSpec};
use super::{FlowConfig, FlowModel, TrainingMeta};
use crate::fsio::write_atomic;
use crate::numerics::Tensor;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"INFL";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (magic {0:02x?})")]
    BadMagic(Vec<u8>),
    #[error("checkpoint version {found} is not supported (expected {VERSION})")]
    Version { found: u32 },
    #[error("checkpoint truncated at byte {offset}: needed {needed} more bytes")]
    Truncated { offset: usize, needed: usize },
    #[error("checkpoint header field {key:?}: {msg}")]
    Field { key: String, msg: String },
    #[error("checkpoint has {0} unexpected trailing bytes")]
    Trailing(usize),
    #[error("checkpoint parameters do not match the architecture: {0}")]
    Params(String),
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(CheckpointError::Truncated { offset: self.pos, needed: n - (self.bytes.len() - self.pos) });
        };
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self) -> Result<String, CheckpointError> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| CheckpointError::Field { key: String::new(), msg: "not UTF-8".into() })
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn split_label(model: &FlowModel) -> String {
    match *model.split() {
        super::SplitSpec::Vector { dim } => format!("vector:{dim}"),
        super::SplitSpec::Channels { channels, height, width } => {
            format!("channels:{channels}x{height}x{width}")
        }
    }
}

pub fn encode_checkpoint(model: &FlowModel) -> Vec<u8> {
    let c = model.config();
    let fields: [(&str, String); 11] = [
        ("blocks", c.blocks.to_string()),
        ("input_shape", join(&c.input_shape)),
        ("split", split_label(model)),
        ("subnet", c.subnet.kind.to_string()),
        ("hidden", join(&c.subnet.hidden)),
        ("shared", u8::from(c.shared).to_string()),
        ("perm_seed", c.perm_seed.to_string()),
        ("flatten", "chw".into()),
        ("epochs", model.meta.epochs.to_string()),
        ("steps", model.meta.steps.to_string()),
        ("train_seed", model.meta.seed.to_string()),
    ];
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, fields.len() as u32);
    for (k, v) in &fields {
        put_str(&mut out, k);
        put_str(&mut out, v);
    }
    put_u32(&mut out, model.params().len() as u32);
    for p in model.params() {
        put_u32(&mut out, p.shape().len() as u32);
        for &d in p.shape() {
            put_u32(&mut out, d as u32);
        }
        for v in p.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn field<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T, CheckpointError> {
    let raw = map.get(key).ok_or_else(|| CheckpointError::Field { key: key.into(), msg: "missing".into() })?;
    raw.parse().map_err(|_| CheckpointError::Field { key: key.into(), msg: format!("cannot parse {raw:?}") })
}

fn list(map: &BTreeMap<String, String>, key: &str) -> Result<Vec<usize>, CheckpointError> {
    let raw: String = field(map, key)?;
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',')
        .map(|s| {
            s.parse().map_err(|_| CheckpointError::Field { key: key.into(), msg: format!("cannot parse {raw:?}") })
        })
        .collect()
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<FlowModel> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4).map_err(|_| CheckpointError::BadMagic(bytes.to_vec()))?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic.to_vec()).into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::Version { found: version }.into());
    }
    let nfields = r.u32()?;
    let mut map = BTreeMap::new();
    for _ in 0..nfields {
        let k = r.string()?;
        let v = r.string()?;
        map.insert(k, v);
    }
    let flatten: String = field(&map, "flatten")?;
    if flatten != "chw" {
        return Err(
            CheckpointError::Field { key: "flatten".into(), msg: format!("unsupported order {flatten:?}") }.into()
        );
    }
    let config = FlowConfig {
        blocks: field(&map, "blocks")?,
        input_shape: list(&map, "input_shape")?,
        subnet: SubnetSpec { kind: field::<String>(&map, "subnet")?.parse()?, hidden: list(&map, "hidden")? },
        shared: field::<u8>(&map, "shared")? == 1,
        perm_seed: field(&map, "perm_seed")?,
        init: Init::Zero,
        init_seed: 0,
    };
    let mut model = FlowModel::new(config)?;
    let split: String = field(&map, "split")?;
    if split != split_label(&model) {
        return Err(CheckpointError::Field {
            key: "split".into(),
            msg: format!("{split:?} disagrees with input shape"),
        }
        .into());
    }
    model.meta =
        TrainingMeta { epochs: field(&map, "epochs")?, steps: field(&map, "steps")?, seed: field(&map, "train_seed")? };

    let count = r.u32()? as usize;
    if count != model.params().len() {
        return Err(
            CheckpointError::Params(format!("{count} arrays, architecture has {}", model.params().len())).into()
        );
    }
    let mut params = Vec::with_capacity(count);
    for expected in model.params() {
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        if shape != expected.shape() {
            return Err(
                CheckpointError::Params(format!("array of shape {shape:?}, expected {:?}", expected.shape())).into()
            );
        }
        let raw = r.take(4 * expected.numel())?;
        let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        params.push(Tensor::new(shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Trailing(bytes.len() - r.pos).into());
    }
    model.set_params(params)?;
    Ok(model)
}

pub fn save_checkpoint(model: &FlowModel, path: &Path) -> Result<()> {
    write_atomic(path, &encode_checkpoint(model))
}

pub fn load_checkpoint(path: &Path) -> Result<FlowModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
