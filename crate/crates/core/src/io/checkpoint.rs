//! Binary checkpoints.
//!
//! ```text
//! "FFCK" | version u32
//! model config text | inventory text | duration table text   (u32 length + UTF-8 each)
//! updates u64
//! raw parameters | Polyak parameters                          (see below)
//! SHA-256 of every preceding byte
//! ```
//!
//! A parameter section is a `u32` count followed by, per parameter, a
//! `u32`-prefixed UTF-8 name, a `u32` rank, `rank` `u32` extents and the
//! values as little-endian `f64`.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::duration::DurationTable;
use crate::numerics::{ParamStore, Tensor};
use crate::score::PhonemeInventory;
use crate::training::{Checkpoint, TrainState};

use super::config::{model_config_text, RunConfig};
use super::{read_file, write_file, IoError};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"FFCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

fn put_params(out: &mut Vec<u8>, store: &ParamStore) {
    put_u32(out, store.len() as u32);
    for (_, name, t) in store.iter() {
        put_str(out, name);
        put_u32(out, t.shape().len() as u32);
        for &d in t.shape() {
            put_u32(out, d as u32);
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn checkpoint_to_bytes(ck: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    put_str(&mut out, &model_config_text(&ck.model));
    put_str(&mut out, &ck.inventory.to_text());
    put_str(&mut out, &ck.table.to_text());
    out.extend_from_slice(&ck.state.updates.to_le_bytes());
    put_params(&mut out, &ck.state.params);
    put_params(&mut out, &ck.state.shadow);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| IoError::Format("checkpoint is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, IoError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, IoError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| IoError::Format("checkpoint text is not UTF-8".into()))
    }

    fn params(&mut self) -> Result<ParamStore, IoError> {
        let count = self.u32()?;
        let mut store = ParamStore::new();
        for _ in 0..count {
            let name = self.string()?;
            let rank = self.u32()? as usize;
            let shape = (0..rank).map(|_| Ok(self.u32()? as usize)).collect::<Result<Vec<_>, IoError>>()?;
            let len = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| IoError::Format(format!("parameter {name} is too large")))?;
            let raw = self.take(len.checked_mul(8).ok_or_else(|| IoError::Format("parameter too large".into()))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            if store.id_of(&name).is_some() {
                return Err(IoError::Format(format!("duplicate parameter {name}")));
            }
            store.insert(name, Tensor::new(&shape, data)?);
        }
        Ok(store)
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Checkpoint, IoError> {
    if bytes.len() < 8 + DIGEST_LEN || bytes[..4] != CHECKPOINT_MAGIC {
        return Err(IoError::Format("not a checkpoint (bad magic)".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(IoError::Checksum);
    }
    let mut r = Reader { bytes: body, pos: 4 };
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(IoError::Format(format!("unsupported checkpoint version {version}")));
    }
    let model = RunConfig::parse(&r.string()?, Path::new("."))?.model;
    let inventory = PhonemeInventory::parse(&r.string()?).map_err(|e| IoError::Format(e.to_string()))?;
    let table = DurationTable::parse(&r.string()?).map_err(|e| IoError::Format(e.to_string()))?;
    let updates = r.u64()?;
    let params = r.params()?;
    let shadow = r.params()?;
    if r.pos != body.len() {
        return Err(IoError::Format("trailing bytes after parameters".into()));
    }
    let ck = Checkpoint {
        model,
        inventory,
        table,
        state: TrainState {
            params,
            shadow,
            updates,
        },
    };
    ck.build_model().map_err(|e| IoError::Format(e.to_string()))?;
    Ok(ck)
}

pub fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), IoError> {
    write_file(path, &checkpoint_to_bytes(ck))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, IoError> {
    checkpoint_from_bytes(&read_file(path)?).map_err(|e| e.at(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duration::default_table;
    use crate::model::{Model, ModelConfig};
    use crate::score::default_inventory;

    fn sample() -> Checkpoint {
        let inv = default_inventory();
        let mut cfg = ModelConfig::desk();
        cfg.decoder.d_model = 8;
        cfg.encoder.embed_dim = 8;
        cfg.encoder.channels = 4;
        let (_, params) = Model::init(cfg, inv.len(), 2).unwrap();
        let mut shadow = params.clone();
        let id = shadow.ids().next().unwrap();
        shadow.get_mut(id).data_mut()[0] = std::f64::consts::PI;
        Checkpoint {
            model: cfg,
            inventory: inv,
            table: default_table(),
            state: TrainState {
                params,
                shadow,
                updates: 17,
            },
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        let bytes = checkpoint_to_bytes(&ck);
        let back = checkpoint_from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(checkpoint_to_bytes(&back), bytes);
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = checkpoint_to_bytes(&sample());
        let mid = bytes.len() / 2;
        bytes[mid] ^= 1;
        assert!(matches!(checkpoint_from_bytes(&bytes), Err(IoError::Checksum)));
        assert!(checkpoint_from_bytes(&bytes[..40]).is_err());
        assert!(checkpoint_from_bytes(b"FFSV").is_err());
    }
}
