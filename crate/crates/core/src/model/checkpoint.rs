//! Binary checkpoint format.
//!
//! ```text
//! "DBRC"                    magic
//! u32 LE                    format version
//! u32 LE + UTF-8 bytes      config echo (JSON)
//! f64 LE …                  every parameter tensor in declaration order
//! f64 LE × bits             α
//! u8                        1 if standardization statistics follow, else 0
//! f64 LE …                  mean_x, scale_x, mean_y, scale_y
//! ```
//!
//! Tensor shapes are implied by the config, so the payload is raw values.

use std::fs;
use std::path::Path;

use super::{DbrcConfig, DbrcModel};
use crate::data::{PairStandardizer, Standardizer};
use crate::error::{Error, Result};
use crate::numerics::RngState;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DBRC";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained model plus the feature standardization it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: DbrcModel,
    pub standardizer: Option<PairStandardizer>,
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s_into(&mut self, dst: &mut [f64]) -> std::result::Result<(), String> {
        let raw = self.take(dst.len() * 8)?;
        for (d, c) in dst.iter_mut().zip(raw.chunks_exact(8)) {
            *d = f64::from_le_bytes(c.try_into().unwrap());
        }
        Ok(())
    }

    fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        let mut v = vec![0.0; n];
        self.f64s_into(&mut v)?;
        Ok(v)
    }
}

impl Checkpoint {
    pub fn new(model: DbrcModel, standardizer: Option<PairStandardizer>) -> Self {
        Self { model, standardizer }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let config = serde_json::to_vec(self.model.config()).expect("config serializes");
        out.extend_from_slice(&(config.len() as u32).to_le_bytes());
        out.extend_from_slice(&config);
        for tensor in self.model.param_slices() {
            put_f64s(&mut out, tensor);
        }
        put_f64s(&mut out, self.model.hash_layer().alpha());
        match &self.standardizer {
            None => out.push(0),
            Some(s) => {
                out.push(1);
                for part in [&s.x, &s.y] {
                    put_f64s(&mut out, &part.mean);
                    put_f64s(&mut out, &part.scale);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Checkpoint, String> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != CHECKPOINT_MAGIC {
            return Err("missing DBRC magic".into());
        }
        let version = cur.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(format!("unsupported checkpoint version {version}"));
        }
        let len = cur.u32()? as usize;
        let config: DbrcConfig =
            serde_json::from_slice(cur.take(len)?).map_err(|e| format!("bad config echo: {e}"))?;
        let mut model = DbrcModel::build(&config, &mut RngState::new(0)).map_err(|e| e.to_string())?;
        for tensor in model.param_slices_mut() {
            cur.f64s_into(tensor)?;
        }
        let alpha = cur.f64s(config.bits)?;
        let floor = model.hash_layer().alpha_min();
        if alpha.iter().any(|a| !(a.is_finite() && *a >= floor)) {
            return Err("alpha below floor or non-finite".into());
        }
        model.hash_layer_mut().alpha_mut().copy_from_slice(&alpha);
        if model.param_slices().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err("non-finite parameter".into());
        }
        let standardizer = match cur.take(1)?[0] {
            0 => None,
            1 => {
                let mut part = |dim: usize| -> std::result::Result<Standardizer, String> {
                    let mean = cur.f64s(dim)?;
                    let scale = cur.f64s(dim)?;
                    Ok(Standardizer { mean, scale })
                };
                let x = part(config.dim_x)?;
                let y = part(config.dim_y)?;
                Some(PairStandardizer { x, y })
            }
            other => return Err(format!("bad standardizer flag {other}")),
        };
        if cur.pos != bytes.len() {
            return Err(format!("{} trailing bytes", bytes.len() - cur.pos));
        }
        Ok(Checkpoint { model, standardizer })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes).map_err(|m| Error::format(path, m))
    }
}
