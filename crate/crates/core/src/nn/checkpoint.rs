//! Binary checkpoint layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes   "OBJFCKPT"
//! version      u32       1
//! latent_dim   u32
//! width        u32
//! layers       u32       backbone depth, always 2
//! pos_freqs    u32
//! dir_freqs    u32
//! include_in   u32       0 or 1
//! coord_scale  f32
//! dens_scale   f32
//! num_latents  u32
//! num_params   u32
//! per parameter, in declared order:
//!   name_len u32, name bytes (UTF-8), rows u32, cols u32, rows*cols f32
//! meta_len     u32
//! meta         meta_len bytes of UTF-8 text (training config as TOML)
//! ```
//!
//! Weights are kept as `f64` in memory and rounded to `f32` on save.

use std::io::{Read, Write};
use std::path::Path;

use super::model::{DecoderConfig, Model, BACKBONE_LAYERS, PARAM_NAMES};
use super::params::ParameterStore;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"OBJFCKPT";
pub const VERSION: u32 = 1;

/// A loaded checkpoint: the model and the free-form metadata trailer.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub metadata: String,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&(v as f32).to_le_bytes());
}

fn u32_of(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Checkpoint(format!("value {v} does not fit in u32")))
}

pub fn encode_checkpoint(model: &Model, metadata: &str) -> Result<Vec<u8>> {
    let c = model.config();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    for v in [
        c.latent_dim,
        c.width,
        BACKBONE_LAYERS,
        c.pos_freqs,
        c.dir_freqs,
        c.include_input as usize,
    ] {
        put_u32(&mut out, u32_of(v)?);
    }
    put_f32(&mut out, c.coord_scale);
    put_f32(&mut out, c.density_scale);
    put_u32(&mut out, u32_of(model.num_latents())?);
    put_u32(&mut out, u32_of(model.params().len())?);
    for (_, p) in model.params().iter() {
        put_u32(&mut out, u32_of(p.name.len())?);
        out.extend_from_slice(p.name.as_bytes());
        put_u32(&mut out, u32_of(p.rows)?);
        put_u32(&mut out, u32_of(p.cols)?);
        for &v in &p.data {
            put_f32(&mut out, v);
        }
    }
    put_u32(&mut out, u32_of(metadata.len())?);
    out.extend_from_slice(metadata.as_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    fn f32(&mut self) -> Result<f64> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()) as f64)
    }

    fn string(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let latent_dim = r.usize()?;
    let width = r.usize()?;
    let layers = r.usize()?;
    if layers != BACKBONE_LAYERS {
        return Err(Error::Checkpoint(format!(
            "unsupported backbone depth {layers}"
        )));
    }
    let pos_freqs = r.usize()?;
    let dir_freqs = r.usize()?;
    let include_input = match r.u32()? {
        0 => false,
        1 => true,
        v => return Err(Error::Checkpoint(format!("bad include_input flag {v}"))),
    };
    let config = DecoderConfig {
        latent_dim,
        width,
        pos_freqs,
        dir_freqs,
        include_input,
        coord_scale: r.f32()?,
        density_scale: r.f32()?,
    };
    let num_latents = r.usize()?;
    let count = r.usize()?;
    if count != PARAM_NAMES.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} arrays, found {count}",
            PARAM_NAMES.len()
        )));
    }
    let mut store = ParameterStore::new();
    for _ in 0..count {
        let n = r.usize()?;
        let name = r.string(n)?;
        let rows = r.usize()?;
        let cols = r.usize()?;
        let len = rows
            .checked_mul(cols)
            .filter(|&l| l <= bytes.len() / 4)
            .ok_or_else(|| Error::Checkpoint(format!("implausible shape for {name}")))?;
        let data = (0..len).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Checkpoint(format!("non-finite values in {name}")));
        }
        store
            .add(&name, rows, cols, data)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
    }
    let meta_len = r.usize()?;
    let metadata = r.string(meta_len)?;
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after metadata".into()));
    }
    let model = Model::from_params(config, store)?;
    if model.num_latents() != num_latents {
        return Err(Error::Checkpoint(
            "latent table size disagrees with header".into(),
        ));
    }
    Ok(Checkpoint { model, metadata })
}

pub fn save_checkpoint(path: &Path, model: &Model, metadata: &str) -> Result<()> {
    let bytes = encode_checkpoint(model, metadata)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_checkpoint(&bytes)
}
