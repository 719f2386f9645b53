//! Model checkpoint container: magic "MSCK", u32 version, u32 block
//! count, then named parameter blocks (u32 name length, UTF-8 name,
//! u32 rank, u32 dims, 64-bit little-endian values). A "meta/config"
//! block carries the architecture so a model is reconstructable from the
//! file alone.

use std::path::Path;

use mstk_core::denoiser::{DenoiserModel, ModelConfig};

use crate::error::{CliError, Result};

pub const MAGIC: [u8; 4] = *b"MSCK";
pub const VERSION: u32 = 1;
const META_NAME: &str = "meta/config";

struct Block {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

fn push_block(out: &mut Vec<u8>, name: &str, shape: &[usize], values: &[f64]) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn to_bytes(model: &DenoiserModel) -> Vec<u8> {
    let cfg = model.config();
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let blocks = model.param_blocks();
    out.extend_from_slice(&((blocks.len() + 1) as u32).to_le_bytes());
    let meta = [
        cfg.channels as f64,
        cfg.height as f64,
        cfg.width as f64,
        cfg.hidden_width as f64,
        cfg.time_embed_dim as f64,
        cfg.class_embed_dim as f64,
        cfg.num_classes as f64,
    ];
    push_block(&mut out, META_NAME, &[meta.len()], &meta);
    for block in blocks {
        push_block(&mut out, block.name, &block.shape, model.block_values(block));
    }
    out
}

pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<DenoiserModel> {
    let mut cursor = 0usize;
    let take = |cursor: &mut usize, n: usize| -> Result<&[u8]> {
        if *cursor + n > bytes.len() {
            return Err(CliError::format(origin, "truncated checkpoint"));
        }
        let slice = &bytes[*cursor..*cursor + n];
        *cursor += n;
        Ok(slice)
    };
    let read_u32 = |cursor: &mut usize| -> Result<u32> {
        Ok(u32::from_le_bytes(take(cursor, 4)?.try_into().unwrap()))
    };

    if take(&mut cursor, 4)? != MAGIC {
        return Err(CliError::format(origin, "bad magic bytes (not a checkpoint)"));
    }
    let version = read_u32(&mut cursor)?;
    if version != VERSION {
        return Err(CliError::format(
            origin,
            format!("unsupported checkpoint version {version}"),
        ));
    }
    let block_count = read_u32(&mut cursor)? as usize;
    let mut blocks = Vec::with_capacity(block_count);
    for _ in 0..block_count {
        let name_len = read_u32(&mut cursor)? as usize;
        let name = String::from_utf8(take(&mut cursor, name_len)?.to_vec())
            .map_err(|_| CliError::format(origin, "block name is not UTF-8"))?;
        let rank = read_u32(&mut cursor)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(&mut cursor)? as usize);
        }
        let count: usize = shape.iter().product();
        let values: Vec<f64> = take(&mut cursor, count * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        blocks.push(Block {
            name,
            shape,
            values,
        });
    }
    if cursor != bytes.len() {
        return Err(CliError::format(origin, "trailing bytes after checkpoint"));
    }

    let meta = blocks
        .iter()
        .find(|b| b.name == META_NAME)
        .ok_or_else(|| CliError::format(origin, "checkpoint is missing the meta block"))?;
    if meta.values.len() != 7 {
        return Err(CliError::format(origin, "meta block has the wrong length"));
    }
    let as_usize = |v: f64| -> usize { v as usize };
    let cfg = ModelConfig {
        channels: as_usize(meta.values[0]),
        height: as_usize(meta.values[1]),
        width: as_usize(meta.values[2]),
        hidden_width: as_usize(meta.values[3]),
        time_embed_dim: as_usize(meta.values[4]),
        class_embed_dim: as_usize(meta.values[5]),
        num_classes: as_usize(meta.values[6]),
    };

    // assemble the flat parameter vector in layout order
    let reference = DenoiserModel::init(cfg.clone(), &mut mstk_core::rng::chacha(0))
        .map_err(CliError::from)?;
    let mut params = vec![0.0; reference.param_count()];
    for expected in reference.param_blocks() {
        let found = blocks
            .iter()
            .find(|b| b.name == expected.name)
            .ok_or_else(|| {
                CliError::format(origin, format!("missing parameter block '{}'", expected.name))
            })?;
        if found.shape != expected.shape {
            return Err(CliError::format(
                origin,
                format!(
                    "block '{}' has shape {:?}, expected {:?}",
                    expected.name, found.shape, expected.shape
                ),
            ));
        }
        params[expected.offset..expected.offset + expected.len].copy_from_slice(&found.values);
    }
    DenoiserModel::from_parts(cfg, params).map_err(CliError::from)
}

pub fn save(path: &Path, model: &DenoiserModel) -> Result<()> {
    std::fs::write(path, to_bytes(model)).map_err(CliError::io(path))
}

pub fn load(path: &Path) -> Result<DenoiserModel> {
    let bytes = std::fs::read(path).map_err(CliError::io(path))?;
    from_bytes(&bytes, path)
}
