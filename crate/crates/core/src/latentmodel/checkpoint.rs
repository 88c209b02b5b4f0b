//! Versioned checkpoint container: magic, TOML header echoing the model
//! and loss config, step counter, and the raw parameter blob.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{ArchConfig, LatentModel, LossConfig};

const CKPT_MAGIC: &[u8; 8] = b"GVAECKPT";
const CKPT_VERSION: u32 = 1;

/// Everything needed to rebuild the model structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub image_channels: usize,
    pub image_side: usize,
    pub latent_dim: usize,
    pub arch: ArchConfig,
    pub loss: LossConfig,
}

pub fn save_checkpoint(model: &LatentModel, loss: &LossConfig, step: u64, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let header = CheckpointHeader {
        image_channels: model.image_channels,
        image_side: model.image_side,
        latent_dim: model.latent_dim,
        arch: model.arch.clone(),
        loss: *loss,
    };
    let header_toml =
        toml::to_string(&header).map_err(|e| Error::Config(format!("header serialise: {e}")))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CKPT_MAGIC)?;
    w.write_all(&CKPT_VERSION.to_le_bytes())?;
    w.write_all(&(header_toml.len() as u32).to_le_bytes())?;
    w.write_all(header_toml.as_bytes())?;
    w.write_all(&step.to_le_bytes())?;
    w.write_all(&(model.params.len() as u64).to_le_bytes())?;
    for p in &model.params {
        w.write_all(&p.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Rebuilds the model (structure from the header, parameters from the
/// blob). Returns the model, its loss config and the step counter.
pub fn load_checkpoint(path: &Path) -> Result<(LatentModel, LossConfig, u64)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CKPT_MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    let version = u32::from_le_bytes(buf4);
    if version != CKPT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    r.read_exact(&mut buf4)?;
    let header_len = u32::from_le_bytes(buf4) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)?;
    let header: CheckpointHeader = toml::from_str(
        std::str::from_utf8(&header_bytes).map_err(|e| Error::Format(format!("header utf8: {e}")))?,
    )
    .map_err(|e| Error::Format(format!("header parse: {e}")))?;
    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8)?;
    let step = u64::from_le_bytes(buf8);
    r.read_exact(&mut buf8)?;
    let count = u64::from_le_bytes(buf8) as usize;
    let mut model = LatentModel::new(
        header.image_channels,
        header.image_side,
        header.latent_dim,
        &header.arch,
        0,
    )?;
    if model.params.len() != count {
        return Err(Error::Format(format!(
            "parameter count mismatch: structure wants {}, file has {count}",
            model.params.len()
        )));
    }
    for p in &mut model.params {
        r.read_exact(&mut buf8)?;
        *p = f64::from_le_bytes(buf8);
    }
    Ok((model, header.loss, step))
}
