//! Shaper checkpoint: versioned little-endian binary plus a JSON sidecar.
//!
//! Layout: `b"NPSH"`, `u32` version, `u32` alphabet size, `u32` hidden size,
//! `u32` float width in bytes (8), then the five parameter tensors in
//! [`ShaperParams::tensors`] order as raw `f64`.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::shaper::ShaperParams;
use super::tensor::Tensor;
use crate::Error;

const MAGIC: &[u8; 4] = b"NPSH";
const VERSION: u32 = 1;

pub fn write_params<W: Write>(params: &ShaperParams, mut w: W) -> Result<(), Error> {
    w.write_all(MAGIC)?;
    for v in [VERSION, params.alphabet() as u32, params.hidden() as u32, 8] {
        w.write_all(&v.to_le_bytes())?;
    }
    for t in params.tensors() {
        for x in t.data() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_params<R: Read>(mut r: R) -> Result<ShaperParams, Error> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a shaper checkpoint".into()));
    }
    let mut word = || -> Result<u32, Error> {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    };
    let version = word()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let alphabet = word()? as usize;
    let hidden = word()? as usize;
    let width = word()?;
    if width != 8 {
        return Err(Error::Format(format!("unsupported float width {width}")));
    }
    if alphabet == 0 || hidden == 0 {
        return Err(Error::Format("empty shaper dimensions".into()));
    }
    let layout = ShaperParams::zeros(alphabet, hidden);
    let mut tensors = Vec::with_capacity(5);
    for t in layout.tensors() {
        let mut data = vec![0.0; t.len()];
        let mut b = [0u8; 8];
        for x in data.iter_mut() {
            r.read_exact(&mut b).map_err(|_| Error::Format("truncated checkpoint".into()))?;
            *x = f64::from_le_bytes(b);
        }
        tensors.push(Tensor::new(t.rows(), t.cols(), data));
    }
    let params = ShaperParams::from_tensors(alphabet, hidden, tensors)?;
    if !params.is_finite() {
        return Err(Error::NonFinite("checkpoint holds non-finite parameters".into()));
    }
    Ok(params)
}

/// Path of the JSON sidecar next to a checkpoint.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn save(path: &Path, params: &ShaperParams, meta: &serde_json::Value) -> Result<(), Error> {
    let mut buf = Vec::new();
    write_params(params, &mut buf)?;
    std::fs::write(path, buf)?;
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(ShaperParams, Option<serde_json::Value>), Error> {
    let bytes = std::fs::read(path)?;
    let params = read_params(&bytes[..])?;
    let side = sidecar_path(path);
    let meta = if side.exists() {
        Some(serde_json::from_str(&std::fs::read_to_string(side)?)?)
    } else {
        None
    };
    Ok((params, meta))
}
