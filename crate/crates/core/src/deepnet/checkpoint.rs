//! Binary checkpoint: magic, version, JSON header, then every parameter as
//! little-endian f64 in layer order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cnn::CnnParams;
use super::train::TrainConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"PDSCNN\0\0";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: CnnParams,
    pub config: TrainConfig,
    pub epoch: usize,
    pub val_accuracy: f64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    shapes: Vec<Vec<usize>>,
    config: TrainConfig,
    epoch: usize,
    val_accuracy: f64,
}

pub fn write_checkpoint(ckpt: &Checkpoint, out: &mut impl Write) -> std::io::Result<()> {
    let header = Header {
        shapes: CnnParams::shapes(),
        config: ckpt.config,
        epoch: ckpt.epoch,
        val_accuracy: ckpt.val_accuracy,
    };
    let json = serde_json::to_vec(&header).map_err(std::io::Error::other)?;
    out.write_all(MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    for t in ckpt.params.tensors() {
        for v in t {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn bad(message: impl Into<String>) -> Error {
    Error::invalid(format!("checkpoint: {}", message.into()))
}

pub fn read_checkpoint(input: &mut impl Read) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(|e| bad(e.to_string()))?;
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let json = bytes.get(20..20 + len).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(json)?;
    if header.shapes != CnnParams::shapes() {
        return Err(bad(format!("layer shapes {:?} do not match this network", header.shapes)));
    }
    let mut body = bytes[20 + len..].chunks_exact(8);
    let mut params = CnnParams::zeros();
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            let chunk = body.next().ok_or_else(|| bad("truncated parameters"))?;
            *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
    }
    if body.next().is_some() || !body.remainder().is_empty() {
        return Err(bad("trailing bytes"));
    }
    Ok(Checkpoint { params, config: header.config, epoch: header.epoch, val_accuracy: header.val_accuracy })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    write_checkpoint(ckpt, &mut f).and_then(|_| f.flush()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&mut f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint { params: CnnParams::init(5), config: TrainConfig::default(), epoch: 3, val_accuracy: 0.75 }
    }

    #[test]
    fn round_trip() {
        let mut buf = Vec::new();
        write_checkpoint(&sample(), &mut buf).unwrap();
        let back = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(back, sample());
    }

    #[test]
    fn rejects_damage() {
        let mut buf = Vec::new();
        write_checkpoint(&sample(), &mut buf).unwrap();
        let mut wrong_magic = buf.clone();
        wrong_magic[0] = b'X';
        assert!(read_checkpoint(&mut wrong_magic.as_slice()).is_err());
        let mut wrong_version = buf.clone();
        wrong_version[8] = 9;
        assert!(read_checkpoint(&mut wrong_version.as_slice()).is_err());
        assert!(read_checkpoint(&mut &buf[..buf.len() - 4]).is_err());
        let mut longer = buf.clone();
        longer.extend_from_slice(&[0; 8]);
        assert!(read_checkpoint(&mut longer.as_slice()).is_err());
    }
}
