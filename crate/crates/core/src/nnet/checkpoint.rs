//! Binary checkpoint format.
//!
//! ```text
//! magic "UAVJAMCK" | version u32 | config len u32 | config (key=value text)
//! | tensor count u32 | per tensor: name len u32, name, ndim u32, dims u64..., f32 LE data
//! ```
//!
//! All integers are little-endian. Weights round-trip bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nnet::model::{Model, ModelConfig};
use crate::nnet::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"UAVJAMCK";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(model: &Model<f32>, mut w: W) -> Result<()> {
    let io = |e: std::io::Error| Error::Checkpoint(e.to_string());
    let config = model.config.to_kv();
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(config.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(config.as_bytes()).map_err(io)?;
    let params = model.params();
    let names = model.param_names();
    w.write_all(&(params.len() as u32).to_le_bytes()).map_err(io)?;
    for (name, p) in names.iter().zip(params) {
        w.write_all(&(name.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(name.as_bytes()).map_err(io)?;
        w.write_all(&(p.shape().len() as u32).to_le_bytes()).map_err(io)?;
        for &d in p.shape() {
            w.write_all(&(d as u64).to_le_bytes()).map_err(io)?;
        }
        let mut buf = Vec::with_capacity(p.len() * 4);
        for v in p.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))?;
    Ok(u64::from_le_bytes(b))
}

fn read_bytes<R: Read>(r: &mut R, n: usize) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    r.take(n as u64)
        .read_to_end(&mut buf)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    if buf.len() != n {
        return Err(Error::Checkpoint("truncated checkpoint".into()));
    }
    Ok(buf)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Model<f32>> {
    let magic = read_bytes(&mut r, MAGIC.len())?;
    if magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let len = read_u32(&mut r)? as usize;
    let text = String::from_utf8(read_bytes(&mut r, len)?)
        .map_err(|_| Error::Checkpoint("config block is not UTF-8".into()))?;
    let config = ModelConfig::from_kv(&text)?;
    config
        .validate()
        .map_err(|e| Error::Checkpoint(format!("invalid stored config: {e}")))?;
    let mut model = Model::<f32>::new(config, 0)?;
    let names = model.param_names();
    let count = read_u32(&mut r)? as usize;
    if count != names.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, found {count}",
            names.len()
        )));
    }
    for (expected, slot) in names.iter().zip(model.params_mut()) {
        let nlen = read_u32(&mut r)? as usize;
        let name = String::from_utf8(read_bytes(&mut r, nlen)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        if &name != expected {
            return Err(Error::Checkpoint(format!(
                "expected tensor `{expected}`, found `{name}`"
            )));
        }
        let ndim = read_u32(&mut r)? as usize;
        let shape = (0..ndim)
            .map(|_| read_u64(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        if shape != slot.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor `{name}` has shape {shape:?}, model expects {:?}",
                slot.shape()
            )));
        }
        let n: usize = shape.iter().product();
        let raw = read_bytes(&mut r, n * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        *slot = Tensor::from_vec(&shape, data)?;
    }
    Ok(model)
}

pub fn save_checkpoint(model: &Model<f32>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(model, BufWriter::new(file))
}

pub fn load_checkpoint(path: &Path) -> Result<Model<f32>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::model::Variant;

    #[test]
    fn round_trip_is_bit_exact() {
        for variant in [Variant::Attention, Variant::Lstm] {
            let m = Model::<f32>::new(ModelConfig::table(variant, 3, 128), 7).unwrap();
            let mut buf = Vec::new();
            write_checkpoint(&m, &mut buf).unwrap();
            let back = read_checkpoint(buf.as_slice()).unwrap();
            assert_eq!(back.config, m.config);
            let a: Vec<u32> = m.flat_weights().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.flat_weights().iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = Model::<f32>::new(ModelConfig::table(Variant::Attention, 2, 256), 1).unwrap();
        save_checkpoint(&m, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), m);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let m = Model::<f32>::new(ModelConfig::table(Variant::Attention, 2, 128), 1).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&m, &mut buf).unwrap();

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(Error::Checkpoint(_))));

        let truncated = &buf[..buf.len() - 3];
        assert!(matches!(read_checkpoint(truncated), Err(Error::Checkpoint(_))));

        let mut versioned = buf.clone();
        versioned[8] = 9;
        assert!(matches!(read_checkpoint(versioned.as_slice()), Err(Error::Checkpoint(_))));
    }
}
