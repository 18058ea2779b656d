//! Checkpoint byte layout (all integers little-endian):
//!
//! ```text
//! magic        7 bytes   "SYMNET1"
//! domain       32 bytes  SHA-256 of the canonical domain text
//! hyper_len    u32
//! hyper        hyper_len bytes of UTF-8 JSON
//! count        u32
//! count records:
//!   name_len   u32
//!   name       name_len bytes of UTF-8
//!   rank       u32
//!   dims       rank x u32
//!   data       prod(dims) x f32
//! ```

use std::io::{Read, Write};

use thiserror::Error;

use super::optim::Params;
use super::tensor::Tensor;

pub const MAGIC: &[u8; 7] = b"SYMNET1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub domain_fingerprint: [u8; 32],
    pub hyper: serde_json::Value,
    pub params: Params<f32>,
}

fn put_u32(w: &mut impl Write, x: usize) -> std::io::Result<()> {
    let x = u32::try_from(x).map_err(|_| std::io::Error::other("length exceeds u32"))?;
    w.write_all(&x.to_le_bytes())
}

fn get_u32(r: &mut impl Read) -> Result<usize, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn get_bytes(r: &mut impl Read, n: usize) -> Result<Vec<u8>, CheckpointError> {
    let mut buf = Vec::new();
    r.take(n as u64).read_to_end(&mut buf)?;
    if buf.len() != n {
        return Err(CheckpointError::Malformed("truncated".into()));
    }
    Ok(buf)
}

impl Checkpoint {
    pub fn write_to(&self, w: &mut impl Write) -> Result<(), CheckpointError> {
        w.write_all(MAGIC)?;
        w.write_all(&self.domain_fingerprint)?;
        let hyper = serde_json::to_vec(&self.hyper).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        put_u32(w, hyper.len())?;
        w.write_all(&hyper)?;
        put_u32(w, self.params.len())?;
        for (name, t) in self.params.names.iter().zip(&self.params.tensors) {
            put_u32(w, name.len())?;
            w.write_all(name.as_bytes())?;
            put_u32(w, 2)?;
            put_u32(w, t.rows)?;
            put_u32(w, t.cols)?;
            for x in &t.data {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory cannot fail");
        out
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 7];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let mut domain_fingerprint = [0u8; 32];
        r.read_exact(&mut domain_fingerprint)?;
        let n = get_u32(r)?;
        let hyper = serde_json::from_slice(&get_bytes(r, n)?).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        let count = get_u32(r)?;
        let mut params = Params::default();
        for _ in 0..count {
            let n = get_u32(r)?;
            let name = String::from_utf8(get_bytes(r, n)?).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
            let rank = get_u32(r)?;
            if rank > 2 {
                return Err(CheckpointError::Malformed(format!("rank {rank} for `{name}`")));
            }
            let dims: Vec<usize> = (0..rank).map(|_| get_u32(r)).collect::<Result<_, _>>()?;
            let (rows, cols) = match dims[..] {
                [] => (1, 1),
                [c] => (1, c),
                [r, c] => (r, c),
                _ => unreachable!(),
            };
            let bytes = get_bytes(r, rows * cols * 4)?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            params.push(name, Tensor::new(rows, cols, data));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(CheckpointError::Malformed("trailing bytes".into()));
        }
        Ok(Checkpoint {
            domain_fingerprint,
            hyper,
            params,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), CheckpointError> {
        // write-then-rename keeps the previous file intact on failure
        let tmp = path.with_extension("tmp");
        let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        self.write_to(&mut f)?;
        f.flush()?;
        drop(f);
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CheckpointError> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut f)
    }
}
