//! Checkpoint layout, little-endian:
//!
//! ```text
//! b"PTXM" | u32 version | u32 vocab_size | u32 context_len | u32 n_layers
//! | u32 n_heads | u32 d_model | f64 dropout | u64 rng_seed | u64 n_floats
//! | n_floats x f32
//! ```
//!
//! Tensors follow the order of [`ModelParams::tensors`].

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ModelConfig, ModelError, ModelParams};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"PTXM";
pub const CHECKPOINT_VERSION: u32 = 1;

fn io_err(e: std::io::Error) -> ModelError {
    ModelError::File(e.to_string())
}

pub fn write_checkpoint(mut w: impl Write, config: &ModelConfig, params: &ModelParams<f32>) -> Result<(), ModelError> {
    if !params.matches(config) {
        return Err(ModelError::ConfigMismatch("parameter shapes do not match model config".into()));
    }
    let dims = [config.vocab_size, config.context_len, config.n_layers, config.n_heads, config.d_model];
    let mut head = Vec::with_capacity(48);
    head.extend_from_slice(&CHECKPOINT_MAGIC);
    head.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for d in dims {
        let d = u32::try_from(d).map_err(|_| ModelError::InvalidConfig(format!("dimension {d} exceeds u32")))?;
        head.extend_from_slice(&d.to_le_bytes());
    }
    head.extend_from_slice(&config.dropout.to_le_bytes());
    head.extend_from_slice(&config.rng_seed.to_le_bytes());
    head.extend_from_slice(&(params.len() as u64).to_le_bytes());
    w.write_all(&head).map_err(io_err)?;
    for (_, t) in params.tensors() {
        let mut buf = Vec::with_capacity(t.len() * 4);
        for x in t {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_checkpoint(mut r: impl Read) -> Result<(ModelConfig, ModelParams<f32>), ModelError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(ModelError::File(format!("bad magic {magic:?}")));
    }
    let mut u32s = [0u32; 6];
    for v in &mut u32s {
        let mut b = [0u8; 4];
        r.read_exact(&mut b).map_err(io_err)?;
        *v = u32::from_le_bytes(b);
    }
    if u32s[0] != CHECKPOINT_VERSION {
        return Err(ModelError::File(format!("unsupported version {}", u32s[0])));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8).map_err(io_err)?;
    let dropout = f64::from_le_bytes(b8);
    r.read_exact(&mut b8).map_err(io_err)?;
    let rng_seed = u64::from_le_bytes(b8);
    r.read_exact(&mut b8).map_err(io_err)?;
    let n = u64::from_le_bytes(b8);
    let config = ModelConfig {
        vocab_size: u32s[1] as usize,
        context_len: u32s[2] as usize,
        n_layers: u32s[3] as usize,
        n_heads: u32s[4] as usize,
        d_model: u32s[5] as usize,
        dropout,
        rng_seed,
    };
    config.validate().map_err(|e| ModelError::File(format!("embedded config: {e}")))?;
    if n != config.n_params() as u64 {
        return Err(ModelError::File(format!("{n} floats, config needs {}", config.n_params())));
    }
    let mut params = ModelParams::<f32>::zeros(&config);
    for t in params.tensors_mut() {
        let mut buf = vec![0u8; t.len() * 4];
        r.read_exact(&mut buf).map_err(io_err)?;
        for (x, c) in t.iter_mut().zip(buf.chunks_exact(4)) {
            *x = f32::from_le_bytes(c.try_into().unwrap());
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(io_err)? != 0 {
        return Err(ModelError::File("trailing bytes".into()));
    }
    Ok((config, params))
}

pub fn save_checkpoint(path: impl AsRef<Path>, config: &ModelConfig, params: &ModelParams<f32>) -> Result<(), ModelError> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| ModelError::File(format!("{}: {e}", path.display())))?;
    write_checkpoint(BufWriter::new(f), config, params)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelConfig, ModelParams<f32>), ModelError> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| ModelError::File(format!("{}: {e}", path.display())))?;
    read_checkpoint(BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::forward;

    fn cfg() -> ModelConfig {
        ModelConfig { vocab_size: 19, context_len: 6, n_layers: 2, n_heads: 2, d_model: 8, dropout: 0.1, rng_seed: 42 }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = cfg();
        let p = ModelParams::<f32>::init(&c, 3);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &c, &p).unwrap();
        assert_eq!(&buf[..4], b"PTXM");
        assert_eq!(buf.len(), 4 + 6 * 4 + 3 * 8 + 4 * c.n_params());
        let (c2, p2) = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(c2, c);
        assert_eq!(p2, p);
        let ids = [1, 2, 3, 4];
        assert_eq!(forward(&c, &p, &ids).unwrap(), forward(&c2, &p2, &ids).unwrap());
    }

    #[test]
    fn corrupt_inputs() {
        let c = cfg();
        let p = ModelParams::<f32>::init(&c, 3);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &c, &p).unwrap();

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(&bad[..]), Err(ModelError::File(_))));

        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(matches!(read_checkpoint(&bad[..]), Err(ModelError::File(_))));

        assert!(matches!(read_checkpoint(&buf[..buf.len() - 1]), Err(ModelError::File(_))));

        let mut bad = buf.clone();
        bad.push(0);
        assert!(matches!(read_checkpoint(&bad[..]), Err(ModelError::File(_))));

        let other = ModelConfig { vocab_size: 20, ..c.clone() };
        assert!(matches!(write_checkpoint(Vec::new(), &other, &p), Err(ModelError::ConfigMismatch(_))));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(load_checkpoint("/nonexistent/ckpt"), Err(ModelError::File(_))));
    }
}
