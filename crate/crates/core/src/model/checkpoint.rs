//! Checkpoint layout (all integers little-endian):
//!
//! ```text
//! "MDER1"
//! u64 header length, then a JSON header {"config", "vocab", "lexicon"}
//! u32 array count
//! per array: u32 name length, name, u32 rank, rank x u32 dims, f32 values
//! ```

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MderConfig, MderParams, ModelError, Tagger};
use crate::corpus::Vocabulary;
use crate::crf::CrfParams;
use crate::lexicon::Lexicon;
use crate::numerics::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"MDER1";

#[derive(Serialize, Deserialize)]
struct Header {
    config: MderConfig,
    vocab: Vocabulary,
    lexicon: Lexicon,
}

fn bad(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

impl Tagger {
    pub fn to_bytes(&self) -> Result<Vec<u8>, ModelError> {
        let header = serde_json::to_vec(&Header {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            lexicon: self.lexicon.clone(),
        })
        .map_err(|e| bad(e.to_string()))?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        let named = self.params.named();
        out.extend_from_slice(&(named.len() as u32).to_le_bytes());
        for (name, t) in named {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Parses a checkpoint, validating every array against the shapes the
    /// stored configuration implies.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("not an MDER1 checkpoint"));
        }
        let header_len = read_u64(&mut r)? as usize;
        let mut header = vec![0u8; header_len];
        r.read_exact(&mut header).map_err(|_| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&header).map_err(|e| bad(e.to_string()))?;
        header.config.validate()?;

        let expected = MderParams::expected_shapes(&header.config, header.vocab.len());
        let count = read_u32(&mut r)? as usize;
        if count != expected.len() {
            return Err(bad(format!("{count} arrays, configuration needs {}", expected.len())));
        }
        let mut arrays = Vec::with_capacity(count);
        for (want_name, want_shape) in &expected {
            let name_len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name).map_err(|_| bad("truncated name"))?;
            let name = String::from_utf8(name).map_err(|_| bad("array name is not UTF-8"))?;
            if &name != want_name {
                return Err(bad(format!("expected array {want_name}, found {name}")));
            }
            let rank = read_u32(&mut r)? as usize;
            let shape = (0..rank)
                .map(|_| read_u32(&mut r).map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            if &shape != want_shape {
                return Err(bad(format!("{name}: shape {shape:?}, expected {want_shape:?}")));
            }
            let numel: usize = shape.iter().product();
            let mut raw = vec![0u8; numel * 4];
            r.read_exact(&mut raw).map_err(|_| bad(format!("{name}: truncated values")))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
                .collect();
            arrays.push(Tensor::new(shape, data)?);
        }
        if (r.position() as usize) != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        let mut params = skeleton(&header.config, header.vocab.len());
        for (slot, value) in params.values_mut().into_iter().zip(arrays) {
            *slot = value;
        }
        Ok(Tagger {
            config: header.config,
            vocab: header.vocab,
            lexicon: header.lexicon,
            params,
        })
    }
}

fn skeleton(config: &MderConfig, vocab_size: usize) -> MderParams {
    let mut p = super::init_params(config, vocab_size, 0).expect("validated configuration");
    p.crf = CrfParams::new_constrained();
    p
}

fn read_u32(r: &mut Cursor<&[u8]>) -> Result<u32, ModelError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| bad("truncated integer"))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut Cursor<&[u8]>) -> Result<u64, ModelError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| bad("truncated integer"))?;
    Ok(u64::from_le_bytes(b))
}

pub fn write_checkpoint(tagger: &Tagger, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    fs::write(path, tagger.to_bytes()?).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Tagger, ModelError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Tagger::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Tagger {
        let lex = Lexicon::new(vec!["SVM"], vec!["MNIST"], vec!["the"]).unwrap();
        Tagger::new(
            MderConfig::debug_small(),
            Vocabulary::from_chars("abc SVM".chars()),
            lex,
            4,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_to_f32_precision() {
        let t = tiny();
        let bytes = t.to_bytes().unwrap();
        assert_eq!(&bytes[..5], b"MDER1");
        let back = Tagger::from_bytes(&bytes).unwrap();
        assert_eq!(back.config, t.config);
        assert_eq!(back.vocab, t.vocab);
        assert_eq!(back.lexicon, t.lexicon);
        for ((n, a), (_, b)) in t.params.named().iter().zip(back.params.named()) {
            assert!(a.max_abs_diff(b) < 1e-6, "{n}");
        }
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let bytes = tiny().to_bytes().unwrap();
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(Tagger::from_bytes(&wrong).is_err());
        assert!(Tagger::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn rejects_shape_mismatch() {
        let t = tiny();
        let mut other = t.clone();
        other.config = MderConfig::baseline();
        // header claims the baseline config, arrays are the full layout
        let header = serde_json::to_vec(&Header {
            config: other.config.clone(),
            vocab: t.vocab.clone(),
            lexicon: t.lexicon.clone(),
        })
        .unwrap();
        let bytes = t.to_bytes().unwrap();
        let old_len = u64::from_le_bytes(bytes[5..13].try_into().unwrap()) as usize;
        let mut forged = Vec::new();
        forged.extend_from_slice(CHECKPOINT_MAGIC);
        forged.extend_from_slice(&(header.len() as u64).to_le_bytes());
        forged.extend_from_slice(&header);
        forged.extend_from_slice(&bytes[13 + old_len..]);
        let err = Tagger::from_bytes(&forged).unwrap_err();
        assert!(matches!(err, ModelError::Checkpoint(_)), "{err}");
    }
}
