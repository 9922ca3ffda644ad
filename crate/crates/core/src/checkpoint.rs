//! Self-contained model file.
//!
//! Layout: the 8-byte magic `DSYNCKPT`, a little-endian `u32` format version,
//! a little-endian `u64` header length, the JSON header, then every parameter
//! as little-endian f32 in layout order.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::{ModelConfig, Params, TensorInfo};
use crate::schema::DerivedSchema;
use crate::tokenizer::{Scalers, Tokenizer, TokenizerConfig, Vocab};

pub const MAGIC: &[u8; 8] = b"DSYNCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a checkpoint file")]
    Magic,
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("malformed checkpoint header: {0}")]
    Header(String),
    #[error("checkpoint data is truncated")]
    Truncated,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub tokenizer: Tokenizer,
    pub schema: DerivedSchema,
    pub scaled_schema: DerivedSchema,
    pub params: Params<f32>,
    /// Longest training stream; bounds generated length.
    pub max_stream_len: usize,
    /// Free-form provenance, e.g. the run config.
    pub metadata: Value,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    tokenizer_config: TokenizerConfig,
    vocab: Vocab,
    scalers: Scalers,
    schema: Value,
    scaled_schema: Value,
    tensors: Vec<TensorInfo>,
    max_stream_len: usize,
    metadata: Value,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>, CheckpointError> {
        let header = Header {
            config: self.params.config.clone(),
            tokenizer_config: self.tokenizer.config,
            vocab: self.tokenizer.vocab.clone(),
            scalers: self.tokenizer.scalers.clone(),
            schema: self.schema.to_json_schema(),
            scaled_schema: self.scaled_schema.to_json_schema(),
            tensors: self.params.layout.tensors.clone(),
            max_stream_len: self.max_stream_len,
            metadata: self.metadata.clone(),
        };
        let json =
            serde_json::to_vec(&header).map_err(|e| CheckpointError::Header(e.to_string()))?;
        let mut out = Vec::with_capacity(20 + json.len() + 4 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for x in &self.params.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 8];
        bytes
            .read_exact(&mut magic)
            .map_err(|_| CheckpointError::Magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::Magic);
        }
        let mut u32b = [0u8; 4];
        bytes
            .read_exact(&mut u32b)
            .map_err(|_| CheckpointError::Truncated)?;
        let version = u32::from_le_bytes(u32b);
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let mut u64b = [0u8; 8];
        bytes
            .read_exact(&mut u64b)
            .map_err(|_| CheckpointError::Truncated)?;
        let hlen = u64::from_le_bytes(u64b) as usize;
        if bytes.len() < hlen {
            return Err(CheckpointError::Truncated);
        }
        let (hjson, data) = bytes.split_at(hlen);
        let h: Header =
            serde_json::from_slice(hjson).map_err(|e| CheckpointError::Header(e.to_string()))?;
        let bad = |e: String| CheckpointError::Header(e);
        let schema = DerivedSchema::from_json_schema(&h.schema).map_err(|e| bad(e.to_string()))?;
        let scaled_schema =
            DerivedSchema::from_json_schema(&h.scaled_schema).map_err(|e| bad(e.to_string()))?;
        let total: usize = h.tensors.iter().map(TensorInfo::len).sum();
        if data.len() != 4 * total {
            return Err(CheckpointError::Truncated);
        }
        let values: Vec<f32> = data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let params = Params::from_data(h.config, values).map_err(|e| bad(e.to_string()))?;
        if params.layout.tensors != h.tensors {
            return Err(bad("tensor table does not match the model config".into()));
        }
        Ok(Self {
            tokenizer: Tokenizer::new(h.tokenizer_config, h.vocab, h.scalers),
            schema,
            scaled_schema,
            params,
            max_stream_len: h.max_stream_len,
            metadata: h.metadata,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PositionEncoding;
    use crate::schema::derive_schema;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use serde_json::json;

    fn sample() -> Checkpoint {
        let corpus = vec![json!({"a": 1.5, "b": ["x"]}), json!({"a": 2.5, "b": []})];
        let tok = Tokenizer::fit(
            &corpus,
            TokenizerConfig {
                tau: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let schema = derive_schema(&corpus, 1).unwrap();
        let scaled = schema.transform_scaled(&tok.scalers).unwrap();
        let cfg = ModelConfig {
            d_model: 8,
            n_layers: 1,
            n_heads: 2,
            d_ff: 8,
            n_mixtures: 2,
            max_array_len: 4,
            vocab_size: tok.vocab.size(),
            max_seq_len: 16,
            dropout: 0.1,
            position: PositionEncoding::KeyPath,
        };
        let params = Params::init(cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        Checkpoint {
            tokenizer: tok,
            schema,
            scaled_schema: scaled,
            params,
            max_stream_len: 9,
            metadata: json!({"seed": 3}),
        }
    }

    #[test]
    fn round_trips_exactly() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert_eq!(back.params.data, c.params.data);
        assert_eq!(back.params.config, c.params.config);
        assert_eq!(back.tokenizer, c.tokenizer);
        assert_eq!(back.schema, c.schema);
        assert_eq!(back.scaled_schema, c.scaled_schema);
        assert_eq!(
            (back.max_stream_len, back.metadata),
            (9, json!({"seed": 3}))
        );
    }

    #[test]
    fn rejects_bad_magic_version_and_truncation() {
        let bytes = sample().to_bytes().unwrap();
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(matches!(
            Checkpoint::from_bytes(&wrong),
            Err(CheckpointError::Magic)
        ));
        let mut v2 = bytes.clone();
        v2[8..12].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            Checkpoint::from_bytes(&v2),
            Err(CheckpointError::Version { found: 2, .. })
        ));
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 3]),
            Err(CheckpointError::Truncated)
        ));
    }
}
