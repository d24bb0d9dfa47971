//! Versioned JSON envelope for trained models.
//!
//! Tensors are stored as base64 of little-endian `f64` bytes, row-major, so a
//! load reproduces every parameter bit for bit.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::network::{Activation, AutoencoderModel, Layer};
use super::normalizer::Normalizer;

pub const MODEL_FORMAT: &str = "iotguard-model";
pub const MODEL_VERSION: u32 = 1;

fn encode_f64s(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    B64.encode(bytes)
}

fn decode_f64s(text: &str, expected: usize, what: &str) -> Result<Vec<f64>> {
    let bytes = B64.decode(text).map_err(|e| Error::Corrupt(format!("{what}: {e}")))?;
    if bytes.len() != expected * 8 {
        return Err(Error::Corrupt(format!(
            "{what}: expected {expected} values, found {} bytes",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NormalizerEnvelope {
    kind: String,
    min: String,
    max: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LayerEnvelope {
    weights: String,
    biases: String,
}

/// On-disk form of a model plus its input scaling.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelEnvelope {
    format: String,
    version: u32,
    dims: Vec<usize>,
    activations: Vec<Activation>,
    rng_seed: u64,
    normalizer: NormalizerEnvelope,
    layers: Vec<LayerEnvelope>,
}

impl ModelEnvelope {
    pub fn new(model: &AutoencoderModel, normalizer: &Normalizer) -> Self {
        ModelEnvelope {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            dims: model.dims(),
            activations: model.layers().iter().map(|l| l.activation).collect(),
            rng_seed: model.rng_seed(),
            normalizer: NormalizerEnvelope {
                kind: "minmax-clip".into(),
                min: encode_f64s(normalizer.min()),
                max: encode_f64s(normalizer.max()),
            },
            layers: model
                .layers()
                .iter()
                .map(|l| LayerEnvelope {
                    weights: encode_f64s(&l.weights),
                    biases: encode_f64s(&l.biases),
                })
                .collect(),
        }
    }

    pub fn into_parts(self) -> Result<(AutoencoderModel, Normalizer)> {
        if self.format != MODEL_FORMAT {
            return Err(Error::Corrupt(format!("not a model file (format {:?})", self.format)));
        }
        if self.version != MODEL_VERSION {
            return Err(Error::VersionMismatch {
                expected: format!("model v{MODEL_VERSION}"),
                found: format!("model v{}", self.version),
            });
        }
        if self.dims.len() < 2
            || self.layers.len() != self.dims.len() - 1
            || self.activations.len() != self.layers.len()
        {
            return Err(Error::Corrupt("layer count does not match dims".into()));
        }
        if self.normalizer.kind != "minmax-clip" {
            return Err(Error::Corrupt(format!(
                "unknown normalizer kind {:?}",
                self.normalizer.kind
            )));
        }
        let input = self.dims[0];
        let normalizer = Normalizer::from_bounds(
            decode_f64s(&self.normalizer.min, input, "normalizer min")?,
            decode_f64s(&self.normalizer.max, input, "normalizer max")?,
        )
        .map_err(|e| Error::Corrupt(e.to_string()))?;
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let (inputs, outputs) = (self.dims[i], self.dims[i + 1]);
                Ok(Layer {
                    inputs,
                    outputs,
                    weights: decode_f64s(&l.weights, inputs * outputs, "weights")?,
                    biases: decode_f64s(&l.biases, outputs, "biases")?,
                    activation: self.activations[i],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let model = AutoencoderModel::from_layers(layers, self.rng_seed).map_err(|e| Error::Corrupt(e.to_string()))?;
        Ok((model, normalizer))
    }
}

pub fn save_model(model: &AutoencoderModel, normalizer: &Normalizer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_vec(&ModelEnvelope::new(model, normalizer)).map_err(|e| Error::Corrupt(e.to_string()))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(AutoencoderModel, Normalizer)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let env: ModelEnvelope =
        serde_json::from_slice(&bytes).map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))?;
    env.into_parts()
}
