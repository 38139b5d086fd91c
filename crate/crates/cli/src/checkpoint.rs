//! Binary checkpoint files.
//!
//! Layout: the 8-byte magic `ADADFQCK`, a little-endian `u32` format
//! version, a little-endian `u64` header length, a JSON header, then every
//! tensor listed in the header as raw little-endian `f64` values in order.
//! The header carries a SHA-256 of the payload.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use adadfq::data::SeededRng;
use adadfq::nn::{Architecture, Layer, Mlp, Mode, Quantization};
use adadfq::quant::{FakeQuantState, QuantSpec, Range};

use crate::config::hex;
use crate::error::CliError;

pub const MAGIC: &[u8; 8] = b"ADADFQCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum CheckpointError {
    #[error("{path}: checkpoint format v{version}: {msg}")]
    Format { path: String, version: u32, msg: String },
    #[error("{path}: unsupported checkpoint format v{found} (this build reads v{FORMAT_VERSION})")]
    Version { path: String, found: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    /// `teacher` or `student`.
    pub kind: String,
    pub seed: u64,
    pub epochs: usize,
    pub config_hash: String,
    pub dataset: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SiteEntry {
    has_range: bool,
    frozen: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct QuantEntry {
    bits: u32,
    sites: Vec<SiteEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    architecture: Architecture,
    tensors: Vec<TensorEntry>,
    quantization: Option<QuantEntry>,
    metadata: Metadata,
    payload_sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: Mlp,
    pub metadata: Metadata,
}

impl Checkpoint {
    pub fn new(net: &Mlp, metadata: Metadata) -> Self {
        let mut net = net.clone();
        net.set_mode(Mode::Eval);
        Checkpoint { net, metadata }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let net = &self.net;
        let mut tensors = Vec::new();
        let mut payload: Vec<f64> = Vec::new();
        for (name, p) in net.param_names().into_iter().zip(net.params()) {
            tensors.push(TensorEntry {
                name,
                shape: p.shape().to_vec(),
            });
            payload.extend_from_slice(p.data());
        }
        for (i, layer) in net.layers().iter().enumerate() {
            if let Layer::BatchNorm(bn) = layer {
                for (kind, values) in [("running_mean", &bn.running_mean), ("running_var", &bn.running_var)] {
                    tensors.push(TensorEntry {
                        name: format!("layers.{i}.{kind}"),
                        shape: vec![values.len()],
                    });
                    payload.extend_from_slice(values);
                }
            }
        }
        let quantization = net.quantization().map(|q| {
            tensors.push(TensorEntry {
                name: "quant.ranges".into(),
                shape: vec![q.sites.len(), 2],
            });
            for s in &q.sites {
                let r = s.range.unwrap_or(Range { min: 0.0, max: 0.0 });
                payload.extend([r.min, r.max]);
            }
            QuantEntry {
                bits: q.spec.bits(),
                sites: q
                    .sites
                    .iter()
                    .map(|s| SiteEntry {
                        has_range: s.range.is_some(),
                        frozen: s.frozen,
                    })
                    .collect(),
            }
        });
        let raw: Vec<u8> = payload.iter().flat_map(|v| v.to_le_bytes()).collect();
        let header = Header {
            architecture: net.architecture().clone(),
            tensors,
            quantization,
            metadata: self.metadata.clone(),
            payload_sha256: hex(&Sha256::digest(&raw)),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(20 + json.len() + raw.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&raw);
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self, CheckpointError> {
        let fail = |msg: String| CheckpointError::Format {
            path: path.display().to_string(),
            version: FORMAT_VERSION,
            msg,
        };
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(fail("missing magic bytes".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version {
                path: path.display().to_string(),
                found: version,
            });
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = &bytes[20..];
        if header_len > body.len() {
            return Err(fail(format!("header length {header_len} exceeds file")));
        }
        let header: Header = serde_json::from_slice(&body[..header_len]).map_err(|e| fail(format!("header: {e}")))?;
        let raw = &body[header_len..];
        if hex(&Sha256::digest(raw)) != header.payload_sha256 {
            return Err(fail("payload checksum mismatch".into()));
        }
        let expected: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
        if raw.len() != expected * 8 {
            return Err(fail(format!(
                "payload holds {} bytes, header describes {}",
                raw.len(),
                expected * 8
            )));
        }
        let mut values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));

        let mut net = Mlp::new(header.architecture.clone(), &mut SeededRng::new(0)).map_err(|e| fail(e.to_string()))?;
        let names = net.param_names();
        let mut entries = header.tensors.iter();
        for (name, p) in names.iter().zip(net.params_mut()) {
            let entry = entries.next().ok_or_else(|| fail(format!("missing tensor {name}")))?;
            if &entry.name != name || entry.shape != p.shape() {
                return Err(fail(format!(
                    "tensor {} {:?} where {name} {:?} was expected",
                    entry.name,
                    entry.shape,
                    p.shape()
                )));
            }
            for slot in p.data_mut() {
                *slot = values.next().expect("length checked");
            }
        }
        for (i, layer) in net.layers_mut().iter_mut().enumerate() {
            if let Layer::BatchNorm(bn) = layer {
                for (kind, dest) in [
                    ("running_mean", &mut bn.running_mean),
                    ("running_var", &mut bn.running_var),
                ] {
                    let name = format!("layers.{i}.{kind}");
                    let entry = entries.next().ok_or_else(|| fail(format!("missing tensor {name}")))?;
                    if entry.name != name || entry.shape != [dest.len()] {
                        return Err(fail(format!("tensor {} where {name} was expected", entry.name)));
                    }
                    for slot in dest.iter_mut() {
                        *slot = values.next().expect("length checked");
                    }
                }
            }
        }
        if let Some(q) = &header.quantization {
            let entry = entries
                .next()
                .ok_or_else(|| fail("missing quantization ranges".into()))?;
            if entry.name != "quant.ranges" || entry.shape != [q.sites.len(), 2] {
                return Err(fail(format!("tensor {} where quant.ranges was expected", entry.name)));
            }
            let spec = QuantSpec::new(q.bits).map_err(|e| fail(e.to_string()))?;
            let sites = q
                .sites
                .iter()
                .map(|s| {
                    let (min, max) = (values.next().unwrap(), values.next().unwrap());
                    FakeQuantState {
                        range: s.has_range.then_some(Range { min, max }),
                        frozen: s.frozen,
                    }
                })
                .collect();
            net.set_quantization(Some(Quantization { spec, sites }))
                .map_err(|e| fail(e.to_string()))?;
        }
        if let Some(extra) = entries.next() {
            return Err(fail(format!("unexpected tensor {}", extra.name)));
        }
        net.set_mode(Mode::Eval);
        net.set_trainable(false);
        Ok(Checkpoint {
            net,
            metadata: header.metadata,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        crate::output::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = crate::audit::read(path)?;
        Ok(Self::from_bytes(&bytes, path)?)
    }
}
