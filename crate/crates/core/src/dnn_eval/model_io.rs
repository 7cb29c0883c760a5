//! Flat binary model and dataset files.
//!
//! Both files share one layout:
//!
//! | bytes          | content                                  |
//! |----------------|------------------------------------------|
//! | 8              | magic (`ORMULMDL` or `ORMULDST`)         |
//! | 4              | header length `L`, u32 little-endian     |
//! | `L`            | UTF-8 JSON header                        |
//! | rest           | float32 payload, little-endian           |
//!
//! Model header: `{"version":1,"dtype":"float32","seed":..,"input_shape":[..],"layers":[..]}`
//! where each layer is `{"kind":"conv2d","cout":..,"cin":..,"kh":..,"kw":..,"stride":..,"pad":..}`,
//! `{"kind":"dense","out":..,"in":..}`, or `{"kind":"relu"|"maxpool2"|"flatten"}`.
//! The payload holds each weighted layer's weights then biases, in layer order.
//!
//! Dataset header: `{"version":1,"dtype":"float32","shape":[..],"count":..}`,
//! payload is `count` samples back to back.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Layer, TinyModel};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"ORMULMDL";
pub const DATASET_MAGIC: &[u8; 8] = b"ORMULDST";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum LayerHeader {
    Conv2d {
        cout: usize,
        cin: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        pad: usize,
    },
    Dense {
        out: usize,
        #[serde(rename = "in")]
        inp: usize,
    },
    Relu,
    Maxpool2,
    Flatten,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelHeader {
    version: u32,
    dtype: String,
    seed: Option<u64>,
    input_shape: Vec<usize>,
    layers: Vec<LayerHeader>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetHeader {
    version: u32,
    dtype: String,
    shape: Vec<usize>,
    count: usize,
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedModel(msg.into())
}

fn frame(magic: &[u8; 8], header: &impl Serialize, payload: impl Iterator<Item = u32>) -> Vec<u8> {
    let json = serde_json::to_vec(header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + json.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for w in payload {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

fn unframe<'a, H: for<'de> Deserialize<'de>>(magic: &[u8; 8], bytes: &'a [u8]) -> Result<(H, Vec<u32>)> {
    if bytes.len() < 12 || &bytes[..8] != magic {
        return Err(malformed(format!(
            "missing `{}` magic",
            String::from_utf8_lossy(magic)
        )));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() < len {
        return Err(malformed(format!("header claims {len} bytes, file has {}", body.len())));
    }
    let header: H = serde_json::from_slice(&body[..len]).map_err(|e| malformed(format!("header: {e}")))?;
    let payload = &body[len..];
    if !payload.len().is_multiple_of(4) {
        return Err(malformed("payload length is not a multiple of 4"));
    }
    let words = payload
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, words))
}

fn count(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| malformed("declared layer size overflows"))
}

fn check_dtype(version: u32, dtype: &str) -> Result<()> {
    if version != VERSION {
        return Err(malformed(format!("unsupported version {version}")));
    }
    if dtype != "float32" {
        return Err(malformed(format!("unsupported dtype `{dtype}`")));
    }
    Ok(())
}

pub fn model_to_bytes(model: &TinyModel) -> Vec<u8> {
    let mut payload = Vec::new();
    let layers = model
        .layers
        .iter()
        .map(|l| match l {
            Layer::Conv2d {
                cout,
                cin,
                kh,
                kw,
                stride,
                pad,
                weights,
                bias,
            } => {
                payload.extend_from_slice(weights);
                payload.extend_from_slice(bias);
                LayerHeader::Conv2d {
                    cout: *cout,
                    cin: *cin,
                    kh: *kh,
                    kw: *kw,
                    stride: *stride,
                    pad: *pad,
                }
            }
            Layer::Dense {
                out,
                inp,
                weights,
                bias,
            } => {
                payload.extend_from_slice(weights);
                payload.extend_from_slice(bias);
                LayerHeader::Dense { out: *out, inp: *inp }
            }
            Layer::Relu => LayerHeader::Relu,
            Layer::MaxPool2 => LayerHeader::Maxpool2,
            Layer::Flatten => LayerHeader::Flatten,
        })
        .collect();
    let header = ModelHeader {
        version: VERSION,
        dtype: "float32".into(),
        seed: model.seed,
        input_shape: model.input_shape.clone(),
        layers,
    };
    frame(MODEL_MAGIC, &header, payload.into_iter())
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<TinyModel> {
    let (header, words): (ModelHeader, Vec<u32>) = unframe(MODEL_MAGIC, bytes)?;
    check_dtype(header.version, &header.dtype)?;
    let mut rest = words.as_slice();
    let mut take = |n: usize, what: &str| -> Result<Vec<u32>> {
        if rest.len() < n {
            return Err(malformed(format!("payload too short for {what}")));
        }
        let (head, tail) = rest.split_at(n);
        rest = tail;
        Ok(head.to_vec())
    };
    let mut layers = Vec::with_capacity(header.layers.len());
    for (i, lh) in header.layers.into_iter().enumerate() {
        let layer = match lh {
            LayerHeader::Conv2d {
                cout,
                cin,
                kh,
                kw,
                stride,
                pad,
            } => Layer::Conv2d {
                cout,
                cin,
                kh,
                kw,
                stride,
                pad,
                weights: take(count(&[cout, cin, kh, kw])?, &format!("layer {i} weights"))?,
                bias: take(cout, &format!("layer {i} bias"))?,
            },
            LayerHeader::Dense { out, inp } => Layer::Dense {
                out,
                inp,
                weights: take(count(&[out, inp])?, &format!("layer {i} weights"))?,
                bias: take(out, &format!("layer {i} bias"))?,
            },
            LayerHeader::Relu => Layer::Relu,
            LayerHeader::Maxpool2 => Layer::MaxPool2,
            LayerHeader::Flatten => Layer::Flatten,
        };
        layers.push(layer);
    }
    if !rest.is_empty() {
        return Err(malformed(format!("{} trailing payload words", rest.len())));
    }
    let model = TinyModel {
        seed: header.seed,
        input_shape: header.input_shape,
        layers,
    };
    model
        .shapes()
        .map_err(|e| malformed(format!("layer shapes do not chain: {e}")))?;
    Ok(model)
}

pub fn dataset_to_bytes(data: &Dataset) -> Vec<u8> {
    let header = DatasetHeader {
        version: VERSION,
        dtype: "float32".into(),
        shape: data.shape.clone(),
        count: data.samples.len(),
    };
    frame(
        DATASET_MAGIC,
        &header,
        data.samples.iter().flatten().map(|x| x.to_bits()),
    )
}

pub fn dataset_from_bytes(bytes: &[u8]) -> Result<Dataset> {
    let (header, words): (DatasetHeader, Vec<u32>) = unframe(DATASET_MAGIC, bytes)?;
    check_dtype(header.version, &header.dtype)?;
    let len = count(&header.shape)?;
    if Some(words.len()) != len.checked_mul(header.count) {
        return Err(malformed(format!(
            "expected {} samples of {len} values, found {} values",
            header.count,
            words.len()
        )));
    }
    let samples = if len == 0 {
        vec![Vec::new(); header.count]
    } else {
        words
            .chunks_exact(len)
            .map(|c| c.iter().map(|w| f32::from_bits(*w)).collect())
            .collect()
    };
    Ok(Dataset {
        shape: header.shape,
        samples,
    })
}

pub fn save_model(model: &TinyModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_bytes(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TinyModel> {
    model_from_bytes(&std::fs::read(path)?)
}

pub fn save_dataset(data: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, dataset_to_bytes(data))?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    dataset_from_bytes(&std::fs::read(path)?)
}
