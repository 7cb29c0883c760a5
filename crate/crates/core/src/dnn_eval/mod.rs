//! Small CNN inference harness comparing approximate multipliers against an
//! exact `float32` reference.
//!
//! Every scalar multiplication inside dense and convolution layers goes
//! through [`fp_mul`]; convolutions are lowered with im2col. Accumulation is
//! plain `f32` addition in a fixed order, and elementwise layers are exact.

mod model_io;

pub use model_io::{load_dataset, load_model, save_dataset, save_model, DATASET_MAGIC, MODEL_MAGIC};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fp_mul::{fp_mul, FpFormat};
use crate::pp_core::MulConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// Weights `[cout][cin][kh][kw]`, one bias per output channel; input `[cin, h, w]`.
    Conv2d {
        cout: usize,
        cin: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        pad: usize,
        weights: Vec<u32>,
        bias: Vec<u32>,
    },
    /// Weights `[out][in]`.
    Dense {
        out: usize,
        inp: usize,
        weights: Vec<u32>,
        bias: Vec<u32>,
    },
    Relu,
    /// 2x2 max pooling with stride 2.
    MaxPool2,
    Flatten,
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv2d { .. } => "conv2d",
            Layer::Dense { .. } => "dense",
            Layer::Relu => "relu",
            Layer::MaxPool2 => "maxpool2",
            Layer::Flatten => "flatten",
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mismatch = |msg: String| Err(Error::ShapeMismatch(format!("{}: {msg}", self.name())));
        match self {
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
                if weights.len() != cout * cin * kh * kw || bias.len() != *cout {
                    return mismatch("parameter count does not match declared shape".into());
                }
                if *stride == 0 {
                    return mismatch("stride must be at least 1".into());
                }
                let [c, h, w] = input else {
                    return mismatch(format!("expected [c, h, w] input, got {input:?}"));
                };
                if c != cin || h + 2 * pad < *kh || w + 2 * pad < *kw {
                    return mismatch(format!("input {input:?} incompatible with {cin}x{kh}x{kw} kernel"));
                }
                Ok(vec![
                    *cout,
                    (h + 2 * pad - kh) / stride + 1,
                    (w + 2 * pad - kw) / stride + 1,
                ])
            }
            Layer::Dense {
                out,
                inp,
                weights,
                bias,
            } => {
                if weights.len() != out * inp || bias.len() != *out {
                    return mismatch("parameter count does not match declared shape".into());
                }
                if input != [*inp] {
                    return mismatch(format!("expected [{inp}] input, got {input:?}"));
                }
                Ok(vec![*out])
            }
            Layer::Relu => Ok(input.to_vec()),
            Layer::MaxPool2 => match input {
                [c, h, w] if *h >= 2 && *w >= 2 => Ok(vec![*c, h / 2, w / 2]),
                _ => mismatch(format!("expected [c, h>=2, w>=2] input, got {input:?}")),
            },
            Layer::Flatten => Ok(vec![input.iter().product()]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyModel {
    pub seed: Option<u64>,
    pub input_shape: Vec<usize>,
    pub layers: Vec<Layer>,
}

fn he_uniform(rng: &mut ChaCha8Rng, fan_in: usize, count: usize) -> Vec<u32> {
    let bound = (6.0 / fan_in as f64).sqrt() as f32;
    (0..count)
        .map(|_| rng.random_range(-bound..bound).to_bits())
        .collect()
}

fn small_bias(rng: &mut ChaCha8Rng, count: usize) -> Vec<u32> {
    (0..count)
        .map(|_| rng.random_range(-0.05f32..0.05).to_bits())
        .collect()
}

impl TinyModel {
    /// Two 3x3 conv blocks and a dense classifier over `[3, 8, 8]` inputs, 10 classes.
    pub fn seeded_cnn(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let conv = |rng: &mut ChaCha8Rng, cin: usize, cout: usize| Layer::Conv2d {
            cout,
            cin,
            kh: 3,
            kw: 3,
            stride: 1,
            pad: 1,
            weights: he_uniform(rng, cin * 9, cout * cin * 9),
            bias: small_bias(rng, cout),
        };
        let c1 = conv(&mut rng, 3, 8);
        let c2 = conv(&mut rng, 8, 16);
        let dense = Layer::Dense {
            out: 10,
            inp: 64,
            weights: he_uniform(&mut rng, 64, 640),
            bias: small_bias(&mut rng, 10),
        };
        TinyModel {
            seed: Some(seed),
            input_shape: vec![3, 8, 8],
            layers: vec![
                c1,
                Layer::Relu,
                Layer::MaxPool2,
                c2,
                Layer::Relu,
                Layer::MaxPool2,
                Layer::Flatten,
                dense,
            ],
        }
    }

    /// Shapes after each layer; fails if any layer does not chain.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shape = self.input_shape.clone();
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            shape = layer.output_shape(&shape)?;
            out.push(shape.clone());
        }
        Ok(out)
    }
}

/// How scalar products are formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Arith {
    /// Native `f32` multiplication.
    Exact,
    /// Operands truncated into `fmt`, multiplied by [`fp_mul`].
    Approx { config: MulConfig, fmt: FpFormat },
}

impl Arith {
    pub fn label(&self) -> String {
        match self {
            Arith::Exact => "exact_float32".into(),
            Arith::Approx { config, fmt } => format!("{}_{}", config.label(), fmt.name),
        }
    }

    fn quantize(&self, xs: &[f32]) -> Vec<u32> {
        match self {
            Arith::Exact => xs.iter().map(|x| x.to_bits()).collect(),
            Arith::Approx { fmt, .. } => xs.iter().map(|&x| fmt.from_f32(x)).collect(),
        }
    }

    fn quantize_raw(&self, raw: &[u32]) -> Vec<u32> {
        match self {
            Arith::Exact => raw.to_vec(),
            Arith::Approx { fmt, .. } => raw.iter().map(|&w| fmt.from_f32(f32::from_bits(w))).collect(),
        }
    }

    /// Product of a quantized weight (stored multiplicand) and input.
    fn mul(&self, w: u32, x: u32) -> Result<f32> {
        match self {
            Arith::Exact => Ok(f32::from_bits(w) * f32::from_bits(x)),
            Arith::Approx { config, fmt } => Ok(fmt.to_f32(fp_mul(w, x, fmt, config)?)),
        }
    }
}

fn dot(arith: &Arith, weights: &[u32], inputs: &[u32], bias: u32) -> Result<f32> {
    let mut acc = 0.0f32;
    for (&w, &x) in weights.iter().zip(inputs) {
        acc += arith.mul(w, x)?;
    }
    Ok(acc + f32::from_bits(bias))
}

/// Runs one layer. Weighted layers multiply through `arith`.
pub fn run_layer(layer: &Layer, input: &Tensor, arith: &Arith) -> Result<Tensor> {
    let out_shape = layer.output_shape(&input.shape)?;
    let data = match layer {
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
            let (h, w) = (input.shape[1], input.shape[2]);
            let (oh, ow) = (out_shape[1], out_shape[2]);
            let k = cin * kh * kw;
            let wq = arith.quantize_raw(weights);
            let xq = arith.quantize(&input.data);
            let zero = arith.quantize(&[0.0])[0];
            let mut out = vec![0.0f32; cout * oh * ow];
            let mut patch = vec![zero; k];
            for oy in 0..oh {
                for ox in 0..ow {
                    // im2col column for this output position, (c, ky, kx) order
                    for c in 0..*cin {
                        for ky in 0..*kh {
                            for kx in 0..*kw {
                                let iy = (oy * stride + ky) as isize - *pad as isize;
                                let ix = (ox * stride + kx) as isize - *pad as isize;
                                let inside = iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w;
                                patch[(c * kh + ky) * kw + kx] = if inside {
                                    xq[(c * h + iy as usize) * w + ix as usize]
                                } else {
                                    zero
                                };
                            }
                        }
                    }
                    for co in 0..*cout {
                        out[(co * oh + oy) * ow + ox] =
                            dot(arith, &wq[co * k..(co + 1) * k], &patch, bias[co])?;
                    }
                }
            }
            out
        }
        Layer::Dense {
            out,
            inp,
            weights,
            bias,
        } => {
            let wq = arith.quantize_raw(weights);
            let xq = arith.quantize(&input.data);
            (0..*out)
                .map(|o| dot(arith, &wq[o * inp..(o + 1) * inp], &xq, bias[o]))
                .collect::<Result<Vec<_>>>()?
        }
        Layer::Relu => input.data.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect(),
        Layer::MaxPool2 => {
            let (c, h, w) = (input.shape[0], input.shape[1], input.shape[2]);
            let (oh, ow) = (h / 2, w / 2);
            let mut out = Vec::with_capacity(c * oh * ow);
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let at = |dy: usize, dx: usize| input.data[(ch * h + 2 * oy + dy) * w + 2 * ox + dx];
                        out.push(at(0, 0).max(at(0, 1)).max(at(1, 0)).max(at(1, 1)));
                    }
                }
            }
            out
        }
        Layer::Flatten => input.data.clone(),
    };
    Tensor::new(out_shape, data)
}

/// Activations after every layer.
pub fn forward(model: &TinyModel, input: &Tensor, arith: &Arith) -> Result<Vec<Tensor>> {
    let mut acts: Vec<Tensor> = Vec::with_capacity(model.layers.len());
    for layer in &model.layers {
        let x = acts.last().unwrap_or(input);
        let y = run_layer(layer, x, arith)?;
        acts.push(y);
    }
    Ok(acts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub shape: Vec<usize>,
    pub samples: Vec<Vec<f32>>,
}

impl Dataset {
    /// Uniform `[0, 1)` inputs.
    pub fn synthetic(shape: &[usize], count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len: usize = shape.iter().product();
        let samples = (0..count)
            .map(|_| (0..len).map(|_| rng.random::<f32>()).collect())
            .collect();
        Dataset {
            shape: shape.to_vec(),
            samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerError {
    pub index: usize,
    pub layer: &'static str,
    /// `sum |approx - ref| / sum |ref|` over every element of every sample.
    pub mean_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub config: String,
    pub samples: usize,
    pub per_layer: Vec<LayerError>,
    pub logit_max_abs_error: f64,
    pub top1_agreement: f64,
    /// Predicted class per sample.
    #[serde(skip)]
    pub predictions: Vec<usize>,
}

fn argmax(xs: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Runs every configuration over the dataset and compares it with the
/// exact `float32` forward pass.
pub fn evaluate(model: &TinyModel, dataset: &Dataset, configs: &[Arith]) -> Result<Vec<EvalResult>> {
    if dataset.samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if dataset.shape != model.input_shape {
        return Err(Error::ShapeMismatch(format!(
            "dataset samples are {:?}, model expects {:?}",
            dataset.shape, model.input_shape
        )));
    }
    model.shapes()?;
    let nl = model.layers.len();

    struct Acc {
        abs_diff: Vec<f64>,
        logit_max: f64,
        agree: usize,
        predictions: Vec<usize>,
    }
    let mut ref_mag = vec![0.0f64; nl];
    let mut accs: Vec<Acc> = configs
        .iter()
        .map(|_| Acc {
            abs_diff: vec![0.0; nl],
            logit_max: 0.0,
            agree: 0,
            predictions: Vec::with_capacity(dataset.samples.len()),
        })
        .collect();

    for sample in &dataset.samples {
        let x = Tensor::new(dataset.shape.clone(), sample.clone())?;
        let reference = forward(model, &x, &Arith::Exact)?;
        for (i, t) in reference.iter().enumerate() {
            ref_mag[i] += t.data.iter().map(|v| v.abs() as f64).sum::<f64>();
        }
        let ref_logits = &reference[nl - 1].data;
        let ref_class = argmax(ref_logits);

        for (arith, acc) in configs.iter().zip(accs.iter_mut()) {
            let acts = forward(model, &x, arith)?;
            for (i, (a, r)) in acts.iter().zip(&reference).enumerate() {
                acc.abs_diff[i] += a
                    .data
                    .iter()
                    .zip(&r.data)
                    .map(|(p, q)| (*p as f64 - *q as f64).abs())
                    .sum::<f64>();
            }
            let logits = &acts[nl - 1].data;
            for (p, q) in logits.iter().zip(ref_logits) {
                acc.logit_max = acc.logit_max.max((*p as f64 - *q as f64).abs());
            }
            let class = argmax(logits);
            acc.agree += (class == ref_class) as usize;
            acc.predictions.push(class);
        }
    }

    let n = dataset.samples.len();
    Ok(configs
        .iter()
        .zip(accs)
        .map(|(arith, acc)| EvalResult {
            config: arith.label(),
            samples: n,
            per_layer: model
                .layers
                .iter()
                .enumerate()
                .map(|(i, l)| LayerError {
                    index: i,
                    layer: l.name(),
                    mean_relative_error: if ref_mag[i] == 0.0 {
                        0.0
                    } else {
                        acc.abs_diff[i] / ref_mag[i]
                    },
                })
                .collect(),
            logit_max_abs_error: acc.logit_max,
            top1_agreement: acc.agree as f64 / n as f64,
            predictions: acc.predictions,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fp_mul::BFLOAT16;
    use crate::pp_core::Variant;

    fn bf16(v: Variant, tr: bool) -> Arith {
        Arith::Approx {
            config: MulConfig::new(v, 8, true, tr).unwrap(),
            fmt: BFLOAT16,
        }
    }

    fn all_ariths() -> Vec<Arith> {
        let mut v = vec![Arith::Exact];
        for var in Variant::ALL {
            for tr in [false, true] {
                v.push(bf16(var, tr));
            }
        }
        v
    }

    #[test]
    fn one_by_one_conv() {
        let layer = Layer::Conv2d {
            cout: 1,
            cin: 1,
            kh: 1,
            kw: 1,
            stride: 1,
            pad: 0,
            weights: vec![1.5f32.to_bits()],
            bias: vec![0],
        };
        let x = Tensor::new(vec![1, 1, 1], vec![1.5]).unwrap();
        let y = run_layer(&layer, &x, &bf16(Variant::Fla, false)).unwrap();
        assert_eq!(y.data, vec![1.75]);
        let y = run_layer(&layer, &x, &bf16(Variant::Pc2, false)).unwrap();
        assert_eq!(y.data, vec![2.25]);
    }

    #[test]
    fn signed_power_of_two_permutation_is_exact() {
        // y = P x with entries +-2^k
        let entries = [(0usize, 2usize, 2.0f32), (1, 0, -0.5), (2, 1, 4.0)];
        let mut weights = vec![0u32; 9];
        for (o, i, v) in entries {
            weights[o * 3 + i] = v.to_bits();
        }
        let layer = Layer::Dense {
            out: 3,
            inp: 3,
            weights,
            bias: vec![0; 3],
        };
        // inputs representable in bfloat16
        let x = Tensor::new(vec![3], vec![1.796875, -3.25, 0.01171875]).unwrap();
        let expected: Vec<f32> = vec![2.0 * 0.01171875, -0.5 * 1.796875, 4.0 * -3.25];
        for a in all_ariths() {
            let y = run_layer(&layer, &x, &a).unwrap();
            assert_eq!(y.data, expected, "{}", a.label());
        }
    }

    #[test]
    fn zero_input_zero_output() {
        let model = TinyModel::seeded_cnn(3);
        let conv = &model.layers[0];
        let x = Tensor::new(vec![3, 8, 8], vec![0.0; 192]).unwrap();
        let bias_free = match conv {
            Layer::Conv2d { cout, cin, kh, kw, stride, pad, weights, .. } => Layer::Conv2d {
                cout: *cout,
                cin: *cin,
                kh: *kh,
                kw: *kw,
                stride: *stride,
                pad: *pad,
                weights: weights.clone(),
                bias: vec![0; *cout],
            },
            _ => unreachable!(),
        };
        for a in all_ariths() {
            let y = run_layer(&bias_free, &x, &a).unwrap();
            assert!(y.data.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn shapes_chain() {
        let m = TinyModel::seeded_cnn(1);
        let shapes = m.shapes().unwrap();
        assert_eq!(shapes[0], vec![8, 8, 8]);
        assert_eq!(shapes[2], vec![8, 4, 4]);
        assert_eq!(shapes[5], vec![16, 2, 2]);
        assert_eq!(shapes.last().unwrap(), &vec![10]);

        let bad = Tensor::new(vec![3, 4, 4], vec![0.0; 48]).unwrap();
        assert!(run_layer(&m.layers[7], &bad, &Arith::Exact).is_err());
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn exact_config_matches_reference() {
        let m = TinyModel::seeded_cnn(11);
        let data = Dataset::synthetic(&[3, 8, 8], 8, 5);
        let r = evaluate(&m, &data, &[Arith::Exact]).unwrap();
        assert_eq!(r[0].top1_agreement, 1.0);
        assert_eq!(r[0].logit_max_abs_error, 0.0);
        assert!(r[0].per_layer.iter().all(|l| l.mean_relative_error == 0.0));
    }

    #[test]
    fn empty_dataset_rejected() {
        let m = TinyModel::seeded_cnn(1);
        let data = Dataset {
            shape: vec![3, 8, 8],
            samples: vec![],
        };
        assert_eq!(evaluate(&m, &data, &[Arith::Exact]), Err(Error::EmptyDataset));
        let wrong = Dataset::synthetic(&[3, 4, 4], 2, 0);
        assert!(evaluate(&m, &wrong, &[Arith::Exact]).is_err());
    }

    #[test]
    fn conv_matches_naive_loop() {
        // direct 2D convolution as an independent check on the im2col path
        let m = TinyModel::seeded_cnn(2);
        let Layer::Conv2d { cout, cin, kh, kw, pad, weights, bias, .. } = &m.layers[0] else {
            unreachable!()
        };
        let data = Dataset::synthetic(&[3, 8, 8], 1, 9);
        let x = Tensor::new(vec![3, 8, 8], data.samples[0].clone()).unwrap();
        let y = run_layer(&m.layers[0], &x, &Arith::Exact).unwrap();
        for co in 0..*cout {
            for oy in 0..8 {
                for ox in 0..8 {
                    let mut acc = 0.0f32;
                    for c in 0..*cin {
                        for ky in 0..*kh {
                            for kx in 0..*kw {
                                let iy = oy as isize + ky as isize - *pad as isize;
                                let ix = ox as isize + kx as isize - *pad as isize;
                                let v = if (0..8).contains(&iy) && (0..8).contains(&ix) {
                                    x.data[(c * 8 + iy as usize) * 8 + ix as usize]
                                } else {
                                    0.0
                                };
                                let wv = f32::from_bits(weights[((co * cin + c) * kh + ky) * kw + kx]);
                                acc += wv * v;
                            }
                        }
                    }
                    acc += f32::from_bits(bias[co]);
                    assert_eq!(y.data[(co * 8 + oy) * 8 + ox], acc);
                }
            }
        }
    }
}
