//! A small convolutional classifier with hand-written backpropagation.
//!
//! Layout: `blocks.len()` blocks of 3x3 convolution (zero padding 1) + ReLU,
//! then either global average pooling or a flatten of the last feature map,
//! then a fully connected head. All parameters live in one flat vector so the
//! optimiser can treat them uniformly.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const KERNEL: usize = 3;
pub const PAD: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub out_channels: usize,
    pub stride: usize,
}

/// How the last feature map reaches the fully connected head.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Per-channel spatial mean.
    GlobalAverage,
    /// Every feature map value feeds the head directly.
    #[default]
    Flatten,
}

/// Network shape plus the fixed input normalisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    /// Input images are `input_size x input_size`, single channel.
    pub input_size: usize,
    pub blocks: Vec<ConvBlock>,
    #[serde(default)]
    pub head: Head,
    pub classes: usize,
    /// Inputs are mapped through `(x - input_shift) / input_scale`.
    pub input_shift: f64,
    pub input_scale: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            input_size: 64,
            blocks: vec![
                ConvBlock { out_channels: 16, stride: 2 },
                ConvBlock { out_channels: 32, stride: 2 },
                ConvBlock { out_channels: 64, stride: 2 },
                ConvBlock { out_channels: 64, stride: 2 },
            ],
            head: Head::Flatten,
            classes: 2,
            input_shift: 0.1,
            input_scale: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ConvLayout {
    in_channels: usize,
    out_channels: usize,
    in_size: usize,
    out_size: usize,
    stride: usize,
    weight: usize,
    bias: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeadLayout {
    inputs: usize,
    outputs: usize,
    weight: usize,
    bias: usize,
}

fn out_size(input: usize, stride: usize) -> usize {
    (input + 2 * PAD - KERNEL) / stride + 1
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() || self.input_size == 0 || self.classes < 2 {
            return Err(Error::Config("architecture needs at least one block, an input and two classes".into()));
        }
        if !(self.input_scale > 0.0 && self.input_scale.is_finite() && self.input_shift.is_finite()) {
            return Err(Error::Config("input normalisation must be finite with positive scale".into()));
        }
        let mut size = self.input_size;
        for b in &self.blocks {
            if b.out_channels == 0 || b.stride == 0 {
                return Err(Error::Config("conv blocks need positive channels and stride".into()));
            }
            size = out_size(size, b.stride);
            if size == 0 {
                return Err(Error::Config("feature map collapsed to zero size".into()));
            }
        }
        Ok(())
    }

    fn layout(&self) -> (Vec<ConvLayout>, HeadLayout, usize) {
        let mut convs = Vec::with_capacity(self.blocks.len());
        let mut offset = 0;
        let mut channels = 1;
        let mut size = self.input_size;
        for b in &self.blocks {
            let o = out_size(size, b.stride);
            let weight = offset;
            offset += b.out_channels * channels * KERNEL * KERNEL;
            let bias = offset;
            offset += b.out_channels;
            convs.push(ConvLayout {
                in_channels: channels,
                out_channels: b.out_channels,
                in_size: size,
                out_size: o,
                stride: b.stride,
                weight,
                bias,
            });
            channels = b.out_channels;
            size = o;
        }
        let inputs = match self.head {
            Head::GlobalAverage => channels,
            Head::Flatten => channels * size * size,
        };
        let weight = offset;
        offset += self.classes * inputs;
        let bias = offset;
        offset += self.classes;
        (convs, HeadLayout { inputs, outputs: self.classes, weight, bias }, offset)
    }

    pub fn input_len(&self) -> usize {
        self.input_size * self.input_size
    }
}

/// Network parameters and their layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: ArchConfig,
    convs: Vec<ConvLayout>,
    head: HeadLayout,
    pub params: Vec<f64>,
}

/// Intermediate values kept for the backward pass.
pub struct Activations {
    input: Vec<f64>,
    /// Post-ReLU output of every conv block.
    maps: Vec<Vec<f64>>,
    /// Head input; empty for `Head::Flatten`, which reads the last map.
    pooled: Vec<f64>,
    pub logits: Vec<f64>,
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| libm::exp(z - m)).collect();
    let s: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / s).collect()
}

/// Cross-entropy of `logits` against class `target` and its gradient.
pub fn cross_entropy(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let mut p = softmax(logits);
    let pt = p[target];
    let loss = if pt.is_nan() { f64::NAN } else { -libm::log(pt.max(f64::MIN_POSITIVE)) };
    p[target] -= 1.0;
    (loss, p)
}

impl Network {
    /// Parameters drawn with fan-in scaled normal (Kaiming) initialisation;
    /// biases start at zero.
    pub fn new<R: Rng + ?Sized>(arch: ArchConfig, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let (convs, head, total) = arch.layout();
        let mut params = vec![0.0; total];
        for c in &convs {
            let fan_in = (c.in_channels * KERNEL * KERNEL) as f64;
            let std = libm::sqrt(2.0 / fan_in);
            for w in &mut params[c.weight..c.bias] {
                let z: f64 = StandardNormal.sample(rng);
                *w = std * z;
            }
        }
        let std = libm::sqrt(2.0 / head.inputs as f64);
        for w in &mut params[head.weight..head.bias] {
            let z: f64 = StandardNormal.sample(rng);
            *w = std * z;
        }
        Ok(Self { arch, convs, head, params })
    }

    pub fn from_params(arch: ArchConfig, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        let (convs, head, total) = arch.layout();
        if params.len() != total {
            return Err(Error::Shape { expected: total, actual: params.len() });
        }
        Ok(Self { arch, convs, head, params })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn forward(&self, image: &[f64]) -> Result<Activations> {
        let expected = self.arch.input_len();
        if image.len() != expected {
            return Err(Error::Shape { expected, actual: image.len() });
        }
        let input: Vec<f64> =
            image.iter().map(|&x| (x - self.arch.input_shift) / self.arch.input_scale).collect();
        let mut maps: Vec<Vec<f64>> = Vec::with_capacity(self.convs.len());
        for c in &self.convs {
            let src = maps.last().unwrap_or(&input);
            let mut out = conv_forward(c, &self.params, src);
            for v in &mut out {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            maps.push(out);
        }
        let last = self.convs.last().expect("validated");
        let plane = last.out_size * last.out_size;
        let feat = maps.last().expect("validated");
        let pooled: Vec<f64> = match self.arch.head {
            Head::GlobalAverage => (0..last.out_channels)
                .map(|ch| feat[ch * plane..(ch + 1) * plane].iter().sum::<f64>() / plane as f64)
                .collect(),
            Head::Flatten => Vec::new(),
        };
        let features = if pooled.is_empty() { feat } else { &pooled };
        let h = &self.head;
        let logits = (0..h.outputs)
            .map(|o| {
                let row = &self.params[h.weight + o * h.inputs..h.weight + (o + 1) * h.inputs];
                self.params[h.bias + o] + row.iter().zip(features).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect();
        Ok(Activations { input, maps, pooled, logits })
    }

    pub fn logits(&self, image: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(image)?.logits)
    }

    /// Accumulates the gradient of the loss into `grad` given `dlogits`.
    pub fn backward(&self, acts: &Activations, dlogits: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let h = &self.head;
        let features = if acts.pooled.is_empty() { acts.maps.last().expect("validated") } else { &acts.pooled };
        let mut dfeat = vec![0.0; h.inputs];
        for o in 0..h.outputs {
            let g = dlogits[o];
            grad[h.bias + o] += g;
            let row = &self.params[h.weight + o * h.inputs..h.weight + (o + 1) * h.inputs];
            let grow = &mut grad[h.weight + o * h.inputs..h.weight + (o + 1) * h.inputs];
            for i in 0..h.inputs {
                grow[i] += g * features[i];
                dfeat[i] += g * row[i];
            }
        }
        let last = self.convs.last().expect("validated");
        let plane = last.out_size * last.out_size;
        let mut dmap = match self.arch.head {
            Head::Flatten => dfeat,
            Head::GlobalAverage => {
                let mut d = vec![0.0; last.out_channels * plane];
                for ch in 0..last.out_channels {
                    let g = dfeat[ch] / plane as f64;
                    d[ch * plane..(ch + 1) * plane].iter_mut().for_each(|v| *v = g);
                }
                d
            }
        };
        for (li, c) in self.convs.iter().enumerate().rev() {
            // ReLU mask
            for (d, &a) in dmap.iter_mut().zip(&acts.maps[li]) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
            let src = if li == 0 { &acts.input } else { &acts.maps[li - 1] };
            let need_input_grad = li > 0;
            let dsrc = conv_backward(c, &self.params, src, &dmap, grad, need_input_grad);
            dmap = dsrc;
        }
    }

    /// Loss and gradient for a single labelled image, accumulated into `grad`.
    pub fn loss_and_grad(&self, image: &[f64], target: usize, grad: &mut [f64]) -> Result<(f64, bool)> {
        let acts = self.forward(image)?;
        let (loss, dlogits) = cross_entropy(&acts.logits, target);
        self.backward(&acts, &dlogits, grad);
        Ok((loss, argmax(&acts.logits) == target))
    }
}

/// Largest relative error between the analytic gradient of the summed
/// cross-entropy over `samples` and central differences with step `h`.
/// Coordinates where both gradients are below 1e-4 are skipped.
pub fn gradient_check(net: &mut Network, samples: &[(Vec<f64>, usize)], h: f64) -> Result<f64> {
    let mut grad = vec![0.0; net.param_count()];
    for (x, t) in samples {
        net.loss_and_grad(x, *t, &mut grad)?;
    }
    let total = |net: &Network| -> Result<f64> {
        let mut l = 0.0;
        for (x, t) in samples {
            l += cross_entropy(&net.logits(x)?, *t).0;
        }
        Ok(l)
    };
    let mut worst = 0.0f64;
    for (p, &analytic) in grad.iter().enumerate() {
        let orig = net.params[p];
        net.params[p] = orig + h;
        let up = total(net)?;
        net.params[p] = orig - h;
        let down = total(net)?;
        net.params[p] = orig;
        let numeric = (up - down) / (2.0 * h);
        let scale = analytic.abs().max(numeric.abs());
        if scale > 1e-4 {
            worst = worst.max((analytic - numeric).abs() / scale);
        }
    }
    Ok(worst)
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Output positions `o` for which `o * stride + k - PAD` lies in `[0, n)`.
#[inline]
fn valid_range(k: usize, stride: usize, n_in: usize, n_out: usize) -> (usize, usize) {
    let lo = if k >= PAD { 0 } else { (PAD - k).div_ceil(stride) };
    // o * stride + k - PAD <= n_in - 1
    let hi_incl = (n_in - 1 + PAD).checked_sub(k).map(|v| v / stride);
    let hi = match hi_incl {
        Some(v) => (v + 1).min(n_out),
        None => 0,
    };
    (lo, hi.max(lo))
}

fn conv_forward(c: &ConvLayout, params: &[f64], src: &[f64]) -> Vec<f64> {
    let (n_in, n_out, s) = (c.in_size, c.out_size, c.stride);
    let plane_out = n_out * n_out;
    let plane_in = n_in * n_in;
    let mut out = vec![0.0; c.out_channels * plane_out];
    for oc in 0..c.out_channels {
        let dst = &mut out[oc * plane_out..(oc + 1) * plane_out];
        let b = params[c.bias + oc];
        dst.iter_mut().for_each(|v| *v = b);
        for ic in 0..c.in_channels {
            let inp = &src[ic * plane_in..(ic + 1) * plane_in];
            let wbase = c.weight + (oc * c.in_channels + ic) * KERNEL * KERNEL;
            for ky in 0..KERNEL {
                let (oy0, oy1) = valid_range(ky, s, n_in, n_out);
                for kx in 0..KERNEL {
                    let w = params[wbase + ky * KERNEL + kx];
                    let (ox0, ox1) = valid_range(kx, s, n_in, n_out);
                    for oy in oy0..oy1 {
                        let iy = oy * s + ky - PAD;
                        let row_in = &inp[iy * n_in..(iy + 1) * n_in];
                        let row_out = &mut dst[oy * n_out..(oy + 1) * n_out];
                        let taps = row_in[ox0 * s + kx - PAD..].iter().step_by(s);
                        for (o, &x) in row_out[ox0..ox1].iter_mut().zip(taps) {
                            *o += w * x;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight/bias gradients and returns the input gradient (empty
/// when not requested).
fn conv_backward(
    c: &ConvLayout,
    params: &[f64],
    src: &[f64],
    dout: &[f64],
    grad: &mut [f64],
    need_input_grad: bool,
) -> Vec<f64> {
    let (n_in, n_out, s) = (c.in_size, c.out_size, c.stride);
    let plane_out = n_out * n_out;
    let plane_in = n_in * n_in;
    let mut dsrc = if need_input_grad { vec![0.0; c.in_channels * plane_in] } else { Vec::new() };
    for oc in 0..c.out_channels {
        let d = &dout[oc * plane_out..(oc + 1) * plane_out];
        grad[c.bias + oc] += d.iter().sum::<f64>();
        for ic in 0..c.in_channels {
            let inp = &src[ic * plane_in..(ic + 1) * plane_in];
            let wbase = c.weight + (oc * c.in_channels + ic) * KERNEL * KERNEL;
            for ky in 0..KERNEL {
                let (oy0, oy1) = valid_range(ky, s, n_in, n_out);
                for kx in 0..KERNEL {
                    let (ox0, ox1) = valid_range(kx, s, n_in, n_out);
                    let w = params[wbase + ky * KERNEL + kx];
                    let mut gw = 0.0;
                    for oy in oy0..oy1 {
                        let iy = oy * s + ky - PAD;
                        let row_in = &inp[iy * n_in..(iy + 1) * n_in];
                        let row_d = &d[oy * n_out..(oy + 1) * n_out];
                        let first = ox0 * s + kx - PAD;
                        let row_d = &row_d[ox0..ox1];
                        gw = row_d.iter().zip(row_in[first..].iter().step_by(s)).fold(gw, |g, (&dd, &x)| g + dd * x);
                        if need_input_grad {
                            let row_ds = &mut dsrc[ic * plane_in + iy * n_in..ic * plane_in + (iy + 1) * n_in];
                            for (ds, &dd) in row_ds[first..].iter_mut().step_by(s).zip(row_d) {
                                *ds += w * dd;
                            }
                        }
                    }
                    grad[wbase + ky * KERNEL + kx] += gw;
                }
            }
        }
    }
    dsrc
}
