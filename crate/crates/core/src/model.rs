//! Small differentiable predictors with hand-written backward passes.
//!
//! Parameters live in one flat vector so optimizers, checkpoints, and
//! gradient checks treat every architecture the same way.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{pixel_ce_sum, soft_bce, soft_ce, LossValue};
use crate::numerics::Tensor;
use crate::seed;
use crate::soft_labels::SoftLabelMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    /// `z = W·x + b`.
    LinearSoftmax { inputs: usize, outputs: usize },
    /// One tanh hidden layer.
    Mlp {
        inputs: usize,
        hidden: usize,
        outputs: usize,
    },
    /// Three 3×3 convolutions (replicate padding, tanh between), producing
    /// per-pixel class logits at the input resolution.
    TinyFcn {
        in_channels: usize,
        widths: [usize; 2],
        classes: usize,
    },
}

impl Architecture {
    pub fn param_count(&self) -> usize {
        match *self {
            Architecture::LinearSoftmax { inputs, outputs } => outputs * inputs + outputs,
            Architecture::Mlp {
                inputs,
                hidden,
                outputs,
            } => hidden * inputs + hidden + outputs * hidden + outputs,
            Architecture::TinyFcn {
                in_channels,
                widths: [a, b],
                classes,
            } => conv_params(in_channels, a) + conv_params(a, b) + conv_params(b, classes),
        }
    }

    /// Number of logits per sample (dense) or channels per pixel (FCN).
    pub fn outputs(&self) -> usize {
        match *self {
            Architecture::LinearSoftmax { outputs, .. } | Architecture::Mlp { outputs, .. } => outputs,
            Architecture::TinyFcn { classes, .. } => classes,
        }
    }

    pub fn is_dense(&self) -> bool {
        !matches!(self, Architecture::TinyFcn { .. })
    }

    pub fn tag(&self) -> u8 {
        match self {
            Architecture::LinearSoftmax { .. } => 1,
            Architecture::Mlp { .. } => 2,
            Architecture::TinyFcn { .. } => 3,
        }
    }

    pub fn dims(&self) -> Vec<u32> {
        let dims = match *self {
            Architecture::LinearSoftmax { inputs, outputs } => vec![inputs, outputs],
            Architecture::Mlp {
                inputs,
                hidden,
                outputs,
            } => vec![inputs, hidden, outputs],
            Architecture::TinyFcn {
                in_channels,
                widths: [a, b],
                classes,
            } => vec![in_channels, a, b, classes],
        };
        dims.into_iter().map(|d| d as u32).collect()
    }

    pub fn dim_count(tag: u8) -> Option<usize> {
        match tag {
            1 => Some(2),
            2 => Some(3),
            3 => Some(4),
            _ => None,
        }
    }

    pub fn from_tag(tag: u8, dims: &[u32]) -> Result<Self> {
        let d: Vec<usize> = dims.iter().map(|&v| v as usize).collect();
        let arch = match (tag, d.as_slice()) {
            (1, &[inputs, outputs]) => Architecture::LinearSoftmax { inputs, outputs },
            (2, &[inputs, hidden, outputs]) => Architecture::Mlp {
                inputs,
                hidden,
                outputs,
            },
            (3, &[in_channels, a, b, classes]) => Architecture::TinyFcn {
                in_channels,
                widths: [a, b],
                classes,
            },
            _ => return Err(Error::invalid(format!("bad architecture tag {tag} with dims {dims:?}"))),
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims().iter().any(|&d| d == 0) {
            return Err(Error::invalid(format!("architecture has a zero dimension: {self:?}")));
        }
        Ok(())
    }

    /// Fan-in of the layer owning each parameter, in parameter order.
    fn fan_ins(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.param_count());
        let mut dense = |inputs: usize, outputs: usize| {
            out.extend(std::iter::repeat_n(inputs, outputs * inputs + outputs));
        };
        match *self {
            Architecture::LinearSoftmax { inputs, outputs } => dense(inputs, outputs),
            Architecture::Mlp {
                inputs,
                hidden,
                outputs,
            } => {
                dense(inputs, hidden);
                dense(hidden, outputs);
            }
            Architecture::TinyFcn {
                in_channels,
                widths: [a, b],
                classes,
            } => {
                for (cin, cout) in [(in_channels, a), (a, b), (b, classes)] {
                    out.extend(std::iter::repeat_n(cin * 9, conv_params(cin, cout)));
                }
            }
        }
        out
    }
}

fn conv_params(cin: usize, cout: usize) -> usize {
    cout * cin * 9 + cout
}

/// Architecture plus its flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    arch: Architecture,
    params: Vec<f64>,
}

impl Model {
    pub fn new(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.param_count() {
            return Err(Error::shape(format!(
                "{arch:?} needs {} parameters, got {}",
                arch.param_count(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("parameters must be finite"));
        }
        Ok(Model { arch, params })
    }

    pub fn zeros(arch: Architecture) -> Result<Self> {
        Model::new(arch, vec![0.0; arch.param_count()])
    }

    /// Uniform in `[−s, s]` with `s = 1/√fan_in`, biases included.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = seed::rng(seed);
        let params = arch
            .fan_ins()
            .into_iter()
            .map(|fan_in| {
                let s = 1.0 / (fan_in as f64).sqrt();
                rng.random_range(-s..=s)
            })
            .collect();
        Model::new(arch, params)
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn into_params(self) -> Vec<f64> {
        self.params
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        match self.arch {
            Architecture::LinearSoftmax { inputs, .. } | Architecture::Mlp { inputs, .. } => {
                if input.len() != inputs {
                    return Err(Error::shape(format!(
                        "model expects {inputs} input features, got {}",
                        input.len()
                    )));
                }
            }
            Architecture::TinyFcn { in_channels, .. } => match input.shape() {
                &[c, h, w] if c == in_channels && h > 0 && w > 0 => {}
                s => {
                    return Err(Error::shape(format!(
                        "model expects a [{in_channels}, H, W] image, got {s:?}"
                    )))
                }
            },
        }
        Ok(())
    }

    /// Logits: `[K]` for dense models, `[K, H, W]` for the FCN.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let x = input.data();
        match self.arch {
            Architecture::LinearSoftmax { inputs, outputs } => {
                Tensor::new(vec![outputs], dense_forward(&self.params, x, inputs, outputs))
            }
            Architecture::Mlp {
                inputs,
                hidden,
                outputs,
            } => {
                let (p1, p2) = self.params.split_at(hidden * inputs + hidden);
                let h: Vec<f64> = dense_forward(p1, x, inputs, hidden).into_iter().map(f64::tanh).collect();
                Tensor::new(vec![outputs], dense_forward(p2, &h, hidden, outputs))
            }
            Architecture::TinyFcn { .. } => {
                let (h, w) = (input.shape()[1], input.shape()[2]);
                let cache = self.fcn_forward(x, h, w);
                Tensor::new(vec![self.arch.outputs(), h, w], cache.logits)
            }
        }
    }

    pub fn forward_batch(&self, inputs: &[Tensor]) -> Result<Vec<Tensor>> {
        inputs.par_iter().map(|x| self.forward(x)).collect()
    }

    /// Gradient of `⟨dlogits, forward(input)⟩` with respect to the parameters.
    pub fn vjp(&self, input: &Tensor, dlogits: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let x = input.data();
        let mut grad = vec![0.0; self.params.len()];
        match self.arch {
            Architecture::LinearSoftmax { inputs, outputs } => {
                if dlogits.len() != outputs {
                    return Err(Error::shape("logit gradient length mismatch"));
                }
                dense_backward(&self.params, x, inputs, outputs, dlogits, &mut grad, None);
            }
            Architecture::Mlp {
                inputs,
                hidden,
                outputs,
            } => {
                if dlogits.len() != outputs {
                    return Err(Error::shape("logit gradient length mismatch"));
                }
                let split = hidden * inputs + hidden;
                let (p1, p2) = self.params.split_at(split);
                let (g1, g2) = grad.split_at_mut(split);
                let h: Vec<f64> = dense_forward(p1, x, inputs, hidden).into_iter().map(f64::tanh).collect();
                let mut dh = vec![0.0; hidden];
                dense_backward(p2, &h, hidden, outputs, dlogits, g2, Some(&mut dh));
                let da: Vec<f64> = dh.iter().zip(&h).map(|(d, hv)| d * (1.0 - hv * hv)).collect();
                dense_backward(p1, x, inputs, hidden, &da, g1, None);
            }
            Architecture::TinyFcn {
                in_channels,
                widths: [a, b],
                classes,
            } => {
                let (h, w) = (input.shape()[1], input.shape()[2]);
                if dlogits.len() != classes * h * w {
                    return Err(Error::shape("logit gradient length mismatch"));
                }
                let cache = self.fcn_forward(x, h, w);
                let nb = Neighbors::new(h, w);
                let (s1, s2) = (conv_params(in_channels, a), conv_params(a, b));
                let (g1, rest) = grad.split_at_mut(s1);
                let (g2, g3) = rest.split_at_mut(s2);
                let (p1, rest) = self.params.split_at(s1);
                let (p2, p3) = rest.split_at(s2);

                let mut dh2 = vec![0.0; b * h * w];
                conv_backward(&nb, &cache.h2, b, p3, classes, dlogits, g3, Some(&mut dh2));
                let da2: Vec<f64> = dh2.iter().zip(&cache.h2).map(|(d, v)| d * (1.0 - v * v)).collect();
                let mut dh1 = vec![0.0; a * h * w];
                conv_backward(&nb, &cache.h1, a, p2, b, &da2, g2, Some(&mut dh1));
                let da1: Vec<f64> = dh1.iter().zip(&cache.h1).map(|(d, v)| d * (1.0 - v * v)).collect();
                conv_backward(&nb, x, in_channels, p1, a, &da1, g1, None);
            }
        }
        Ok(grad)
    }

    fn fcn_forward(&self, x: &[f64], h: usize, w: usize) -> FcnCache {
        let Architecture::TinyFcn {
            in_channels,
            widths: [a, b],
            classes,
        } = self.arch
        else {
            unreachable!("fcn_forward on a dense model")
        };
        let nb = Neighbors::new(h, w);
        let (s1, s2) = (conv_params(in_channels, a), conv_params(a, b));
        let (p1, rest) = self.params.split_at(s1);
        let (p2, p3) = rest.split_at(s2);
        let h1: Vec<f64> = conv_forward(&nb, x, in_channels, p1, a).into_iter().map(f64::tanh).collect();
        let h2: Vec<f64> = conv_forward(&nb, &h1, a, p2, b).into_iter().map(f64::tanh).collect();
        let logits = conv_forward(&nb, &h2, b, p3, classes);
        FcnCache { h1, h2, logits }
    }
}

struct FcnCache {
    h1: Vec<f64>,
    h2: Vec<f64>,
    logits: Vec<f64>,
}

/// `W` is `[outputs][inputs]` followed by `b[outputs]`.
fn dense_forward(params: &[f64], x: &[f64], inputs: usize, outputs: usize) -> Vec<f64> {
    let (weights, bias) = params.split_at(outputs * inputs);
    weights
        .chunks(inputs)
        .zip(bias)
        .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
        .collect()
}

fn dense_backward(
    params: &[f64],
    x: &[f64],
    inputs: usize,
    outputs: usize,
    dout: &[f64],
    grad: &mut [f64],
    dinput: Option<&mut [f64]>,
) {
    let (gw, gb) = grad.split_at_mut(outputs * inputs);
    for (o, &d) in dout.iter().enumerate() {
        for (g, v) in gw[o * inputs..(o + 1) * inputs].iter_mut().zip(x) {
            *g += d * v;
        }
        gb[o] += d;
    }
    if let Some(dx) = dinput {
        let weights = &params[..outputs * inputs];
        for (o, &d) in dout.iter().enumerate() {
            for (dxi, w) in dx.iter_mut().zip(&weights[o * inputs..(o + 1) * inputs]) {
                *dxi += d * w;
            }
        }
    }
}

/// Clamped 3×3 neighbourhood of every pixel (replicate padding).
struct Neighbors {
    pixels: usize,
    idx: Vec<[usize; 9]>,
}

impl Neighbors {
    fn new(h: usize, w: usize) -> Self {
        let mut idx = Vec::with_capacity(h * w);
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut taps = [0; 9];
                for i in 0..3isize {
                    for j in 0..3isize {
                        let yy = (y + i - 1).clamp(0, h as isize - 1) as usize;
                        let xx = (x + j - 1).clamp(0, w as isize - 1) as usize;
                        taps[(i * 3 + j) as usize] = yy * w + xx;
                    }
                }
                idx.push(taps);
            }
        }
        Neighbors { pixels: h * w, idx }
    }
}

/// Weights `[cout][cin][3][3]` then `bias[cout]`.
fn conv_forward(nb: &Neighbors, input: &[f64], cin: usize, params: &[f64], cout: usize) -> Vec<f64> {
    let n = nb.pixels;
    let (weights, bias) = params.split_at(cout * cin * 9);
    let mut out = vec![0.0; cout * n];
    for co in 0..cout {
        let plane = &mut out[co * n..(co + 1) * n];
        plane.iter_mut().for_each(|v| *v = bias[co]);
        for ci in 0..cin {
            let src = &input[ci * n..(ci + 1) * n];
            let kw = &weights[(co * cin + ci) * 9..(co * cin + ci + 1) * 9];
            for (p, taps) in nb.idx.iter().enumerate() {
                let mut acc = 0.0;
                for t in 0..9 {
                    acc += kw[t] * src[taps[t]];
                }
                plane[p] += acc;
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    nb: &Neighbors,
    input: &[f64],
    cin: usize,
    params: &[f64],
    cout: usize,
    dout: &[f64],
    grad: &mut [f64],
    mut dinput: Option<&mut [f64]>,
) {
    let n = nb.pixels;
    let weights = &params[..cout * cin * 9];
    let (gw, gb) = grad.split_at_mut(cout * cin * 9);
    for co in 0..cout {
        let d = &dout[co * n..(co + 1) * n];
        gb[co] += d.iter().sum::<f64>();
        for ci in 0..cin {
            let src = &input[ci * n..(ci + 1) * n];
            let base = (co * cin + ci) * 9;
            let mut acc = [0.0; 9];
            for (p, taps) in nb.idx.iter().enumerate() {
                for t in 0..9 {
                    acc[t] += d[p] * src[taps[t]];
                }
            }
            for t in 0..9 {
                gw[base + t] += acc[t];
            }
            if let Some(dx) = dinput.as_deref_mut() {
                let kw = &weights[base..base + 9];
                let dst = &mut dx[ci * n..(ci + 1) * n];
                for (p, taps) in nb.idx.iter().enumerate() {
                    for t in 0..9 {
                        dst[taps[t]] += kw[t] * d[p];
                    }
                }
            }
        }
    }
}

/// The loss a target selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    SoftCe,
    SoftBce,
    MaskedPixelCe,
}

/// Training target for one sample.
#[derive(Debug, Clone, Copy)]
pub enum SampleTarget<'a> {
    /// Class distribution for [`crate::losses::soft_ce`].
    Soft(&'a [f64]),
    /// Per-label soft binary targets for [`crate::losses::soft_bce`].
    Binary(&'a [f64]),
    /// Per-pixel distributions, optionally masked.
    Pixel {
        target: &'a SoftLabelMap,
        mask: Option<&'a [bool]>,
    },
}

impl SampleTarget<'_> {
    pub fn kind(&self) -> LossKind {
        match self {
            SampleTarget::Soft(_) => LossKind::SoftCe,
            SampleTarget::Binary(_) => LossKind::SoftBce,
            SampleTarget::Pixel { .. } => LossKind::MaskedPixelCe,
        }
    }
}

/// One sample's contribution to a batch loss: the batch loss is
/// `Σ loss_sum / Σ weight` and likewise for the gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGradient {
    pub loss_sum: f64,
    pub grad: Vec<f64>,
    pub weight: f64,
}

pub fn sample_gradient(model: &Model, input: &Tensor, target: SampleTarget<'_>) -> Result<SampleGradient> {
    let dense = model.architecture().is_dense();
    let pixel = matches!(target, SampleTarget::Pixel { .. });
    if dense == pixel {
        return Err(Error::invalid(format!(
            "{:?} loss does not fit architecture {:?}",
            target.kind(),
            model.architecture()
        )));
    }
    let logits = model.forward(input)?;
    let (lv, weight) = match target {
        SampleTarget::Soft(t) => (soft_ce(logits.data(), t)?, 1.0),
        SampleTarget::Binary(t) => (soft_bce(logits.data(), t)?, 1.0),
        SampleTarget::Pixel { target, mask } => {
            let shape = input.shape();
            if target.height() != shape[1] || target.width() != shape[2] {
                return Err(Error::shape("target map does not match image size"));
            }
            let (lv, count) = pixel_ce_sum(logits.data(), target, mask)?;
            (lv, count as f64)
        }
    };
    if weight == 0.0 {
        return Ok(SampleGradient {
            loss_sum: 0.0,
            grad: vec![0.0; model.params().len()],
            weight,
        });
    }
    let grad = model.vjp(input, &lv.grad)?;
    Ok(SampleGradient {
        loss_sum: lv.loss,
        grad,
        weight,
    })
}

/// Per-sample gradients computed in parallel, in input order.
pub fn sample_gradients(
    model: &Model,
    inputs: &[Tensor],
    targets: &[SampleTarget<'_>],
) -> Result<Vec<SampleGradient>> {
    if inputs.len() != targets.len() {
        return Err(Error::shape(format!(
            "{} inputs for {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    inputs
        .par_iter()
        .zip(targets.par_iter())
        .map(|(x, t)| sample_gradient(model, x, *t))
        .collect()
}

/// Reduces per-sample contributions in order, so the result does not depend
/// on how the samples were scheduled.
pub fn reduce_gradients(parts: &[SampleGradient], param_count: usize) -> LossValue {
    let mut grad = vec![0.0; param_count];
    let mut loss = 0.0;
    let mut weight = 0.0;
    for part in parts {
        loss += part.loss_sum;
        weight += part.weight;
        for (g, v) in grad.iter_mut().zip(&part.grad) {
            *g += v;
        }
    }
    if weight == 0.0 {
        return LossValue {
            loss: 0.0,
            grad: vec![0.0; param_count],
        };
    }
    grad.iter_mut().for_each(|g| *g /= weight);
    LossValue {
        loss: loss / weight,
        grad,
    }
}

/// Batch loss and its exact gradient with respect to the parameters.
pub fn backward(model: &Model, inputs: &[Tensor], targets: &[SampleTarget<'_>]) -> Result<LossValue> {
    let parts = sample_gradients(model, inputs, targets)?;
    Ok(reduce_gradients(&parts, model.params().len()))
}

/// Batch loss only, for finite-difference checks and evaluation.
pub fn batch_loss(model: &Model, inputs: &[Tensor], targets: &[SampleTarget<'_>]) -> Result<f64> {
    let mut loss = 0.0;
    let mut weight = 0.0;
    for (x, t) in inputs.iter().zip(targets) {
        let z = model.forward(x)?;
        match t {
            SampleTarget::Soft(t) => {
                loss += soft_ce(z.data(), t)?.loss;
                weight += 1.0;
            }
            SampleTarget::Binary(t) => {
                loss += soft_bce(z.data(), t)?.loss;
                weight += 1.0;
            }
            SampleTarget::Pixel { target, mask } => {
                let (lv, count) = pixel_ce_sum(z.data(), target, *mask)?;
                loss += lv.loss;
                weight += count as f64;
            }
        }
    }
    Ok(if weight == 0.0 { 0.0 } else { loss / weight })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_counts() {
        assert_eq!(Architecture::LinearSoftmax { inputs: 4, outputs: 3 }.param_count(), 15);
        assert_eq!(
            Architecture::Mlp {
                inputs: 4,
                hidden: 5,
                outputs: 3
            }
            .param_count(),
            25 + 18
        );
        assert_eq!(
            Architecture::TinyFcn {
                in_channels: 3,
                widths: [4, 4],
                classes: 2
            }
            .param_count(),
            (4 * 27 + 4) + (4 * 36 + 4) + (2 * 36 + 2)
        );
    }

    #[test]
    fn zero_linear_model_gives_zero_logits() {
        let m = Model::zeros(Architecture::LinearSoftmax { inputs: 3, outputs: 4 }).unwrap();
        let z = m.forward(&Tensor::from_vec(vec![1.0, -2.0, 0.5]).unwrap()).unwrap();
        assert_eq!(z.data(), &[0.0; 4]);
    }

    #[test]
    fn identity_linear_model_echoes_input() {
        let arch = Architecture::LinearSoftmax { inputs: 2, outputs: 2 };
        let m = Model::new(arch, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let z = m.forward(&Tensor::from_vec(vec![0.3, -0.7]).unwrap()).unwrap();
        assert_eq!(z.data(), &[0.3, -0.7]);
    }

    #[test]
    fn seeded_mlp_is_reproducible() {
        let arch = Architecture::Mlp {
            inputs: 3,
            hidden: 4,
            outputs: 2,
        };
        let a = Model::init(arch, 7).unwrap();
        let b = Model::init(arch, 7).unwrap();
        assert_eq!(a, b);
        let x = Tensor::from_vec(vec![0.5, -1.0, 2.0]).unwrap();
        let za = a.forward(&x).unwrap();
        assert_eq!(za, b.forward(&x).unwrap());
        assert_ne!(a, Model::init(arch, 8).unwrap());
        for p in a.params() {
            assert!(p.abs() <= 1.0 / 3f64.sqrt() + 1e-12 || p.abs() <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn forward_rejects_bad_inputs() {
        let m = Model::zeros(Architecture::LinearSoftmax { inputs: 3, outputs: 2 }).unwrap();
        assert!(m.forward(&Tensor::from_vec(vec![1.0; 4]).unwrap()).is_err());
        let f = Model::zeros(Architecture::TinyFcn {
            in_channels: 2,
            widths: [2, 2],
            classes: 2,
        })
        .unwrap();
        assert!(f.forward(&Tensor::zeros(vec![3, 4, 4])).is_err());
        assert!(Model::new(Architecture::LinearSoftmax { inputs: 3, outputs: 2 }, vec![0.0; 7]).is_err());
    }

    #[test]
    fn loss_architecture_mismatch_is_rejected() {
        let m = Model::zeros(Architecture::LinearSoftmax { inputs: 2, outputs: 2 }).unwrap();
        let x = Tensor::from_vec(vec![1.0, 1.0]).unwrap();
        let labels = crate::soft_labels::LabelMap::new(1, 2, 2, vec![0, 1]).unwrap();
        let target = SoftLabelMap::one_hot(&labels);
        let t = SampleTarget::Pixel {
            target: &target,
            mask: None,
        };
        assert!(sample_gradient(&m, &x, t).is_err());
    }

    #[test]
    fn fcn_keeps_spatial_size() {
        let arch = Architecture::TinyFcn {
            in_channels: 3,
            widths: [4, 5],
            classes: 3,
        };
        let m = Model::init(arch, 1).unwrap();
        let z = m.forward(&Tensor::zeros(vec![3, 5, 7])).unwrap();
        assert_eq!(z.shape(), &[3, 5, 7]);
    }

    #[test]
    fn reduction_is_weighted_and_handles_empty() {
        let parts = vec![
            SampleGradient {
                loss_sum: 2.0,
                grad: vec![2.0, 0.0],
                weight: 2.0,
            },
            SampleGradient {
                loss_sum: 1.0,
                grad: vec![0.0, 1.0],
                weight: 1.0,
            },
        ];
        let lv = reduce_gradients(&parts, 2);
        assert!((lv.loss - 1.0).abs() < 1e-15);
        assert_eq!(lv.grad, vec![2.0 / 3.0, 1.0 / 3.0]);
        let empty = reduce_gradients(&[], 2);
        assert_eq!(empty.loss, 0.0);
        assert_eq!(empty.grad, vec![0.0, 0.0]);
    }
}
