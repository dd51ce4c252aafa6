//! A small fully convolutional network with exact backpropagation.
//!
//! The network maps a one-channel image to a same-size foreground
//! probability map: a stack of 3×3 convolutions, ReLUs and 2×2 max pools,
//! a 1×1 convolution, a transposed convolution back to input resolution,
//! and a final sigmoid. All parameters live in one flat vector so the
//! optimizer and the checkpoint format can treat them uniformly.

mod adadelta;
mod checkpoint;
pub mod layers;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarField2D;

pub use adadelta::{adadelta_update, AdadeltaConfig};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};

/// Clamp applied to predictions inside [`cross_entropy`].
pub const LOSS_FLOOR: f64 = 1e-7;

/// Standard deviation of the Gaussian used for convolution weights.
pub const INIT_STD: f64 = 0.01;

/// Dense `[batch, channels, height, width]` array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    values: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            values: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], values: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if values.len() != expected {
            return Err(Error::Dimension(format!(
                "tensor of shape {shape:?} needs {expected} values, got {}",
                values.len()
            )));
        }
        Ok(Self { shape, values })
    }

    /// A `[1, 1, h, w]` tensor holding the field's values.
    pub fn from_field(field: &ScalarField2D) -> Self {
        Self {
            shape: [1, 1, field.height(), field.width()],
            values: field.values().to_vec(),
        }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// One stage of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv3x3 { in_channels: usize, out_channels: usize },
    Relu,
    Maxpool2,
    Conv1x1 { in_channels: usize, out_channels: usize },
    Upconv { in_channels: usize, out_channels: usize, factor: usize },
}

impl LayerSpec {
    /// Number of trainable values (kernel then bias).
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Conv3x3 { in_channels, out_channels } => out_channels * in_channels * 9 + out_channels,
            LayerSpec::Conv1x1 { in_channels, out_channels } => out_channels * in_channels + out_channels,
            LayerSpec::Upconv { in_channels, out_channels, factor } => {
                let (k, _) = layers::upconv_geometry(factor);
                in_channels * out_channels * k * k + out_channels
            }
            LayerSpec::Relu | LayerSpec::Maxpool2 => 0,
        }
    }

    fn bias_count(&self) -> usize {
        match *self {
            LayerSpec::Conv3x3 { out_channels, .. }
            | LayerSpec::Conv1x1 { out_channels, .. }
            | LayerSpec::Upconv { out_channels, .. } => out_channels,
            LayerSpec::Relu | LayerSpec::Maxpool2 => 0,
        }
    }
}

/// conv3x3(1→8) → relu → pool → conv3x3(8→16) → relu → pool → conv1x1(16→1) → upconv(×4).
pub fn default_architecture() -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv3x3 { in_channels: 1, out_channels: 8 },
        LayerSpec::Relu,
        LayerSpec::Maxpool2,
        LayerSpec::Conv3x3 { in_channels: 8, out_channels: 16 },
        LayerSpec::Relu,
        LayerSpec::Maxpool2,
        LayerSpec::Conv1x1 { in_channels: 16, out_channels: 1 },
        LayerSpec::Upconv { in_channels: 1, out_channels: 1, factor: 4 },
    ]
}

/// Checks channel agreement and that the network maps one channel at input
/// resolution to one channel at input resolution. Returns the total
/// subsampling factor (product of pool strides).
pub fn validate_architecture(specs: &[LayerSpec]) -> Result<usize> {
    let err = |i: usize, m: String| Error::config(format!("layers[{i}]"), m);
    let mut channels = 1;
    let mut pending = 1;
    let mut total = 1;
    for (i, spec) in specs.iter().enumerate() {
        match *spec {
            LayerSpec::Conv3x3 { in_channels, out_channels }
            | LayerSpec::Conv1x1 { in_channels, out_channels }
            | LayerSpec::Upconv { in_channels, out_channels, .. } => {
                if in_channels == 0 || out_channels == 0 {
                    return Err(err(i, "channel counts must be positive".into()));
                }
                if in_channels != channels {
                    return Err(err(i, format!("expects {in_channels} input channels, previous layer gives {channels}")));
                }
                channels = out_channels;
            }
            LayerSpec::Relu => {}
            LayerSpec::Maxpool2 => {
                pending *= 2;
                total *= 2;
            }
        }
        if let LayerSpec::Upconv { factor, .. } = *spec {
            if factor != pending {
                return Err(err(i, format!("upconv factor {factor} does not undo the pending subsampling {pending}")));
            }
            pending = 1;
        }
    }
    if channels != 1 {
        return Err(Error::config("layers", format!("network ends with {channels} channels, expected 1")));
    }
    if pending != 1 {
        return Err(Error::config("layers", format!("subsampling {pending} is never undone by an upconv")));
    }
    Ok(total)
}

/// Network parameters `θ` plus the optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct FcnModel {
    layers: Vec<LayerSpec>,
    offsets: Vec<usize>,
    params: Vec<f64>,
    /// Running average `E[g²]` per parameter.
    pub(crate) sq_grad: Vec<f64>,
    /// Running average `E[Δx²]` per parameter.
    pub(crate) sq_step: Vec<f64>,
    seed: u64,
    subsampling: usize,
}

impl FcnModel {
    /// A network with weights drawn from `N(0, INIT_STD²)` and bilinear upconvolutions.
    pub fn new(layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let mut m = Self::zeroed(layers)?;
        m.init_weights(seed, INIT_STD);
        Ok(m)
    }

    /// A network whose parameters are all zero.
    pub fn zeroed(layers: Vec<LayerSpec>) -> Result<Self> {
        let subsampling = validate_architecture(&layers)?;
        let mut offsets = Vec::with_capacity(layers.len() + 1);
        let mut n = 0;
        for l in &layers {
            offsets.push(n);
            n += l.param_count();
        }
        offsets.push(n);
        log::debug!("network with {} layers and {n} parameters", layers.len());
        Ok(Self {
            layers,
            offsets,
            params: vec![0.0; n],
            sq_grad: vec![0.0; n],
            sq_step: vec![0.0; n],
            seed: 0,
            subsampling,
        })
    }

    /// Redraws all parameters from `seed`: convolution kernels from
    /// `N(0, std²)`, upconvolution kernels bilinear, biases zero. Resets the
    /// optimizer state.
    pub fn init_weights(&mut self, seed: u64, std: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, std).expect("finite std");
        for (i, spec) in self.layers.iter().enumerate() {
            let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
            let kernel = &mut self.params[lo..hi - spec.bias_count()];
            match *spec {
                LayerSpec::Upconv { in_channels, out_channels, factor } => {
                    let plane = layers::bilinear_kernel(factor);
                    kernel.fill(0.0);
                    for c in 0..in_channels.min(out_channels) {
                        let off = (c * out_channels + c) * plane.len();
                        kernel[off..off + plane.len()].copy_from_slice(&plane);
                    }
                }
                _ => kernel.iter_mut().for_each(|w| *w = normal.sample(&mut rng)),
            }
            self.params[hi - spec.bias_count()..hi].fill(0.0);
        }
        self.sq_grad.fill(0.0);
        self.sq_step.fill(0.0);
        self.seed = seed;
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// The `[kernel..., bias...]` slice of layer `i`.
    pub fn layer_params(&self, i: usize) -> &[f64] {
        &self.params[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Product of all pool strides; inputs must be multiples of this.
    pub fn subsampling(&self) -> usize {
        self.subsampling
    }

    pub(crate) fn from_parts(layers: Vec<LayerSpec>, params: Vec<f64>, sq_grad: Vec<f64>, sq_step: Vec<f64>, seed: u64) -> Result<Self> {
        let mut m = Self::zeroed(layers)?;
        if params.len() != m.params.len() || sq_grad.len() != m.params.len() || sq_step.len() != m.params.len() {
            return Err(Error::Dimension(format!("layer list needs {} parameters", m.params.len())));
        }
        m.params = params;
        m.sq_grad = sq_grad;
        m.sq_step = sq_step;
        m.seed = seed;
        Ok(m)
    }

    fn split(&self, i: usize) -> (&[f64], &[f64]) {
        let p = self.layer_params(i);
        p.split_at(p.len() - self.layers[i].bias_count())
    }

    /// Pre-sigmoid scores for a batch.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.run(x, false)?.0)
    }

    /// Probability map for a batch.
    pub fn forward_tensor(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.logits(x)?.map(sigmoid))
    }

    /// Probability map of one image; values in `(0, 1)`, same size as the image.
    pub fn forward(&self, image: &ScalarField2D) -> Result<ScalarField2D> {
        let p = self.forward_tensor(&Tensor::from_field(image))?;
        ScalarField2D::from_vec(image.width(), image.height(), p.into_values())
    }

    // Runs the layer stack, optionally keeping every layer input and pool
    // argmax for the reverse pass.
    fn run(&self, x: &Tensor, keep: bool) -> Result<(Tensor, Trace)> {
        let [_, c, h, w] = x.shape();
        if c != 1 {
            return Err(Error::Dimension(format!("network input must have one channel, got {c}")));
        }
        let s = self.subsampling;
        if h % s != 0 || w % s != 0 {
            return Err(Error::Dimension(format!("input {w}x{h} is not a multiple of the subsampling factor {s}")));
        }
        let mut trace = Trace::default();
        let mut cur = x.clone();
        for (i, spec) in self.layers.iter().enumerate() {
            let (k, b) = self.split(i);
            let next = match *spec {
                LayerSpec::Conv3x3 { in_channels, out_channels } => {
                    check_in(&cur, in_channels)?;
                    layers::conv_forward(&cur, k, b, out_channels, 3)?
                }
                LayerSpec::Conv1x1 { in_channels, out_channels } => {
                    check_in(&cur, in_channels)?;
                    layers::conv_forward(&cur, k, b, out_channels, 1)?
                }
                LayerSpec::Upconv { in_channels, out_channels, factor } => {
                    check_in(&cur, in_channels)?;
                    layers::upconv_forward(&cur, k, b, out_channels, factor)?
                }
                LayerSpec::Relu => layers::relu(&cur),
                LayerSpec::Maxpool2 => {
                    let (y, arg) = layers::maxpool2(&cur)?;
                    if keep {
                        trace.argmax.push(arg);
                    }
                    y
                }
            };
            if keep {
                trace.inputs.push(std::mem::replace(&mut cur, next));
            } else {
                cur = next;
            }
        }
        Ok((cur, trace))
    }

    /// Mean cross-entropy loss of a batch against binary targets and its
    /// gradient with respect to every parameter.
    pub fn backward(&self, x: &Tensor, target: &Tensor) -> Result<(f64, Gradients)> {
        let (z, trace) = self.run(x, true)?;
        if target.shape() != z.shape() {
            return Err(Error::Dimension(format!(
                "target shape {:?} does not match prediction shape {:?}",
                target.shape(),
                z.shape()
            )));
        }
        let n = z.len() as f64;
        let mut loss = 0.0;
        let mut dz = Tensor::zeros(z.shape());
        for ((d, &zv), &y) in dz.values_mut().iter_mut().zip(z.values()).zip(target.values()) {
            let p = sigmoid(zv);
            let pc = p.clamp(LOSS_FLOOR, 1.0 - LOSS_FLOOR);
            loss -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
            // Inside the clamp the loss is constant in z.
            *d = if p == pc { (p - y) / n } else { 0.0 };
        }
        loss /= n;

        let mut grads = vec![0.0; self.params.len()];
        let mut pools = trace.argmax.len();
        let mut g = dz;
        for i in (0..self.layers.len()).rev() {
            let input = &trace.inputs[i];
            let (k, _) = self.split(i);
            let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
            g = match self.layers[i] {
                LayerSpec::Conv3x3 { .. } | LayerSpec::Conv1x1 { .. } => {
                    let ks = if matches!(self.layers[i], LayerSpec::Conv3x3 { .. }) { 3 } else { 1 };
                    let (dx, dw, db) = layers::conv_backward(input, k, &g, ks);
                    grads[lo..lo + dw.len()].copy_from_slice(&dw);
                    grads[lo + dw.len()..hi].copy_from_slice(&db);
                    dx
                }
                LayerSpec::Upconv { factor, .. } => {
                    let (dx, dw, db) = layers::upconv_backward(input, k, &g, factor);
                    grads[lo..lo + dw.len()].copy_from_slice(&dw);
                    grads[lo + dw.len()..hi].copy_from_slice(&db);
                    dx
                }
                LayerSpec::Relu => layers::relu_backward(input, &g),
                LayerSpec::Maxpool2 => {
                    pools -= 1;
                    layers::maxpool2_backward(input.shape(), &trace.argmax[pools], &g)
                }
            };
        }
        Ok((loss, Gradients { values: grads }))
    }

    /// [`FcnModel::backward`] for one image and one binary mask.
    pub fn backward_field(&self, image: &ScalarField2D, target: &ScalarField2D) -> Result<(f64, Gradients)> {
        image.ensure_same_dims(target)?;
        self.backward(&Tensor::from_field(image), &Tensor::from_field(target))
    }
}

fn check_in(x: &Tensor, channels: usize) -> Result<()> {
    if x.channels() != channels {
        return Err(Error::Dimension(format!("layer expects {channels} channels, got {}", x.channels())));
    }
    Ok(())
}

#[derive(Default)]
struct Trace {
    inputs: Vec<Tensor>,
    argmax: Vec<Vec<usize>>,
}

/// Per-parameter gradient in the model's flat layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub values: Vec<f64>,
}

impl Gradients {
    pub fn zeros(len: usize) -> Self {
        Self { values: vec![0.0; len] }
    }

    /// Elementwise mean, accumulated in slice order.
    pub fn mean(all: &[Gradients]) -> Option<Self> {
        let first = all.first()?;
        let mut out = vec![0.0; first.values.len()];
        for g in all {
            for (o, v) in out.iter_mut().zip(&g.values) {
                *o += v;
            }
        }
        let n = all.len() as f64;
        out.iter_mut().for_each(|v| *v /= n);
        Some(Self { values: out })
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `−(1/N) Σ [y ln P + (1−y) ln(1−P)]` with `P` clamped to `[LOSS_FLOOR, 1 − LOSS_FLOOR]`.
pub fn cross_entropy(pred: &ScalarField2D, label: &ScalarField2D) -> Result<f64> {
    pred.ensure_same_dims(label)?;
    let sum: f64 = pred
        .values()
        .iter()
        .zip(label.values())
        .map(|(&p, &y)| {
            let p = p.clamp(LOSS_FLOOR, 1.0 - LOSS_FLOOR);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(sum / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_field(w: usize, h: usize, seed: u64) -> ScalarField2D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ScalarField2D::from_fn(w, h, |_, _| rng.random_range(0.0..1.0))
    }

    fn disc(w: usize, h: usize, r: f64) -> ScalarField2D {
        let (cx, cy) = (w as f64 / 2.0 - 0.5, h as f64 / 2.0 - 0.5);
        ScalarField2D::from_fn(w, h, |x, y| {
            ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r) as u8 as f64
        })
    }

    fn toy_layers() -> Vec<LayerSpec> {
        vec![
            LayerSpec::Conv3x3 { in_channels: 1, out_channels: 3 },
            LayerSpec::Relu,
            LayerSpec::Maxpool2,
            LayerSpec::Conv1x1 { in_channels: 3, out_channels: 1 },
            LayerSpec::Upconv { in_channels: 1, out_channels: 1, factor: 2 },
        ]
    }

    #[test]
    fn init_is_deterministic_and_gaussian() {
        let big = vec![
            LayerSpec::Conv3x3 { in_channels: 1, out_channels: 40 },
            LayerSpec::Conv3x3 { in_channels: 40, out_channels: 40 },
            LayerSpec::Conv1x1 { in_channels: 40, out_channels: 1 },
        ];
        let a = FcnModel::new(big.clone(), 11).unwrap();
        let b = FcnModel::new(big.clone(), 11).unwrap();
        let c = FcnModel::new(big, 12).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
        let mut w = Vec::new();
        for i in 0..3 {
            let (k, bias) = a.split(i);
            assert!(bias.iter().all(|&v| v == 0.0));
            w.extend_from_slice(k);
        }
        assert!(w.len() >= 10_000);
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let std = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 3.0 * INIT_STD / 100.0, "mean {mean}");
        assert!((std - INIT_STD).abs() < 0.05 * INIT_STD, "std {std}");
    }

    #[test]
    fn architecture_checks() {
        assert_eq!(validate_architecture(&default_architecture()).unwrap(), 4);
        let mut bad = default_architecture();
        bad[7] = LayerSpec::Upconv { in_channels: 1, out_channels: 1, factor: 2 };
        assert!(matches!(validate_architecture(&bad), Err(Error::Config { .. })));
        let mut bad = default_architecture();
        bad[3] = LayerSpec::Conv3x3 { in_channels: 4, out_channels: 16 };
        assert!(matches!(validate_architecture(&bad), Err(Error::Config { .. })));
        let m = FcnModel::new(default_architecture(), 0).unwrap();
        assert_eq!(m.param_count(), (8 * 9 + 8) + (16 * 8 * 9 + 16) + (16 + 1) + (64 + 1));
    }

    #[test]
    fn zero_network_predicts_one_half() {
        let m = FcnModel::zeroed(default_architecture()).unwrap();
        let p = m.forward(&random_field(32, 32, 1)).unwrap();
        assert!(p.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn dense_prediction_and_purity() {
        let m = FcnModel::new(default_architecture(), 3).unwrap();
        for s in [32, 48, 64] {
            let img = random_field(s, s, s as u64);
            let p = m.forward(&img).unwrap();
            assert_eq!(p.dims(), (s, s));
            assert!(p.values().iter().all(|&v| v > 0.0 && v < 1.0));
            assert_eq!(p, m.forward(&img.clone()).unwrap());
        }
        assert!(matches!(m.forward(&random_field(30, 32, 0)), Err(Error::Dimension(_))));
    }

    #[test]
    fn cross_entropy_examples() {
        let one = ScalarField2D::filled(1, 1, 1.0);
        let half = ScalarField2D::filled(1, 1, 0.5);
        assert!((cross_entropy(&half, &one).unwrap() - 2f64.ln()).abs() < 1e-15);
        let y = ScalarField2D::from_vec(2, 1, vec![1.0, 0.0]).unwrap();
        let p = ScalarField2D::from_vec(2, 1, vec![0.5, 0.5]).unwrap();
        assert!((cross_entropy(&p, &y).unwrap() - 2f64.ln()).abs() < 1e-15);
        let perfect = cross_entropy(&y, &y).unwrap();
        assert!((perfect + (1.0 - LOSS_FLOOR).ln()).abs() < 1e-18);
        assert!(matches!(cross_entropy(&one, &y), Err(Error::Dimension(_))));
    }

    #[test]
    fn saturated_prediction_has_no_gradient() {
        let mut m = FcnModel::zeroed(toy_layers()).unwrap();
        let n = m.param_count();
        // Constant logit 40 from the upconv bias: P rounds to 1 and is clamped.
        m.params_mut()[n - 1] = 40.0;
        let img = random_field(8, 8, 2);
        let (_, g) = m.backward_field(&img, &ScalarField2D::filled(8, 8, 1.0)).unwrap();
        assert!(g.values.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut m = FcnModel::zeroed(toy_layers()).unwrap();
        m.init_weights(5, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        m.params_mut().iter_mut().for_each(|p| *p += rng.random_range(-0.1..0.1));
        let img = random_field(8, 8, 6);
        let label = random_field(8, 8, 7).map(|v| (v > 0.5) as u8 as f64);
        let (_, g) = m.backward_field(&img, &label).unwrap();
        let loss = |m: &FcnModel| cross_entropy(&m.forward(&img).unwrap(), &label).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..m.param_count() {
            let mut mp = m.clone();
            mp.params_mut()[i] += h;
            let mut mm = m.clone();
            mm.params_mut()[i] -= h;
            let fd = (loss(&mp) - loss(&mm)) / (2.0 * h);
            let rel = (g.values[i] - fd).abs() / g.values[i].abs().max(fd.abs()).max(1e-7);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn batch_of_duplicates_has_same_gradient() {
        let m = FcnModel::new(toy_layers(), 4).unwrap();
        let img = random_field(8, 8, 1);
        let label = disc(8, 8, 2.5);
        let (l1, g1) = m.backward_field(&img, &label).unwrap();
        let mut xs = img.values().to_vec();
        xs.extend_from_slice(img.values());
        let mut ys = label.values().to_vec();
        ys.extend_from_slice(label.values());
        let (l2, g2) = m
            .backward(&Tensor::from_vec([2, 1, 8, 8], xs).unwrap(), &Tensor::from_vec([2, 1, 8, 8], ys).unwrap())
            .unwrap();
        assert!((l1 - l2).abs() < 1e-14);
        for (a, b) in g1.values.iter().zip(&g2.values) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn overfits_a_single_sample() {
        let mut m = FcnModel::new(default_architecture(), 21).unwrap();
        let label = disc(32, 32, 9.0);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let img = ScalarField2D::from_fn(32, 32, |x, y| 0.3 + 0.4 * label.get(x, y) + rng.random_range(-0.05..0.05));
        let cfg = AdadeltaConfig::default();
        let mut losses = Vec::new();
        for _ in 0..500 {
            let (l, g) = m.backward_field(&img, &label).unwrap();
            losses.push(l);
            adadelta_update(&mut m, &g, &cfg);
        }
        let last = *losses.last().unwrap();
        assert!(last < 0.05, "final loss {last}, first {}", losses[0]);
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let mut m = FcnModel::new(default_architecture(), 8).unwrap();
            let img = random_field(16, 16, 3);
            let label = disc(16, 16, 5.0);
            (0..20)
                .map(|_| {
                    let (l, g) = m.backward_field(&img, &label).unwrap();
                    adadelta_update(&mut m, &g, &AdadeltaConfig::default());
                    l
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
