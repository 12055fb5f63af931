//! A small conv/ReLU/pool/dense network with hand-written gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binary::LatentWeights;
use crate::conv::ConvConfig;
use crate::error::Error;
use crate::mask::{MaskScheme, PruneMask};
use crate::tensor::{FeatureTensor, KernelShape, KernelTensor};

/// Architecture and pruning choice; `build` turns it into weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ToySpec {
    pub in_maps: usize,
    /// Output maps of each 3×3 conv layer, each followed by a ReLU.
    pub conv_maps: Vec<usize>,
    pub classes: usize,
    pub scheme: MaskScheme,
    /// Forward with sign weights (training through the straight-through
    /// estimator) instead of the masked latent values.
    pub binarize: bool,
}

impl ToySpec {
    pub fn two_conv(scheme: MaskScheme, binarize: bool) -> Self {
        Self {
            in_maps: 1,
            conv_maps: vec![8, 16],
            classes: 4,
            scheme,
            binarize,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub latent: LatentWeights,
    pub cfg: ConvConfig,
}

/// Fully connected classifier, float weights, row-major `classes × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ToyLayer {
    Conv(ConvLayer),
    Relu,
    GlobalAvgPool,
    Dense(DenseLayer),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyNetwork {
    pub layers: Vec<ToyLayer>,
    pub classes: usize,
    pub binarize: bool,
}

/// Gradients of the mean batch loss, one entry per parametrised layer in order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub loss: f64,
    /// With respect to the weights used in the forward pass (sign or masked
    /// latent); zero at removed positions.
    pub conv: Vec<KernelTensor>,
    /// `(weights, bias)` per dense layer.
    pub dense: Vec<(Vec<f64>, Vec<f64>)>,
    pub correct: usize,
}

impl ToyNetwork {
    /// Latent weights are drawn uniformly from `[-1, 1]` and the head from a
    /// scaled uniform, all from one stream, so the draw does not depend on the
    /// mask.
    pub fn build(spec: &ToySpec, seed: u64) -> Result<Self, Error> {
        if spec.conv_maps.is_empty() || spec.in_maps == 0 || spec.classes < 2 {
            return Err(Error::InvalidConfig("toy network needs conv layers, inputs and >= 2 classes".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut maps = spec.in_maps;
        for (index, &out) in spec.conv_maps.iter().enumerate() {
            if out == 0 {
                return Err(Error::InvalidConfig("conv layer with zero output maps".into()));
            }
            let shape = KernelShape::square(3, maps, out);
            let weights = KernelTensor::from_fn(shape, |_, _, _, _| rng.gen_range(-1.0..=1.0));
            let mask = PruneMask::regenerate(shape, spec.scheme.for_layer(index))?;
            layers.push(ToyLayer::Conv(ConvLayer {
                latent: LatentWeights::new(weights, mask)?,
                cfg: ConvConfig::same(3, 1),
            }));
            layers.push(ToyLayer::Relu);
            maps = out;
        }
        layers.push(ToyLayer::GlobalAvgPool);
        let bound = (1.0 / maps as f64).sqrt();
        layers.push(ToyLayer::Dense(DenseLayer {
            inputs: maps,
            outputs: spec.classes,
            weights: (0..maps * spec.classes).map(|_| rng.gen_range(-bound..bound)).collect(),
            bias: vec![0.0; spec.classes],
        }));
        Ok(Self {
            layers,
            classes: spec.classes,
            binarize: spec.binarize,
        })
    }

    pub fn conv_layers(&self) -> impl Iterator<Item = &ConvLayer> {
        self.layers.iter().filter_map(|l| match l {
            ToyLayer::Conv(c) => Some(c),
            _ => None,
        })
    }

    pub fn dense_layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.layers.iter().filter_map(|l| match l {
            ToyLayer::Dense(d) => Some(d),
            _ => None,
        })
    }

    pub fn dense_layers_mut(&mut self) -> impl Iterator<Item = &mut DenseLayer> {
        self.layers.iter_mut().filter_map(|l| match l {
            ToyLayer::Dense(d) => Some(d),
            _ => None,
        })
    }

    /// Kernel a conv layer applies in the forward pass.
    pub fn effective_kernel(&self, conv: &ConvLayer) -> KernelTensor {
        if self.binarize {
            conv.latent.binarized_kernel()
        } else {
            let data = conv
                .latent
                .weights()
                .as_slice()
                .iter()
                .zip(conv.latent.mask().flags())
                .map(|(w, keep)| if *keep { *w } else { 0.0 })
                .collect();
            KernelTensor::from_vec(conv.latent.shape(), data).expect("same shape")
        }
    }

    /// Class scores for one image.
    pub fn logits(&self, x: &FeatureTensor<f64>) -> Result<Vec<f64>, Error> {
        let kernels: Vec<_> = self.conv_layers().map(|c| self.effective_kernel(c)).collect();
        Ok(forward(self, &kernels, x)?.logits)
    }

    pub fn predict(&self, x: &FeatureTensor<f64>) -> Result<usize, Error> {
        Ok(argmax(&self.logits(x)?))
    }

    /// Mean softmax cross-entropy over the batch and its gradients.
    ///
    /// Conv gradients are taken with respect to the forward weights and masked
    /// to kept positions; the straight-through update in
    /// [`ToyNetwork::apply`] hands them to the latent weights.
    pub fn forward_backward(&self, images: &[&FeatureTensor<f64>], labels: &[usize]) -> Result<Gradients, Error> {
        if images.len() != labels.len() || images.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "{} images vs {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|l| **l >= self.classes) {
            return Err(Error::InvalidConfig(format!("label {l} out of {} classes", self.classes)));
        }
        let kernels: Vec<_> = self.conv_layers().map(|c| self.effective_kernel(c)).collect();
        let mut conv: Vec<_> = kernels.iter().map(|k| KernelTensor::zeros(k.shape())).collect();
        let mut dense: Vec<_> = self
            .dense_layers()
            .map(|d| (vec![0.0; d.weights.len()], vec![0.0; d.bias.len()]))
            .collect();
        let scale = 1.0 / images.len() as f64;
        let mut loss = 0.0;
        let mut correct = 0;
        for (x, &label) in images.iter().zip(labels) {
            let tape = forward(self, &kernels, x)?;
            let (l, mut grad) = softmax_xent(&tape.logits, label);
            loss += l * scale;
            correct += usize::from(argmax(&tape.logits) == label);
            grad.iter_mut().for_each(|g| *g *= scale);
            backward(self, &kernels, &tape, grad, &mut conv, &mut dense);
        }
        for (g, c) in conv.iter_mut().zip(self.conv_layers()) {
            for (v, keep) in g.as_mut_slice().iter_mut().zip(c.latent.mask().flags()) {
                if !keep {
                    *v = 0.0;
                }
            }
        }
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch: 0, loss });
        }
        Ok(Gradients {
            loss,
            conv,
            dense,
            correct,
        })
    }

    /// Plain SGD step. Conv gradients go to the latent weights through the
    /// straight-through estimator: passed where `|latent| <= 1`, then clipped.
    pub fn apply(&mut self, grads: &Gradients, lr: f64) -> Result<(), Error> {
        let binarize = self.binarize;
        let mut conv = grads.conv.iter();
        let mut dense = grads.dense.iter();
        for layer in &mut self.layers {
            match layer {
                ToyLayer::Conv(c) => {
                    let g = conv.next().ok_or_else(|| Error::ShapeMismatch("missing conv gradient".into()))?;
                    let g = if binarize { ste(&c.latent, g) } else { g.clone() };
                    c.latent.apply_gradient(&g, lr)?;
                }
                ToyLayer::Dense(d) => {
                    let (gw, gb) = dense.next().ok_or_else(|| Error::ShapeMismatch("missing dense gradient".into()))?;
                    d.weights.iter_mut().zip(gw).for_each(|(w, g)| *w -= lr * g);
                    d.bias.iter_mut().zip(gb).for_each(|(b, g)| *b -= lr * g);
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Straight-through gradient for the latent weights.
fn ste(latent: &LatentWeights, grad: &KernelTensor) -> KernelTensor {
    let data = latent
        .weights()
        .as_slice()
        .iter()
        .zip(grad.as_slice())
        .map(|(w, g)| if w.abs() <= 1.0 { *g } else { 0.0 })
        .collect();
    KernelTensor::from_vec(grad.shape(), data).expect("same shape")
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, x)| if *x > best.1 { (i, *x) } else { best })
        .0
}

/// Loss and gradient with respect to the logits.
fn softmax_xent(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    let loss = sum.ln() + max - logits[label];
    let mut grad: Vec<f64> = exp.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

enum Activation {
    Map(FeatureTensor<f64>),
    Vector(Vec<f64>),
}

struct Tape {
    /// Input of each layer.
    inputs: Vec<Activation>,
    logits: Vec<f64>,
}

/// Kept taps of a kernel as `(k, ℓ, ι, λ, weight)`.
fn taps(kernel: &KernelTensor, mask: &PruneMask) -> Vec<(usize, usize, usize, usize, f64)> {
    let s = kernel.shape();
    let mut out = Vec::new();
    for l in 0..s.out_maps {
        for k in 0..s.in_maps {
            for (iota, lambda) in mask.kept_in_slice(k, l) {
                out.push((k, l, iota, lambda, kernel.get(iota, lambda, k, l).expect("in range")));
            }
        }
    }
    out
}

/// Visits every `(output index, input index)` pair a tap connects.
fn for_each_pair(rows: usize, cols: usize, cfg: &ConvConfig, iota: usize, lambda: usize, mut f: impl FnMut(usize, usize)) {
    let (di, dj) = (cfg.row_offset(lambda), cfg.col_offset(iota));
    for i in 0..rows {
        let si = i as isize + di;
        if si < 0 || si >= rows as isize {
            continue;
        }
        for j in 0..cols {
            let sj = j as isize + dj;
            if sj < 0 || sj >= cols as isize {
                continue;
            }
            f(i * cols + j, si as usize * cols + sj as usize);
        }
    }
}

fn forward(net: &ToyNetwork, kernels: &[KernelTensor], x: &FeatureTensor<f64>) -> Result<Tape, Error> {
    let mut inputs = Vec::with_capacity(net.layers.len());
    let mut act = Activation::Map(x.clone());
    let mut conv_index = 0;
    for layer in &net.layers {
        let next = match (layer, &act) {
            (ToyLayer::Conv(c), Activation::Map(m)) => {
                let kernel = &kernels[conv_index];
                conv_index += 1;
                let s = kernel.shape();
                if m.maps() != s.in_maps {
                    return Err(Error::ShapeMismatch(format!("{} maps into a {}-map conv", m.maps(), s.in_maps)));
                }
                let (rows, cols) = (m.rows(), m.cols());
                let plane = rows * cols;
                let src = m.as_slice();
                let mut out = vec![0.0; plane * s.out_maps];
                for (k, l, iota, lambda, w) in taps(kernel, c.latent.mask()) {
                    let (xs, ys) = (&src[k * plane..], &mut out[l * plane..]);
                    for_each_pair(rows, cols, &c.cfg, iota, lambda, |o, i| ys[o] += w * xs[i]);
                }
                Activation::Map(FeatureTensor::from_vec(rows, cols, s.out_maps, out)?)
            }
            (ToyLayer::Relu, Activation::Map(m)) => Activation::Map(m.map(|v| v.max(0.0))),
            (ToyLayer::GlobalAvgPool, Activation::Map(m)) => {
                let plane = (m.rows() * m.cols()) as f64;
                Activation::Vector(
                    m.as_slice()
                        .chunks(m.rows() * m.cols())
                        .map(|c| c.iter().sum::<f64>() / plane)
                        .collect(),
                )
            }
            (ToyLayer::Dense(d), Activation::Vector(v)) => {
                if v.len() != d.inputs {
                    return Err(Error::ShapeMismatch(format!("{} features into a {}-input head", v.len(), d.inputs)));
                }
                Activation::Vector(
                    (0..d.outputs)
                        .map(|o| d.bias[o] + d.weights[o * d.inputs..(o + 1) * d.inputs].iter().zip(v).map(|(w, x)| w * x).sum::<f64>())
                        .collect(),
                )
            }
            _ => return Err(Error::InvalidConfig("layer order does not type-check".into())),
        };
        inputs.push(std::mem::replace(&mut act, next));
    }
    match act {
        Activation::Vector(logits) if logits.len() == net.classes => Ok(Tape { inputs, logits }),
        _ => Err(Error::InvalidConfig("network must end in a dense head over the classes".into())),
    }
}

fn backward(
    net: &ToyNetwork,
    kernels: &[KernelTensor],
    tape: &Tape,
    grad_logits: Vec<f64>,
    conv: &mut [KernelTensor],
    dense: &mut [(Vec<f64>, Vec<f64>)],
) {
    let mut conv_index = kernels.len();
    let mut dense_index = dense.len();
    let mut grad = Activation::Vector(grad_logits);
    for (layer, input) in net.layers.iter().zip(&tape.inputs).rev() {
        grad = match (layer, input, grad) {
            (ToyLayer::Dense(d), Activation::Vector(x), Activation::Vector(g)) => {
                dense_index -= 1;
                let (gw, gb) = &mut dense[dense_index];
                let mut gx = vec![0.0; d.inputs];
                for o in 0..d.outputs {
                    gb[o] += g[o];
                    for i in 0..d.inputs {
                        gw[o * d.inputs + i] += g[o] * x[i];
                        gx[i] += g[o] * d.weights[o * d.inputs + i];
                    }
                }
                Activation::Vector(gx)
            }
            (ToyLayer::GlobalAvgPool, Activation::Map(x), Activation::Vector(g)) => {
                let plane = x.rows() * x.cols();
                let data = g.iter().flat_map(|v| std::iter::repeat(v / plane as f64).take(plane)).collect();
                Activation::Map(FeatureTensor::from_vec(x.rows(), x.cols(), x.maps(), data).expect("same shape"))
            }
            (ToyLayer::Relu, Activation::Map(x), Activation::Map(mut g)) => {
                for (gv, xv) in g.as_mut_slice().iter_mut().zip(x.as_slice()) {
                    if *xv <= 0.0 {
                        *gv = 0.0;
                    }
                }
                Activation::Map(g)
            }
            (ToyLayer::Conv(c), Activation::Map(x), Activation::Map(g)) => {
                conv_index -= 1;
                let kernel = &kernels[conv_index];
                let s = kernel.shape();
                let (rows, cols) = (x.rows(), x.cols());
                let plane = rows * cols;
                let (xs, gs) = (x.as_slice(), g.as_slice());
                let mut gx = vec![0.0; plane * s.in_maps];
                let gk = &mut conv[conv_index];
                for (k, l, iota, lambda, w) in taps(kernel, c.latent.mask()) {
                    let mut gw = 0.0;
                    let (xk, gl) = (&xs[k * plane..], &gs[l * plane..]);
                    let gxk = &mut gx[k * plane..];
                    for_each_pair(rows, cols, &c.cfg, iota, lambda, |o, i| {
                        gw += gl[o] * xk[i];
                        gxk[i] += w * gl[o];
                    });
                    let off = s.offset(iota, lambda, k, l).expect("in range");
                    gk.as_mut_slice()[off] += gw;
                }
                Activation::Map(FeatureTensor::from_vec(rows, cols, s.in_maps, gx).expect("same shape"))
            }
            _ => unreachable!("forward already checked the layer order"),
        };
    }
}
