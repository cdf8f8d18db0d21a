use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ops::{self, ConvShape};
use super::Tensor;

/// Weight initialization for a convolution (biases always start at zero).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Init {
    /// Zero-mean normal with the given standard deviation.
    Normal(f64),
    /// He/Kaiming normal for (leaky) ReLU fan-in.
    He,
    /// `scale` on the centre tap of matching in/out channels, zero elsewhere.
    Identity(f64),
    Zeros,
}

/// Declarative layer description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        init: Init,
    },
    InstanceNorm,
    Relu,
    LeakyRelu(f64),
    Tanh,
    Upsample2,
    /// Output is the sum of every branch applied to the input; an empty
    /// branch is the identity.
    Sum(Vec<Vec<LayerSpec>>),
}

impl LayerSpec {
    pub fn conv(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, pad: usize, init: Init) -> Self {
        LayerSpec::Conv { in_ch, out_ch, kernel, stride, pad, init }
    }
}

const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
enum Layer {
    Conv { shape: ConvShape, offset: usize },
    InstanceNorm,
    LeakyRelu(f64),
    Tanh,
    Upsample2,
    Sum(Vec<Vec<Layer>>),
}

/// Activations recorded by [`Network::forward_train`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    entries: Vec<TapeEntry>,
}

#[derive(Debug, Clone)]
enum TapeEntry {
    Input(Tensor),
    Norm { xhat: Tensor, inv_std: Vec<f64> },
    Output(Tensor),
    Shape,
    Sum(Vec<Tape>),
}

/// A feed-forward network with its parameters in one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    pub params: Vec<f64>,
}

fn resolve(specs: &[LayerSpec], offset: &mut usize, inits: &mut Vec<(usize, ConvShape, Init)>) -> Vec<Layer> {
    specs
        .iter()
        .map(|s| match s {
            LayerSpec::Conv { in_ch, out_ch, kernel, stride, pad, init } => {
                let shape = ConvShape {
                    in_ch: *in_ch,
                    out_ch: *out_ch,
                    kernel: *kernel,
                    stride: *stride,
                    pad: *pad,
                };
                let layer = Layer::Conv { shape, offset: *offset };
                inits.push((*offset, shape, *init));
                *offset += shape.param_len();
                layer
            }
            LayerSpec::InstanceNorm => Layer::InstanceNorm,
            LayerSpec::Relu => Layer::LeakyRelu(0.0),
            LayerSpec::LeakyRelu(a) => Layer::LeakyRelu(*a),
            LayerSpec::Tanh => Layer::Tanh,
            LayerSpec::Upsample2 => Layer::Upsample2,
            LayerSpec::Sum(branches) => {
                Layer::Sum(branches.iter().map(|b| resolve(b, offset, inits)).collect())
            }
        })
        .collect()
}

impl Network {
    /// Builds the network and draws initial parameters from `rng`.
    pub fn new<R: Rng + ?Sized>(specs: &[LayerSpec], rng: &mut R) -> Self {
        let mut offset = 0;
        let mut inits = Vec::new();
        let layers = resolve(specs, &mut offset, &mut inits);
        let mut params = vec![0.0; offset];
        for (off, shape, init) in inits {
            let weights = &mut params[off..off + shape.weight_len()];
            match init {
                Init::Normal(std) => {
                    let d = Normal::new(0.0, std).expect("valid std");
                    weights.iter_mut().for_each(|v| *v = d.sample(rng));
                }
                Init::He => {
                    let fan_in = (shape.in_ch * shape.kernel * shape.kernel) as f64;
                    let d = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("valid std");
                    weights.iter_mut().for_each(|v| *v = d.sample(rng));
                }
                Init::Identity(scale) => {
                    let k = shape.kernel;
                    for c in 0..shape.in_ch.min(shape.out_ch) {
                        let idx = ((c * shape.in_ch + c) * k + k / 2) * k + k / 2;
                        weights[idx] = scale;
                    }
                }
                Init::Zeros => {}
            }
        }
        Self { layers, params }
    }

    /// Builds the architecture around existing parameters; `None` when the
    /// count does not match.
    pub fn from_params(specs: &[LayerSpec], params: Vec<f64>) -> Option<Self> {
        let mut offset = 0;
        let layers = resolve(specs, &mut offset, &mut Vec::new());
        (offset == params.len()).then_some(Self { layers, params })
    }

    /// Same architecture with externally supplied parameters.
    pub fn with_params(&self, params: Vec<f64>) -> Self {
        assert_eq!(params.len(), self.params.len(), "parameter count mismatch");
        Self { layers: self.layers.clone(), params }
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Inference pass.
    pub fn forward(&self, x: &Tensor) -> Tensor {
        run(&self.layers, &self.params, x.clone(), None)
    }

    /// Forward pass that records what the backward pass needs.
    pub fn forward_train(&self, x: &Tensor) -> (Tensor, Tape) {
        let mut tape = Tape { entries: Vec::with_capacity(self.layers.len()) };
        let y = run(&self.layers, &self.params, x.clone(), Some(&mut tape));
        (y, tape)
    }

    /// Back-propagates `dy`, accumulating into `grads` (same layout as
    /// `params`), and returns the gradient with respect to the input.
    pub fn backward(&self, tape: &Tape, dy: Tensor, grads: &mut [f64]) -> Tensor {
        assert_eq!(grads.len(), self.params.len(), "gradient buffer size");
        back(&self.layers, &self.params, tape, dy, grads)
    }

    /// Output shape `(c, h, w)` for a `(c, h, w)` input.
    pub fn output_shape(&self, c: usize, h: usize, w: usize) -> (usize, usize, usize) {
        shape_walk(&self.layers, (c, h, w), &mut 0)
    }

    /// Convolution operations of one forward pass on a `(c, h, w)` input.
    pub fn conv_flops(&self, c: usize, h: usize, w: usize) -> u64 {
        let mut flops = 0;
        shape_walk(&self.layers, (c, h, w), &mut flops);
        flops
    }

    /// Number of convolution layers (including those inside branches).
    pub fn conv_count(&self) -> usize {
        fn count(layers: &[Layer]) -> usize {
            layers
                .iter()
                .map(|l| match l {
                    Layer::Conv { .. } => 1,
                    Layer::Sum(b) => b.iter().map(|x| count(x)).sum(),
                    _ => 0,
                })
                .sum()
        }
        count(&self.layers)
    }
}

fn shape_walk(layers: &[Layer], mut s: (usize, usize, usize), flops: &mut u64) -> (usize, usize, usize) {
    for l in layers {
        s = match l {
            Layer::Conv { shape, .. } => {
                *flops += shape.flops(s.1, s.2);
                let (h, w) = shape.out_hw(s.1, s.2);
                (shape.out_ch, h, w)
            }
            Layer::Upsample2 => (s.0, s.1 * 2, s.2 * 2),
            Layer::Sum(branches) => {
                let mut out = s;
                for b in branches {
                    out = shape_walk(b, s, flops);
                }
                out
            }
            _ => s,
        };
    }
    s
}

fn run(layers: &[Layer], params: &[f64], mut x: Tensor, mut tape: Option<&mut Tape>) -> Tensor {
    for l in layers {
        let (y, entry) = match l {
            Layer::Conv { shape, offset } => {
                let y = ops::conv_forward(shape, &params[*offset..*offset + shape.param_len()], &x);
                (y, tape.is_some().then_some(TapeEntry::Input(x)))
            }
            Layer::InstanceNorm => {
                let (y, inv_std) = ops::instance_norm_forward(&x, NORM_EPS);
                let e = tape.is_some().then(|| TapeEntry::Norm { xhat: y.clone(), inv_std });
                (y, e)
            }
            Layer::LeakyRelu(a) => {
                let y = ops::leaky_relu_forward(&x, *a);
                (y, tape.is_some().then_some(TapeEntry::Input(x)))
            }
            Layer::Tanh => {
                let y = ops::tanh_forward(&x);
                let e = tape.is_some().then(|| TapeEntry::Output(y.clone()));
                (y, e)
            }
            Layer::Upsample2 => (ops::upsample2_forward(&x), tape.is_some().then_some(TapeEntry::Shape)),
            Layer::Sum(branches) => {
                let mut acc: Option<Tensor> = None;
                let mut tapes = Vec::new();
                for b in branches {
                    let out = match tape.as_ref() {
                        Some(_) => {
                            let mut t = Tape { entries: Vec::new() };
                            let o = run(b, params, x.clone(), Some(&mut t));
                            tapes.push(t);
                            o
                        }
                        None => run(b, params, x.clone(), None),
                    };
                    match acc.as_mut() {
                        Some(a) => a.add_assign(&out),
                        None => acc = Some(out),
                    }
                }
                (acc.unwrap_or(x), tape.is_some().then_some(TapeEntry::Sum(tapes)))
            }
        };
        if let (Some(t), Some(e)) = (tape.as_deref_mut(), entry) {
            t.entries.push(e);
        }
        x = y;
    }
    x
}

fn back(layers: &[Layer], params: &[f64], tape: &Tape, mut dy: Tensor, grads: &mut [f64]) -> Tensor {
    assert_eq!(layers.len(), tape.entries.len(), "tape does not match network");
    for (l, e) in layers.iter().zip(&tape.entries).rev() {
        dy = match (l, e) {
            (Layer::Conv { shape, offset }, TapeEntry::Input(x)) => {
                let range = *offset..*offset + shape.param_len();
                ops::conv_backward(shape, &params[range.clone()], x, &dy, &mut grads[range])
            }
            (Layer::InstanceNorm, TapeEntry::Norm { xhat, inv_std }) => {
                ops::instance_norm_backward(xhat, inv_std, &dy)
            }
            (Layer::LeakyRelu(a), TapeEntry::Input(x)) => ops::leaky_relu_backward(x, *a, &dy),
            (Layer::Tanh, TapeEntry::Output(y)) => ops::tanh_backward(y, &dy),
            (Layer::Upsample2, TapeEntry::Shape) => ops::upsample2_backward(&dy),
            (Layer::Sum(branches), TapeEntry::Sum(tapes)) => {
                let mut acc: Option<Tensor> = None;
                for (b, t) in branches.iter().zip(tapes) {
                    let g = back(b, params, t, dy.clone(), grads);
                    match acc.as_mut() {
                        Some(a) => a.add_assign(&g),
                        None => acc = Some(g),
                    }
                }
                acc.unwrap_or(dy)
            }
            _ => unreachable!("tape entry does not match layer"),
        };
    }
    dy
}
