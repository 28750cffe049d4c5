//! Dense feed-forward networks with hand-written backpropagation.
//!
//! Inputs are batches laid out `(examples, features)`. Layer weights are
//! stored `(inputs, outputs)` so a layer computes `Y = X W + b`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    /// `max(x, 0.2 x)`; keeps a gradient on the negative side.
    LeakyRelu,
    Sigmoid,
    Identity,
}

const LEAKY_SLOPE: f64 = 0.2;

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Layer widths from input to output plus one activation per layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl MlpSpec {
    /// Hidden layers use `hidden_act`, the last layer `output_act`.
    pub fn new(layer_sizes: Vec<usize>, hidden_act: Activation, output_act: Activation) -> Self {
        let layers = layer_sizes.len().saturating_sub(1);
        let mut activations = vec![hidden_act; layers];
        if let Some(last) = activations.last_mut() {
            *last = output_act;
        }
        Self {
            layer_sizes,
            activations,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Config(
                "an MLP needs at least input and output sizes".into(),
            ));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::Config("MLP layer sizes must be positive".into()));
        }
        if self.activations.len() != self.layer_sizes.len() - 1 {
            return Err(Error::Config(format!(
                "{} layer sizes need {} activations, got {}",
                self.layer_sizes.len(),
                self.layer_sizes.len() - 1,
                self.activations.len()
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Dense>,
    /// Bumped on every parameter change; caches from older versions are stale.
    #[serde(skip)]
    version: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.layers == other.layers
    }
}

/// Intermediate values from a forward pass, needed by `backward`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    // inputs[l] feeds layer l; pre[l] is its affine output
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    /// Affine output of the last layer (logits for a sigmoid head).
    pub fn output_pre_activation(&self) -> &Array2<f64> {
        self.pre.last().expect("at least one layer")
    }
}

/// Which quantity an upstream gradient is taken with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientOf {
    Output,
    /// Pre-activation of the final layer; skips the final activation's
    /// derivative (used for the fused sigmoid + cross-entropy gradient).
    OutputPreActivation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
    pub input: Array2<f64>,
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }
}

impl Mlp {
    /// Uniform Glorot initialization: `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`,
    /// weights drawn row-major layer by layer, biases zero.
    pub fn init(spec: MlpSpec, rng: &mut SplitMix64) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_sizes
            .windows(2)
            .zip(&spec.activations)
            .map(|(w, &activation)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Dense {
                    weights: Array2::from_shape_simple_fn((fan_in, fan_out), || rng.uniform(-a, a)),
                    bias: Array1::zeros(fan_out),
                    activation,
                }
            })
            .collect();
        Ok(Self {
            spec,
            layers,
            version: 0,
        })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        let mut sizes = Vec::new();
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weights.ncols() {
                return Err(Error::Dimension {
                    expected: l.weights.ncols(),
                    got: l.bias.len(),
                });
            }
            if i == 0 {
                sizes.push(l.weights.nrows());
            } else if l.weights.nrows() != sizes[i] {
                return Err(Error::Dimension {
                    expected: sizes[i],
                    got: l.weights.nrows(),
                });
            }
            sizes.push(l.weights.ncols());
        }
        let spec = MlpSpec {
            layer_sizes: sizes,
            activations: layers.iter().map(|l| l.activation).collect(),
        };
        spec.validate()?;
        Ok(Self {
            spec,
            layers,
            version: 0,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    fn check_input(&self, x: ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    /// Output only, no cache.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let mut h = x.to_owned();
        for layer in &self.layers {
            let mut z = h.dot(&layer.weights);
            z += &layer.bias;
            z.mapv_inplace(|v| layer.activation.apply(v));
            h = z;
        }
        Ok(h)
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<ForwardCache> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for layer in &self.layers {
            let mut z = h.dot(&layer.weights);
            z += &layer.bias;
            let y = z.mapv(|v| layer.activation.apply(v));
            inputs.push(h);
            pre.push(z);
            h = y;
        }
        Ok(ForwardCache {
            version: self.version,
            inputs,
            pre,
            output: h,
        })
    }

    /// Gradients of a scalar loss with respect to every parameter and to the
    /// input, given the loss gradient `upstream` at the network output.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        upstream: ArrayView2<'_, f64>,
        of: GradientOf,
    ) -> Result<Gradients> {
        if cache.version != self.version || cache.inputs.len() != self.layers.len() {
            return Err(Error::StaleCache(format!(
                "cache from parameter version {} used with version {}",
                cache.version, self.version
            )));
        }
        if upstream.dim() != cache.output.dim() {
            return Err(Error::Dimension {
                expected: cache.output.len(),
                got: upstream.len(),
            });
        }
        let last = self.layers.len() - 1;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.to_owned();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let skip_act = l == last && of == GradientOf::OutputPreActivation;
            if !skip_act {
                let out = if l == last {
                    &cache.output
                } else {
                    &cache.inputs[l + 1]
                };
                ndarray::Zip::from(&mut delta)
                    .and(&cache.pre[l])
                    .and(out)
                    .for_each(|d, &x, &y| *d *= layer.activation.derivative(x, y));
            }
            let gw = cache.inputs[l].t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            let next = delta.dot(&layer.weights.t());
            grads.push(LayerGrad {
                weights: gw,
                bias: gb,
            });
            delta = next;
        }
        grads.reverse();
        Ok(Gradients {
            layers: grads,
            input: delta,
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    fn param_slot(&mut self, mut index: usize) -> &mut f64 {
        for layer in &mut self.layers {
            let nw = layer.weights.len();
            if index < nw {
                return layer
                    .weights
                    .as_slice_mut()
                    .expect("standard layout")
                    .get_mut(index)
                    .unwrap();
            }
            index -= nw;
            let nb = layer.bias.len();
            if index < nb {
                return &mut layer.bias[index];
            }
            index -= nb;
        }
        panic!("parameter index out of range")
    }

    /// Overwrites one parameter (flat order: per layer, weights row-major then bias).
    pub fn set_param(&mut self, index: usize, value: f64) {
        *self.param_slot(index) = value;
        self.version += 1;
    }

    /// Mutable access to every parameter array; counts as a parameter change.
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        self.version += 1;
        &mut self.layers
    }

    /// Clamps every weight and bias into `[-c, c]`.
    pub fn clip(&mut self, c: f64) {
        for layer in self.layers_mut() {
            layer.weights.mapv_inplace(|v| v.clamp(-c, c));
            layer.bias.mapv_inplace(|v| v.clamp(-c, c));
        }
    }

    pub fn max_abs_param(&self) -> f64 {
        self.flat_params().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn single(w: f64, b: f64, act: Activation) -> Mlp {
        Mlp::from_layers(vec![Dense {
            weights: array![[w]],
            bias: array![b],
            activation: act,
        }])
        .unwrap()
    }

    #[test]
    fn zero_weights_zero_output() {
        let mlp = Mlp::from_layers(vec![Dense {
            weights: Array2::zeros((3, 2)),
            bias: Array1::zeros(2),
            activation: Activation::Identity,
        }])
        .unwrap();
        let out = mlp.predict(array![[1.0, -2.0, 3.0]].view()).unwrap();
        assert_eq!(out, array![[0.0, 0.0]]);
    }

    #[test]
    fn affine_arithmetic() {
        let out = single(2.0, 1.0, Activation::Identity)
            .predict(array![[3.0]].view())
            .unwrap();
        assert_eq!(out[[0, 0]], 7.0);
    }

    #[test]
    fn sigmoid_at_zero() {
        let out = single(1.0, 0.0, Activation::Sigmoid)
            .predict(array![[0.0]].view())
            .unwrap();
        assert_eq!(out[[0, 0]], 0.5);
    }

    #[test]
    fn dimension_mismatch() {
        let mlp = single(1.0, 0.0, Activation::Identity);
        assert!(matches!(
            mlp.forward(array![[1.0, 2.0]].view()),
            Err(Error::Dimension {
                expected: 1,
                got: 2
            })
        ));
    }

    #[test]
    fn squared_loss_hand_gradient() {
        // L = (w x - 0)^2 at w = 1, x = 1: dL/dw = 2 w x^2 = 2
        let mlp = single(1.0, 0.0, Activation::Identity);
        let cache = mlp.forward(array![[1.0]].view()).unwrap();
        let upstream = cache.output().mapv(|y| 2.0 * y);
        let g = mlp
            .backward(&cache, upstream.view(), GradientOf::Output)
            .unwrap();
        assert_eq!(g.layers[0].weights[[0, 0]], 2.0);
        assert_eq!(g.layers[0].bias[0], 2.0);
    }

    #[test]
    fn zero_upstream_zero_gradients() {
        let mut rng = SplitMix64::new(1);
        let mlp = Mlp::init(
            MlpSpec::new(vec![4, 5, 3], Activation::Relu, Activation::Sigmoid),
            &mut rng,
        )
        .unwrap();
        let x = Array2::from_shape_fn((6, 4), |_| rng.uniform(-1.0, 1.0));
        let cache = mlp.forward(x.view()).unwrap();
        let g = mlp
            .backward(&cache, Array2::zeros((6, 3)).view(), GradientOf::Output)
            .unwrap();
        assert!(g.flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_cache_rejected() {
        let mut mlp = single(1.0, 0.0, Activation::Identity);
        let cache = mlp.forward(array![[1.0]].view()).unwrap();
        mlp.set_param(0, 3.0);
        assert!(matches!(
            mlp.backward(&cache, array![[1.0]].view(), GradientOf::Output),
            Err(Error::StaleCache(_))
        ));
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = SplitMix64::new(2);
        let mlp = Mlp::init(
            MlpSpec::new(vec![10, 6], Activation::Relu, Activation::Identity),
            &mut rng,
        )
        .unwrap();
        let a = (6.0f64 / 16.0).sqrt();
        assert!(mlp.layers()[0].weights.iter().all(|w| w.abs() <= a));
        assert!(mlp.layers()[0].bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn clip_bounds_everything() {
        let mut rng = SplitMix64::new(3);
        let mut mlp = Mlp::init(
            MlpSpec::new(vec![3, 8, 1], Activation::Relu, Activation::Identity),
            &mut rng,
        )
        .unwrap();
        mlp.clip(0.05);
        assert!(mlp.max_abs_param() <= 0.05);
    }

    #[test]
    fn bad_specs() {
        assert!(MlpSpec::new(vec![3], Activation::Relu, Activation::Relu)
            .validate()
            .is_err());
        let spec = MlpSpec {
            layer_sizes: vec![2, 2],
            activations: vec![],
        };
        assert!(spec.validate().is_err());
    }
}
