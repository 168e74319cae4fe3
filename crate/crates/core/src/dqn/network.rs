//! Fully connected Q-network with rectifier hidden layers and a linear head.
//!
//! Matrices are laid out `fan_in x fan_out`, so a batch of row vectors goes
//! through a layer as `x W + b`. Gradients are computed by hand; the dense
//! products go through `ndarray`.

use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis, NdFloat, Zip};
use rand::Rng;

use crate::error::NetworkError;

/// Element types the network can be built on.
pub trait Scalar: NdFloat + FromStr {}
impl Scalar for f32 {}
impl Scalar for f64 {}

const FORMAT_TAG: &str = "QNET";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    pub weights: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Scalar> Dense<F> {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    /// Uniform in `+-sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weights = Array2::from_shape_fn((fan_in, fan_out), |_| {
            cast::<F>(rng.random_range(-limit..limit))
        });
        Self {
            weights,
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.ncols()
    }
}

pub(crate) fn cast<F: Scalar>(x: f64) -> F {
    <F as num_traits::NumCast>::from(x).expect("f64 converts to every Scalar")
}

/// Per-layer parameter gradients, same shapes as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub layers: Vec<Dense<F>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn norm(&self) -> F {
        self.layers
            .iter()
            .map(|l| {
                l.weights.iter().map(|&w| w * w).fold(F::zero(), |a, b| a + b)
                    + l.bias.iter().map(|&b| b * b).fold(F::zero(), |a, b| a + b)
            })
            .fold(F::zero(), |a, b| a + b)
            .sqrt()
    }

    pub fn scale(&mut self, factor: F) {
        for l in &mut self.layers {
            l.weights.mapv_inplace(|w| w * factor);
            l.bias.mapv_inplace(|b| b * factor);
        }
    }

    pub fn flatten(&self) -> Vec<F> {
        flatten_layers(&self.layers)
    }
}

fn flatten_layers<F: Scalar>(layers: &[Dense<F>]) -> Vec<F> {
    layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
        .collect()
}

/// Activations kept from a forward pass for backpropagation.
struct Trace<F> {
    /// Input to each layer; `inputs[0]` is the batch itself.
    inputs: Vec<Array2<F>>,
    output: Array2<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork<F = f32> {
    layers: Vec<Dense<F>>,
}

impl<F: Scalar> QNetwork<F> {
    /// Glorot-initialized network with the given layer widths, input first.
    pub fn new<R: Rng>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least an input and an output width");
        let layers = sizes
            .windows(2)
            .map(|w| Dense::glorot(w[0], w[1], rng))
            .collect();
        Self { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "need at least an input and an output width");
        Self {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn from_layers(layers: Vec<Dense<F>>) -> Result<Self, NetworkError> {
        if layers.is_empty() {
            return Err(NetworkError::Format("network has no layers".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(NetworkError::DimensionMismatch {
                    expected: pair[0].fan_out(),
                    actual: pair[1].fan_in(),
                });
            }
        }
        for l in &layers {
            if l.bias.len() != l.fan_out() {
                return Err(NetworkError::DimensionMismatch {
                    expected: l.fan_out(),
                    actual: l.bias.len(),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense<F>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<F>] {
        &mut self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Dense::fan_out))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn flatten(&self) -> Vec<F> {
        flatten_layers(&self.layers)
    }

    /// Mutable access to the `index`-th parameter in flattened order.
    pub fn parameter_mut(&mut self, mut index: usize) -> &mut F {
        for l in &mut self.layers {
            let (w, b) = (l.weights.len(), l.bias.len());
            if index < w {
                let cols = l.fan_out();
                return &mut l.weights[[index / cols, index % cols]];
            }
            index -= w;
            if index < b {
                return &mut l.bias[index];
            }
            index -= b;
        }
        panic!("parameter index out of range");
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn check_input(&self, width: usize) -> Result<(), NetworkError> {
        if width != self.input_dim() {
            return Err(NetworkError::DimensionMismatch {
                expected: self.input_dim(),
                actual: width,
            });
        }
        Ok(())
    }

    fn trace(&self, batch: ArrayView2<F>) -> Trace<F> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut current = batch.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = current.dot(&layer.weights);
            z += &layer.bias;
            if i < last {
                z.mapv_inplace(|v| v.max(F::zero()));
            }
            inputs.push(current);
            current = z;
        }
        Trace {
            inputs,
            output: current,
        }
    }

    /// Forward pass over a batch of row vectors.
    pub fn forward(&self, batch: ArrayView2<F>) -> Result<Array2<F>, NetworkError> {
        self.check_input(batch.ncols())?;
        Ok(self.trace(batch).output)
    }

    /// Action values for a single feature vector.
    pub fn q_values(&self, features: &[F]) -> Result<Vec<F>, NetworkError> {
        self.check_input(features.len())?;
        let row = ArrayView2::from_shape((1, features.len()), features)
            .expect("a slice is a contiguous row");
        Ok(self.trace(row).output.row(0).to_vec())
    }

    /// Backpropagates `grad_output` (dL/d output, one row per sample).
    fn backward(&self, trace: &Trace<F>, grad_output: Array2<F>) -> Gradients<F> {
        let mut delta = grad_output;
        let mut grads: Vec<Dense<F>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.inputs[i];
            let weights = input.t().dot(&delta);
            let bias = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut upstream = delta.dot(&layer.weights.t());
                // inputs[i] is the rectified output of layer i - 1; its
                // derivative is 1 where the activation is positive.
                Zip::from(&mut upstream)
                    .and(input)
                    .for_each(|g, &a| {
                        if a <= F::zero() {
                            *g = F::zero();
                        }
                    });
                delta = upstream;
            }
            grads.push(Dense { weights, bias });
        }
        grads.reverse();
        Gradients { layers: grads }
    }

    /// Mean squared error between `Q(s_i, a_i)` and `targets[i]`, and its
    /// gradient. Only the selected action's output receives gradient; the
    /// targets are constants.
    pub fn selected_action_loss(
        &self,
        states: ArrayView2<F>,
        actions: &[usize],
        targets: &[F],
    ) -> Result<(F, Gradients<F>), NetworkError> {
        self.check_input(states.ncols())?;
        let n = states.nrows();
        assert_eq!(actions.len(), n, "one action per state");
        assert_eq!(targets.len(), n, "one target per state");
        let trace = self.trace(states);
        let scale = cast::<F>(1.0 / n as f64);
        let mut grad_out = Array2::zeros(trace.output.raw_dim());
        let mut loss = F::zero();
        for (i, (&a, &z)) in actions.iter().zip(targets).enumerate() {
            let err = trace.output[[i, a]] - z;
            loss = loss + err * err;
            grad_out[[i, a]] = cast::<F>(2.0) * err * scale;
        }
        Ok((loss * scale, self.backward(&trace, grad_out)))
    }

    /// Plain gradient descent step.
    pub fn apply(&mut self, grads: &Gradients<F>, learning_rate: F) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            layer.weights.scaled_add(-learning_rate, &g.weights);
            layer.bias.scaled_add(-learning_rate, &g.bias);
        }
    }

    /// Versioned text format: a tag line, the layer widths, then one line
    /// of row-major weights and one line of biases per layer.
    pub fn to_text(&self) -> String {
        let mut out = format!("{FORMAT_TAG} {FORMAT_VERSION}\nLAYERS");
        for s in self.layer_sizes() {
            write!(out, " {s}").unwrap();
        }
        out.push('\n');
        for l in &self.layers {
            let join = |it: &mut dyn Iterator<Item = &F>| {
                it.map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
            };
            writeln!(out, "W {}", join(&mut l.weights.iter())).unwrap();
            writeln!(out, "B {}", join(&mut l.bias.iter())).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, NetworkError> {
        let bad = |m: &str| NetworkError::Format(m.to_string());
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty input"))?;
        let version = header
            .strip_prefix(FORMAT_TAG)
            .map(str::trim)
            .ok_or_else(|| bad("missing QNET tag"))?;
        if version != FORMAT_VERSION.to_string() {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let sizes: Vec<usize> = lines
            .next()
            .and_then(|l| l.strip_prefix("LAYERS"))
            .ok_or_else(|| bad("missing LAYERS line"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad("bad layer width")))
            .collect::<Result<_, _>>()?;
        if sizes.len() < 2 {
            return Err(bad("need at least two layer widths"));
        }
        let mut parse_row = |prefix: &str, expected: usize| -> Result<Vec<F>, NetworkError> {
            let line = lines
                .next()
                .and_then(|l| l.strip_prefix(prefix))
                .ok_or_else(|| bad(&format!("missing {prefix}line")))?;
            let values: Vec<F> = line
                .split_whitespace()
                .map(|t| t.parse::<F>().map_err(|_| bad("bad parameter value")))
                .collect::<Result<_, _>>()?;
            if values.len() != expected {
                return Err(NetworkError::DimensionMismatch {
                    expected,
                    actual: values.len(),
                });
            }
            Ok(values)
        };
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for w in sizes.windows(2) {
            let weights = parse_row("W ", w[0] * w[1])?;
            let bias = parse_row("B ", w[1])?;
            layers.push(Dense {
                weights: Array2::from_shape_vec((w[0], w[1]), weights)
                    .expect("length checked above"),
                bias: Array1::from(bias),
            });
        }
        Self::from_layers(layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_output_bias() {
        let mut net = QNetwork::<f64>::zeros(&[3, 4, 5]);
        net.layers_mut()[1].bias = array![1.0, -2.0, 0.5, 0.0, 3.0];
        let q = net.q_values(&[0.3, 0.9, 1.0]).unwrap();
        assert_eq!(q, vec![1.0, -2.0, 0.5, 0.0, 3.0]);
    }

    #[test]
    fn identical_rows_identical_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = QNetwork::<f32>::new(&[3, 16, 16, 5], &mut rng);
        let batch = Array2::from_shape_fn((4, 3), |(_, j)| [0.2f32, 0.7, 1.0][j]);
        let out = net.forward(batch.view()).unwrap();
        for r in 1..4 {
            assert_eq!(out.row(r), out.row(0));
        }
    }

    #[test]
    fn hand_built_single_hidden_unit() {
        // x = (1, 2, 3); hidden h = relu(0.1 + 0.2*2 + 0.3*3 - 0.5) = relu(0.9) = 0.9;
        // outputs q_k = 2h + k for k = 0..5 with the hidden bias -0.5.
        let hidden = Dense {
            weights: array![[0.1], [0.2], [0.3]],
            bias: array![-0.5],
        };
        let head = Dense {
            weights: array![[2.0, 2.0, 2.0, 2.0, 2.0]],
            bias: array![0.0, 1.0, 2.0, 3.0, 4.0],
        };
        let net = QNetwork::from_layers(vec![hidden, head]).unwrap();
        let q = net.q_values(&[1.0, 2.0, 3.0]).unwrap();
        for (k, v) in q.iter().enumerate() {
            assert_relative_eq!(*v, 1.8 + k as f64, epsilon = 1e-12);
        }
        // A negative pre-activation is clipped: outputs fall back to the biases.
        let q = net.q_values(&[-1.0, -2.0, -3.0]).unwrap();
        assert_eq!(q, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let net = QNetwork::<f64>::zeros(&[3, 8, 5]);
        assert_eq!(
            net.q_values(&[1.0, 2.0]),
            Err(NetworkError::DimensionMismatch {
                expected: 3,
                actual: 2
            })
        );
    }

    #[test]
    fn single_sample_update_by_hand() {
        // One hidden unit, one output considered. x = (1, 0, 0):
        // h = relu(w1 * 1) with w1 = 0.5 -> h = 0.5; q0 = v * h with v = 2 -> q0 = 1.
        // Target z = 3: loss = (1 - 3)^2 = 4, dL/dq0 = -4.
        // dL/dv = -4 * h = -2; dL/dw1 = -4 * v * 1 = -8; dL/db_out0 = -4; dL/db_h = -8.
        let hidden = Dense {
            weights: array![[0.5], [0.0], [0.0]],
            bias: array![0.0],
        };
        let head = Dense {
            weights: array![[2.0, 0.0, 0.0, 0.0, 0.0]],
            bias: array![0.0, 0.0, 0.0, 0.0, 0.0],
        };
        let mut net = QNetwork::from_layers(vec![hidden, head]).unwrap();
        let states = array![[1.0, 0.0, 0.0]];
        let (loss, grads) = net.selected_action_loss(states.view(), &[0], &[3.0]).unwrap();
        assert_relative_eq!(loss, 4.0);
        assert_relative_eq!(grads.layers[1].weights[[0, 0]], -2.0);
        assert_relative_eq!(grads.layers[1].bias[0], -4.0);
        assert_relative_eq!(grads.layers[0].weights[[0, 0]], -8.0);
        assert_relative_eq!(grads.layers[0].bias[0], -8.0);
        assert_eq!(grads.layers[1].bias[1], 0.0);

        net.apply(&grads, 0.01);
        assert_relative_eq!(net.layers()[1].weights[[0, 0]], 2.02);
        assert_relative_eq!(net.layers()[0].weights[[0, 0]], 0.58);
        assert_relative_eq!(net.layers()[0].bias[0], 0.08);
        assert_relative_eq!(net.layers()[1].bias[0], 0.04);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let net = QNetwork::<f32>::new(&[3, 7, 6, 5], &mut rng);
        let back = QNetwork::<f32>::from_text(&net.to_text()).unwrap();
        assert_eq!(back, net);
        assert!(QNetwork::<f32>::from_text("QNET 2\nLAYERS 3 5\n").is_err());
        let truncated: String = net.to_text().lines().take(3).collect::<Vec<_>>().join("\n");
        assert!(QNetwork::<f32>::from_text(&truncated).is_err());
    }

    #[test]
    fn parameter_indexing_matches_flatten() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = QNetwork::<f64>::new(&[3, 4, 5], &mut rng);
        let flat = net.flatten();
        assert_eq!(flat.len(), net.parameter_count());
        for (i, v) in flat.iter().enumerate() {
            assert_eq!(*net.parameter_mut(i), *v);
        }
    }
}
