//! Fully connected ReLU network with a softmax output and cross-entropy loss.

use rand::Rng;
use uepmm::Matrix;

use crate::error::{Error, Result};

/// Layer widths of the reference classifier: 784 -> 100 -> 200 -> 10.
pub const LAYER_SIZES: [usize; 4] = [784, 100, 200, 10];

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `in x out`, so a layer computes `x W + b` on row-major batches.
    pub weights: Matrix<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet {
    pub layers: Vec<Dense>,
}

/// Cached activations of one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    /// Input of every layer (`inputs[0]` is the batch itself).
    pub inputs: Vec<Matrix<f64>>,
    /// Pre-activation `x W + b` of every layer.
    pub pre: Vec<Matrix<f64>>,
    /// Softmax of the last pre-activation.
    pub probs: Matrix<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix<f64>>,
    pub bias: Vec<Vec<f64>>,
}

/// How backpropagation evaluates its two matrix products per layer.
pub trait GradProducts {
    /// `act_t x delta`: `(in x batch)(batch x out)`.
    fn weight_grad(&mut self, layer: usize, act_t: &Matrix<f64>, delta: &Matrix<f64>) -> Result<Matrix<f64>>;
    /// `delta x w_t`: `(batch x out)(out x in)`.
    fn input_grad(&mut self, layer: usize, delta: &Matrix<f64>, w_t: &Matrix<f64>) -> Result<Matrix<f64>>;
}

/// Plain full-precision products.
pub struct ExactProducts;

impl GradProducts for ExactProducts {
    fn weight_grad(&mut self, _: usize, act_t: &Matrix<f64>, delta: &Matrix<f64>) -> Result<Matrix<f64>> {
        Ok(act_t.matmul(delta))
    }

    fn input_grad(&mut self, _: usize, delta: &Matrix<f64>, w_t: &Matrix<f64>) -> Result<Matrix<f64>> {
        Ok(delta.matmul(w_t))
    }
}

fn softmax_rows(z: &Matrix<f64>) -> Matrix<f64> {
    let mut out = z.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

impl DenseNet {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Dense {
                    weights: Matrix::from_fn(w[0], w[1], |_, _| rng.random_range(-limit..limit)),
                    bias: vec![0.0; w[1]],
                }
            })
            .collect();
        DenseNet { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| Dense {
                weights: Matrix::zeros(w[0], w[1]),
                bias: vec![0.0; w[1]],
            })
            .collect();
        DenseNet { layers }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].weights.rows()];
        s.extend(self.layers.iter().map(|l| l.weights.cols()));
        s
    }

    pub fn forward(&self, x: &Matrix<f64>) -> Result<Forward> {
        if x.cols() != self.layers[0].weights.rows() {
            return Err(Error::Shape(format!(
                "batch has {} features, network expects {}",
                x.cols(),
                self.layers[0].weights.rows()
            )));
        }
        let mut inputs = vec![x.clone()];
        let mut pre = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = inputs[i].matmul(&layer.weights);
            for r in 0..z.rows() {
                for (v, b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            if i + 1 < self.layers.len() {
                let mut a = z.clone();
                a.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
                inputs.push(a);
            }
            pre.push(z);
        }
        let probs = softmax_rows(pre.last().expect("at least one layer"));
        Ok(Forward { inputs, pre, probs })
    }

    /// Gradients of the mean cross-entropy over the batch.
    pub fn backward(&self, fwd: &Forward, labels: &[u8], products: &mut dyn GradProducts) -> Result<Gradients> {
        let batch = fwd.probs.rows();
        if labels.len() != batch {
            return Err(Error::Shape(format!("{} labels for a batch of {batch}", labels.len())));
        }
        let mut delta = fwd.probs.clone();
        for (i, &y) in labels.iter().enumerate() {
            delta[(i, y as usize)] -= 1.0;
        }
        delta.scale(1.0 / batch as f64);

        let n = self.layers.len();
        let mut weights = vec![Matrix::zeros(0, 0); n];
        let mut bias = vec![Vec::new(); n];
        for l in (0..n).rev() {
            weights[l] = products.weight_grad(l, &fwd.inputs[l].transpose(), &delta)?;
            let mut db = vec![0.0; delta.cols()];
            for r in 0..delta.rows() {
                for (acc, v) in db.iter_mut().zip(delta.row(r)) {
                    *acc += v;
                }
            }
            bias[l] = db;
            if l > 0 {
                let mut prev = products.input_grad(l, &delta, &self.layers[l].weights.transpose())?;
                for (g, z) in prev.as_mut_slice().iter_mut().zip(fwd.pre[l - 1].as_slice()) {
                    if *z <= 0.0 {
                        *g = 0.0;
                    }
                }
                delta = prev;
            }
        }
        Ok(Gradients { weights, bias })
    }

    pub fn apply(&mut self, grads: &Gradients, learning_rate: f64) {
        for (layer, (gw, gb)) in self.layers.iter_mut().zip(grads.weights.iter().zip(&grads.bias)) {
            layer.weights.add_scaled(-learning_rate, gw);
            for (b, g) in layer.bias.iter_mut().zip(gb) {
                *b -= learning_rate * g;
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    /// Mutable access to parameter `index` in layer order, weights before
    /// biases within a layer.
    pub fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for layer in &mut self.layers {
            let nw = layer.weights.as_slice().len();
            if index < nw {
                return &mut layer.weights.as_mut_slice()[index];
            }
            index -= nw;
            if index < layer.bias.len() {
                return &mut layer.bias[index];
            }
            index -= layer.bias.len();
        }
        panic!("parameter index out of range")
    }

    pub fn accuracy(&self, x: &Matrix<f64>, labels: &[u8]) -> Result<f64> {
        Ok(self.forward(x)?.accuracy(labels))
    }
}

impl Gradients {
    /// Same flat order as [`DenseNet::param_mut`].
    pub fn param(&self, mut index: usize) -> f64 {
        for (w, b) in self.weights.iter().zip(&self.bias) {
            let nw = w.as_slice().len();
            if index < nw {
                return w.as_slice()[index];
            }
            index -= nw;
            if index < b.len() {
                return b[index];
            }
            index -= b.len();
        }
        panic!("parameter index out of range")
    }
}

impl Forward {
    pub fn loss(&self, labels: &[u8]) -> f64 {
        let n = labels.len() as f64;
        labels
            .iter()
            .enumerate()
            .map(|(i, &y)| -self.probs[(i, y as usize)].max(1e-300).ln())
            .sum::<f64>()
            / n
    }

    pub fn predictions(&self) -> Vec<usize> {
        (0..self.probs.rows())
            .map(|i| {
                let row = self.probs.row(i);
                // first maximum wins ties
                (0..row.len()).fold(0, |best, j| if row[j] > row[best] { j } else { best })
            })
            .collect()
    }

    pub fn accuracy(&self, labels: &[u8]) -> f64 {
        let hits = self
            .predictions()
            .iter()
            .zip(labels)
            .filter(|(p, &y)| **p == y as usize)
            .count();
        hits as f64 / labels.len() as f64
    }
}
