use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{HarnessError, Result};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub hidden: usize,
    pub layers: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

/// Fully connected ReLU network with a linear output unit.
///
/// Inputs and target are standardized with training statistics. Parameters
/// live in one flat vector: for each layer, the `out × in` weight block
/// (row-major) followed by `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    x_mean: Vec<f64>,
    x_scale: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
}

impl Mlp {
    /// He-uniform initialization from `seed`; identity standardization.
    pub fn init(inputs: usize, hidden: usize, layers: usize, seed: u64) -> Self {
        let mut sizes = vec![inputs];
        sizes.extend(std::iter::repeat_n(hidden, layers));
        sizes.push(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / fan_in.max(1) as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Mlp {
            sizes,
            params,
            x_mean: vec![0.0; inputs],
            x_scale: vec![1.0; inputs],
            y_mean: 0.0,
            y_scale: 1.0,
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Raw network output for an already standardized input.
    fn forward(&self, x: &[f64], acts: &mut Vec<Vec<f64>>) -> f64 {
        acts.clear();
        acts.push(x.to_vec());
        let mut off = 0;
        let last = self.sizes.len() - 2;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[off..off + n_in * n_out];
            let bias = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let input = &acts[l];
            let out: Vec<f64> = (0..n_out)
                .map(|o| {
                    let z = bias[o]
                        + weights[o * n_in..(o + 1) * n_in]
                            .iter()
                            .zip(input)
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                    if l < last {
                        z.max(0.0)
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(out);
            off += n_in * n_out + n_out;
        }
        acts.last().unwrap()[0]
    }

    /// Mean squared error and its gradient with respect to the flat parameter
    /// vector, over standardized rows `x` (row-major) and targets `y`.
    pub fn loss_and_gradient(&self, x: &[f64], y: &[f64]) -> (f64, Vec<f64>) {
        let inputs = self.sizes[0];
        let n = y.len();
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let mut acts = Vec::new();
        let layer_count = self.sizes.len() - 1;
        let offsets: Vec<usize> = self
            .sizes
            .windows(2)
            .scan(0, |off, w| {
                let cur = *off;
                *off += w[0] * w[1] + w[1];
                Some(cur)
            })
            .collect();
        for i in 0..n {
            let out = self.forward(&x[i * inputs..(i + 1) * inputs], &mut acts);
            let err = out - y[i];
            loss += err * err;
            let mut delta = vec![2.0 * err / n as f64];
            for l in (0..layer_count).rev() {
                let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
                let off = offsets[l];
                let input = &acts[l];
                for o in 0..n_out {
                    for k in 0..n_in {
                        grad[off + o * n_in + k] += delta[o] * input[k];
                    }
                    grad[off + n_in * n_out + o] += delta[o];
                }
                if l > 0 {
                    let weights = &self.params[off..off + n_in * n_out];
                    delta = (0..n_in)
                        .map(|k| {
                            if input[k] <= 0.0 {
                                0.0
                            } else {
                                (0..n_out).map(|o| delta[o] * weights[o * n_in + k]).sum()
                            }
                        })
                        .collect();
                }
            }
        }
        (loss / n as f64, grad)
    }

    /// Mini-batch Adam with a seeded shuffle each epoch and a fixed epoch count.
    pub fn fit(matrix: &FeatureMatrix, params: &MlpParams, seed: u64) -> Result<Self> {
        let n = matrix.n_rows();
        let p = matrix.n_cols();
        let mut net = Mlp::init(p, params.hidden, params.layers, seed);

        for j in 0..p {
            let col = (0..n).map(|i| matrix.row(i)[j]);
            let mean = col.clone().sum::<f64>() / n as f64;
            let var = col.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            net.x_mean[j] = mean;
            net.x_scale[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        net.y_mean = matrix.targets.iter().sum::<f64>() / n as f64;
        let y_var = matrix.targets.iter().map(|v| (v - net.y_mean).powi(2)).sum::<f64>() / n as f64;
        net.y_scale = if y_var > 0.0 { y_var.sqrt() } else { 1.0 };

        let mut xs = vec![0.0; n * p];
        for i in 0..n {
            for (j, v) in matrix.row(i).iter().enumerate() {
                xs[i * p + j] = (v - net.x_mean[j]) / net.x_scale[j];
            }
        }
        let ys: Vec<f64> = matrix.targets.iter().map(|v| (v - net.y_mean) / net.y_scale).collect();

        let (beta1, beta2, eps) = (0.9f64, 0.999f64, 1e-8);
        let mut m = vec![0.0; net.params.len()];
        let mut v = vec![0.0; net.params.len()];
        let mut t = 0i32;
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let mut bx = Vec::with_capacity(params.batch_size * p);
        let mut by = Vec::with_capacity(params.batch_size);
        for epoch in 0..params.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for batch in order.chunks(params.batch_size) {
                bx.clear();
                by.clear();
                for &i in batch {
                    bx.extend_from_slice(&xs[i * p..(i + 1) * p]);
                    by.push(ys[i]);
                }
                let (loss, grad) = net.loss_and_gradient(&bx, &by);
                if !loss.is_finite() {
                    return Err(HarnessError::NonFiniteLoss { epoch });
                }
                epoch_loss += loss * batch.len() as f64;
                t += 1;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for k in 0..grad.len() {
                    m[k] = beta1 * m[k] + (1.0 - beta1) * grad[k];
                    v[k] = beta2 * v[k] + (1.0 - beta2) * grad[k] * grad[k];
                    net.params[k] -= params.learning_rate * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
                }
            }
            if !epoch_loss.is_finite() || net.params.iter().any(|w| !w.is_finite()) {
                return Err(HarnessError::NonFiniteLoss { epoch });
            }
        }
        Ok(net)
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let x: Vec<f64> = row
            .iter()
            .zip(&self.x_mean)
            .zip(&self.x_scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect();
        let mut acts = Vec::new();
        self.forward(&x, &mut acts) * self.y_scale + self.y_mean
    }
}
