//! The one-filter CNN and the two-layer FCN, with closed-form gradients of
//! the mean binary cross-entropy.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{batch_rows, Predictor};
use crate::error::{domain, Result};
use crate::masking::PatchGeometry;
use crate::rng::{stream, tag};

pub const DEFAULT_HIDDEN: usize = 32;

/// A model with a flat parameter vector and an analytic loss gradient.
pub trait Trainable: Predictor + Clone {
    fn params(&self) -> Vec<f64>;

    fn set_params(&mut self, params: &[f64]);

    /// Mean binary cross-entropy over the batch and its gradient with
    /// respect to [`Trainable::params`].
    fn loss_and_grad(&self, rows: &[f64], labels: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// Mean binary cross-entropy without the gradient.
    fn loss(&self, rows: &[f64], labels: &[f64]) -> Result<f64> {
        Ok(self.loss_and_grad(rows, labels)?.0)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-log S(z)` if `y = 1`, `-log(1 - S(z))` if `y = 0`, computed from the logit.
fn bce_from_logit(z: f64, y: f64) -> f64 {
    let softplus = if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    };
    softplus - y * z
}

fn check_labels(rows: usize, labels: &[f64]) -> Result<()> {
    if labels.len() != rows {
        return Err(domain(format!("{rows} rows but {} labels", labels.len())));
    }
    Ok(())
}

fn uniform_init(rng: &mut impl Rng, len: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..len).map(|_| rng.random_range(-bound..=bound)).collect()
}

/// `f(X) = S(b + sum_{i,j} <W, X_ij>)`: one `d x d` filter with stride `d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cnn {
    pub geometry: PatchGeometry,
    pub weight: Vec<f64>,
    pub bias: f64,
}

pub fn make_cnn(geometry: PatchGeometry, seed: u64) -> Cnn {
    let fan_in = geometry.d * geometry.d;
    let mut rng = stream(seed, &[tag::INIT]);
    let weight = uniform_init(&mut rng, fan_in, fan_in);
    let bias = uniform_init(&mut rng, 1, fan_in)[0];
    Cnn {
        geometry,
        weight,
        bias,
    }
}

impl Cnn {
    pub fn from_weights(geometry: PatchGeometry, weight: Vec<f64>, bias: f64) -> Result<Self> {
        if weight.len() != geometry.d * geometry.d {
            return Err(domain("filter must have d * d entries"));
        }
        Ok(Cnn {
            geometry,
            weight,
            bias,
        })
    }

    /// Sum of all patches of one image, a `d x d` array.
    fn patch_sum(&self, x: &[f64], out: &mut [f64]) {
        let g = self.geometry;
        let w = g.width();
        out.fill(0.0);
        for row in 0..g.height() {
            let u = row % g.d;
            let line = &x[row * w..(row + 1) * w];
            for (col, &v) in line.iter().enumerate() {
                out[u * g.d + col % g.d] += v;
            }
        }
    }

    fn logit(&self, x: &[f64], scratch: &mut [f64]) -> f64 {
        self.patch_sum(x, scratch);
        self.bias
            + self
                .weight
                .iter()
                .zip(scratch.iter())
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }
}

impl Predictor for Cnn {
    fn dim(&self) -> usize {
        self.geometry.dim()
    }

    fn predict_batch(&self, rows: &[f64]) -> Result<Vec<f64>> {
        batch_rows(self.dim(), rows)?;
        let mut scratch = vec![0.0; self.weight.len()];
        Ok(rows
            .chunks_exact(self.dim())
            .map(|x| sigmoid(self.logit(x, &mut scratch)))
            .collect())
    }
}

impl Trainable for Cnn {
    fn params(&self) -> Vec<f64> {
        let mut p = self.weight.clone();
        p.push(self.bias);
        p
    }

    fn set_params(&mut self, params: &[f64]) {
        let k = self.weight.len();
        self.weight.copy_from_slice(&params[..k]);
        self.bias = params[k];
    }

    fn loss_and_grad(&self, rows: &[f64], labels: &[f64]) -> Result<(f64, Vec<f64>)> {
        let m = batch_rows(self.dim(), rows)?;
        check_labels(m, labels)?;
        let k = self.weight.len();
        let mut grad = vec![0.0; k + 1];
        let mut scratch = vec![0.0; k];
        let mut loss = 0.0;
        for (x, &y) in rows.chunks_exact(self.dim()).zip(labels) {
            let z = self.logit(x, &mut scratch);
            loss += bce_from_logit(z, y);
            let dz = sigmoid(z) - y;
            for (g, s) in grad[..k].iter_mut().zip(&scratch) {
                *g += dz * s;
            }
            grad[k] += dz;
        }
        let inv = 1.0 / m as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        Ok((loss * inv, grad))
    }
}

/// `f(x) = S(b1 + <W1, ReLU(b0 + W0 x)>)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fcn {
    pub input: usize,
    pub hidden: usize,
    /// `hidden x input`, row-major.
    pub w0: Vec<f64>,
    pub b0: Vec<f64>,
    pub w1: Vec<f64>,
    pub b1: f64,
}

pub fn make_fcn(input: usize, hidden: usize, seed: u64) -> Result<Fcn> {
    if input == 0 || hidden == 0 {
        return Err(domain("FCN needs input and hidden widths >= 1"));
    }
    let mut rng = stream(seed, &[tag::INIT]);
    Ok(Fcn {
        input,
        hidden,
        w0: uniform_init(&mut rng, hidden * input, input),
        b0: uniform_init(&mut rng, hidden, input),
        w1: uniform_init(&mut rng, hidden, hidden),
        b1: uniform_init(&mut rng, 1, hidden)[0],
    })
}

impl Fcn {
    /// Fills the hidden pre-activations and returns the output logit.
    fn forward(&self, x: &[f64], pre: &mut [f64]) -> f64 {
        let mut z = self.b1;
        for (h, p) in pre.iter_mut().enumerate() {
            let row = &self.w0[h * self.input..(h + 1) * self.input];
            *p = self.b0[h] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            z += self.w1[h] * p.max(0.0);
        }
        z
    }
}

impl Predictor for Fcn {
    fn dim(&self) -> usize {
        self.input
    }

    fn predict_batch(&self, rows: &[f64]) -> Result<Vec<f64>> {
        batch_rows(self.input, rows)?;
        let mut pre = vec![0.0; self.hidden];
        Ok(rows
            .chunks_exact(self.input)
            .map(|x| sigmoid(self.forward(x, &mut pre)))
            .collect())
    }
}

impl Trainable for Fcn {
    fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.w0.len() + 2 * self.hidden + 1);
        p.extend_from_slice(&self.w0);
        p.extend_from_slice(&self.b0);
        p.extend_from_slice(&self.w1);
        p.push(self.b1);
        p
    }

    fn set_params(&mut self, params: &[f64]) {
        let (a, b) = (self.w0.len(), self.hidden);
        self.w0.copy_from_slice(&params[..a]);
        self.b0.copy_from_slice(&params[a..a + b]);
        self.w1.copy_from_slice(&params[a + b..a + 2 * b]);
        self.b1 = params[a + 2 * b];
    }

    fn loss_and_grad(&self, rows: &[f64], labels: &[f64]) -> Result<(f64, Vec<f64>)> {
        let m = batch_rows(self.input, rows)?;
        check_labels(m, labels)?;
        let (a, h) = (self.w0.len(), self.hidden);
        let mut grad = vec![0.0; a + 2 * h + 1];
        let mut pre = vec![0.0; h];
        let mut loss = 0.0;
        for (x, &y) in rows.chunks_exact(self.input).zip(labels) {
            let z = self.forward(x, &mut pre);
            loss += bce_from_logit(z, y);
            let dz = sigmoid(z) - y;
            for (k, &p) in pre.iter().enumerate() {
                if p <= 0.0 {
                    continue;
                }
                grad[a + h + k] += dz * p;
                let dp = dz * self.w1[k];
                grad[a + k] += dp;
                let gw = &mut grad[k * self.input..(k + 1) * self.input];
                for (g, xi) in gw.iter_mut().zip(x) {
                    *g += dp * xi;
                }
            }
            grad[a + 2 * h] += dz;
        }
        let inv = 1.0 / m as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        Ok((loss * inv, grad))
    }
}
