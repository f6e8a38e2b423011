//! Fully-connected network with tanh hidden layers and a linear output.
//!
//! Parameters live in one flat vector so optimizers, checkpoints and
//! finite-difference checks can treat the network as a plain `&[f64]`.
//! Layer `l` stores its `out x in` weight matrix row-major, then its bias.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

/// Post-activation outputs of every layer, input first.
#[derive(Debug, Clone)]
pub struct Activations {
    layers: Vec<Vec<f64>>,
}

impl Activations {
    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("at least the input layer")
    }
}

fn offsets_for(sizes: &[usize]) -> Vec<usize> {
    let mut offs = Vec::with_capacity(sizes.len());
    let mut at = 0;
    for w in sizes.windows(2) {
        offs.push(at);
        at += w[0] * w[1] + w[1];
    }
    offs.push(at);
    offs
}

/// Orthogonal matrix of shape `rows x cols`, scaled by `gain`.
fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    let (big, small) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    // `small` orthonormal vectors of length `big` via modified Gram-Schmidt
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(small);
    while basis.len() < small {
        let mut v: Vec<f64> = (0..big).map(|_| StandardNormal.sample(rng)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    let mut w = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            w[r * cols + c] = gain
                * if rows >= cols {
                    basis[c][r]
                } else {
                    basis[r][c]
                };
        }
    }
    w
}

impl Mlp {
    /// Orthogonally initialised network; hidden layers use `hidden_gain`,
    /// the output layer `output_gain`, biases start at zero.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], hidden_gain: f64, output_gain: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an mlp needs input and output sizes");
        let offsets = offsets_for(sizes);
        let mut params = vec![0.0; *offsets.last().unwrap()];
        let last = sizes.len() - 2;
        for l in 0..sizes.len() - 1 {
            let gain = if l == last { output_gain } else { hidden_gain };
            let w = orthogonal(sizes[l + 1], sizes[l], gain, rng);
            params[offsets[l]..offsets[l] + w.len()].copy_from_slice(&w);
        }
        Self {
            sizes: sizes.to_vec(),
            params,
            offsets,
        }
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Config("an mlp needs input and output sizes".into()));
        }
        let offsets = offsets_for(sizes);
        if params.len() != *offsets.last().unwrap() {
            return Err(Error::LengthMismatch(params.len(), *offsets.last().unwrap()));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
            offsets,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, input: &[f64]) -> Activations {
        assert_eq!(input.len(), self.input_dim(), "input dimension");
        let depth = self.sizes.len() - 1;
        let mut layers = Vec::with_capacity(depth + 1);
        layers.push(input.to_vec());
        for l in 0..depth {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[self.offsets[l]..self.offsets[l] + fan_in * fan_out];
            let b = &self.params[self.offsets[l] + fan_in * fan_out..self.offsets[l + 1]];
            let x = &layers[l];
            let mut out: Vec<f64> = (0..fan_out)
                .map(|o| {
                    let row = &w[o * fan_in..(o + 1) * fan_in];
                    b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            if l + 1 < depth {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            layers.push(out);
        }
        Activations { layers }
    }

    /// Accumulates `dLoss/dparams` into `grad` given `dLoss/doutput`.
    pub fn backward(&self, acts: &Activations, d_output: &[f64], grad: &mut [f64]) {
        assert_eq!(grad.len(), self.params.len());
        let depth = self.sizes.len() - 1;
        let mut delta = d_output.to_vec();
        for l in (0..depth).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let x = &acts.layers[l];
            let w_off = self.offsets[l];
            let b_off = w_off + fan_in * fan_out;
            for o in 0..fan_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                grad[b_off + o] += d;
                let g = &mut grad[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                g.iter_mut().zip(x).for_each(|(gi, xi)| *gi += d * xi);
            }
            if l == 0 {
                break;
            }
            let w = &self.params[w_off..b_off];
            let mut prev = vec![0.0; fan_in];
            for o in 0..fan_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &w[o * fan_in..(o + 1) * fan_in];
                prev.iter_mut().zip(row).for_each(|(p, wi)| *p += d * wi);
            }
            // previous layer is a tanh hidden layer
            for (p, a) in prev.iter_mut().zip(x) {
                *p *= 1.0 - a * a;
            }
            delta = prev;
        }
    }

    pub fn to_text(&self) -> String {
        let vals: Vec<String> = self.params.iter().map(|x| x.to_string()).collect();
        vals.join(" ")
    }
}
