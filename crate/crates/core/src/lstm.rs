//! Single-layer forward LSTM with analytic backpropagation through time.
//!
//! The encoder consumes a short sequence of k-dimensional inputs and exposes
//! the final hidden state. Gate preactivations are `W_ih x_t + W_hh h_{t-1} +
//! b` with the gate order (input, forget, cell, output) packed row-wise into
//! the `4k x k` weight matrices. Biases start at zero and weights uniform in
//! `[-1/sqrt(k), 1/sqrt(k)]`, so an all-zero input sequence provably keeps the
//! hidden state at zero.

use rand::Rng;

use crate::linalg::{matvec, matvec_transpose_acc, outer_acc};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell<T> {
    pub k: usize,
    /// `4k x k`, row-major.
    pub w_ih: Vec<T>,
    /// `4k x k`, row-major.
    pub w_hh: Vec<T>,
    /// `4k`.
    pub bias: Vec<T>,
}

/// Per-step activations retained for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmTrace<T> {
    pub steps: usize,
    k: usize,
    xs: Vec<T>,      // steps x k
    h_prev: Vec<T>,  // steps x k
    c_prev: Vec<T>,  // steps x k
    gates: Vec<T>,   // steps x 4k, post-activation
    tanh_c: Vec<T>,  // steps x k
}

/// Parameter gradients produced by one backward pass.
#[derive(Debug, Clone)]
pub struct LstmGrads<T> {
    pub w_ih: Vec<T>,
    pub w_hh: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> LstmGrads<T> {
    pub fn zeros(k: usize) -> Self {
        LstmGrads {
            w_ih: vec![T::zero(); 4 * k * k],
            w_hh: vec![T::zero(); 4 * k * k],
            bias: vec![T::zero(); 4 * k],
        }
    }

    pub fn add(&mut self, other: &LstmGrads<T>) {
        for (d, s) in self.w_ih.iter_mut().zip(&other.w_ih) {
            *d = *d + *s;
        }
        for (d, s) in self.w_hh.iter_mut().zip(&other.w_hh) {
            *d = *d + *s;
        }
        for (d, s) in self.bias.iter_mut().zip(&other.bias) {
            *d = *d + *s;
        }
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Scalar> LstmCell<T> {
    pub fn init(k: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (k as f64).sqrt();
        let mut w = |n: usize| -> Vec<T> {
            (0..n)
                .map(|_| T::from_f64_lossy(rng.random_range(-bound..bound)))
                .collect()
        };
        LstmCell {
            k,
            w_ih: w(4 * k * k),
            w_hh: w(4 * k * k),
            bias: vec![T::zero(); 4 * k],
        }
    }

    /// Run the sequence and return the last hidden state. `inputs` is
    /// `steps x k`, flattened; at least one step is required.
    pub fn forward(&self, inputs: &[T]) -> Vec<T> {
        self.run(inputs, None)
    }

    /// Like [`LstmCell::forward`] but records activations for backward.
    pub fn forward_traced(&self, inputs: &[T]) -> (Vec<T>, LstmTrace<T>) {
        let steps = inputs.len() / self.k;
        let mut trace = LstmTrace {
            steps,
            k: self.k,
            xs: inputs.to_vec(),
            h_prev: Vec::with_capacity(steps * self.k),
            c_prev: Vec::with_capacity(steps * self.k),
            gates: Vec::with_capacity(steps * 4 * self.k),
            tanh_c: Vec::with_capacity(steps * self.k),
        };
        let h = self.run(inputs, Some(&mut trace));
        (h, trace)
    }

    fn run(&self, inputs: &[T], mut trace: Option<&mut LstmTrace<T>>) -> Vec<T> {
        let k = self.k;
        assert!(!inputs.is_empty() && inputs.len() % k == 0, "inputs must be steps x k");
        let steps = inputs.len() / k;
        let mut h = vec![T::zero(); k];
        let mut c = vec![T::zero(); k];
        let mut pre = vec![T::zero(); 4 * k];
        let mut pre_h = vec![T::zero(); 4 * k];
        for t in 0..steps {
            let x = &inputs[t * k..(t + 1) * k];
            matvec(&self.w_ih, 4 * k, k, x, &mut pre);
            matvec(&self.w_hh, 4 * k, k, &h, &mut pre_h);
            // Activate in place: (input, forget, output) gates are logistic,
            // the cell candidate block is tanh.
            for j in 0..4 * k {
                let z = pre[j] + pre_h[j] + self.bias[j];
                pre[j] = if (2 * k..3 * k).contains(&j) {
                    z.tanh()
                } else {
                    sigmoid(z)
                };
            }
            if let Some(tr) = trace.as_deref_mut() {
                tr.h_prev.extend_from_slice(&h);
                tr.c_prev.extend_from_slice(&c);
                tr.gates.extend_from_slice(&pre);
            }
            for j in 0..k {
                c[j] = pre[k + j] * c[j] + pre[j] * pre[2 * k + j];
                let tc = c[j].tanh();
                h[j] = pre[3 * k + j] * tc;
                if let Some(tr) = trace.as_deref_mut() {
                    tr.tanh_c.push(tc);
                }
            }
        }
        h
    }

    /// Backpropagate `d_h_last` through the recorded sequence. Returns the
    /// parameter gradients and the gradient of every step input
    /// (`steps x k`, flattened).
    pub fn backward(&self, trace: &LstmTrace<T>, d_h_last: &[T]) -> (LstmGrads<T>, Vec<T>) {
        let k = self.k;
        debug_assert_eq!(trace.k, k);
        let steps = trace.steps;
        let mut grads = LstmGrads::zeros(k);
        let mut d_xs = vec![T::zero(); steps * k];
        let mut dh = d_h_last.to_vec();
        let mut dc = vec![T::zero(); k];
        let mut d_pre = vec![T::zero(); 4 * k];
        for t in (0..steps).rev() {
            let gates = &trace.gates[t * 4 * k..(t + 1) * 4 * k];
            let (i_g, rest) = gates.split_at(k);
            let (f_g, rest) = rest.split_at(k);
            let (g_g, o_g) = rest.split_at(k);
            let tanh_c = &trace.tanh_c[t * k..(t + 1) * k];
            let c_prev = &trace.c_prev[t * k..(t + 1) * k];
            let h_prev = &trace.h_prev[t * k..(t + 1) * k];
            let x = &trace.xs[t * k..(t + 1) * k];

            for j in 0..k {
                // dh flows into c through o * tanh(c).
                let dct = dc[j] + dh[j] * o_g[j] * (T::one() - tanh_c[j] * tanh_c[j]);
                let d_o = dh[j] * tanh_c[j];
                let d_i = dct * g_g[j];
                let d_f = dct * c_prev[j];
                let d_g = dct * i_g[j];
                d_pre[j] = d_i * i_g[j] * (T::one() - i_g[j]);
                d_pre[k + j] = d_f * f_g[j] * (T::one() - f_g[j]);
                d_pre[2 * k + j] = d_g * (T::one() - g_g[j] * g_g[j]);
                d_pre[3 * k + j] = d_o * o_g[j] * (T::one() - o_g[j]);
                dc[j] = dct * f_g[j];
            }

            outer_acc(&mut grads.w_ih, 4 * k, k, &d_pre, x);
            outer_acc(&mut grads.w_hh, 4 * k, k, &d_pre, h_prev);
            for j in 0..4 * k {
                grads.bias[j] = grads.bias[j] + d_pre[j];
            }
            matvec_transpose_acc(&self.w_ih, 4 * k, k, &d_pre, &mut d_xs[t * k..(t + 1) * k]);
            for v in dh.iter_mut() {
                *v = T::zero();
            }
            matvec_transpose_acc(&self.w_hh, 4 * k, k, &d_pre, &mut dh);
        }
        (grads, d_xs)
    }
}
