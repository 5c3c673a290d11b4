//! Monotone scalar map `M: ℝ → (0, 1)`.
//!
//! `M(s) = sigmoid(Σₖ softplus(αₖ)·tanh(softplus(ωₖ)·s + bₖ) + c)`.
//! Every hidden unit is non-decreasing in `s` and enters with a nonnegative
//! weight, so `M` preserves the ordering of its inputs.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{sigmoid, softplus, softplus_grad};

pub const DEFAULT_HIDDEN: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneMapping {
    alpha: Vec<f64>,
    omega: Vec<f64>,
    bias: Vec<f64>,
    c: f64,
}

/// Intermediate values of one forward pass, reused by the backward pass.
struct Trace {
    a: Vec<f64>,
    w: Vec<f64>,
    th: Vec<f64>,
    out: f64,
}

impl MonotoneMapping {
    pub fn new(hidden: usize, rng: &mut impl Rng) -> Self {
        let noise = Normal::new(0.0, 0.3).expect("valid normal");
        // Slopes spread over [~0.5, ~8] and centres over the unit interval.
        let alpha = (0..hidden).map(|_| -1.0 + noise.sample(rng)).collect();
        let omega = (0..hidden)
            .map(|k| (k as f64 / hidden.max(1) as f64) * 2.5 + noise.sample(rng))
            .collect::<Vec<f64>>();
        let bias = (0..hidden)
            .map(|k| -(k as f64 + 0.5) / hidden as f64 * 2.0 + noise.sample(rng))
            .collect();
        Self {
            alpha,
            omega,
            bias,
            c: -1.0,
        }
    }

    pub fn hidden(&self) -> usize {
        self.alpha.len()
    }

    pub fn n_params(&self) -> usize {
        3 * self.hidden() + 1
    }

    /// Parameters in the order `[α, ω, b, c]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        v.extend_from_slice(&self.alpha);
        v.extend_from_slice(&self.omega);
        v.extend_from_slice(&self.bias);
        v.push(self.c);
        v
    }

    pub fn from_flat(hidden: usize, flat: &[f64]) -> Result<Self> {
        if flat.len() != 3 * hidden + 1 {
            return Err(Error::shape(3 * hidden + 1, flat.len()));
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("mapping parameters"));
        }
        Ok(Self {
            alpha: flat[..hidden].to_vec(),
            omega: flat[hidden..2 * hidden].to_vec(),
            bias: flat[2 * hidden..3 * hidden].to_vec(),
            c: flat[3 * hidden],
        })
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        *self = Self::from_flat(self.hidden(), flat)?;
        Ok(())
    }

    fn trace(&self, s: f64) -> Trace {
        let k = self.hidden();
        let mut a = Vec::with_capacity(k);
        let mut w = Vec::with_capacity(k);
        let mut th = Vec::with_capacity(k);
        let mut z = self.c;
        for j in 0..k {
            let aj = softplus(self.alpha[j]);
            let wj = softplus(self.omega[j]);
            let t = (wj * s + self.bias[j]).tanh();
            z += aj * t;
            a.push(aj);
            w.push(wj);
            th.push(t);
        }
        Trace { a, w, th, out: sigmoid(z) }
    }

    pub fn apply(&self, s: f64) -> f64 {
        self.trace(s).out
    }

    pub fn apply_all(&self, s: &[f64]) -> Vec<f64> {
        s.iter().map(|&v| self.apply(v)).collect()
    }

    /// Adds `upstream · ∂M(s)/∂θ` into `grad` (flat layout) and returns `M(s)`.
    pub fn accumulate_grad(&self, s: f64, upstream: f64, grad: &mut [f64]) -> f64 {
        let k = self.hidden();
        debug_assert_eq!(grad.len(), self.n_params());
        let tr = self.trace(s);
        let dz = upstream * tr.out * (1.0 - tr.out);
        for j in 0..k {
            let dpre = dz * tr.a[j] * (1.0 - tr.th[j] * tr.th[j]);
            grad[j] += dz * tr.th[j] * softplus_grad(self.alpha[j]);
            grad[k + j] += dpre * s * softplus_grad(self.omega[j]);
            grad[2 * k + j] += dpre;
        }
        grad[3 * k] += dz;
        tr.out
    }

    /// `∂M/∂s`, always ≥ 0.
    pub fn slope(&self, s: f64) -> f64 {
        let tr = self.trace(s);
        let inner: f64 = (0..self.hidden())
            .map(|j| tr.a[j] * tr.w[j] * (1.0 - tr.th[j] * tr.th[j]))
            .sum();
        tr.out * (1.0 - tr.out) * inner
    }
}
