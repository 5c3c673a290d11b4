//! Two-layer fusion network `Ŝ = sigmoid(W2·leaky(W1·x + b1) + b2)` with
//! `x = concat(S, M(s), R)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{leaky_relu, leaky_relu_grad, sigmoid};

pub const DEFAULT_NET_HIDDEN: usize = 16;

/// Flat layout: `W1` (hidden × input, row-major), `b1`, `W2`, `b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalNet {
    input_dim: usize,
    hidden: usize,
    params: Vec<f64>,
}

fn n_params(input_dim: usize, hidden: usize) -> usize {
    hidden * input_dim + 2 * hidden + 1
}

impl ConditionalNet {
    /// `repr_dim` is `h`; the input has `2 + h` entries.
    pub fn new(repr_dim: usize, hidden: usize, rng: &mut impl Rng) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::InvalidInput("conditional net needs at least one hidden unit".into()));
        }
        let input_dim = repr_dim + 2;
        let mut params = vec![0.0; n_params(input_dim, hidden)];
        let a1 = (6.0 / (input_dim + hidden) as f64).sqrt();
        let a2 = (6.0 / (hidden + 1) as f64).sqrt();
        let w1 = hidden * input_dim;
        for p in &mut params[..w1] {
            *p = rng.random_range(-a1..a1);
        }
        for p in &mut params[w1 + hidden..w1 + 2 * hidden] {
            *p = rng.random_range(-a2..a2);
        }
        Ok(Self {
            input_dim,
            hidden,
            params,
        })
    }

    pub fn from_flat(repr_dim: usize, hidden: usize, params: Vec<f64>) -> Result<Self> {
        let input_dim = repr_dim + 2;
        let want = n_params(input_dim, hidden);
        if hidden == 0 || params.len() != want {
            return Err(Error::shape(format!("{want} parameters"), format!("{}", params.len())));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFiniteInput("conditional net parameters"));
        }
        Ok(Self {
            input_dim,
            hidden,
            params,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn repr_dim(&self) -> usize {
        self.input_dim - 2
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::shape(format!("{} inputs", self.input_dim), x.len()));
        }
        Ok(())
    }

    fn pre_activations(&self, x: &[f64]) -> Vec<f64> {
        let w1 = &self.params[..self.hidden * self.input_dim];
        let b1 = &self.params[self.hidden * self.input_dim..][..self.hidden];
        (0..self.hidden)
            .map(|k| {
                let row = &w1[k * self.input_dim..(k + 1) * self.input_dim];
                row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b1[k]
            })
            .collect()
    }

    fn head(&self) -> (&[f64], f64) {
        let off = self.hidden * self.input_dim + self.hidden;
        (&self.params[off..off + self.hidden], self.params[off + self.hidden])
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        let z = self.pre_activations(x);
        let (w2, b2) = self.head();
        let o = z.iter().zip(w2).map(|(z, w)| leaky_relu(*z) * w).sum::<f64>() + b2;
        Ok(sigmoid(o))
    }

    /// Adds `upstream · ∂Ŝ/∂params` into `grad` and returns `(Ŝ, ∂Ŝ/∂x · upstream)`.
    pub fn accumulate_grad(&self, x: &[f64], upstream: f64, grad: &mut [f64]) -> Result<(f64, Vec<f64>)> {
        self.check(x)?;
        if grad.len() != self.params.len() {
            return Err(Error::shape(format!("{} gradient entries", self.params.len()), grad.len()));
        }
        let (h, d) = (self.hidden, self.input_dim);
        let z = self.pre_activations(x);
        let (w2, b2) = self.head();
        let o = z.iter().zip(w2).map(|(z, w)| leaky_relu(*z) * w).sum::<f64>() + b2;
        let y = sigmoid(o);
        let dout = upstream * y * (1.0 - y);

        let w1 = &self.params[..h * d];
        let mut dx = vec![0.0; d];
        let off2 = h * d + h;
        for k in 0..h {
            grad[off2 + k] += dout * leaky_relu(z[k]);
            let dz = dout * w2[k] * leaky_relu_grad(z[k]);
            grad[h * d + k] += dz;
            for j in 0..d {
                grad[k * d + j] += dz * x[j];
                dx[j] += dz * w1[k * d + j];
            }
        }
        grad[off2 + h] += dout;
        Ok((y, dx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_params_give_half() {
        let net = ConditionalNet::from_flat(3, 4, vec![0.0; n_params(5, 4)]).unwrap();
        assert_eq!(net.forward(&[0.3, 0.9, 1.0, -2.0, 5.0]).unwrap(), 0.5);
    }

    #[test]
    fn shape_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = ConditionalNet::new(3, 4, &mut rng).unwrap();
        assert!(matches!(net.forward(&[0.0; 4]), Err(Error::ShapeMismatch { .. })));
        assert!(ConditionalNet::from_flat(3, 4, vec![0.0; 7]).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let h = rng.random_range(0..4);
            let hid = rng.random_range(1..6);
            let net = ConditionalNet::new(h, hid, &mut rng).unwrap();
            let x: Vec<f64> = (0..h + 2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut g = vec![0.0; net.n_params()];
            let (_, dx) = net.accumulate_grad(&x, 1.0, &mut g).unwrap();
            let eps = 1e-6;
            for i in 0..net.n_params() {
                let mut p = net.clone();
                p.params[i] += eps;
                let up = p.forward(&x).unwrap();
                p.params[i] -= 2.0 * eps;
                let dn = p.forward(&x).unwrap();
                let fd = (up - dn) / (2.0 * eps);
                assert!(crate::math::rel_err(g[i], fd) < 1e-4, "param {i}: {} vs {fd}", g[i]);
            }
            for j in 0..x.len() {
                let mut xp = x.clone();
                xp[j] += eps;
                let up = net.forward(&xp).unwrap();
                xp[j] -= 2.0 * eps;
                let dn = net.forward(&xp).unwrap();
                let fd = (up - dn) / (2.0 * eps);
                assert!(crate::math::rel_err(dx[j], fd) < 1e-4);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn output_inside_unit_interval(seed in 0u64..1000, x in proptest::collection::vec(-5.0f64..5.0, 4)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = ConditionalNet::new(2, 8, &mut rng).unwrap();
            let y = net.forward(&x).unwrap();
            proptest::prop_assert!(y > 0.0 && y < 1.0);
        }
    }
}
