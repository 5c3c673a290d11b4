//! Gaussian-masked self-attention.
//!
//! `G[i,j] = 1 − exp(−(i−j)²/σ²)` multiplies the logits elementwise, so a
//! slot's affinity to its temporal neighbours is suppressed. The diagonal
//! logit is exactly 0 (not −∞): every row still keeps some self-weight.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Mask `G` for a length-`t` window.
pub fn gaussian_mask(t: usize, sigma: f64) -> Array2<f64> {
    let s2 = sigma * sigma;
    Array2::from_shape_fn((t, t), |(i, j)| {
        let r = i as f64 - j as f64;
        -(-r * r / s2).exp_m1()
    })
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    pub logits: Array2<f64>,
    pub mask: Array2<f64>,
    pub probs: Array2<f64>,
    pub sigma: f64,
}

#[derive(Debug, Clone)]
pub struct AttentionGrads {
    pub dq: Array2<f64>,
    pub dk: Array2<f64>,
    pub dv: Array2<f64>,
    /// Gradient with respect to `ρ = log σ`.
    pub d_log_sigma: f64,
}

fn check_inputs(q: ArrayView2<f64>, k: ArrayView2<f64>, v: ArrayView2<f64>, sigma: f64) -> Result<()> {
    if q.dim() != k.dim() || q.nrows() != v.nrows() {
        return Err(Error::shape(
            format!("q {:?} = k, v with {} rows", q.dim(), q.nrows()),
            format!("k {:?}, v {:?}", k.dim(), v.dim()),
        ));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidInput(format!("mask scale must be > 0, got {sigma}")));
    }
    if q.iter().chain(k.iter()).chain(v.iter()).any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput("attention inputs"));
    }
    Ok(())
}

pub fn anomaly_attention_cached(
    q: ArrayView2<f64>,
    k: ArrayView2<f64>,
    v: ArrayView2<f64>,
    sigma: f64,
) -> Result<(Array2<f64>, AttentionCache)> {
    check_inputs(q, k, v, sigma)?;
    let logits = q.dot(&k.t());
    let mask = gaussian_mask(q.nrows(), sigma);
    let mut probs = &logits * &mask;
    softmax_rows(&mut probs);
    let out = probs.dot(&v);
    Ok((
        out,
        AttentionCache {
            logits,
            mask,
            probs,
            sigma,
        },
    ))
}

/// `row-softmax((q·kᵀ) ⊙ G) · v`.
pub fn anomaly_attention(
    q: ArrayView2<f64>,
    k: ArrayView2<f64>,
    v: ArrayView2<f64>,
    sigma: f64,
) -> Result<Array2<f64>> {
    anomaly_attention_cached(q, k, v, sigma).map(|(o, _)| o)
}

pub fn anomaly_attention_backward(
    q: ArrayView2<f64>,
    k: ArrayView2<f64>,
    v: ArrayView2<f64>,
    cache: &AttentionCache,
    d_out: ArrayView2<f64>,
) -> AttentionGrads {
    let p = &cache.probs;
    let dv = p.t().dot(&d_out);
    let dp = d_out.dot(&v.t());
    let row_dot = (p * &dp).sum_axis(Axis(1)).insert_axis(Axis(1));
    let dz = p * &(&dp - &row_dot);
    let da = &dz * &cache.mask;

    let s2 = cache.sigma * cache.sigma;
    let mut d_log_sigma = 0.0;
    for ((i, j), &g) in dz.indexed_iter() {
        let r2 = (i as f64 - j as f64).powi(2);
        if r2 > 0.0 {
            let dmask = -(-r2 / s2).exp() * 2.0 * r2 / s2;
            d_log_sigma += g * cache.logits[[i, j]] * dmask;
        }
    }
    AttentionGrads {
        dq: da.dot(&k),
        dk: da.t().dot(&q),
        dv,
        d_log_sigma,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut impl Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn mask_values() {
        let g = gaussian_mask(2, 1.0);
        assert_eq!(g[[0, 0]], 0.0);
        assert!((g[[0, 1]] - (1.0 - (-1f64).exp())).abs() < 1e-15);
        assert!((g[[0, 1]] - 0.63212).abs() < 1e-5);
    }

    #[test]
    fn wide_mask_gives_uniform_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (q, k, v) = (rand_mat(&mut rng, 4, 3), rand_mat(&mut rng, 4, 3), rand_mat(&mut rng, 4, 2));
        let (_, c) = anomaly_attention_cached(q.view(), k.view(), v.view(), 1e8).unwrap();
        assert!(c.probs.iter().all(|p| (p - 0.25).abs() < 1e-9));
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = Array2::<f64>::zeros((3, 2));
        let b = Array2::<f64>::zeros((4, 2));
        assert!(anomaly_attention(a.view(), b.view(), a.view(), 1.0).is_err());
        assert!(anomaly_attention(a.view(), a.view(), a.view(), 0.0).is_err());
        let mut n = a.clone();
        n[[0, 0]] = f64::NAN;
        assert!(matches!(
            anomaly_attention(n.view(), a.view(), a.view(), 1.0),
            Err(Error::NonFiniteInput(_))
        ));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let t = rng.random_range(2..=6);
            let d = rng.random_range(1..=4);
            let q = rand_mat(&mut rng, t, d);
            let k = rand_mat(&mut rng, t, d);
            let v = rand_mat(&mut rng, t, d);
            let w = rand_mat(&mut rng, t, d);
            let rho: f64 = rng.random_range(-0.5..1.5);
            let f = |q: &Array2<f64>, k: &Array2<f64>, v: &Array2<f64>, rho: f64| {
                (anomaly_attention(q.view(), k.view(), v.view(), rho.exp()).unwrap() * &w).sum()
            };
            let (_, cache) = anomaly_attention_cached(q.view(), k.view(), v.view(), rho.exp()).unwrap();
            let g = anomaly_attention_backward(q.view(), k.view(), v.view(), &cache, w.view());
            let h = 1e-6;
            let close = |fd: f64, an: f64| (fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()).max(1e-4);
            for (idx, which) in [(0, &g.dq), (1, &g.dk), (2, &g.dv)] {
                for i in 0..t {
                    for j in 0..d {
                        let mut m = [q.clone(), k.clone(), v.clone()];
                        m[idx][[i, j]] += h;
                        let up = f(&m[0], &m[1], &m[2], rho);
                        m[idx][[i, j]] -= 2.0 * h;
                        let dn = f(&m[0], &m[1], &m[2], rho);
                        let fd = (up - dn) / (2.0 * h);
                        assert!(close(fd, which[[i, j]]), "input {idx} [{i},{j}]: {fd} vs {}", which[[i, j]]);
                    }
                }
            }
            let fd = (f(&q, &k, &v, rho + h) - f(&q, &k, &v, rho - h)) / (2.0 * h);
            assert!(close(fd, g.d_log_sigma), "rho: {fd} vs {}", g.d_log_sigma);
        }
    }

    proptest! {
        #[test]
        fn rows_sum_to_one_and_mask_is_symmetric(
            t in 1usize..8,
            sigma in 0.1f64..20.0,
            seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = rand_mat(&mut rng, t, 3) * 4.0;
            let k = rand_mat(&mut rng, t, 3) * 4.0;
            let v = rand_mat(&mut rng, t, 2);
            let (_, c) = anomaly_attention_cached(q.view(), k.view(), v.view(), sigma).unwrap();
            for row in c.probs.rows() {
                prop_assert!((row.sum() - 1.0).abs() < 1e-9);
            }
            for i in 0..t {
                prop_assert_eq!(c.mask[[i, i]], 0.0);
                for j in 0..t {
                    prop_assert_eq!(c.mask[[i, j]], c.mask[[j, i]]);
                    // 1 − e^(−x) rounds to exactly 1.0 once x exceeds ~37.
                    let x = (i as f64 - j as f64).powi(2) / (sigma * sigma);
                    if x < 36.0 {
                        prop_assert!((0.0..1.0).contains(&c.mask[[i, j]]));
                    } else {
                        prop_assert!((0.0..=1.0).contains(&c.mask[[i, j]]));
                    }
                }
            }
        }
    }
}
