use super::discrete::bin_index;
use super::half_gaussian::HalfGaussianFit;
use crate::error::{Error, Result};

pub const KL_EPS: f64 = 1e-9;

/// What the histogram is compared against.
#[derive(Debug, Clone, Copy)]
pub enum KlReference<'a> {
    /// Bin masses of the fitted density on `[0, 1]`, renormalized.
    Density(&'a HalfGaussianFit),
    /// Histogram of another sample.
    Samples(&'a [f64]),
}

/// Normalized, ε-smoothed histogram on `[0, 1]`.
pub fn histogram(v: &[f64], bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    for &x in v {
        h[bin_index(x, bins)] += 1.0;
    }
    smooth(h)
}

fn smooth(mut h: Vec<f64>) -> Vec<f64> {
    let total: f64 = h.iter().map(|v| v + KL_EPS).sum();
    for v in &mut h {
        *v = (*v + KL_EPS) / total;
    }
    h
}

fn density_masses(fit: &HalfGaussianFit, bins: usize) -> Vec<f64> {
    let w = 1.0 / bins as f64;
    let raw: Vec<f64> = (0..bins).map(|i| fit.mass(i as f64 * w, (i + 1) as f64 * w)).collect();
    let total: f64 = raw.iter().sum();
    smooth(raw.into_iter().map(|m| m / total).collect())
}

/// `KL(hist(a) ‖ reference)` over `bins` equal bins on `[0, 1]`.
pub fn kl_histogram(a: &[f64], reference: KlReference<'_>, bins: usize) -> Result<f64> {
    if bins < 2 {
        return Err(Error::InvalidInput("KL histogram needs at least two bins".into()));
    }
    if a.is_empty() {
        return Err(Error::InvalidInput("KL histogram of an empty sample".into()));
    }
    let p = histogram(a, bins);
    let q = match reference {
        KlReference::Density(fit) => density_masses(fit, bins),
        KlReference::Samples(b) => {
            if b.is_empty() {
                return Err(Error::InvalidInput("KL reference sample is empty".into()));
            }
            histogram(b, bins)
        }
    };
    Ok(p.iter().zip(&q).map(|(pi, qi)| pi * (pi / qi).ln()).sum::<f64>().max(0.0))
}
