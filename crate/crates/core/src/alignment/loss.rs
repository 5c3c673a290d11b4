use serde::{Deserialize, Serialize};

use super::half_gaussian::HalfGaussianFit;
use crate::error::{Error, Result};
use crate::math::{mean, var_unbiased};

/// Weights of the mean and variance penalties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPenalty {
    pub lambda_hat_1: f64,
    pub lambda_hat_2: f64,
}

impl Default for MomentPenalty {
    fn default() -> Self {
        Self {
            lambda_hat_1: 1.0,
            lambda_hat_2: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentConfig {
    pub penalty: MomentPenalty,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl AlignmentConfig {
    pub fn validate(&self) -> Result<()> {
        let MomentPenalty {
            lambda_hat_1,
            lambda_hat_2,
        } = self.penalty;
        if !(lambda_hat_1 > 0.0 && lambda_hat_2 > 0.0) {
            return Err(Error::InvalidInput(format!(
                "moment penalties must be > 0, got {lambda_hat_1} and {lambda_hat_2}"
            )));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidInput(format!("learning rate must be > 0, got {}", self.lr)));
        }
        Ok(())
    }
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            penalty: MomentPenalty::default(),
            lr: 0.05,
            epochs: 300,
            seed: 0,
        }
    }
}

/// Batch mean and unbiased variance of mapped scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentBatchStats {
    pub mu_m: f64,
    pub var_m: f64,
}

impl AlignmentBatchStats {
    pub fn of(mapped: &[f64]) -> Self {
        Self {
            mu_m: mean(mapped),
            var_m: var_unbiased(mapped),
        }
    }
}

fn check(mapped: &[f64]) -> Result<()> {
    if mapped.len() < 2 {
        return Err(Error::InvalidInput("alignment loss needs at least two mapped scores".into()));
    }
    if let Some(&bad) = mapped.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::NonFiniteDensity(bad));
    }
    Ok(())
}

/// `L_a = −(1/n)Σ log f(mᵢ) + λ̂1(μ_M − μ̂)² + λ̂2(var_M − σ̂²)²`.
pub fn alignment_loss(mapped: &[f64], fit: &HalfGaussianFit, penalty: MomentPenalty) -> Result<f64> {
    alignment_loss_grad(mapped, fit, penalty).map(|(l, _)| l)
}

/// Loss together with `∂L_a/∂mᵢ`.
pub fn alignment_loss_grad(
    mapped: &[f64],
    fit: &HalfGaussianFit,
    penalty: MomentPenalty,
) -> Result<(f64, Vec<f64>)> {
    check(mapped)?;
    let n = mapped.len() as f64;
    let sig2 = fit.sigma() * fit.sigma();
    let stats = AlignmentBatchStats::of(mapped);
    let dmu = stats.mu_m - fit.mu_hat();
    let dvar = stats.var_m - fit.sigma_hat_sq();

    let nll = mapped.iter().map(|&m| fit.neg_log_density(m)).sum::<f64>() / n;
    let loss = nll + penalty.lambda_hat_1 * dmu * dmu + penalty.lambda_hat_2 * dvar * dvar;

    let grad = mapped
        .iter()
        .map(|&m| {
            m / (n * sig2)
                + 2.0 * penalty.lambda_hat_1 * dmu / n
                + 2.0 * penalty.lambda_hat_2 * dvar * 2.0 * (m - stats.mu_m) / (n - 1.0)
        })
        .collect();
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit() -> HalfGaussianFit {
        HalfGaussianFit::from_sigma(1.0).unwrap()
    }

    #[test]
    fn worked_value() {
        let pen = MomentPenalty {
            lambda_hat_1: 1.0,
            lambda_hat_2: 0.0,
        };
        let l = alignment_loss(&[0.5, 0.5], &unit(), pen).unwrap();
        let expected = -unit().density(0.5).ln() + (0.5 - unit().mu_hat()).powi(2);
        assert!((l - expected).abs() < 1e-12);
        // The quoted reference 0.43941 carries a rounding slip in its last
        // digits; the exact value is 0.439527.
        assert!((l - 0.43941).abs() < 2e-4);
        assert!((l - 0.439_526_564).abs() < 1e-8);
    }

    #[test]
    fn zero_penalties_leave_mean_nll() {
        let fit = HalfGaussianFit::from_sigma(0.3).unwrap();
        let m = [0.1, 0.4, 0.8];
        let pen = MomentPenalty {
            lambda_hat_1: 0.0,
            lambda_hat_2: 0.0,
        };
        let nll = -m.iter().map(|&x| fit.density(x).ln()).sum::<f64>() / 3.0;
        assert!((alignment_loss(&m, &fit, pen).unwrap() - nll).abs() < 1e-12);
    }

    #[test]
    fn constant_input_variance_term() {
        let fit = HalfGaussianFit::from_sigma(0.3).unwrap();
        let c = fit.mu_hat();
        let pen = MomentPenalty {
            lambda_hat_1: 0.0,
            lambda_hat_2: 2.5,
        };
        let l = alignment_loss(&[c, c, c], &fit, pen).unwrap();
        let nll = fit.neg_log_density(c);
        assert!((l - nll - 2.5 * fit.sigma_hat_sq().powi(2)).abs() < 1e-14);
    }

    #[test]
    fn negative_mapped_value_rejected() {
        assert!(matches!(
            alignment_loss(&[0.2, -0.1], &unit(), MomentPenalty::default()),
            Err(Error::NonFiniteDensity(_))
        ));
        assert!(alignment_loss(&[0.2], &unit(), MomentPenalty::default()).is_err());
    }

    #[test]
    fn grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let n = rng.random_range(2..8);
            let m: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.99)).collect();
            let fit = HalfGaussianFit::from_sigma(rng.random_range(0.1..1.0)).unwrap();
            let pen = MomentPenalty {
                lambda_hat_1: rng.random_range(0.1..3.0),
                lambda_hat_2: rng.random_range(0.1..3.0),
            };
            let (_, g) = alignment_loss_grad(&m, &fit, pen).unwrap();
            for i in 0..n {
                let h = 1e-6;
                let mut p = m.clone();
                p[i] += h;
                let up = alignment_loss(&p, &fit, pen).unwrap();
                p[i] -= 2.0 * h;
                let dn = alignment_loss(&p, &fit, pen).unwrap();
                let fd = (up - dn) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-4 * fd.abs().max(1e-3));
            }
        }
    }
}
