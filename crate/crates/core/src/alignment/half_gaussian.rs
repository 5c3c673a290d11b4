use std::f64::consts::{FRAC_2_PI, PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::ScoreSeries;

/// Which exponent the density uses.
///
/// `Standard` is the half-normal with variance parameter `σ²`. `AsPrinted`
/// keeps the alternative `−x²/(2σ)` exponent, which is only a proper density
/// when `σ = 1`; it exists for side-by-side comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DensityForm {
    #[default]
    Standard,
    AsPrinted,
}

/// Half-normal fit of a nonnegative score set.
///
/// Only `σ` is stored; the target moments are recomputed on demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfGaussianFit {
    sigma: f64,
}

impl HalfGaussianFit {
    pub fn from_sigma(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidInput(format!("half-Gaussian sigma must be > 0, got {sigma}")));
        }
        Ok(Self { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Target mean `σ·√(2/π)`.
    pub fn mu_hat(&self) -> f64 {
        self.sigma * FRAC_2_PI.sqrt()
    }

    /// Target variance `σ²·(1 − 2/π)`.
    pub fn sigma_hat_sq(&self) -> f64 {
        self.sigma * self.sigma * (1.0 - FRAC_2_PI)
    }

    pub fn density(&self, x: f64) -> f64 {
        self.density_with(DensityForm::Standard, x)
    }

    pub fn density_with(&self, form: DensityForm, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let scale = match form {
            DensityForm::Standard => self.sigma * self.sigma,
            DensityForm::AsPrinted => self.sigma,
        };
        2.0 / (self.sigma * (2.0 * PI).sqrt()) * (-x * x / (2.0 * scale)).exp()
    }

    /// `−log f(x)` for `x ≥ 0` under the standard form, computed without
    /// taking the log of a possibly underflowed density.
    pub fn neg_log_density(&self, x: f64) -> f64 {
        -(2.0 / (self.sigma * (2.0 * PI).sqrt())).ln() + x * x / (2.0 * self.sigma * self.sigma)
    }

    /// `P(X ≤ x)` under the standard form.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            libm::erf(x / (self.sigma * SQRT_2))
        }
    }

    /// Probability mass on `[a, b]`.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        let (ea, eb) = (a.max(0.0) / (self.sigma * SQRT_2), b.max(0.0) / (self.sigma * SQRT_2));
        // Far in the tail erf saturates; erfc differences keep precision there.
        if ea > 1.0 {
            libm::erfc(ea) - libm::erfc(eb)
        } else {
            libm::erf(eb) - libm::erf(ea)
        }
    }
}

/// Fits `σ` via the mirrored set `{−sᵢ} ∪ {sᵢ}`: its population standard
/// deviation is `√(mean sᵢ²)`.
pub fn fit_half_gaussian(scores: &ScoreSeries) -> Result<HalfGaussianFit> {
    fit_half_gaussian_slice(scores.scores())
}

pub fn fit_half_gaussian_slice(scores: &[f64]) -> Result<HalfGaussianFit> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("cannot fit an empty score set".into()));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("scores to fit"));
    }
    if scores.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidInput("half-Gaussian fit requires nonnegative scores".into()));
    }
    let mean_sq = scores.iter().map(|v| v * v).sum::<f64>() / scores.len() as f64;
    if mean_sq == 0.0 {
        return Err(Error::DegenerateScores);
    }
    HalfGaussianFit::from_sigma(mean_sq.sqrt())
}
