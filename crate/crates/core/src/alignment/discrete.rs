//! Histogram cross-entropy objective, kept as a reference for the
//! differentiable loss. Never used for training.

use serde::{Deserialize, Serialize};

use super::half_gaussian::HalfGaussianFit;
use super::loss::MomentPenalty;
use crate::error::{Error, Result};
use crate::math::{mean, var_unbiased};

/// How each bin's mass enters the logarithm.
///
/// `Literal` takes `log ∫_bin f`, which drifts from `log f` by `log N` as the
/// bins shrink. `DensityNormalized` takes `log(N·∫_bin f)`, the bin-average
/// density, which converges to `log f` pointwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BinLog {
    Literal,
    #[default]
    DensityNormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteObjective {
    pub cross_entropy: f64,
    pub total: f64,
}

/// Bin index of `x` among `n` equal bins on `[0, 1]`; values outside are
/// clamped to the edge bins.
pub fn bin_index(x: f64, n: usize) -> usize {
    if x <= 0.0 {
        0
    } else {
        ((x * n as f64) as usize).min(n - 1)
    }
}

pub fn discrete_alignment_objective(
    mapped: &[f64],
    fit: &HalfGaussianFit,
    bins: usize,
    penalty: MomentPenalty,
    form: BinLog,
) -> Result<DiscreteObjective> {
    if bins == 0 {
        return Err(Error::InvalidInput("need at least one bin".into()));
    }
    if mapped.is_empty() {
        return Err(Error::InvalidInput("empty mapped score set".into()));
    }
    let mut counts = vec![0usize; bins];
    for &m in mapped {
        counts[bin_index(m, bins)] += 1;
    }
    let total = mapped.len() as f64;
    let width = 1.0 / bins as f64;
    let mut ce = 0.0;
    for (i, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let mass = fit.mass(i as f64 * width, (i + 1) as f64 * width);
        let arg = match form {
            BinLog::Literal => mass,
            BinLog::DensityNormalized => mass * bins as f64,
        };
        ce -= c as f64 / total * arg.ln();
    }
    let mut out = ce + penalty.lambda_hat_1 * (mean(mapped) - fit.mu_hat()).powi(2);
    if mapped.len() >= 2 {
        out += penalty.lambda_hat_2 * (var_unbiased(mapped) - fit.sigma_hat_sq()).powi(2);
    }
    Ok(DiscreteObjective {
        cross_entropy: ce,
        total: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const OFF: MomentPenalty = MomentPenalty {
        lambda_hat_1: 0.0,
        lambda_hat_2: 0.0,
    };

    #[test]
    fn single_bin_value() {
        let fit = HalfGaussianFit::from_sigma(1.0).unwrap();
        for form in [BinLog::Literal, BinLog::DensityNormalized] {
            let o = discrete_alignment_objective(&[0.1, 0.5, 0.9], &fit, 1, OFF, form).unwrap();
            let expected = -libm::erf(1.0 / 2f64.sqrt()).ln();
            assert!((o.cross_entropy - expected).abs() < 1e-12);
            assert!((o.cross_entropy - 0.381_715_146).abs() < 1e-8);
            assert!((o.cross_entropy - 0.38174).abs() < 5e-5);
        }
    }

    #[test]
    fn empty_bins_are_skipped() {
        let fit = HalfGaussianFit::from_sigma(0.5).unwrap();
        let o = discrete_alignment_objective(&[0.05, 0.05], &fit, 10, OFF, BinLog::Literal).unwrap();
        assert!((o.cross_entropy + fit.mass(0.0, 0.1).ln()).abs() < 1e-12);
    }

    #[test]
    fn literal_form_drifts_by_log_bins() {
        let fit = HalfGaussianFit::from_sigma(0.4).unwrap();
        let m = [0.13, 0.27, 0.41, 0.66];
        let a = discrete_alignment_objective(&m, &fit, 1000, OFF, BinLog::Literal).unwrap();
        let b = discrete_alignment_objective(&m, &fit, 1000, OFF, BinLog::DensityNormalized).unwrap();
        assert!((b.cross_entropy - a.cross_entropy + 1000f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn bin_edges() {
        assert_eq!(bin_index(-0.3, 4), 0);
        assert_eq!(bin_index(0.25, 4), 1);
        assert_eq!(bin_index(1.0, 4), 3);
        assert_eq!(bin_index(7.0, 4), 3);
    }
}
