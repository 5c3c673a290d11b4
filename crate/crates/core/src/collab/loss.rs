//! Fusion losses over a batch of slots.
//!
//! The pairwise loss rewards collated score differences that agree with the
//! weighted score differences of both scorers. Weights are per slot; a pair
//! uses the mean of its two slot weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patch::LossWeights;

/// Training objective for the fusion stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    /// Pairwise loss with adaptive weights.
    Collaborative,
    /// Weighted squared error against both scorers.
    MseVariant,
    /// Pairwise loss with both weights pinned to 1.
    FixedWeights,
    /// Pairwise loss with the scaled score fed to the network unmapped.
    NoAlignment,
}

impl LossVariant {
    pub const ALL: [LossVariant; 4] = [
        LossVariant::Collaborative,
        LossVariant::MseVariant,
        LossVariant::FixedWeights,
        LossVariant::NoAlignment,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossVariant::Collaborative => "collaborative",
            LossVariant::MseVariant => "mse_variant",
            LossVariant::FixedWeights => "fixed_weights",
            LossVariant::NoAlignment => "no_alignment",
        }
    }

    pub fn uses_alignment(self) -> bool {
        self != LossVariant::NoAlignment
    }
}

/// Which scorer the intra-patch weight `D_intra / (D_intra + D_inter)` multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRouting {
    /// `λ1` on the detector term and `λ2` on the language-model term.
    #[default]
    AsPrinted,
    /// `λ1` on the language-model term, so slots that look like point
    /// anomalies lean on the language model.
    Swapped,
}

impl WeightRouting {
    pub fn route(self, w: LossWeights) -> LossWeights {
        match self {
            WeightRouting::AsPrinted => w,
            WeightRouting::Swapped => w.swapped(),
        }
    }
}

fn check(s_hat: &[f64], s: &[f64], big_s: &[f64], w: &LossWeights) -> Result<usize> {
    let n = s_hat.len();
    for other in [s.len(), big_s.len(), w.lambda1.len(), w.lambda2.len()] {
        if other != n {
            return Err(Error::LengthMismatch { left: n, right: other });
        }
    }
    if n < 2 {
        return Err(Error::InvalidInput("fusion loss needs at least two slots".into()));
    }
    Ok(n)
}

/// `−(1/n²) Σᵢ Σⱼ [λ̄1(i,j)(sᵢ−sⱼ) + λ̄2(i,j)(Sᵢ−Sⱼ)](Ŝᵢ−Ŝⱼ)`.
pub fn collaborative_loss(s_hat: &[f64], s: &[f64], big_s: &[f64], w: &LossWeights) -> Result<f64> {
    collaborative_loss_grad(s_hat, s, big_s, w).map(|(l, _)| l)
}

/// Loss and `∂L/∂Ŝ`.
pub fn collaborative_loss_grad(
    s_hat: &[f64],
    s: &[f64],
    big_s: &[f64],
    w: &LossWeights,
) -> Result<(f64, Vec<f64>)> {
    let n = check(s_hat, s, big_s, w)?;
    let scale = 1.0 / (n * n) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; n];
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            let l1 = 0.5 * (w.lambda1[i] + w.lambda1[j]);
            let l2 = 0.5 * (w.lambda2[i] + w.lambda2[j]);
            let a = l1 * (s[i] - s[j]) + l2 * (big_s[i] - big_s[j]);
            loss += a * (s_hat[i] - s_hat[j]);
            row += a;
        }
        // Each slot appears as i and as j with an antisymmetric coefficient.
        grad[i] = -2.0 * scale * row;
    }
    Ok((-scale * loss, grad))
}

/// `(1/n) Σᵢ [λ1(i)(sᵢ−Ŝᵢ)² + λ2(i)(Sᵢ−Ŝᵢ)²]`.
pub fn mse_variant_loss(s_hat: &[f64], s: &[f64], big_s: &[f64], w: &LossWeights) -> Result<f64> {
    mse_variant_loss_grad(s_hat, s, big_s, w).map(|(l, _)| l)
}

pub fn mse_variant_loss_grad(
    s_hat: &[f64],
    s: &[f64],
    big_s: &[f64],
    w: &LossWeights,
) -> Result<(f64, Vec<f64>)> {
    let n = check(s_hat, s, big_s, w)?;
    let inv = 1.0 / n as f64;
    let mut loss = 0.0;
    let grad = (0..n)
        .map(|i| {
            let (a, b) = (s[i] - s_hat[i], big_s[i] - s_hat[i]);
            loss += w.lambda1[i] * a * a + w.lambda2[i] * b * b;
            -2.0 * inv * (w.lambda1[i] * a + w.lambda2[i] * b)
        })
        .collect();
    Ok((loss * inv, grad))
}
