//! Distribution alignment of detector scores onto the language-model score
//! distribution.

mod discrete;
mod half_gaussian;
mod kl;
mod loss;
mod mapping;

pub use discrete::{bin_index, discrete_alignment_objective, BinLog, DiscreteObjective};
pub use half_gaussian::{fit_half_gaussian, fit_half_gaussian_slice, DensityForm, HalfGaussianFit};
pub use kl::{histogram, kl_histogram, KlReference, KL_EPS};
pub use loss::{alignment_loss, alignment_loss_grad, AlignmentBatchStats, AlignmentConfig, MomentPenalty};
pub use mapping::{MonotoneMapping, DEFAULT_HIDDEN};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::optim::Adam;
use crate::series::{ScoreKind, ScoreSeries};

#[derive(Debug, Clone)]
pub struct TrainedMapping {
    pub mapping: MonotoneMapping,
    pub loss_curve: Vec<f64>,
}

/// Fits `M` to the alignment loss alone with full-batch Adam.
///
/// The fusion pipeline trains `M` jointly with the fusion loss instead; this
/// standalone routine is for diagnostics and for callers that only want
/// calibration.
pub fn train_mapping(
    scaled: &ScoreSeries,
    fit: &HalfGaussianFit,
    cfg: &AlignmentConfig,
) -> Result<TrainedMapping> {
    cfg.validate()?;
    if scaled.kind() != ScoreKind::ScaledTsadm {
        return Err(Error::InvalidInput(format!("expected scaled detector scores, got {:?}", scaled.kind())));
    }
    let s = scaled.scores();
    if s.len() < 2 {
        return Err(Error::InvalidInput("need at least two scores to train the mapping".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mapping = MonotoneMapping::new(DEFAULT_HIDDEN, &mut rng);
    let mut params = mapping.to_flat();
    let mut opt = Adam::new(cfg.lr, params.len());
    let mut curve = Vec::with_capacity(cfg.epochs);

    for step in 0..cfg.epochs {
        let mapped = mapping.apply_all(s);
        let (loss, dm) = alignment_loss_grad(&mapped, fit, cfg.penalty)?;
        if !loss.is_finite() {
            return Err(Error::NonConvergence {
                step,
                detail: format!("alignment loss became {loss}"),
            });
        }
        curve.push(loss);
        let mut grad = vec![0.0; params.len()];
        for (&si, &g) in s.iter().zip(&dm) {
            mapping.accumulate_grad(si, g, &mut grad);
        }
        opt.step(&mut params, &grad);
        mapping.set_flat(&params)?;
    }
    Ok(TrainedMapping {
        mapping,
        loss_curve: curve,
    })
}
