use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

use super::{oracle_loss_vectorized, Check, NoiseModel, Relation, TheoryReport};
use crate::alignment::{
    discrete_alignment_objective, BinLog, HalfGaussianFit, MomentPenalty,
};
use crate::collab::ConditionalNet;
use crate::error::{Error, Result};

/// Smoothness constant quoted for the fusion loss.
pub const LIPSCHITZ_PROBE: f64 = 280.0;

/// Largest `|L*(θ1) − L*(θ2)| / ‖θ1 − θ2‖` over random parameter pairs of
/// a conditional net fed `(S, s)` with default noise, where `L*` is the
/// ideal pairwise loss against `y`.
pub fn estimate_lipschitz(y: &[f64], param_pairs: usize, seed: u64) -> Result<TheoryReport> {
    if param_pairs < 100 {
        return Err(Error::InvalidInput("need at least 100 parameter pairs".into()));
    }
    if y.len() < 2 {
        return Err(Error::InvalidInput("need at least two slots".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = NoiseModel::default();
    let inputs: Vec<[f64; 2]> = y
        .iter()
        .map(|&v| [v + noise.sample(&mut rng, false), v + noise.sample(&mut rng, true)])
        .collect();
    let loss = |net: &ConditionalNet| -> Result<f64> {
        let s = inputs
            .iter()
            .map(|x| net.forward(x))
            .collect::<Result<Vec<f64>>>()?;
        oracle_loss_vectorized(&s, y)
    };
    let mut worst = 0.0f64;
    let mut used = 0usize;
    for _ in 0..param_pairs {
        let a = ConditionalNet::new(0, crate::collab::DEFAULT_NET_HIDDEN, &mut rng)?;
        let mut dir: Vec<f64> = (0..a.n_params()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let radius = 10f64.powf(rng.random_range(-3.0..0.0));
        dir.iter_mut().for_each(|v| *v *= radius / norm);
        let mut b = a.clone();
        for (p, d) in b.params_mut().iter_mut().zip(&dir) {
            *p += d;
        }
        let dist = a
            .params()
            .iter()
            .zip(b.params())
            .map(|(p, q)| (p - q).powi(2))
            .sum::<f64>()
            .sqrt();
        if dist == 0.0 {
            continue;
        }
        let ratio = (loss(&a)? - loss(&b)?).abs() / dist;
        if !ratio.is_finite() {
            return Err(Error::NonConvergence {
                step: used,
                detail: format!("non-finite Lipschitz ratio {ratio}"),
            });
        }
        worst = worst.max(ratio);
        used += 1;
    }
    let checks = vec![Check::new("max_ratio", worst, LIPSCHITZ_PROBE, Relation::AtMost)];
    let details = json!({ "n": y.len(), "pairs_used": used });
    let mut rep = TheoryReport::new("lipschitz", param_pairs, seed, checks, details);
    rep.lipschitz = Some(worst);
    Ok(rep)
}

const BIN_SWEEP: [usize; 4] = [10, 100, 1000, 10_000];

/// Histogram cross-entropy against the continuous negative log-likelihood
/// on a fixed mapped set as the bin count grows.
pub fn check_histogram_equivalence(seed: u64) -> Result<TheoryReport> {
    let fit = HalfGaussianFit::from_sigma(0.3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mapped = Vec::with_capacity(1000);
    while mapped.len() < 1000 {
        let z: f64 = StandardNormal.sample(&mut rng);
        let m = (0.3 * z).abs();
        if m < 0.95 {
            mapped.push(m);
        }
    }
    let min_density = mapped.iter().map(|&m| fit.density(m)).fold(f64::INFINITY, f64::min);
    let continuous = mapped.iter().map(|&m| fit.neg_log_density(m)).sum::<f64>() / mapped.len() as f64;
    let mut gaps = Vec::with_capacity(BIN_SWEEP.len());
    for &n in &BIN_SWEEP {
        let d = discrete_alignment_objective(&mapped, &fit, n, MomentPenalty::default(), BinLog::DensityNormalized)?;
        gaps.push((d.cross_entropy - continuous).abs());
    }
    let decreasing = gaps.windows(2).filter(|w| w[1] < w[0]).count();
    let last_rel = gaps[gaps.len() - 1] / continuous.abs().max(1e-12);
    let checks = vec![
        Check::new("relative_gap_at_max_bins", last_rel, 0.01, Relation::Below),
        Check::new(
            "strict_decreases",
            decreasing as f64,
            (BIN_SWEEP.len() - 1) as f64,
            Relation::AtLeast,
        ),
        Check::new("min_density", min_density, 0.01, Relation::AtLeast),
    ];
    let details = json!({
        "bins": BIN_SWEEP,
        "gaps": gaps,
        "continuous": continuous,
    });
    Ok(TheoryReport::new("histogram_equivalence", mapped.len(), seed, checks, details))
}
