//! Score fusion: a conditional network combines the aligned detector score,
//! the language-model score and the detector representation.
//!
//! Training runs in two phases. The detector is trained on its own first and
//! then frozen; the monotone mapping and the fusion network are then fitted
//! jointly on `L_a + L_β` with minibatch gradient steps over contiguous slot
//! blocks.

mod loss;
mod net;

pub use loss::{
    collaborative_loss, collaborative_loss_grad, mse_variant_loss, mse_variant_loss_grad, LossVariant, WeightRouting,
};
pub use net::{ConditionalNet, DEFAULT_NET_HIDDEN};

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alignment::{
    alignment_loss_grad, fit_half_gaussian, kl_histogram, KlReference, MomentPenalty,
    MonotoneMapping, DEFAULT_HIDDEN,
};
use crate::error::{Error, Result};
use crate::eval::KlRow;
use crate::optim::{Optimizer, OptimizerKind};
use crate::patch::{patch_weights, LossWeights};
use crate::scaling::{NormalizationConfig, ScoreRange};
use crate::series::{ScoreKind, ScoreSeries, TimeSeriesWindow};
use crate::tsadm::{Detector, Scorer};

pub const PIPELINE_FORMAT: &str = "collate-pipeline";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollabConfig {
    /// Learning rate (`colr`).
    pub lr: f64,
    pub epochs: usize,
    /// Slots per contiguous block.
    pub batch_size: usize,
    pub patch_size: usize,
    pub normalization: NormalizationConfig,
    pub penalty: MomentPenalty,
    pub routing: WeightRouting,
    pub optimizer: OptimizerKind,
    pub net_hidden: usize,
    pub mapping_hidden: usize,
    pub kl_bins: usize,
    pub seed: u64,
}

impl Default for CollabConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            epochs: 20,
            batch_size: 100,
            patch_size: 2,
            normalization: NormalizationConfig::default(),
            penalty: MomentPenalty::default(),
            routing: WeightRouting::default(),
            optimizer: OptimizerKind::Adam,
            net_hidden: DEFAULT_NET_HIDDEN,
            mapping_hidden: DEFAULT_HIDDEN,
            kl_bins: 20,
            seed: 0,
        }
    }
}

impl CollabConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidInput(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.epochs == 0 || self.net_hidden == 0 || self.mapping_hidden == 0 || self.kl_bins == 0 {
            return Err(Error::InvalidInput("epochs, hidden sizes and kl_bins must be positive".into()));
        }
        if self.patch_size < 2 || self.batch_size < self.patch_size {
            return Err(Error::InvalidInput(format!(
                "need 2 <= patch_size <= batch_size, got {} and {}",
                self.patch_size, self.batch_size
            )));
        }
        Ok(())
    }
}

/// A trained, immutable fusion model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionPipeline {
    pub detector: Detector,
    pub mapping: MonotoneMapping,
    pub net: ConditionalNet,
    pub normalization: NormalizationConfig,
    /// Detector score range on the training split, reused at inference.
    pub range: ScoreRange,
    pub patch_size: usize,
    pub variant: LossVariant,
    pub config_echo: serde_json::Value,
}

/// Every intermediate score of one detection pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub raw: Vec<f64>,
    pub scaled: Vec<f64>,
    /// `M(s)`, or `s` itself when the variant skips alignment.
    pub aligned: Vec<f64>,
    pub collated: ScoreSeries,
}

fn net_input(llm: f64, aligned: f64, repr: ndarray::ArrayView1<'_, f64>) -> Vec<f64> {
    let mut x = Vec::with_capacity(2 + repr.len());
    x.push(llm);
    x.push(aligned);
    x.extend(repr.iter().copied());
    x
}

impl FusionPipeline {
    pub fn validate(&self) -> Result<()> {
        if self.net.repr_dim() != self.detector.repr_dim() {
            return Err(Error::shape(
                format!("fusion net for repr dim {}", self.detector.repr_dim()),
                self.net.repr_dim(),
            ));
        }
        Ok(())
    }

    fn align(&self, s: f64) -> f64 {
        if self.variant.uses_alignment() {
            self.mapping.apply(s)
        } else {
            s
        }
    }

    pub fn run(&self, window: &TimeSeriesWindow, llm: &ScoreSeries) -> Result<Detection> {
        if llm.kind() != ScoreKind::Llm {
            return Err(Error::InvalidInput(format!("expected LLM scores, got {:?}", llm.kind())));
        }
        if llm.len() != window.len() {
            return Err(Error::MissingLlmScores(window.id()));
        }
        let out = self.detector.score(window)?;
        let raw = out.raw.into_scores();
        let scaled = self.range.apply(&raw, self.normalization);
        let aligned: Vec<f64> = scaled.iter().map(|&s| self.align(s)).collect();
        let collated = (0..window.len())
            .map(|t| self.net.forward(&net_input(llm.scores()[t], aligned[t], out.repr.row(t))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Detection {
            raw,
            scaled,
            aligned,
            collated: ScoreSeries::new(collated, ScoreKind::Collated)?,
        })
    }

    pub fn detect(&self, window: &TimeSeriesWindow, llm: &ScoreSeries) -> Result<ScoreSeries> {
        self.run(window, llm).map(|d| d.collated)
    }
}

pub fn save_pipeline(p: &FusionPipeline, path: &Path) -> Result<()> {
    crate::checkpoint::save(path, PIPELINE_FORMAT, p)
}

pub fn load_pipeline(path: &Path) -> Result<FusionPipeline> {
    let p: FusionPipeline = crate::checkpoint::load(path, PIPELINE_FORMAT)?;
    p.validate()?;
    Ok(p)
}

#[derive(Debug, Clone)]
pub struct TrainedCollab {
    pub pipeline: FusionPipeline,
    /// Mean `L_a + L_β` per epoch.
    pub loss_curve: Vec<f64>,
    pub alignment_curve: Vec<f64>,
    pub fusion_curve: Vec<f64>,
    /// KL of aligned and unaligned scores against the fitted half-Gaussian,
    /// before training and after every epoch.
    pub kl: Vec<KlRow>,
}

/// Contiguous blocks of `batch`; a remainder shorter than `min_len` joins the
/// previous block.
fn blocks(len: usize, batch: usize, min_len: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = (0..len / batch).map(|k| (k * batch, (k + 1) * batch)).collect();
    let rest = len % batch;
    if rest > 0 {
        match out.last_mut() {
            Some(last) if rest < min_len => last.1 = len,
            _ => out.push((len - rest, len)),
        }
    }
    out
}

struct Block {
    range: (usize, usize),
    weights: LossWeights,
}

/// Phase-2 training with the detector frozen.
///
/// `llm` covers `train` slot for slot. The scaling range and the
/// half-Gaussian fit are taken from the training split.
pub fn train_collab(
    train: &TimeSeriesWindow,
    detector: Detector,
    llm: &ScoreSeries,
    variant: LossVariant,
    cfg: &CollabConfig,
    config_echo: serde_json::Value,
) -> Result<TrainedCollab> {
    cfg.validate()?;
    if llm.kind() != ScoreKind::Llm {
        return Err(Error::InvalidInput(format!("expected LLM scores, got {:?}", llm.kind())));
    }
    if llm.len() != train.len() {
        return Err(Error::MissingLlmScores(format!(
            "{} ({} scores for {} slots)",
            train.id(),
            llm.len(),
            train.len()
        )));
    }
    if train.len() < cfg.batch_size {
        return Err(Error::TooShort {
            len: train.len(),
            min: cfg.batch_size,
        });
    }

    let out = detector.score(train)?;
    let raw = out.raw.into_scores();
    let range = ScoreRange::of(&raw)?;
    let s = range.apply(&raw, cfg.normalization);
    let big_s = llm.scores();
    let fit = fit_half_gaussian(llm)?;
    let repr = out.repr;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mapping = MonotoneMapping::new(cfg.mapping_hidden, &mut rng);
    let mut net = ConditionalNet::new(detector.repr_dim(), cfg.net_hidden, &mut rng)?;

    let blocks = blocks(train.len(), cfg.batch_size, cfg.patch_size.max(2))
        .into_iter()
        .map(|(a, b)| {
            let pw = patch_weights(&train.slice(a, b)?, cfg.patch_size)?;
            let weights = match variant {
                LossVariant::FixedWeights => LossWeights::constant(b - a, 1.0, 1.0),
                _ => cfg.routing.route(LossWeights::from(&pw)),
            };
            Ok(Block { range: (a, b), weights })
        })
        .collect::<Result<Vec<_>>>()?;

    let kl_row = |mapping: &MonotoneMapping, iteration: usize| -> Result<KlRow> {
        let aligned = mapping.apply_all(&s);
        Ok(KlRow {
            iteration,
            kl_aligned: kl_histogram(&aligned, KlReference::Density(&fit), cfg.kl_bins)?,
            kl_raw: kl_histogram(&s, KlReference::Density(&fit), cfg.kl_bins)?,
        })
    };

    let mut map_opt = Optimizer::new(cfg.optimizer, cfg.lr, mapping.n_params());
    let mut net_opt = Optimizer::new(cfg.optimizer, cfg.lr, net.n_params());
    let mut order: Vec<usize> = (0..blocks.len()).collect();
    let mut step = 0;
    let mut kl = vec![kl_row(&mapping, 0)?];
    let (mut loss_curve, mut alignment_curve, mut fusion_curve) = (vec![], vec![], vec![]);
    let mut map_grad = vec![0.0; mapping.n_params()];
    let mut net_grad = vec![0.0; net.n_params()];

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut la_sum, mut lb_sum) = (0.0, 0.0);
        for &bi in &order {
            let blk = &blocks[bi];
            let (a, b) = blk.range;
            let sb = &s[a..b];
            let bs = &big_s[a..b];
            map_grad.iter_mut().for_each(|g| *g = 0.0);
            net_grad.iter_mut().for_each(|g| *g = 0.0);

            let aligned: Vec<f64> = if variant.uses_alignment() {
                mapping.apply_all(sb)
            } else {
                sb.to_vec()
            };
            let (la, mut d_aligned) = if variant.uses_alignment() {
                alignment_loss_grad(&aligned, &fit, cfg.penalty)?
            } else {
                (0.0, vec![0.0; b - a])
            };

            let inputs: Vec<Vec<f64>> = (a..b).map(|t| net_input(big_s[t], aligned[t - a], repr.row(t))).collect();
            let s_hat = inputs.iter().map(|x| net.forward(x)).collect::<Result<Vec<_>>>()?;
            let (lb, d_hat) = match variant {
                LossVariant::MseVariant => mse_variant_loss_grad(&s_hat, sb, bs, &blk.weights)?,
                _ => collaborative_loss_grad(&s_hat, sb, bs, &blk.weights)?,
            };
            for (k, x) in inputs.iter().enumerate() {
                let (_, dx) = net.accumulate_grad(x, d_hat[k], &mut net_grad)?;
                d_aligned[k] += dx[1];
            }
            if variant.uses_alignment() {
                for (k, &sv) in sb.iter().enumerate() {
                    mapping.accumulate_grad(sv, d_aligned[k], &mut map_grad);
                }
            }

            let total = la + lb;
            if !total.is_finite() || map_grad.iter().chain(&net_grad).any(|g| !g.is_finite()) {
                return Err(Error::NonConvergence {
                    step,
                    detail: format!("loss {total}"),
                });
            }
            if variant.uses_alignment() {
                let mut flat = mapping.to_flat();
                map_opt.step(&mut flat, &map_grad);
                mapping.set_flat(&flat)?;
            }
            net_opt.step(net.params_mut(), &net_grad);
            la_sum += la;
            lb_sum += lb;
            step += 1;
        }
        let nb = blocks.len() as f64;
        alignment_curve.push(la_sum / nb);
        fusion_curve.push(lb_sum / nb);
        loss_curve.push((la_sum + lb_sum) / nb);
        kl.push(kl_row(&mapping, step)?);
        log::debug!(
            "collab epoch {}: L_a {:.6} L_b {:.6}",
            loss_curve.len(),
            la_sum / nb,
            lb_sum / nb
        );
    }

    let pipeline = FusionPipeline {
        detector,
        mapping,
        net,
        normalization: cfg.normalization,
        range,
        patch_size: cfg.patch_size,
        variant,
        config_echo,
    };
    Ok(TrainedCollab {
        pipeline,
        loss_curve,
        alignment_curve,
        fusion_curve,
        kl,
    })
}
