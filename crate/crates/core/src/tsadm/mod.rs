//! Reconstruction-based detector built on Gaussian-masked attention.

mod attention;
mod model;

pub use attention::{
    anomaly_attention, anomaly_attention_backward, anomaly_attention_cached, gaussian_mask, AttentionCache,
    AttentionGrads,
};
pub use model::{Forward, TsadmArch, TsadmModel};

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::Adam;
use crate::series::{ScoreKind, ScoreSeries, TimeSeriesWindow};

pub const TSADM_FORMAT: &str = "collate-tsadm";

/// Raw scores and the per-slot representation handed to the fusion network.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerOutput {
    pub raw: ScoreSeries,
    pub repr: Array2<f64>,
}

/// Anything that maps a window to nonnegative per-slot scores and a
/// `T × h` representation.
pub trait Scorer {
    fn repr_dim(&self) -> usize;
    fn score(&self, window: &TimeSeriesWindow) -> Result<ScorerOutput>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsadmConfig {
    pub hidden: usize,
    pub k_len: usize,
    pub module_num: usize,
    pub win_len: usize,
    /// Learning rate (`trlr`).
    pub lr: f64,
    pub epochs: usize,
    /// Windows per optimizer step.
    pub batch_size: usize,
    /// Offset between consecutive training windows.
    pub stride: usize,
    pub seed: u64,
}

impl Default for TsadmConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            k_len: 2,
            module_num: 10,
            win_len: 5,
            lr: 0.01,
            epochs: 20,
            batch_size: 100,
            stride: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedTsadm {
    pub model: TsadmModel,
    /// Mean window loss per epoch.
    pub loss_curve: Vec<f64>,
}

/// Minimizes mean squared reconstruction error over sliding windows with
/// minibatch Adam.
pub fn train_tsadm(train: &TimeSeriesWindow, cfg: &TsadmConfig) -> Result<TrainedTsadm> {
    if cfg.batch_size == 0 || cfg.stride == 0 {
        return Err(Error::InvalidInput("batch size and stride must be >= 1".into()));
    }
    let arch = TsadmArch {
        dims: train.dims(),
        hidden: cfg.hidden,
        k_len: cfg.k_len,
        module_num: cfg.module_num,
        win_len: cfg.win_len,
    };
    if train.len() < cfg.win_len {
        return Err(Error::TooShort {
            len: train.len(),
            min: cfg.win_len,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = TsadmModel::new(arch, &mut rng)?;
    let mut opt = Adam::new(cfg.lr, arch.n_params());
    let x = train.values();
    let mut starts: Vec<usize> = (0..=train.len() - cfg.win_len).step_by(cfg.stride).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut grad = vec![0.0; arch.n_params()];

    for epoch in 0..cfg.epochs {
        starts.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in starts.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &st in batch {
                let w = x.slice(s![st..st + cfg.win_len, ..]);
                total += model.loss_and_grad(w, &mut grad).map_err(|e| Error::NonConvergence {
                    step: epoch,
                    detail: e.to_string(),
                })?;
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            opt.step(model.params_mut(), &grad);
        }
        let mean = total / starts.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonConvergence {
                step: epoch,
                detail: format!("reconstruction loss became {mean}"),
            });
        }
        log::debug!("tsadm epoch {epoch}: loss {mean:.6e}");
        curve.push(mean);
    }
    Ok(TrainedTsadm {
        model,
        loss_curve: curve,
    })
}

/// Chunk starts covering `len` slots with windows of `win`: non-overlapping
/// tiles, with the last tile shifted back so it stays full length.
fn tiles(len: usize, win: usize) -> Vec<(usize, usize)> {
    if len <= win {
        return vec![(0, len)];
    }
    let mut out: Vec<(usize, usize)> = (0..len / win).map(|k| (k * win, (k + 1) * win)).collect();
    if len % win != 0 {
        out.push((len - win, len));
    }
    out
}

impl Scorer for TsadmModel {
    fn repr_dim(&self) -> usize {
        self.arch().hidden
    }

    /// Windows longer than `winLen` are tiled; overlapping slots of the last
    /// tile keep the value from the earlier tile.
    fn score(&self, window: &TimeSeriesWindow) -> Result<ScorerOutput> {
        let x = window.values();
        let t = window.len();
        let mut raw = vec![0.0; t];
        let mut repr = Array2::zeros((t, self.arch().hidden));
        let mut filled = 0;
        for (a, b) in tiles(t, self.arch().win_len) {
            let (err, r) = self.score_window(x.slice(s![a..b, ..]))?;
            for i in filled.max(a)..b {
                raw[i] = err[i - a];
                repr.row_mut(i).assign(&r.row(i - a));
            }
            filled = b;
        }
        Ok(ScorerOutput {
            raw: ScoreSeries::new(raw, ScoreKind::RawTsadm)?,
            repr,
        })
    }
}

/// A stand-in detector replaying precomputed scores by absolute slot index.
///
/// The representation is a set of local shape features per dimension: the
/// offset from the window mean and the backward and forward differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedDetector {
    pub scores: Vec<f64>,
    pub dims: usize,
}

impl SimulatedDetector {
    pub fn new(scores: Vec<f64>, dims: usize) -> Result<Self> {
        ScoreSeries::new(scores.clone(), ScoreKind::RawTsadm)?;
        Ok(Self { scores, dims })
    }
}

pub fn local_features(window: &TimeSeriesWindow) -> Array2<f64> {
    let x = window.values();
    let (t, d) = x.dim();
    let mut r = Array2::zeros((t, 3 * d));
    for c in 0..d {
        let col = x.column(c);
        let m = col.mean().unwrap_or(0.0);
        for i in 0..t {
            r[[i, 3 * c]] = col[i] - m;
            r[[i, 3 * c + 1]] = if i > 0 { col[i] - col[i - 1] } else { 0.0 };
            r[[i, 3 * c + 2]] = if i + 1 < t { col[i + 1] - col[i] } else { 0.0 };
        }
    }
    r
}

impl Scorer for SimulatedDetector {
    fn repr_dim(&self) -> usize {
        3 * self.dims
    }

    fn score(&self, window: &TimeSeriesWindow) -> Result<ScorerOutput> {
        if window.dims() != self.dims {
            return Err(Error::shape(format!("{} dims", self.dims), format!("{} dims", window.dims())));
        }
        let a = window.start_index();
        let b = a + window.len();
        if b > self.scores.len() {
            return Err(Error::InvalidInput(format!(
                "simulated detector covers {} slots, window ends at {b}",
                self.scores.len()
            )));
        }
        Ok(ScorerOutput {
            raw: ScoreSeries::new(self.scores[a..b].to_vec(), ScoreKind::RawTsadm)?,
            repr: local_features(window),
        })
    }
}

/// The detector embedded in a fusion pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Detector {
    Attention(TsadmModel),
    Simulated(SimulatedDetector),
}

impl Scorer for Detector {
    fn repr_dim(&self) -> usize {
        match self {
            Detector::Attention(m) => m.repr_dim(),
            Detector::Simulated(m) => m.repr_dim(),
        }
    }

    fn score(&self, window: &TimeSeriesWindow) -> Result<ScorerOutput> {
        match self {
            Detector::Attention(m) => m.score(window),
            Detector::Simulated(m) => m.score(window),
        }
    }
}

pub fn save_tsadm(model: &TsadmModel, path: &std::path::Path) -> Result<()> {
    crate::checkpoint::save(path, TSADM_FORMAT, model)
}

pub fn load_tsadm(path: &std::path::Path) -> Result<TsadmModel> {
    let m: TsadmModel = crate::checkpoint::load(path, TSADM_FORMAT)?;
    TsadmModel::from_parts(m.arch(), m.params().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> TsadmConfig {
        TsadmConfig {
            hidden: 8,
            module_num: 2,
            epochs: 15,
            batch_size: 32,
            ..TsadmConfig::default()
        }
    }

    #[test]
    fn tiling_covers_every_slot() {
        assert_eq!(tiles(3, 5), vec![(0, 3)]);
        assert_eq!(tiles(10, 5), vec![(0, 5), (5, 10)]);
        assert_eq!(tiles(12, 5), vec![(0, 5), (5, 10), (7, 12)]);
    }

    #[test]
    fn constant_series_is_reconstructed() {
        let w = TimeSeriesWindow::from_slice(&[0.7; 300], 0).unwrap();
        let cfg = TsadmConfig {
            epochs: 40,
            ..small_cfg()
        };
        let out = train_tsadm(&w, &cfg).unwrap();
        assert!(*out.loss_curve.last().unwrap() < 1e-4, "{:?}", out.loss_curve.last());
        let scored = out.model.score(&w).unwrap();
        assert!(scored.raw.scores().iter().all(|&v| v < 1e-3));
    }

    #[test]
    fn sine_held_out_error_is_small() {
        let v: Vec<f64> = (0..2000).map(|i| (i as f64 * 0.2).sin()).collect();
        let train = TimeSeriesWindow::from_slice(&v[..1500], 0).unwrap();
        let test = TimeSeriesWindow::from_slice(&v[1500..], 1500).unwrap();
        let out = train_tsadm(&train, &small_cfg()).unwrap();
        let scored = out.model.score(&test).unwrap();
        let mse = scored.raw.scores().iter().sum::<f64>() / test.len() as f64;
        let var = crate::math::std_pop(&v).powi(2);
        assert!(mse < 0.1 * var, "mse {mse} vs var {var}");
    }

    #[test]
    fn spike_is_top_scored() {
        let mut v: Vec<f64> = (0..1200).map(|i| (i as f64 * 0.2).sin()).collect();
        let train = TimeSeriesWindow::from_slice(&v[..800], 0).unwrap();
        let out = train_tsadm(&train, &small_cfg()).unwrap();
        let sd = crate::math::std_pop(&v);
        v[1000] += 10.0 * sd;
        let test = TimeSeriesWindow::from_slice(&v[800..], 800).unwrap();
        let s = out.model.score(&test).unwrap();
        let argmax = s
            .raw
            .scores()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(argmax + 800, 1000);
        assert_eq!(s.repr.dim(), (400, 8));
    }

    #[test]
    fn training_is_deterministic() {
        let v: Vec<f64> = (0..200).map(|i| (i as f64 * 0.3).cos()).collect();
        let w = TimeSeriesWindow::from_slice(&v, 0).unwrap();
        let cfg = TsadmConfig {
            epochs: 3,
            ..small_cfg()
        };
        let a = train_tsadm(&w, &cfg).unwrap().model;
        let b = train_tsadm(&w, &cfg).unwrap().model;
        assert!(a.params().iter().zip(b.params()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let v: Vec<f64> = (0..100).map(|i| (i as f64 * 0.3).cos()).collect();
        let w = TimeSeriesWindow::from_slice(&v, 0).unwrap();
        let m = train_tsadm(&w, &TsadmConfig { epochs: 2, ..small_cfg() }).unwrap().model;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tsadm.json");
        save_tsadm(&m, &p).unwrap();
        let back = load_tsadm(&p).unwrap();
        assert!(m.params().iter().zip(back.params()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(m.arch(), back.arch());
    }

    #[test]
    fn simulated_detector_replays_by_offset() {
        let det = SimulatedDetector::new(vec![0.0, 1.0, 2.0, 3.0, 4.0], 1).unwrap();
        let w = TimeSeriesWindow::from_slice(&[5.0, 7.0, 6.0], 2).unwrap();
        let out = det.score(&w).unwrap();
        assert_eq!(out.raw.scores(), &[2.0, 3.0, 4.0]);
        assert_eq!(out.repr.dim(), (3, 3));
        assert_eq!(out.repr[[1, 1]], 2.0);
        assert_eq!(out.repr[[1, 2]], -1.0);
        let late = TimeSeriesWindow::from_slice(&[1.0, 1.0], 4).unwrap();
        assert!(det.score(&late).is_err());
    }
}
