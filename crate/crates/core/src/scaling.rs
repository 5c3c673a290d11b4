//! Range scaling of raw detector scores.
//!
//! `s = ṡ / (ṡ_max − ṡ_min)^(1/d)`. The minimum is *not* subtracted and the
//! output is not clamped, so scaled scores can exceed 1 when `d > 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{ScoreKind, ScoreSeries};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationConfig {
    pub d: f64,
}

impl NormalizationConfig {
    pub fn new(d: f64) -> Result<Self> {
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::InvalidInput(format!("root exponent d must be finite and > 0, got {d}")));
        }
        Ok(Self { d })
    }
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        Self { d: 1.0 }
    }
}

/// Range of a reference score set, kept so that inference windows are scaled
/// with the statistics seen during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRange {
    pub min: f64,
    pub max: f64,
}

impl ScoreRange {
    pub fn of(scores: &[f64]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::InvalidInput("cannot take the range of an empty score set".into()));
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("raw scores"));
        }
        let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == min {
            return Err(Error::DegenerateRange(max));
        }
        Ok(Self { min, max })
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    /// Divisor `(max − min)^(1/d)`.
    pub fn divisor(&self, cfg: NormalizationConfig) -> f64 {
        self.width().powf(1.0 / cfg.d)
    }

    pub fn apply(&self, raw: &[f64], cfg: NormalizationConfig) -> Vec<f64> {
        let div = self.divisor(cfg);
        raw.iter().map(|v| v / div).collect()
    }
}

/// Scales a raw score series by its own range.
pub fn normalize_scores(raw: &ScoreSeries, cfg: NormalizationConfig) -> Result<ScoreSeries> {
    let range = ScoreRange::of(raw.scores())?;
    ScoreSeries::new(range.apply(raw.scores(), cfg), ScoreKind::ScaledTsadm)
}
