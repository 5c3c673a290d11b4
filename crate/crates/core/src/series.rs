//! In-memory series types shared by every scorer.

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `T x D` slice of a multivariate series, optionally labelled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesWindow {
    values: Array2<f64>,
    start_index: usize,
    labels: Option<Vec<u8>>,
}

impl TimeSeriesWindow {
    pub fn new(values: Array2<f64>, start_index: usize, labels: Option<Vec<u8>>) -> Result<Self> {
        let (t, d) = values.dim();
        if t == 0 || d == 0 {
            return Err(Error::InvalidInput(format!(
                "window must have at least one slot and one dimension, got {t}x{d}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("window values"));
        }
        if let Some(l) = &labels {
            if l.len() != t {
                return Err(Error::LengthMismatch {
                    left: t,
                    right: l.len(),
                });
            }
            if l.iter().any(|&v| v > 1) {
                return Err(Error::InvalidInput("labels must be 0 or 1".into()));
            }
        }
        Ok(Self {
            values,
            start_index,
            labels,
        })
    }

    /// Univariate convenience constructor.
    pub fn from_slice(values: &[f64], start_index: usize) -> Result<Self> {
        let arr = Array2::from_shape_vec((values.len(), 1), values.to_vec())
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        Self::new(arr, start_index, None)
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn dims(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn start_index(&self) -> usize {
        self.start_index
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    /// Stable identity used to key LLM fixtures and results.
    pub fn id(&self) -> String {
        window_id(self.start_index)
    }

    /// Sub-window `[from, to)` in local slot coordinates.
    pub fn slice(&self, from: usize, to: usize) -> Result<Self> {
        if from >= to || to > self.len() {
            return Err(Error::InvalidInput(format!(
                "slice {from}..{to} out of bounds for window of length {}",
                self.len()
            )));
        }
        let labels = self.labels.as_ref().map(|l| l[from..to].to_vec());
        Self::new(
            self.values.slice(s![from..to, ..]).to_owned(),
            self.start_index + from,
            labels,
        )
    }
}

pub fn window_id(start_index: usize) -> String {
    format!("w{start_index}")
}

/// Provenance of a score vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScoreKind {
    /// Raw detector output (reconstruction error), unbounded above.
    RawTsadm,
    /// Detector output after range scaling.
    ScaledTsadm,
    /// Detector output after the learned monotone mapping.
    AlignedTsadm,
    /// Language-model score.
    Llm,
    /// Fused output of the conditional network.
    Collated,
}

impl ScoreKind {
    fn unit_bounded(self) -> bool {
        matches!(
            self,
            ScoreKind::Llm | ScoreKind::AlignedTsadm | ScoreKind::Collated
        )
    }
}

/// Per-slot anomaly scores tagged with their provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    scores: Vec<f64>,
    kind: ScoreKind,
}

impl ScoreSeries {
    pub fn new(scores: Vec<f64>, kind: ScoreKind) -> Result<Self> {
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("score series"));
        }
        if kind.unit_bounded() {
            if let Some((slot, &value)) = scores
                .iter()
                .enumerate()
                .find(|(_, v)| !(0.0..=1.0).contains(*v))
            {
                return Err(Error::ScoreOutOfRange { slot, value });
            }
        }
        if kind == ScoreKind::RawTsadm && scores.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidInput("raw detector scores must be >= 0".into()));
        }
        Ok(Self { scores, kind })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn into_scores(self) -> Vec<f64> {
        self.scores
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn window_rejects_non_finite_and_bad_labels() {
        assert!(TimeSeriesWindow::new(array![[1.0], [f64::NAN]], 0, None).is_err());
        assert!(TimeSeriesWindow::new(array![[1.0], [2.0]], 0, Some(vec![0])).is_err());
        assert!(TimeSeriesWindow::new(array![[1.0], [2.0]], 0, Some(vec![0, 2])).is_err());
        assert!(TimeSeriesWindow::new(Array2::zeros((0, 1)), 0, None).is_err());
    }

    #[test]
    fn slice_keeps_absolute_offsets() {
        let w = TimeSeriesWindow::new(
            array![[0.0], [1.0], [2.0], [3.0]],
            10,
            Some(vec![0, 1, 0, 0]),
        )
        .unwrap();
        let sub = w.slice(1, 3).unwrap();
        assert_eq!(sub.start_index(), 11);
        assert_eq!(sub.labels(), Some(&[1u8, 0][..]));
        assert_eq!(sub.id(), "w11");
    }

    #[test]
    fn score_kind_bounds() {
        assert!(ScoreSeries::new(vec![0.0, 1.0], ScoreKind::Llm).is_ok());
        assert!(matches!(
            ScoreSeries::new(vec![0.2, 1.3], ScoreKind::Llm),
            Err(Error::ScoreOutOfRange { slot: 1, .. })
        ));
        assert!(ScoreSeries::new(vec![3.0], ScoreKind::ScaledTsadm).is_ok());
        assert!(ScoreSeries::new(vec![-0.1], ScoreKind::RawTsadm).is_err());
    }
}
