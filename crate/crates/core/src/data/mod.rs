//! Synthetic benchmarks, splits and dataset files.

mod anomalies;
mod csv_io;
mod mackey_glass;

pub use anomalies::{insert_contextual_anomalies, insert_point_anomalies, ContextualConfig, PointConfig};
pub use csv_io::{load_csv, save_csv};
pub use mackey_glass::{gen_mackey_glass, MackeyGlassConfig};

use std::ops::Range;
use std::path::Path;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeriesWindow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnomalyKind {
    Contextual,
    Point,
}

/// Half-open slot range `[start, end)` with its anomaly kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnomalySpan {
    pub start: usize,
    pub end: usize,
    pub kind: AnomalyKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSeries {
    pub values: Array2<f64>,
    pub labels: Vec<u8>,
    pub spans: Vec<AnomalySpan>,
}

impl LabeledSeries {
    pub fn new(values: Array2<f64>, labels: Vec<u8>, spans: Vec<AnomalySpan>) -> Result<Self> {
        if labels.len() != values.nrows() {
            return Err(Error::LengthMismatch {
                left: values.nrows(),
                right: labels.len(),
            });
        }
        let s = Self { values, labels, spans };
        s.check_spans()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn check_spans(&self) -> Result<()> {
        let mut sorted = self.spans.clone();
        sorted.sort_by_key(|s| s.start);
        for w in sorted.windows(2) {
            if w[1].start < w[0].end {
                return Err(Error::InvalidInput(format!("spans {:?} and {:?} overlap", w[0], w[1])));
            }
        }
        if let Some(sp) = sorted.iter().find(|s| s.end > self.len() || s.start >= s.end) {
            return Err(Error::InvalidInput(format!("span {sp:?} is empty or out of range")));
        }
        Ok(())
    }

    pub(crate) fn sync_labels(&mut self) {
        self.spans.sort_by_key(|s| s.start);
        self.labels.iter_mut().for_each(|l| *l = 0);
        for sp in &self.spans {
            self.labels[sp.start..sp.end].iter_mut().for_each(|l| *l = 1);
        }
    }

    /// Slot masks per kind.
    pub fn kind_mask(&self, kind: AnomalyKind) -> Vec<bool> {
        let mut m = vec![false; self.len()];
        for sp in self.spans.iter().filter(|s| s.kind == kind) {
            m[sp.start..sp.end].iter_mut().for_each(|v| *v = true);
        }
        m
    }

    /// Labeled window over `range`, keeping absolute slot offsets.
    pub fn window(&self, range: Range<usize>) -> Result<TimeSeriesWindow> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::InvalidInput(format!("range {range:?} out of bounds for {}", self.len())));
        }
        TimeSeriesWindow::new(
            self.values.slice(s![range.clone(), ..]).to_owned(),
            range.start,
            Some(self.labels[range].to_vec()),
        )
    }

    pub fn to_window(&self) -> Result<TimeSeriesWindow> {
        self.window(0..self.len())
    }
}

/// Contiguous train / validation / test ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

pub const MIN_SPLIT_LEN: usize = 10;

/// 40 / 10 / 50 split in temporal order, floor-rounded boundaries.
pub fn split_len(len: usize) -> Result<Split> {
    if len < MIN_SPLIT_LEN {
        return Err(Error::TooShort {
            len,
            min: MIN_SPLIT_LEN,
        });
    }
    let a = len * 4 / 10;
    let b = len / 2;
    Ok(Split {
        train: 0..a,
        val: a..b,
        test: b..len,
    })
}

pub fn split(dataset: &[LabeledSeries]) -> Result<Vec<Split>> {
    dataset.iter().map(|s| split_len(s.len())).collect()
}

/// Everything needed to regenerate a synthetic benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub generator: MackeyGlassConfig,
    pub contextual: ContextualConfig,
    pub point: PointConfig,
}

impl BenchmarkConfig {
    /// Mackey-Glass with ten contextual and ten point anomalies.
    pub fn complementary(seed: u64) -> Self {
        Self {
            generator: MackeyGlassConfig {
                length: 10_000,
                seed,
                ..MackeyGlassConfig::default()
            },
            contextual: ContextualConfig {
                count: 10,
                span_min: 5,
                span_max: 15,
                seed: seed.wrapping_add(1),
            },
            point: PointConfig {
                count: 10,
                magnitude: 5.0,
                seed: seed.wrapping_add(2),
            },
        }
    }
}

pub fn gen_benchmark(cfg: &BenchmarkConfig) -> Result<LabeledSeries> {
    let base = gen_mackey_glass(&cfg.generator)?;
    let with_ctx = if cfg.contextual.count > 0 {
        insert_contextual_anomalies(&base, &cfg.contextual)?
    } else {
        base
    };
    if cfg.point.count > 0 {
        insert_point_anomalies(&with_ctx, &cfg.point)
    } else {
        Ok(with_ctx)
    }
}

/// Sidecar written next to a generated CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub config: BenchmarkConfig,
    pub spans: Vec<AnomalySpan>,
}

pub fn save_meta(meta: &DatasetMeta, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(meta)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_meta(path: &Path) -> Result<DatasetMeta> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
