//! Complementary-scorer benchmark: a simulated detector that is strong on
//! contextual anomalies, a mock language model that is strong on point
//! anomalies, and every fusion variant trained on top of both.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::collab::{train_collab, CollabConfig, LossVariant};
use crate::data::{gen_benchmark, split_len, AnomalyKind, AnomalySpan, BenchmarkConfig, LabeledSeries, Split};
use crate::error::{Error, Result};
use crate::eval::{best_f1_threshold, per_kind_metrics, DetectionMetrics, KlRow, PerKindMetrics};
use crate::llm::{llm_windows, score_window, ExampleStore, FixtureEntry, MockBackend, PromptTemplate, ScoringPlan};
use crate::series::{ScoreKind, ScoreSeries, TimeSeriesWindow};
use crate::tsadm::{Detector, SimulatedDetector};

/// Per-slot score `|N(0, noise²)| + signal`, where the signal depends on the
/// kind of anomaly covering the slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreProfile {
    pub noise: f64,
    pub contextual: f64,
    pub point: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplementaryConfig {
    pub benchmark: BenchmarkConfig,
    pub detector: ScoreProfile,
    pub llm: ScoreProfile,
    /// Slots per language-model prompt.
    pub llm_window: usize,
    pub collab: CollabConfig,
    /// Learning rates tried per variant; the one with the best validation
    /// F1 is kept.
    pub lr_grid: Vec<f64>,
    pub seed: u64,
}

impl ComplementaryConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            benchmark: BenchmarkConfig::complementary(seed),
            detector: ScoreProfile {
                noise: 0.1,
                contextual: 1.0,
                point: 0.1,
            },
            llm: ScoreProfile {
                noise: 0.1,
                contextual: 0.3,
                point: 0.9,
            },
            llm_window: 100,
            collab: CollabConfig {
                seed,
                ..CollabConfig::default()
            },
            lr_grid: vec![0.01, 0.001],
            seed,
        }
    }
}

pub fn simulate_scores(series: &LabeledSeries, profile: &ScoreProfile, unit: bool, seed: u64) -> Result<Vec<f64>> {
    let noise = Normal::new(0.0, profile.noise).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut signal = vec![0.0; series.len()];
    for sp in &series.spans {
        let v = match sp.kind {
            AnomalyKind::Contextual => profile.contextual,
            AnomalyKind::Point => profile.point,
        };
        signal[sp.start..sp.end].iter_mut().for_each(|s| *s = v);
    }
    Ok(signal
        .into_iter()
        .map(|s| {
            let v = noise.sample(&mut rng).abs() + s;
            if unit {
                v.min(1.0)
            } else {
                v
            }
        })
        .collect())
}

/// Fixture entries tiling each split range separately, so every split's
/// windows have their own ids.
pub fn fixture_for(series: &LabeledSeries, split: &Split, scores: &[f64], window: usize) -> Result<Vec<FixtureEntry>> {
    let mut out = Vec::new();
    for r in [&split.train, &split.val, &split.test] {
        for w in llm_windows(&series.window(r.clone())?, window)? {
            let a = w.start_index();
            out.push(FixtureEntry {
                window_id: w.id(),
                scores: scores[a..a + w.len()].to_vec(),
                run: None,
            });
        }
    }
    Ok(out)
}

/// Scores `window` through the mock backend, one prompt per LLM window.
pub fn mock_llm_scores(backend: &MockBackend, window: &TimeSeriesWindow, llm_window: usize) -> Result<ScoreSeries> {
    let store = ExampleStore::new(2)?;
    let template = PromptTemplate::mgab();
    let plan = ScoringPlan {
        llm_window,
        store: &store,
        template: &template,
        budget: 1 << 16,
        max_in_flight: 4,
    };
    score_window(window, &plan, |p, n| backend.lookup(&p.window_id, n))
}

pub fn local_spans(spans: &[AnomalySpan], range: &std::ops::Range<usize>) -> Vec<AnomalySpan> {
    spans
        .iter()
        .filter(|s| s.start >= range.start && s.end <= range.end)
        .map(|s| AnomalySpan {
            start: s.start - range.start,
            end: s.end - range.start,
            kind: s.kind,
        })
        .collect()
}

/// Best F1 computed separately on each kind's slots plus the clean slots.
pub fn per_kind_best(scores: &[f64], spans: &[AnomalySpan]) -> Result<PerKindMetrics> {
    let mut out = [crate::eval::KindMetrics::NoPositives; 2];
    for (k, kind) in [AnomalyKind::Contextual, AnomalyKind::Point].into_iter().enumerate() {
        let mut owner = vec![None; scores.len()];
        for sp in spans {
            owner[sp.start..sp.end].iter_mut().for_each(|o| *o = Some(sp.kind));
        }
        let (s, l): (Vec<f64>, Vec<u8>) = scores
            .iter()
            .zip(&owner)
            .filter(|(_, o)| o.is_none() || **o == Some(kind))
            .map(|(&s, o)| (s, u8::from(o.is_some())))
            .unzip();
        if l.contains(&1) {
            out[k] = crate::eval::KindMetrics::Metrics(best_f1_threshold(&s, &l)?);
        }
    }
    Ok(PerKindMetrics {
        contextual: out[0],
        point: out[1],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerResult {
    /// Best F1 over all test anomalies.
    pub metrics: DetectionMetrics,
    /// Breakdown at the overall best threshold.
    pub per_kind: PerKindMetrics,
    /// Best F1 on each kind separately.
    pub per_kind_best: PerKindMetrics,
}

fn evaluate(scores: &[f64], labels: &[u8], spans: &[AnomalySpan]) -> Result<ScorerResult> {
    let metrics = best_f1_threshold(scores, labels)?;
    Ok(ScorerResult {
        per_kind: per_kind_metrics(scores, spans, metrics.threshold)?,
        per_kind_best: per_kind_best(scores, spans)?,
        metrics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRun {
    pub result: ScorerResult,
    pub lr: f64,
    /// Validation F1 for each grid entry, in grid order.
    pub val_f1: Vec<f64>,
    pub loss_curve: Vec<f64>,
    pub kl: Vec<KlRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplementaryReport {
    pub detector: ScorerResult,
    pub llm: ScorerResult,
    pub variants: BTreeMap<String, VariantRun>,
}

impl ComplementaryReport {
    pub fn f1(&self, variant: LossVariant) -> Option<f64> {
        self.variants.get(variant.name()).map(|v| v.result.metrics.f1)
    }

    pub fn best_single(&self) -> f64 {
        self.detector.metrics.f1.max(self.llm.metrics.f1)
    }

    pub fn worst_single(&self) -> f64 {
        self.detector.metrics.f1.min(self.llm.metrics.f1)
    }
}

/// Everything produced before fusion training: data, both score streams and
/// the split.
pub struct Prepared {
    pub series: LabeledSeries,
    pub split: Split,
    pub detector: Detector,
    pub llm_fixture: Vec<FixtureEntry>,
}

pub fn prepare(cfg: &ComplementaryConfig) -> Result<Prepared> {
    let series = gen_benchmark(&cfg.benchmark)?;
    let split = split_len(series.len())?;
    let det = simulate_scores(&series, &cfg.detector, false, cfg.seed.wrapping_add(10))?;
    let llm = simulate_scores(&series, &cfg.llm, true, cfg.seed.wrapping_add(20))?;
    let llm_fixture = fixture_for(&series, &split, &llm, cfg.llm_window)?;
    let dims = series.values.ncols();
    Ok(Prepared {
        series,
        split,
        detector: Detector::Simulated(SimulatedDetector::new(det, dims)?),
        llm_fixture,
    })
}

pub fn run_complementary(cfg: &ComplementaryConfig, variants: &[LossVariant]) -> Result<ComplementaryReport> {
    let prep = prepare(cfg)?;
    let backend = MockBackend::from_entries(prep.llm_fixture.clone(), 0);
    let train = prep.series.window(prep.split.train.clone())?;
    let test = prep.series.window(prep.split.test.clone())?;
    let llm_train = mock_llm_scores(&backend, &train, cfg.llm_window)?;
    let llm_test = mock_llm_scores(&backend, &test, cfg.llm_window)?;
    let labels = test.labels().expect("benchmark windows are labelled").to_vec();
    let spans = local_spans(&prep.series.spans, &prep.split.test);

    use crate::tsadm::Scorer;
    let det_test = prep.detector.score(&test)?.raw.into_scores();
    let detector = evaluate(&det_test, &labels, &spans)?;
    let llm = evaluate(llm_test.scores(), &labels, &spans)?;

    let val = prep.series.window(prep.split.val.clone())?;
    let llm_val = mock_llm_scores(&backend, &val, cfg.llm_window)?;
    let val_labels = val.labels().expect("benchmark windows are labelled").to_vec();
    let grid = if cfg.lr_grid.is_empty() {
        vec![cfg.collab.lr]
    } else {
        cfg.lr_grid.clone()
    };

    let mut out = BTreeMap::new();
    for &v in variants {
        let mut best: Option<(f64, f64, crate::collab::TrainedCollab)> = None;
        let mut val_f1 = Vec::new();
        for &lr in &grid {
            let cc = CollabConfig { lr, ..cfg.collab };
            let echo = serde_json::to_value(ComplementaryConfig {
                collab: cc,
                ..cfg.clone()
            })?;
            let trained = train_collab(&train, prep.detector.clone(), &llm_train, v, &cc, echo)?;
            let fused_val = trained.pipeline.detect(&val, &llm_val)?;
            // A validation split without anomalies cannot rank the grid; keep
            // the first entry.
            let f1 = if val_labels.contains(&1) {
                best_f1_threshold(fused_val.scores(), &val_labels)?.f1
            } else {
                0.0
            };
            val_f1.push(f1);
            if best.as_ref().is_none_or(|(b, _, _)| f1 > *b) {
                best = Some((f1, lr, trained));
            }
        }
        let (_, lr, trained) = best.expect("grid is non-empty");
        let fused = trained.pipeline.detect(&test, &llm_test)?;
        debug_assert_eq!(fused.kind(), ScoreKind::Collated);
        out.insert(
            v.name().to_string(),
            VariantRun {
                result: evaluate(fused.scores(), &labels, &spans)?,
                lr,
                val_f1,
                loss_curve: trained.loss_curve,
                kl: trained.kl,
            },
        );
    }
    Ok(ComplementaryReport {
        detector,
        llm,
        variants: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulated_scores_follow_profile() {
        let series = gen_benchmark(&BenchmarkConfig::complementary(3)).unwrap();
        let p = ScoreProfile {
            noise: 0.0,
            contextual: 1.0,
            point: 0.2,
        };
        let s = simulate_scores(&series, &p, true, 0).unwrap();
        for sp in &series.spans {
            let want = if sp.kind == AnomalyKind::Contextual { 1.0 } else { 0.2 };
            assert!(s[sp.start..sp.end].iter().all(|v| *v == want));
        }
        let anomalous: usize = series.labels.iter().map(|&l| l as usize).sum();
        assert_eq!(s.iter().filter(|v| **v > 0.0).count(), anomalous);
    }

    #[test]
    fn mock_path_reproduces_fixture() {
        let cfg = ComplementaryConfig::new(5);
        let prep = prepare(&cfg).unwrap();
        let backend = MockBackend::from_entries(prep.llm_fixture.clone(), 0);
        let test = prep.series.window(prep.split.test.clone()).unwrap();
        let got = mock_llm_scores(&backend, &test, cfg.llm_window).unwrap();
        let want: Vec<f64> = prep
            .llm_fixture
            .iter()
            .filter(|e| e.window_id[1..].parse::<usize>().unwrap() >= prep.split.test.start)
            .flat_map(|e| e.scores.clone())
            .collect();
        assert_eq!(got.scores(), &want[..]);
    }

    #[test]
    fn local_spans_shift() {
        let spans = vec![
            AnomalySpan {
                start: 3,
                end: 5,
                kind: AnomalyKind::Point,
            },
            AnomalySpan {
                start: 12,
                end: 14,
                kind: AnomalyKind::Contextual,
            },
        ];
        let l = local_spans(&spans, &(10..20));
        assert_eq!(l.len(), 1);
        assert_eq!((l[0].start, l[0].end), (2, 4));
    }
}
