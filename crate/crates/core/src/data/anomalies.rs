use ndarray::s;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AnomalyKind, AnomalySpan, LabeledSeries};
use crate::error::{Error, Result};
use crate::math::std_pop;

const MAX_TRIES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextualConfig {
    pub count: usize,
    pub span_min: usize,
    pub span_max: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointConfig {
    pub count: usize,
    /// Shift in units of the series standard deviation.
    pub magnitude: f64,
    pub seed: u64,
}

/// True when `[a, b)` keeps at least one clean slot between itself and
/// every existing span.
fn is_free(spans: &[AnomalySpan], a: usize, b: usize) -> bool {
    spans.iter().all(|sp| b + 1 <= sp.start || a >= sp.end + 1)
}

/// Overwrites `count` segments with copies of later segments of the clean
/// series. Each source lies at least one span length ahead.
pub fn insert_contextual_anomalies(series: &LabeledSeries, cfg: &ContextualConfig) -> Result<LabeledSeries> {
    if cfg.count == 0 || cfg.span_min == 0 || cfg.span_min > cfg.span_max {
        return Err(Error::InvalidInput(format!(
            "need count >= 1 and 1 <= span_min <= span_max, got {cfg:?}"
        )));
    }
    let t = series.len();
    let clean = series.values.clone();
    let mut out = series.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut placed = 0;
    let mut tries = 0;
    while placed < cfg.count {
        tries += 1;
        if tries > MAX_TRIES {
            return Err(Error::InsufficientRoom {
                requested: cfg.count,
                placed,
            });
        }
        let span = rng.random_range(cfg.span_min..=cfg.span_max);
        // The source needs `start + offset + span ≤ t` with `offset ≥ span`.
        if 2 * span + 1 > t {
            continue;
        }
        let start = rng.random_range(1..=t - 2 * span);
        let end = start + span;
        if !is_free(&out.spans, start, end) {
            continue;
        }
        let offset = rng.random_range(span..=t - end);
        let src = start + offset;
        out.values
            .slice_mut(s![start..end, ..])
            .assign(&clean.slice(s![src..src + span, ..]));
        out.spans.push(AnomalySpan {
            start,
            end,
            kind: AnomalyKind::Contextual,
        });
        placed += 1;
    }
    out.sync_labels();
    Ok(out)
}

/// Shifts `count` isolated slots by `±magnitude·std` (per dimension).
pub fn insert_point_anomalies(series: &LabeledSeries, cfg: &PointConfig) -> Result<LabeledSeries> {
    if cfg.count == 0 || !(cfg.magnitude > 0.0) {
        return Err(Error::InvalidInput(format!("need count >= 1 and magnitude > 0, got {cfg:?}")));
    }
    let t = series.len();
    if t < 3 {
        return Err(Error::TooShort { len: t, min: 3 });
    }
    let stds: Vec<f64> = series.values.columns().into_iter().map(|c| std_pop(&c.to_vec())).collect();
    let mut out = series.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut placed = 0;
    let mut tries = 0;
    while placed < cfg.count {
        tries += 1;
        if tries > MAX_TRIES {
            return Err(Error::InsufficientRoom {
                requested: cfg.count,
                placed,
            });
        }
        let at = rng.random_range(1..t - 1);
        if !is_free(&out.spans, at, at + 1) {
            continue;
        }
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        for (c, sd) in stds.iter().enumerate() {
            out.values[[at, c]] += sign * cfg.magnitude * sd;
        }
        out.spans.push(AnomalySpan {
            start: at,
            end: at + 1,
            kind: AnomalyKind::Point,
        });
        placed += 1;
    }
    out.sync_labels();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::mackey_glass::{gen_mackey_glass, MackeyGlassConfig};

    fn base(len: usize) -> LabeledSeries {
        gen_mackey_glass(&MackeyGlassConfig {
            length: len,
            ..MackeyGlassConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn one_contextual_span() {
        let s = base(10_000);
        let cfg = ContextualConfig {
            count: 1,
            span_min: 50,
            span_max: 50,
            seed: 1,
        };
        let out = insert_contextual_anomalies(&s, &cfg).unwrap();
        assert_eq!(out.labels.iter().map(|&v| v as usize).sum::<usize>(), 50);
        let sp = out.spans[0];
        // Copy semantics: the overwritten segment equals some later clean segment.
        let seg = out.values.slice(s![sp.start..sp.end, 0]).to_vec();
        let clean = s.values.column(0).to_vec();
        let found = (sp.end..=clean.len() - 50).any(|src| clean[src..src + 50] == seg[..]);
        assert!(found);
    }

    #[test]
    fn mgab_scale_without_overlap() {
        let s = base(100_000);
        let ctx = insert_contextual_anomalies(
            &s,
            &ContextualConfig {
                count: 10,
                span_min: 100,
                span_max: 400,
                seed: 3,
            },
        )
        .unwrap();
        let both = insert_point_anomalies(
            &ctx,
            &PointConfig {
                count: 10,
                magnitude: 5.0,
                seed: 4,
            },
        )
        .unwrap();
        assert!(both.check_spans().is_ok());
        let total: usize = both.spans.iter().map(|s| s.end - s.start).sum();
        assert_eq!(both.labels.iter().map(|&v| v as usize).sum::<usize>(), total);
    }

    #[test]
    fn points_are_isolated_and_large() {
        let s = base(2000);
        let sd = std_pop(&s.values.column(0).to_vec());
        let out = insert_point_anomalies(
            &s,
            &PointConfig {
                count: 3,
                magnitude: 5.0,
                seed: 9,
            },
        )
        .unwrap();
        assert_eq!(out.labels.iter().filter(|&&v| v == 1).count(), 3);
        for sp in &out.spans {
            let x = out.values.column(0);
            let t = sp.start;
            assert!((x[t] - x[t - 1]).abs() > 2.5 * sd);
            assert!((x[t] - x[t + 1]).abs() > 2.5 * sd);
        }
    }

    #[test]
    fn too_many_anomalies_fail() {
        let s = base(100);
        let err = insert_contextual_anomalies(
            &s,
            &ContextualConfig {
                count: 10,
                span_min: 20,
                span_max: 20,
                seed: 0,
            },
        );
        assert!(matches!(err, Err(Error::InsufficientRoom { .. })));
    }
}
