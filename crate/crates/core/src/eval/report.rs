//! On-disk run artifacts: `metrics.json`, curve CSVs and SVG score overlays.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{DetectionMetrics, PerKindMetrics};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub per_kind: Option<PerKindMetrics>,
    pub config_echo: serde_json::Value,
    pub seed: u64,
    /// Additional named results (for example per-variant metrics).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl MetricsFile {
    pub fn new(
        m: &DetectionMetrics,
        per_kind: Option<PerKindMetrics>,
        config_echo: serde_json::Value,
        seed: u64,
    ) -> Self {
        Self {
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            threshold: m.threshold,
            tp: m.tp,
            fp: m.fp,
            fn_: m.fn_,
            per_kind,
            config_echo,
            seed,
            extra: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlRow {
    pub iteration: usize,
    pub kl_aligned: f64,
    pub kl_raw: f64,
}

/// One plotted window: labelled slots are shaded behind the score lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Overlay {
    pub name: String,
    pub labels: Vec<u8>,
    pub series: Vec<(String, Vec<f64>)>,
}

#[derive(Debug, Clone, Default)]
pub struct RunArtifacts {
    pub metrics: Option<MetricsFile>,
    pub curves: Vec<(String, Vec<f64>)>,
    pub kl: Vec<KlRow>,
    pub overlays: Vec<Overlay>,
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes every artifact under `out_dir`, overwriting previous files.
pub fn emit_report(run: &RunArtifacts, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    if let Some(m) = &run.metrics {
        write(&out_dir.join("metrics.json"), &serde_json::to_string_pretty(m)?)?;
    }
    for (name, values) in &run.curves {
        let mut s = String::from("iteration,value\n");
        for (i, v) in values.iter().enumerate() {
            let _ = writeln!(s, "{i},{v}");
        }
        write(&out_dir.join(format!("loss_{name}.csv")), &s)?;
    }
    if !run.kl.is_empty() {
        let mut s = String::from("iteration,kl_aligned,kl_raw\n");
        for r in &run.kl {
            let _ = writeln!(s, "{},{},{}", r.iteration, r.kl_aligned, r.kl_raw);
        }
        write(&out_dir.join("kl.csv"), &s)?;
    }
    if !run.overlays.is_empty() {
        let dir = out_dir.join("plots");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for o in &run.overlays {
            write(&dir.join(format!("{}.svg", o.name)), &overlay_svg(o))?;
        }
    }
    Ok(())
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn overlay_svg(o: &Overlay) -> String {
    let (w, h, pad) = (900.0, 300.0, 30.0);
    let n = o
        .series
        .iter()
        .map(|(_, v)| v.len())
        .chain(std::iter::once(o.labels.len()))
        .max()
        .unwrap_or(0)
        .max(2);
    let finite = o.series.iter().flat_map(|(_, v)| v.iter().copied()).filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo < hi { (lo, hi) } else { (lo.min(0.0) - 0.5, hi.max(0.0) + 0.5) };
    let x = |i: usize| pad + (w - 2.0 * pad) * i as f64 / (n - 1) as f64;
    let y = |v: f64| h - pad - (h - 2.0 * pad) * (v - lo) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(&o.name));
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    let step = (w - 2.0 * pad) / (n - 1) as f64;
    for (i, &l) in o.labels.iter().enumerate() {
        if l == 1 {
            let _ = writeln!(
                s,
                r##"<rect x="{:.2}" y="{pad}" width="{:.2}" height="{:.2}" fill="#f4cccc"/>"##,
                x(i) - step / 2.0,
                step,
                h - 2.0 * pad
            );
        }
    }
    for (k, (name, v)) in o.series.iter().enumerate() {
        let pts: Vec<String> = v
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, &v)| format!("{:.2},{:.2}", x(i), y(v)))
            .collect();
        let color = COLORS[k % COLORS.len()];
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1" points="{}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.0}" y="{:.0}" font-size="12" fill="{color}">{}</text>"#,
            pad + 120.0 * k as f64,
            pad - 10.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics() -> MetricsFile {
        let m = crate::eval::prf1(&[0.9, 0.1], &[1, 0], 0.5).unwrap();
        MetricsFile::new(&m, None, serde_json::json!({"winLen": 5}), 42)
    }

    #[test]
    fn writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunArtifacts {
            metrics: Some(metrics()),
            curves: vec![("collab".into(), vec![1.0, 0.5, 0.25])],
            kl: (0..4)
                .map(|i| KlRow {
                    iteration: i,
                    kl_aligned: 1.0 / (i + 1) as f64,
                    kl_raw: 1.0,
                })
                .collect(),
            overlays: vec![Overlay {
                name: "w0 <test>".into(),
                labels: vec![0, 1, 0],
                series: vec![("llm".into(), vec![0.1, 0.9, 0.2]), ("fused".into(), vec![0.2, 0.8, f64::NAN])],
            }],
        };
        emit_report(&run, dir.path()).unwrap();
        emit_report(&run, dir.path()).unwrap();

        let m: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
        for key in ["precision", "recall", "f1", "threshold", "tp", "fp", "fn", "per_kind", "config_echo", "seed"] {
            assert!(m.get(key).is_some(), "missing {key}");
        }
        assert_eq!(m["seed"], 42);

        let kl = fs::read_to_string(dir.path().join("kl.csv")).unwrap();
        let iters: Vec<usize> = kl.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
        assert!(iters.windows(2).all(|w| w[0] < w[1]));

        let svg = fs::read_to_string(dir.path().join("plots").join("w0 <test>.svg")).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        assert!(dir.path().join("loss_collab.csv").exists());
    }
}
