//! One function per subcommand. Every command reads and writes inside the
//! run directory and finishes by writing its manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use collate_core::collab::{load_pipeline, save_pipeline, train_collab, LossVariant};
use collate_core::data::{gen_benchmark, load_csv, load_meta, save_csv, save_meta, split_len, DatasetMeta, LabeledSeries};
use collate_core::eval::{best_f1_threshold, emit_report, per_kind_metrics, MetricsFile, Overlay, RunArtifacts};
use collate_core::experiment::{fixture_for, local_spans, run_complementary, simulate_scores, ComplementaryReport};
use collate_core::llm::{score_window, write_fixture, ExampleStore, LlmBackend, PromptTemplate, ScoringPlan};
use collate_core::theory::verify_all;
use collate_core::tsadm::{train_tsadm, Detector, SimulatedDetector};
use collate_core::{checkpoint, ScoreKind, ScoreSeries};

use crate::config::{DetectorKind, RunConfig};
use crate::error::CliError;
use crate::manifest::Recorder;

pub const DETECTOR_FORMAT: &str = "collate-detector";

pub const DATA_CSV: &str = "data.csv";
pub const META_JSON: &str = "meta.json";
pub const DETECTOR_JSON: &str = "detector.json";
pub const LLM_SCORES_CSV: &str = "llm_scores.csv";
pub const PIPELINE_JSON: &str = "pipeline.json";
pub const SCORES_CSV: &str = "scores.csv";

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_columns(path: &Path, names: &[&str], cols: &[&[f64]]) -> Result<(), CliError> {
    let csv_err = |e: csv::Error| CliError::Csv {
        path: path.to_path_buf(),
        msg: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["t"];
    header.extend_from_slice(names);
    w.write_record(&header).map_err(csv_err)?;
    let n = cols.first().map_or(0, |c| c.len());
    for i in 0..n {
        let mut rec = vec![i.to_string()];
        rec.extend(cols.iter().map(|c| c[i].to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn read_columns(path: &Path) -> Result<BTreeMap<String, Vec<f64>>, CliError> {
    let csv_err = |msg: String| CliError::Csv {
        path: path.to_path_buf(),
        msg,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(e.to_string()))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| csv_err(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(e.to_string()))?;
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| csv_err(format!("row {}: `{field}` is not a number", line + 2)))?;
            cols[c].push(v);
        }
    }
    Ok(header.into_iter().zip(cols).collect())
}

fn column(cols: &BTreeMap<String, Vec<f64>>, name: &str, path: &Path) -> Result<Vec<f64>, CliError> {
    cols.get(name).cloned().ok_or_else(|| CliError::Csv {
        path: path.to_path_buf(),
        msg: format!("missing column `{name}`"),
    })
}

fn load_series(rec: &mut Recorder, dir: &Path) -> Result<LabeledSeries, CliError> {
    let data = rec.input(dir.join(DATA_CSV))?;
    let meta = rec.input(dir.join(META_JSON))?;
    let w = load_csv(&data)?;
    let meta = load_meta(&meta)?;
    let labels = w
        .labels()
        .map(<[u8]>::to_vec)
        .unwrap_or_else(|| vec![0; w.len()]);
    Ok(LabeledSeries::new(w.values().to_owned(), labels, meta.spans)?)
}

fn load_llm_scores(rec: &mut Recorder, dir: &Path, len: usize) -> Result<Vec<f64>, CliError> {
    let path = rec.input(dir.join(LLM_SCORES_CSV))?;
    let s = column(&read_columns(&path)?, "score", &path)?;
    if s.len() != len {
        return Err(collate_core::Error::MissingLlmScores(format!("{} scores for {len} slots", s.len())).into());
    }
    Ok(s)
}

fn llm_slice(scores: &[f64], r: std::ops::Range<usize>) -> Result<ScoreSeries, CliError> {
    Ok(ScoreSeries::new(scores[r].to_vec(), ScoreKind::Llm)?)
}

pub fn gen_data(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = cfg.run_dir();
    ensure_dir(dir)?;
    let mut rec = Recorder::new(dir, "gen-data");
    let bench = cfg.benchmark();
    let series = gen_benchmark(&bench)?;
    save_csv(&series.to_window()?, &rec.output(dir.join(DATA_CSV)))?;
    save_meta(
        &DatasetMeta {
            config: bench,
            spans: series.spans.clone(),
        },
        &rec.output(dir.join(META_JSON)),
    )?;
    // Recorded answers for the mock backend.
    let split = split_len(series.len())?;
    let llm = simulate_scores(&series, &cfg.data.llm_profile, true, cfg.seed.wrapping_add(20))?;
    let fixture = fixture_for(&series, &split, &llm, cfg.llm.window)?;
    write_fixture(&rec.output(dir.join("llm_fixture.json")), &fixture)?;
    println!(
        "generated {} slots with {} anomaly spans in {}",
        series.len(),
        series.spans.len(),
        dir.display()
    );
    rec.finish(cfg)?;
    Ok(())
}

pub fn train_detector(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = cfg.run_dir();
    let mut rec = Recorder::new(dir, "train-tsadm");
    let series = load_series(&mut rec, dir)?;
    let split = split_len(series.len())?;
    let detector = match cfg.detector {
        DetectorKind::Attention => {
            let train = series.window(split.train.clone())?;
            let trained = train_tsadm(&train, &cfg.tsadm())?;
            emit_report(
                &RunArtifacts {
                    curves: vec![("tsadm".into(), trained.loss_curve.clone())],
                    ..RunArtifacts::default()
                },
                dir,
            )?;
            rec.output(dir.join("loss_tsadm.csv"));
            println!(
                "trained detector: reconstruction loss {:.6} -> {:.6}",
                trained.loss_curve.first().copied().unwrap_or(f64::NAN),
                trained.loss_curve.last().copied().unwrap_or(f64::NAN)
            );
            Detector::Attention(trained.model)
        }
        DetectorKind::Simulated => {
            let s = simulate_scores(&series, &cfg.data.detector_profile, false, cfg.seed.wrapping_add(10))?;
            println!("simulated detector over {} slots", s.len());
            Detector::Simulated(SimulatedDetector::new(s, series.values.ncols())?)
        }
    };
    checkpoint::save(&rec.output(dir.join(DETECTOR_JSON)), DETECTOR_FORMAT, &detector)?;
    rec.finish(cfg)?;
    Ok(())
}

pub fn score_llm(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = cfg.run_dir();
    let mut rec = Recorder::new(dir, "score-llm");
    let series = load_series(&mut rec, dir)?;
    let backend_cfg = cfg.backend();
    if let collate_core::llm::BackendMode::Mock { fixture } = &backend_cfg.mode {
        rec.input(fixture.clone())?;
    }
    let backend = LlmBackend::from_config(&backend_cfg)?;
    let store = ExampleStore::new(2)?;
    let template = PromptTemplate::builtin(&cfg.llm.template).expect("validated template");
    let plan = ScoringPlan {
        llm_window: cfg.llm.window,
        store: &store,
        template: &template,
        budget: cfg.llm.budget,
        max_in_flight: cfg.llm.max_in_flight,
    };
    let split = split_len(series.len())?;
    let mut all = Vec::with_capacity(series.len());
    for r in [split.train, split.val, split.test] {
        let w = series.window(r)?;
        let s = score_window(&w, &plan, |p, n| backend.request_scores(p, n))?;
        all.extend_from_slice(s.scores());
    }
    write_columns(&rec.output(dir.join(LLM_SCORES_CSV)), &["score"], &[&all])?;
    println!("scored {} slots in {}-slot prompts", all.len(), cfg.llm.window);
    rec.finish(cfg)?;
    Ok(())
}

fn load_detector(rec: &mut Recorder, dir: &Path) -> Result<Detector, CliError> {
    let path = rec.input(dir.join(DETECTOR_JSON))?;
    let d: Detector = checkpoint::load(&path, DETECTOR_FORMAT)?;
    Ok(match d {
        Detector::Attention(m) => {
            Detector::Attention(collate_core::tsadm::TsadmModel::from_parts(m.arch(), m.params().to_vec())?)
        }
        other => other,
    })
}

pub fn train_fusion(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = cfg.run_dir();
    let mut rec = Recorder::new(dir, "train-collab");
    let series = load_series(&mut rec, dir)?;
    let detector = load_detector(&mut rec, dir)?;
    let llm = load_llm_scores(&mut rec, dir, series.len())?;
    let split = split_len(series.len())?;
    let train = series.window(split.train.clone())?;
    let echo = serde_json::to_value(cfg)?;
    let trained = train_collab(
        &train,
        detector,
        &llm_slice(&llm, split.train)?,
        cfg.variant,
        &cfg.collab(),
        echo,
    )?;
    save_pipeline(&trained.pipeline, &rec.output(dir.join(PIPELINE_JSON)))?;
    let run = RunArtifacts {
        curves: vec![
            ("total".into(), trained.loss_curve.clone()),
            ("alignment".into(), trained.alignment_curve),
            ("fusion".into(), trained.fusion_curve),
        ],
        kl: trained.kl.clone(),
        ..RunArtifacts::default()
    };
    emit_report(&run, dir)?;
    for name in ["loss_total.csv", "loss_alignment.csv", "loss_fusion.csv", "kl.csv"] {
        if dir.join(name).is_file() {
            rec.output(dir.join(name));
        }
    }
    if let (Some(a), Some(b)) = (trained.kl.first(), trained.kl.last()) {
        println!(
            "trained {} fusion: loss {:.6} -> {:.6}; aligned KL {:.4} -> {:.4} (unaligned {:.4})",
            cfg.variant.name(),
            trained.loss_curve.first().copied().unwrap_or(f64::NAN),
            trained.loss_curve.last().copied().unwrap_or(f64::NAN),
            a.kl_aligned,
            b.kl_aligned,
            a.kl_raw
        );
    }
    rec.finish(cfg)?;
    Ok(())
}

pub fn detect(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = cfg.run_dir();
    let mut rec = Recorder::new(dir, "detect");
    let pipeline = load_pipeline(&rec.input(dir.join(PIPELINE_JSON))?)?;
    let series = load_series(&mut rec, dir)?;
    let llm = load_llm_scores(&mut rec, dir, series.len())?;
    let split = split_len(series.len())?;
    let test = series.window(split.test.clone())?;
    let llm_test = llm_slice(&llm, split.test)?;
    let det = pipeline.run(&test, &llm_test)?;
    let labels: Vec<f64> = test.labels().unwrap_or(&[]).iter().map(|&l| l as f64).collect();
    let labels = if labels.is_empty() { vec![0.0; test.len()] } else { labels };
    write_columns(
        &rec.output(dir.join(SCORES_CSV)),
        &["raw", "scaled", "aligned", "llm", "collated", "label"],
        &[&det.raw, &det.scaled, &det.aligned, llm_test.scores(), det.collated.scores(), &labels],
    )?;
    println!("scored {} test slots with the {} pipeline", test.len(), pipeline.variant.name());
    rec.finish(cfg)?;
    Ok(())
}

pub fn evaluate(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = cfg.run_dir();
    let mut rec = Recorder::new(dir, "eval");
    let scores_path = rec.input(dir.join(SCORES_CSV))?;
    let series = load_series(&mut rec, dir)?;
    let cols = read_columns(&scores_path)?;
    let collated = column(&cols, "collated", &scores_path)?;
    let labels: Vec<u8> = column(&cols, "label", &scores_path)?.iter().map(|&v| u8::from(v > 0.5)).collect();
    let split = split_len(series.len())?;
    let spans = local_spans(&series.spans, &split.test);
    if labels.len() != split.test.len() {
        return Err(collate_core::Error::LengthMismatch {
            left: labels.len(),
            right: split.test.len(),
        }
        .into());
    }
    let m = best_f1_threshold(&collated, &labels)?;
    let per_kind = per_kind_metrics(&collated, &spans, m.threshold)?;
    let mut file = MetricsFile::new(&m, Some(per_kind), serde_json::to_value(cfg)?, cfg.seed);
    let mut overlay = Vec::new();
    for name in ["raw", "llm", "aligned", "collated"] {
        let c = column(&cols, name, &scores_path)?;
        if name != "aligned" {
            let best = best_f1_threshold(&c, &labels)?;
            file.extra.insert(format!("best_f1_{name}"), serde_json::json!(best.f1));
        }
        if name != "raw" {
            overlay.push((name.to_string(), c));
        }
    }
    let run = RunArtifacts {
        metrics: Some(file),
        overlays: vec![Overlay {
            name: "scores".into(),
            labels: labels.clone(),
            series: overlay,
        }],
        ..RunArtifacts::default()
    };
    emit_report(&run, dir)?;
    rec.output(dir.join("metrics.json"));
    rec.output(dir.join("plots").join("scores.svg"));
    println!(
        "F1 {:.4} (precision {:.4}, recall {:.4}) at threshold {:.6}",
        m.f1, m.precision, m.recall, m.threshold
    );
    rec.finish(cfg)?;
    Ok(())
}

pub fn verify(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = cfg.run_dir().join("theory");
    ensure_dir(&dir)?;
    let mut rec = Recorder::new(cfg.run_dir(), "verify");
    let reports = verify_all(cfg.seed)?;
    let mut failed = Vec::new();
    for r in &reports {
        let path = rec.output(dir.join(format!("{}.json", r.theorem)));
        let text = serde_json::to_string_pretty(r)?;
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        println!("[{}] {}", if r.pass { "PASS" } else { "FAIL" }, r.summary());
        if !r.pass {
            failed.push(r.theorem.clone());
        }
    }
    rec.finish(cfg)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(failed.join(", ")))
    }
}

fn ablation_rows(rep: &ComplementaryReport) -> Vec<(String, f64, f64, f64)> {
    let mut rows = Vec::new();
    let labels = [
        (LossVariant::Collaborative, "full"),
        (LossVariant::NoAlignment, "no alignment"),
        (LossVariant::MseVariant, "squared-error loss"),
        (LossVariant::FixedWeights, "fixed weights"),
    ];
    for (v, label) in labels {
        if let Some(run) = rep.variants.get(v.name()) {
            let m = &run.result.metrics;
            rows.push((label.to_string(), m.f1, m.precision, m.recall));
        }
    }
    let d = &rep.detector.metrics;
    rows.push(("detector only".into(), d.f1, d.precision, d.recall));
    let l = &rep.llm.metrics;
    rows.push(("language model only".into(), l.f1, l.precision, l.recall));
    rows
}

fn markdown(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = format!("| {} |\n|{}\n", header.join(" | "), "---|".repeat(header.len()));
    for r in rows {
        let _ = writeln!(s, "| {} |", r.join(" | "));
    }
    s
}

fn write_text(rec: &mut Recorder, path: PathBuf, text: &str) -> Result<(), CliError> {
    let path = rec.output(path);
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}

pub fn ablate(cfg: &RunConfig, grid: bool) -> Result<(), CliError> {
    let dir = cfg.run_dir();
    ensure_dir(dir)?;
    let mut rec = Recorder::new(dir, if grid { "ablate-grid" } else { "ablate" });
    if grid {
        let mut rows = Vec::new();
        let mut json = Vec::new();
        for &lr in &cfg.grid.colr {
            for &p in &cfg.grid.patch_size {
                let mut c = cfg.complementary();
                c.collab.lr = lr;
                c.collab.patch_size = p;
                c.lr_grid = vec![lr];
                let rep = run_complementary(&c, &[cfg.variant])?;
                let f1 = rep.f1(cfg.variant).expect("variant was run");
                rows.push(vec![format!("{lr}"), p.to_string(), format!("{f1:.4}")]);
                json.push(serde_json::json!({"colr": lr, "patchSize": p, "f1": f1}));
            }
        }
        let table = markdown(&["colr", "patchSize", "F1"], &rows);
        print!("{table}");
        write_text(&mut rec, dir.join("grid.md"), &table)?;
        write_text(&mut rec, dir.join("grid.json"), &serde_json::to_string_pretty(&json)?)?;
    } else {
        let rep = run_complementary(&cfg.complementary(), &LossVariant::ALL)?;
        let rows: Vec<Vec<String>> = ablation_rows(&rep)
            .into_iter()
            .map(|(n, f, p, r)| vec![n, format!("{f:.4}"), format!("{p:.4}"), format!("{r:.4}")])
            .collect();
        let table = markdown(&["variant", "F1", "precision", "recall"], &rows);
        print!("{table}");
        write_text(&mut rec, dir.join("ablation.md"), &table)?;
        write_text(&mut rec, dir.join("ablation.json"), &serde_json::to_string_pretty(&rep)?)?;
    }
    rec.finish(cfg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        write_columns(&p, &["a", "b"], &[&[0.1, 0.2], &[1.0, 2.5]]).unwrap();
        let cols = read_columns(&p).unwrap();
        assert_eq!(cols["a"], vec![0.1, 0.2]);
        assert_eq!(cols["b"], vec![1.0, 2.5]);
        assert_eq!(cols["t"], vec![0.0, 1.0]);
        assert!(column(&cols, "zzz", &p).is_err());
    }

    #[test]
    fn markdown_table_shape() {
        let t = markdown(&["x", "y"], &[vec!["1".into(), "2".into()]]);
        assert_eq!(t, "| x | y |\n|---|---|\n| 1 | 2 |\n");
    }
}
