//! Runs the complementary-scorer benchmark and prints one line per scorer.
//!
//! Usage: `cargo run --release --example complementary -- [seed] [routing] [epochs] [colr|grid] [adam|sgd]`

use collate_core::collab::{LossVariant, WeightRouting};
use collate_core::experiment::{run_complementary, ComplementaryConfig, ScorerResult};

fn line(name: &str, r: &ScorerResult) {
    let k = |m: &collate_core::eval::KindMetrics| m.metrics().map_or(f64::NAN, |m| m.f1);
    println!(
        "{name:<14} f1 {:.4}  p {:.4}  r {:.4}  ctx {:.4}  pt {:.4}",
        r.metrics.f1,
        r.metrics.precision,
        r.metrics.recall,
        k(&r.per_kind_best.contextual),
        k(&r.per_kind_best.point)
    );
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut cfg = ComplementaryConfig::new(seed);
    if args.get(2).map(String::as_str) == Some("swapped") {
        cfg.collab.routing = WeightRouting::Swapped;
    }
    if let Some(e) = args.get(3).and_then(|s| s.parse().ok()) {
        cfg.collab.epochs = e;
    }
    if let Some(lr) = args.get(4).and_then(|s| s.parse().ok()) {
        cfg.lr_grid = vec![lr];
    }
    if args.get(5).map(String::as_str) == Some("sgd") {
        cfg.collab.optimizer = collate_core::optim::OptimizerKind::Sgd;
    }
    let rep = run_complementary(&cfg, &LossVariant::ALL).expect("benchmark run");
    line("detector", &rep.detector);
    line("llm", &rep.llm);
    for (name, v) in &rep.variants {
        line(name, &v.result);
        println!("{:<14} lr {} val f1 {:?}", "", v.lr, v.val_f1);
        let first = v.kl.first().unwrap();
        let last = v.kl.last().unwrap();
        println!(
            "{:<14} kl aligned {:.4} -> {:.4}  raw {:.4}  loss {:.5} -> {:.5}",
            "",
            first.kl_aligned,
            last.kl_aligned,
            last.kl_raw,
            v.loss_curve.first().unwrap(),
            v.loss_curve.last().unwrap()
        );
    }
}
