use collate_core::alignment::MonotoneMapping;
use collate_core::collab::collaborative_loss;
use collate_core::eval::best_f1_threshold;
use collate_core::{
    normalize_scores, patch_weights, LossWeights, NormalizationConfig, ScoreKind, ScoreSeries, TimeSeriesWindow,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn patch_lambdas_partition_unity(values in prop::collection::vec(-5.0f64..5.0, 8..60), patch in 2usize..8) {
        let w = TimeSeriesWindow::from_slice(&values, 0).unwrap();
        let pw = patch_weights(&w, patch).unwrap();
        prop_assert_eq!(pw.len(), values.len());
        for t in 0..pw.len() {
            prop_assert!((pw.lambda1[t] + pw.lambda2[t] - 1.0).abs() <= 1e-12);
            let denom = pw.d_intra[t] + pw.d_inter[t];
            let expected = if denom > 0.0 { pw.d_intra[t] / denom } else { 0.5 };
            prop_assert!((pw.lambda1[t] - expected).abs() <= 1e-12);
        }
    }

    #[test]
    fn linear_scaling_is_scale_free(raw in prop::collection::vec(0.0f64..10.0, 2..40), c in 0.01f64..100.0) {
        prop_assume!(raw.iter().cloned().fold(f64::MIN, f64::max) - raw.iter().cloned().fold(f64::MAX, f64::min) > 1e-6);
        let cfg = NormalizationConfig::new(1.0).unwrap();
        let a = normalize_scores(&ScoreSeries::new(raw.clone(), ScoreKind::RawTsadm).unwrap(), cfg).unwrap();
        let scaled: Vec<f64> = raw.iter().map(|v| v * c).collect();
        let b = normalize_scores(&ScoreSeries::new(scaled, ScoreKind::RawTsadm).unwrap(), cfg).unwrap();
        for (x, y) in a.scores().iter().zip(b.scores()) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn mapping_is_monotone_and_unit_bounded(seed in any::<u64>(), mut s in prop::collection::vec(-3.0f64..3.0, 2..50)) {
        let m = MonotoneMapping::new(8, &mut ChaCha8Rng::seed_from_u64(seed));
        s.sort_by(f64::total_cmp);
        let out = m.apply_all(&s);
        for pair in out.windows(2) {
            prop_assert!(pair[0] <= pair[1]);
        }
        prop_assert!(out.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn pairwise_loss_ignores_constant_shift(
        data in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), 2..30),
        shift in -2.0f64..2.0,
    ) {
        let s_hat: Vec<f64> = data.iter().map(|d| d.0).collect();
        let s: Vec<f64> = data.iter().map(|d| d.1).collect();
        let big: Vec<f64> = data.iter().map(|d| d.2).collect();
        let w = LossWeights::constant(data.len(), 0.6, 0.4);
        let moved: Vec<f64> = s_hat.iter().map(|v| v + shift).collect();
        let a = collaborative_loss(&s_hat, &s, &big, &w).unwrap();
        let b = collaborative_loss(&moved, &s, &big, &w).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn best_f1_is_harmonic_mean(pairs in prop::collection::vec((0.0f64..1.0, any::<bool>()), 1..80)) {
        let scores: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let mut labels: Vec<u8> = pairs.iter().map(|p| p.1 as u8).collect();
        labels[0] = 1;
        let m = best_f1_threshold(&scores, &labels).unwrap();
        let expected = if m.precision + m.recall > 0.0 {
            2.0 * m.precision * m.recall / (m.precision + m.recall)
        } else {
            0.0
        };
        prop_assert!((m.f1 - expected).abs() <= 1e-12);
    }

    #[test]
    fn unit_kinds_reject_out_of_range(v in 1.0001f64..5.0) {
        for kind in [ScoreKind::Llm, ScoreKind::AlignedTsadm, ScoreKind::Collated] {
            prop_assert!(ScoreSeries::new(vec![0.5, v], kind).is_err());
        }
        prop_assert!(ScoreSeries::new(vec![0.5, v], ScoreKind::RawTsadm).is_ok());
    }
}
