//! Per-slot adaptive weights from intra- and inter-patch distances.
//!
//! A slot far from the rest of its own patch (large `D_intra`) looks like a
//! point anomaly; a patch far from the other patches (large `D_inter`) looks
//! like a contextual one. `λ1 = D_intra / (D_intra + D_inter)`, `λ2 = 1 − λ1`.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeriesWindow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchWeights {
    pub d_intra: Vec<f64>,
    pub d_inter: Vec<f64>,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
}

impl PatchWeights {
    pub fn len(&self) -> usize {
        self.lambda1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda1.is_empty()
    }
}

/// Weights actually fed to the fusion losses.
///
/// Usually derived from [`PatchWeights`], but ablations can pin both weights
/// to constants (including `λ1 = λ2 = 1`, which breaks the sum-to-one rule).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
}

impl LossWeights {
    pub fn constant(n: usize, lambda1: f64, lambda2: f64) -> Self {
        Self {
            lambda1: vec![lambda1; n],
            lambda2: vec![lambda2; n],
        }
    }

    pub fn len(&self) -> usize {
        self.lambda1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda1.is_empty()
    }

    /// Exchanges the two weight vectors.
    pub fn swapped(self) -> Self {
        Self {
            lambda1: self.lambda2,
            lambda2: self.lambda1,
        }
    }
}

impl From<&PatchWeights> for LossWeights {
    fn from(w: &PatchWeights) -> Self {
        Self {
            lambda1: w.lambda1.clone(),
            lambda2: w.lambda2.clone(),
        }
    }
}

/// Contiguous patch boundaries `[start, end)`. A trailing remainder of one
/// slot is folded into the previous patch; two or more slots stand alone.
pub fn patch_bounds(len: usize, patch_size: usize) -> Result<Vec<(usize, usize)>> {
    if patch_size < 2 {
        return Err(Error::InvalidInput(format!("patch size must be >= 2, got {patch_size}")));
    }
    if len < patch_size {
        return Err(Error::WindowTooShort { len, patch_size });
    }
    let mut bounds: Vec<(usize, usize)> = (0..len / patch_size)
        .map(|k| (k * patch_size, (k + 1) * patch_size))
        .collect();
    match len % patch_size {
        0 => {}
        1 => bounds.last_mut().expect("at least one full patch").1 = len,
        _ => bounds.push((len - len % patch_size, len)),
    }
    Ok(bounds)
}

fn dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn patch_weights(window: &TimeSeriesWindow, patch_size: usize) -> Result<PatchWeights> {
    let x = window.values();
    let t_len = window.len();
    let bounds = patch_bounds(t_len, patch_size)?;

    let centroids: Vec<Array1<f64>> = bounds
        .iter()
        .map(|&(a, b)| x.slice(ndarray::s![a..b, ..]).mean_axis(ndarray::Axis(0)).expect("non-empty patch"))
        .collect();

    let p = bounds.len();
    let inter: Vec<f64> = (0..p)
        .map(|k| {
            if p == 1 {
                return 0.0;
            }
            let total: f64 = (0..p)
                .filter(|&j| j != k)
                .map(|j| dist(centroids[k].view(), centroids[j].view()))
                .sum();
            total / (p - 1) as f64
        })
        .collect();

    let mut out = PatchWeights {
        d_intra: Vec::with_capacity(t_len),
        d_inter: Vec::with_capacity(t_len),
        lambda1: Vec::with_capacity(t_len),
        lambda2: Vec::with_capacity(t_len),
    };
    for (k, &(a, b)) in bounds.iter().enumerate() {
        for t in a..b {
            let intra = (a..b)
                .filter(|&u| u != t)
                .map(|u| dist(x.row(t), x.row(u)))
                .sum::<f64>()
                / (b - a - 1) as f64;
            let denom = intra + inter[k];
            let l1 = if denom > 0.0 { intra / denom } else { 0.5 };
            out.d_intra.push(intra);
            out.d_inter.push(inter[k]);
            out.lambda1.push(l1);
            out.lambda2.push(1.0 - l1);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar(v: &[f64]) -> TimeSeriesWindow {
        TimeSeriesWindow::from_slice(v, 0).unwrap()
    }

    #[test]
    fn hand_computed_spike() {
        let w = patch_weights(&scalar(&[0.0, 0.0, 10.0, 0.0]), 2).unwrap();
        assert!((w.d_intra[2] - 10.0).abs() < 1e-12);
        assert!((w.d_inter[2] - 5.0).abs() < 1e-12);
        assert!((w.lambda1[2] - 2.0 / 3.0).abs() < 1e-12);
        assert!((w.lambda2[2] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn constant_window_is_neutral() {
        let w = patch_weights(&scalar(&[1.5; 7]), 3).unwrap();
        assert!(w.lambda1.iter().all(|&l| l == 0.5));
        assert!(w.lambda2.iter().all(|&l| l == 0.5));
    }

    #[test]
    fn bounds_merge_single_remainder() {
        assert_eq!(patch_bounds(5, 2).unwrap(), vec![(0, 2), (2, 5)]);
        assert_eq!(patch_bounds(8, 3).unwrap(), vec![(0, 3), (3, 6), (6, 8)]);
        assert_eq!(patch_bounds(4, 4).unwrap(), vec![(0, 4)]);
        assert!(matches!(patch_bounds(3, 4), Err(Error::WindowTooShort { .. })));
        assert!(patch_bounds(3, 1).is_err());
    }

    #[test]
    fn multivariate_distance_is_euclidean() {
        let w = TimeSeriesWindow::new(ndarray::array![[0.0, 0.0], [3.0, 4.0]], 0, None).unwrap();
        let pw = patch_weights(&w, 2).unwrap();
        assert!((pw.d_intra[0] - 5.0).abs() < 1e-12);
        assert_eq!(pw.d_inter[0], 0.0);
    }

    proptest! {
        #[test]
        fn weights_sum_to_one(
            v in prop::collection::vec(-10.0f64..10.0, 4..60),
            p in 2usize..6,
        ) {
            prop_assume!(v.len() >= p);
            let w = patch_weights(&scalar(&v), p).unwrap();
            prop_assert_eq!(w.len(), v.len());
            for (a, b) in w.lambda1.iter().zip(&w.lambda2) {
                prop_assert!((a + b - 1.0).abs() <= 1e-12);
                prop_assert!((0.0..=1.0).contains(a));
            }
        }

        #[test]
        fn isolated_spike_leans_on_first_weight(
            base in -5.0f64..5.0,
            h in 0.5f64..50.0,
            len in 8usize..40,
            p in 2usize..5,
            pos_seed in 0usize..1000,
        ) {
            let pos = pos_seed % len;
            let mut v = vec![base; len];
            v[pos] += h;
            let w = patch_weights(&scalar(&v), p).unwrap();
            prop_assert!(w.lambda1[pos] > w.lambda2[pos]);
        }

        #[test]
        fn shifted_patch_leans_on_second_weight(
            base in -5.0f64..5.0,
            h in 0.5f64..50.0,
            n_patches in 3usize..10,
            p in 2usize..5,
            which in 0usize..100,
        ) {
            let k = which % n_patches;
            let mut v = vec![base; n_patches * p];
            for x in &mut v[k * p..(k + 1) * p] {
                *x += h;
            }
            let w = patch_weights(&scalar(&v), p).unwrap();
            for t in k * p..(k + 1) * p {
                prop_assert!(w.lambda2[t] > w.lambda1[t]);
            }
        }
    }
}
