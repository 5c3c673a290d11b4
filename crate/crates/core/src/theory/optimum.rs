use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::{Check, Relation, TheoryReport};
use crate::error::{Error, Result};

/// Ties in `y` or `Ŝ` closer than this are not counted as ordered.
const TIE_TOL: f64 = 1e-6;
const QUADRUPLES: usize = 100;

/// Ideal pairwise loss `−ΣᵢΣⱼ (yᵢ − yⱼ)(Ŝᵢ − Ŝⱼ)`.
pub fn oracle_loss(s_hat: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(s_hat, y)?;
    let mut acc = 0.0;
    for i in 0..y.len() {
        for j in 0..y.len() {
            acc += (y[i] - y[j]) * (s_hat[i] - s_hat[j]);
        }
    }
    Ok(-acc)
}

/// Same loss through the identity `−2(nΣyŜ − ΣyΣŜ)`.
pub fn oracle_loss_vectorized(s_hat: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(s_hat, y)?;
    let n = y.len() as f64;
    let sy: f64 = y.iter().sum();
    let ss: f64 = s_hat.iter().sum();
    let syss: f64 = y.iter().zip(s_hat).map(|(a, b)| a * b).sum();
    Ok(-2.0 * (n * syss - sy * ss))
}

fn check_lengths(s_hat: &[f64], y: &[f64]) -> Result<()> {
    if s_hat.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: s_hat.len(),
            right: y.len(),
        });
    }
    if y.len() < 2 {
        return Err(Error::InvalidInput("need at least two slots".into()));
    }
    Ok(())
}

fn oracle_grad(y: &[f64]) -> Vec<f64> {
    let n = y.len() as f64;
    let sy: f64 = y.iter().sum();
    y.iter().map(|&v| -2.0 * (n * v - sy)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForce {
    pub best: Vec<f64>,
    pub best_loss: f64,
    /// Several distinct minimizers exist (flat directions or ties).
    pub degenerate: bool,
}

/// Minimizes the ideal loss over `[0, 1]ⁿ` by projected gradient descent
/// from `starts` random initializations.
pub fn brute_force_optimal(y: &[f64], starts: usize, seed: u64) -> Result<BruteForce> {
    if y.len() < 2 {
        return Err(Error::InvalidInput("need at least two slots".into()));
    }
    if starts == 0 {
        return Err(Error::InvalidInput("starts must be > 0".into()));
    }
    let grad = oracle_grad(y);
    let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut results: Vec<(Vec<f64>, f64)> = Vec::with_capacity(starts);
    for _ in 0..starts {
        let mut x: Vec<f64> = (0..y.len()).map(|_| rng.random_range(0.0..=1.0)).collect();
        if gmax > 0.0 {
            let lr = 0.01 / gmax;
            for _ in 0..20_000 {
                let mut moved = 0.0f64;
                for (xi, g) in x.iter_mut().zip(&grad) {
                    let next = (*xi - lr * g).clamp(0.0, 1.0);
                    moved = moved.max((next - *xi).abs());
                    *xi = next;
                }
                if moved < 1e-15 {
                    break;
                }
            }
        }
        let l = oracle_loss_vectorized(&x, y)?;
        results.push((x, l));
    }
    let (best, best_loss) = results
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .cloned()
        .expect("starts > 0");
    let flat = grad.iter().any(|g| g.abs() < 1e-9 * gmax.max(1.0));
    let spread = results.iter().any(|(x, _)| {
        x.iter()
            .zip(&best)
            .any(|(a, b)| (a - b).abs() > TIE_TOL)
    });
    Ok(BruteForce {
        best,
        best_loss,
        degenerate: flat || spread,
    })
}

fn at_bound(v: f64) -> bool {
    v <= TIE_TOL || v >= 1.0 - TIE_TOL
}

/// Checks the two ordering properties of the ideal optimum on random
/// instances of size `n`: larger `y` gets strictly larger `Ŝ`, and larger
/// `y` gaps give strictly larger `Ŝ` gaps. Ties within `1e-6` count as
/// violations.
pub fn check_theorem2(trials: usize, n: usize, seed: u64) -> Result<TheoryReport> {
    if trials == 0 || n < 2 {
        return Err(Error::InvalidInput("need trials > 0 and n >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut passing = 0usize;
    let (mut p1_pairs, mut p1_viol, mut p1_weak) = (0usize, 0usize, 0usize);
    let (mut p2_quads, mut p2_viol, mut p2_weak) = (0usize, 0usize, 0usize);
    let mut interior_viol = 0usize;
    let mut vertex = 0usize;
    let mut degenerate = 0usize;
    for t in 0..trials {
        let y = loop {
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let mut sorted = y.clone();
            sorted.sort_by(f64::total_cmp);
            if sorted.windows(2).all(|w| w[1] - w[0] > TIE_TOL) {
                break y;
            }
        };
        let bf = brute_force_optimal(&y, 32, seed.wrapping_add(t as u64 + 1))?;
        let s = &bf.best;
        degenerate += bf.degenerate as usize;
        vertex += s.iter().all(|&v| at_bound(v)) as usize;
        let mut ok = true;
        for r in 0..n {
            for k in 0..n {
                if y[r] - y[k] > TIE_TOL {
                    p1_pairs += 1;
                    let d = s[r] - s[k];
                    if d <= TIE_TOL {
                        p1_viol += 1;
                        ok = false;
                        if !(at_bound(s[r]) && at_bound(s[k])) {
                            interior_viol += 1;
                        }
                    }
                    if d < -TIE_TOL {
                        p1_weak += 1;
                    }
                }
            }
        }
        let mut found = 0usize;
        let mut attempts = 0usize;
        while found < QUADRUPLES && attempts < 100 * QUADRUPLES {
            attempts += 1;
            let idx: [usize; 4] = std::array::from_fn(|_| rng.random_range(0..n));
            let [r, k, r2, k2] = idx;
            let dy = (y[r] - y[k]) - (y[r2] - y[k2]);
            if dy <= TIE_TOL {
                continue;
            }
            found += 1;
            let ds = (s[r] - s[k]) - (s[r2] - s[k2]);
            if ds <= TIE_TOL {
                p2_viol += 1;
                ok = false;
                if !idx.iter().all(|&i| at_bound(s[i])) {
                    interior_viol += 1;
                }
            }
            if ds < -TIE_TOL {
                p2_weak += 1;
            }
        }
        p2_quads += found;
        passing += ok as usize;
    }
    let checks = vec![Check::new(
        "instances_satisfying_both",
        passing as f64,
        trials as f64,
        Relation::AtLeast,
    )];
    let details = json!({
        "n": n,
        "p1_pairs": p1_pairs,
        "p1_violations": p1_viol,
        "p1_reversed": p1_weak,
        "p2_quadruples": p2_quads,
        "p2_violations": p2_viol,
        "p2_reversed": p2_weak,
        "violations_off_vertex": interior_viol,
        "optimum_at_vertex": vertex,
        "degenerate_instances": degenerate,
    });
    Ok(TheoryReport::new("theorem2", trials, seed, checks, details))
}
