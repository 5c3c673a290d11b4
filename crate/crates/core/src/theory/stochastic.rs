use rand::{seq::index, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Check, NoiseModel, Relation, TheoryReport};
use crate::error::{Error, Result};
use crate::math::{mean, sigmoid, var_unbiased};

/// Monte Carlo check of the squared-error fusion bound. Uses the closed-form
/// optimum `Ŝ* − y = λ1·ε_s + λ2·ε_S` and compares the estimate with both
/// the Jensen bound `(λ1μ_s + λ2μ_S)²` and the exact expectation.
pub fn check_theorem1(noise: &NoiseModel, lambda1: f64, trials: usize, seed: u64) -> Result<TheoryReport> {
    noise.validate()?;
    if !(lambda1 > 0.0 && lambda1 <= 1.0) {
        return Err(Error::InvalidInput("lambda1 must lie in (0, 1]".into()));
    }
    if trials < 1000 {
        return Err(Error::InvalidInput("need at least 1000 trials".into()));
    }
    let l2 = 1.0 - lambda1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    for _ in 0..trials {
        let es = noise.sample(&mut rng, true);
        let eb = noise.sample(&mut rng, false);
        let d = lambda1 * es + l2 * eb;
        acc += d * d;
    }
    let estimate = acc / trials as f64;
    let bias = lambda1 * noise.mu_s + l2 * noise.mu_big_s;
    let bound = bias * bias;
    let exact = bound + lambda1 * lambda1 * noise.sigma_s.powi(2) + l2 * l2 * noise.sigma_big_s.powi(2);
    let checks = vec![
        Check::new("mc_vs_bound", estimate, bound, Relation::AtLeast),
        Check::new("mc_vs_exact", estimate, exact, Relation::WithinRel(0.05)),
    ];
    let details = json!({
        "lambda1": lambda1,
        "exact_expectation": exact,
        "noise": noise,
        "degenerate": noise.degenerate(),
    });
    Ok(TheoryReport::new("theorem1", trials, seed, checks, details))
}

/// Which gradient expression drives the SGD comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientForm {
    /// Derivative of the pairwise loss itself.
    #[default]
    Exact,
    /// The per-pair form carrying an extra `(Ŝᵢ − Ŝⱼ)` factor.
    Printed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Config {
    pub y: Vec<f64>,
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub lambda1: f64,
    pub window: usize,
    pub resamples: usize,
    pub form: GradientForm,
}

impl Default for Lemma1Config {
    fn default() -> Self {
        Self {
            y: super::default_y(16, 0),
            steps: 10_000,
            batch: 8,
            lr: 1.0,
            lambda1: 0.6,
            window: 500,
            resamples: 10_000,
            form: GradientForm::Exact,
        }
    }
}

/// Gradient of the minibatch pairwise loss `−(1/b²)ΣΣ aᵢⱼ(Ŝᵢ − Ŝⱼ)` with
/// respect to the per-slot logits. `target(k)` gives the per-slot signal
/// whose differences form `aᵢⱼ`.
fn batch_grad(theta: &[f64], batch: &[usize], target: &[f64], form: GradientForm, out: &mut [f64]) {
    out.iter_mut().for_each(|g| *g = 0.0);
    let b2 = (batch.len() * batch.len()) as f64;
    for &k in batch {
        let sk = sigmoid(theta[k]);
        let mut acc = 0.0;
        for &j in batch {
            let a = target[k] - target[j];
            acc += match form {
                GradientForm::Exact => a,
                GradientForm::Printed => a * (sk - sigmoid(theta[j])),
            };
        }
        out[k] = -2.0 / b2 * acc * sk * (1.0 - sk);
    }
}

fn observed(y: &[f64], noise: &NoiseModel, lambda1: f64, rng: &mut impl Rng) -> Vec<f64> {
    y.iter()
        .map(|&v| {
            let s = v + noise.sample(rng, true);
            let big = v + noise.sample(rng, false);
            lambda1 * s + (1.0 - lambda1) * big
        })
        .collect()
}

/// Largest per-coordinate `|mean(g − g*)| / SE` over `resamples` noise
/// draws at fixed logits `theta`, full batch.
pub fn gradient_bias(
    noise: &NoiseModel,
    y: &[f64],
    theta: &[f64],
    lambda1: f64,
    form: GradientForm,
    resamples: usize,
    seed: u64,
) -> Result<f64> {
    if y.len() != theta.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: theta.len(),
        });
    }
    if resamples < 2 {
        return Err(Error::InvalidInput("need at least two resamples".into()));
    }
    let n = y.len();
    let all: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gstar = vec![0.0; n];
    batch_grad(theta, &all, y, form, &mut gstar);
    let mut g = vec![0.0; n];
    let mut diffs = vec![Vec::with_capacity(resamples); n];
    for _ in 0..resamples {
        let target = observed(y, noise, lambda1, &mut rng);
        batch_grad(theta, &all, &target, form, &mut g);
        for k in 0..n {
            diffs[k].push(g[k] - gstar[k]);
        }
    }
    let mut worst = 0.0f64;
    for d in &diffs {
        let se = (var_unbiased(d) / resamples as f64).sqrt();
        let m = mean(d);
        let z = if se > 0.0 {
            m.abs() / se
        } else if m.abs() < 1e-15 {
            0.0
        } else {
            f64::INFINITY
        };
        worst = worst.max(z);
    }
    Ok(worst)
}

struct Trajectories {
    gap: Vec<f64>,
    grad_norm: Vec<f64>,
    loss_gap: f64,
}

fn run_trajectories(noise: &NoiseModel, cfg: &Lemma1Config, seed: u64) -> Trajectories {
    let n = cfg.y.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = vec![0.0; n];
    let mut theta_star = vec![0.0; n];
    let (mut g, mut gs) = (vec![0.0; n], vec![0.0; n]);
    let w = cfg.window.max(1);
    let mut ring_g = vec![vec![0.0; n]; w];
    let mut ring_s = vec![vec![0.0; n]; w];
    let (mut sum_g, mut sum_s) = (vec![0.0; n], vec![0.0; n]);
    let mut gap = Vec::with_capacity(cfg.steps);
    let mut grad_norm = Vec::with_capacity(cfg.steps);
    for t in 0..cfg.steps {
        let batch = index::sample(&mut rng, n, cfg.batch.min(n)).into_vec();
        let target = observed(&cfg.y, noise, cfg.lambda1, &mut rng);
        batch_grad(&theta, &batch, &target, cfg.form, &mut g);
        batch_grad(&theta_star, &batch, &cfg.y, cfg.form, &mut gs);
        let slot = t % w;
        for k in 0..n {
            sum_g[k] += g[k] - ring_g[slot][k];
            sum_s[k] += gs[k] - ring_s[slot][k];
            ring_g[slot][k] = g[k];
            ring_s[slot][k] = gs[k];
        }
        let filled = (t + 1).min(w) as f64;
        let d: f64 = sum_g
            .iter()
            .zip(&sum_s)
            .map(|(a, b)| ((a - b) / filled).powi(2))
            .sum();
        gap.push(d.sqrt());
        grad_norm.push(g.iter().map(|v| v * v).sum::<f64>().sqrt());
        for k in 0..n {
            theta[k] -= cfg.lr * g[k];
            theta_star[k] -= cfg.lr * gs[k];
        }
    }
    let loss = |th: &[f64]| {
        let s: Vec<f64> = th.iter().map(|&v| sigmoid(v)).collect();
        super::oracle_loss_vectorized(&s, &cfg.y).unwrap_or(f64::NAN) / (n * n) as f64
    };
    Trajectories {
        gap,
        grad_norm,
        loss_gap: (loss(&theta) - loss(&theta_star)).abs(),
    }
}

/// Least-squares slope of `log(mean ‖g‖)` against `log t` over
/// logarithmically spaced blocks.
fn loglog_slope(norms: &[f64]) -> f64 {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut lo = 10usize;
    while lo < norms.len() {
        let hi = (lo * 2).min(norms.len());
        let m = mean(&norms[lo..hi]);
        if m > 0.0 {
            xs.push((((lo + hi) as f64) / 2.0).ln());
            ys.push(m.ln());
        }
        lo = hi;
    }
    if xs.len() < 2 {
        return f64::NAN;
    }
    let (mx, my) = (mean(&xs), mean(&ys));
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

/// Compares SGD driven by the observable pairwise loss with SGD on the
/// ideal loss: unbiasedness of the per-step gradient, the windowed gradient
/// gap at the end of training, and the decay of the gradient norm.
pub fn check_lemma1(noise: &NoiseModel, cfg: &Lemma1Config, seed: u64) -> Result<TheoryReport> {
    noise.validate()?;
    if cfg.steps < 1000 {
        return Err(Error::InvalidInput("need at least 1000 steps".into()));
    }
    if cfg.y.len() < 2 || cfg.batch < 2 {
        return Err(Error::InvalidInput("need at least two slots per batch".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    let theta0: Vec<f64> = cfg.y.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
    let z = gradient_bias(noise, &cfg.y, &theta0, cfg.lambda1, cfg.form, cfg.resamples, seed)?;
    let tr = run_trajectories(noise, cfg, seed.wrapping_add(1));
    let final_gap = *tr.gap.last().expect("steps > 0");
    let slope = loglog_slope(&tr.grad_norm);
    let checks = vec![
        Check::new("windowed_gradient_gap", final_gap, 1e-2, Relation::Below),
        Check::new("grad_norm_loglog_slope", slope, -0.15, Relation::AtMost),
        Check::new("max_bias_z", z, 3.0, Relation::AtMost),
    ];
    let details = json!({
        "steps": cfg.steps,
        "batch": cfg.batch,
        "lr": cfg.lr,
        "window": cfg.window,
        "form": cfg.form,
        "final_loss_gap": tr.loss_gap,
        "initial_gap": tr.gap.get(cfg.window.saturating_sub(1)).copied(),
    });
    Ok(TheoryReport::new("lemma1", cfg.steps, seed, checks, details))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::rel_err;

    #[test]
    fn theorem1_default_values() {
        let r = check_theorem1(&NoiseModel::default(), 0.6, 100_000, 0).unwrap();
        assert!((r.bound - 0.0196).abs() < 1e-12);
        assert!((r.checks[1].target - 0.0209).abs() < 1e-12);
        assert!(r.pass, "{}", r.summary());
    }

    #[test]
    fn theorem1_holds_over_grid() {
        for mu_s in [0.05, 0.1, -0.1] {
            for mu_b in [0.2, -0.05] {
                for sd in [0.01, 0.05, 0.2] {
                    for l1 in [0.2, 0.6, 0.9] {
                        let noise = NoiseModel {
                            mu_s,
                            sigma_s: sd,
                            mu_big_s: mu_b,
                            sigma_big_s: sd,
                            ..NoiseModel::default()
                        };
                        let r = check_theorem1(&noise, l1, 20_000, 5).unwrap();
                        assert!(r.checks[0].pass, "{}", r.summary());
                    }
                }
            }
        }
    }

    #[test]
    fn theorem1_edge_cases() {
        let zero = NoiseModel {
            mu_s: 0.0,
            mu_big_s: 0.0,
            ..NoiseModel::default()
        };
        let r = check_theorem1(&zero, 0.6, 1000, 0).unwrap();
        assert_eq!(r.bound, 0.0);
        assert_eq!(r.details["degenerate"], true);
        let r = check_theorem1(&NoiseModel::default(), 1.0, 1000, 0).unwrap();
        assert_eq!(r.bound, 0.1 * 0.1);
        assert!(check_theorem1(&NoiseModel::default(), 0.6, 999, 0).is_err());
    }

    #[test]
    fn closed_form_matches_numeric_mse_minimizer() {
        let (s, big, l1) = (0.37, 0.81, 0.6);
        let mut x = 0.5;
        for _ in 0..2000 {
            x -= 0.1 * (2.0 * l1 * (x - s) + 2.0 * (1.0 - l1) * (x - big));
        }
        assert!(rel_err(x, l1 * s + (1.0 - l1) * big) < 1e-12);
    }

    #[test]
    fn batch_grad_matches_finite_difference() {
        let theta = [0.3, -0.7, 1.1, 0.2];
        let target = [0.1, 0.9, 0.4, 0.6];
        let batch = [0usize, 1, 2, 3];
        let loss = |th: &[f64]| {
            let s: Vec<f64> = th.iter().map(|&v| sigmoid(v)).collect();
            let mut acc = 0.0;
            for i in 0..4 {
                for j in 0..4 {
                    acc += (target[i] - target[j]) * (s[i] - s[j]);
                }
            }
            -acc / 16.0
        };
        let mut g = [0.0; 4];
        batch_grad(&theta, &batch, &target, GradientForm::Exact, &mut g);
        for k in 0..4 {
            let h = 1e-6;
            let (mut p, mut m) = (theta, theta);
            p[k] += h;
            m[k] -= h;
            let fd = (loss(&p) - loss(&m)) / (2.0 * h);
            assert!(rel_err(g[k], fd) < 1e-6, "{k}: {} vs {fd}", g[k]);
        }
    }

    #[test]
    fn zero_noise_trajectories_coincide() {
        let noise = NoiseModel {
            mu_s: 0.0,
            sigma_s: 0.0,
            mu_big_s: 0.0,
            sigma_big_s: 0.0,
            ..NoiseModel::default()
        };
        let cfg = Lemma1Config {
            steps: 1000,
            ..Lemma1Config::default()
        };
        let tr = run_trajectories(&noise, &cfg, 3);
        assert!(tr.gap.iter().all(|&g| g == 0.0));
        assert_eq!(tr.loss_gap, 0.0);
    }

    #[test]
    fn gradient_is_unbiased_for_both_forms() {
        let noise = NoiseModel::default();
        let y = crate::theory::default_y(6, 1);
        let theta = [0.1, -0.4, 0.8, 0.0, -1.2, 0.5];
        for form in [GradientForm::Exact, GradientForm::Printed] {
            let z = gradient_bias(&noise, &y, &theta, 0.6, form, 5000, 2).unwrap();
            assert!(z < 4.0, "{form:?} {z}");
        }
    }

    #[test]
    fn slope_of_power_law() {
        let v: Vec<f64> = (0..5000).map(|t| ((t + 1) as f64).powf(-0.5)).collect();
        assert!((loglog_slope(&v) + 0.5).abs() < 0.05);
    }
}
