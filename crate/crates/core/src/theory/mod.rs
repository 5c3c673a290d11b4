//! Numerical checks of the fusion theory: the error-accumulation bound of
//! squared-error fusion, the ordering properties of the ideal pairwise
//! optimum, the stochastic-gradient equivalence between the observable and
//! ideal pairwise losses, the smoothness probe, and the large-bin limit of
//! the histogram alignment objective.

mod optimum;
mod probes;
mod stochastic;

pub use optimum::{brute_force_optimal, check_theorem2, oracle_loss, oracle_loss_vectorized, BruteForce};
pub use probes::{check_histogram_equivalence, estimate_lipschitz, LIPSCHITZ_PROBE};
pub use stochastic::{check_lemma1, check_theorem1, gradient_bias, GradientForm, Lemma1Config};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distribution family of the scorer errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    #[default]
    Normal,
    /// Uniform with the given mean and standard deviation.
    Uniform,
}

/// Error distributions of the detector (`s`) and the language model (`S`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub mu_s: f64,
    pub sigma_s: f64,
    pub mu_big_s: f64,
    pub sigma_big_s: f64,
    pub family: NoiseFamily,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            mu_s: 0.1,
            sigma_s: 0.05,
            mu_big_s: 0.2,
            sigma_big_s: 0.05,
            family: NoiseFamily::Normal,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        let all = [self.mu_s, self.sigma_s, self.mu_big_s, self.sigma_big_s];
        if all.iter().any(|v| !v.is_finite()) || self.sigma_s < 0.0 || self.sigma_big_s < 0.0 {
            return Err(Error::InvalidInput("noise parameters must be finite with sigma >= 0".into()));
        }
        Ok(())
    }

    /// Zero error means violate the nonzero-mean assumptions.
    pub fn degenerate(&self) -> bool {
        self.mu_s == 0.0 || self.mu_big_s == 0.0
    }

    pub(crate) fn sample(&self, rng: &mut impl rand::Rng, detector: bool) -> f64 {
        let (mu, sd) = if detector {
            (self.mu_s, self.sigma_s)
        } else {
            (self.mu_big_s, self.sigma_big_s)
        };
        match self.family {
            NoiseFamily::Normal => {
                let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
                mu + sd * z
            }
            NoiseFamily::Uniform => {
                let half = sd * 3f64.sqrt();
                mu + rng.random_range(-1.0..=1.0) * half
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    AtLeast,
    AtMost,
    Below,
    /// `|statistic − target| ≤ tol · |target|`.
    WithinRel(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub statistic: f64,
    pub target: f64,
    pub relation: Relation,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, statistic: f64, target: f64, relation: Relation) -> Self {
        let pass = statistic.is_finite()
            && match relation {
                Relation::AtLeast => statistic >= target,
                Relation::AtMost => statistic <= target,
                Relation::Below => statistic < target,
                Relation::WithinRel(tol) => (statistic - target).abs() <= tol * target.abs(),
            };
        Self {
            name: name.into(),
            statistic,
            target,
            relation,
            pass,
        }
    }
}

/// Outcome of one verification. The headline `statistic`/`bound` pair is
/// the first check; `pass` requires every check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub theorem: String,
    pub trials: usize,
    pub statistic: f64,
    pub bound: f64,
    pub pass: bool,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    pub checks: Vec<Check>,
    #[serde(default)]
    pub details: serde_json::Value,
}

impl TheoryReport {
    pub fn new(theorem: &str, trials: usize, seed: u64, checks: Vec<Check>, details: serde_json::Value) -> Self {
        let head = checks.first().expect("at least one check");
        Self {
            theorem: theorem.to_string(),
            trials,
            statistic: head.statistic,
            bound: head.target,
            pass: checks.iter().all(|c| c.pass),
            seed,
            lipschitz: None,
            checks,
            details,
        }
    }

    pub fn summary(&self) -> String {
        let parts: Vec<String> = self
            .checks
            .iter()
            .map(|c| {
                format!(
                    "{} {:.6} vs {:.6} {}",
                    c.name,
                    c.statistic,
                    c.target,
                    if c.pass { "ok" } else { "FAIL" }
                )
            })
            .collect();
        format!("{}: {}", self.theorem, parts.join("; "))
    }
}

/// Runs the whole suite with default parameters.
pub fn verify_all(seed: u64) -> Result<Vec<TheoryReport>> {
    let noise = NoiseModel::default();
    Ok(vec![
        check_theorem1(&noise, 0.6, 100_000, seed)?,
        check_theorem2(100, 5, seed)?,
        check_lemma1(&noise, &Lemma1Config::default(), seed)?,
        estimate_lipschitz(&default_y(16, seed), 1000, seed)?,
        check_histogram_equivalence(seed)?,
    ])
}

/// `n` distinct ground-truth scores drawn uniformly from `[0, 1]`.
pub fn default_y(n: usize, seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    (0..n).map(|_| rng.random_range(0.0..1.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_relations() {
        assert!(Check::new("a", 1.0, 1.0, Relation::AtLeast).pass);
        assert!(!Check::new("a", 1.0, 1.0, Relation::Below).pass);
        assert!(Check::new("a", 1.04, 1.0, Relation::WithinRel(0.05)).pass);
        assert!(!Check::new("a", f64::NAN, 1.0, Relation::AtMost).pass);
    }

    #[test]
    fn report_json_fields() {
        let r = TheoryReport::new("t", 3, 7, vec![Check::new("x", 2.0, 1.0, Relation::AtLeast)], serde_json::json!({}));
        let v = serde_json::to_value(&r).unwrap();
        for k in ["theorem", "trials", "statistic", "bound", "pass", "seed"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert_eq!(v["pass"], true);
    }

    #[test]
    fn uniform_noise_moments() {
        use rand::SeedableRng;
        let m = NoiseModel {
            family: NoiseFamily::Uniform,
            ..NoiseModel::default()
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..200_000).map(|_| m.sample(&mut rng, true)).collect();
        assert!((crate::math::mean(&v) - 0.1).abs() < 1e-3);
        assert!((crate::math::std_pop(&v) - 0.05).abs() < 1e-3);
    }
}
