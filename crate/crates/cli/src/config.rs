//! Run configuration loaded from TOML. Key names follow the hyperparameter
//! table (`winLen`, `moduleNum`, ...); unknown keys are rejected.

use std::path::{Path, PathBuf};

use collate_core::alignment::MomentPenalty;
use collate_core::collab::{CollabConfig, LossVariant, WeightRouting};
use collate_core::data::BenchmarkConfig;
use collate_core::experiment::{ComplementaryConfig, ScoreProfile};
use collate_core::llm::{BackendMode, LlmBackendConfig, API_KEY_ENV};
use collate_core::optim::OptimizerKind;
use collate_core::tsadm::TsadmConfig;
use collate_core::NormalizationConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    /// Anomaly-attention reconstruction model trained on the train split.
    #[default]
    Attention,
    /// Profile-driven scores from the generator's anomaly spans.
    Simulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmMode {
    #[default]
    Mock,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub run_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            run_dir: PathBuf::from("runs/default"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub length: usize,
    pub contextual: usize,
    pub point: usize,
    /// Profile of the simulated detector.
    pub detector_profile: ScoreProfile,
    /// Profile of the recorded mock language-model answers.
    pub llm_profile: ScoreProfile,
}

impl Default for DataSection {
    fn default() -> Self {
        let c = ComplementaryConfig::new(0);
        Self {
            length: c.benchmark.generator.length,
            contextual: c.benchmark.contextual.count,
            point: c.benchmark.point.count,
            detector_profile: c.detector,
            llm_profile: c.llm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlmSection {
    pub mode: LlmMode,
    /// Defaults to `llm_fixture.json` in the run directory.
    pub fixture: Option<PathBuf>,
    pub endpoint: String,
    pub api_key_env: String,
    pub max_in_flight: usize,
    pub retries: usize,
    pub backoff_base: f64,
    pub timeout_secs: f64,
    pub run: u32,
    pub template: String,
    /// Slots per prompt.
    pub window: usize,
    /// Character budget of the serialized data block.
    pub budget: usize,
}

impl Default for LlmSection {
    fn default() -> Self {
        let b = LlmBackendConfig::default();
        Self {
            mode: LlmMode::Mock,
            fixture: None,
            endpoint: b.endpoint,
            api_key_env: API_KEY_ENV.into(),
            max_in_flight: b.max_in_flight,
            retries: b.retries,
            backoff_base: b.backoff_base,
            timeout_secs: b.timeout_secs,
            run: 0,
            template: "mgab".into(),
            window: 100,
            budget: 1 << 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub colr: Vec<f64>,
    #[serde(rename = "patchSize")]
    pub patch_size: Vec<usize>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            colr: vec![0.01, 0.001],
            patch_size: vec![2, 4, 8],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(rename = "winLen")]
    pub win_len: usize,
    #[serde(rename = "moduleNum")]
    pub module_num: usize,
    #[serde(rename = "batchSize")]
    pub batch_size: usize,
    pub trlr: f64,
    pub colr: f64,
    #[serde(rename = "patchSize")]
    pub patch_size: usize,
    #[serde(rename = "kLen")]
    pub k_len: usize,
    pub d: f64,
    pub lambda_hat: [f64; 2],
    pub variant: LossVariant,
    pub routing: WeightRouting,
    pub optimizer: OptimizerKind,
    pub hidden: usize,
    pub stride: usize,
    pub tsadm_epochs: usize,
    pub collab_epochs: usize,
    pub detector: DetectorKind,
    pub paths: Paths,
    pub data: DataSection,
    pub llm: LlmSection,
    pub grid: GridSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TsadmConfig::default();
        let c = CollabConfig::default();
        Self {
            seed: 0,
            win_len: t.win_len,
            module_num: t.module_num,
            batch_size: t.batch_size,
            trlr: t.lr,
            colr: c.lr,
            patch_size: c.patch_size,
            k_len: t.k_len,
            d: c.normalization.d,
            lambda_hat: [c.penalty.lambda_hat_1, c.penalty.lambda_hat_2],
            variant: LossVariant::Collaborative,
            routing: c.routing,
            optimizer: c.optimizer,
            hidden: t.hidden,
            stride: t.stride,
            tsadm_epochs: t.epochs,
            collab_epochs: c.epochs,
            detector: DetectorKind::Attention,
            paths: Paths::default(),
            data: DataSection::default(),
            llm: LlmSection::default(),
            grid: GridSection::default(),
        }
    }
}

fn range<T: PartialOrd + std::fmt::Display>(name: &str, v: T, lo: T, hi: T) -> Result<(), CliError> {
    if v < lo || v > hi {
        return Err(CliError::Config(format!("{name} = {v} outside [{lo}, {hi}]")));
    }
    Ok(())
}

fn positive_rate(name: &str, v: f64) -> Result<(), CliError> {
    if !(v.is_finite() && v > 0.0 && v <= 1.0) {
        return Err(CliError::Config(format!("{name} = {v} outside (0, 1]")));
    }
    Ok(())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        range("winLen", self.win_len, 1, 4096)?;
        range("moduleNum", self.module_num, 1, 64)?;
        range("batchSize", self.batch_size, 1, 1 << 20)?;
        range("patchSize", self.patch_size, 2, self.batch_size.max(2))?;
        range("kLen", self.k_len, 1, 64)?;
        range("hidden", self.hidden, 1, 1024)?;
        range("stride", self.stride, 1, 1 << 20)?;
        range("tsadm_epochs", self.tsadm_epochs, 1, 100_000)?;
        range("collab_epochs", self.collab_epochs, 1, 100_000)?;
        positive_rate("trlr", self.trlr)?;
        positive_rate("colr", self.colr)?;
        if !(self.d.is_finite() && self.d > 0.0) {
            return Err(CliError::Config(format!("d = {} must be > 0", self.d)));
        }
        if self.lambda_hat.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(CliError::Config("lambda_hat entries must be finite and >= 0".into()));
        }
        range("data.length", self.data.length, 100, 10_000_000)?;
        range("llm.window", self.llm.window, 1, 1 << 20)?;
        range("llm.max_in_flight", self.llm.max_in_flight, 1, 256)?;
        range("llm.budget", self.llm.budget, 64, 1 << 24)?;
        for p in [&self.data.detector_profile, &self.data.llm_profile] {
            if [p.noise, p.contextual, p.point].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(CliError::Config("score profiles must be finite and >= 0".into()));
            }
        }
        for &lr in &self.grid.colr {
            positive_rate("grid.colr", lr)?;
        }
        for &p in &self.grid.patch_size {
            range("grid.patchSize", p, 2, self.batch_size.max(2))?;
        }
        if collate_core::llm::PromptTemplate::builtin(&self.llm.template).is_none() {
            return Err(CliError::Config(format!("llm.template `{}` is not a built-in template", self.llm.template)));
        }
        self.collab().validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn run_dir(&self) -> &Path {
        &self.paths.run_dir
    }

    pub fn benchmark(&self) -> BenchmarkConfig {
        let mut b = BenchmarkConfig::complementary(self.seed);
        b.generator.length = self.data.length;
        b.contextual.count = self.data.contextual;
        b.point.count = self.data.point;
        b
    }

    pub fn tsadm(&self) -> TsadmConfig {
        TsadmConfig {
            hidden: self.hidden,
            k_len: self.k_len,
            module_num: self.module_num,
            win_len: self.win_len,
            lr: self.trlr,
            epochs: self.tsadm_epochs,
            batch_size: self.batch_size,
            stride: self.stride,
            seed: self.seed,
        }
    }

    pub fn collab(&self) -> CollabConfig {
        CollabConfig {
            lr: self.colr,
            epochs: self.collab_epochs,
            batch_size: self.batch_size,
            patch_size: self.patch_size,
            normalization: NormalizationConfig { d: self.d },
            penalty: MomentPenalty {
                lambda_hat_1: self.lambda_hat[0],
                lambda_hat_2: self.lambda_hat[1],
            },
            routing: self.routing,
            optimizer: self.optimizer,
            seed: self.seed,
            ..CollabConfig::default()
        }
    }

    pub fn fixture_path(&self) -> PathBuf {
        self.llm
            .fixture
            .clone()
            .unwrap_or_else(|| self.run_dir().join("llm_fixture.json"))
    }

    pub fn backend(&self) -> LlmBackendConfig {
        LlmBackendConfig {
            endpoint: self.llm.endpoint.clone(),
            api_key_env: self.llm.api_key_env.clone(),
            max_in_flight: self.llm.max_in_flight,
            retries: self.llm.retries,
            backoff_base: self.llm.backoff_base,
            timeout_secs: self.llm.timeout_secs,
            run: self.llm.run,
            mode: match self.llm.mode {
                LlmMode::Mock => BackendMode::Mock {
                    fixture: self.fixture_path(),
                },
                LlmMode::Live => BackendMode::Live,
            },
        }
    }

    pub fn complementary(&self) -> ComplementaryConfig {
        ComplementaryConfig {
            benchmark: self.benchmark(),
            detector: self.data.detector_profile,
            llm: self.data.llm_profile,
            llm_window: self.llm.window,
            collab: self.collab(),
            lr_grid: self.grid.colr.clone(),
            seed: self.seed,
        }
    }
}
