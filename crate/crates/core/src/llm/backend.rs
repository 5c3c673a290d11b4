//! Score retrieval: a fixture-backed mock and an HTTP client.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::prompt::{build_prompt, Prompt, PromptTemplate};
use super::store::ExampleStore;
use crate::error::{Error, Result};
use crate::series::{ScoreKind, ScoreSeries, TimeSeriesWindow};

pub const API_KEY_ENV: &str = "COLLATE_LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendMode {
    Live,
    Mock { fixture: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmBackendConfig {
    pub endpoint: String,
    pub api_key_env: String,
    pub max_in_flight: usize,
    pub retries: usize,
    /// Seconds; attempt `k` waits `backoff_base · 2^k` before retrying.
    pub backoff_base: f64,
    pub timeout_secs: f64,
    /// Which recorded run to use when a fixture holds several per window.
    pub run: u32,
    pub mode: BackendMode,
}

impl Default for LlmBackendConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:8080/v1/score".into(),
            api_key_env: API_KEY_ENV.into(),
            max_in_flight: 4,
            retries: 3,
            backoff_base: 1.0,
            timeout_secs: 120.0,
            run: 0,
            mode: BackendMode::Live,
        }
    }
}

impl LlmBackendConfig {
    pub fn mock(fixture: impl Into<PathBuf>) -> Self {
        Self {
            mode: BackendMode::Mock {
                fixture: fixture.into(),
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_in_flight == 0 {
            return Err(Error::InvalidInput("max_in_flight must be >= 1".into()));
        }
        if !(self.backoff_base.is_finite() && self.backoff_base >= 0.0) {
            return Err(Error::InvalidInput("backoff_base must be finite and >= 0".into()));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(Error::InvalidInput("timeout_secs must be positive".into()));
        }
        Ok(())
    }
}

/// Parses one score per non-empty line. See the module README for the
/// exact rules.
pub fn parse_response(text: &str, expected: usize) -> Result<ScoreSeries> {
    let mut scores = Vec::with_capacity(expected);
    for (i, line) in text.lines().map(str::trim).filter(|l| !l.is_empty()).enumerate() {
        let v: f64 = line.parse().map_err(|_| Error::MalformedResponse {
            attempts: 1,
            log: format!("line {}: `{line}` is not a number", i + 1),
        })?;
        if !v.is_finite() {
            return Err(Error::MalformedResponse {
                attempts: 1,
                log: format!("line {}: non-finite score", i + 1),
            });
        }
        scores.push(v);
    }
    check_scores(scores, expected)
}

fn check_scores(scores: Vec<f64>, expected: usize) -> Result<ScoreSeries> {
    if scores.len() != expected {
        return Err(Error::MalformedResponse {
            attempts: 1,
            log: format!("expected {expected} scores, got {}", scores.len()),
        });
    }
    if let Some((slot, &value)) = scores.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(Error::ScoreOutOfRange { slot, value });
    }
    ScoreSeries::new(scores, ScoreKind::Llm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub window_id: String,
    pub scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<u32>,
}

pub fn write_fixture(path: &Path, entries: &[FixtureEntry]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for e in entries {
        writeln!(f, "{}", serde_json::to_string(e)?).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Fixture lookup keyed by `(window_id, run)`; a missing `run` field means 0.
#[derive(Debug, Clone, PartialEq)]
pub struct MockBackend {
    entries: BTreeMap<(String, u32), Vec<f64>>,
    run: u32,
}

impl MockBackend {
    pub fn load(path: &Path, run: u32) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut entries = BTreeMap::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let e: FixtureEntry = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: i as u64 + 1,
                msg: e.to_string(),
            })?;
            let key = (e.window_id, e.run.unwrap_or(0));
            if entries.insert(key.clone(), e.scores).is_some() {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: i as u64 + 1,
                    msg: format!("duplicate fixture for window `{}` run {}", key.0, key.1),
                });
            }
        }
        Ok(Self { entries, run })
    }

    pub fn from_entries(entries: Vec<FixtureEntry>, run: u32) -> Self {
        let entries = entries
            .into_iter()
            .map(|e| ((e.window_id, e.run.unwrap_or(0)), e.scores))
            .collect();
        Self { entries, run }
    }

    pub fn lookup(&self, window_id: &str, expected: usize) -> Result<ScoreSeries> {
        let scores = self
            .entries
            .get(&(window_id.to_string(), self.run))
            .ok_or_else(|| Error::MissingFixture(window_id.to_string()))?;
        check_scores(scores.clone(), expected)
    }
}

/// Sends one prompt and returns the raw response body.
pub trait Transport: Sync {
    fn post(&self, prompt: &str) -> std::result::Result<String, String>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
    endpoint: String,
    api_key: String,
}

impl HttpTransport {
    pub fn from_config(cfg: &LlmBackendConfig) -> Result<Self> {
        let api_key = std::env::var(&cfg.api_key_env).map_err(|_| Error::MissingApiKey(cfg.api_key_env.clone()))?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_secs)))
            .build()
            .into();
        Ok(Self {
            agent,
            endpoint: cfg.endpoint.clone(),
            api_key,
        })
    }
}

impl Transport for HttpTransport {
    fn post(&self, prompt: &str) -> std::result::Result<String, String> {
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(serde_json::json!({ "prompt": prompt }))
            .map_err(|e| e.to_string())?;
        resp.body_mut().read_to_string().map_err(|e| e.to_string())
    }
}

#[derive(Deserialize)]
struct WireResponse {
    text: String,
}

pub struct LiveBackend<T: Transport> {
    transport: T,
    retries: usize,
    backoff_base: f64,
}

impl<T: Transport> LiveBackend<T> {
    pub fn new(transport: T, retries: usize, backoff_base: f64) -> Self {
        Self {
            transport,
            retries,
            backoff_base,
        }
    }

    /// Retries transport failures and unparseable replies with exponential
    /// backoff. Out-of-range scores are returned immediately.
    pub fn request(&self, prompt: &str, expected: usize) -> Result<ScoreSeries> {
        let mut log = Vec::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                let wait = self.backoff_base * 2f64.powi(attempt as i32 - 1);
                std::thread::sleep(Duration::from_secs_f64(wait));
            }
            let outcome = self.transport.post(prompt).and_then(|body| {
                serde_json::from_str::<WireResponse>(&body)
                    .map_err(|e| format!("bad response body: {e}"))
                    .map(|w| w.text)
            });
            match outcome {
                Ok(text) => match parse_response(&text, expected) {
                    Ok(s) => return Ok(s),
                    Err(Error::MalformedResponse { log: msg, .. }) => log.push(format!("attempt {}: {msg}", attempt + 1)),
                    Err(e) => return Err(e),
                },
                Err(msg) => log.push(format!("attempt {}: {msg}", attempt + 1)),
            }
            log::warn!("{}", log.last().map(String::as_str).unwrap_or_default());
        }
        Err(Error::MalformedResponse {
            attempts: self.retries + 1,
            log: log.join("; "),
        })
    }
}

pub enum LlmBackend {
    Mock(MockBackend),
    Live(LiveBackend<HttpTransport>),
}

impl LlmBackend {
    pub fn from_config(cfg: &LlmBackendConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(match &cfg.mode {
            BackendMode::Mock { fixture } => LlmBackend::Mock(MockBackend::load(fixture, cfg.run)?),
            BackendMode::Live => {
                LlmBackend::Live(LiveBackend::new(HttpTransport::from_config(cfg)?, cfg.retries, cfg.backoff_base))
            }
        })
    }

    pub fn request_scores(&self, prompt: &Prompt, expected: usize) -> Result<ScoreSeries> {
        match self {
            LlmBackend::Mock(m) => m.lookup(&prompt.window_id, expected),
            LlmBackend::Live(l) => l.request(&prompt.text, expected),
        }
    }
}

/// Scores every prompt with at most `max_in_flight` concurrent requests.
/// Results are keyed by window id; the first failure in prompt order wins.
pub fn score_prompts<F>(prompts: &[(Prompt, usize)], max_in_flight: usize, request: F) -> Result<BTreeMap<String, ScoreSeries>>
where
    F: Fn(&Prompt, usize) -> Result<ScoreSeries> + Sync,
{
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<ScoreSeries>>>> = Mutex::new((0..prompts.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..max_in_flight.max(1).min(prompts.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((p, n)) = prompts.get(i) else { break };
                let r = request(p, *n);
                results.lock().expect("result lock poisoned")[i] = Some(r);
            });
        }
    });
    let mut out = BTreeMap::new();
    for (r, (p, _)) in results.into_inner().expect("result lock poisoned").into_iter().zip(prompts) {
        out.insert(p.window_id.clone(), r.expect("every prompt is visited")?);
    }
    Ok(out)
}

/// Prompt layout shared by every window of one scoring pass.
#[derive(Debug, Clone, Copy)]
pub struct ScoringPlan<'a> {
    pub llm_window: usize,
    pub store: &'a ExampleStore,
    pub template: &'a PromptTemplate,
    pub budget: usize,
    pub max_in_flight: usize,
}

/// Tiles `window` into prompts of `plan.llm_window` slots, scores them and
/// reassembles one series covering `window`.
pub fn score_window<F>(window: &TimeSeriesWindow, plan: &ScoringPlan<'_>, request: F) -> Result<ScoreSeries>
where
    F: Fn(&Prompt, usize) -> Result<ScoreSeries> + Sync,
{
    let tiles = llm_windows(window, plan.llm_window)?;
    let prompts = tiles
        .iter()
        .map(|w| Ok((build_prompt(w, plan.store, plan.template, plan.budget)?, w.len())))
        .collect::<Result<Vec<_>>>()?;
    let scored = score_prompts(&prompts, plan.max_in_flight, request)?;
    assemble_scores(&tiles, &scored)
}

/// Non-overlapping windows of `len` slots; the last one may be shorter.
pub fn llm_windows(series: &TimeSeriesWindow, len: usize) -> Result<Vec<TimeSeriesWindow>> {
    if len == 0 {
        return Err(Error::InvalidInput("LLM window length must be positive".into()));
    }
    (0..series.len())
        .step_by(len)
        .map(|a| series.slice(a, (a + len).min(series.len())))
        .collect()
}

/// Concatenates per-window scores back into one series covering `windows`.
pub fn assemble_scores(windows: &[TimeSeriesWindow], scores: &BTreeMap<String, ScoreSeries>) -> Result<ScoreSeries> {
    let mut out = Vec::new();
    for w in windows {
        let s = scores.get(&w.id()).ok_or_else(|| Error::MissingLlmScores(w.id()))?;
        if s.len() != w.len() {
            return Err(Error::LengthMismatch {
                left: w.len(),
                right: s.len(),
            });
        }
        out.extend_from_slice(s.scores());
    }
    ScoreSeries::new(out, ScoreKind::Llm)
}
