//! Language-model scoring: prompt construction, example store and backends.

mod backend;
mod prompt;
mod store;

pub use backend::{
    assemble_scores, llm_windows, score_window, parse_response, score_prompts, write_fixture, BackendMode, FixtureEntry,
    HttpTransport, LiveBackend, LlmBackend, LlmBackendConfig, MockBackend, ScoringPlan, Transport, API_KEY_ENV,
};
pub use prompt::{
    build_prompt, serialize_window, Prompt, PromptTemplate, DATA_PLACEHOLDER, OUTPUT_RULE, TRUNCATION_MARKER,
};
pub use store::{refresh_examples, ExampleEntry, ExampleStore};
