#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use demo2plan::gateway::{FixtureStore, ReplayTransport, ScriptedTransport, Transport};
use demo2plan_service::{Config, JobInputs, Pipeline};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn juice_dir() -> PathBuf {
    data_dir().join("juice_relocation")
}

pub fn config(jobs: &std::path::Path) -> Config {
    Config { jobs_dir: jobs.to_path_buf(), fixtures_dir: juice_dir().join("fixtures"), ..Config::default() }
}

pub fn fence(json: &str) -> String {
    format!("```json\n{json}\n```")
}

pub fn plan_response(steps: &[&str]) -> String {
    let explanations = vec![""; steps.len()];
    fence(
        &serde_json::json!({
            "task_sequence": steps,
            "step_explanations": explanations,
            "environment_after": {},
            "summary": "",
        })
        .to_string(),
    )
}

pub fn scripted(jobs: &std::path::Path, responses: Vec<String>) -> Pipeline {
    let transport: Arc<dyn Transport> = Arc::new(ScriptedTransport::new(responses));
    Pipeline::new(config(jobs), transport).unwrap()
}

pub fn replay(jobs: &std::path::Path) -> Pipeline {
    let transport: Arc<dyn Transport> = Arc::new(ReplayTransport::new(FixtureStore::new(juice_dir().join("fixtures"))));
    Pipeline::new(config(jobs), transport).unwrap()
}

pub fn juice_inputs() -> JobInputs {
    let dir = juice_dir();
    JobInputs::from_paths(Some(&dir.join("frames")), Some(&dir.join("stream.jsonl")), None).unwrap()
}

/// The recorded model answers of the juice job, in request order.
pub fn juice_responses() -> Vec<String> {
    serde_json::from_str(&std::fs::read_to_string(juice_dir().join("responses.json")).unwrap()).unwrap()
}
