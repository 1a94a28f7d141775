//! Service configuration, read from a TOML file.
//!
//! Every key is optional:
//!
//! ```toml
//! clip_length_s = 2.0        # grounding clip length in seconds
//! direction_window = 10      # frames averaged for approach/withdrawal directions
//! rdp_epsilon = 0.01         # waypoint simplification tolerance, meters
//! quantizer = "26-direction" # direction codebook; the only one available
//! token_budget = 8192        # planner session budget
//! endpoint = "https://api.openai.com/v1/chat/completions"
//! model_id = "gpt-4o"
//! transport = "replay"       # live | record | replay
//! fixtures_dir = "fixtures"
//! jobs_dir = "jobs"
//! bind = "127.0.0.1:8080"
//! ```

use std::path::{Path, PathBuf};

use demo2plan::affordance::GroundingConfig;
use demo2plan::gateway::{
    FixtureStore, LiveTransport, RecordingTransport, ReplayTransport, Transport, TransportMode, DEFAULT_MAX_EDGE,
    DEFAULT_MODEL_ID, DEFAULT_SAMPLE_COUNT, DEFAULT_TOKEN_BUDGET,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const QUANTIZER_26: &str = "26-direction";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("transport: {0}")]
    Transport(#[from] demo2plan::gateway::GatewayError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub clip_length_s: f64,
    pub direction_window: usize,
    pub rdp_epsilon: f64,
    pub quantizer: String,
    pub token_budget: usize,
    pub endpoint: String,
    pub model_id: String,
    pub temperature: Option<f64>,
    pub transport: TransportMode,
    pub fixtures_dir: PathBuf,
    pub jobs_dir: PathBuf,
    pub bind: String,
    /// Directory of prompt template overrides.
    pub prompts_dir: Option<PathBuf>,
    pub frame_samples: usize,
    pub max_edge: u32,
    /// Require affordance records for every Grab and Release when compiling.
    pub strict_compile: bool,
}

impl Default for Config {
    fn default() -> Self {
        let grounding = GroundingConfig::default();
        Config {
            clip_length_s: grounding.clip_length_s,
            direction_window: grounding.direction_window,
            rdp_epsilon: grounding.rdp_epsilon,
            quantizer: QUANTIZER_26.into(),
            token_budget: DEFAULT_TOKEN_BUDGET,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model_id: DEFAULT_MODEL_ID.into(),
            temperature: None,
            transport: TransportMode::Replay,
            fixtures_dir: "fixtures".into(),
            jobs_dir: "jobs".into(),
            bind: "127.0.0.1:8080".into(),
            prompts_dir: None,
            frame_samples: DEFAULT_SAMPLE_COUNT,
            max_edge: DEFAULT_MAX_EDGE,
            strict_compile: false,
        }
    }
}

impl Config {
    /// Reads a config file. Relative directories are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let mut config: Config = toml::from_str(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for dir in [&mut config.fixtures_dir, &mut config.jobs_dir] {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
        if let Some(p) = &mut config.prompts_dir {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        config.check()?;
        Ok(config)
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.quantizer != QUANTIZER_26 {
            return invalid(format!("quantizer `{}` is not supported; use `{QUANTIZER_26}`", self.quantizer));
        }
        if !(self.clip_length_s > 0.0) {
            return invalid(format!("clip_length_s must be positive, got {}", self.clip_length_s));
        }
        if self.direction_window == 0 {
            return invalid("direction_window must be at least 1".into());
        }
        if !(self.rdp_epsilon > 0.0) {
            return invalid(format!("rdp_epsilon must be positive, got {}", self.rdp_epsilon));
        }
        if self.token_budget == 0 || self.frame_samples == 0 {
            return invalid("token_budget and frame_samples must be positive".into());
        }
        if self.transport == TransportMode::Scripted {
            return invalid("the scripted transport is only available to tests and `fixtures record --responses`".into());
        }
        Ok(())
    }

    pub fn grounding(&self) -> GroundingConfig {
        GroundingConfig {
            clip_length_s: self.clip_length_s,
            direction_window: self.direction_window,
            rdp_epsilon: self.rdp_epsilon,
            ..GroundingConfig::default()
        }
    }

    /// Builds the transport named by `transport`.
    pub fn build_transport(&self) -> Result<Box<dyn Transport>, ConfigError> {
        let store = FixtureStore::new(&self.fixtures_dir);
        Ok(match self.transport {
            TransportMode::Live => Box::new(LiveTransport::from_env(&self.endpoint)?),
            TransportMode::Record => Box::new(RecordingTransport::new(LiveTransport::from_env(&self.endpoint)?, store)),
            TransportMode::Replay => Box::new(ReplayTransport::new(store)),
            TransportMode::Scripted => return Err(ConfigError::Invalid("scripted transport needs responses".into())),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_keys_parse() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("demo2plan.toml");
        std::fs::write(
            &path,
            "clip_length_s = 1.5\ndirection_window = 8\nrdp_epsilon = 0.02\nquantizer = \"26-direction\"\n\
             token_budget = 4096\nendpoint = \"http://localhost:9/v1\"\nmodel_id = \"m\"\nfixtures_dir = \"fx\"\n",
        )
        .unwrap();
        let c = Config::load(&path).unwrap();
        assert_eq!(c.grounding().clip_length_s, 1.5);
        assert_eq!(c.grounding().direction_window, 8);
        assert_eq!(c.token_budget, 4096);
        assert_eq!(c.fixtures_dir, dir.path().join("fx"));
        assert_eq!(c.transport, TransportMode::Replay);
    }

    #[test]
    fn bad_values_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        for text in ["quantizer = \"octants\"", "rdp_epsilon = 0.0", "bogus = 1", "transport = \"scripted\""] {
            std::fs::write(&path, text).unwrap();
            assert!(Config::load(&path).is_err(), "{text}");
        }
    }
}
