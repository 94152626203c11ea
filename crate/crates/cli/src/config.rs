use std::path::Path;

use anyhow::Context;
use cogchain::eval::EvalConfig;
use cogchain::gateway::EndpointConfig;
use cogchain::pipeline::AnnotateConfig;
use cogchain::quality::TrainConfig;
use cogchain_review::ReviewConfig;
use serde::Deserialize;

/// A config file. Every table is optional; commands complain about the ones
/// they need.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub endpoint: Option<EndpointConfig>,
    #[serde(default)]
    pub annotate: AnnotateConfig,
    #[serde(default)]
    pub quality: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub review: Option<ReviewConfig>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(Config::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn endpoint(&self) -> anyhow::Result<EndpointConfig> {
        self.endpoint.clone().context("config has no [endpoint] table")
    }
}
