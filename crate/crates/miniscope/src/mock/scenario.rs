use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario schema error: {0}")]
    Schema(String),
    #[error("token_ttl must be positive")]
    BadTtl,
    #[error("app {0:?}: secret must be 32 characters")]
    BadSecret(String),
}

/// Per-app state the mock server simulates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AppScenario {
    pub secret: String,
    /// Empty list means whitelisting is disabled.
    #[serde(default)]
    pub whitelist: Vec<String>,
    /// Account-level "the user is limited" condition.
    #[serde(default)]
    pub limited: bool,
    /// Feature tag -> enabled; tags absent from the map default to enabled.
    #[serde(default)]
    pub features: BTreeMap<String, bool>,
    /// Canned JSON bodies keyed by api name.
    #[serde(default)]
    pub fixtures: BTreeMap<String, serde_json::Value>,
    /// Remaining calls per api name; apis absent from the map are unmetered.
    #[serde(default)]
    pub quotas: BTreeMap<String, u64>,
    /// Rolling 30-day call caps per api name (e.g. clearQuota-style limits).
    #[serde(default)]
    pub monthly_limits: BTreeMap<String, u64>,
}

impl AppScenario {
    pub fn with_secret(secret: &str) -> Self {
        AppScenario {
            secret: secret.to_string(),
            whitelist: Vec::new(),
            limited: false,
            features: BTreeMap::new(),
            fixtures: BTreeMap::new(),
            quotas: BTreeMap::new(),
            monthly_limits: BTreeMap::new(),
        }
    }
}

pub const DEFAULT_TOKEN_TTL: u64 = 7200;

fn default_ttl() -> u64 {
    DEFAULT_TOKEN_TTL
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockScenario {
    pub apps: BTreeMap<String, AppScenario>,
    /// Token lifetime in seconds (2 h for the WeChat-like default).
    #[serde(default = "default_ttl")]
    pub token_ttl: u64,
}

impl MockScenario {
    pub fn new() -> Self {
        MockScenario {
            apps: BTreeMap::new(),
            token_ttl: DEFAULT_TOKEN_TTL,
        }
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ScenarioError> {
        let s: MockScenario =
            serde_json::from_slice(bytes).map_err(|e| ScenarioError::Schema(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.token_ttl == 0 {
            return Err(ScenarioError::BadTtl);
        }
        for (id, app) in &self.apps {
            if app.secret.chars().count() != 32 {
                return Err(ScenarioError::BadSecret(id.clone()));
            }
        }
        Ok(())
    }
}

impl Default for MockScenario {
    fn default() -> Self {
        Self::new()
    }
}
