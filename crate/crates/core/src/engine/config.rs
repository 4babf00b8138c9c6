use alloc::format;
use alloc::string::{String, ToString};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::AgentRole;
use crate::journal::MAX_LOCAL_DEPTH;
use crate::retrieval::{RetrieveParams, DEFAULT_K_CAND, DEFAULT_K_RRF, DEFAULT_TOP_M};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("config error: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Temperatures {
    pub decomposer: f64,
    pub retriever: f64,
    pub verifier: f64,
    pub assembler: f64,
    pub supervisor: f64,
    pub controller: f64,
}

impl Default for Temperatures {
    fn default() -> Self {
        Temperatures {
            decomposer: AgentRole::Decomposer.default_temperature(),
            retriever: AgentRole::Retriever.default_temperature(),
            verifier: AgentRole::Verifier.default_temperature(),
            assembler: AgentRole::Assembler.default_temperature(),
            supervisor: AgentRole::Supervisor.default_temperature(),
            controller: AgentRole::Controller.default_temperature(),
        }
    }
}

impl Temperatures {
    pub fn for_role(&self, role: AgentRole) -> f64 {
        match role {
            AgentRole::Decomposer => self.decomposer,
            AgentRole::Retriever => self.retriever,
            AgentRole::Verifier => self.verifier,
            AgentRole::Assembler => self.assembler,
            AgentRole::Supervisor => self.supervisor,
            AgentRole::Controller => self.controller,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendConfig {
    /// Replies come from a script table (a scenario file, or `script`).
    Scripted {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        script: Option<String>,
    },
    /// Chat-completions endpoint; the key is read from `REAGENT_API_KEY`.
    Http {
        base_url: String,
        model: String,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
}

fn default_timeout() -> u64 {
    60
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Scripted { script: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub max_subquestions: usize,
    pub local_bt_depth: usize,
    pub max_global_rollbacks: usize,
    pub max_rounds: usize,
    #[serde(rename = "top_M", alias = "top_m")]
    pub top_m: usize,
    #[serde(rename = "K_cand", alias = "k_cand")]
    pub k_cand: usize,
    pub k_rrf: u32,
    pub workers: usize,
    pub temperatures: Temperatures,
    pub backend: BackendConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            max_subquestions: 3,
            local_bt_depth: 3,
            max_global_rollbacks: 2,
            max_rounds: 12,
            top_m: DEFAULT_TOP_M,
            k_cand: DEFAULT_K_CAND,
            k_rrf: DEFAULT_K_RRF,
            workers: 4,
            temperatures: Temperatures::default(),
            backend: BackendConfig::default(),
        }
    }
}

impl EngineConfig {
    /// `local_bt_depth` may be 0, which turns local backtracking off.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("max_subquestions", self.max_subquestions),
            ("max_global_rollbacks", self.max_global_rollbacks),
            ("max_rounds", self.max_rounds),
            ("top_M", self.top_m),
            ("K_cand", self.k_cand),
            ("k_rrf", self.k_rrf as usize),
            ("workers", self.workers),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ConfigError(format!("{name} must be positive")));
            }
        }
        if self.local_bt_depth > MAX_LOCAL_DEPTH {
            return Err(ConfigError(format!(
                "local_bt_depth must be at most {MAX_LOCAL_DEPTH}"
            )));
        }
        for role in AgentRole::ALL {
            let t = self.temperatures.for_role(role);
            if !(0.0..=2.0).contains(&t) {
                return Err(ConfigError(format!("temperature for {role} must be in [0, 2]")));
            }
        }
        if let BackendConfig::Http { base_url, model, .. } = &self.backend {
            if base_url.is_empty() || model.is_empty() {
                return Err(ConfigError("http backend needs base_url and model".to_string()));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: EngineConfig =
            serde_json::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Returns a copy with the fields of `overrides` (a JSON object using
    /// the same field names) replaced.
    pub fn with_overrides(&self, overrides: &serde_json::Value) -> Result<Self, ConfigError> {
        let mut base = serde_json::to_value(self).map_err(|e| ConfigError(e.to_string()))?;
        merge(&mut base, overrides);
        let cfg: EngineConfig =
            serde_json::from_value(base).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn retrieve_params(&self) -> RetrieveParams {
        RetrieveParams {
            top_m: self.top_m,
            k_cand: self.k_cand,
            k_rrf: self.k_rrf,
        }
    }
}

fn merge(base: &mut serde_json::Value, patch: &serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    // Tagged enums are replaced wholesale.
                    Some(slot) if k != "backend" => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, p) => *b = p.clone(),
    }
}
