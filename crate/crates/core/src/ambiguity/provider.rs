use std::collections::BTreeMap;
use std::path::Path;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::repair::RepairRecord;
use super::AmbiguityInstance;

/// The procedure every provider is asked to follow.
pub const REPAIR_STEPS: [&str; 4] = [
    "Locate: restrict every edit to the given original segment.",
    "Select: choose the interpretation supported by the supplemental excerpts and cite them verbatim as evidence_refs.",
    "Rewrite: make the decision logic explicit (AND/OR, ordering, thresholds) with the fewest possible word changes.",
    "Return: revised_excerpt replacing the excerpt, a rationale, and the evidence_refs used.",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepairRequest {
    pub ambiguity: AmbiguityInstance,
    pub original_segment: String,
    pub supplemental_excerpts: Vec<String>,
    pub steps: Vec<String>,
}

impl RepairRequest {
    pub fn new(ambiguity: AmbiguityInstance, original_segment: String, supplemental_excerpts: Vec<String>) -> Self {
        RepairRequest {
            ambiguity,
            original_segment,
            supplemental_excerpts,
            steps: REPAIR_STEPS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProviderError {
    /// The provider cannot be reached or configured; aborts the whole run.
    #[error("rewrite provider unavailable: {0}")]
    Unavailable(String),
    /// A response for one ambiguity could not be used.
    #[error("malformed provider response for {ambiguity_id}: {detail}")]
    Malformed { ambiguity_id: String, detail: String },
}

pub trait RewriteProvider: Sync {
    fn name(&self) -> &str;
    fn propose(&self, request: &RepairRequest) -> Result<RepairRecord, ProviderError>;
}

/// Replays responses from a JSON file: an array of repair records, or an
/// object with a `repairs` array.
#[derive(Clone, Debug)]
pub struct CannedProvider {
    records: BTreeMap<String, serde_json::Value>,
}

impl CannedProvider {
    pub fn from_json(text: &str) -> Result<Self, ProviderError> {
        let bad = |e: String| ProviderError::Unavailable(format!("canned responses: {e}"));
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        let list = match v {
            serde_json::Value::Array(a) => a,
            serde_json::Value::Object(mut o) => match o.remove("repairs") {
                Some(serde_json::Value::Array(a)) => a,
                _ => return Err(bad("expected an array or an object with a `repairs` array".into())),
            },
            _ => return Err(bad("expected an array or an object with a `repairs` array".into())),
        };
        let mut records = BTreeMap::new();
        for r in list {
            let id = r
                .get("ambiguity_id")
                .and_then(|v| v.as_str())
                .ok_or_else(|| bad("record without a string `ambiguity_id`".into()))?
                .to_string();
            records.insert(id, r);
        }
        Ok(CannedProvider { records })
    }

    pub fn from_file(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Unavailable(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

impl RewriteProvider for CannedProvider {
    fn name(&self) -> &str {
        "canned"
    }

    fn propose(&self, request: &RepairRequest) -> Result<RepairRecord, ProviderError> {
        let id = &request.ambiguity.ambiguity_id;
        let malformed = |detail: String| ProviderError::Malformed { ambiguity_id: id.clone(), detail };
        let v = self.records.get(id).ok_or_else(|| malformed("no canned response".into()))?;
        serde_json::from_value(v.clone()).map_err(|e| malformed(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HttpProviderConfig {
    pub endpoint: String,
    pub model: String,
    pub token: Option<String>,
    pub timeout: Duration,
    /// Extra attempts after the first, for transport errors, 429 and 5xx.
    pub retries: u32,
    /// Delay before the first retry; doubles per attempt.
    pub backoff: Duration,
}

impl Default for HttpProviderConfig {
    fn default() -> Self {
        HttpProviderConfig {
            endpoint: String::new(),
            model: String::new(),
            token: None,
            timeout: Duration::from_secs(60),
            retries: 2,
            backoff: Duration::from_millis(500),
        }
    }
}

#[derive(Serialize)]
struct HttpPayload<'a> {
    model: &'a str,
    task: &'static str,
    request: &'a RepairRequest,
}

/// Posts each request as JSON and expects a repair record back, either bare
/// or wrapped as `{"repair": {...}}`.
pub struct HttpProvider {
    cfg: HttpProviderConfig,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(cfg: HttpProviderConfig) -> Result<Self, ProviderError> {
        if cfg.endpoint.is_empty() {
            return Err(ProviderError::Unavailable("no endpoint configured".into()));
        }
        let agent =
            ureq::Agent::config_builder().timeout_global(Some(cfg.timeout)).http_status_as_error(false).build().into();
        Ok(HttpProvider { cfg, agent })
    }

    fn attempt(&self, body: &HttpPayload<'_>) -> Result<Result<serde_json::Value, String>, String> {
        let mut req = self.agent.post(&self.cfg.endpoint).header("Accept", "application/json");
        if let Some(t) = &self.cfg.token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        let mut resp = req.send_json(body).map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(format!("HTTP {status}"));
        }
        let text = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        if !(200..300).contains(&status) {
            return Ok(Err(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>())));
        }
        Ok(serde_json::from_str(&text).map_err(|e| format!("response is not JSON: {e}")))
    }
}

impl RewriteProvider for HttpProvider {
    fn name(&self) -> &str {
        "http"
    }

    fn propose(&self, request: &RepairRequest) -> Result<RepairRecord, ProviderError> {
        let id = &request.ambiguity.ambiguity_id;
        let body = HttpPayload { model: &self.cfg.model, task: "ambiguity_repair", request };
        let mut delay = self.cfg.backoff;
        let mut last = String::new();
        for attempt in 0..=self.cfg.retries {
            if attempt > 0 {
                thread::sleep(delay);
                delay *= 2;
            }
            match self.attempt(&body) {
                Err(retryable) => last = retryable,
                Ok(Err(fatal)) => return Err(ProviderError::Unavailable(fatal)),
                Ok(Ok(mut v)) => {
                    if let Some(inner) = v.get_mut("repair").map(serde_json::Value::take) {
                        v = inner;
                    }
                    return serde_json::from_value(v)
                        .map_err(|e| ProviderError::Malformed { ambiguity_id: id.clone(), detail: e.to_string() });
                }
            }
        }
        Err(ProviderError::Unavailable(format!("{} after {} attempts", last, self.cfg.retries + 1)))
    }
}
