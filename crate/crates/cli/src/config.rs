//! Run configuration: a TOML file, overridden by command-line flags, with the
//! provider token taken only from the environment.

use std::path::{Path, PathBuf};
use std::time::Duration;

use ambiguity_core::ambiguity::{HttpProviderConfig, DEFAULT_LOCALIZATION_THRESHOLD};
use ambiguity_core::diagnosis::DEFAULT_CARDINALITY_CAP;
use ambiguity_core::distribution::{DEFAULT_ROUND_DECIMALS, MAX_ROUND_DECIMALS};
use ambiguity_core::simulation::{KpiConfig, DEFAULT_STEP_CAP};
use serde::Deserialize;

use crate::CliError;

pub const TOKEN_ENV: &str = "AMBIG_PROVIDER_TOKEN";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Canned,
    Http,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSettings {
    pub kind: Option<ProviderKind>,
    /// Response file for the canned provider.
    pub canned: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub timeout_secs: Option<u64>,
    pub retries: Option<u32>,
    pub backoff_ms: Option<u64>,
}

/// File form of [`RunConfig`]. Relative paths resolve against the file's
/// directory.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub models: Option<PathBuf>,
    pub cases: Option<PathBuf>,
    pub narrative: Option<PathBuf>,
    pub supplemental: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub round_decimals: Option<u32>,
    pub step_cap: Option<usize>,
    pub localization_threshold: Option<f64>,
    pub cardinality_cap: Option<usize>,
    pub sequential: Option<bool>,
    pub kpi: Option<KpiConfig>,
    pub provider: ProviderSettings,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: ConfigFile =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.models, &mut cfg.cases, &mut cfg.narrative, &mut cfg.supplemental, &mut cfg.out]
            .into_iter()
            .chain([&mut cfg.provider.canned])
        {
            if let Some(rel) = p.as_mut().filter(|p| p.is_relative()) {
                *rel = base.join(&*rel);
            }
        }
        Ok(cfg)
    }
}

/// Fully resolved settings for one command.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub models: Option<PathBuf>,
    pub cases: Option<PathBuf>,
    pub narrative: Option<PathBuf>,
    pub supplemental: Option<PathBuf>,
    pub out: PathBuf,
    pub kpi: KpiConfig,
    pub round_decimals: u32,
    pub step_cap: usize,
    pub localization_threshold: f64,
    pub cardinality_cap: usize,
    pub sequential: bool,
    pub provider: ProviderSettings,
    pub token: Option<String>,
}

impl RunConfig {
    /// Checks ranges and that every configured input path exists.
    pub fn from_parts(file: ConfigFile, token: Option<String>) -> Result<Self, CliError> {
        let cfg = RunConfig {
            models: file.models,
            cases: file.cases,
            narrative: file.narrative,
            supplemental: file.supplemental,
            out: file.out.unwrap_or_else(|| PathBuf::from("out")),
            kpi: file.kpi.unwrap_or_default(),
            round_decimals: file.round_decimals.unwrap_or(DEFAULT_ROUND_DECIMALS),
            step_cap: file.step_cap.unwrap_or(DEFAULT_STEP_CAP),
            localization_threshold: file.localization_threshold.unwrap_or(DEFAULT_LOCALIZATION_THRESHOLD),
            cardinality_cap: file.cardinality_cap.unwrap_or(DEFAULT_CARDINALITY_CAP),
            sequential: file.sequential.unwrap_or(false),
            provider: file.provider,
            token: token.filter(|t| !t.is_empty()),
        };
        cfg.kpi.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if cfg.round_decimals > MAX_ROUND_DECIMALS {
            return Err(CliError::Usage(format!("round_decimals must be at most {MAX_ROUND_DECIMALS}")));
        }
        if cfg.step_cap == 0 {
            return Err(CliError::Usage("step_cap must be positive".into()));
        }
        if !(cfg.localization_threshold > 0.0 && cfg.localization_threshold <= 1.0) {
            return Err(CliError::Usage("localization_threshold must lie in (0, 1]".into()));
        }
        if cfg.cardinality_cap == 0 {
            return Err(CliError::Usage("cardinality_cap must be positive".into()));
        }
        for (name, p) in [
            ("models", &cfg.models),
            ("cases", &cfg.cases),
            ("narrative", &cfg.narrative),
            ("supplemental", &cfg.supplemental),
            ("provider.canned", &cfg.provider.canned),
        ] {
            if let Some(p) = p.as_ref().filter(|p| !p.exists()) {
                return Err(CliError::Usage(format!("{name} path {} does not exist", p.display())));
            }
        }
        Ok(cfg)
    }

    pub fn require<'a>(&self, name: &str, p: &'a Option<PathBuf>) -> Result<&'a Path, CliError> {
        p.as_deref()
            .ok_or_else(|| CliError::Usage(format!("`{name}` is not set; pass --{name} or set it in the config")))
    }

    pub fn http_provider(&self) -> HttpProviderConfig {
        let d = HttpProviderConfig::default();
        HttpProviderConfig {
            endpoint: self.provider.endpoint.clone().unwrap_or_default(),
            model: self.provider.model.clone().unwrap_or(d.model),
            token: self.token.clone(),
            timeout: self.provider.timeout_secs.map_or(d.timeout, Duration::from_secs),
            retries: self.provider.retries.unwrap_or(d.retries),
            backoff: self.provider.backoff_ms.map_or(d.backoff, Duration::from_millis),
        }
    }
}
