//! Pipeline configuration: a TOML file plus a handful of flag overrides.
//! Secrets never live in the file; only environment-variable names do.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use xfid_core::embed::BackendConfig;
use xfid_core::orchestrator::{ProviderConfig, RequestPolicy};
use xfid_core::parity::{ParityConfig, TrainConfig};
use xfid_core::report::VerdictThresholds;

use crate::CliError;

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub corpus: CorpusSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub embedding: EmbeddingSection,
    #[serde(default)]
    pub provider: ProviderSection,
    #[serde(default)]
    pub policy: PolicySection,
    #[serde(default)]
    pub sample: SampleSection,
    #[serde(default)]
    pub parity: ParitySection,
    #[serde(default)]
    pub report: ReportSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    /// Label used in output file names.
    pub name: String,
    pub input: Option<PathBuf>,
    pub format: String,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self { name: "corpus".into(), input: None, format: "jsonl".into() }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSection {
    /// "http" or "file".
    pub backend: String,
    pub endpoint: String,
    pub map_file: Option<PathBuf>,
    pub batch_size: usize,
    pub timeout_secs: u64,
    pub auth_env: Option<String>,
    pub max_concurrent_batches: usize,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        Self {
            backend: "http".into(),
            endpoint: "http://127.0.0.1:9090/embed".into(),
            map_file: None,
            batch_size: 32,
            timeout_secs: 30,
            auth_env: None,
            max_concurrent_batches: 4,
        }
    }
}

impl EmbeddingSection {
    pub fn backend_config(&self) -> BackendConfig {
        BackendConfig {
            endpoint: self.endpoint.clone(),
            batch_size: self.batch_size.max(1),
            timeout: Duration::from_secs(self.timeout_secs),
            auth_env: self.auth_env.clone().filter(|s| !s.is_empty()),
            max_concurrent_batches: self.max_concurrent_batches.max(1),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderSection {
    pub base_url: String,
    pub path: String,
    pub model: String,
    pub auth_env: Option<String>,
    pub temperature_translate: f64,
    pub temperature_judge: f64,
}

impl Default for ProviderSection {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8080".into(),
            path: "/v1/chat/completions".into(),
            model: "default-model".into(),
            auth_env: None,
            temperature_translate: 0.3,
            temperature_judge: 0.0,
        }
    }
}

impl ProviderSection {
    pub fn provider_config(&self) -> ProviderConfig {
        let mut cfg = ProviderConfig::new(self.base_url.clone(), self.model.clone());
        cfg.path = self.path.clone();
        cfg.auth_env = self.auth_env.clone().filter(|s| !s.is_empty());
        cfg.temperature_translate = self.temperature_translate;
        cfg.temperature_judge = self.temperature_judge;
        cfg
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub max_in_flight: usize,
    pub max_retries: usize,
    pub backoff_initial_ms: u64,
    pub backoff_multiplier: f64,
    pub backoff_jitter: f64,
    pub backoff_cap_ms: u64,
    pub timeout_secs: u64,
}

impl Default for PolicySection {
    fn default() -> Self {
        Self {
            max_in_flight: 20,
            max_retries: 3,
            backoff_initial_ms: 1000,
            backoff_multiplier: 2.0,
            backoff_jitter: 0.2,
            backoff_cap_ms: 60_000,
            timeout_secs: 60,
        }
    }
}

impl PolicySection {
    pub fn request_policy(&self) -> RequestPolicy {
        RequestPolicy {
            max_in_flight: self.max_in_flight.max(1),
            max_retries: self.max_retries,
            backoff_initial: Duration::from_millis(self.backoff_initial_ms),
            backoff_multiplier: self.backoff_multiplier,
            backoff_jitter: self.backoff_jitter,
            backoff_cap: Duration::from_millis(self.backoff_cap_ms),
            timeout: Duration::from_secs(self.timeout_secs),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSection {
    pub n: usize,
    pub seed: u64,
}

impl Default for SampleSection {
    fn default() -> Self {
        Self { n: 200, seed: 42 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParitySection {
    pub k: usize,
    pub seed: u64,
    pub l2_lambda: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub threshold: f64,
    /// Evaluate each subcorpus separately instead of the pooled slice.
    pub per_subcorpus: bool,
}

impl Default for ParitySection {
    fn default() -> Self {
        Self {
            k: 10,
            seed: 42,
            l2_lambda: 1e-4,
            max_iters: 500,
            tol: 1e-6,
            threshold: 0.02,
            per_subcorpus: false,
        }
    }
}

impl ParitySection {
    pub fn parity_config(&self, seed_override: Option<u64>) -> ParityConfig {
        ParityConfig {
            k: self.k,
            seed: seed_override.unwrap_or(self.seed),
            train: TrainConfig {
                l2_lambda: self.l2_lambda,
                max_iters: self.max_iters,
                tol: self.tol,
            },
            threshold: self.threshold,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    pub cosine_threshold: f64,
    pub gap_threshold: f64,
    pub clean_threshold: f64,
}

impl Default for ReportSection {
    fn default() -> Self {
        let d = VerdictThresholds::default();
        Self { cosine_threshold: d.cosine_min, gap_threshold: d.gap_max, clean_threshold: d.clean_min }
    }
}

impl ReportSection {
    pub fn thresholds(&self) -> VerdictThresholds {
        VerdictThresholds {
            cosine_min: self.cosine_threshold,
            gap_max: self.gap_threshold,
            clean_min: self.clean_threshold,
        }
    }
}

/// Loaded config plus the raw bytes it was parsed from (for fingerprinting).
pub struct LoadedConfig {
    pub config: Config,
    pub hash: String,
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<LoadedConfig, CliError> {
    let raw = std::fs::read_to_string(path).map_err(|e| {
        CliError::Validation(format!("config: cannot read `{}`: {e}", path.display()))
    })?;
    let config: Config = toml::from_str(&raw)
        .map_err(|e| CliError::Validation(format!("config `{}`: {e}", path.display())))?;
    let mut hasher = Fnv1a::new();
    hasher.update(raw.as_bytes());
    for o in overrides {
        hasher.update(b"\x00");
        hasher.update(o.as_bytes());
    }
    Ok(LoadedConfig { config, hash: format!("{:016x}", hasher.finish()) })
}

/// FNV-1a 64-bit, used only to fingerprint configs for provenance.
struct Fnv1a(u64);

impl Fnv1a {
    fn new() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }

    fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

/// Checks a path declared by a subcommand precondition, naming the config
/// field in the error.
pub fn require_file(path: &Path, field: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{field}: file not found: {}", path.display())))
    }
}
