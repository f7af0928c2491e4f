//! Run configuration.
//!
//! Loaded from TOML; every field has a default so an empty file (or no
//! file) is a valid configuration. CLI flags override the corresponding
//! fields after loading. Unknown keys are rejected so typos fail loudly
//! instead of silently falling back to defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub run: RunSection,
    pub backend: BackendSection,
    pub templates: TemplatesSection,
    pub self_consistency: SelfConsistencySection,
    pub dual_model: DualModelSection,
    pub self_reflection: SelfReflectionSection,
    pub verification: VerificationSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Worker threads processing questions concurrently.
    pub parallelism: u32,
    /// Default run seed; the --seed flag overrides it.
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            parallelism: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    /// Endpoint root for live runs, e.g. "https://api.example.com/v1".
    pub base_url: String,
    pub timeout_secs: u64,
    /// Backoff delays; the number of entries is the number of retries.
    pub retry_delays_ms: Vec<u64>,
    /// Cache live responses under {out}/cache and replay them on rerun.
    pub cache: bool,
}

impl Default for BackendSection {
    fn default() -> Self {
        BackendSection {
            base_url: "http://localhost:8000/v1".into(),
            timeout_secs: 120,
            retry_delays_ms: vec![1000, 2000, 4000],
            cache: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct TemplatesSection {
    /// Directory of template overrides; built-ins are used when unset.
    pub dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelfConsistencySection {
    /// Number of stochastic samples per question.
    pub n: u32,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub reasoner_model: String,
    pub extractor_model: String,
    pub judge_model: String,
    pub extract_temperature: f64,
    pub judge_temperature: f64,
    /// Overrides run.parallelism for this strategy when set.
    pub parallelism: Option<u32>,
}

impl Default for SelfConsistencySection {
    fn default() -> Self {
        SelfConsistencySection {
            n: 6,
            temperature: 0.8,
            top_p: 0.9,
            max_tokens: 1024,
            reasoner_model: "reasoner".into(),
            extractor_model: "extractor".into(),
            judge_model: "judge".into(),
            extract_temperature: 0.1,
            judge_temperature: 0.1,
            parallelism: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualModelSection {
    pub model_a: String,
    pub model_b: String,
    pub agreement_judge_model: String,
    /// Whose answer becomes chosen_answer when the gate accepts:
    /// "a", "b", or "merged" (canonical form of the agreed answer).
    pub answer_source: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub judge_temperature: f64,
}

impl Default for DualModelSection {
    fn default() -> Self {
        DualModelSection {
            model_a: "model-a".into(),
            model_b: "model-b".into(),
            agreement_judge_model: "judge".into(),
            answer_source: "a".into(),
            temperature: 0.8,
            top_p: 0.9,
            max_tokens: 1024,
            judge_temperature: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelfReflectionSection {
    pub model: String,
    /// Critique-revise rounds per question.
    pub iterations: u32,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub critique_temperature: f64,
    pub critique_top_p: f64,
    pub revise_temperature: f64,
    pub revise_top_p: f64,
}

impl Default for SelfReflectionSection {
    fn default() -> Self {
        SelfReflectionSection {
            model: "reasoner".into(),
            iterations: 1,
            temperature: 0.8,
            top_p: 0.9,
            max_tokens: 1024,
            critique_temperature: 0.8,
            critique_top_p: 0.9,
            revise_temperature: 0.8,
            revise_top_p: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerificationSection {
    pub truth_judge_model: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for VerificationSection {
    fn default() -> Self {
        VerificationSection {
            truth_judge_model: "judge".into(),
            temperature: 0.0,
            max_tokens: 64,
        }
    }
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: Config =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.parallelism == 0 {
            return Err(Error::Config("run.parallelism must be at least 1".into()));
        }
        if self.self_consistency.n == 0 {
            return Err(Error::Config(
                "self_consistency.n must be at least 1".into(),
            ));
        }
        if self.self_reflection.iterations == 0 {
            return Err(Error::Config(
                "self_reflection.iterations must be at least 1".into(),
            ));
        }
        match self.dual_model.answer_source.as_str() {
            "a" | "b" | "merged" => {}
            other => {
                return Err(Error::Config(format!(
                    "dual_model.answer_source must be \"a\", \"b\", or \"merged\", got {other:?}"
                )))
            }
        }
        for (label, temperature, top_p, max_tokens) in [
            (
                "self_consistency",
                self.self_consistency.temperature,
                self.self_consistency.top_p,
                self.self_consistency.max_tokens,
            ),
            (
                "dual_model",
                self.dual_model.temperature,
                self.dual_model.top_p,
                self.dual_model.max_tokens,
            ),
            (
                "self_reflection",
                self.self_reflection.temperature,
                self.self_reflection.top_p,
                self.self_reflection.max_tokens,
            ),
        ] {
            crate::types::SamplingParams::stochastic(temperature, top_p, max_tokens)
                .validate()
                .map_err(|e| Error::Config(format!("[{label}]: {e}")))?;
        }
        Ok(())
    }

    /// SHA-256 hex digest of the effective configuration, recorded in run
    /// manifests so artifacts pin the settings that produced them.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialization cannot fail");
        hex::encode(Sha256::digest(&json))
    }
}
