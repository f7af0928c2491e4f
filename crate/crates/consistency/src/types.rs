//! Domain types shared by every pipeline: questions, chat messages,
//! sampling parameters, samples, verdicts, and per-question outcomes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::verification::TruthCheck;

/// Role of a chat message. Prompts only ever send system and user turns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
        }
    }
}

/// One chat message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }
}

/// One benchmark question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    /// Stable identifier, unique within a dataset.
    pub id: String,
    /// The problem statement shown to the model.
    pub input: String,
    /// Optional task instruction accompanying the input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<String>,
    /// Ground-truth answer used by the truth judge.
    pub expected_output: String,
    /// Optional provenance label carried through from the dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_source: Option<String>,
}

impl Question {
    /// Checks the invariants every loaded question must satisfy.
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Dataset("question id is empty".into()));
        }
        if self.input.trim().is_empty() {
            return Err(Error::Dataset(format!(
                "question {}: input is empty",
                self.id
            )));
        }
        if self.expected_output.trim().is_empty() {
            return Err(Error::Dataset(format!(
                "question {}: expected_output is empty",
                self.id
            )));
        }
        Ok(())
    }
}

/// Decoding parameters for one completion request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    /// Per-request seed; None lets the backend choose.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SamplingParams {
    /// Deterministic decoding: temperature zero, full nucleus.
    pub fn greedy(max_tokens: u32) -> Self {
        SamplingParams {
            temperature: 0.0,
            top_p: 1.0,
            max_tokens,
            seed: None,
        }
    }

    /// Stochastic decoding with the given temperature and nucleus.
    pub fn stochastic(temperature: f64, top_p: f64, max_tokens: u32) -> Self {
        SamplingParams {
            temperature,
            top_p,
            max_tokens,
            seed: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(Error::Config(format!(
                "temperature must be finite and >= 0, got {}",
                self.temperature
            )));
        }
        if !self.top_p.is_finite() || self.top_p <= 0.0 || self.top_p > 1.0 {
            return Err(Error::Config(format!(
                "top_p must be in (0, 1], got {}",
                self.top_p
            )));
        }
        if self.max_tokens == 0 {
            return Err(Error::Config("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

/// One sampled reasoning trace for a question, plus the answer extracted
/// from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningSample {
    pub question_id: String,
    /// Position of this sample within its stage, unique per
    /// (question, stage).
    pub sample_index: u32,
    /// Full chain-of-thought text returned by the reasoner.
    pub trace: String,
    /// Final answer pulled out by the low-temperature extractor; None until
    /// extraction runs, Some("") when the extractor returned nothing usable.
    pub final_answer: Option<String>,
    pub params: SamplingParams,
    pub model_id: String,
    pub latency_ms: u64,
    /// True when the completion was served from the response cache.
    pub cached: bool,
}

/// Ternary result of parsing a judge reply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VerdictValue {
    Accept,
    Reject,
    /// The judge reply contained no usable verdict even after a retry.
    /// Metrics fold this into the reject side, but raw records keep it
    /// distinct.
    Unparseable,
}

impl VerdictValue {
    pub fn as_str(self) -> &'static str {
        match self {
            VerdictValue::Accept => "ACCEPT",
            VerdictValue::Reject => "REJECT",
            VerdictValue::Unparseable => "UNPARSEABLE",
        }
    }

    /// Collapses the ternary value to the binary used by metrics.
    pub fn counts_as_accept(self) -> bool {
        self == VerdictValue::Accept
    }
}

/// A judge decision together with the raw reply it was parsed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub value: VerdictValue,
    /// The judge's raw reply text (from the final attempt).
    pub judge_raw: String,
    pub judge_model_id: String,
}

/// Which reasoning strategy produced an outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Greedy,
    SelfConsistency,
    DualModel,
    SelfReflection,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Greedy => "greedy",
            Strategy::SelfConsistency => "self_consistency",
            Strategy::DualModel => "dual_model",
            Strategy::SelfReflection => "self_reflection",
        }
    }

    /// Parses a strategy name; hyphens and underscores are interchangeable,
    /// so both the CLI form `self-consistency` and the serialized form
    /// `self_consistency` are accepted.
    pub fn parse(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "greedy" => Ok(Strategy::Greedy),
            "self_consistency" => Ok(Strategy::SelfConsistency),
            "dual_model" => Ok(Strategy::DualModel),
            "self_reflection" => Ok(Strategy::SelfReflection),
            other => Err(Error::Config(format!(
                "unknown strategy {other:?}; expected greedy, self-consistency, dual-model, or self-reflection"
            ))),
        }
    }
}

/// One cluster of equivalent answers formed during majority voting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteCluster {
    /// Canonical form shared by the cluster, taken from its lowest-index
    /// member.
    pub representative: String,
    /// Sample indices of the members, ascending.
    pub members: Vec<u32>,
}

/// Result of majority voting over extracted answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteResult {
    /// Representative answer of the winning cluster.
    pub winner: String,
    /// All clusters, ordered by their lowest member index.
    pub clusters: Vec<VoteCluster>,
    /// True when two or more clusters tied for the largest size and the
    /// lowest-sample-index rule picked the winner.
    pub tie_broken: bool,
}

/// Everything a strategy produced for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyOutcome {
    pub question_id: String,
    pub strategy: Strategy,
    /// The answer the strategy stands behind; None when it abstained
    /// (e.g. the agreement gate rejected).
    pub chosen_answer: Option<String>,
    /// Raw samples in generation order.
    pub samples: Vec<ReasoningSample>,
    /// Vote detail, present for self-consistency runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vote: Option<VoteResult>,
    /// Agreement-gate verdict, present for dual-model runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate_verdict: Option<Verdict>,
    /// Ground-truth checks keyed by stage label such as "final",
    /// "pre_reflection", "post_reflection", "model_a", "model_b". Each
    /// check carries its verdict plus which candidate form was judged.
    pub truth_verdicts: BTreeMap<String, TruthCheck>,
}

/// Stage labels used as keys in [`StrategyOutcome::truth_verdicts`].
pub mod stages {
    pub const FINAL: &str = "final";
    pub const PRE_REFLECTION: &str = "pre_reflection";
    pub const POST_REFLECTION: &str = "post_reflection";
    pub const MODEL_A: &str = "model_a";
    pub const MODEL_B: &str = "model_b";
}
