//! Deterministic scripted mock backend.
//!
//! The mock plays the role of every model in a run. Its reply is a pure
//! function of the script and the request (model id, question id, seed,
//! sample index, stage), so seeded runs replay exactly and measured rates
//! can be checked against closed-form probabilities.
//!
//! Per stage:
//! - solve and revise draw an answer and render it into a reasoning trace;
//! - extract scans the prompt for the last `FINAL ANSWER:` line;
//! - the judge stages parse the marked blocks the built-in templates emit
//!   and decide by canonical-form equality;
//! - critique and revise share one seeded flip draw, so the critique text
//!   flags a flaw exactly when the revision will change the answer.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{synthesize_chat_body, ChatBackend, Completion, CompletionRequest, Stage};
use crate::canonical::canonicalize_answer;
use crate::error::{Error, Result};
use crate::rng::{draw_index, rng_for, uniform01};

/// Trace used when a script entry has no `trace_template`. `{{answer}}` is
/// replaced with the drawn answer.
pub const DEFAULT_TRACE_TEMPLATE: &str = "Let me work through this step by step.\n\
Step 1: Restate what is being asked.\n\
Step 2: Carry out the needed reasoning.\n\
FINAL ANSWER: {{answer}}";

/// Scripted behavior for one (model, question) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScriptEntry {
    /// Answer text mapped to its sampling probability. Probabilities must
    /// be non-negative and sum to 1 within 1e-9.
    pub answer_distribution: BTreeMap<String, f64>,
    /// Answer returned whenever temperature is zero. Must be one of the
    /// distribution's keys.
    pub greedy_answer: String,
    /// Trace text with an `{{answer}}` placeholder; defaults to
    /// [`DEFAULT_TRACE_TEMPLATE`].
    #[serde(default)]
    pub trace_template: Option<String>,
    /// Probability that a critique of a wrong initial answer triggers a
    /// correcting revision.
    #[serde(default)]
    pub critique_flip_up: f64,
    /// Probability that a critique of a correct initial answer triggers a
    /// breaking revision.
    #[serde(default)]
    pub critique_flip_down: f64,
    /// Ground-truth answer used to decide flip direction. Required when
    /// either flip probability is positive.
    #[serde(default)]
    pub expected_answer: Option<String>,
}

impl MockScriptEntry {
    fn validate(&self, model_id: &str, question_id: &str) -> Result<()> {
        let label = format!("mock script entry [{model_id}][{question_id}]");
        if self.answer_distribution.is_empty() {
            return Err(Error::Config(format!("{label}: empty answer_distribution")));
        }
        let mut sum = 0.0;
        for (answer, p) in &self.answer_distribution {
            if !p.is_finite() || *p < 0.0 || *p > 1.0 {
                return Err(Error::Config(format!(
                    "{label}: probability {p} for answer {answer:?} is out of range"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "{label}: answer_distribution sums to {sum}, expected 1"
            )));
        }
        if !self.answer_distribution.contains_key(&self.greedy_answer) {
            return Err(Error::Config(format!(
                "{label}: greedy_answer {:?} is not in answer_distribution",
                self.greedy_answer
            )));
        }
        for (field, p) in [
            ("critique_flip_up", self.critique_flip_up),
            ("critique_flip_down", self.critique_flip_down),
        ] {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!(
                    "{label}: {field} {p} is out of range"
                )));
            }
        }
        if (self.critique_flip_up > 0.0 || self.critique_flip_down > 0.0)
            && self.expected_answer.is_none()
        {
            return Err(Error::Config(format!(
                "{label}: flip probabilities need expected_answer to be set"
            )));
        }
        if self.critique_flip_down > 0.0 {
            let expected = canonicalize_answer(self.expected_answer.as_deref().unwrap_or(""));
            let has_wrong = self
                .answer_distribution
                .keys()
                .any(|a| canonicalize_answer(a) != expected);
            if !has_wrong {
                return Err(Error::Config(format!(
                    "{label}: critique_flip_down needs at least one wrong answer in the distribution"
                )));
            }
        }
        Ok(())
    }

    fn trace_for(&self, answer: &str) -> String {
        self.trace_template
            .as_deref()
            .unwrap_or(DEFAULT_TRACE_TEMPLATE)
            .replace("{{answer}}", answer)
    }
}

/// A full mock script: entries per question, optionally split per model.
///
/// Two JSON shapes are accepted. The flat shape maps question ids straight
/// to entries and applies to every model. The nested shape puts per-model
/// maps under a top-level `"models"` key, where the model id `"*"` is a
/// wildcard fallback.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockScript {
    models: BTreeMap<String, BTreeMap<String, MockScriptEntry>>,
}

impl MockScript {
    /// Script in which every model plays the same entries.
    pub fn shared(entries: BTreeMap<String, MockScriptEntry>) -> Result<MockScript> {
        let script = MockScript {
            models: BTreeMap::from([("*".to_string(), entries)]),
        };
        script.validate()?;
        Ok(script)
    }

    /// Script with explicit per-model entry maps; `"*"` acts as fallback.
    pub fn per_model(
        models: BTreeMap<String, BTreeMap<String, MockScriptEntry>>,
    ) -> Result<MockScript> {
        let script = MockScript { models };
        script.validate()?;
        Ok(script)
    }

    pub fn from_json_str(text: &str) -> Result<MockScript> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("mock script is not valid JSON: {e}")))?;
        let script = if value.get("models").is_some_and(|m| m.is_object()) {
            serde_json::from_value::<MockScript>(value)
                .map_err(|e| Error::Config(format!("invalid mock script: {e}")))?
        } else {
            let entries: BTreeMap<String, MockScriptEntry> = serde_json::from_value(value)
                .map_err(|e| Error::Config(format!("invalid mock script: {e}")))?;
            MockScript {
                models: BTreeMap::from([("*".to_string(), entries)]),
            }
        };
        script.validate()?;
        Ok(script)
    }

    pub fn from_path(path: &Path) -> Result<MockScript> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        MockScript::from_json_str(&text)
    }

    fn validate(&self) -> Result<()> {
        for (model_id, entries) in &self.models {
            for (question_id, entry) in entries {
                entry.validate(model_id, question_id)?;
            }
        }
        Ok(())
    }

    fn entry(&self, model_id: &str, question_id: &str) -> Result<&MockScriptEntry> {
        self.models
            .get(model_id)
            .and_then(|m| m.get(question_id))
            .or_else(|| self.models.get("*").and_then(|m| m.get(question_id)))
            .ok_or_else(|| Error::MissingScriptEntry {
                model_id: model_id.to_string(),
                question_id: question_id.to_string(),
            })
    }
}

/// The scripted backend itself.
pub struct MockBackend {
    script: MockScript,
}

impl MockBackend {
    pub fn new(script: MockScript) -> MockBackend {
        MockBackend { script }
    }

    fn solve(&self, request: &CompletionRequest) -> Result<String> {
        let entry = self
            .script
            .entry(&request.model_id, &request.meta.question_id)?;
        let answer = if request.params.temperature == 0.0 {
            entry.greedy_answer.clone()
        } else {
            draw_answer(entry, request, "solve")
        };
        Ok(entry.trace_for(&answer))
    }

    /// Scans the prompt for the last `FINAL ANSWER:` line; replies with
    /// the text after the marker, or nothing when no marker is present.
    fn extract(&self, request: &CompletionRequest) -> String {
        let joined = join_contents(request);
        last_final_answer(&joined).unwrap_or_default()
    }

    fn majority_judge(&self, request: &CompletionRequest) -> Result<String> {
        let joined = join_contents(request);
        let a = line_after(&joined, "ANSWER A:")
            .ok_or_else(|| mock_prompt_error(request, "no ANSWER A: line"))?;
        let b = line_after(&joined, "ANSWER B:")
            .ok_or_else(|| mock_prompt_error(request, "no ANSWER B: line"))?;
        Ok(verdict_word(canonicalize_answer(&a) == canonicalize_answer(&b)).into())
    }

    fn agreement_judge(&self, request: &CompletionRequest) -> Result<String> {
        let joined = join_contents(request);
        let a = block(&joined, "SOLUTION A")
            .ok_or_else(|| mock_prompt_error(request, "no [[SOLUTION A]] block"))?;
        let b = block(&joined, "SOLUTION B")
            .ok_or_else(|| mock_prompt_error(request, "no [[SOLUTION B]] block"))?;
        let conclusion_a = conclusion_of(&a);
        let conclusion_b = conclusion_of(&b);
        Ok(
            verdict_word(canonicalize_answer(&conclusion_a) == canonicalize_answer(&conclusion_b))
                .into(),
        )
    }

    fn truth_judge(&self, request: &CompletionRequest) -> Result<String> {
        let joined = join_contents(request);
        let reference = block(&joined, "REFERENCE")
            .ok_or_else(|| mock_prompt_error(request, "no [[REFERENCE]] block"))?;
        let candidate = block(&joined, "CANDIDATE")
            .ok_or_else(|| mock_prompt_error(request, "no [[CANDIDATE]] block"))?;
        Ok(verdict_word(
            canonicalize_answer(&conclusion_of(&reference))
                == canonicalize_answer(&conclusion_of(&candidate)),
        )
        .into())
    }

    fn critique(&self, request: &CompletionRequest) -> Result<String> {
        let entry = self
            .script
            .entry(&request.model_id, &request.meta.question_id)?;
        let joined = join_contents(request);
        let initial = block(&joined, "SOLUTION")
            .ok_or_else(|| mock_prompt_error(request, "no [[SOLUTION]] block"))?;
        let initial_answer = conclusion_of(&initial);
        Ok(match flip_target(entry, request, &initial_answer) {
            Some(_) => "There is a flaw in the reasoning: one of the steps does not hold \
                        up under scrutiny, so the final answer must be reconsidered."
                .into(),
            None => "No errors found. The reasoning is sound and the final answer stands.".into(),
        })
    }

    fn revise(&self, request: &CompletionRequest) -> Result<String> {
        let entry = self
            .script
            .entry(&request.model_id, &request.meta.question_id)?;
        let joined = join_contents(request);
        let initial = block(&joined, "SOLUTION")
            .ok_or_else(|| mock_prompt_error(request, "no [[SOLUTION]] block"))?;
        let initial_answer = conclusion_of(&initial);
        let answer = flip_target(entry, request, &initial_answer).unwrap_or(initial_answer);
        Ok(entry.trace_for(&answer))
    }
}

impl ChatBackend for MockBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion> {
        request.validate()?;
        let content = match request.meta.stage {
            Stage::Solve => self.solve(request)?,
            Stage::Extract => self.extract(request),
            Stage::MajorityJudge => self.majority_judge(request)?,
            Stage::AgreementJudge => self.agreement_judge(request)?,
            Stage::TruthJudge => self.truth_judge(request)?,
            Stage::Critique => self.critique(request)?,
            Stage::Revise => self.revise(request)?,
        };
        Ok(Completion {
            raw_body: synthesize_chat_body(&content, &request.model_id),
            content,
            latency_ms: 0,
            cached: false,
        })
    }

    fn name(&self) -> &'static str {
        "mock"
    }
}

/// Seeded answer draw for solve-like stages, inverse CDF over the answers
/// in sorted order.
fn draw_answer(entry: &MockScriptEntry, request: &CompletionRequest, label: &str) -> String {
    let answers: Vec<&String> = entry.answer_distribution.keys().collect();
    let weights: Vec<f64> = entry.answer_distribution.values().copied().collect();
    let mut rng = rng_for(
        request.params.seed.unwrap_or(0),
        &[
            &request.model_id,
            &request.meta.question_id,
            label,
            &request.meta.sample_index.to_string(),
        ],
    );
    answers[draw_index(&mut rng, &weights)].clone()
}

/// Decides whether a reflection round flips the answer, and to what.
///
/// Critique and revise calls for the same iteration carry the same seed and
/// sample index, so both see the same decision. A wrong initial answer
/// flips to the scripted expected answer with probability
/// `critique_flip_up`; a correct one flips to a seeded draw over the wrong
/// answers with probability `critique_flip_down`.
fn flip_target(
    entry: &MockScriptEntry,
    request: &CompletionRequest,
    initial_answer: &str,
) -> Option<String> {
    let expected = entry.expected_answer.as_deref()?;
    let seed = request.params.seed.unwrap_or(0);
    let iteration = request.meta.sample_index.to_string();
    let correct = canonicalize_answer(initial_answer) == canonicalize_answer(expected);

    let mut flip_rng = rng_for(
        seed,
        &[
            &request.model_id,
            &request.meta.question_id,
            "reflect_flip",
            &iteration,
        ],
    );
    let u = uniform01(&mut flip_rng);

    if correct {
        if u < entry.critique_flip_down {
            let expected_canon = canonicalize_answer(expected);
            let wrong: Vec<(&String, f64)> = entry
                .answer_distribution
                .iter()
                .filter(|(a, _)| canonicalize_answer(a) != expected_canon)
                .map(|(a, p)| (a, *p))
                .collect();
            let total: f64 = wrong.iter().map(|(_, p)| p).sum();
            let weights: Vec<f64> = if total > 0.0 {
                wrong.iter().map(|(_, p)| p / total).collect()
            } else {
                vec![1.0 / wrong.len() as f64; wrong.len()]
            };
            let mut target_rng = rng_for(
                seed,
                &[
                    &request.model_id,
                    &request.meta.question_id,
                    "flip_target",
                    &iteration,
                ],
            );
            Some(wrong[draw_index(&mut target_rng, &weights)].0.clone())
        } else {
            None
        }
    } else if u < entry.critique_flip_up {
        Some(expected.to_string())
    } else {
        None
    }
}

fn join_contents(request: &CompletionRequest) -> String {
    let mut joined = String::new();
    for message in &request.messages {
        joined.push_str(&message.content);
        joined.push('\n');
    }
    joined
}

/// The text after the last `FINAL ANSWER:` marker, up to end of line.
fn last_final_answer(text: &str) -> Option<String> {
    let marker = "FINAL ANSWER:";
    let start = text.rfind(marker)? + marker.len();
    let rest = &text[start..];
    let line = rest.split('\n').next().unwrap_or("");
    Some(line.trim().to_string())
}

/// A solution's conclusion: its last `FINAL ANSWER:` line if it has one,
/// otherwise the whole text trimmed.
fn conclusion_of(text: &str) -> String {
    last_final_answer(text).unwrap_or_else(|| text.trim().to_string())
}

/// Content between `[[NAME]]` and `[[/NAME]]` markers.
fn block(text: &str, name: &str) -> Option<String> {
    let open = format!("[[{name}]]");
    let close = format!("[[/{name}]]");
    let start = text.find(&open)? + open.len();
    let end = text[start..].find(&close)? + start;
    Some(text[start..end].trim().to_string())
}

/// First line starting with the marker, content after it trimmed.
fn line_after(text: &str, marker: &str) -> Option<String> {
    for line in text.lines() {
        if let Some(rest) = line.trim_start().strip_prefix(marker) {
            return Some(rest.trim().to_string());
        }
    }
    None
}

fn verdict_word(accept: bool) -> &'static str {
    if accept {
        "ACCEPT"
    } else {
        "REJECT"
    }
}

fn mock_prompt_error(request: &CompletionRequest, what: &str) -> Error {
    Error::MalformedResponse(format!(
        "mock {} prompt for question {:?}: {what}",
        request.meta.stage.as_str(),
        request.meta.question_id
    ))
}
