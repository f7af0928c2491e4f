//! Reasoning strategies.
//!
//! Each strategy takes a [`RunContext`] and one question and produces a
//! [`StrategyOutcome`]. Shared plumbing lives here: sampling a reasoning
//! trace, extracting its final answer with the low-temperature extractor,
//! and checking a candidate against ground truth.

pub mod dual_model;
pub mod self_consistency;
pub mod self_reflection;

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::backend::{ChatBackend, CompletionRequest, RequestMeta, Stage};
use crate::config::Config;
use crate::error::Result;
use crate::prompt::TemplateSet;
use crate::types::{Question, ReasoningSample, SamplingParams, Strategy, StrategyOutcome};
use crate::verification::{candidate_from, verify_against_ground_truth, TruthCheck};

/// Everything a strategy needs to process questions.
pub struct RunContext {
    pub backend: Arc<dyn ChatBackend>,
    pub templates: TemplateSet,
    pub config: Config,
    /// Run seed; per-sample seeds are `seed + sample_index`.
    pub seed: u64,
}

impl RunContext {
    pub fn new(backend: Arc<dyn ChatBackend>, config: Config, seed: u64) -> Result<RunContext> {
        let templates = match &config.templates.dir {
            Some(dir) => TemplateSet::with_overrides(std::path::Path::new(dir))?,
            None => TemplateSet::builtin(),
        };
        Ok(RunContext {
            backend,
            templates,
            config,
            seed,
        })
    }

    /// Runs one solve completion and wraps it as a sample.
    pub(crate) fn solve_sample(
        &self,
        question: &Question,
        model_id: &str,
        base_params: SamplingParams,
        sample_index: u32,
    ) -> Result<ReasoningSample> {
        let messages = self
            .templates
            .render("solve_cot", question, &BTreeMap::new())?;
        let params = base_params.with_seed(self.seed + sample_index as u64);
        let completion = self.backend.complete(&CompletionRequest {
            model_id: model_id.to_string(),
            messages,
            params,
            meta: RequestMeta {
                question_id: question.id.clone(),
                sample_index,
                stage: Stage::Solve,
            },
        })?;
        Ok(ReasoningSample {
            question_id: question.id.clone(),
            sample_index,
            trace: completion.content,
            final_answer: None,
            params,
            model_id: model_id.to_string(),
            latency_ms: completion.latency_ms,
            cached: completion.cached,
        })
    }

    /// Asks the extractor model for the sample's final answer and stores
    /// it on the sample. Returns the extracted text (possibly empty).
    pub(crate) fn extract_into(
        &self,
        question: &Question,
        sample: &mut ReasoningSample,
    ) -> Result<String> {
        let sc = &self.config.self_consistency;
        let extra = BTreeMap::from([("trace", sample.trace.as_str())]);
        let messages = self.templates.render("extract_answer", question, &extra)?;
        let params = SamplingParams::stochastic(sc.extract_temperature, 1.0, 256)
            .with_seed(sample.params.seed.unwrap_or(self.seed));
        let completion = self.backend.complete(&CompletionRequest {
            model_id: sc.extractor_model.clone(),
            messages,
            params,
            meta: RequestMeta {
                question_id: question.id.clone(),
                sample_index: sample.sample_index,
                stage: Stage::Extract,
            },
        })?;
        let answer = completion.content.trim().to_string();
        sample.final_answer = Some(answer.clone());
        Ok(answer)
    }

    /// Verifies a candidate answer (or its trace, when no usable answer
    /// exists) against the question's expected output.
    pub(crate) fn truth_check(
        &self,
        question: &Question,
        answer: Option<&str>,
        trace: &str,
        stage: &str,
    ) -> Result<TruthCheck> {
        let v = &self.config.verification;
        let (candidate, form) = candidate_from(answer, trace);
        verify_against_ground_truth(
            self.backend.as_ref(),
            &self.templates,
            &v.truth_judge_model,
            SamplingParams {
                temperature: v.temperature,
                top_p: 1.0,
                max_tokens: v.max_tokens,
                seed: Some(self.seed),
            },
            question,
            &candidate,
            form,
            stage,
        )
    }
}

/// Dispatches one question to the named strategy.
pub fn run_question(
    ctx: &RunContext,
    strategy: Strategy,
    question: &Question,
) -> Result<StrategyOutcome> {
    match strategy {
        Strategy::Greedy => self_consistency::run_greedy_baseline(ctx, question),
        Strategy::SelfConsistency => self_consistency::run_self_consistency(ctx, question),
        Strategy::DualModel => dual_model::run_dual_model(ctx, question),
        Strategy::SelfReflection => self_reflection::run_self_reflection(ctx, question),
    }
}
