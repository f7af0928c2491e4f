//! Self-reflection: generate an initial solution, have the same model
//! critique it, then revise in light of the critique. Ground truth is
//! checked before and after so the net effect of reflection is measurable.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::backend::{CompletionRequest, RequestMeta, Stage};
use crate::error::Result;
use crate::pipeline::RunContext;
use crate::types::{stages, Question, ReasoningSample, SamplingParams, Strategy, StrategyOutcome};
use crate::verification::TruthCheck;

/// Full history of one question's reflection loop.
#[derive(Debug, Clone, Serialize)]
pub struct ReflectionRecord {
    pub initial: ReasoningSample,
    /// Critique text per iteration, in order.
    pub critiques: Vec<String>,
    /// Revised sample per iteration, in order.
    pub revisions: Vec<ReasoningSample>,
    pub pre_check: TruthCheck,
    pub post_check: TruthCheck,
}

/// Generates the initial stochastic solution (sample index 0).
pub fn generate_initial(ctx: &RunContext, question: &Question) -> Result<ReasoningSample> {
    let sr = &ctx.config.self_reflection;
    let params = SamplingParams::stochastic(sr.temperature, sr.top_p, sr.max_tokens);
    ctx.solve_sample(question, &sr.model, params, 0)
        .map_err(|e| e.at_stage("solve"))
}

/// Asks the model to critique a solution. `iteration` numbers the
/// reflection round, starting at 1.
pub fn critique(
    ctx: &RunContext,
    question: &Question,
    solution: &ReasoningSample,
    iteration: u32,
) -> Result<String> {
    let sr = &ctx.config.self_reflection;
    let extra = BTreeMap::from([("initial", solution.trace.as_str())]);
    let messages = ctx.templates.render("reflect_critique", question, &extra)?;
    let params =
        SamplingParams::stochastic(sr.critique_temperature, sr.critique_top_p, sr.max_tokens)
            .with_seed(ctx.seed + iteration as u64);
    let completion = ctx
        .backend
        .complete(&CompletionRequest {
            model_id: sr.model.clone(),
            messages,
            params,
            meta: RequestMeta {
                question_id: question.id.clone(),
                sample_index: iteration,
                stage: Stage::Critique,
            },
        })
        .map_err(|e| e.at_stage("critique"))?;
    if completion.content.trim().is_empty() {
        log::warn!(
            "question {}: empty critique at iteration {iteration}",
            question.id
        );
    }
    Ok(completion.content)
}

/// Produces a revised solution from the prior solution plus its critique.
/// The rendered prompt embeds the critique verbatim.
pub fn revise(
    ctx: &RunContext,
    question: &Question,
    solution: &ReasoningSample,
    critique_text: &str,
    iteration: u32,
) -> Result<ReasoningSample> {
    let sr = &ctx.config.self_reflection;
    let extra = BTreeMap::from([
        ("initial", solution.trace.as_str()),
        ("critique", critique_text),
    ]);
    let messages = ctx.templates.render("reflect_revise", question, &extra)?;
    let params = SamplingParams::stochastic(sr.revise_temperature, sr.revise_top_p, sr.max_tokens)
        .with_seed(ctx.seed + iteration as u64);
    let completion = ctx
        .backend
        .complete(&CompletionRequest {
            model_id: sr.model.clone(),
            messages,
            params,
            meta: RequestMeta {
                question_id: question.id.clone(),
                sample_index: iteration,
                stage: Stage::Revise,
            },
        })
        .map_err(|e| e.at_stage("revise"))?;
    Ok(ReasoningSample {
        question_id: question.id.clone(),
        sample_index: iteration,
        trace: completion.content,
        final_answer: None,
        params,
        model_id: sr.model.clone(),
        latency_ms: completion.latency_ms,
        cached: completion.cached,
    })
}

/// Runs the reflection loop and returns both the outcome and the full
/// record of intermediate artifacts.
pub fn run_self_reflection_detailed(
    ctx: &RunContext,
    question: &Question,
) -> Result<(StrategyOutcome, ReflectionRecord)> {
    let sr = &ctx.config.self_reflection;

    let mut initial = generate_initial(ctx, question)?;
    ctx.extract_into(question, &mut initial)
        .map_err(|e| e.at_stage("extract"))?;
    let pre_check = ctx
        .truth_check(
            question,
            initial.final_answer.as_deref(),
            &initial.trace,
            stages::PRE_REFLECTION,
        )
        .map_err(|e| e.at_stage("truth_judge"))?;

    let mut critiques = Vec::new();
    let mut revisions: Vec<ReasoningSample> = Vec::new();
    for iteration in 1..=sr.iterations {
        let current = revisions.last().unwrap_or(&initial);
        let critique_text = critique(ctx, question, current, iteration)?;
        let mut revised = revise(ctx, question, current, &critique_text, iteration)?;
        ctx.extract_into(question, &mut revised)
            .map_err(|e| e.at_stage("extract"))?;
        critiques.push(critique_text);
        revisions.push(revised);
    }

    let last = revisions.last().unwrap_or(&initial);
    let post_check = ctx
        .truth_check(
            question,
            last.final_answer.as_deref(),
            &last.trace,
            stages::POST_REFLECTION,
        )
        .map_err(|e| e.at_stage("truth_judge"))?;

    let chosen_answer = last.final_answer.clone().filter(|a| !a.trim().is_empty());
    let mut samples = vec![initial.clone()];
    samples.extend(revisions.iter().cloned());

    let outcome = StrategyOutcome {
        question_id: question.id.clone(),
        strategy: Strategy::SelfReflection,
        chosen_answer,
        samples,
        vote: None,
        gate_verdict: None,
        truth_verdicts: BTreeMap::from([
            (stages::PRE_REFLECTION.to_string(), pre_check.clone()),
            (stages::POST_REFLECTION.to_string(), post_check.clone()),
        ]),
    };
    let record = ReflectionRecord {
        initial,
        critiques,
        revisions,
        pre_check,
        post_check,
    };
    Ok((outcome, record))
}

/// Full self-reflection pipeline for one question.
pub fn run_self_reflection(ctx: &RunContext, question: &Question) -> Result<StrategyOutcome> {
    run_self_reflection_detailed(ctx, question).map(|(outcome, _)| outcome)
}
