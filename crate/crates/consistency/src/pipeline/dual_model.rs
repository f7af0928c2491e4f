//! Dual-model cross-verification: two different models solve the same
//! prompt independently, a judge decides whether they reached the same
//! conclusion, and only agreement is accepted.

use std::collections::BTreeMap;

use crate::backend::{RequestMeta, Stage};
use crate::canonical::canonicalize_answer;
use crate::error::Result;
use crate::pipeline::RunContext;
use crate::types::{
    stages, Question, ReasoningSample, SamplingParams, Strategy, StrategyOutcome, Verdict,
    VerdictValue,
};
use crate::verification::adjudicate;

/// Both models' solutions to one question.
#[derive(Debug, Clone)]
pub struct PairSolution {
    pub solution_a: ReasoningSample,
    pub solution_b: ReasoningSample,
}

/// Solves the question with both configured models. The rendered solve
/// prompt is identical for the two; only the model and seed differ.
pub fn solve_pair(ctx: &RunContext, question: &Question) -> Result<PairSolution> {
    let dm = &ctx.config.dual_model;
    let params = SamplingParams::stochastic(dm.temperature, dm.top_p, dm.max_tokens);
    let solution_a = ctx
        .solve_sample(question, &dm.model_a, params, 0)
        .map_err(|e| e.at_stage("solve_a"))?;
    let solution_b = ctx
        .solve_sample(question, &dm.model_b, params, 1)
        .map_err(|e| e.at_stage("solve_b"))?;
    Ok(PairSolution {
        solution_a,
        solution_b,
    })
}

/// Asks the agreement judge whether the two solutions arrive at the same
/// conclusion.
pub fn verify_agreement(
    ctx: &RunContext,
    question: &Question,
    pair: &PairSolution,
) -> Result<Verdict> {
    let dm = &ctx.config.dual_model;
    let extra = BTreeMap::from([
        ("solution_a", pair.solution_a.trace.as_str()),
        ("solution_b", pair.solution_b.trace.as_str()),
    ]);
    let messages = ctx.templates.render("agreement_judge", question, &extra)?;
    adjudicate(
        ctx.backend.as_ref(),
        &dm.agreement_judge_model,
        SamplingParams::stochastic(dm.judge_temperature, 1.0, 64).with_seed(ctx.seed),
        messages,
        RequestMeta {
            question_id: question.id.clone(),
            sample_index: 0,
            stage: Stage::AgreementJudge,
        },
    )
    .map_err(|e| e.at_stage("agreement_judge"))
}

/// Full dual-model pipeline: solve with both models, extract both answers,
/// gate on agreement, and verify each model against ground truth.
///
/// On ACCEPT, `chosen_answer` comes from the configured answer source and
/// the source model's truth check is mirrored under the "final" stage; on
/// REJECT (or an unparseable gate verdict) the strategy abstains.
pub fn run_dual_model(ctx: &RunContext, question: &Question) -> Result<StrategyOutcome> {
    let mut pair = solve_pair(ctx, question)?;

    for sample in [&mut pair.solution_a, &mut pair.solution_b] {
        if let Err(e) = ctx.extract_into(question, sample) {
            log::warn!(
                "question {}: extraction failed for {}: {e}",
                question.id,
                sample.model_id
            );
            sample.final_answer = None;
        }
    }

    let gate = verify_agreement(ctx, question, &pair)?;

    let check_a = ctx
        .truth_check(
            question,
            pair.solution_a.final_answer.as_deref(),
            &pair.solution_a.trace,
            stages::MODEL_A,
        )
        .map_err(|e| e.at_stage("truth_judge"))?;
    let check_b = ctx
        .truth_check(
            question,
            pair.solution_b.final_answer.as_deref(),
            &pair.solution_b.trace,
            stages::MODEL_B,
        )
        .map_err(|e| e.at_stage("truth_judge"))?;

    let mut truth_verdicts = BTreeMap::from([
        (stages::MODEL_A.to_string(), check_a.clone()),
        (stages::MODEL_B.to_string(), check_b.clone()),
    ]);

    let accepted = gate.value == VerdictValue::Accept;
    let chosen_answer = if accepted {
        let dm = &ctx.config.dual_model;
        let answer_a = pair.solution_a.final_answer.as_deref().unwrap_or("");
        let answer_b = pair.solution_b.final_answer.as_deref().unwrap_or("");
        let (source_check, answer) = match dm.answer_source.as_str() {
            "b" => (&check_b, answer_b.to_string()),
            "merged" => {
                let agreed = if answer_a.trim().is_empty() {
                    answer_b
                } else {
                    answer_a
                };
                (&check_a, canonicalize_answer(agreed))
            }
            _ => (&check_a, answer_a.to_string()),
        };
        // The chosen answer is the source model's, so its truth check
        // doubles as the final verdict; no extra judge call is needed.
        let mut final_check = source_check.clone();
        final_check.stage = stages::FINAL.to_string();
        truth_verdicts.insert(stages::FINAL.to_string(), final_check);
        if answer.trim().is_empty() {
            None
        } else {
            Some(answer)
        }
    } else {
        None
    };

    Ok(StrategyOutcome {
        question_id: question.id.clone(),
        strategy: Strategy::DualModel,
        chosen_answer,
        samples: vec![pair.solution_a, pair.solution_b],
        vote: None,
        gate_verdict: Some(gate),
        truth_verdicts,
    })
}
