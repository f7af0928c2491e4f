//! Self-consistency: sample several stochastic reasoning traces, extract
//! each trace's final answer, and take a majority vote where an LLM judge
//! decides which answers count as the same.

use std::collections::BTreeMap;

use crate::canonical::canonicalize_answer;
use crate::error::{Error, Result};
use crate::pipeline::RunContext;
use crate::types::VerdictValue;
use crate::types::{
    stages, Question, ReasoningSample, SamplingParams, Strategy, StrategyOutcome, VoteCluster,
    VoteResult,
};
use crate::verification::{EquivalenceJudge, LlmEquivalenceJudge};

/// Samples `n` independent reasoning traces at the configured stochastic
/// decoding settings. Sample `i` uses seed `run_seed + i`.
pub fn sample_traces(
    ctx: &RunContext,
    question: &Question,
    n: u32,
    params: SamplingParams,
) -> Result<Vec<ReasoningSample>> {
    let model = &ctx.config.self_consistency.reasoner_model;
    (0..n)
        .map(|i| {
            ctx.solve_sample(question, model, params, i)
                .map_err(|e| e.at_stage("solve"))
        })
        .collect()
}

/// Extracts the final answer from one sample via the extractor model and
/// records it on the sample.
pub fn extract_final_answer(
    ctx: &RunContext,
    question: &Question,
    sample: &mut ReasoningSample,
) -> Result<String> {
    ctx.extract_into(question, sample)
        .map_err(|e| e.at_stage("extract"))
}

/// Majority vote over (sample_index, answer) pairs.
///
/// Answers are first grouped by canonical form; the judge is then asked
/// about each pair of cluster representatives (O(k^2) calls for k
/// clusters) and ACCEPT verdicts merge clusters. REJECT and UNPARSEABLE
/// both leave clusters apart. The winner is the largest cluster; ties go
/// to the cluster containing the lowest sample index, with `tie_broken`
/// set when that rule had to decide.
pub fn majority_vote(
    answers: &[(u32, String)],
    judge: &dyn EquivalenceJudge,
) -> Result<VoteResult> {
    if answers.is_empty() {
        return Err(Error::Stage {
            stage: "majority_vote".into(),
            message: "no answers to vote over".into(),
        });
    }

    // Tier one: exact grouping by canonical form, in sample order.
    struct Cluster {
        representative: String,
        members: Vec<u32>,
    }
    let mut clusters: Vec<Cluster> = Vec::new();
    let mut by_canonical: BTreeMap<String, usize> = BTreeMap::new();
    for (index, answer) in answers {
        let canonical = canonicalize_answer(answer);
        match by_canonical.get(&canonical) {
            Some(&at) => clusters[at].members.push(*index),
            None => {
                by_canonical.insert(canonical.clone(), clusters.len());
                clusters.push(Cluster {
                    representative: canonical,
                    members: vec![*index],
                });
            }
        }
    }

    // Tier two: judge-driven merges between representatives, union-find
    // over cluster slots. Pairs already joined transitively are skipped.
    let mut parent: Vec<usize> = (0..clusters.len()).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..clusters.len() {
        for j in (i + 1)..clusters.len() {
            let (ri, rj) = (root(&mut parent, i), root(&mut parent, j));
            if ri == rj {
                continue;
            }
            let verdict =
                judge.equivalent(&clusters[i].representative, &clusters[j].representative)?;
            if verdict == VerdictValue::Accept {
                let (lo, hi) = (ri.min(rj), ri.max(rj));
                parent[hi] = lo;
            }
        }
    }

    // Collapse merged clusters; the earliest constituent keeps the
    // representative.
    let mut merged: BTreeMap<usize, VoteCluster> = BTreeMap::new();
    for (i, cluster) in clusters.iter().enumerate() {
        let r = root(&mut parent, i);
        merged
            .entry(r)
            .and_modify(|c| c.members.extend(&cluster.members))
            .or_insert_with(|| VoteCluster {
                representative: cluster.representative.clone(),
                members: cluster.members.clone(),
            });
    }
    let mut final_clusters: Vec<VoteCluster> = merged.into_values().collect();
    for cluster in &mut final_clusters {
        cluster.members.sort_unstable();
    }
    final_clusters.sort_by_key(|c| c.members[0]);

    let top_size = final_clusters
        .iter()
        .map(|c| c.members.len())
        .max()
        .unwrap();
    let tied = final_clusters
        .iter()
        .filter(|c| c.members.len() == top_size)
        .count();
    let winner_cluster = final_clusters
        .iter()
        .filter(|c| c.members.len() == top_size)
        .min_by_key(|c| c.members[0])
        .unwrap();

    Ok(VoteResult {
        winner: winner_cluster.representative.clone(),
        clusters: final_clusters.clone(),
        tie_broken: tied > 1,
    })
}

/// Full self-consistency pipeline for one question: sample, extract,
/// vote, verify.
pub fn run_self_consistency(ctx: &RunContext, question: &Question) -> Result<StrategyOutcome> {
    let sc = &ctx.config.self_consistency;
    let params = SamplingParams::stochastic(sc.temperature, sc.top_p, sc.max_tokens);
    let mut samples = sample_traces(ctx, question, sc.n, params)?;

    for sample in &mut samples {
        if let Err(e) = extract_final_answer(ctx, question, sample) {
            // A failed extraction drops this sample from the vote but is
            // not fatal to the question.
            log::warn!(
                "question {}: extraction failed for sample {}: {e}",
                question.id,
                sample.sample_index
            );
            sample.final_answer = None;
        }
    }

    let answers: Vec<(u32, String)> = samples
        .iter()
        .filter_map(|s| {
            s.final_answer
                .as_ref()
                .filter(|a| !a.trim().is_empty())
                .map(|a| (s.sample_index, a.clone()))
        })
        .collect();
    if answers.is_empty() {
        return Err(Error::Stage {
            stage: "majority_vote".into(),
            message: format!("question {}: no non-empty extracted answers", question.id),
        });
    }

    let judge = LlmEquivalenceJudge {
        backend: ctx.backend.as_ref(),
        templates: &ctx.templates,
        model_id: &sc.judge_model,
        params: SamplingParams::stochastic(sc.judge_temperature, 1.0, 64).with_seed(ctx.seed),
        question,
    };
    let vote = majority_vote(&answers, &judge)?;

    let check = ctx
        .truth_check(question, Some(&vote.winner), "", stages::FINAL)
        .map_err(|e| e.at_stage("truth_judge"))?;

    Ok(StrategyOutcome {
        question_id: question.id.clone(),
        strategy: Strategy::SelfConsistency,
        chosen_answer: Some(vote.winner.clone()),
        samples,
        vote: Some(vote),
        gate_verdict: None,
        truth_verdicts: BTreeMap::from([(stages::FINAL.to_string(), check)]),
    })
}

/// Greedy baseline: one deterministic sample, extract, verify.
pub fn run_greedy_baseline(ctx: &RunContext, question: &Question) -> Result<StrategyOutcome> {
    let sc = &ctx.config.self_consistency;
    let params = SamplingParams::greedy(sc.max_tokens);
    let mut sample = ctx
        .solve_sample(question, &sc.reasoner_model, params, 0)
        .map_err(|e| e.at_stage("solve"))?;
    let answer = extract_final_answer(ctx, question, &mut sample)?;

    let chosen = if answer.trim().is_empty() {
        None
    } else {
        Some(answer.clone())
    };
    let check = ctx
        .truth_check(question, chosen.as_deref(), &sample.trace, stages::FINAL)
        .map_err(|e| e.at_stage("truth_judge"))?;

    Ok(StrategyOutcome {
        question_id: question.id.clone(),
        strategy: Strategy::Greedy,
        chosen_answer: chosen,
        samples: vec![sample],
        vote: None,
        gate_verdict: None,
        truth_verdicts: BTreeMap::from([(stages::FINAL.to_string(), check)]),
    })
}
