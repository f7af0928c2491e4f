//! Run summaries, vote-probability oracles, and run comparison.
//!
//! The oracles predict the probability that a majority vote over n
//! independent draws from a known answer distribution picks the correct
//! answer, by exact enumeration and by Monte Carlo. They share the
//! tie-break rule with the voting pipeline (lowest sample index wins) but
//! none of its code, so measured pipeline rates can be checked against
//! them as an independent reference.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::canonical::canonicalize_answer;
use crate::error::{Error, Result};
use crate::rng::{draw_index, rng_for};
use crate::types::{stages, Strategy, StrategyOutcome, VerdictValue};

/// Aggregate metrics for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub strategy: Strategy,
    /// Questions attempted, including failures.
    pub total: u32,
    /// Questions whose pipeline errored; excluded from every rate.
    pub failed_questions: u32,
    pub accepted: u32,
    pub rejected: u32,
    /// Verdicts that stayed unparseable after the retry. Folded into the
    /// reject side of `acceptance_rate` but reported distinctly here.
    pub unparseable: u32,
    /// accepted / (total - failed); None when nothing completed.
    pub acceptance_rate: Option<f64>,
    /// ACCEPT share per truth-check stage (plus "gate" for dual-model),
    /// each over the outcomes that have that stage.
    pub per_stage_rates: BTreeMap<String, f64>,
    /// Votes decided by the lowest-sample-index rule.
    pub tie_break_count: u32,
    /// Dual-model only: accuracy within the gate-accepted subset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accepted_subset_accuracy: Option<f64>,
}

/// The verdict a run's headline acceptance rate is computed from: the
/// agreement gate for dual-model, the final ground-truth check otherwise.
fn primary_verdict(outcome: &StrategyOutcome) -> Result<VerdictValue> {
    match outcome.strategy {
        Strategy::DualModel => outcome
            .gate_verdict
            .as_ref()
            .map(|v| v.value)
            .ok_or_else(|| {
                Error::Analysis(format!(
                    "dual-model outcome for {} lacks a gate verdict",
                    outcome.question_id
                ))
            }),
        Strategy::SelfReflection => outcome
            .truth_verdicts
            .get(stages::POST_REFLECTION)
            .map(|c| c.verdict.value)
            .ok_or_else(|| {
                Error::Analysis(format!(
                    "reflection outcome for {} lacks a post_reflection check",
                    outcome.question_id
                ))
            }),
        Strategy::Greedy | Strategy::SelfConsistency => outcome
            .truth_verdicts
            .get(stages::FINAL)
            .map(|c| c.verdict.value)
            .ok_or_else(|| {
                Error::Analysis(format!(
                    "outcome for {} lacks a final truth check",
                    outcome.question_id
                ))
            }),
    }
}

/// Builds the summary for one run's completed outcomes plus its failure
/// count. All outcomes must come from the same strategy.
pub fn summarize(outcomes: &[StrategyOutcome], failed_questions: u32) -> Result<RunSummary> {
    let strategy = match outcomes.first() {
        Some(first) => first.strategy,
        None if failed_questions > 0 => {
            return Err(Error::Analysis(
                "cannot summarize a run with zero completed outcomes; strategy unknown".into(),
            ))
        }
        None => return Err(Error::Analysis("no outcomes to summarize".into())),
    };
    if let Some(mixed) = outcomes.iter().find(|o| o.strategy != strategy) {
        return Err(Error::Analysis(format!(
            "mixed strategies in one run: {} and {}",
            strategy.as_str(),
            mixed.strategy.as_str()
        )));
    }

    let mut accepted = 0u32;
    let mut rejected = 0u32;
    let mut unparseable = 0u32;
    for outcome in outcomes {
        match primary_verdict(outcome)? {
            VerdictValue::Accept => accepted += 1,
            VerdictValue::Reject => rejected += 1,
            VerdictValue::Unparseable => unparseable += 1,
        }
    }

    let mut stage_accepts: BTreeMap<&str, (u32, u32)> = BTreeMap::new();
    for outcome in outcomes {
        for (stage, check) in &outcome.truth_verdicts {
            let (hits, n) = stage_accepts.entry(stage.as_str()).or_insert((0, 0));
            *n += 1;
            if check.verdict.value.counts_as_accept() {
                *hits += 1;
            }
        }
        if let Some(gate) = &outcome.gate_verdict {
            let (hits, n) = stage_accepts.entry("gate").or_insert((0, 0));
            *n += 1;
            if gate.value.counts_as_accept() {
                *hits += 1;
            }
        }
    }
    let per_stage_rates: BTreeMap<String, f64> = stage_accepts
        .into_iter()
        .map(|(stage, (hits, n))| (stage.to_string(), hits as f64 / n as f64))
        .collect();

    let tie_break_count = outcomes
        .iter()
        .filter(|o| o.vote.as_ref().is_some_and(|v| v.tie_broken))
        .count() as u32;

    let accepted_subset_accuracy = if strategy == Strategy::DualModel {
        let gate_accepted: Vec<&StrategyOutcome> = outcomes
            .iter()
            .filter(|o| {
                o.gate_verdict
                    .as_ref()
                    .is_some_and(|g| g.value.counts_as_accept())
            })
            .collect();
        if gate_accepted.is_empty() {
            None
        } else {
            let correct = gate_accepted
                .iter()
                .filter(|o| {
                    o.truth_verdicts
                        .get(stages::FINAL)
                        .is_some_and(|c| c.verdict.value.counts_as_accept())
                })
                .count();
            Some(correct as f64 / gate_accepted.len() as f64)
        }
    } else {
        None
    };

    let completed = outcomes.len() as u32;
    Ok(RunSummary {
        strategy,
        total: completed + failed_questions,
        failed_questions,
        accepted,
        rejected,
        unparseable,
        acceptance_rate: if completed > 0 {
            Some(accepted as f64 / completed as f64)
        } else {
            None
        },
        per_stage_rates,
        tie_break_count,
        accepted_subset_accuracy,
    })
}

/// Tie-break rule shared by the oracle and the voting pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreakRule {
    /// Among tied answers, the one drawn earliest in the sequence wins,
    /// mirroring the vote's lowest-sample-index rule.
    #[default]
    LowestFirstOccurrence,
}

/// Specification of a vote-probability query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteOracleSpec {
    /// Answer text mapped to its draw probability.
    pub distribution: BTreeMap<String, f64>,
    /// Number of independent draws (1..=8).
    pub n: u32,
    /// The answer counted as correct. An answer absent from the
    /// distribution has winning probability zero.
    pub correct_answer: String,
    #[serde(default)]
    pub tie_break: TieBreakRule,
}

impl VoteOracleSpec {
    pub fn new(distribution: &[(&str, f64)], n: u32, correct_answer: &str) -> VoteOracleSpec {
        VoteOracleSpec {
            distribution: distribution
                .iter()
                .map(|(a, p)| (a.to_string(), *p))
                .collect(),
            n,
            correct_answer: correct_answer.to_string(),
            tie_break: TieBreakRule::LowestFirstOccurrence,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.distribution.is_empty() {
            return Err(Error::Analysis("distribution has no answers".into()));
        }
        if self.n == 0 {
            return Err(Error::Analysis("n must be at least 1".into()));
        }
        let mut sum = 0.0;
        for (answer, p) in &self.distribution {
            if !p.is_finite() || *p < 0.0 || *p > 1.0 {
                return Err(Error::Analysis(format!(
                    "probability {p} for answer {answer:?} is out of range"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Analysis(format!(
                "distribution sums to {sum}, expected 1"
            )));
        }
        let mut canonical_seen = BTreeMap::new();
        for answer in self.distribution.keys() {
            if let Some(previous) =
                canonical_seen.insert(canonicalize_answer(answer), answer.clone())
            {
                return Err(Error::Analysis(format!(
                    "answers {previous:?} and {answer:?} share a canonical form; \
                     the vote would merge them"
                )));
            }
        }
        Ok(())
    }

    fn ordered(&self) -> (Vec<&str>, Vec<f64>) {
        let answers: Vec<&str> = self.distribution.keys().map(|s| s.as_str()).collect();
        let weights: Vec<f64> = self.distribution.values().copied().collect();
        (answers, weights)
    }
}

/// Winner of one drawn sequence: most frequent answer index, ties going to
/// the one whose first occurrence is earliest.
fn winner_of(sequence: &[usize], k: usize) -> usize {
    let mut counts = vec![0u32; k];
    for &i in sequence {
        counts[i] += 1;
    }
    let top = *counts.iter().max().unwrap();
    for &i in sequence {
        if counts[i] == top {
            return i;
        }
    }
    unreachable!("sequence is non-empty");
}

/// Exact probability that the vote winner is the correct answer, by
/// sequential enumeration of all k^n draw sequences. Bounded at 5 answers
/// and n = 8 (390,625 sequences); larger specs must use the Monte-Carlo
/// estimator, which has no such limit.
pub fn vote_probability_exact(spec: &VoteOracleSpec) -> Result<f64> {
    spec.validate()?;
    if spec.distribution.len() > 5 || spec.n > 8 {
        return Err(Error::Analysis(format!(
            "exact enumeration is limited to 5 answers and n <= 8 (got {} answers, n = {}); \
             use vote_probability_mc instead",
            spec.distribution.len(),
            spec.n
        )));
    }
    let (answers, weights) = spec.ordered();
    let k = answers.len();
    let n = spec.n as usize;
    let Some(correct) = answers.iter().position(|a| *a == spec.correct_answer) else {
        return Ok(0.0);
    };

    let mut sequence = vec![0usize; n];
    let mut total = 0.0;
    loop {
        let mut prob = 1.0;
        for &i in &sequence {
            prob *= weights[i];
        }
        if prob > 0.0 && winner_of(&sequence, k) == correct {
            total += prob;
        }

        let mut pos = 0;
        loop {
            sequence[pos] += 1;
            if sequence[pos] < k {
                break;
            }
            sequence[pos] = 0;
            pos += 1;
            if pos == n {
                return Ok(total);
            }
        }
    }
}

/// A Monte-Carlo estimate with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub trials: u32,
}

/// Monte-Carlo estimate of the same probability, seeded and reproducible.
pub fn vote_probability_mc(spec: &VoteOracleSpec, trials: u32, seed: u64) -> Result<McEstimate> {
    spec.validate()?;
    if trials == 0 {
        return Err(Error::Analysis("trials must be at least 1".into()));
    }
    let (answers, weights) = spec.ordered();
    let k = answers.len();
    let n = spec.n as usize;
    let correct = answers.iter().position(|a| *a == spec.correct_answer);

    let mut rng = rng_for(seed, &["vote_mc"]);
    let mut sequence = vec![0usize; n];
    let mut hits = 0u64;
    for _ in 0..trials {
        for slot in sequence.iter_mut() {
            *slot = draw_index(&mut rng, &weights);
        }
        if let Some(correct) = correct {
            if winner_of(&sequence, k) == correct {
                hits += 1;
            }
        }
    }
    let estimate = hits as f64 / trials as f64;
    let std_error = (estimate * (1.0 - estimate) / trials as f64).sqrt();
    Ok(McEstimate {
        estimate,
        std_error,
        trials,
    })
}

/// One run's row in a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub strategy: Strategy,
    pub total: u32,
    pub failed_questions: u32,
    pub accepted: u32,
    pub rejected: u32,
    pub unparseable: u32,
    pub acceptance_rate: Option<f64>,
}

/// Acceptance-rate difference between two runs, in percentage points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateDelta {
    pub from: Strategy,
    pub to: Strategy,
    /// `to` minus `from`; None when either rate is undefined.
    pub delta_points: Option<f64>,
}

/// One bar of the verdict-distribution plot data: the percentage of a
/// run's completed questions that got the given verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotRow {
    pub strategy: Strategy,
    pub verdict: String,
    pub percentage: f64,
}

/// Cross-run comparison: table rows, pairwise deltas, and plot data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunComparison {
    pub rows: Vec<ComparisonRow>,
    pub deltas: Vec<RateDelta>,
    pub plot_rows: Vec<PlotRow>,
}

/// Compares two or more run summaries.
pub fn compare_runs(summaries: &[RunSummary]) -> Result<RunComparison> {
    if summaries.len() < 2 {
        return Err(Error::Analysis(format!(
            "comparison needs at least two runs, got {}",
            summaries.len()
        )));
    }

    let rows: Vec<ComparisonRow> = summaries
        .iter()
        .map(|s| ComparisonRow {
            strategy: s.strategy,
            total: s.total,
            failed_questions: s.failed_questions,
            accepted: s.accepted,
            rejected: s.rejected,
            unparseable: s.unparseable,
            acceptance_rate: s.acceptance_rate,
        })
        .collect();

    let mut deltas = Vec::new();
    for i in 0..summaries.len() {
        for j in (i + 1)..summaries.len() {
            let (a, b) = (&summaries[i], &summaries[j]);
            deltas.push(RateDelta {
                from: a.strategy,
                to: b.strategy,
                delta_points: match (a.acceptance_rate, b.acceptance_rate) {
                    (Some(ra), Some(rb)) => Some((rb - ra) * 100.0),
                    _ => None,
                },
            });
        }
    }

    let mut plot_rows = Vec::new();
    for s in summaries {
        let completed = f64::from(s.total - s.failed_questions);
        for (verdict, count) in [
            ("ACCEPT", s.accepted),
            ("REJECT", s.rejected),
            ("UNPARSEABLE", s.unparseable),
        ] {
            plot_rows.push(PlotRow {
                strategy: s.strategy,
                verdict: verdict.to_string(),
                percentage: if completed > 0.0 {
                    count as f64 * 100.0 / completed
                } else {
                    0.0
                },
            });
        }
    }

    Ok(RunComparison {
        rows,
        deltas,
        plot_rows,
    })
}
