//! Acceptance suite: eight checks covering the oracle, every strategy's
//! measured accuracy against the oracle's prediction, determinism,
//! caching, and verdict parsing.
//!
//! All checks run sequentially inside one test so the total-runtime check
//! can time them, printing one line per criterion (visible with
//! `cargo test --test acceptance -- --nocapture`).

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use consistency::analysis::{vote_probability_exact, vote_probability_mc, VoteOracleSpec};
use consistency::backend::cache::CachedBackend;
use consistency::backend::mock::{MockBackend, MockScript, MockScriptEntry};
use consistency::backend::CountingBackend;
use consistency::config::Config;
use consistency::pipeline::{run_question, RunContext};
use consistency::rng::{rng_for, uniform01};
use consistency::runner::{execute_run, RunOptions};
use consistency::types::{stages, Question, Strategy, VerdictValue};
use consistency::verification::parse_verdict;

// Pinned tolerances. Statistical checks run on fixed seeds, so they are
// deterministic; the margins say how far a measured rate may sit from the
// oracle's prediction for the seeded sample sizes used here.
const ORACLE_MC_TRIALS: u32 = 100_000;
const ORACLE_MC_MAX_SIGMA: f64 = 3.0;
const ORACLE_TIME_LIMIT: Duration = Duration::from_secs(5);
const POOL_QUESTIONS: usize = 1_000;
const POOL_TOLERANCE_POINTS: f64 = 3.0;
const POOL_TIME_LIMIT: Duration = Duration::from_secs(10);
const GAP_MIN_POINTS: f64 = 8.0;
const GATE_QUESTIONS: usize = 2_000;
const GATE_TOLERANCE_POINTS: f64 = 2.0;
const SUBSET_MIN_ACCURACY: f64 = 0.7;
const REFLECTION_QUESTIONS: usize = 2_000;
const REFLECTION_TOLERANCE_POINTS: f64 = 2.0;
const TOTAL_TIME_LIMIT: Duration = Duration::from_secs(60);

type CheckResult = Result<String, String>;

fn question(id: &str, expected: &str) -> Question {
    Question {
        id: id.to_string(),
        input: format!("Sample question {id}: what is the right answer?"),
        instruction: None,
        expected_output: expected.to_string(),
        data_source: None,
    }
}

fn entry(dist: &[(&str, f64)], greedy: &str) -> MockScriptEntry {
    MockScriptEntry {
        answer_distribution: dist.iter().map(|(a, p)| (a.to_string(), *p)).collect(),
        greedy_answer: greedy.to_string(),
        trace_template: None,
        critique_flip_up: 0.0,
        critique_flip_down: 0.0,
        expected_answer: None,
    }
}

fn uniform_pool(count: usize, dist: &[(&str, f64)], expected: &str) -> (Vec<Question>, MockScript) {
    let mut questions = Vec::with_capacity(count);
    let mut entries = BTreeMap::new();
    for i in 0..count {
        let id = format!("q{i}");
        questions.push(question(&id, expected));
        entries.insert(id, entry(dist, dist[0].0));
    }
    (questions, MockScript::shared(entries).unwrap())
}

fn context(script: MockScript, seed: u64) -> RunContext {
    RunContext::new(Arc::new(MockBackend::new(script)), Config::default(), seed).unwrap()
}

fn accept_rate(
    ctx: &RunContext,
    strategy: Strategy,
    questions: &[Question],
    stage: &str,
) -> Result<f64, String> {
    let mut accepted = 0usize;
    for q in questions {
        let outcome =
            run_question(ctx, strategy, q).map_err(|e| format!("question {} failed: {e}", q.id))?;
        let check = outcome
            .truth_verdicts
            .get(stage)
            .ok_or_else(|| format!("question {} has no {stage} check", q.id))?;
        if check.verdict.value.counts_as_accept() {
            accepted += 1;
        }
    }
    Ok(accepted as f64 / questions.len() as f64)
}

/// Criterion 1: the exact vote oracle matches the binary closed form and
/// seeded Monte-Carlo estimates across ten distributions, within 5s.
fn criterion_oracle() -> CheckResult {
    let started = Instant::now();

    type OracleFixture = (&'static [(&'static str, f64)], u32, &'static str);
    let fixtures: &[OracleFixture] = &[
        (&[("a", 0.7), ("b", 0.3)], 3, "a"),
        (&[("a", 0.6), ("b", 0.2), ("c", 0.2)], 6, "a"),
        (&[("a", 0.8), ("b", 0.1), ("c", 0.1)], 6, "a"),
        (&[("a", 0.1), ("b", 0.8), ("c", 0.1)], 6, "a"),
        (&[("a", 0.6), ("b", 0.2), ("c", 0.2)], 1, "a"),
        (&[("a", 0.5), ("b", 0.5)], 6, "a"),
        (&[("a", 0.3), ("b", 0.4), ("c", 0.3)], 6, "a"),
        (
            &[("a", 0.25), ("b", 0.25), ("c", 0.25), ("d", 0.25)],
            3,
            "a",
        ),
        (&[("a", 0.472), ("b", 0.264), ("c", 0.264)], 1, "a"),
        (&[("a", 0.7), ("b", 0.15), ("c", 0.15)], 6, "a"),
    ];

    // Binary closed form: with two answers and n=3 draws, the majority is
    // correct with probability p^3 + 3 p^2 (1-p).
    let p: f64 = 0.7;
    let closed_form = p.powi(3) + 3.0 * p.powi(2) * (1.0 - p);
    let binary = VoteOracleSpec::new(&[("a", 0.7), ("b", 0.3)], 3, "a");
    let binary_exact = vote_probability_exact(&binary).map_err(|e| e.to_string())?;
    if (binary_exact - closed_form).abs() > 1e-12 {
        return Err(format!(
            "exact {binary_exact} disagrees with closed form {closed_form}"
        ));
    }

    let mut max_sigma = 0.0f64;
    for (i, (dist, n, correct)) in fixtures.iter().enumerate() {
        let spec = VoteOracleSpec::new(dist, *n, correct);
        let exact = vote_probability_exact(&spec).map_err(|e| e.to_string())?;
        let mc = vote_probability_mc(&spec, ORACLE_MC_TRIALS, 11 + i as u64)
            .map_err(|e| e.to_string())?;
        if mc.std_error <= 0.0 {
            return Err(format!("fixture {i}: degenerate standard error"));
        }
        let sigma = (mc.estimate - exact).abs() / mc.std_error;
        max_sigma = max_sigma.max(sigma);
        if sigma > ORACLE_MC_MAX_SIGMA {
            return Err(format!(
                "fixture {i} ({dist:?}, n={n}): MC {:.5} vs exact {exact:.5} is {sigma:.2} SE away",
                mc.estimate
            ));
        }
    }

    let elapsed = started.elapsed();
    if elapsed > ORACLE_TIME_LIMIT {
        return Err(format!("took {elapsed:.2?}, limit {ORACLE_TIME_LIMIT:?}"));
    }
    Ok(format!(
        "{} distributions, closed form matched, max deviation {max_sigma:.2} SE, {elapsed:.2?}",
        fixtures.len()
    ))
}

/// Criterion 2: measured self-consistency accuracy over a 1000-question
/// pool drawn from {0.6, 0.2, 0.2} lands within 3 points of the exact
/// oracle's prediction, within 10s.
fn criterion_pool_accuracy() -> CheckResult {
    let started = Instant::now();
    let dist: &[(&str, f64)] = &[("alpha", 0.6), ("beta", 0.2), ("gamma", 0.2)];

    let spec = VoteOracleSpec::new(dist, Config::default().self_consistency.n, "alpha");
    let predicted = vote_probability_exact(&spec).map_err(|e| e.to_string())?;

    let (questions, script) = uniform_pool(POOL_QUESTIONS, dist, "alpha");
    let ctx = context(script, 101);
    let measured = accept_rate(&ctx, Strategy::SelfConsistency, &questions, stages::FINAL)?;

    let gap_points = (measured - predicted).abs() * 100.0;
    if gap_points > POOL_TOLERANCE_POINTS {
        return Err(format!(
            "measured {measured:.4} vs predicted {predicted:.4}: off by {gap_points:.2} points"
        ));
    }
    let elapsed = started.elapsed();
    if elapsed > POOL_TIME_LIMIT {
        return Err(format!("took {elapsed:.2?}, limit {POOL_TIME_LIMIT:?}"));
    }
    Ok(format!(
        "measured {measured:.4} vs predicted {predicted:.4} over {POOL_QUESTIONS} questions, {elapsed:.2?}"
    ))
}

/// Criterion 3: on a pool where greedy decoding is right exactly half the
/// time, self-consistency beats it by at least 8 points, and the measured
/// rate still matches the mixed oracle prediction.
fn criterion_consistency_beats_greedy() -> CheckResult {
    let easy: &[(&str, f64)] = &[("alpha", 0.8), ("beta", 0.1), ("gamma", 0.1)];
    let hard: &[(&str, f64)] = &[("alpha", 0.1), ("beta", 0.8), ("gamma", 0.1)];
    let easy_count = POOL_QUESTIONS * 65 / 100;
    let n = Config::default().self_consistency.n;

    let mut questions = Vec::with_capacity(POOL_QUESTIONS);
    let mut entries = BTreeMap::new();
    for i in 0..POOL_QUESTIONS {
        let id = format!("q{i}");
        questions.push(question(&id, "alpha"));
        let dist = if i < easy_count { easy } else { hard };
        let mut e = entry(dist, "alpha");
        // Half the questions decode greedily to the right answer, half to
        // a wrong one, so the baseline lands at exactly 0.5.
        e.greedy_answer = if i % 2 == 0 { "alpha" } else { "beta" }.to_string();
        entries.insert(id, e);
    }
    let script = MockScript::shared(entries).unwrap();
    let ctx = context(script, 202);

    let easy_p = vote_probability_exact(&VoteOracleSpec::new(easy, n, "alpha"))
        .map_err(|e| e.to_string())?;
    let hard_p = vote_probability_exact(&VoteOracleSpec::new(hard, n, "alpha"))
        .map_err(|e| e.to_string())?;
    let share = easy_count as f64 / POOL_QUESTIONS as f64;
    let predicted = share * easy_p + (1.0 - share) * hard_p;

    let greedy = accept_rate(&ctx, Strategy::Greedy, &questions, stages::FINAL)?;
    let sc = accept_rate(&ctx, Strategy::SelfConsistency, &questions, stages::FINAL)?;

    if greedy != 0.5 {
        return Err(format!(
            "greedy baseline should be exactly 0.5, got {greedy}"
        ));
    }
    let oracle_gap = (sc - predicted).abs() * 100.0;
    if oracle_gap > POOL_TOLERANCE_POINTS {
        return Err(format!(
            "self-consistency {sc:.4} vs predicted {predicted:.4}: off by {oracle_gap:.2} points"
        ));
    }
    let gain = (sc - greedy) * 100.0;
    if gain < GAP_MIN_POINTS {
        return Err(format!(
            "self-consistency {sc:.4} beats greedy {greedy:.4} by only {gain:.2} points"
        ));
    }
    Ok(format!(
        "greedy {greedy:.3}, self-consistency {sc:.4} (predicted {predicted:.4}), gain {gain:.1} points"
    ))
}

/// Criterion 4: the dual-model agreement gate accepts at the rate the
/// independence model predicts, and accuracy within the accepted subset
/// clears 0.7.
fn criterion_agreement_gate() -> CheckResult {
    let dist: &[(&str, f64)] = &[("alpha", 0.7), ("beta", 0.15), ("gamma", 0.15)];
    let (questions, script) = uniform_pool(GATE_QUESTIONS, dist, "alpha");
    let ctx = context(script, 303);

    // Two independent draws agree with probability sum p_i^2; both-correct
    // mass is p_correct^2 of it.
    let agree: f64 = dist.iter().map(|(_, p)| p * p).sum();
    let both_correct = dist[0].1 * dist[0].1;
    let predicted_subset = both_correct / agree;

    let mut gate_accepts = 0usize;
    let mut subset_correct = 0usize;
    for q in &questions {
        let outcome = run_question(&ctx, Strategy::DualModel, q)
            .map_err(|e| format!("question {} failed: {e}", q.id))?;
        let gate = outcome
            .gate_verdict
            .as_ref()
            .ok_or_else(|| format!("question {} has no gate verdict", q.id))?;
        if gate.value.counts_as_accept() {
            gate_accepts += 1;
            let final_check = outcome
                .truth_verdicts
                .get(stages::FINAL)
                .ok_or_else(|| format!("accepted question {} has no final check", q.id))?;
            if final_check.verdict.value.counts_as_accept() {
                subset_correct += 1;
            }
        }
    }

    let measured_gate = gate_accepts as f64 / questions.len() as f64;
    let gate_gap = (measured_gate - agree).abs() * 100.0;
    if gate_gap > GATE_TOLERANCE_POINTS {
        return Err(format!(
            "gate acceptance {measured_gate:.4} vs predicted {agree:.4}: off by {gate_gap:.2} points"
        ));
    }
    if gate_accepts == 0 {
        return Err("gate accepted nothing".into());
    }
    let subset = subset_correct as f64 / gate_accepts as f64;
    if subset <= SUBSET_MIN_ACCURACY {
        return Err(format!(
            "accepted-subset accuracy {subset:.4} is not above {SUBSET_MIN_ACCURACY}"
        ));
    }
    Ok(format!(
        "gate {measured_gate:.4} vs predicted {agree:.4}; accepted-subset accuracy {subset:.4} (predicted {predicted_subset:.4})"
    ))
}

/// Criterion 5: reflection's before/after accuracy delta matches the
/// scripted flip rate: only wrong initial answers flip up, with
/// probability 0.064, so the expected gain is 0.528 * 6.4 points.
fn criterion_reflection_delta() -> CheckResult {
    let dist: &[(&str, f64)] = &[("alpha", 0.472), ("beta", 0.264), ("gamma", 0.264)];
    let flip_up = 0.064;
    let p_wrong = 1.0 - dist[0].1;
    let predicted_delta_points = p_wrong * flip_up * 100.0;

    let mut questions = Vec::with_capacity(REFLECTION_QUESTIONS);
    let mut entries = BTreeMap::new();
    for i in 0..REFLECTION_QUESTIONS {
        let id = format!("q{i}");
        questions.push(question(&id, "alpha"));
        let mut e = entry(dist, "alpha");
        e.critique_flip_up = flip_up;
        e.expected_answer = Some("alpha".to_string());
        entries.insert(id, e);
    }
    let script = MockScript::shared(entries).unwrap();
    let ctx = context(script, 404);

    let mut pre_accepts = 0usize;
    let mut post_accepts = 0usize;
    for q in &questions {
        let outcome = run_question(&ctx, Strategy::SelfReflection, q)
            .map_err(|e| format!("question {} failed: {e}", q.id))?;
        for (stage, counter) in [
            (stages::PRE_REFLECTION, &mut pre_accepts),
            (stages::POST_REFLECTION, &mut post_accepts),
        ] {
            let check = outcome
                .truth_verdicts
                .get(stage)
                .ok_or_else(|| format!("question {} has no {stage} check", q.id))?;
            if check.verdict.value.counts_as_accept() {
                *counter += 1;
            }
        }
    }

    let pre = pre_accepts as f64 / questions.len() as f64;
    let post = post_accepts as f64 / questions.len() as f64;
    let delta_points = (post - pre) * 100.0;
    let gap = (delta_points - predicted_delta_points).abs();
    if gap > REFLECTION_TOLERANCE_POINTS {
        return Err(format!(
            "delta {delta_points:.2} points vs predicted {predicted_delta_points:.2}: off by {gap:.2}"
        ));
    }
    Ok(format!(
        "pre {pre:.4}, post {post:.4}, delta {delta_points:.2} points (predicted {predicted_delta_points:.2})"
    ))
}

/// Criterion 6: a seeded mock run writes byte-identical report.json and
/// report.csv on rerun, and a warmed response cache serves a repeated
/// workload without a single call to the wrapped backend.
fn criterion_determinism_and_cache() -> CheckResult {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;

    // Determinism through the CLI-level entry point, artifacts included.
    let dataset_path = dir.path().join("questions.jsonl");
    let lines: Vec<String> = (0..5)
        .map(|i| format!(r#"{{"id": "q{i}", "input": "Sample question q{i}", "output": "alpha"}}"#))
        .collect();
    std::fs::write(&dataset_path, lines.join("\n")).map_err(|e| e.to_string())?;

    let script_path = dir.path().join("script.json");
    let entries: BTreeMap<String, MockScriptEntry> = (0..5)
        .map(|i| {
            (
                format!("q{i}"),
                entry(&[("alpha", 0.6), ("beta", 0.2), ("gamma", 0.2)], "alpha"),
            )
        })
        .collect();
    std::fs::write(
        &script_path,
        serde_json::to_string(&entries).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;

    let run = |out: std::path::PathBuf| -> Result<(), String> {
        execute_run(&RunOptions {
            strategy: Strategy::SelfConsistency,
            dataset_path: dataset_path.clone(),
            limit: None,
            seed: Some(17),
            config_path: None,
            mock_path: Some(script_path.clone()),
            out_dir: Some(out),
            resume: false,
            parallelism: Some(3),
        })
        .map(|_| ())
        .map_err(|e| e.to_string())
    };
    let out_a = dir.path().join("run_a");
    let out_b = dir.path().join("run_b");
    run(out_a.clone())?;
    run(out_b.clone())?;
    for name in ["report.json", "report.csv"] {
        let a = std::fs::read(out_a.join(name)).map_err(|e| e.to_string())?;
        let b = std::fs::read(out_b.join(name)).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("{name} differs between identical seeded runs"));
        }
    }

    // Cache replay with a counted inner backend.
    let (questions, script) = uniform_pool(5, &[("alpha", 0.6), ("beta", 0.4)], "alpha");
    let counting = Arc::new(CountingBackend::new(MockBackend::new(script)));
    let cache_dir = dir.path().join("cache");

    let warm = Arc::new(
        CachedBackend::new(counting.clone(), cache_dir.clone()).map_err(|e| e.to_string())?,
    );
    let ctx = RunContext::new(warm, Config::default(), 17).map_err(|e| e.to_string())?;
    let mut first = Vec::new();
    for q in &questions {
        first.push(run_question(&ctx, Strategy::SelfConsistency, q).map_err(|e| e.to_string())?);
    }
    let calls_after_warm = counting.calls();
    if calls_after_warm == 0 {
        return Err("warm run should reach the inner backend".into());
    }

    let replay =
        Arc::new(CachedBackend::new(counting.clone(), cache_dir).map_err(|e| e.to_string())?);
    let ctx = RunContext::new(replay, Config::default(), 17).map_err(|e| e.to_string())?;
    for (q, warm_outcome) in questions.iter().zip(&first) {
        let outcome =
            run_question(&ctx, Strategy::SelfConsistency, q).map_err(|e| e.to_string())?;
        if outcome.chosen_answer != warm_outcome.chosen_answer {
            return Err(format!(
                "cached replay changed the answer for {}: {:?} vs {:?}",
                q.id, outcome.chosen_answer, warm_outcome.chosen_answer
            ));
        }
    }
    let new_calls = counting.calls() - calls_after_warm;
    if new_calls != 0 {
        return Err(format!(
            "cached replay still made {new_calls} call(s) to the inner backend"
        ));
    }
    Ok(format!(
        "reports byte-identical; replay served {calls_after_warm} completions from cache with 0 backend calls"
    ))
}

/// Criterion 7: the verdict parser handles the pinned edge cases and a
/// deterministic fuzz sweep without ever leaving its three-value range.
fn criterion_verdict_parser() -> CheckResult {
    let pinned: &[(&str, VerdictValue)] = &[
        ("ACCEPT", VerdictValue::Accept),
        ("accept", VerdictValue::Accept),
        ("  Accept.\n", VerdictValue::Accept),
        ("The solutions agree, so: ACCEPT", VerdictValue::Accept),
        ("REJECT", VerdictValue::Reject),
        ("reject!", VerdictValue::Reject),
        (
            "Verdict: REJECT because the answers differ",
            VerdictValue::Reject,
        ),
        ("ACCEPTABLE", VerdictValue::Unparseable),
        ("REJECTED", VerdictValue::Unparseable),
        ("accept reject", VerdictValue::Unparseable),
        ("I accept it is wrong, so REJECT", VerdictValue::Unparseable),
        ("", VerdictValue::Unparseable),
        ("yes", VerdictValue::Unparseable),
        ("ACCEPT\u{200b}", VerdictValue::Accept),
    ];
    for (text, expected) in pinned {
        let got = parse_verdict(text);
        if got != *expected {
            return Err(format!(
                "parse_verdict({text:?}) = {got:?}, expected {expected:?}"
            ));
        }
    }

    // Deterministic fuzz: random soups of verdict fragments, punctuation,
    // and unicode. The parser must stay total and ternary.
    let alphabet: &[&str] = &[
        "accept",
        "reject",
        "ACCEPT",
        "REJECT",
        "Accept",
        "Reject",
        "acc",
        "ept",
        "rej",
        "accepted",
        "rejection",
        " ",
        "\n",
        "\t",
        ".",
        ",",
        ":",
        "!",
        "-",
        "_",
        "0",
        "7",
        "the",
        "answer",
        "ü",
        "日本",
        "\u{200b}",
        "\u{0301}",
        "¡",
        "!",
        "\"",
    ];
    let mut rng = rng_for(42, &["verdict_fuzz"]);
    let mut fuzz_count = 0u32;
    for _ in 0..10_000 {
        let pieces = (uniform01(&mut rng) * 8.0) as usize;
        let mut text = String::new();
        for _ in 0..pieces {
            let pick = (uniform01(&mut rng) * alphabet.len() as f64) as usize;
            text.push_str(alphabet[pick.min(alphabet.len() - 1)]);
        }
        let got = parse_verdict(&text);
        // Exhaustive match: any new variant would break this check.
        match got {
            VerdictValue::Accept | VerdictValue::Reject | VerdictValue::Unparseable => {}
        }
        fuzz_count += 1;
    }
    Ok(format!(
        "{} pinned cases, {fuzz_count} fuzzed inputs, all ternary",
        pinned.len()
    ))
}

type Criterion = (&'static str, fn() -> CheckResult);

#[test]
fn acceptance_criteria() {
    let checks: &[Criterion] = &[
        ("vote oracle: closed form + Monte Carlo", criterion_oracle),
        (
            "self-consistency matches oracle prediction",
            criterion_pool_accuracy,
        ),
        (
            "self-consistency beats greedy by >= 8 points",
            criterion_consistency_beats_greedy,
        ),
        (
            "dual-model gate rate and accepted-subset accuracy",
            criterion_agreement_gate,
        ),
        (
            "self-reflection before/after delta",
            criterion_reflection_delta,
        ),
        (
            "deterministic reruns and cache replay",
            criterion_determinism_and_cache,
        ),
        (
            "verdict parser: pinned cases + fuzz",
            criterion_verdict_parser,
        ),
    ];

    let started = Instant::now();
    let mut failures = Vec::new();
    for (i, (name, check)) in checks.iter().enumerate() {
        let number = i + 1;
        match check() {
            Ok(detail) => println!("criterion {number}: PASS - {name}: {detail}"),
            Err(reason) => {
                println!("criterion {number}: FAIL - {name}: {reason}");
                failures.push(format!("criterion {number} ({name}): {reason}"));
            }
        }
    }

    let elapsed = started.elapsed();
    if elapsed <= TOTAL_TIME_LIMIT {
        println!(
            "criterion 8: PASS - full suite finished in {elapsed:.2?} (limit {TOTAL_TIME_LIMIT:?})"
        );
    } else {
        println!("criterion 8: FAIL - full suite took {elapsed:.2?} (limit {TOTAL_TIME_LIMIT:?})");
        failures.push(format!("criterion 8: suite took {elapsed:.2?}"));
    }

    assert!(
        failures.is_empty(),
        "acceptance failures:\n{}",
        failures.join("\n")
    );
}
