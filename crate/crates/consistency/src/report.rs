//! Run artifacts: report.json, report.csv, manifest.json, and the
//! comparison outputs built from multiple runs.
//!
//! report.json and report.csv are deterministic: they carry no timestamps
//! or host details, so reruns with the same seed, config, and dataset
//! produce byte-identical files. Wall-clock fields live in manifest.json
//! only.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{RunComparison, RunSummary};
use crate::error::{Error, Result};
use crate::types::{Strategy, StrategyOutcome};

/// Identity of a run, repeated in report.json and manifest.json.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMeta {
    pub seed: u64,
    pub strategy: Strategy,
    /// "mock" or "live".
    pub backend_mode: String,
    pub config_digest: String,
    pub dataset_digest: String,
}

/// Why a question produced no outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureDetail {
    pub stage: String,
    pub message: String,
    /// True when the failure was a transport error (connection refused,
    /// timeout, retries exhausted) rather than a pipeline error.
    pub transport: bool,
}

/// One question's entry in report.json, in dataset order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionReport {
    pub question_id: String,
    /// "ok" or "failed".
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<StrategyOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<FailureDetail>,
}

impl QuestionReport {
    pub fn ok(outcome: StrategyOutcome) -> QuestionReport {
        QuestionReport {
            question_id: outcome.question_id.clone(),
            status: "ok".into(),
            outcome: Some(outcome),
            error: None,
        }
    }

    pub fn failed(question_id: &str, detail: FailureDetail) -> QuestionReport {
        QuestionReport {
            question_id: question_id.to_string(),
            status: "failed".into(),
            outcome: None,
            error: Some(detail),
        }
    }
}

/// The full deterministic run report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run: RunMeta,
    pub summary: RunSummary,
    pub questions: Vec<QuestionReport>,
}

/// Wall-clock and call-count bookkeeping for one run. Not deterministic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Stable id derived from seed, strategy, and digests.
    pub run_id: String,
    pub seed: u64,
    pub strategy: Strategy,
    pub backend_mode: String,
    pub config_digest: String,
    pub dataset_digest: String,
    pub dataset_path: String,
    pub question_count: u32,
    /// Completions served by the underlying backend (cache misses under a
    /// cached live backend; every call under mock).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend_calls: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_hits: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_misses: Option<u64>,
    pub started_at_ms: u64,
    pub finished_at_ms: u64,
}

/// Derives the stable run id from the fields that define the run.
pub fn run_id(meta: &RunMeta) -> String {
    let mut hasher = Sha256::new();
    hasher.update(meta.seed.to_le_bytes());
    hasher.update(meta.strategy.as_str().as_bytes());
    hasher.update(meta.backend_mode.as_bytes());
    hasher.update(meta.config_digest.as_bytes());
    hasher.update(meta.dataset_digest.as_bytes());
    let digest = hex::encode(hasher.finalize());
    digest[..12].to_string()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the deterministic JSON report.
pub fn write_report_json(path: &Path, report: &RunReport) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Analysis(format!("cannot serialize report: {e}")))?;
    text.push('\n');
    write_text(path, &text)
}

/// Reads a report back; used by the comparison command.
pub fn read_report_json(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Analysis(format!("cannot parse report {}: {e}", path.display())))
}

/// Locates and reads the report inside a run directory.
pub fn read_run_report(run_dir: &Path) -> Result<RunReport> {
    read_report_json(&run_dir.join("report.json"))
}

/// Writes the flat per-stage CSV view of a report.
///
/// One row per truth-check stage per question, plus a "gate" row for
/// dual-model outcomes and a "failed" row for questions without an
/// outcome.
pub fn write_report_csv(path: &Path, report: &RunReport) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::Analysis(format!("cannot open {} for writing: {e}", path.display())))?;
    writer
        .write_record([
            "question_id",
            "strategy",
            "stage",
            "chosen_answer",
            "verdict",
            "tie_broken",
            "latency_ms",
        ])
        .map_err(|e| Error::Analysis(format!("csv write failed: {e}")))?;

    let strategy = report.run.strategy.as_str();
    for question in &report.questions {
        match &question.outcome {
            Some(outcome) => {
                let chosen = outcome.chosen_answer.as_deref().unwrap_or("");
                let tie_broken = outcome
                    .vote
                    .as_ref()
                    .map(|v| v.tie_broken.to_string())
                    .unwrap_or_default();
                let latency: u64 = outcome.samples.iter().map(|s| s.latency_ms).sum();
                let latency = latency.to_string();

                let mut rows: Vec<(&str, &str)> = Vec::new();
                if let Some(gate) = &outcome.gate_verdict {
                    rows.push(("gate", gate.value.as_str()));
                }
                for (stage, check) in &outcome.truth_verdicts {
                    rows.push((stage.as_str(), check.verdict.value.as_str()));
                }
                for (stage, verdict) in rows {
                    writer
                        .write_record([
                            question.question_id.as_str(),
                            strategy,
                            stage,
                            chosen,
                            verdict,
                            tie_broken.as_str(),
                            latency.as_str(),
                        ])
                        .map_err(|e| Error::Analysis(format!("csv write failed: {e}")))?;
                }
            }
            None => {
                writer
                    .write_record([
                        question.question_id.as_str(),
                        strategy,
                        "failed",
                        "",
                        "",
                        "",
                        "",
                    ])
                    .map_err(|e| Error::Analysis(format!("csv write failed: {e}")))?;
            }
        }
    }
    writer
        .flush()
        .map_err(|e| Error::Analysis(format!("csv flush failed: {e}")))?;
    Ok(())
}

/// Writes the manifest, deriving `run_id` from the meta fields.
pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Analysis(format!("cannot serialize manifest: {e}")))?;
    text.push('\n');
    write_text(path, &text)
}

/// Writes the comparison table as CSV.
pub fn write_comparison_csv(path: &Path, comparison: &RunComparison) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::Analysis(format!("cannot open {} for writing: {e}", path.display())))?;
    writer
        .write_record([
            "strategy",
            "total",
            "failed_questions",
            "accepted",
            "rejected",
            "unparseable",
            "acceptance_rate",
        ])
        .map_err(|e| Error::Analysis(format!("csv write failed: {e}")))?;
    for row in &comparison.rows {
        writer
            .write_record([
                row.strategy.as_str().to_string(),
                row.total.to_string(),
                row.failed_questions.to_string(),
                row.accepted.to_string(),
                row.rejected.to_string(),
                row.unparseable.to_string(),
                row.acceptance_rate
                    .map(|r| format!("{r:.6}"))
                    .unwrap_or_default(),
            ])
            .map_err(|e| Error::Analysis(format!("csv write failed: {e}")))?;
    }
    writer
        .flush()
        .map_err(|e| Error::Analysis(format!("csv flush failed: {e}")))?;
    Ok(())
}

/// Writes the verdict-distribution plot data as CSV, one row per
/// strategy and verdict with its percentage of completed questions.
pub fn write_plot_csv(path: &Path, comparison: &RunComparison) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::Analysis(format!("cannot open {} for writing: {e}", path.display())))?;
    writer
        .write_record(["strategy", "verdict", "percentage"])
        .map_err(|e| Error::Analysis(format!("csv write failed: {e}")))?;
    for row in &comparison.plot_rows {
        writer
            .write_record([
                row.strategy.as_str().to_string(),
                row.verdict.clone(),
                format!("{:.4}", row.percentage),
            ])
            .map_err(|e| Error::Analysis(format!("csv write failed: {e}")))?;
    }
    writer
        .flush()
        .map_err(|e| Error::Analysis(format!("csv flush failed: {e}")))?;
    Ok(())
}

/// Renders the comparison as an aligned text table with pairwise deltas,
/// for stdout.
pub fn render_comparison(comparison: &RunComparison) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<18} {:>6} {:>7} {:>7} {:>7} {:>12} {:>8}\n",
        "strategy", "total", "failed", "accept", "reject", "unparseable", "rate"
    ));
    for row in &comparison.rows {
        let rate = row
            .acceptance_rate
            .map(|r| format!("{:.1}%", r * 100.0))
            .unwrap_or_else(|| "-".to_string());
        out.push_str(&format!(
            "{:<18} {:>6} {:>7} {:>7} {:>7} {:>12} {:>8}\n",
            row.strategy.as_str(),
            row.total,
            row.failed_questions,
            row.accepted,
            row.rejected,
            row.unparseable,
            rate
        ));
    }
    out.push('\n');
    for delta in &comparison.deltas {
        let value = delta
            .delta_points
            .map(|d| format!("{d:+.1} points"))
            .unwrap_or_else(|| "undefined".to_string());
        out.push_str(&format!(
            "{} vs {}: {}\n",
            delta.to.as_str(),
            delta.from.as_str(),
            value
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{compare_runs, summarize};
    use crate::types::{stages, Verdict, VerdictValue};
    use crate::verification::{CandidateForm, TruthCheck};
    use std::collections::BTreeMap;

    fn outcome(id: &str, value: VerdictValue) -> StrategyOutcome {
        StrategyOutcome {
            question_id: id.into(),
            strategy: Strategy::Greedy,
            chosen_answer: Some("42".into()),
            samples: vec![],
            vote: None,
            gate_verdict: None,
            truth_verdicts: BTreeMap::from([(
                stages::FINAL.to_string(),
                TruthCheck {
                    question_id: id.into(),
                    stage: stages::FINAL.into(),
                    candidate: "42".into(),
                    form: CandidateForm::ExtractedAnswer,
                    verdict: Verdict {
                        value,
                        judge_raw: value.as_str().into(),
                        judge_model_id: "judge".into(),
                    },
                },
            )]),
        }
    }

    fn sample_report() -> RunReport {
        let outcomes = vec![
            outcome("q1", VerdictValue::Accept),
            outcome("q2", VerdictValue::Reject),
        ];
        let summary = summarize(&outcomes, 1).unwrap();
        let mut questions: Vec<QuestionReport> =
            outcomes.into_iter().map(QuestionReport::ok).collect();
        questions.push(QuestionReport::failed(
            "q3",
            FailureDetail {
                stage: "solve".into(),
                message: "backend unreachable".into(),
                transport: true,
            },
        ));
        RunReport {
            run: RunMeta {
                seed: 7,
                strategy: Strategy::Greedy,
                backend_mode: "mock".into(),
                config_digest: "c".repeat(64),
                dataset_digest: "d".repeat(64),
            },
            summary,
            questions,
        }
    }

    #[test]
    fn report_json_roundtrips_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let report = sample_report();

        let first = dir.path().join("report.json");
        let second = dir.path().join("again/report.json");
        write_report_json(&first, &report).unwrap();
        write_report_json(&second, &report).unwrap();
        assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());

        let loaded = read_report_json(&first).unwrap();
        assert_eq!(loaded, report);
    }

    #[test]
    fn report_json_carries_no_timestamps() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        write_report_json(&path, &sample_report()).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        for needle in ["started_at", "finished_at", "timestamp"] {
            assert!(
                !text.contains(needle),
                "report.json should not contain {needle:?}"
            );
        }
    }

    #[test]
    fn report_csv_has_one_row_per_stage_plus_failures() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        write_report_csv(&path, &sample_report()).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        // Header, one final-stage row per completed question, one failed row.
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("question_id,strategy,stage"));
        assert!(lines[1].contains("q1,greedy,final,42,ACCEPT"));
        assert!(lines[2].contains("q2,greedy,final,42,REJECT"));
        assert!(lines[3].contains("q3,greedy,failed"));
    }

    #[test]
    fn manifest_roundtrips_and_run_id_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let report = sample_report();
        let id = run_id(&report.run);
        assert_eq!(id.len(), 12);
        assert_eq!(id, run_id(&report.run));

        let manifest = RunManifest {
            run_id: id,
            seed: report.run.seed,
            strategy: report.run.strategy,
            backend_mode: report.run.backend_mode.clone(),
            config_digest: report.run.config_digest.clone(),
            dataset_digest: report.run.dataset_digest.clone(),
            dataset_path: "data/q.jsonl".into(),
            question_count: 3,
            backend_calls: Some(9),
            cache_hits: None,
            cache_misses: None,
            started_at_ms: 1000,
            finished_at_ms: 2000,
        };
        let path = dir.path().join("manifest.json");
        write_manifest(&path, &manifest).unwrap();
        let loaded: RunManifest =
            serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(loaded, manifest);
    }

    #[test]
    fn comparison_outputs_cover_table_plot_and_deltas() {
        let greedy = summarize(&[outcome("q1", VerdictValue::Accept)], 0).unwrap();
        let mut outcomes = vec![
            outcome("q1", VerdictValue::Accept),
            outcome("q2", VerdictValue::Accept),
        ];
        for o in &mut outcomes {
            o.strategy = Strategy::SelfConsistency;
        }
        let sc = summarize(&outcomes, 0).unwrap();
        let comparison = compare_runs(&[greedy, sc]).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let table_path = dir.path().join("comparison.csv");
        write_comparison_csv(&table_path, &comparison).unwrap();
        let table = fs::read_to_string(&table_path).unwrap();
        assert!(table.starts_with("strategy,total"));
        assert!(table.contains("greedy,1,0,1,0,0,1.000000"));

        let plot_path = dir.path().join("plot.csv");
        write_plot_csv(&plot_path, &comparison).unwrap();
        let plot = fs::read_to_string(&plot_path).unwrap();
        assert!(plot.contains("greedy,ACCEPT,100.0000"));
        assert!(plot.contains("self_consistency,REJECT,0.0000"));

        let rendered = render_comparison(&comparison);
        assert!(rendered.contains("greedy"));
        assert!(rendered.contains("self_consistency vs greedy: +0.0 points"));
    }
}
