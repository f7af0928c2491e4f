//! Verdict parsing and ground-truth verification.
//!
//! Judges are asked for a single word, ACCEPT or REJECT. Replies are parsed
//! by scanning for those words as standalone tokens; a reply containing
//! exactly one of them yields that verdict, anything else gets one retry
//! with a stricter instruction appended, and an unparseable retry is
//! recorded as UNPARSEABLE. Metrics later fold UNPARSEABLE into the reject
//! side, but the raw verdict keeps the distinction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backend::{ChatBackend, CompletionRequest, RequestMeta, Stage};
use crate::canonical::canonicalize_answer;
use crate::error::Result;
use crate::prompt::TemplateSet;
use crate::types::{Message, Question, SamplingParams, Verdict, VerdictValue};

/// Instruction appended to the prompt when the first judge reply could not
/// be parsed.
const STRICT_SUFFIX: &str = "\n\nReply with exactly one word: ACCEPT or REJECT.";

/// Parses a judge reply into the ternary verdict value.
///
/// The reply is scanned for the standalone, case-insensitive tokens
/// `accept` and `reject`, where a token is a maximal run of alphabetic
/// characters. Exactly one of the two present yields that verdict; zero or
/// both yield [`VerdictValue::Unparseable`]. Words merely containing the
/// tokens ("unacceptable") do not count.
pub fn parse_verdict(text: &str) -> VerdictValue {
    let mut has_accept = false;
    let mut has_reject = false;
    for token in text.split(|c: char| !c.is_alphabetic()) {
        if token.eq_ignore_ascii_case("accept") {
            has_accept = true;
        } else if token.eq_ignore_ascii_case("reject") {
            has_reject = true;
        }
    }
    match (has_accept, has_reject) {
        (true, false) => VerdictValue::Accept,
        (false, true) => VerdictValue::Reject,
        _ => VerdictValue::Unparseable,
    }
}

/// Sends a judge prompt and parses the reply, retrying once with a
/// stricter suffix when the first reply is unparseable.
pub fn adjudicate(
    backend: &dyn ChatBackend,
    model_id: &str,
    params: SamplingParams,
    messages: Vec<Message>,
    meta: RequestMeta,
) -> Result<Verdict> {
    let request = CompletionRequest {
        model_id: model_id.to_string(),
        messages,
        params,
        meta,
    };
    let first = backend.complete(&request)?;
    let value = parse_verdict(&first.content);
    if value != VerdictValue::Unparseable {
        return Ok(Verdict {
            value,
            judge_raw: first.content,
            judge_model_id: model_id.to_string(),
        });
    }

    let mut retry = request.clone();
    if let Some(last) = retry.messages.last_mut() {
        last.content.push_str(STRICT_SUFFIX);
    }
    let second = backend.complete(&retry)?;
    Ok(Verdict {
        value: parse_verdict(&second.content),
        judge_raw: second.content,
        judge_model_id: model_id.to_string(),
    })
}

/// Which text was handed to the truth judge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateForm {
    /// The extractor's short final answer.
    ExtractedAnswer,
    /// The full reasoning trace, used when no extracted answer exists.
    FullTrace,
}

/// Picks the candidate text for verification: the extracted answer when
/// one is available and non-empty, otherwise the full trace.
pub fn candidate_from(answer: Option<&str>, trace: &str) -> (String, CandidateForm) {
    match answer {
        Some(a) if !a.trim().is_empty() => (a.to_string(), CandidateForm::ExtractedAnswer),
        _ => (trace.to_string(), CandidateForm::FullTrace),
    }
}

/// Record of one ground-truth verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthCheck {
    pub question_id: String,
    /// Stage label distinguishing multiple checks per question, e.g.
    /// "final", "pre_reflection", "model_a".
    pub stage: String,
    /// The text that was judged.
    pub candidate: String,
    pub form: CandidateForm,
    pub verdict: Verdict,
}

/// Judges a candidate against the question's expected output.
#[allow(clippy::too_many_arguments)]
pub fn verify_against_ground_truth(
    backend: &dyn ChatBackend,
    templates: &TemplateSet,
    judge_model_id: &str,
    params: SamplingParams,
    question: &Question,
    candidate: &str,
    form: CandidateForm,
    stage: &str,
) -> Result<TruthCheck> {
    let extra = BTreeMap::from([
        ("expected", question.expected_output.as_str()),
        ("candidate", candidate),
    ]);
    let messages = templates.render("truth_judge", question, &extra)?;
    let verdict = adjudicate(
        backend,
        judge_model_id,
        params,
        messages,
        RequestMeta {
            question_id: question.id.clone(),
            sample_index: 0,
            stage: Stage::TruthJudge,
        },
    )?;
    Ok(TruthCheck {
        question_id: question.id.clone(),
        stage: stage.to_string(),
        candidate: candidate.to_string(),
        form,
        verdict,
    })
}

/// Answer-equivalence oracle used by majority voting.
pub trait EquivalenceJudge {
    fn equivalent(&self, a: &str, b: &str) -> Result<VerdictValue>;
}

/// Pure canonical-form equality; the offline stand-in for an LLM judge.
pub struct CanonicalEquivalence;

impl EquivalenceJudge for CanonicalEquivalence {
    fn equivalent(&self, a: &str, b: &str) -> Result<VerdictValue> {
        Ok(if canonicalize_answer(a) == canonicalize_answer(b) {
            VerdictValue::Accept
        } else {
            VerdictValue::Reject
        })
    }
}

/// LLM-backed equivalence judge for one question's answers.
pub struct LlmEquivalenceJudge<'a> {
    pub backend: &'a dyn ChatBackend,
    pub templates: &'a TemplateSet,
    pub model_id: &'a str,
    pub params: SamplingParams,
    pub question: &'a Question,
}

impl EquivalenceJudge for LlmEquivalenceJudge<'_> {
    fn equivalent(&self, a: &str, b: &str) -> Result<VerdictValue> {
        let extra = BTreeMap::from([("answer_a", a), ("answer_b", b)]);
        let messages = self
            .templates
            .render("majority_judge", self.question, &extra)?;
        let verdict = adjudicate(
            self.backend,
            self.model_id,
            self.params,
            messages,
            RequestMeta {
                question_id: self.question.id.clone(),
                sample_index: 0,
                stage: Stage::MajorityJudge,
            },
        )?;
        Ok(verdict.value)
    }
}

#[cfg(test)]
mod tests {
    use std::collections::VecDeque;
    use std::sync::Mutex;

    use proptest::prelude::*;

    use super::*;
    use crate::backend::Completion;
    use crate::error::Error;

    #[test]
    fn parses_clean_verdicts() {
        assert_eq!(parse_verdict("ACCEPT"), VerdictValue::Accept);
        assert_eq!(parse_verdict("REJECT"), VerdictValue::Reject);
        assert_eq!(parse_verdict(" accept. "), VerdictValue::Accept);
        assert_eq!(parse_verdict("Verdict: REJECT!"), VerdictValue::Reject);
        assert_eq!(parse_verdict("I ACCEPT this answer"), VerdictValue::Accept);
    }

    #[test]
    fn rejects_embedded_and_ambiguous_tokens() {
        assert_eq!(parse_verdict("UNACCEPTABLE"), VerdictValue::Unparseable);
        assert_eq!(parse_verdict("rejected"), VerdictValue::Unparseable);
        assert_eq!(parse_verdict("It matches."), VerdictValue::Unparseable);
        assert_eq!(parse_verdict(""), VerdictValue::Unparseable);
        assert_eq!(
            parse_verdict("ACCEPT, but one could also REJECT"),
            VerdictValue::Unparseable
        );
        assert_eq!(parse_verdict("ACCEPT/REJECT"), VerdictValue::Unparseable);
    }

    #[test]
    fn token_boundaries_are_non_alphabetic() {
        assert_eq!(parse_verdict("accept9"), VerdictValue::Accept);
        assert_eq!(parse_verdict("9accept"), VerdictValue::Accept);
        assert_eq!(parse_verdict("xacceptx"), VerdictValue::Unparseable);
    }

    proptest! {
        #[test]
        fn never_panics_and_stays_ternary(s in ".{0,200}") {
            let v = parse_verdict(&s);
            prop_assert!(matches!(
                v,
                VerdictValue::Accept | VerdictValue::Reject | VerdictValue::Unparseable
            ));
        }

        #[test]
        fn lone_accept_token_always_parses(
            prefix in "[0-9 .,!]{0,20}",
            suffix in "[0-9 .,!]{0,20}"
        ) {
            let text = format!("{prefix}accept{suffix}");
            prop_assert_eq!(parse_verdict(&text), VerdictValue::Accept);
        }

        #[test]
        fn parsing_is_case_insensitive(word in "(?i)accept") {
            prop_assert_eq!(parse_verdict(&word), VerdictValue::Accept);
        }
    }

    /// Backend that replays a fixed sequence of replies.
    struct SequenceBackend {
        replies: Mutex<VecDeque<String>>,
    }

    impl SequenceBackend {
        fn new(replies: &[&str]) -> Self {
            SequenceBackend {
                replies: Mutex::new(replies.iter().map(|s| s.to_string()).collect()),
            }
        }
    }

    impl ChatBackend for SequenceBackend {
        fn complete(&self, _request: &CompletionRequest) -> Result<Completion> {
            let content = self
                .replies
                .lock()
                .unwrap()
                .pop_front()
                .ok_or_else(|| Error::MalformedResponse("no scripted reply left".into()))?;
            Ok(Completion {
                raw_body: crate::backend::synthesize_chat_body(&content, "seq"),
                content,
                latency_ms: 0,
                cached: false,
            })
        }

        fn name(&self) -> &'static str {
            "sequence"
        }
    }

    fn meta() -> RequestMeta {
        RequestMeta {
            question_id: "q".into(),
            sample_index: 0,
            stage: Stage::TruthJudge,
        }
    }

    #[test]
    fn adjudicate_accepts_clean_first_reply_without_retry() {
        let backend = SequenceBackend::new(&["ACCEPT"]);
        let verdict = adjudicate(
            &backend,
            "judge",
            SamplingParams::greedy(16),
            vec![Message::user("judge this")],
            meta(),
        )
        .unwrap();
        assert_eq!(verdict.value, VerdictValue::Accept);
        assert_eq!(verdict.judge_raw, "ACCEPT");
        // Only one scripted reply existed, so no retry was sent.
    }

    #[test]
    fn adjudicate_retries_once_with_stricter_suffix() {
        let backend = crate::backend::RecordingBackend::new(SequenceBackend::new(&[
            "well, it matches",
            "REJECT",
        ]));
        let verdict = adjudicate(
            &backend,
            "judge",
            SamplingParams::greedy(16),
            vec![Message::user("judge this")],
            meta(),
        )
        .unwrap();
        assert_eq!(verdict.value, VerdictValue::Reject);
        assert_eq!(verdict.judge_raw, "REJECT");

        let requests = backend.requests();
        assert_eq!(requests.len(), 2);
        assert!(requests[1]
            .messages
            .last()
            .unwrap()
            .content
            .ends_with("Reply with exactly one word: ACCEPT or REJECT."));
    }

    #[test]
    fn adjudicate_records_unparseable_after_failed_retry() {
        let backend = SequenceBackend::new(&["hmm", "still unclear"]);
        let verdict = adjudicate(
            &backend,
            "judge",
            SamplingParams::greedy(16),
            vec![Message::user("judge this")],
            meta(),
        )
        .unwrap();
        assert_eq!(verdict.value, VerdictValue::Unparseable);
        assert_eq!(verdict.judge_raw, "still unclear");
    }

    #[test]
    fn candidate_prefers_extracted_answer() {
        let (text, form) = candidate_from(Some("42"), "long trace");
        assert_eq!(text, "42");
        assert_eq!(form, CandidateForm::ExtractedAnswer);

        let (text, form) = candidate_from(Some("   "), "long trace");
        assert_eq!(text, "long trace");
        assert_eq!(form, CandidateForm::FullTrace);

        let (text, form) = candidate_from(None, "long trace");
        assert_eq!(text, "long trace");
        assert_eq!(form, CandidateForm::FullTrace);
    }

    #[test]
    fn canonical_equivalence_matches_aliases() {
        let judge = CanonicalEquivalence;
        assert_eq!(
            judge.equivalent("2", " Two. ").unwrap(),
            VerdictValue::Accept
        );
        assert_eq!(judge.equivalent("2", "3").unwrap(), VerdictValue::Reject);
    }

    #[test]
    fn truth_verification_against_mock_backend() {
        use crate::backend::{MockBackend, MockScript, MockScriptEntry};

        let entry = MockScriptEntry {
            answer_distribution: BTreeMap::from([("4".to_string(), 1.0)]),
            greedy_answer: "4".to_string(),
            trace_template: None,
            critique_flip_up: 0.0,
            critique_flip_down: 0.0,
            expected_answer: None,
        };
        let backend = MockBackend::new(
            MockScript::shared(BTreeMap::from([("q1".to_string(), entry)])).unwrap(),
        );
        let templates = TemplateSet::builtin();
        let question = Question {
            id: "q1".into(),
            input: "What is 2+2?".into(),
            instruction: None,
            expected_output: "4".into(),
            data_source: None,
        };

        let check = verify_against_ground_truth(
            &backend,
            &templates,
            "judge",
            SamplingParams::greedy(16),
            &question,
            "four",
            CandidateForm::ExtractedAnswer,
            "final",
        )
        .unwrap();
        assert_eq!(check.verdict.value, VerdictValue::Accept);
        assert_eq!(check.stage, "final");
        assert_eq!(check.form, CandidateForm::ExtractedAnswer);

        let wrong = verify_against_ground_truth(
            &backend,
            &templates,
            "judge",
            SamplingParams::greedy(16),
            &question,
            "5",
            CandidateForm::ExtractedAnswer,
            "final",
        )
        .unwrap();
        assert_eq!(wrong.verdict.value, VerdictValue::Reject);
    }
}
