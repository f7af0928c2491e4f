//! Sampling-based reasoning strategies over chat-completion backends,
//! with LLM-judge verification and an offline mock backend for
//! reproducible experiments.
//!
//! The crate runs a question set through one of four strategies:
//!
//! - **greedy**: one temperature-0 sample, the baseline;
//! - **self_consistency**: n stochastic samples, answers extracted at low
//!   temperature, equivalence-judged majority vote;
//! - **dual_model**: two models solve independently, a judge gates on
//!   whether their solutions agree, disagreement means abstention;
//! - **self_reflection**: solve, critique, revise, with ground-truth
//!   checks before and after.
//!
//! Chosen answers are verified by an LLM judge against the dataset's
//! expected outputs, yielding ACCEPT/REJECT/UNPARSEABLE verdicts that the
//! [`analysis`] module aggregates and compares across runs. The
//! [`backend::mock`] backend replays scripted answer distributions
//! deterministically, so whole runs (and the acceptance suite) work
//! offline, and [`analysis::vote_probability_exact`] provides an
//! independent prediction of vote accuracy to check measured rates
//! against.

pub mod analysis;
pub mod backend;
pub mod canonical;
pub mod config;
pub mod dataset;
pub mod error;
pub mod pipeline;
pub mod prompt;
pub mod report;
pub mod rng;
pub mod runner;
pub mod types;
pub mod verification;

pub use backend::{ChatBackend, Completion, CompletionRequest};
pub use config::Config;
pub use error::{Error, Result};
pub use types::{Question, ReasoningSample, Strategy, StrategyOutcome, Verdict, VerdictValue};
