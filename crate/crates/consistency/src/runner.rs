//! Run orchestration: config and dataset loading, backend construction,
//! the worker pool, and artifact writing.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use crate::backend::cache::CachedBackend;
use crate::backend::live::{LiveBackend, LiveConfig, RetryPolicy, API_KEY_ENV};
use crate::backend::mock::{MockBackend, MockScript};
use crate::backend::{ChatBackend, CountingBackend};
use crate::config::Config;
use crate::dataset::{load_dataset, subsample, Dataset};
use crate::error::{Error, Result};
use crate::pipeline::{run_question, RunContext};
use crate::report::{
    run_id, write_manifest, write_report_csv, write_report_json, FailureDetail, QuestionReport,
    RunManifest, RunMeta, RunReport,
};
use crate::types::Strategy;

/// Everything the `run` command collects before starting.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub strategy: Strategy,
    pub dataset_path: PathBuf,
    /// Seeded random subsample size; the whole dataset when unset.
    pub limit: Option<u32>,
    /// Overrides `run.seed` from the config when set.
    pub seed: Option<u64>,
    pub config_path: Option<PathBuf>,
    /// Mock script path; a live backend is used when unset.
    pub mock_path: Option<PathBuf>,
    /// Directory for report.json, report.csv, manifest.json, and the
    /// response cache. Nothing is written when unset.
    pub out_dir: Option<PathBuf>,
    /// Allow reusing a non-empty output directory.
    pub resume: bool,
    /// Overrides the configured worker count when set.
    pub parallelism: Option<u32>,
}

/// What a finished run hands back to the CLI.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub manifest: RunManifest,
    pub out_dir: Option<PathBuf>,
}

enum BackendSetup {
    Mock {
        backend: Arc<CountingBackend<MockBackend>>,
    },
    Live {
        backend: Arc<dyn ChatBackend>,
        counter: Arc<CountingBackend<LiveBackend>>,
        cache: Option<Arc<CachedBackend>>,
    },
}

impl BackendSetup {
    fn backend(&self) -> Arc<dyn ChatBackend> {
        match self {
            BackendSetup::Mock { backend } => backend.clone(),
            BackendSetup::Live { backend, .. } => backend.clone(),
        }
    }

    fn mode(&self) -> &'static str {
        match self {
            BackendSetup::Mock { .. } => "mock",
            BackendSetup::Live { .. } => "live",
        }
    }

    fn backend_calls(&self) -> u64 {
        match self {
            BackendSetup::Mock { backend } => backend.calls(),
            BackendSetup::Live { counter, .. } => counter.calls(),
        }
    }

    fn cache_stats(&self) -> Option<(u64, u64)> {
        match self {
            BackendSetup::Mock { .. } => None,
            BackendSetup::Live { cache, .. } => cache.as_ref().map(|c| (c.hits(), c.misses())),
        }
    }
}

fn build_backend(options: &RunOptions, config: &Config) -> Result<BackendSetup> {
    if let Some(script_path) = &options.mock_path {
        let script = MockScript::from_path(script_path)?;
        return Ok(BackendSetup::Mock {
            backend: Arc::new(CountingBackend::new(MockBackend::new(script))),
        });
    }

    let live = LiveBackend::new(LiveConfig {
        base_url: config.backend.base_url.clone(),
        api_key: std::env::var(API_KEY_ENV).ok(),
        timeout_secs: config.backend.timeout_secs,
        retry: RetryPolicy {
            delays_ms: config.backend.retry_delays_ms.clone(),
        },
    });
    let counter = Arc::new(CountingBackend::new(live));

    let cache_dir = options
        .out_dir
        .as_ref()
        .filter(|_| config.backend.cache)
        .map(|dir| dir.join("cache"));
    match cache_dir {
        Some(dir) => {
            let cache = Arc::new(CachedBackend::new(counter.clone(), dir)?);
            Ok(BackendSetup::Live {
                backend: cache.clone(),
                counter,
                cache: Some(cache),
            })
        }
        None => Ok(BackendSetup::Live {
            backend: counter.clone(),
            counter,
            cache: None,
        }),
    }
}

fn prepare_out_dir(dir: &Path, resume: bool) -> Result<()> {
    if dir.exists() {
        if !dir.is_dir() {
            return Err(Error::Config(format!(
                "output path {} exists and is not a directory",
                dir.display()
            )));
        }
        let occupied = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .next()
            .is_some();
        if occupied && !resume {
            return Err(Error::Config(format!(
                "output directory {} is not empty; pass --resume to reuse it",
                dir.display()
            )));
        }
    } else {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn dataset_digest(path: &Path) -> Result<String> {
    let raw = std::fs::read(path)
        .map_err(|e| Error::Dataset(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&raw)))
}

fn effective_parallelism(options: &RunOptions, config: &Config) -> u32 {
    if let Some(p) = options.parallelism {
        return p.max(1);
    }
    if options.strategy == Strategy::SelfConsistency {
        if let Some(p) = config.self_consistency.parallelism {
            return p.max(1);
        }
    }
    config.run.parallelism.max(1)
}

/// Processes every question with a pool of worker threads, keeping the
/// results in dataset order.
fn process_questions(
    ctx: &RunContext,
    strategy: Strategy,
    dataset: &Dataset,
    workers: u32,
) -> Vec<Result<crate::types::StrategyOutcome>> {
    let questions = &dataset.questions;
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<crate::types::StrategyOutcome>>>> =
        questions.iter().map(|_| Mutex::new(None)).collect();

    let workers = (workers as usize).min(questions.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= questions.len() {
                    break;
                }
                let result = run_question(ctx, strategy, &questions[index]);
                *slots[index].lock().unwrap() = Some(result);
            });
        }
    });

    slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .unwrap()
                .expect("worker pool visits every index")
        })
        .collect()
}

/// Runs one strategy over one dataset and writes artifacts when an output
/// directory is given.
pub fn execute_run(options: &RunOptions) -> Result<RunOutput> {
    let started_at_ms = unix_ms();

    let config = match &options.config_path {
        Some(path) => Config::from_path(path)?,
        None => Config::default(),
    };
    let seed = options.seed.unwrap_or(config.run.seed);

    if options.limit == Some(0) {
        return Err(Error::Config("--limit must be at least 1".into()));
    }
    let full = load_dataset(&options.dataset_path)?;
    let dataset = match options.limit {
        Some(limit) => subsample(&full, limit as usize, seed),
        None => full,
    };
    let digest = dataset_digest(&options.dataset_path)?;

    if let Some(dir) = &options.out_dir {
        prepare_out_dir(dir, options.resume)?;
    }

    let setup = build_backend(options, &config)?;
    let backend_mode = setup.mode().to_string();
    let ctx = RunContext::new(setup.backend(), config.clone(), seed)?;

    let workers = effective_parallelism(options, &config);
    let results = process_questions(&ctx, options.strategy, &dataset, workers);

    let mut outcomes = Vec::new();
    let mut questions_report = Vec::new();
    let mut failed = 0u32;
    let mut any_transport = false;
    for (question, result) in dataset.questions.iter().zip(results) {
        match result {
            Ok(outcome) => {
                questions_report.push(QuestionReport::ok(outcome.clone()));
                outcomes.push(outcome);
            }
            Err(err) => {
                failed += 1;
                let transport = err.is_transport();
                any_transport |= transport;
                let (stage, message) = match &err {
                    Error::Stage { stage, message } => (stage.clone(), message.clone()),
                    other => ("run".to_string(), other.to_string()),
                };
                log::warn!("question {} failed at {stage}: {message}", question.id);
                questions_report.push(QuestionReport::failed(
                    &question.id,
                    FailureDetail {
                        stage,
                        message,
                        transport,
                    },
                ));
            }
        }
    }

    if outcomes.is_empty() {
        let total = dataset.questions.len();
        if any_transport {
            return Err(Error::Transport {
                attempts: config.backend.retry_delays_ms.len() as u32 + 1,
                message: format!("all {total} question(s) failed; backend unreachable"),
            });
        }
        return Err(Error::Analysis(format!(
            "all {total} question(s) failed; see the per-question log output"
        )));
    }

    let summary = crate::analysis::summarize(&outcomes, failed)?;
    let meta = RunMeta {
        seed,
        strategy: options.strategy,
        backend_mode,
        config_digest: config.digest(),
        dataset_digest: digest,
    };
    let report = RunReport {
        run: meta.clone(),
        summary,
        questions: questions_report,
    };

    let (cache_hits, cache_misses) = match setup.cache_stats() {
        Some((hits, misses)) => (Some(hits), Some(misses)),
        None => (None, None),
    };
    let manifest = RunManifest {
        run_id: run_id(&meta),
        seed,
        strategy: options.strategy,
        backend_mode: meta.backend_mode.clone(),
        config_digest: meta.config_digest.clone(),
        dataset_digest: meta.dataset_digest.clone(),
        dataset_path: options.dataset_path.display().to_string(),
        question_count: dataset.questions.len() as u32,
        backend_calls: Some(setup.backend_calls()),
        cache_hits,
        cache_misses,
        started_at_ms,
        finished_at_ms: unix_ms(),
    };

    if let Some(dir) = &options.out_dir {
        write_report_json(&dir.join("report.json"), &report)?;
        write_report_csv(&dir.join("report.csv"), &report)?;
        write_manifest(&dir.join("manifest.json"), &manifest)?;
    }

    Ok(RunOutput {
        report,
        manifest,
        out_dir: options.out_dir.clone(),
    })
}
