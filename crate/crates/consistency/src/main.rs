//! Command-line interface.
//!
//! Exit codes: 1 for configuration or usage problems, 2 for dataset
//! problems, 3 when the backend is unreachable.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use consistency::analysis::{
    compare_runs, vote_probability_exact, vote_probability_mc, VoteOracleSpec,
};
use consistency::backend::live::API_KEY_ENV;
use consistency::error::Error;
use consistency::report::{
    read_run_report, render_comparison, write_comparison_csv, write_plot_csv,
};
use consistency::runner::{execute_run, RunOptions, RunOutput};
use consistency::types::Strategy;

#[derive(Parser)]
#[command(
    name = "consistency",
    version,
    about = "Sampling-based reasoning strategies with LLM-judge verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one strategy over a JSONL dataset.
    Run {
        /// greedy, self-consistency, dual-model, or self-reflection.
        #[arg(long, value_parser = parse_strategy)]
        strategy: Strategy,
        /// JSONL dataset, one question per line.
        #[arg(long)]
        dataset: PathBuf,
        /// Seeded random subsample of this many questions.
        #[arg(long)]
        limit: Option<u32>,
        /// Run seed; overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// TOML config file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Mock script JSON; the run talks to a live endpoint when omitted.
        #[arg(long)]
        mock: Option<PathBuf>,
        /// Output directory for report.json, report.csv, and manifest.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Reuse a non-empty output directory (and its response cache).
        #[arg(long)]
        resume: bool,
        /// Worker threads; overrides the configured count.
        #[arg(long)]
        parallelism: Option<u32>,
    },
    /// Compare two or more finished runs.
    Report {
        /// Run directories, each containing a report.json.
        #[arg(required = true, num_args = 2..)]
        run_dirs: Vec<PathBuf>,
        /// Directory for comparison.csv and plot.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict majority-vote accuracy for an answer distribution.
    Simulate {
        /// Comma-separated draw probabilities, e.g. "0.6,0.2,0.2".
        #[arg(long)]
        dist: String,
        /// Number of draws per vote.
        #[arg(long, default_value_t = 6)]
        n: u32,
        /// Index of the correct answer within --dist.
        #[arg(long, default_value_t = 0)]
        correct_index: usize,
        /// Monte-Carlo trials to run alongside the exact result.
        #[arg(long, default_value_t = 100_000)]
        trials: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    Strategy::parse(s).map_err(|e| e.to_string())
}

fn exit_code(err: &Error) -> i32 {
    if err.is_transport() {
        return 3;
    }
    match err {
        Error::Dataset(_) => 2,
        _ => 1,
    }
}

fn print_run_output(output: &RunOutput) {
    let summary = &output.report.summary;
    println!("strategy: {}", summary.strategy.as_str());
    println!(
        "questions: {} ({} failed)",
        summary.total, summary.failed_questions
    );
    println!(
        "verdicts: {} accept, {} reject, {} unparseable",
        summary.accepted, summary.rejected, summary.unparseable
    );
    match summary.acceptance_rate {
        Some(rate) => println!("acceptance rate: {:.1}%", rate * 100.0),
        None => println!("acceptance rate: undefined (no completed questions)"),
    }
    if let Some(subset) = summary.accepted_subset_accuracy {
        println!("accepted-subset accuracy: {:.1}%", subset * 100.0);
    }
    if summary.tie_break_count > 0 {
        println!("tie-broken votes: {}", summary.tie_break_count);
    }
    if let Some(dir) = &output.out_dir {
        println!("artifacts: {}", dir.display());
    }
}

fn cmd_run(options: RunOptions) -> consistency::error::Result<()> {
    if options.mock_path.is_none() && std::env::var(API_KEY_ENV).is_err() {
        return Err(Error::Config(format!(
            "live mode requires the {API_KEY_ENV} environment variable; pass --mock to run offline"
        )));
    }
    let output = execute_run(&options)?;
    print_run_output(&output);
    Ok(())
}

fn cmd_report(run_dirs: &[PathBuf], out: Option<&PathBuf>) -> consistency::error::Result<()> {
    let mut summaries = Vec::new();
    for dir in run_dirs {
        summaries.push(read_run_report(dir)?.summary);
    }
    let comparison = compare_runs(&summaries)?;
    print!("{}", render_comparison(&comparison));
    if let Some(dir) = out {
        write_comparison_csv(&dir.join("comparison.csv"), &comparison)?;
        write_plot_csv(&dir.join("plot.csv"), &comparison)?;
        println!(
            "\nwrote {} and {}",
            dir.join("comparison.csv").display(),
            dir.join("plot.csv").display()
        );
    }
    Ok(())
}

fn cmd_simulate(
    dist: &str,
    n: u32,
    correct_index: usize,
    trials: u32,
    seed: u64,
) -> consistency::error::Result<()> {
    let mut weights = Vec::new();
    for part in dist.split(',') {
        let p: f64 = part
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("--dist entry {part:?} is not a number")))?;
        weights.push(p);
    }
    if correct_index >= weights.len() {
        return Err(Error::Config(format!(
            "--correct-index {correct_index} is out of range for {} probabilities",
            weights.len()
        )));
    }
    let named: Vec<(String, f64)> = weights
        .iter()
        .enumerate()
        .map(|(i, p)| (format!("a{i}"), *p))
        .collect();
    let spec = VoteOracleSpec {
        distribution: named.iter().map(|(a, p)| (a.clone(), *p)).collect(),
        n,
        correct_answer: format!("a{correct_index}"),
        tie_break: Default::default(),
    };

    let exact = vote_probability_exact(&spec)?;
    let mc = vote_probability_mc(&spec, trials, seed)?;
    println!("distribution: {dist} (correct: index {correct_index}), n = {n}");
    println!("exact vote accuracy: {exact:.6}");
    println!(
        "monte carlo: {:.6} +/- {:.6} ({} trials, seed {seed})",
        mc.estimate, mc.std_error, mc.trials
    );
    Ok(())
}

fn dispatch(cli: Cli) -> consistency::error::Result<()> {
    match cli.command {
        Command::Run {
            strategy,
            dataset,
            limit,
            seed,
            config,
            mock,
            out,
            resume,
            parallelism,
        } => cmd_run(RunOptions {
            strategy,
            dataset_path: dataset,
            limit,
            seed,
            config_path: config,
            mock_path: mock,
            out_dir: out,
            resume,
            parallelism,
        }),
        Command::Report { run_dirs, out } => cmd_report(&run_dirs, out.as_ref()),
        Command::Simulate {
            dist,
            n,
            correct_index,
            trials,
            seed,
        } => cmd_simulate(&dist, n, correct_index, trials, seed),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // Usage errors are config errors (exit 1); clap's default exit 2 would
    // collide with the dataset-error code.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = i32::from(err.use_stderr());
            let _ = err.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = dispatch(cli) {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
