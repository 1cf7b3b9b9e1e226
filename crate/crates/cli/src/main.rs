//! `tablematch`: match entities across tables, generate synthetic data,
//! benchmark merge strategies and score predictions.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use tablematch_core::bench::{scaling_report, write_report_csv, BenchConfig};
use tablematch_core::embedding::EmbedderSpec;
use tablematch_core::evaluation::score;
use tablematch_core::io::{read_truth, read_tuples, write_json};
use tablematch_core::pipeline::{run_pipeline, RunConfig};
use tablematch_core::synth::{generate_synthetic, write_synthetic, SynthParams};

#[derive(Parser, Debug)]
#[command(name = "tablematch", version)]
#[command(about = "Unsupervised entity matching across many tables with a shared schema")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the matching pipeline described by a config file
    Match(MatchArgs),
    /// Write synthetic tables and their truth file
    Gen(GenArgs),
    /// Compare pairwise, chain and hierarchical merging as S grows
    Bench(BenchArgs),
    /// Score predicted tuples against a truth file
    Score(ScoreArgs),
}

#[derive(Args, Debug)]
struct MatchArgs {
    /// TOML file with `tables`, optional `truth` and `out_dir`, and pipeline parameters
    #[arg(long, env = "TABLEMATCH_CONFIG")]
    config: PathBuf,
    #[arg(long, env = "TABLEMATCH_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "TABLEMATCH_PARALLELISM")]
    parallelism: Option<usize>,
    /// `hashing`, or the URL of an embedding service
    #[arg(long, env = "TABLEMATCH_EMBEDDER")]
    embedder: Option<String>,
    /// Output directory, overriding `out_dir`
    #[arg(long, env = "TABLEMATCH_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, default_value_t = 4)]
    tables: usize,
    #[arg(long, default_value_t = 100)]
    rows: usize,
    #[arg(long, default_value_t = 50)]
    clusters: usize,
    /// Per-character swap/drop probability in duplicate copies
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, env = "TABLEMATCH_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "TABLEMATCH_OUT")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// TOML bench config; defaults are used when omitted
    #[arg(long, env = "TABLEMATCH_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "TABLEMATCH_SEED")]
    seed: Option<u64>,
    /// CSV report path; stdout when omitted
    #[arg(long, env = "TABLEMATCH_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    /// Predicted tuples (JSONL)
    #[arg(long)]
    pred: PathBuf,
    /// Truth tuples (JSONL)
    #[arg(long)]
    truth: PathBuf,
    /// Also write the report to this file
    #[arg(long, env = "TABLEMATCH_OUT")]
    out: Option<PathBuf>,
}

fn embedder_from_flag(flag: &str, current: &EmbedderSpec) -> Result<EmbedderSpec> {
    if flag == "hashing" {
        return Ok(EmbedderSpec {
            endpoint: None,
            ..EmbedderSpec::hashing(current.dim, current.ngram_range)
        });
    }
    if flag.starts_with("http://") || flag.starts_with("https://") {
        return Ok(EmbedderSpec {
            batch_size: current.batch_size,
            timeout_secs: current.timeout_secs,
            ..EmbedderSpec::remote(flag, current.dim)
        });
    }
    Err(tablematch_core::Error::InvalidConfig(format!(
        "--embedder must be `hashing` or an http(s) URL, got {flag:?}"
    ))
    .into())
}

fn run_match(args: MatchArgs) -> Result<()> {
    let mut run = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        run.params.seed = seed;
    }
    if let Some(p) = args.parallelism {
        run.params.parallelism = p;
    }
    if let Some(e) = &args.embedder {
        run.params.embedder = embedder_from_flag(e, &run.params.embedder)?;
    }
    if let Some(out) = args.out {
        run.out_dir = out;
    }
    let manifest = run_pipeline(&run)?;
    let summary = json!({
        "tuples": manifest.pruned_tuples,
        "candidates": manifest.candidate_tuples,
        "selected_attributes": manifest.attributes.selected(),
        "score": manifest.score,
        "manifest": manifest.outputs.manifest,
        "total_seconds": manifest.total_seconds,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn run_gen(args: GenArgs) -> Result<()> {
    let params = SynthParams {
        tables: args.tables,
        rows: args.rows,
        clusters: args.clusters,
        noise: args.noise,
        seed: args.seed,
    };
    let data = generate_synthetic(&params)?;
    let (tables, truth) = write_synthetic(&args.out, &data)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({ "tables": tables, "truth": truth, "truth_tuples": data.truth.len() }))?
    );
    Ok(())
}

fn run_bench(args: BenchArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => BenchConfig::load(path)?,
        None => BenchConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let runs = scaling_report(&cfg)?;
    match &args.out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_report_csv(&runs, BufWriter::new(file))?;
        }
        None => write_report_csv(&runs, io::stdout().lock())?,
    }
    let mut err = io::stderr().lock();
    writeln!(err, "{:<13} {:>4} {:>6} {:>12} {:>16}", "strategy", "S", "n", "median_s", "distance_evals")?;
    for r in &runs {
        writeln!(
            err,
            "{:<13} {:>4} {:>6} {:>12.4} {:>16}",
            r.strategy.name(),
            r.tables,
            r.n,
            r.wall_seconds,
            r.distance_evals
        )?;
    }
    Ok(())
}

fn run_score(args: ScoreArgs) -> Result<()> {
    let pred = read_tuples(&args.pred)?;
    let truth = read_truth(&args.truth)?;
    let report = score(&pred, &truth);
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    match e.downcast_ref::<tablematch_core::Error>() {
        Some(inner) => inner.kind(),
        None if e.downcast_ref::<io::Error>().is_some() => "Io",
        None => "Other",
    }
}

fn report_error(kind: &str, message: &str) {
    let body = json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{body}");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report_error("Usage", e.to_string().trim_end());
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Match(a) => run_match(a),
        Command::Gen(a) => run_gen(a),
        Command::Bench(a) => run_bench(a),
        Command::Score(a) => run_score(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(error_kind(&e), &format!("{e:#}"));
            ExitCode::FAILURE
        }
    }
}

