mod config;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use tierwise::backends::Backends;
use tierwise::classifier::{evaluate, export_finetune, Prediction};
use tierwise::corpus::Corpus;
use tierwise::cost::{compute_report_with, distribution_from_routes, usage_from_routes, CostOptions};
use tierwise::io;
use tierwise::labeling::{collect_profiles, label_dataset, CollectOptions, LabeledRecord, SuccessProfile};
use tierwise::router::{summarize, RouteOptions, Router};

use config::{Overrides, Run};

#[derive(Parser)]
#[command(
    name = "tierwise",
    version,
    about = "Complexity labeling and cost-aware routing across model tiers"
)]
struct Cli {
    /// Run configuration (TOML, or JSON by extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for the train/test split.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    concurrency: Option<usize>,
    /// Serve every tier from this replay store.
    #[arg(long, global = true, value_name = "STORE")]
    replay: Option<PathBuf>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate raw task records and write the canonical corpus.
    Ingest {
        path: PathBuf,
        #[arg(long)]
        source_name: Option<String>,
    },
    /// Run M trials per (task, tier) and write the audit log and profiles.
    Collect {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Clean and label profiles.
    Label {
        #[arg(long)]
        profiles: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Split a labeled set and write fine-tune train/test files.
    ExportFinetune {
        #[arg(long)]
        labeled: Option<PathBuf>,
    },
    /// Score a classifier against a labeled test set.
    EvalClassifier {
        #[arg(long)]
        test: Option<PathBuf>,
        /// Recorded `{task_id, level}` rows; overrides the configured classifier.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Route each task to one tier and report the cost.
    Route {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Charge the classifier call at the smallest tier's cost.
        #[arg(long)]
        include_classifier_overhead: bool,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let overrides = Overrides {
        seed: cli.seed,
        concurrency: cli.concurrency,
        replay: cli.replay,
        out_dir: cli.out_dir,
    };
    let run = config::load(cli.config.as_deref(), &overrides)?;
    std::fs::create_dir_all(&run.out_dir).with_context(|| format!("creating {}", run.out_dir.display()))?;
    match cli.command {
        Command::Ingest { path, source_name } => cmd_ingest(&run, &path, source_name),
        Command::Collect { corpus } => cmd_collect(&run, corpus.as_deref()),
        Command::Label { profiles, corpus } => cmd_label(&run, profiles.as_deref(), corpus.as_deref()),
        Command::ExportFinetune { labeled } => cmd_export_finetune(&run, labeled.as_deref()),
        Command::EvalClassifier { test, predictions } => cmd_eval(&run, test.as_deref(), predictions.as_deref()),
        Command::Route {
            corpus,
            predictions,
            include_classifier_overhead,
        } => cmd_route(
            &run,
            corpus.as_deref(),
            predictions.as_deref(),
            include_classifier_overhead,
        ),
    }
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    let (corpus, report) = Corpus::load(path).with_context(|| format!("loading corpus {}", path.display()))?;
    if !report.rejected.is_empty() {
        anyhow::bail!(
            "corpus {} has {} invalid record(s); re-run ingest",
            path.display(),
            report.rejected.len()
        );
    }
    Ok(corpus)
}

fn cmd_ingest(run: &Run, path: &Path, source_name: Option<String>) -> Result<()> {
    let name = source_name.unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "corpus".into())
    });
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let (corpus, report) = Corpus::ingest(name, BufReader::new(file))?;
    let out = run.out("corpus.jsonl");
    corpus.save(&out)?;
    io::write_json(&run.out("ingest_report.json"), &report)?;
    println!(
        "accepted {} task(s), rejected {}",
        report.accepted,
        report.rejected.len()
    );
    for r in &report.rejected {
        println!("  line {}: {}", r.line, r.reason);
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_collect(run: &Run, corpus: Option<&Path>) -> Result<()> {
    let corpus = load_corpus(&run.corpus_path(corpus))?;
    let tiers = run.tiers()?;
    let backends = Backends::from_config(tiers)?;
    let verifier = run.verifier()?;
    let c = &run.config;
    let opts = CollectOptions {
        trials: c.trials,
        temperature: c.temperature,
        max_tokens: c.max_tokens,
        verify_timeout_ms: c.verify_timeout_ms,
        concurrency: c.concurrency,
    };
    let collection = collect_profiles(&corpus, tiers, &backends, verifier.as_ref(), &opts)?;
    io::write_jsonl(&run.out("audit.jsonl"), &collection.outcomes)?;
    io::write_jsonl(&run.out("profiles.jsonl"), &collection.profiles)?;
    io::write_jsonl(&run.out("incomplete.jsonl"), &collection.incomplete)?;
    println!(
        "{} trial(s), {} complete profile(s), {} incomplete (task, tier) pair(s)",
        collection.outcomes.len(),
        collection.profiles.len(),
        collection.incomplete.len()
    );
    Ok(())
}

fn cmd_label(run: &Run, profiles: Option<&Path>, corpus: Option<&Path>) -> Result<()> {
    let corpus = load_corpus(&run.corpus_path(corpus))?;
    let profiles_path = profiles
        .map(Path::to_path_buf)
        .unwrap_or_else(|| run.out("profiles.jsonl"));
    let profiles: Vec<SuccessProfile> = io::read_jsonl(&profiles_path)?;
    let dataset = label_dataset(&corpus, &profiles, run.config.scheme, &run.table)?;
    io::write_jsonl(&run.out("labeled.jsonl"), &dataset.records)?;
    io::write_json(
        &run.out("cleaning_report.json"),
        &json!({
            "removed": dataset.cleaning.removed,
            "reason": dataset.cleaning.reason,
            "unprofiled": dataset.unprofiled,
        }),
    )?;

    let mut histogram: BTreeMap<u8, usize> = run.config.scheme.levels().map(|l| (l, 0)).collect();
    for r in &dataset.records {
        *histogram.entry(r.level).or_default() += 1;
    }
    println!("labeled {} task(s) ({})", dataset.records.len(), run.config.scheme);
    for (level, n) in histogram {
        println!("  level {level}: {n}");
    }
    println!("removed {} all-zero task(s)", dataset.cleaning.removed.len());
    for id in &dataset.cleaning.removed {
        println!("  {id}");
    }
    if !dataset.unprofiled.is_empty() {
        println!("skipped {} task(s) without a profile", dataset.unprofiled.len());
    }
    Ok(())
}

fn cmd_export_finetune(run: &Run, labeled: Option<&Path>) -> Result<()> {
    let path = labeled
        .map(Path::to_path_buf)
        .unwrap_or_else(|| run.out("labeled.jsonl"));
    let records: Vec<LabeledRecord> = io::read_jsonl(&path)?;
    let (train, test) = run.split().partition(&records)?;
    io::write_jsonl(&run.out("train.jsonl"), &export_finetune(&train)?)?;
    io::write_jsonl(&run.out("test.jsonl"), &export_finetune(&test)?)?;
    io::write_jsonl(&run.out("train_labeled.jsonl"), &train)?;
    io::write_jsonl(&run.out("test_labeled.jsonl"), &test)?;
    println!("train {} / test {} (seed {})", train.len(), test.len(), run.config.seed);
    Ok(())
}

fn cmd_eval(run: &Run, test: Option<&Path>, predictions: Option<&Path>) -> Result<()> {
    let path = test
        .map(Path::to_path_buf)
        .unwrap_or_else(|| run.out("test_labeled.jsonl"));
    let truth: Vec<LabeledRecord> = io::read_jsonl(&path)?;
    let scheme = run.config.scheme;
    if let Some(r) = truth.iter().find(|r| r.scheme_id != scheme) {
        anyhow::bail!(
            "test record {:?} uses scheme {} but the config says {scheme}",
            r.task_id,
            r.scheme_id
        );
    }
    let classifier = run.classifier(predictions)?;
    let preds: Vec<Prediction> = truth
        .iter()
        .map(|r| classifier.predict(&r.task_id, &r.prompt))
        .collect::<Result<_, _>>()?;
    let matrix = evaluate(&truth, &preds, scheme)?;
    io::write_jsonl(&run.out("predictions.jsonl"), &preds)?;
    io::write_json(&run.out("eval_report.json"), &matrix.report())?;
    print!("{}", matrix.render_table());
    Ok(())
}

fn cmd_route(run: &Run, corpus: Option<&Path>, predictions: Option<&Path>, overhead_flag: bool) -> Result<()> {
    let corpus = load_corpus(&run.corpus_path(corpus))?;
    let tiers = run.tiers()?;
    let policy = run.policy()?;
    let backends = Backends::from_config(tiers)?;
    let verifier = run.verifier()?;
    let classifier = run.classifier(predictions)?;
    let c = &run.config;
    let router = Router {
        policy,
        tiers,
        backends: &backends,
        classifier: classifier.as_ref(),
        verifier: Some(verifier.as_ref()),
        options: RouteOptions {
            temperature: c.temperature,
            max_tokens: c.max_tokens,
            verify_timeout_ms: c.verify_timeout_ms,
            concurrency: c.concurrency,
        },
    };
    router.check()?;
    let records = match router.route_batch(&corpus) {
        Ok(r) => r,
        Err(e) => {
            for (task, err) in &e.failures {
                eprintln!("  {task}: {err}");
            }
            return Err(e.into());
        }
    };
    io::write_jsonl(&run.out("route_log.jsonl"), &records)?;
    let summary = summarize(&records, tiers);
    for (id, (n, f)) in summary
        .tier_ids
        .iter()
        .zip(summary.dispatch_counts.iter().zip(&summary.dispatch_fractions))
    {
        println!("{id:<12}{n:>6}{f:>8.3}");
    }

    let usage = usage_from_routes(&records, tiers)?;
    let dist = distribution_from_routes(&records, tiers)?;
    let opts = CostOptions {
        include_classifier_overhead: overhead_flag || c.include_classifier_overhead,
    };
    match compute_report_with(&dist, &opts) {
        Ok(report) => {
            io::write_json(
                &run.out("cost_report.json"),
                &json!({ "report": report, "usage": usage }),
            )?;
            let ids: Vec<String> = tiers.tiers().iter().map(|t| t.tier_id.clone()).collect();
            print!("{}", report.render_table(&ids));
        }
        Err(e) => {
            // Undefined, not failed: keep the route log, record why there is no figure.
            io::write_json(
                &run.out("cost_report.json"),
                &json!({ "undefined": e.to_string(), "usage": usage }),
            )?;
            println!("cost report undefined: {e}");
        }
    }
    Ok(())
}
