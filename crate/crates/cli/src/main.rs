use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use plyeval_core::backend::{build_generator, BackendConfig};
use plyeval_core::case::{read_dataset, write_dataset, Mode};
use plyeval_core::catalog::Catalog;
use plyeval_core::extract::Strategy;
use plyeval_core::generator::{generate, GenSpec};
use plyeval_core::harness::{
    effective_records, extract_evaluator, extract_parser, read_jsonl, read_scores, reports_from_scores, run_plan,
    score_records, to_jsonl, write_file, write_scores, ExtractionRecord, RunRecord,
};
use plyeval_core::prompt::Templates;
use plyeval_core::report::{render_csv, render_table};

#[derive(Parser)]
#[command(name = "plyeval", version, about = "Generate, run and score 3-ply legal argument evaluations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset of case triples.
    Generate {
        #[arg(long)]
        mode: Mode,
        #[arg(long, default_value_t = 30)]
        count: usize,
        #[arg(long, default_value_t = 12)]
        complexity: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        max_attempts: Option<u32>,
    },
    /// Execute a run plan.
    Run {
        #[arg(long)]
        plan: PathBuf,
    },
    /// Extract asserted factors from a run log.
    Extract {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long, default_value = "parser")]
        strategy: Strategy,
        /// TOML file with a single backend table, for the evaluator strategy.
        #[arg(long)]
        evaluator: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        templates: Option<PathBuf>,
    },
    /// Score a run log against its dataset.
    Score {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Extraction records to score instead of parsing the log directly.
        #[arg(long)]
        extractions: Option<PathBuf>,
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Print aggregated results from one or more scores files or directories.
    Report {
        #[arg(long, required = true, num_args = 1..)]
        scores: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        /// Add pooled figures and item counts.
        #[arg(long)]
        verbose: bool,
    },
    /// Print the argument prompt for one triple.
    RenderPrompt {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        triple: String,
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        templates: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
}

fn catalog(path: Option<&Path>) -> Result<Catalog> {
    Catalog::load(path).context("loading factor catalog")
}

async fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { mode, count, complexity, seed, out, catalog: cat, max_attempts } => {
            let cat = catalog(cat.as_deref())?;
            let mut spec = GenSpec::new(mode, count, complexity, seed);
            if let Some(n) = max_attempts {
                spec.max_attempts = n;
            }
            let triples = generate(&spec, &cat)?;
            write_dataset(&out, &triples)?;
            eprintln!("wrote {} {} triples to {}", triples.len(), mode.as_str(), out.display());
        }
        Command::Run { plan } => {
            let outcome = run_plan(&plan).await?;
            eprintln!(
                "run {}: {} requested, {} resumed, {} failed; outputs in {}",
                outcome.run_id,
                outcome.requested,
                outcome.skipped,
                outcome.failed,
                outcome.run_dir.display()
            );
            print!("{}", render_table(&outcome.reports, false));
        }
        Command::Extract { runs, strategy, evaluator, out, catalog: cat, templates } => {
            let cat = catalog(cat.as_deref())?;
            let records: Vec<RunRecord> = effective_records(&read_jsonl(&runs)?);
            let extracted: Vec<ExtractionRecord> = match strategy {
                Strategy::Parser => records.iter().map(|r| extract_parser(r, &cat)).collect(),
                Strategy::Evaluator => {
                    let Some(path) = evaluator else { bail!("--strategy evaluator needs --evaluator <backend.toml>") };
                    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    let config: BackendConfig =
                        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
                    let generator = build_generator(&config, &cat)?;
                    let templates = Templates::load(templates.as_deref())?;
                    let mut out = Vec::with_capacity(records.len());
                    for r in &records {
                        out.push(extract_evaluator(r, generator.as_ref(), &templates, &cat).await);
                    }
                    out
                }
            };
            write_file(&out, &to_jsonl(&extracted))?;
            eprintln!("wrote {} extraction records to {}", extracted.len(), out.display());
        }
        Command::Score { runs, dataset, out, extractions, catalog: cat } => {
            let cat = catalog(cat.as_deref())?;
            let records: Vec<RunRecord> = read_jsonl(&runs)?;
            let triples = read_dataset(&dataset)?;
            let extractions: Option<Vec<ExtractionRecord>> = extractions.map(|p| read_jsonl(&p)).transpose()?;
            let scores = score_records(&records, extractions.as_deref(), &triples, &cat);
            let path = write_scores(&out, &scores)?;
            eprintln!("wrote {} score records to {}", scores.len(), path.display());
        }
        Command::Report { scores, format, verbose } => {
            let mut records = Vec::new();
            for path in &scores {
                records.extend(read_scores(path)?);
            }
            let reports = reports_from_scores(&records);
            if reports.is_empty() {
                bail!("no score records found");
            }
            match format {
                Format::Table => print!("{}", render_table(&reports, verbose)),
                Format::Csv => print!("{}", render_csv(&reports)),
            }
        }
        Command::RenderPrompt { dataset, triple, catalog: cat, templates } => {
            let cat = catalog(cat.as_deref())?;
            let triples = read_dataset(&dataset)?;
            let Some(t) = triples.iter().find(|t| t.id == triple) else {
                bail!("triple {triple} not found in {}", dataset.display())
            };
            print!("{}", Templates::load(templates.as_deref())?.argument_prompt(t, &cat)?);
        }
    }
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
