//! End-to-end runs: prompt, complete, strip reasoning, extract, score, report.
//!
//! Completions are appended to `<out_dir>/<run_id>/run.jsonl` as they arrive.
//! Everything after that point is replayable from the log alone.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::{Mutex, Semaphore};
use tracing::{info, warn};

use crate::backend::{build_generator, strip_reasoning, BackendConfig, BackendError, Completion, GenerationParams, Generator, SYMBOLIC_BACKEND};
use crate::case::{read_dataset, sha256_hex, CaseError, CaseTriple};
use crate::catalog::{Catalog, CatalogError};
use crate::extract::{evaluator_result, extract_with_evaluator, parse_structured, ExtractionResult, Strategy};
use crate::metrics::{aggregate, score_triple, RunReport, TestKind, TripleScore};
use crate::prompt::{PromptError, Templates};
use crate::report::{render_csv, render_table};

pub const RUN_LOG: &str = "run.jsonl";
pub const EXTRACTIONS: &str = "extractions.jsonl";
pub const SCORES: &str = "scores.jsonl";
pub const REPORT_TXT: &str = "report.txt";
pub const REPORT_CSV: &str = "report.csv";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("plan: {0}")]
    Plan(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Json { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Dataset(#[from] CaseError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractorConfig {
    #[serde(default = "parser_strategy")]
    pub strategy: Strategy,
    /// Backend name of the evaluator model; required for the evaluator strategy.
    #[serde(default)]
    pub evaluator: Option<String>,
}

fn parser_strategy() -> Strategy {
    Strategy::Parser
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig { strategy: Strategy::Parser, evaluator: None }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// A run plan as written in TOML. Relative paths resolve against the plan file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunPlan {
    pub test: TestKind,
    pub dataset: PathBuf,
    pub models: Vec<String>,
    #[serde(default)]
    pub extractor: ExtractorConfig,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub catalog: Option<PathBuf>,
    #[serde(default)]
    pub templates: Option<PathBuf>,
    #[serde(default, rename = "backend")]
    pub backends: Vec<BackendConfig>,
}

impl RunPlan {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<RunPlan, HarnessError> {
        let mut plan: RunPlan = toml::from_str(text).map_err(|e| HarnessError::Plan(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        resolve(&mut plan.dataset);
        resolve(&mut plan.out_dir);
        plan.catalog.as_mut().map(resolve);
        plan.templates.as_mut().map(resolve);
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<RunPlan, HarnessError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunPlan::from_toml(&text, base)
    }

    fn backend_config(&self, name: &str) -> Result<BackendConfig, HarnessError> {
        match self.backends.iter().find(|b| b.name == name) {
            Some(b) => Ok(b.clone()),
            None if name == SYMBOLIC_BACKEND => Ok(BackendConfig::symbolic()),
            None => Err(HarnessError::Plan(format!("model `{name}` has no [[backend]] table"))),
        }
    }
}

/// A validated plan with everything loaded. Building one touches no output files.
pub struct PreparedRun {
    pub plan: RunPlan,
    pub run_id: String,
    pub catalog: Catalog,
    pub templates: Templates,
    pub triples: Vec<CaseTriple>,
    pub generators: Vec<(String, Arc<dyn Generator>)>,
    pub evaluator: Option<Arc<dyn Generator>>,
}

impl PreparedRun {
    pub fn run_dir(&self) -> PathBuf {
        self.plan.out_dir.join(&self.run_id)
    }
}

pub fn prepare(plan: RunPlan) -> Result<PreparedRun, HarnessError> {
    if plan.models.is_empty() {
        return Err(HarnessError::Plan("no models listed".into()));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = plan.models.iter().find(|m| !seen.insert(m.as_str())) {
        return Err(HarnessError::Plan(format!("model `{dup}` listed twice")));
    }
    let mut names = HashSet::new();
    if let Some(dup) = plan.backends.iter().find(|b| !names.insert(b.name.as_str())) {
        return Err(HarnessError::Plan(format!("backend `{}` defined twice", dup.name)));
    }
    if !plan.dataset.is_file() {
        return Err(HarnessError::Plan(format!("dataset {} does not exist", plan.dataset.display())));
    }

    let catalog = Catalog::load(plan.catalog.as_deref())?;
    let templates = Templates::load(plan.templates.as_deref())?;
    let triples = read_dataset(&plan.dataset)?;
    if triples.is_empty() {
        return Err(HarnessError::Plan(format!("dataset {} is empty", plan.dataset.display())));
    }
    let want = plan.test.mode();
    for t in &triples {
        t.validate(&catalog)?;
        if t.mode != want {
            return Err(HarnessError::Plan(format!(
                "triple {} has mode {}, but {} requires {}",
                t.id,
                t.mode.as_str(),
                plan.test,
                want.as_str()
            )));
        }
    }

    let mut configs = Vec::new();
    for name in &plan.models {
        configs.push(plan.backend_config(name)?);
    }
    let evaluator_config = match (plan.extractor.strategy, &plan.extractor.evaluator) {
        (Strategy::Evaluator, Some(name)) => Some(plan.backend_config(name)?),
        (Strategy::Evaluator, None) => {
            return Err(HarnessError::Plan("evaluator strategy needs extractor.evaluator".into()))
        }
        (Strategy::Parser, _) => None,
    };

    let generators = configs
        .iter()
        .map(|c| Ok((c.name.clone(), build_generator(c, &catalog)?)))
        .collect::<Result<Vec<_>, BackendError>>()?;
    let evaluator = evaluator_config.as_ref().map(|c| build_generator(c, &catalog)).transpose()?;

    let dataset_checksum = sha256_hex(&fs::read(&plan.dataset).map_err(io_err(&plan.dataset))?);
    let identity = serde_json::json!({
        "dataset": dataset_checksum,
        "templates": templates.checksum(),
        "catalog": sha256_hex(catalog.to_text().as_bytes()),
        "test": plan.test,
        "strategy": plan.extractor.strategy,
        "models": configs.iter().map(|c| (c.name.clone(), c.params())).collect::<Vec<_>>(),
        "evaluator": evaluator_config.map(|c| (c.name.clone(), c.params())),
    });
    let run_id = run_id(&identity);

    Ok(PreparedRun { plan, run_id, catalog, templates, triples, generators, evaluator })
}

fn run_id(identity: &serde_json::Value) -> String {
    sha256_hex(identity.to_string().as_bytes())[..16].to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_at: DateTime<Utc>,
    pub elapsed_ms: u64,
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub test: TestKind,
    pub model: String,
    pub triple_id: String,
    pub prompt_checksum: String,
    #[serde(default)]
    pub completion: Option<Completion>,
    pub params: GenerationParams,
    pub timing: Timing,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempts: Option<u32>,
}

impl RunRecord {
    pub fn succeeded(&self) -> bool {
        self.error.is_none() && self.completion.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionRecord {
    pub run_id: String,
    pub test: TestKind,
    pub model: String,
    pub triple_id: String,
    pub strategy: Strategy,
    /// Checksum of the completion text this extraction was made from.
    pub completion_checksum: String,
    #[serde(default)]
    pub result: Option<ExtractionResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluator_response: Option<Completion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub model: String,
    pub test: TestKind,
    pub triple_id: String,
    #[serde(default)]
    pub score: Option<TripleScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Reads a JSONL file. A truncated final line (an interrupted append) is skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_jsonl(&text, path)
}

fn parse_jsonl<T: DeserializeOwned>(text: &str, path: &Path) -> Result<Vec<T>, HarnessError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(v) => out.push(v),
            Err(e) if i + 1 == lines.len() && !text.ends_with('\n') => {
                warn!(path = %path.display(), line = i + 1, error = %e, "skipping truncated final line");
            }
            Err(e) => return Err(HarnessError::Json { path: path.to_path_buf(), line: i + 1, message: e.to_string() }),
        }
    }
    Ok(out)
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    items.iter().map(|i| serde_json::to_string(i).expect("serializable") + "\n").collect()
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

/// The record that counts for each (model, triple) pair: the first successful
/// one, or else the last failure.
pub fn effective_records(records: &[RunRecord]) -> Vec<RunRecord> {
    let mut best: BTreeMap<(String, TestKind, String), &RunRecord> = BTreeMap::new();
    for r in records {
        let key = (r.model.clone(), r.test, r.triple_id.clone());
        match best.get(&key) {
            Some(prev) if prev.succeeded() => {}
            _ => {
                best.insert(key, r);
            }
        }
    }
    best.into_values().cloned().collect()
}

fn completion_checksum(record: &RunRecord) -> String {
    sha256_hex(record.completion.as_ref().map_or("", |c| c.text.as_str()).as_bytes())
}

fn extraction_record(record: &RunRecord, strategy: Strategy) -> ExtractionRecord {
    ExtractionRecord {
        run_id: record.run_id.clone(),
        test: record.test,
        model: record.model.clone(),
        triple_id: record.triple_id.clone(),
        strategy,
        completion_checksum: completion_checksum(record),
        result: None,
        evaluator_response: None,
        error: record.error.clone(),
    }
}

/// Strips reasoning and parses with the deterministic parser.
pub fn extract_parser(record: &RunRecord, catalog: &Catalog) -> ExtractionRecord {
    let mut out = extraction_record(record, Strategy::Parser);
    if let (true, Some(c)) = (record.succeeded(), &record.completion) {
        let stripped = strip_reasoning(&c.text);
        let mut result = parse_structured(&stripped.text, catalog);
        result.warnings.extend(stripped.warning);
        out.result = Some(result);
    }
    out
}

/// Runs the evaluator model over one record. Abstentions are settled locally.
pub async fn extract_evaluator(
    record: &RunRecord,
    evaluator: &dyn Generator,
    templates: &Templates,
    catalog: &Catalog,
) -> ExtractionRecord {
    let mut out = extraction_record(record, Strategy::Evaluator);
    let Some(c) = record.completion.as_ref().filter(|_| record.succeeded()) else {
        return out;
    };
    let stripped = strip_reasoning(&c.text);
    match extract_with_evaluator(&stripped.text, evaluator, templates, catalog).await {
        Ok((mut result, response)) => {
            result.warnings.extend(stripped.warning);
            out.result = Some(result);
            out.evaluator_response = response;
        }
        Err(e) => out.error = Some(format!("extraction failed: {e}")),
    }
    out
}

/// Re-derives an evaluator extraction from its logged evaluator response.
pub fn replay_evaluator(record: &RunRecord, logged: &ExtractionRecord, catalog: &Catalog) -> ExtractionRecord {
    let mut out = logged.clone();
    out.result = None;
    if logged.error.is_some() {
        return out;
    }
    let Some(c) = record.completion.as_ref() else { return out };
    let stripped = strip_reasoning(&c.text);
    let response = logged.evaluator_response.as_ref().map_or("", |r| r.text.as_str());
    match evaluator_result(&stripped.text, response, catalog) {
        Ok(mut r) => {
            r.warnings.extend(stripped.warning);
            out.result = Some(r);
        }
        Err(e) => out.error = Some(format!("extraction failed: {e}")),
    }
    out
}

/// Scores every effective run record. Parser extraction is used unless
/// `extractions` supplies results keyed by (model, triple).
pub fn score_records(
    records: &[RunRecord],
    extractions: Option<&[ExtractionRecord]>,
    triples: &[CaseTriple],
    catalog: &Catalog,
) -> Vec<ScoreRecord> {
    let by_id: HashMap<&str, &CaseTriple> = triples.iter().map(|t| (t.id.as_str(), t)).collect();
    let logged: Option<HashMap<(&str, &str), &ExtractionRecord>> =
        extractions.map(|xs| xs.iter().map(|x| ((x.model.as_str(), x.triple_id.as_str()), x)).collect());

    effective_records(records)
        .iter()
        .map(|r| {
            let mut out =
                ScoreRecord { model: r.model.clone(), test: r.test, triple_id: r.triple_id.clone(), score: None, error: None };
            let Some(triple) = by_id.get(r.triple_id.as_str()) else {
                out.error = Some(format!("triple {} is not in the dataset", r.triple_id));
                return out;
            };
            if let Some(e) = &r.error {
                out.error = Some(e.clone());
                return out;
            }
            let extraction = match &logged {
                None => extract_parser(r, catalog),
                Some(map) => match map.get(&(r.model.as_str(), r.triple_id.as_str())) {
                    Some(&x) if x.strategy == Strategy::Evaluator => replay_evaluator(r, x, catalog),
                    Some(&x) => x.clone(),
                    None => {
                        out.error = Some("no extraction for this completion".into());
                        return out;
                    }
                },
            };
            match (extraction.result, extraction.error) {
                (_, Some(e)) => out.error = Some(e),
                (None, None) => out.error = Some("empty extraction record".into()),
                (Some(x), None) => match score_triple(&x, triple) {
                    Ok(s) => out.score = Some(s),
                    Err(e) => out.error = Some(e.to_string()),
                },
            }
            out
        })
        .collect()
}

/// Aggregates score records per (model, test), in order of first appearance.
pub fn reports_from_scores(scores: &[ScoreRecord]) -> Vec<RunReport> {
    let mut order: Vec<(String, TestKind)> = Vec::new();
    let mut groups: HashMap<(String, TestKind), (Vec<TripleScore>, usize)> = HashMap::new();
    for s in scores {
        let key = (s.model.clone(), s.test);
        let entry = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (Vec::new(), 0)
        });
        match &s.score {
            Some(score) if s.error.is_none() => entry.0.push(score.clone()),
            _ => entry.1 += 1,
        }
    }
    order
        .into_iter()
        .map(|key| {
            let (list, failed) = groups.remove(&key).expect("grouped");
            let (model, test) = key;
            aggregate(&model, test, list, failed).unwrap_or(RunReport {
                model,
                test,
                n_triples: 0,
                n_failed: failed,
                acc_h_mean: None,
                acc_h_pooled: None,
                rec_u_mean: None,
                rec_u_pooled: None,
                abstention: None,
                scores: vec![],
            })
        })
        .collect()
}

/// Writes `scores.jsonl` into `dir`.
pub fn write_scores(dir: &Path, scores: &[ScoreRecord]) -> Result<PathBuf, HarnessError> {
    let path = dir.join(SCORES);
    write_file(&path, &to_jsonl(scores))?;
    Ok(path)
}

/// Loads score records from a `scores.jsonl` file or a directory holding one.
pub fn read_scores(path: &Path) -> Result<Vec<ScoreRecord>, HarnessError> {
    if path.is_dir() {
        read_jsonl(&path.join(SCORES))
    } else {
        read_jsonl(path)
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub run_id: String,
    pub run_dir: PathBuf,
    pub requested: usize,
    pub skipped: usize,
    pub failed: usize,
    pub reports: Vec<RunReport>,
}

struct LogWriter {
    file: Mutex<File>,
    path: PathBuf,
}

impl LogWriter {
    async fn append(&self, record: &RunRecord) -> Result<(), HarnessError> {
        let line = serde_json::to_string(record).expect("serializable") + "\n";
        let mut f = self.file.lock().await;
        f.write_all(line.as_bytes()).and_then(|_| f.flush()).map_err(io_err(&self.path))
    }
}

/// Executes a prepared run, resuming from an existing log with the same run id.
pub async fn execute(run: &PreparedRun) -> Result<RunOutcome, HarnessError> {
    let dir = run.run_dir();
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let log_path = dir.join(RUN_LOG);
    let existing: Vec<RunRecord> = if log_path.exists() { read_jsonl(&log_path)? } else { Vec::new() };
    let done: HashSet<(String, String)> =
        existing.iter().filter(|r| r.succeeded()).map(|r| (r.model.clone(), r.triple_id.clone())).collect();

    let file = OpenOptions::new().create(true).append(true).open(&log_path).map_err(io_err(&log_path))?;
    let writer = Arc::new(LogWriter { file: Mutex::new(file), path: log_path.clone() });

    let mut tasks = tokio::task::JoinSet::new();
    let mut requested = 0;
    let mut skipped = 0;
    for (model, generator) in &run.generators {
        let permits = Arc::new(Semaphore::new(generator.max_in_flight().max(1)));
        for triple in &run.triples {
            if done.contains(&(model.clone(), triple.id.clone())) {
                skipped += 1;
                continue;
            }
            requested += 1;
            let prompt = run.templates.argument_prompt(triple, &run.catalog)?;
            let base = RunRecord {
                run_id: run.run_id.clone(),
                test: run.plan.test,
                model: model.clone(),
                triple_id: triple.id.clone(),
                prompt_checksum: sha256_hex(prompt.as_bytes()),
                completion: None,
                params: generator.params(),
                timing: Timing { started_at: Utc::now(), elapsed_ms: 0 },
                error: None,
                attempts: None,
            };
            let (generator, permits, writer) = (generator.clone(), permits.clone(), writer.clone());
            tasks.spawn(async move {
                let _permit = permits.acquire_owned().await.expect("semaphore never closed");
                let mut record = base;
                record.timing.started_at = Utc::now();
                let started = Instant::now();
                match generator.complete(&prompt).await {
                    Ok(c) => {
                        record.attempts = Some(c.attempts);
                        record.completion = Some(c);
                    }
                    Err(e) => {
                        warn!(model = %record.model, triple = %record.triple_id, error = %e, "completion failed");
                        record.attempts = Some(e.attempts());
                        record.error = Some(e.to_string());
                    }
                }
                record.timing.elapsed_ms = started.elapsed().as_millis() as u64;
                writer.append(&record).await?;
                Ok::<bool, HarnessError>(record.succeeded())
            });
        }
    }
    let mut failed = 0;
    while let Some(joined) = tasks.join_next().await {
        let ok = joined.map_err(|e| HarnessError::Plan(format!("worker panicked: {e}")))??;
        if !ok {
            failed += 1;
        }
    }
    drop(writer);
    info!(run_id = %run.run_id, requested, skipped, failed, "completions finished");

    let records = effective_records(&read_jsonl(&log_path)?);
    let extractions = extract_all(run, &records, &dir).await?;
    write_file(&dir.join(EXTRACTIONS), &to_jsonl(&extractions))?;

    let scores = score_records(&records, Some(&extractions), &run.triples, &run.catalog);
    write_scores(&dir, &scores)?;
    let reports = reports_from_scores(&scores);
    write_file(&dir.join(REPORT_TXT), &render_table(&reports, true))?;
    write_file(&dir.join(REPORT_CSV), &render_csv(&reports))?;

    Ok(RunOutcome { run_id: run.run_id.clone(), run_dir: dir, requested, skipped, failed, reports })
}

/// Extracts every record. Evaluator extractions already present for the same
/// completion text are reused rather than re-queried.
async fn extract_all(run: &PreparedRun, records: &[RunRecord], dir: &Path) -> Result<Vec<ExtractionRecord>, HarnessError> {
    let Some(evaluator) = &run.evaluator else {
        return Ok(records.iter().map(|r| extract_parser(r, &run.catalog)).collect());
    };
    let path = dir.join(EXTRACTIONS);
    let previous: Vec<ExtractionRecord> = if path.exists() { read_jsonl(&path)? } else { Vec::new() };
    let reusable: HashMap<(String, String, String), ExtractionRecord> = previous
        .into_iter()
        .filter(|x| x.strategy == Strategy::Evaluator && x.error.is_none())
        .map(|x| ((x.model.clone(), x.triple_id.clone(), x.completion_checksum.clone()), x))
        .collect();

    let permits = Arc::new(Semaphore::new(evaluator.max_in_flight().max(1)));
    let mut tasks = tokio::task::JoinSet::new();
    for (i, r) in records.iter().enumerate() {
        let key = (r.model.clone(), r.triple_id.clone(), completion_checksum(r));
        if let Some(x) = reusable.get(&key) {
            let x = x.clone();
            tasks.spawn(async move { (i, x) });
            continue;
        }
        let (r, evaluator, permits) = (r.clone(), evaluator.clone(), permits.clone());
        let (templates, catalog) = (run.templates.clone(), run.catalog.clone());
        tasks.spawn(async move {
            let _permit = permits.acquire_owned().await.expect("semaphore never closed");
            (i, extract_evaluator(&r, evaluator.as_ref(), &templates, &catalog).await)
        });
    }
    let mut out: Vec<Option<ExtractionRecord>> = vec![None; records.len()];
    while let Some(joined) = tasks.join_next().await {
        let (i, x) = joined.map_err(|e| HarnessError::Plan(format!("worker panicked: {e}")))?;
        out[i] = Some(x);
    }
    Ok(out.into_iter().map(|x| x.expect("every record extracted")).collect())
}

/// Loads, validates and executes a plan file.
pub async fn run_plan(path: &Path) -> Result<RunOutcome, HarnessError> {
    let plan = RunPlan::load(path)?;
    let prepared = prepare(plan)?;
    execute(&prepared).await
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{dataset_to_string, Mode};
    use crate::extract::CANONICAL_ABSTENTION;
    use crate::generator::{generate, GenSpec};

    fn write_dataset(dir: &Path, mode: Mode, count: usize) -> PathBuf {
        let triples = generate(&GenSpec::new(mode, count, 12, 7), &Catalog::default_catalog()).unwrap();
        let path = dir.join(format!("{}.jsonl", mode.as_str()));
        fs::write(&path, dataset_to_string(&triples)).unwrap();
        path
    }

    fn plan_text(test: &str, dataset: &str, models: &str) -> String {
        format!("test = \"{test}\"\ndataset = \"{dataset}\"\nmodels = [{models}]\nout_dir = \"runs\"\n")
    }

    #[test]
    fn plan_paths_resolve_against_plan_dir() {
        let plan = RunPlan::from_toml(&plan_text("test1", "d.jsonl", "\"symbolic\""), Path::new("/tmp/x")).unwrap();
        assert_eq!(plan.dataset, Path::new("/tmp/x/d.jsonl"));
        assert_eq!(plan.out_dir, Path::new("/tmp/x/runs"));
        assert_eq!(plan.extractor.strategy, Strategy::Parser);
    }

    #[test]
    fn missing_dataset_aborts_without_output() {
        let dir = tempfile::tempdir().unwrap();
        let plan = RunPlan::from_toml(&plan_text("test1", "nope.jsonl", "\"symbolic\""), dir.path()).unwrap();
        assert!(matches!(prepare(plan), Err(HarnessError::Plan(_))));
        assert!(!dir.path().join("runs").exists());
    }

    #[test]
    fn mode_mismatch_is_plan_error() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), Mode::Arguable, 3);
        let plan = RunPlan::from_toml(&plan_text("test3", "arguable.jsonl", "\"symbolic\""), dir.path()).unwrap();
        let err = prepare(plan).err().unwrap().to_string();
        assert!(err.contains("requires non-arguable"), "{err}");
    }

    #[test]
    fn unknown_model_and_missing_key_are_plan_errors() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), Mode::Arguable, 2);
        let plan = RunPlan::from_toml(&plan_text("test1", "arguable.jsonl", "\"gpt-x\""), dir.path()).unwrap();
        assert!(matches!(prepare(plan), Err(HarnessError::Plan(_))));
        let text = plan_text("test1", "arguable.jsonl", "\"m\"")
            + "[[backend]]\nname = \"m\"\nendpoint_url = \"http://127.0.0.1:9\"\nmodel_id = \"m\"\napi_key_env = \"PLYEVAL_UNSET_KEY_FOR_TEST\"\n";
        let plan = RunPlan::from_toml(&text, dir.path()).unwrap();
        assert!(matches!(prepare(plan), Err(HarnessError::Backend(BackendError::MissingApiKey { .. }))));
        assert!(!dir.path().join("runs").exists());
    }

    #[tokio::test]
    async fn symbolic_runs_are_perfect_and_resume_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), Mode::NonArguable, 5);
        let plan_path = dir.path().join("plan.toml");
        fs::write(&plan_path, plan_text("test3", "non-arguable.jsonl", "\"symbolic\"")).unwrap();
        let first = run_plan(&plan_path).await.unwrap();
        assert_eq!((first.requested, first.failed), (5, 0));
        assert_eq!(first.reports[0].abstention.unwrap().ratio, 100.0);
        let report = fs::read_to_string(first.run_dir.join(REPORT_TXT)).unwrap();

        let second = run_plan(&plan_path).await.unwrap();
        assert_eq!(second.run_id, first.run_id);
        assert_eq!((second.requested, second.skipped), (0, 5));
        let log: Vec<RunRecord> = read_jsonl(&first.run_dir.join(RUN_LOG)).unwrap();
        assert_eq!(log.len(), 5);
        assert_eq!(fs::read_to_string(second.run_dir.join(REPORT_TXT)).unwrap(), report);
    }

    #[test]
    fn truncated_last_line_is_skipped() {
        let recs: Vec<serde_json::Value> = parse_jsonl("{\"a\":1}\n{\"a\":", Path::new("x")).unwrap();
        assert_eq!(recs.len(), 1);
        assert!(parse_jsonl::<serde_json::Value>("{\"a\":\n{\"a\":1}\n", Path::new("x")).is_err());
    }

    fn record(model: &str, triple: &str, text: Option<&str>) -> RunRecord {
        RunRecord {
            run_id: "r".into(),
            test: TestKind::Test3,
            model: model.into(),
            triple_id: triple.into(),
            prompt_checksum: String::new(),
            completion: text.map(|t| Completion {
                text: t.into(),
                model_id: model.into(),
                latency_ms: 0,
                usage: None,
                timestamp: DateTime::<Utc>::from_timestamp(0, 0).unwrap(),
                attempts: 1,
            }),
            params: BackendConfig::symbolic().params(),
            timing: Timing { started_at: DateTime::<Utc>::from_timestamp(0, 0).unwrap(), elapsed_ms: 0 },
            error: text.is_none().then(|| "transport failure".to_string()),
            attempts: Some(1),
        }
    }

    #[test]
    fn failures_are_counted_not_dropped() {
        let cat = Catalog::default_catalog();
        let triples = generate(&GenSpec::new(Mode::NonArguable, 3, 12, 1), &cat).unwrap();
        let records = vec![
            record("m", &triples[0].id, Some(CANONICAL_ABSTENTION)),
            record("m", &triples[1].id, None),
            record("m", &triples[2].id, None),
            record("m", &triples[2].id, Some("Plaintiff's Argument: nothing")),
        ];
        let scores = score_records(&records, None, &triples, &cat);
        assert_eq!(scores.len(), 3);
        let report = &reports_from_scores(&scores)[0];
        assert_eq!((report.n_triples, report.n_failed), (2, 1));
        assert_eq!(report.abstention.unwrap().ratio, 50.0);
    }
}
