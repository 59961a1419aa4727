//! Argument-generation and factor-extraction prompt templates.
//!
//! Templates are plain text with `{name}` placeholders. The argument template
//! takes `{current_case}`, `{tsc1}` and `{tsc2}`; the extraction template takes
//! `{argument_text}`. Defaults are embedded; a directory holding
//! `argument.txt` and `extraction.txt` overrides them without a rebuild.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use crate::case::{sha256_hex, Case, CaseError, CaseRole, CaseTriple, FactorSet, Outcome, CURRENT_CASE_NAME};
use crate::catalog::{Catalog, FactorId};

const DEFAULT_ARGUMENT: &str = include_str!("../assets/templates/argument.txt");
const DEFAULT_EXTRACTION: &str = include_str!("../assets/templates/extraction.txt");

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template {template}: unknown placeholder {{{name}}}")]
    UnknownPlaceholder { template: &'static str, name: String },
    #[error("template {template}: placeholder {{{name}}} missing")]
    MissingPlaceholder { template: &'static str, name: &'static str },
    #[error(transparent)]
    InvalidTriple(#[from] CaseError),
    #[error("argument text is empty")]
    EmptyArgument,
    #[error("case block: {0}")]
    CaseBlock(String),
    #[error("reading template {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateKind {
    ArgumentGeneration,
    FactorExtraction,
}

impl TemplateKind {
    fn placeholders(self) -> &'static [&'static str] {
        match self {
            TemplateKind::ArgumentGeneration => &["current_case", "tsc1", "tsc2"],
            TemplateKind::FactorExtraction => &["argument_text"],
        }
    }

    fn file_name(self) -> &'static str {
        match self {
            TemplateKind::ArgumentGeneration => "argument.txt",
            TemplateKind::FactorExtraction => "extraction.txt",
        }
    }
}

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([a-z_][a-z0-9_]*)\}").unwrap());

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub kind: TemplateKind,
    pub body: String,
}

impl PromptTemplate {
    pub fn new(kind: TemplateKind, body: impl Into<String>) -> Result<Self, PromptError> {
        let t = PromptTemplate { kind, body: body.into() };
        t.check()?;
        Ok(t)
    }

    fn check(&self) -> Result<(), PromptError> {
        let template = self.kind.file_name();
        let found: BTreeSet<&str> = PLACEHOLDER.captures_iter(&self.body).map(|c| c.get(1).unwrap().as_str()).collect();
        if let Some(name) = found.iter().find(|n| !self.kind.placeholders().contains(n)) {
            return Err(PromptError::UnknownPlaceholder { template, name: name.to_string() });
        }
        if let Some(name) = self.kind.placeholders().iter().find(|n| !found.contains(*n)) {
            return Err(PromptError::MissingPlaceholder { template, name });
        }
        Ok(())
    }

    /// Substitutes in one pass so inserted values are never rescanned.
    fn fill(&self, values: &[(&str, &str)]) -> String {
        PLACEHOLDER
            .replace_all(&self.body, |c: &regex::Captures| {
                let name = &c[1];
                values.iter().find(|(k, _)| *k == name).map_or_else(|| c[0].to_string(), |(_, v)| v.to_string())
            })
            .into_owned()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    pub argument: PromptTemplate,
    pub extraction: PromptTemplate,
}

impl Default for Templates {
    fn default() -> Self {
        Templates {
            argument: PromptTemplate::new(TemplateKind::ArgumentGeneration, DEFAULT_ARGUMENT).expect("embedded template"),
            extraction: PromptTemplate::new(TemplateKind::FactorExtraction, DEFAULT_EXTRACTION).expect("embedded template"),
        }
    }
}

impl Templates {
    /// Loads `argument.txt` / `extraction.txt` from `dir`; either file may be absent.
    pub fn load(dir: Option<&Path>) -> Result<Templates, PromptError> {
        let mut t = Templates::default();
        let Some(dir) = dir else { return Ok(t) };
        for kind in [TemplateKind::ArgumentGeneration, TemplateKind::FactorExtraction] {
            let path = dir.join(kind.file_name());
            if !path.exists() {
                continue;
            }
            let body = std::fs::read_to_string(&path)
                .map_err(|source| PromptError::Io { path: path.display().to_string(), source })?;
            let template = PromptTemplate::new(kind, body)?;
            match kind {
                TemplateKind::ArgumentGeneration => t.argument = template,
                TemplateKind::FactorExtraction => t.extraction = template,
            }
        }
        Ok(t)
    }

    /// SHA-256 over both template bodies.
    pub fn checksum(&self) -> String {
        let mut bytes = self.argument.body.as_bytes().to_vec();
        bytes.push(0);
        bytes.extend_from_slice(self.extraction.body.as_bytes());
        sha256_hex(&bytes)
    }

    pub fn argument_prompt(&self, triple: &CaseTriple, catalog: &Catalog) -> Result<String, PromptError> {
        triple.validate(catalog)?;
        let blocks: Vec<String> = CaseRole::ALL.iter().map(|&r| render_case_block(triple.case(r), r, catalog)).collect();
        Ok(self.argument.fill(&[("current_case", &blocks[0]), ("tsc1", &blocks[1]), ("tsc2", &blocks[2])]))
    }

    pub fn extraction_prompt(&self, argument_text: &str) -> Result<String, PromptError> {
        if argument_text.trim().is_empty() {
            return Err(PromptError::EmptyArgument);
        }
        Ok(self.extraction.fill(&[("argument_text", argument_text.trim_end())]))
    }
}

pub fn build_argument_prompt(triple: &CaseTriple, catalog: &Catalog) -> Result<String, PromptError> {
    Templates::default().argument_prompt(triple, catalog)
}

pub fn build_extraction_prompt(argument_text: &str) -> Result<String, PromptError> {
    Templates::default().extraction_prompt(argument_text)
}

/// One case as a heading, an `outcome` line for precedents, and one factor per line.
pub fn render_case_block(case: &Case, role: CaseRole, catalog: &Catalog) -> String {
    let heading = match role {
        CaseRole::Cc => CURRENT_CASE_NAME,
        CaseRole::Tsc1 => "TSC1",
        CaseRole::Tsc2 => "TSC2",
    };
    let mut out = String::from(heading);
    if let Some(outcome) = case.outcome {
        out.push_str(&format!("\noutcome {outcome}"));
    }
    for &f in &case.factors {
        out.push_str("\n- ");
        out.push_str(&catalog.render(f));
    }
    out
}

/// Recovers the current case and both precedents from the last `Current Case`,
/// `TSC1` and `TSC2` blocks in `text`.
pub fn parse_case_blocks(text: &str) -> Result<[Case; 3], PromptError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut cases = Vec::with_capacity(3);
    for role in CaseRole::ALL {
        let heading = match role {
            CaseRole::Cc => CURRENT_CASE_NAME,
            CaseRole::Tsc1 => "TSC1",
            CaseRole::Tsc2 => "TSC2",
        };
        let start = lines
            .iter()
            .rposition(|l| l.trim().trim_end_matches(':') == heading)
            .ok_or_else(|| PromptError::CaseBlock(format!("no `{heading}` block")))?;
        let mut outcome = None;
        let mut factors = FactorSet::new();
        for line in &lines[start + 1..] {
            let l = line.trim();
            if let Some(o) = l.strip_prefix("outcome") {
                outcome = Some(match o.trim_start_matches(':').trim() {
                    "Plaintiff" => Outcome::Plaintiff,
                    "Defendant" => Outcome::Defendant,
                    other => return Err(PromptError::CaseBlock(format!("unknown outcome `{other}`"))),
                });
            } else if let Some(item) = l.strip_prefix("- ") {
                let id = item.split_whitespace().next().unwrap_or("").trim_end_matches(':');
                let id: FactorId = id.parse().map_err(|_| PromptError::CaseBlock(format!("bad factor line `{l}`")))?;
                factors.insert(id);
            } else {
                break;
            }
        }
        cases.push(Case { name: heading.to_string(), outcome, factors });
    }
    Ok(cases.try_into().expect("three cases"))
}
