//! Recovers the per-case factor sets an argument asserts, and detects abstention.
//!
//! Two strategies share one result type:
//!
//! * [`parse_structured`] reads the labeled-ply sentence grammar directly
//!   (plain text or the JSON object the generation prompt asks for).
//! * [`extract_with_evaluator`] asks an evaluator model to list the factors per
//!   case and parses its answer.
//!
//! Only presence assertions are attributed. A factor said to be "not present in
//! the current case" is attributed to the precedent the sentence is about,
//! never to the current case.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::backend::{BackendError, Completion, Generator};
use crate::case::{CaseRole, FactorSet};
use crate::catalog::{Catalog, FactorId};
use crate::prompt::{PromptError, Templates};

/// Abstention phrase the generation prompt instructs models to emit.
pub const CANONICAL_ABSTENTION: &str = "No common factor between the input current case and the TSC1/TSC2";

/// All phrases accepted as a correct abstention.
pub const ABSTENTION_PHRASES: [&str; 3] = [
    CANONICAL_ABSTENTION,
    "No common factor between the current case and the TSC1/TSC2",
    "Cannot generate argument due to lack of common factors",
];

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("unparseable evaluator response: {reason}")]
    Unparseable { reason: String, response: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Parser,
    Evaluator,
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "parser" => Ok(Strategy::Parser),
            "evaluator" => Ok(Strategy::Evaluator),
            other => Err(format!("unknown extraction strategy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub per_case: BTreeMap<CaseRole, FactorSet>,
    pub abstained: bool,
    pub abstention_exact: bool,
    /// Number of distinct ply labels present in the text.
    pub plies_found: usize,
    pub strategy: Strategy,
    pub warnings: Vec<String>,
}

impl ExtractionResult {
    fn empty(strategy: Strategy) -> Self {
        ExtractionResult {
            per_case: CaseRole::ALL.iter().map(|&r| (r, FactorSet::new())).collect(),
            abstained: false,
            abstention_exact: false,
            plies_found: 0,
            strategy,
            warnings: Vec::new(),
        }
    }

    pub fn factors(&self, role: CaseRole) -> &FactorSet {
        static EMPTY: FactorSet = FactorSet::new();
        self.per_case.get(&role).unwrap_or(&EMPTY)
    }

    /// True when any case has an asserted factor or any ply label was seen.
    pub fn has_ply_content(&self) -> bool {
        self.plies_found > 0 || self.per_case.values().any(|s| !s.is_empty())
    }

    fn assert_factor(&mut self, role: CaseRole, f: FactorId) {
        self.per_case.entry(role).or_default().insert(f);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbstentionCheck {
    pub abstained: bool,
    pub exact: bool,
}

static PLY_LABEL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)(plaintiff['’]?s?[ _]+argument)|(defendant['’]?s?[ _]+counter[- ]?argument)|(plaintiff['’]?s?[ _]+rebuttal)",
    )
    .unwrap()
});
static FACTOR_MENTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bF(\d+)\b").unwrap());
static CC_REF: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b(?:the\s+)?(?:input\s+current|current|input)\s+(?:case|fact\s+situation)\b").unwrap()
});
static TSC_REF: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\btsc\s*-?\s*([12])\b").unwrap());
static BOTH: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"both @cc and @tsc([12])\b|both @tsc([12]) and @cc\b").unwrap());
static CC_ABSENT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b(?:not|never)\s+(?:\w+\s+)?(?:present\s+|found\s+|exist(?:s|ed)?\s+)?in @cc\b|\babsent\s+(?:from|in) @cc\b").unwrap()
});
static CC_PRESENT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\bpresent in @cc\b|^(?:also,? |and )?in @cc,? .*\b(?:are|is|were|was) present\b|@cc (?:has|had|contains|includes|included)\b").unwrap()
});
static TSC_PRESENT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\bpresent in @tsc([12])\b|@tsc([12]) (?:has|had|contains|includes|included)\b").unwrap()
});
static TSC_LEADING_PRESENT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:also,? |and )?in @tsc([12]),? .*\b(?:are|is|were|was) present\b").unwrap());
static FIRST_TSC: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"@tsc([12])\b").unwrap());

fn tsc_role(digit: &str) -> CaseRole {
    if digit == "1" {
        CaseRole::Tsc1
    } else {
        CaseRole::Tsc2
    }
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn normalize_for_abstention(s: &str) -> String {
    let lowered = s.replace(['’', '‘'], "'").to_lowercase();
    collapse_ws(&lowered)
        .trim_end_matches(|c: char| c.is_ascii_punctuation() && c != '/')
        .to_string()
}

/// Number of distinct ply labels in `text`.
pub fn count_ply_labels(text: &str) -> usize {
    let mut kinds = BTreeSet::new();
    for caps in PLY_LABEL.captures_iter(text) {
        for i in 1..=3 {
            if caps.get(i).is_some() {
                kinds.insert(i);
            }
        }
    }
    kinds.len()
}

/// Abstained iff an accepted phrase occurs after case-folding, whitespace
/// collapsing and trailing-punctuation trimming, and no ply label occurs.
/// Exact additionally requires the phrase verbatim.
pub fn detect_abstention(text: &str) -> AbstentionCheck {
    let normalized = normalize_for_abstention(text);
    let matched = ABSTENTION_PHRASES
        .iter()
        .any(|p| normalized.contains(&normalize_for_abstention(p)));
    let abstained = matched && count_ply_labels(text) == 0;
    let exact = abstained && ABSTENTION_PHRASES.iter().any(|p| text.contains(p));
    AbstentionCheck { abstained, exact }
}

/// Deterministic extraction over the labeled-ply grammar.
pub fn parse_structured(argument_text: &str, catalog: &Catalog) -> ExtractionResult {
    let mut out = ExtractionResult::empty(Strategy::Parser);
    let check = detect_abstention(argument_text);
    if check.abstained {
        out.abstained = true;
        out.abstention_exact = check.exact;
        return out;
    }
    let text = structured_to_text(argument_text);
    out.plies_found = count_ply_labels(&text);
    if out.plies_found == 0 && !text.trim().is_empty() {
        out.warnings.push("no ply labels found".to_string());
    }
    for sentence in split_sentences(&text) {
        let mentions = factor_mentions(sentence, catalog, &mut out.warnings);
        if mentions.is_empty() {
            continue;
        }
        match attribute(sentence) {
            Some(roles) => {
                for &f in &mentions {
                    for &r in &roles {
                        out.assert_factor(r, f);
                    }
                }
            }
            None => out.warnings.push(format!("unattributed factor mention: {}", collapse_ws(sentence))),
        }
    }
    out
}

fn factor_mentions(sentence: &str, catalog: &Catalog, warnings: &mut Vec<String>) -> Vec<FactorId> {
    let mut ids = Vec::new();
    for caps in FACTOR_MENTION.captures_iter(sentence) {
        let Some(id) = caps[1].parse::<u32>().ok().and_then(FactorId::new) else {
            warnings.push(format!("invalid factor id F{}", &caps[1]));
            continue;
        };
        if !catalog.contains(id) {
            let w = format!("unknown factor {id}");
            if !warnings.contains(&w) {
                warnings.push(w);
            }
        }
        if !ids.contains(&id) {
            ids.push(id);
        }
    }
    ids
}

/// Sentence boundaries: a lone `.`, `!` or `?` followed by whitespace, or a newline.
/// Ellipses do not end a sentence.
fn split_sentences(text: &str) -> Vec<&str> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut start = 0;
    for i in 0..bytes.len() {
        let b = bytes[i];
        let boundary = match b {
            b'\n' => true,
            b'.' | b'!' | b'?' => {
                let prev_dot = i > 0 && bytes[i - 1] == b'.';
                let next = bytes.get(i + 1).copied();
                let next_dot = next == Some(b'.');
                !prev_dot && !next_dot && next.is_none_or(|n| n.is_ascii_whitespace())
            }
            _ => false,
        };
        if boundary {
            let s = text[start..=i].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = i + 1;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

fn normalize_sentence(sentence: &str) -> String {
    let lowered = sentence.replace(['’', '‘'], "'").to_lowercase();
    let s = CC_REF.replace_all(&lowered, " @cc ");
    let s = TSC_REF.replace_all(&s, " @tsc$1 ");
    collapse_ws(&s)
}

fn negated_before(s: &str, at: usize) -> bool {
    let window_start = s[..at].char_indices().rev().nth(15).map_or(0, |(i, _)| i);
    let window = &s[window_start..at];
    window.contains("not ") || window.contains("never ") || window.contains("absent")
}

/// Which cases a sentence asserts its factor mentions to be present in.
fn attribute(sentence: &str) -> Option<BTreeSet<CaseRole>> {
    let s = normalize_sentence(sentence);

    if let Some(m) = BOTH.captures(&s) {
        if !negated_before(&s, m.get(0).unwrap().start()) {
            let digit = m.get(1).or(m.get(2)).unwrap().as_str();
            return Some([CaseRole::Cc, tsc_role(digit)].into());
        }
    }
    if CC_ABSENT.is_match(&s) {
        // "... were also present, but are not present in the current case":
        // the subject is the precedent the sentence names.
        return FIRST_TSC.captures(&s).map(|c| [tsc_role(&c[1])].into());
    }
    if let Some(m) = CC_PRESENT.find(&s) {
        if !negated_before(&s, m.start()) {
            return Some([CaseRole::Cc].into());
        }
    }
    for caps in TSC_PRESENT.captures_iter(&s) {
        let m = caps.get(0).unwrap();
        if !negated_before(&s, m.start()) {
            let digit = caps.get(1).or(caps.get(2)).unwrap().as_str();
            return Some([tsc_role(digit)].into());
        }
    }
    if let Some(c) = TSC_LEADING_PRESENT.captures(&s) {
        return Some([tsc_role(&c[1])].into());
    }
    None
}

fn strip_code_fence(text: &str) -> &str {
    let t = text.trim();
    if let Some(rest) = t.strip_prefix("```") {
        let body = rest.split_once('\n').map_or("", |(_, b)| b);
        return body.trim_end().strip_suffix("```").unwrap_or(body).trim();
    }
    t
}

/// Finds a JSON object in `text`: the whole (fence-stripped) text, or the span
/// from the first `{` to the last `}`.
pub(crate) fn find_json_object(text: &str) -> Option<serde_json::Map<String, Value>> {
    let t = strip_code_fence(text);
    if let Ok(Value::Object(m)) = serde_json::from_str::<Value>(t) {
        return Some(m);
    }
    let (start, end) = (t.find('{')?, t.rfind('}')?);
    if start >= end {
        return None;
    }
    match serde_json::from_str::<Value>(&t[start..=end]) {
        Ok(Value::Object(m)) => Some(m),
        _ => None,
    }
}

fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(value_text).collect::<Vec<_>>().join(" "),
        Value::Object(m) => m.values().map(value_text).collect::<Vec<_>>().join(" "),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn ply_key(key: &str) -> Option<usize> {
    let k: String = key.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_lowercase();
    if k.contains("counterargument") {
        Some(1)
    } else if k.contains("rebuttal") {
        Some(2)
    } else if k.contains("argument") && k.contains("plaintiff") {
        Some(0)
    } else {
        None
    }
}

/// Rewrites a JSON answer keyed by ply into labeled paragraphs; other text
/// passes through unchanged.
fn structured_to_text(text: &str) -> String {
    let Some(obj) = find_json_object(text) else {
        return text.to_string();
    };
    const LABELS: [&str; 3] = ["Plaintiff's Argument", "Defendant's Counterargument", "Plaintiff's Rebuttal"];
    let mut plies: [Option<String>; 3] = Default::default();
    let mut other = Vec::new();
    for (k, v) in &obj {
        match ply_key(k) {
            Some(i) => plies[i] = Some(value_text(v)),
            None => other.push(value_text(v)),
        }
    }
    if plies.iter().all(Option::is_none) {
        return other.join("\n");
    }
    let mut paragraphs: Vec<String> = plies
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.as_ref().map(|body| format!("{}: {}", LABELS[i], body)))
        .collect();
    paragraphs.extend(other);
    paragraphs.join("\n\n")
}

fn role_for_key(key: &str) -> Option<CaseRole> {
    let k: String = key.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_lowercase();
    match k.as_str() {
        "cc" | "currentcase" | "inputcase" | "inputcurrentcase" | "current" => Some(CaseRole::Cc),
        "tsc1" => Some(CaseRole::Tsc1),
        "tsc2" => Some(CaseRole::Tsc2),
        _ => None,
    }
}

fn ids_in(text: &str) -> Vec<u32> {
    FACTOR_MENTION
        .captures_iter(text)
        .filter_map(|c| c[1].parse::<u32>().ok())
        .collect()
}

/// Parses an evaluator's per-case factor lists: a JSON object keyed by case,
/// or `Current Case` / `TSC1` / `TSC2` headings followed by factor lines.
pub fn parse_evaluator_response(response: &str, catalog: &Catalog) -> Result<ExtractionResult, ExtractError> {
    let mut out = ExtractionResult::empty(Strategy::Evaluator);
    let unparseable = |reason: &str| ExtractError::Unparseable { reason: reason.to_string(), response: response.to_string() };
    let mut found: BTreeSet<CaseRole> = BTreeSet::new();
    let mut raw: Vec<(CaseRole, u32)> = Vec::new();

    if let Some(obj) = find_json_object(response) {
        for (k, v) in &obj {
            if let Some(role) = role_for_key(k) {
                found.insert(role);
                raw.extend(ids_in(&value_text(v)).into_iter().map(|i| (role, i)));
            }
        }
    }
    if found.is_empty() {
        let mut current: Option<CaseRole> = None;
        for line in response.lines() {
            let cleaned = line.trim().trim_start_matches(['#', '*', '-', ' ']).trim();
            let (head, rest) = cleaned.split_once(':').unwrap_or((cleaned, ""));
            let head = head.trim_matches(|c: char| c == '*' || c.is_whitespace());
            if let Some(role) = role_for_key(head) {
                current = Some(role);
                found.insert(role);
                raw.extend(ids_in(rest).into_iter().map(|i| (role, i)));
                continue;
            }
            if let Some(role) = current {
                raw.extend(ids_in(line).into_iter().map(|i| (role, i)));
            }
        }
    }
    if found.is_empty() {
        return Err(unparseable("no per-case factor lists"));
    }
    for role in CaseRole::ALL {
        if !found.contains(&role) {
            out.warnings.push(format!("evaluator response has no list for {role}"));
        }
    }
    for (role, index) in raw {
        let Some(id) = FactorId::new(index) else {
            out.warnings.push(format!("invalid factor id F{index}"));
            continue;
        };
        if !catalog.contains(id) {
            let w = format!("unknown factor {id}");
            if !out.warnings.contains(&w) {
                out.warnings.push(w);
            }
        }
        out.assert_factor(role, id);
    }
    Ok(out)
}

/// Extraction via an evaluator model. Abstentions are detected locally and
/// never reach the evaluator; the evaluator's completion is returned for logging.
pub async fn extract_with_evaluator(
    argument_text: &str,
    evaluator: &dyn Generator,
    templates: &Templates,
    catalog: &Catalog,
) -> Result<(ExtractionResult, Option<Completion>), ExtractError> {
    let check = detect_abstention(argument_text);
    if check.abstained {
        let mut out = ExtractionResult::empty(Strategy::Evaluator);
        out.abstained = true;
        out.abstention_exact = check.exact;
        return Ok((out, None));
    }
    let prompt = templates.extraction_prompt(argument_text)?;
    let completion = evaluator.complete(&prompt).await?;
    let result = evaluator_result(argument_text, &completion.text, catalog)?;
    Ok((result, Some(completion)))
}

/// Re-derives an evaluator extraction from a logged evaluator response.
pub fn evaluator_result(argument_text: &str, response: &str, catalog: &Catalog) -> Result<ExtractionResult, ExtractError> {
    let check = detect_abstention(argument_text);
    if check.abstained {
        let mut out = ExtractionResult::empty(Strategy::Evaluator);
        out.abstained = true;
        out.abstention_exact = check.exact;
        return Ok(out);
    }
    let stripped = crate::backend::strip_reasoning(response);
    let mut result = parse_evaluator_response(&stripped.text, catalog)?;
    result.plies_found = count_ply_labels(argument_text);
    Ok(result)
}
