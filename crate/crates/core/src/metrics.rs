//! Per-triple scores, error tags and per-(model, test) aggregates.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{common_factors, CaseRole, CaseTriple, FactorSet, Mode, Outcome};
use crate::catalog::FactorId;
use crate::extract::ExtractionResult;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("triple {0} has no ground-truth factors")]
    EmptyGroundTruth(String),
    #[error("no scores to aggregate for {model} / {test}")]
    NoScores { model: String, test: TestKind },
    #[error("score for triple {triple} belongs to {found}, expected {expected}")]
    MixedTests { triple: String, found: TestKind, expected: TestKind },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TestKind {
    #[serde(rename = "test1", alias = "Test1")]
    Test1,
    #[serde(rename = "test2", alias = "Test2")]
    Test2,
    #[serde(rename = "test3", alias = "Test3")]
    Test3,
}

impl TestKind {
    pub const ALL: [TestKind; 3] = [TestKind::Test1, TestKind::Test2, TestKind::Test3];

    pub fn mode(self) -> Mode {
        match self {
            TestKind::Test1 => Mode::Arguable,
            TestKind::Test2 => Mode::Reordered,
            TestKind::Test3 => Mode::NonArguable,
        }
    }

    pub fn for_mode(mode: Mode) -> TestKind {
        match mode {
            Mode::Arguable => TestKind::Test1,
            Mode::Reordered => TestKind::Test2,
            Mode::NonArguable => TestKind::Test3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TestKind::Test1 => "Test 1",
            TestKind::Test2 => "Test 2",
            TestKind::Test3 => "Test 3",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TestKind::Test1 => "test1",
            TestKind::Test2 => "test2",
            TestKind::Test3 => "test3",
        }
    }
}

impl std::fmt::Display for TestKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TestKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace([' ', '-', '_'], "").as_str() {
            "test1" | "1" => Ok(TestKind::Test1),
            "test2" | "2" => Ok(TestKind::Test2),
            "test3" | "3" => Ok(TestKind::Test3),
            _ => Err(format!("unknown test `{s}` (expected test1, test2 or test3)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ErrorKind {
    FactorMisattribution,
    OmissionShared,
    OmissionDistinguishing,
    FailureToAbstain,
    IncorrectAbstentionPhrase,
    SpuriousGeneration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ErrorTag {
    pub kind: ErrorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case_role: Option<CaseRole>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor: Option<FactorId>,
}

impl ErrorTag {
    fn abstention(kind: ErrorKind) -> Self {
        ErrorTag { kind, case_role: None, factor: None }
    }

    fn factor(kind: ErrorKind, role: CaseRole, factor: FactorId) -> Self {
        ErrorTag { kind, case_role: Some(role), factor: Some(factor) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleScore {
    pub triple_id: String,
    pub test: TestKind,
    pub n_h: usize,
    pub n_u: usize,
    pub n_gt: usize,
    pub abstained: bool,
    pub abstention_exact: bool,
    pub expected_abstain: bool,
    pub acc_h: f64,
    pub rec_u: f64,
    pub diagnostics: Vec<ErrorTag>,
}

pub fn acc_h(n_h: usize, n_gt: usize) -> f64 {
    (1.0 - n_h as f64 / n_gt as f64) * 100.0
}

pub fn rec_u(n_u: usize, n_gt: usize) -> f64 {
    n_u as f64 / n_gt as f64 * 100.0
}

/// Counts hallucinated and utilized (case, factor) pairs. Each asserted pair
/// lands in exactly one bucket.
pub fn count_pairs(extraction: &ExtractionResult, triple: &CaseTriple) -> (usize, usize) {
    let mut n_h = 0;
    let mut n_u = 0;
    for role in CaseRole::ALL {
        let gt = &triple.case(role).factors;
        for f in extraction.factors(role) {
            if gt.contains(f) {
                n_u += 1;
            } else {
                n_h += 1;
            }
        }
    }
    (n_h, n_u)
}

pub fn score_triple(extraction: &ExtractionResult, triple: &CaseTriple) -> Result<TripleScore, MetricsError> {
    let n_gt = triple.total_ground_truth();
    if n_gt == 0 {
        return Err(MetricsError::EmptyGroundTruth(triple.id.clone()));
    }
    let (n_h, n_u) = count_pairs(extraction, triple);
    let mut score = TripleScore {
        triple_id: triple.id.clone(),
        test: TestKind::for_mode(triple.mode),
        n_h,
        n_u,
        n_gt,
        abstained: extraction.abstained,
        abstention_exact: extraction.abstention_exact,
        expected_abstain: triple.mode == Mode::NonArguable || triple.requires_abstention(),
        acc_h: acc_h(n_h, n_gt),
        rec_u: rec_u(n_u, n_gt),
        diagnostics: Vec::new(),
    };
    score.diagnostics = classify_errors(&score, triple, extraction);
    Ok(score)
}

/// Tags discrepancies between the extraction and the triple. Omissions are
/// only reported when the model actually produced an argument for a triple
/// that called for one.
pub fn classify_errors(score: &TripleScore, triple: &CaseTriple, extraction: &ExtractionResult) -> Vec<ErrorTag> {
    let mut tags = BTreeSet::new();

    if score.expected_abstain && !score.abstained {
        tags.insert(ErrorTag::abstention(ErrorKind::FailureToAbstain));
    }
    if score.abstained && !extraction.abstention_exact {
        tags.insert(ErrorTag::abstention(ErrorKind::IncorrectAbstentionPhrase));
    }
    if score.expected_abstain && extraction.has_ply_content() {
        tags.insert(ErrorTag::abstention(ErrorKind::SpuriousGeneration));
    }

    for role in CaseRole::ALL {
        for &f in extraction.factors(role) {
            let belongs_here = triple.case(role).factors.contains(&f);
            let belongs_elsewhere = CaseRole::ALL
                .iter()
                .any(|&other| other != role && triple.case(other).factors.contains(&f));
            if !belongs_here && belongs_elsewhere {
                tags.insert(ErrorTag::factor(ErrorKind::FactorMisattribution, role, f));
            }
        }
    }

    if !score.expected_abstain && !score.abstained {
        let cited: Vec<CaseRole> = [Outcome::Plaintiff, Outcome::Defendant]
            .iter()
            .filter_map(|&o| triple.precedent_with_outcome(o))
            .collect();
        let mut shared_any = FactorSet::new();
        for &p in &cited {
            let shared = common_factors(&triple.cc, triple.case(p));
            for &f in &shared {
                if !extraction.factors(p).contains(&f) {
                    tags.insert(ErrorTag::factor(ErrorKind::OmissionShared, p, f));
                } else if !extraction.factors(CaseRole::Cc).contains(&f) {
                    tags.insert(ErrorTag::factor(ErrorKind::OmissionShared, CaseRole::Cc, f));
                }
            }
            shared_any.extend(shared);
        }
        for role in CaseRole::ALL {
            for &f in &triple.case(role).factors {
                if !shared_any.contains(&f) && !extraction.factors(role).contains(&f) {
                    tags.insert(ErrorTag::factor(ErrorKind::OmissionDistinguishing, role, f));
                }
            }
        }
    }

    tags.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbstentionRatio {
    pub n_sa: usize,
    pub n_ta: usize,
    pub ratio: f64,
}

impl AbstentionRatio {
    pub fn new(n_sa: usize, n_ta: usize) -> Self {
        let ratio = if n_ta == 0 { 0.0 } else { n_sa as f64 / n_ta as f64 * 100.0 };
        AbstentionRatio { n_sa, n_ta, ratio }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub model: String,
    pub test: TestKind,
    pub n_triples: usize,
    /// Items whose completion or extraction failed; excluded from every figure.
    pub n_failed: usize,
    /// Per-triple mean. For Test 3 only non-abstaining triples count; `None` if all abstained.
    pub acc_h_mean: Option<f64>,
    /// Σn_h / Σn_gt over the same triples as `acc_h_mean`.
    pub acc_h_pooled: Option<f64>,
    /// Tests 1 and 2 only.
    pub rec_u_mean: Option<f64>,
    pub rec_u_pooled: Option<f64>,
    /// Test 3 only.
    pub abstention: Option<AbstentionRatio>,
    /// Sorted by triple id.
    pub scores: Vec<TripleScore>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Aggregates one (model, test) cell. Scores are sorted by triple id first, so
/// the result does not depend on input order.
pub fn aggregate(model: &str, test: TestKind, mut scores: Vec<TripleScore>, n_failed: usize) -> Result<RunReport, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::NoScores { model: model.to_string(), test });
    }
    if let Some(s) = scores.iter().find(|s| s.test != test) {
        return Err(MetricsError::MixedTests { triple: s.triple_id.clone(), found: s.test, expected: test });
    }
    scores.sort_by(|a, b| a.triple_id.cmp(&b.triple_id));

    let counted: Vec<&TripleScore> = match test {
        TestKind::Test3 => scores.iter().filter(|s| !s.abstained).collect(),
        _ => scores.iter().collect(),
    };
    let pooled = |num: fn(&TripleScore) -> usize| -> Option<(usize, usize)> {
        (!counted.is_empty()).then(|| counted.iter().fold((0, 0), |(a, b), s| (a + num(s), b + s.n_gt)))
    };
    let acc_h_mean = mean(counted.iter().map(|s| s.acc_h));
    let acc_h_pooled = pooled(|s| s.n_h).map(|(h, gt)| acc_h(h, gt));
    let (rec_u_mean, rec_u_pooled, abstention) = match test {
        TestKind::Test3 => {
            let n_sa = scores.iter().filter(|s| s.abstained).count();
            (None, None, Some(AbstentionRatio::new(n_sa, scores.len())))
        }
        _ => (mean(counted.iter().map(|s| s.rec_u)), pooled(|s| s.n_u).map(|(u, gt)| rec_u(u, gt)), None),
    };

    Ok(RunReport {
        model: model.to_string(),
        test,
        n_triples: scores.len(),
        n_failed,
        acc_h_mean,
        acc_h_pooled,
        rec_u_mean,
        rec_u_pooled,
        abstention,
        scores,
    })
}

/// Error-kind histogram over a report's triples.
pub fn diagnostic_counts(report: &RunReport) -> BTreeMap<ErrorKind, usize> {
    let mut counts = BTreeMap::new();
    for tag in report.scores.iter().flat_map(|s| &s.diagnostics) {
        *counts.entry(tag.kind).or_default() += 1;
    }
    counts
}
