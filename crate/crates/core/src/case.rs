//! Factor-represented cases, case triples and the set relations between them.
//!
//! Dataset files hold one [`CaseTriple`] per line as JSON:
//!
//! ```text
//! {"id":"arguable-s7-0000","mode":"arguable","complexity":12,"seed":...,
//!  "cc":{"name":"Current Case","factors":["F1","F4"]},
//!  "tsc1":{"name":"TSC1","outcome":"Plaintiff","factors":["F4"]},
//!  "tsc2":{"name":"TSC2","outcome":"Defendant","factors":["F4"]}}
//! ```
//!
//! Factor lists are always written in ascending id order.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::catalog::{Catalog, FactorId, Side};

pub type FactorSet = BTreeSet<FactorId>;

pub const CURRENT_CASE_NAME: &str = "Current Case";

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("triple {triple}: {case} references unknown factor {factor}")]
    UnknownFactor { triple: String, case: CaseRole, factor: FactorId },
    #[error("triple {triple}: current case must not carry an outcome")]
    CurrentCaseOutcome { triple: String },
    #[error("triple {triple}: precedent {case} has no outcome")]
    MissingOutcome { triple: String, case: CaseRole },
    #[error("triple {triple}: {case} has an empty factor list")]
    EmptyCase { triple: String, case: CaseRole },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("duplicate triple id {0}")]
    DuplicateId(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Plaintiff,
    Defendant,
}

impl Outcome {
    pub fn side(self) -> Side {
        match self {
            Outcome::Plaintiff => Side::Plaintiff,
            Outcome::Defendant => Side::Defendant,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Plaintiff => "Plaintiff",
            Outcome::Defendant => "Defendant",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CaseRole {
    #[serde(rename = "CC")]
    Cc,
    #[serde(rename = "TSC1")]
    Tsc1,
    #[serde(rename = "TSC2")]
    Tsc2,
}

impl CaseRole {
    pub const ALL: [CaseRole; 3] = [CaseRole::Cc, CaseRole::Tsc1, CaseRole::Tsc2];

    pub fn label(self) -> &'static str {
        match self {
            CaseRole::Cc => "CC",
            CaseRole::Tsc1 => "TSC1",
            CaseRole::Tsc2 => "TSC2",
        }
    }

    /// The other precedent; `Cc` maps to itself.
    pub fn other_precedent(self) -> CaseRole {
        match self {
            CaseRole::Cc => CaseRole::Cc,
            CaseRole::Tsc1 => CaseRole::Tsc2,
            CaseRole::Tsc2 => CaseRole::Tsc1,
        }
    }
}

impl fmt::Display for CaseRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Arguable,
    Reordered,
    NonArguable,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Arguable, Mode::Reordered, Mode::NonArguable];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Arguable => "arguable",
            Mode::Reordered => "reordered",
            Mode::NonArguable => "non-arguable",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "arguable" => Ok(Mode::Arguable),
            "reordered" => Ok(Mode::Reordered),
            "non-arguable" | "nonarguable" => Ok(Mode::NonArguable),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Case {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    pub factors: FactorSet,
}

impl Case {
    pub fn current(factors: impl IntoIterator<Item = FactorId>) -> Case {
        Case { name: CURRENT_CASE_NAME.to_string(), outcome: None, factors: factors.into_iter().collect() }
    }

    pub fn precedent(name: &str, outcome: Outcome, factors: impl IntoIterator<Item = FactorId>) -> Case {
        Case { name: name.to_string(), outcome: Some(outcome), factors: factors.into_iter().collect() }
    }
}

/// `a.factors ∩ b.factors`.
pub fn common_factors(a: &Case, b: &Case) -> FactorSet {
    a.factors.intersection(&b.factors).copied().collect()
}

/// Factors in `target` but not in `other`, optionally restricted to one side.
/// Factors missing from the catalog never pass a side filter.
pub fn distinguishing_factors(target: &Case, other: &Case, side: Option<Side>, catalog: &Catalog) -> FactorSet {
    target
        .factors
        .difference(&other.factors)
        .copied()
        .filter(|&f| side.is_none_or(|s| catalog.side_of(f) == Some(s)))
        .collect()
}

pub fn filter_side(factors: &FactorSet, side: Side, catalog: &Catalog) -> FactorSet {
    factors.iter().copied().filter(|&f| catalog.side_of(f) == Some(side)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseTriple {
    pub id: String,
    pub mode: Mode,
    pub complexity: u32,
    pub seed: u64,
    pub cc: Case,
    pub tsc1: Case,
    pub tsc2: Case,
}

impl CaseTriple {
    pub fn case(&self, role: CaseRole) -> &Case {
        match role {
            CaseRole::Cc => &self.cc,
            CaseRole::Tsc1 => &self.tsc1,
            CaseRole::Tsc2 => &self.tsc2,
        }
    }

    /// N_GT: per-case factor counts summed, so a factor shared by two cases counts twice.
    pub fn total_ground_truth(&self) -> usize {
        CaseRole::ALL.iter().map(|&r| self.case(r).factors.len()).sum()
    }

    /// The first precedent whose outcome is `outcome`.
    pub fn precedent_with_outcome(&self, outcome: Outcome) -> Option<CaseRole> {
        [CaseRole::Tsc1, CaseRole::Tsc2]
            .into_iter()
            .find(|&r| self.case(r).outcome == Some(outcome))
    }

    /// True when the current case shares nothing with at least one precedent.
    pub fn requires_abstention(&self) -> bool {
        common_factors(&self.cc, &self.tsc1).is_empty() || common_factors(&self.cc, &self.tsc2).is_empty()
    }

    pub fn validate(&self, catalog: &Catalog) -> Result<(), CaseError> {
        if self.cc.outcome.is_some() {
            return Err(CaseError::CurrentCaseOutcome { triple: self.id.clone() });
        }
        for role in CaseRole::ALL {
            let case = self.case(role);
            if role != CaseRole::Cc && case.outcome.is_none() {
                return Err(CaseError::MissingOutcome { triple: self.id.clone(), case: role });
            }
            if case.factors.is_empty() {
                return Err(CaseError::EmptyCase { triple: self.id.clone(), case: role });
            }
            if let Some(&factor) = case.factors.iter().find(|f| !catalog.contains(**f)) {
                return Err(CaseError::UnknownFactor { triple: self.id.clone(), case: role, factor });
            }
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("triple serializes")
    }
}

pub fn total_ground_truth(triple: &CaseTriple) -> usize {
    triple.total_ground_truth()
}

/// Serializes triples as JSON lines.
pub fn dataset_to_string(triples: &[CaseTriple]) -> String {
    let mut out = String::new();
    for t in triples {
        out.push_str(&t.to_json_line());
        out.push('\n');
    }
    out
}

pub fn write_dataset(path: &Path, triples: &[CaseTriple]) -> Result<(), CaseError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(dataset_to_string(triples).as_bytes())?;
    Ok(())
}

pub fn parse_dataset(text: &str, origin: &str) -> Result<Vec<CaseTriple>, CaseError> {
    let mut triples = Vec::new();
    let mut seen = BTreeSet::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let t: CaseTriple = serde_json::from_str(line).map_err(|e| CaseError::Parse {
            path: origin.to_string(),
            line: n + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(t.id.clone()) {
            return Err(CaseError::DuplicateId(t.id));
        }
        triples.push(t);
    }
    Ok(triples)
}

pub fn read_dataset(path: &Path) -> Result<Vec<CaseTriple>, CaseError> {
    let file = std::fs::File::open(path)?;
    let mut text = String::new();
    for line in std::io::BufReader::new(file).lines() {
        text.push_str(&line?);
        text.push('\n');
    }
    parse_dataset(&text, &path.display().to_string())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
