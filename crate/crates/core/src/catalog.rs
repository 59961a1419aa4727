//! Factor vocabulary: identifiers, canonical names and the side each factor favors.
//!
//! Catalog files are line-oriented, one factor per line in the same form the
//! factor appears in prompts and arguments:
//!
//! ```text
//! F4 Agreed-not-to-disclose (P)
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

const DEFAULT_CATALOG: &str = include_str!("../assets/catalog.txt");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CatalogError {
    #[error("empty catalog")]
    Empty,
    #[error("line {line}: duplicate factor id {id}")]
    DuplicateId { line: usize, id: FactorId },
    #[error("line {line}: unknown side token `{token}`")]
    UnknownSide { line: usize, token: String },
    #[error("line {line}: malformed row `{row}`")]
    MalformedRow { line: usize, row: String },
    #[error("invalid factor id `{0}`")]
    InvalidId(String),
    #[error("reading catalog: {0}")]
    Io(String),
}

/// Factor identifier, rendered `F<index>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FactorId(u32);

impl FactorId {
    pub fn new(index: u32) -> Option<Self> {
        (index >= 1).then_some(Self(index))
    }

    pub fn index(self) -> u32 {
        self.0
    }
}

impl fmt::Display for FactorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F{}", self.0)
    }
}

impl FromStr for FactorId {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s
            .strip_prefix('F')
            .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()) && !d.starts_with('0'))
            .ok_or_else(|| CatalogError::InvalidId(s.to_string()))?;
        digits
            .parse::<u32>()
            .ok()
            .and_then(FactorId::new)
            .ok_or_else(|| CatalogError::InvalidId(s.to_string()))
    }
}

impl Serialize for FactorId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FactorId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The party a factor typically favors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    Plaintiff,
    Defendant,
}

impl Side {
    pub fn token(self) -> &'static str {
        match self {
            Side::Plaintiff => "(P)",
            Side::Defendant => "(D)",
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Plaintiff => Side::Defendant,
            Side::Defendant => Side::Plaintiff,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "(P)" => Ok(Side::Plaintiff),
            "(D)" => Ok(Side::Defendant),
            other => Err(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Factor {
    pub id: FactorId,
    pub name: String,
    pub side: Side,
}

impl Factor {
    /// Parses a single `F<n> <Name> (<P|D>)` row. Line numbers in errors are 1.
    pub fn parse_row(row: &str) -> Result<Factor, CatalogError> {
        parse_row(row, 1)
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.id, self.name, self.side)
    }
}

/// An immutable, validated set of factors keyed by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Catalog {
    entries: Vec<Factor>,
    index: BTreeMap<FactorId, usize>,
}

impl Catalog {
    /// The embedded 26-factor trade-secret catalog.
    pub fn default_catalog() -> Catalog {
        Catalog::parse(DEFAULT_CATALOG).expect("embedded catalog is valid")
    }

    /// Loads a catalog from `path`, or the embedded default when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Catalog, CatalogError> {
        match path {
            None => Ok(Catalog::default_catalog()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CatalogError::Io(format!("{}: {e}", p.display())))?;
                Catalog::parse(&text)
            }
        }
    }

    pub fn parse(text: &str) -> Result<Catalog, CatalogError> {
        let mut entries = Vec::new();
        let mut index = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let factor = parse_row(line, n + 1)?;
            if index.insert(factor.id, 0).is_some() {
                return Err(CatalogError::DuplicateId { line: n + 1, id: factor.id });
            }
            entries.push(factor);
        }
        Catalog::from_factors(entries)
    }

    pub fn from_factors(mut entries: Vec<Factor>) -> Result<Catalog, CatalogError> {
        if entries.is_empty() {
            return Err(CatalogError::Empty);
        }
        entries.sort_by_key(|f| f.id);
        let mut index = BTreeMap::new();
        for (i, f) in entries.iter().enumerate() {
            if index.insert(f.id, i).is_some() {
                return Err(CatalogError::DuplicateId { line: 0, id: f.id });
            }
        }
        Ok(Catalog { entries, index })
    }

    pub fn lookup(&self, id: FactorId) -> Option<&Factor> {
        self.index.get(&id).map(|&i| &self.entries[i])
    }

    pub fn contains(&self, id: FactorId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn side_of(&self, id: FactorId) -> Option<Side> {
        self.lookup(id).map(|f| f.side)
    }

    /// Entries in ascending id order.
    pub fn entries(&self) -> &[Factor] {
        &self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = FactorId> + '_ {
        self.entries.iter().map(|f| f.id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Renders a factor as `F<n> <Name> (<P|D>)`, or the bare id when unknown.
    pub fn render(&self, id: FactorId) -> String {
        match self.lookup(id) {
            Some(f) => f.to_string(),
            None => id.to_string(),
        }
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|f| format!("{f}\n")).collect()
    }
}

fn parse_row(line: &str, n: usize) -> Result<Factor, CatalogError> {
    let malformed = || CatalogError::MalformedRow { line: n, row: line.to_string() };
    let mut parts = line.split_whitespace();
    let (Some(id), Some(name), Some(side), None) = (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return Err(malformed());
    };
    // Tolerate the `F4:` form used in some listings.
    let id: FactorId = id.trim_end_matches(':').parse().map_err(|_| malformed())?;
    if !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') || !name.starts_with(|c: char| c.is_ascii_alphabetic()) {
        return Err(malformed());
    }
    let side = side
        .parse::<Side>()
        .map_err(|token| CatalogError::UnknownSide { line: n, token })?;
    Ok(Factor { id, name: name.to_string(), side })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fid(n: u32) -> FactorId {
        FactorId::new(n).unwrap()
    }

    #[test]
    fn parses_table_rows() {
        let f = Factor::parse_row("F1 Disclosure-in-negotiations (D)").unwrap();
        assert_eq!(f, Factor { id: fid(1), name: "Disclosure-in-negotiations".into(), side: Side::Defendant });
        let f = Factor::parse_row("F27 Disclosure-in-public-forum (D)").unwrap();
        assert_eq!(f.id, fid(27));
        assert_eq!(f.side, Side::Defendant);
    }

    #[test]
    fn empty_document_is_rejected() {
        assert_eq!(Catalog::parse(""), Err(CatalogError::Empty));
        assert_eq!(Catalog::parse("# only a comment\n\n"), Err(CatalogError::Empty));
    }

    #[test]
    fn duplicate_and_bad_side_rejected() {
        let dup = "F1 A-b (D)\nF1 C-d (P)\n";
        assert!(matches!(Catalog::parse(dup), Err(CatalogError::DuplicateId { line: 2, .. })));
        let bad = "F1 A-b (X)\n";
        assert!(matches!(Catalog::parse(bad), Err(CatalogError::UnknownSide { line: 1, .. })));
        for row in ["F1 Two words (P)", "X1 Name (P)", "F0 Name (P)", "F1 (P)", "F01 Name (P)"] {
            assert!(Catalog::parse(row).is_err(), "{row}");
        }
    }

    #[test]
    fn default_catalog_shape() {
        let c = Catalog::default_catalog();
        assert_eq!(c.len(), 26);
        let f4 = c.lookup(fid(4)).unwrap();
        assert_eq!(f4.to_string(), "F4 Agreed-not-to-disclose (P)");
        assert!(c.lookup(fid(9)).is_none());
        let ids: Vec<u32> = c.ids().map(FactorId::index).collect();
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
    }

    /// Every factor the worked examples and error boxes mention, verbatim.
    #[test]
    fn default_catalog_contains_every_named_factor() {
        let named = [
            "F1 Disclosure-in-negotiations (D)",
            "F2 Bribe-employee (P)",
            "F3 Employee-sole-developer (D)",
            "F4 Agreed-not-to-disclose (P)",
            "F5 Agreement-not-specific (D)",
            "F6 Security-measures (P)",
            "F7 Brought-tools (P)",
            "F8 Competitive-advantage (P)",
            "F10 Secrets-disclosed-outsiders (D)",
            "F12 Outsider-disclosures-restricted (P)",
            "F14 Restricted-materials-used (P)",
            "F16 Info-reverse-engineerable (D)",
            "F18 Identical-products (P)",
            "F21 Knew-info-confidential (P)",
            "F22 Invasive-techniques (P)",
            "F23 Waiver-of-confidentiality (D)",
            "F24 Info-obtainable-elsewhere (D)",
            "F25 Info-reverse-engineered (D)",
            "F26 Deception (P)",
            "F27 Disclosure-in-public-forum (D)",
        ];
        let c = Catalog::default_catalog();
        for row in named {
            let f = Factor::parse_row(row).unwrap();
            assert_eq!(c.lookup(f.id), Some(&f), "{row}");
        }
    }

    #[test]
    fn single_entry_lookup() {
        let c = Catalog::parse("F3 Employee-sole-developer (D)").unwrap();
        assert_eq!(c.lookup(fid(3)).unwrap().name, "Employee-sole-developer");
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn text_round_trip() {
        let c = Catalog::default_catalog();
        assert_eq!(Catalog::parse(&c.to_text()).unwrap(), c);
    }

    proptest::proptest! {
        #[test]
        fn factor_render_parse_round_trip(
            idx in 1u32..10_000,
            words in proptest::collection::vec("[A-Za-z][a-z0-9]{0,8}", 1..5),
            plaintiff in proptest::bool::ANY,
        ) {
            let side = if plaintiff { Side::Plaintiff } else { Side::Defendant };
            let f = Factor { id: fid(idx), name: words.join("-"), side };
            proptest::prop_assert_eq!(Factor::parse_row(&f.to_string()).unwrap(), f);
        }
    }
}
