//! Deterministic 3-ply arguer.
//!
//! Produces the plaintiff's argument, the defendant's counterargument and the
//! plaintiff's rebuttal from set relations alone, in the sentence patterns of
//! the one-shot example the generation prompt carries. It abstains when the
//! current case shares no factor with either precedent.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{common_factors, distinguishing_factors, CaseError, CaseRole, CaseTriple, FactorSet, Outcome};
use crate::catalog::{Catalog, FactorId, Side};
use crate::extract::CANONICAL_ABSTENTION;

#[derive(Debug, Error)]
pub enum ArgueError {
    #[error(transparent)]
    Invalid(#[from] CaseError),
    #[error("triple {triple}: no precedent with outcome {outcome}")]
    MissingPrecedent { triple: String, outcome: Outcome },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlyRole {
    PlaintiffArgument,
    DefendantCounterargument,
    PlaintiffRebuttal,
}

impl PlyRole {
    pub fn label(self) -> &'static str {
        match self {
            PlyRole::PlaintiffArgument => "Plaintiff's Argument",
            PlyRole::DefendantCounterargument => "Defendant's Counterargument",
            PlyRole::PlaintiffRebuttal => "Plaintiff's Rebuttal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    SharedWithCited,
    AdditionalInCC,
    DistinguishingInPrecedent,
    DistinguishingInCC,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorAssertion {
    pub factor: FactorId,
    pub asserted_in: BTreeSet<CaseRole>,
    pub relation: Relation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ply {
    pub role: PlyRole,
    pub cited_case: Option<CaseRole>,
    pub assertions: Vec<FactorAssertion>,
}

impl Ply {
    fn bucket(&self, relation: Relation) -> Vec<FactorId> {
        self.assertions.iter().filter(|a| a.relation == relation).map(|a| a.factor).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreePlyArgument {
    pub plies: Vec<Ply>,
    pub abstained: bool,
    pub abstention_text: Option<String>,
    pub raw_text: String,
}

impl ThreePlyArgument {
    /// Factors asserted present, per case. Every role has an entry.
    pub fn asserted_sets(&self) -> BTreeMap<CaseRole, FactorSet> {
        let mut out: BTreeMap<CaseRole, FactorSet> = CaseRole::ALL.iter().map(|&r| (r, FactorSet::new())).collect();
        for a in self.plies.iter().flat_map(|p| &p.assertions) {
            for role in &a.asserted_in {
                out.entry(*role).or_default().insert(a.factor);
            }
        }
        out
    }

    fn abstention() -> Self {
        ThreePlyArgument {
            plies: Vec::new(),
            abstained: true,
            abstention_text: Some(CANONICAL_ABSTENTION.to_string()),
            raw_text: CANONICAL_ABSTENTION.to_string(),
        }
    }
}

fn assertions<'a>(factors: &'a FactorSet, relation: Relation, roles: &[CaseRole]) -> impl Iterator<Item = FactorAssertion> + 'a {
    let asserted_in: BTreeSet<CaseRole> = roles.iter().copied().collect();
    factors
        .iter()
        .map(move |&factor| FactorAssertion { factor, asserted_in: asserted_in.clone(), relation })
}

/// Builds the 3-ply argument for `triple`, or the canonical abstention.
pub fn argue(triple: &CaseTriple, catalog: &Catalog) -> Result<ThreePlyArgument, ArgueError> {
    triple.validate(catalog)?;
    let missing = |outcome| ArgueError::MissingPrecedent { triple: triple.id.clone(), outcome };
    let p_role = triple.precedent_with_outcome(Outcome::Plaintiff).ok_or_else(|| missing(Outcome::Plaintiff))?;
    let d_role = triple.precedent_with_outcome(Outcome::Defendant).ok_or_else(|| missing(Outcome::Defendant))?;
    let (cc, p_case, d_case) = (&triple.cc, triple.case(p_role), triple.case(d_role));

    let shared_p = common_factors(cc, p_case);
    let shared_d = common_factors(cc, d_case);
    if shared_p.is_empty() || shared_d.is_empty() {
        return Ok(ThreePlyArgument::abstention());
    }

    let cc_role = CaseRole::Cc;
    let ply1 = Ply {
        role: PlyRole::PlaintiffArgument,
        cited_case: Some(p_role),
        assertions: assertions(&shared_p, Relation::SharedWithCited, &[cc_role, p_role])
            .chain(assertions(
                &distinguishing_factors(cc, p_case, Some(Side::Plaintiff), catalog),
                Relation::AdditionalInCC,
                &[cc_role],
            ))
            .collect(),
    };
    let ply2 = Ply {
        role: PlyRole::DefendantCounterargument,
        cited_case: Some(d_role),
        assertions: assertions(&distinguishing_factors(p_case, cc, None, catalog), Relation::DistinguishingInPrecedent, &[p_role])
            .chain(assertions(
                &distinguishing_factors(cc, p_case, Some(Side::Defendant), catalog),
                Relation::DistinguishingInCC,
                &[cc_role],
            ))
            .chain(assertions(&shared_d, Relation::SharedWithCited, &[cc_role, d_role]))
            .collect(),
    };
    let ply3 = Ply {
        role: PlyRole::PlaintiffRebuttal,
        cited_case: None,
        assertions: assertions(&distinguishing_factors(d_case, cc, None, catalog), Relation::DistinguishingInPrecedent, &[d_role])
            .chain(assertions(
                &distinguishing_factors(cc, d_case, Some(Side::Plaintiff), catalog),
                Relation::DistinguishingInCC,
                &[cc_role],
            ))
            .collect(),
    };

    let mut argument = ThreePlyArgument {
        plies: vec![ply1, ply2, ply3],
        abstained: false,
        abstention_text: None,
        raw_text: String::new(),
    };
    argument.raw_text = render(&argument, catalog);
    Ok(argument)
}

struct Phrase {
    list: String,
    plural: bool,
}

impl Phrase {
    fn new(factors: &[FactorId], catalog: &Catalog) -> Option<Phrase> {
        let items: Vec<String> = factors.iter().map(|&f| catalog.render(f)).collect();
        let list = match items.as_slice() {
            [] => return None,
            [one] => one.clone(),
            [a, b] => format!("{a} and {b}"),
            [init @ .., last] => format!("{}, and {last}", init.join(", ")),
        };
        Some(Phrase { list, plural: items.len() > 1 })
    }

    fn pick<'a>(&self, singular: &'a str, plural: &'a str) -> &'a str {
        if self.plural {
            plural
        } else {
            singular
        }
    }
}

/// Renders the argument as three labeled paragraphs, or the abstention phrase alone.
/// Sentences whose factor bucket is empty are omitted.
pub fn render(argument: &ThreePlyArgument, catalog: &Catalog) -> String {
    if argument.abstained {
        return argument.abstention_text.clone().unwrap_or_else(|| CANONICAL_ABSTENTION.to_string());
    }
    let p = argument.plies.first().and_then(|p| p.cited_case).unwrap_or(CaseRole::Tsc1).label();
    let d = argument.plies.get(1).and_then(|p| p.cited_case).unwrap_or(CaseRole::Tsc2).label();

    let mut paragraphs = Vec::new();
    for ply in &argument.plies {
        let phrase = |rel| Phrase::new(&ply.bucket(rel), catalog);
        let mut s: Vec<String> = Vec::new();
        match ply.role {
            PlyRole::PlaintiffArgument => {
                if let Some(x) = phrase(Relation::SharedWithCited) {
                    s.push(format!(
                        "{} {} {} present in both the current case and {p}, where the court found in favor of the Plaintiff.",
                        x.pick("Factor", "Factors"),
                        x.list,
                        x.pick("was", "were")
                    ));
                }
                if let Some(x) = phrase(Relation::AdditionalInCC) {
                    s.push(format!(
                        "In Addition, {} {} {} present in the current case and {} the Plaintiff.",
                        x.pick("Factor", "Factors"),
                        x.list,
                        x.pick("is", "are"),
                        x.pick("favors", "favor")
                    ));
                }
            }
            PlyRole::DefendantCounterargument => {
                let distinguished = phrase(Relation::DistinguishingInPrecedent);
                if let Some(x) = &distinguished {
                    s.push(format!(
                        "{p}, cited by the plaintiff is distinguishable because {} {} {} also present, but {} not present in the current case.",
                        x.pick("factor", "factors"),
                        x.list,
                        x.pick("was", "were"),
                        x.pick("is", "are")
                    ));
                }
                if let Some(x) = phrase(Relation::DistinguishingInCC) {
                    s.push(format!(
                        "{}{} {} present in the current case but not in {p}.",
                        if distinguished.is_some() { "In addition, " } else { "" },
                        x.list,
                        x.pick("is a pro-defendant strength", "are pro-defendant strengths")
                    ));
                }
                s.push(format!("{d} is a counterexample to {p}."));
                if let Some(x) = phrase(Relation::SharedWithCited) {
                    s.push(format!(
                        "In {d}, {} {} present in both the current case and {d} and the court found in favor of the Defendant.",
                        x.list,
                        x.pick("was", "were")
                    ));
                }
            }
            PlyRole::PlaintiffRebuttal => {
                s.push(format!("{d}, cited by the Defendant is distinguishable."));
                if let Some(x) = phrase(Relation::DistinguishingInPrecedent) {
                    s.push(format!(
                        "In {d}, the additional {} {} {} present and {} not present in the current case.",
                        x.pick("factor", "factors"),
                        x.list,
                        x.pick("was", "were"),
                        x.pick("is", "are")
                    ));
                }
                if let Some(x) = phrase(Relation::DistinguishingInCC) {
                    s.push(format!(
                        "Also, {} {} present in the current case but not in {d}.",
                        x.list,
                        x.pick("is", "are")
                    ));
                }
            }
        }
        paragraphs.push(format!("{}: {}", ply.role.label(), s.join(" ")));
    }
    let mut text = paragraphs.join("\n\n");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{Case, Mode};
    use crate::fixtures::{example_triple, fids, sample_non_arguable};

    fn bucket(arg: &ThreePlyArgument, ply: usize, rel: Relation) -> FactorSet {
        arg.plies[ply].bucket(rel).into_iter().collect()
    }

    #[test]
    fn example_buckets() {
        let cat = Catalog::default_catalog();
        let arg = argue(&example_triple(), &cat).unwrap();
        assert!(!arg.abstained);
        assert_eq!(arg.plies.len(), 3);
        assert_eq!(arg.plies[0].cited_case, Some(CaseRole::Tsc1));
        assert_eq!(arg.plies[1].cited_case, Some(CaseRole::Tsc2));
        assert_eq!(bucket(&arg, 0, Relation::SharedWithCited), fids(&[4, 6]));
        assert_eq!(bucket(&arg, 0, Relation::AdditionalInCC), fids(&[12, 14, 21]));
        assert_eq!(bucket(&arg, 1, Relation::DistinguishingInPrecedent), fids(&[7, 8, 18]));
        assert_eq!(bucket(&arg, 1, Relation::DistinguishingInCC), fids(&[1, 10]));
        assert_eq!(bucket(&arg, 1, Relation::SharedWithCited), fids(&[4, 6, 21]));
        assert_eq!(bucket(&arg, 2, Relation::DistinguishingInPrecedent), fids(&[3, 5]));
        assert_eq!(bucket(&arg, 2, Relation::DistinguishingInCC), fids(&[12, 14]));
    }

    #[test]
    fn example_rendering_phrases() {
        let cat = Catalog::default_catalog();
        let text = argue(&example_triple(), &cat).unwrap().raw_text;
        assert!(text.starts_with("Plaintiff's Argument: Factors F4 Agreed-not-to-disclose (P) and F6 Security-measures (P) were present in both the current case and TSC1, where the court found in favor of the Plaintiff."));
        assert!(text.contains("were present in both the current case and TSC1"));
        assert!(text.contains("\n\nDefendant's Counterargument: TSC1, cited by the plaintiff is distinguishable because factors F7 Brought-tools (P), F8 Competitive-advantage (P), and F18 Identical-products (P) were also present, but are not present in the current case."));
        assert!(text.contains("In TSC2, F4 Agreed-not-to-disclose (P), F6 Security-measures (P), and F21 Knew-info-confidential (P) were present in both the current case and TSC2 and the court found in favor of the Defendant."));
        assert!(text.contains("Plaintiff's Rebuttal: TSC2, cited by the Defendant is distinguishable."));
    }

    #[test]
    fn faithful_by_construction() {
        let cat = Catalog::default_catalog();
        let t = example_triple();
        let arg = argue(&t, &cat).unwrap();
        for a in arg.plies.iter().flat_map(|p| &p.assertions) {
            assert!(!a.asserted_in.is_empty());
            for r in &a.asserted_in {
                assert!(t.case(*r).factors.contains(&a.factor));
            }
        }
        for r in CaseRole::ALL {
            assert_eq!(arg.asserted_sets()[&r], t.case(r).factors);
        }
    }

    #[test]
    fn non_arguable_abstains() {
        let cat = Catalog::default_catalog();
        let arg = argue(&sample_non_arguable(), &cat).unwrap();
        assert!(arg.abstained);
        assert!(arg.plies.is_empty());
        assert_eq!(render(&arg, &cat), "No common factor between the input current case and the TSC1/TSC2");
    }

    #[test]
    fn one_sided_overlap_still_abstains() {
        let cat = Catalog::default_catalog();
        let mut t = example_triple();
        t.tsc2 = Case::precedent("TSC2", Outcome::Defendant, fids(&[3, 5]));
        assert!(argue(&t, &cat).unwrap().abstained);
    }

    #[test]
    fn reordered_example_swaps_cited_roles() {
        let cat = Catalog::default_catalog();
        let t = example_triple();
        let mut swapped = t.clone();
        swapped.mode = Mode::Reordered;
        swapped.tsc1 = Case { name: "TSC1".into(), ..t.tsc2.clone() };
        swapped.tsc2 = Case { name: "TSC2".into(), ..t.tsc1.clone() };
        let a = argue(&t, &cat).unwrap();
        let b = argue(&swapped, &cat).unwrap();
        let relabel = |r: CaseRole| r.other_precedent();
        let mut expected = a.plies.clone();
        for ply in &mut expected {
            ply.cited_case = ply.cited_case.map(relabel);
            for asr in &mut ply.assertions {
                asr.asserted_in = asr.asserted_in.iter().map(|&r| relabel(r)).collect();
            }
        }
        assert_eq!(b.plies, expected);
        assert!(b.raw_text.contains("were present in both the current case and TSC2, where the court found in favor of the Plaintiff"));
        assert!(b.raw_text.contains("TSC1 is a counterexample to TSC2."));
    }

    #[test]
    fn empty_bucket_sentence_omitted() {
        let cat = Catalog::default_catalog();
        // CC has no pro-P factor outside TSC1, so ply 1 has no "In Addition" sentence,
        // and TSC2 adds nothing beyond CC, so ply 3 has no "additional factors" sentence.
        let mut t = example_triple();
        t.cc = Case::current(fids(&[1, 4, 6]));
        t.tsc2 = Case::precedent("TSC2", Outcome::Defendant, fids(&[1, 4]));
        let text = argue(&t, &cat).unwrap().raw_text;
        assert!(!text.contains("In Addition"));
        assert!(!text.contains("the additional factor"));
        assert!(text.contains("Also, F6 Security-measures (P) is present in the current case but not in TSC2."));
        assert!(text.contains("F1 Disclosure-in-negotiations (D) is a pro-defendant strength present in the current case but not in TSC1."));
    }

    #[test]
    fn unknown_factor_is_an_error() {
        let cat = Catalog::default_catalog();
        let mut t = example_triple();
        t.cc.factors.insert(FactorId::new(99).unwrap());
        assert!(matches!(argue(&t, &cat), Err(ArgueError::Invalid(_))));
    }
}
