//! Worked-example triples and argument text shared by tests and docs.

use crate::case::{Case, CaseTriple, FactorSet, Mode, Outcome};
use crate::catalog::FactorId;

pub fn fids(indices: &[u32]) -> FactorSet {
    indices.iter().map(|&i| FactorId::new(i).expect("index >= 1")).collect()
}

fn triple(id: &str, mode: Mode, complexity: u32, cc: &[u32], tsc1: (Outcome, &[u32]), tsc2: (Outcome, &[u32])) -> CaseTriple {
    CaseTriple {
        id: id.to_string(),
        mode,
        complexity,
        seed: 0,
        cc: Case::current(fids(cc)),
        tsc1: Case::precedent("TSC1", tsc1.0, fids(tsc1.1)),
        tsc2: Case::precedent("TSC2", tsc2.0, fids(tsc2.1)),
    }
}

/// The one-shot example carried in the argument-generation prompt.
pub fn example_triple() -> CaseTriple {
    triple(
        "worked-example",
        Mode::Arguable,
        5,
        &[1, 4, 6, 10, 12, 14, 21],
        (Outcome::Plaintiff, &[4, 6, 7, 8, 18]),
        (Outcome::Defendant, &[3, 4, 5, 6, 21]),
    )
}

pub fn sample_arguable() -> CaseTriple {
    triple(
        "sample-arguable",
        Mode::Arguable,
        3,
        &[4, 5, 23],
        (Outcome::Plaintiff, &[2, 4, 16]),
        (Outcome::Defendant, &[2, 5, 12]),
    )
}

pub fn sample_reordered() -> CaseTriple {
    triple(
        "sample-reordered",
        Mode::Reordered,
        3,
        &[4, 5, 23],
        (Outcome::Defendant, &[2, 5, 12]),
        (Outcome::Plaintiff, &[2, 4, 16]),
    )
}

pub fn sample_non_arguable() -> CaseTriple {
    triple(
        "sample-non-arguable",
        Mode::NonArguable,
        2,
        &[6, 22],
        (Outcome::Plaintiff, &[1, 27]),
        (Outcome::Defendant, &[16, 24]),
    )
}

/// The example 3-ply argument for [`example_triple`], verbatim.
pub const EXAMPLE_ARGUMENT: &str = "\
Plaintiff's Argument: Factors F4 Agreed-not-to-disclose (P) and F6 Security-measures (P) were present in both the current case and TSC1, where the court found in favor of the Plaintiff. In Addition, Factors F12 Outsider-disclosures-restricted (P), F14 Restricted-materials-used (P), F21 Knew-info-confidential (P) are present in the current case and favor the Plaintiff.

Defendant's Counterargument: TSC1, cited by the plaintiff is distinguishable because factors F7 Brought-tools (P), F8 Competitive-advantage (P), and F18 Identical-products (P) were also present, but are not present in the current case. In addition, F1 Disclosure-in-negotiations (D) and F10 Secrets-disclosed-outsiders (D) are pro-defendant strengths present in the current case but not in TSC1. TSC2 is a counterexample to TSC1. In TSC2, F4 Agreed-not-to-disclose (P), F6 Security-measures (P), and F21 Knew-info-confidential (P) were present in both the current case and TSC2 and the court found in favor of the Defendant.

Plaintiff's Rebuttal: TSC2, cited by the Defendant is distinguishable. In TSC2, the additional factors F5 Agreement-not-specific (D) and F3 Employee-sole-developer (D) were present and are not present in the current case. Also, F12 Outsider-disclosures-restricted (P) and F14 Restricted-materials-used (P) are present in the current case but not in TSC2.
";

