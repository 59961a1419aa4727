//! Seeded synthesis of case triples in the three scenario modes.
//!
//! Each triple gets its own ChaCha stream seeded from `(spec.seed, index)`, so
//! output does not depend on generation order. Cases are drawn with uniform
//! sizes in `[complexity - 1, complexity + 1]` and uniform factor subsets, then
//! rejected until [`verify_mode_constraints`] passes.

use std::fmt;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{common_factors, filter_side, Case, CaseRole, CaseTriple, FactorSet, Mode, Outcome};
use crate::catalog::{Catalog, FactorId, Side};

pub const DEFAULT_MAX_ATTEMPTS: u32 = 10_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenerateError {
    #[error("complexity must be at least 2, got {0}")]
    ComplexityTooSmall(u32),
    #[error("could not satisfy {mode} constraints for triple {index} after {attempts} attempts (complexity {complexity}, catalog of {catalog_len})")]
    Infeasible { mode: Mode, index: usize, attempts: u32, complexity: u32, catalog_len: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenSpec {
    pub mode: Mode,
    pub count: usize,
    pub complexity: u32,
    pub seed: u64,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
}

fn default_attempts() -> u32 {
    DEFAULT_MAX_ATTEMPTS
}

impl GenSpec {
    pub fn new(mode: Mode, count: usize, complexity: u32, seed: u64) -> Self {
        GenSpec { mode, count, complexity, seed, max_attempts: DEFAULT_MAX_ATTEMPTS }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModeViolation {
    WrongOutcome { case: CaseRole, expected: Outcome, found: Option<Outcome> },
    NoSharedFactorOfSide { precedent: CaseRole, side: Side },
    SharesFactors { precedent: CaseRole, factors: FactorSet },
}

impl fmt::Display for ModeViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModeViolation::WrongOutcome { case, expected, found } => match found {
                Some(o) => write!(f, "{case} outcome is {o}, expected {expected}"),
                None => write!(f, "{case} has no outcome, expected {expected}"),
            },
            ModeViolation::NoSharedFactorOfSide { precedent, side } => {
                write!(f, "current case shares no {side} factor with {precedent}")
            }
            ModeViolation::SharesFactors { precedent, factors } => {
                let list: Vec<String> = factors.iter().map(ToString::to_string).collect();
                write!(f, "current case shares {} with {precedent}", list.join(", "))
            }
        }
    }
}

/// Checks the structural constraints of `triple.mode`. An empty list means the triple is sound.
pub fn verify_mode_constraints(triple: &CaseTriple, catalog: &Catalog) -> Vec<ModeViolation> {
    let mut out = Vec::new();
    let (tsc1_outcome, tsc2_outcome) = match triple.mode {
        Mode::Arguable | Mode::NonArguable => (Outcome::Plaintiff, Outcome::Defendant),
        Mode::Reordered => (Outcome::Defendant, Outcome::Plaintiff),
    };
    for (role, expected) in [(CaseRole::Tsc1, tsc1_outcome), (CaseRole::Tsc2, tsc2_outcome)] {
        let found = triple.case(role).outcome;
        if found != Some(expected) {
            out.push(ModeViolation::WrongOutcome { case: role, expected, found });
        }
    }
    for precedent in [CaseRole::Tsc1, CaseRole::Tsc2] {
        let shared = common_factors(&triple.cc, triple.case(precedent));
        match triple.mode {
            Mode::NonArguable => {
                if !shared.is_empty() {
                    out.push(ModeViolation::SharesFactors { precedent, factors: shared });
                }
            }
            Mode::Arguable | Mode::Reordered => {
                let expected = if precedent == CaseRole::Tsc1 { tsc1_outcome } else { tsc2_outcome };
                let side = expected.side();
                if filter_side(&shared, side, catalog).is_empty() {
                    out.push(ModeViolation::NoSharedFactorOfSide { precedent, side });
                }
            }
        }
    }
    out
}

/// Generates `spec.count` triples; identical inputs always give identical output.
pub fn generate(spec: &GenSpec, catalog: &Catalog) -> Result<Vec<CaseTriple>, GenerateError> {
    if spec.complexity < 2 {
        return Err(GenerateError::ComplexityTooSmall(spec.complexity));
    }
    (0..spec.count).map(|i| generate_one(spec, catalog, i)).collect()
}

fn generate_one(spec: &GenSpec, catalog: &Catalog, index: usize) -> Result<CaseTriple, GenerateError> {
    let seed = triple_seed(spec.seed, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool: Vec<FactorId> = catalog.ids().collect();
    let (tsc1_outcome, tsc2_outcome) = match spec.mode {
        Mode::Arguable | Mode::NonArguable => (Outcome::Plaintiff, Outcome::Defendant),
        Mode::Reordered => (Outcome::Defendant, Outcome::Plaintiff),
    };

    for _ in 0..spec.max_attempts {
        let sizes: [usize; 3] = std::array::from_fn(|_| rng.random_range(spec.complexity - 1..=spec.complexity + 1) as usize);
        let Some(cc) = draw(&mut rng, &pool, sizes[0]) else { continue };
        // Uniform subsets conditioned on disjointness are exactly uniform
        // subsets of the complement, so draw from it directly.
        let precedent_pool: Vec<FactorId> = match spec.mode {
            Mode::NonArguable => pool.iter().copied().filter(|f| !cc.contains(f)).collect(),
            Mode::Arguable | Mode::Reordered => pool.clone(),
        };
        let Some(f1) = draw(&mut rng, &precedent_pool, sizes[1]) else { continue };
        let Some(f2) = draw(&mut rng, &precedent_pool, sizes[2]) else { continue };
        let triple = CaseTriple {
            id: format!("{}-s{}-k{}-{:04}", spec.mode, spec.seed, spec.complexity, index),
            mode: spec.mode,
            complexity: spec.complexity,
            seed,
            cc: Case::current(cc),
            tsc1: Case::precedent("TSC1", tsc1_outcome, f1),
            tsc2: Case::precedent("TSC2", tsc2_outcome, f2),
        };
        if verify_mode_constraints(&triple, catalog).is_empty() {
            return Ok(triple);
        }
    }
    Err(GenerateError::Infeasible {
        mode: spec.mode,
        index,
        attempts: spec.max_attempts,
        complexity: spec.complexity,
        catalog_len: catalog.len(),
    })
}

fn draw(rng: &mut ChaCha8Rng, pool: &[FactorId], amount: usize) -> Option<FactorSet> {
    (amount <= pool.len()).then(|| sample(rng, pool.len(), amount).into_iter().map(|i| pool[i]).collect())
}

/// SplitMix64 finalizer over `(seed, index)`.
fn triple_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::dataset_to_string;
    use crate::fixtures::{sample_arguable, sample_non_arguable, sample_reordered};

    #[test]
    fn thirty_triples_at_complexity_twelve() {
        let cat = Catalog::default_catalog();
        for mode in Mode::ALL {
            let triples = generate(&GenSpec::new(mode, 30, 12, 2025), &cat).unwrap();
            assert_eq!(triples.len(), 30);
            for t in &triples {
                for r in CaseRole::ALL {
                    let n = t.case(r).factors.len();
                    assert!((11..=13).contains(&n), "{} {r} has {n}", t.id);
                }
                assert!(verify_mode_constraints(t, &cat).is_empty());
                assert!(t.validate(&cat).is_ok());
            }
        }
    }

    #[test]
    fn non_arguable_minimal_complexity() {
        let cat = Catalog::default_catalog();
        let t = &generate(&GenSpec::new(Mode::NonArguable, 1, 2, 9), &cat).unwrap()[0];
        assert!(common_factors(&t.cc, &t.tsc1).is_empty());
        assert!(common_factors(&t.cc, &t.tsc2).is_empty());
        assert_eq!(t.tsc1.outcome, Some(Outcome::Plaintiff));
    }

    #[test]
    fn zero_count_is_empty() {
        let cat = Catalog::default_catalog();
        assert!(generate(&GenSpec::new(Mode::Arguable, 0, 12, 1), &cat).unwrap().is_empty());
    }

    #[test]
    fn complexity_below_two_rejected() {
        let cat = Catalog::default_catalog();
        assert_eq!(
            generate(&GenSpec::new(Mode::Arguable, 1, 1, 1), &cat),
            Err(GenerateError::ComplexityTooSmall(1))
        );
    }

    #[test]
    fn infeasible_non_arguable_reported() {
        let cat = Catalog::default_catalog();
        let mut spec = GenSpec::new(Mode::NonArguable, 1, 15, 1);
        spec.max_attempts = 200;
        assert!(matches!(generate(&spec, &cat), Err(GenerateError::Infeasible { attempts: 200, .. })));
    }

    #[test]
    fn deterministic_and_order_independent() {
        let cat = Catalog::default_catalog();
        let spec = GenSpec::new(Mode::Reordered, 12, 6, 77);
        let a = dataset_to_string(&generate(&spec, &cat).unwrap());
        let b = dataset_to_string(&generate(&spec, &cat).unwrap());
        assert_eq!(a, b);
        let mut longer = spec.clone();
        longer.count = 20;
        let c = generate(&longer, &cat).unwrap();
        assert_eq!(dataset_to_string(&c[..12]), a);
    }

    #[test]
    fn samples_satisfy_their_modes() {
        let cat = Catalog::default_catalog();
        for t in [sample_arguable(), sample_reordered(), sample_non_arguable()] {
            assert_eq!(verify_mode_constraints(&t, &cat), vec![], "{}", t.id);
        }
    }

    #[test]
    fn outcome_negation_reported() {
        let cat = Catalog::default_catalog();
        let mut t = sample_arguable();
        t.tsc1.outcome = Some(Outcome::Defendant);
        let v = verify_mode_constraints(&t, &cat);
        assert!(v.contains(&ModeViolation::WrongOutcome {
            case: CaseRole::Tsc1,
            expected: Outcome::Plaintiff,
            found: Some(Outcome::Defendant)
        }));
    }

    #[test]
    fn shared_factor_side_checked() {
        let cat = Catalog::default_catalog();
        // Reordered row read as Arguable: TSC1 shares only the pro-D F5.
        let mut t = sample_reordered();
        t.mode = Mode::Arguable;
        t.tsc1.outcome = Some(Outcome::Plaintiff);
        t.tsc2.outcome = Some(Outcome::Defendant);
        let v = verify_mode_constraints(&t, &cat);
        assert!(v.contains(&ModeViolation::NoSharedFactorOfSide { precedent: CaseRole::Tsc1, side: Side::Plaintiff }));
        assert!(v.contains(&ModeViolation::NoSharedFactorOfSide { precedent: CaseRole::Tsc2, side: Side::Defendant }));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]
        #[test]
        fn generated_triples_are_sound(seed in proptest::num::u64::ANY, complexity in 2u32..13, m in 0usize..3) {
            let cat = Catalog::default_catalog();
            let spec = GenSpec::new(Mode::ALL[m], 4, complexity, seed);
            for t in generate(&spec, &cat).unwrap() {
                proptest::prop_assert!(verify_mode_constraints(&t, &cat).is_empty());
                for r in CaseRole::ALL {
                    let n = t.case(r).factors.len() as u32;
                    proptest::prop_assert!(n + 1 >= complexity && n <= complexity + 1);
                }
            }
        }
    }
}
