//! Rendered prompts and arguments compared against files in `tests/golden/`.
//! Set `UPDATE_GOLDEN=1` to rewrite them.

use std::path::PathBuf;

use plyeval_core::arguer::{argue, render};
use plyeval_core::case::CaseTriple;
use plyeval_core::catalog::Catalog;
use plyeval_core::fixtures::{example_triple, sample_arguable, sample_non_arguable, sample_reordered, EXAMPLE_ARGUMENT};
use plyeval_core::prompt::{build_argument_prompt, build_extraction_prompt};

fn check(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "{name} differs from golden file");
}

fn triples() -> Vec<CaseTriple> {
    vec![example_triple(), sample_arguable(), sample_reordered(), sample_non_arguable()]
}

#[test]
fn argument_prompts() {
    let cat = Catalog::default_catalog();
    for t in triples() {
        check(&format!("{}.prompt.txt", t.id), &build_argument_prompt(&t, &cat).unwrap());
    }
}

#[test]
fn oracle_arguments() {
    let cat = Catalog::default_catalog();
    for t in triples() {
        check(&format!("{}.argument.txt", t.id), &render(&argue(&t, &cat).unwrap(), &cat));
    }
}

#[test]
fn extraction_prompt() {
    check("worked-example.extraction.txt", &build_extraction_prompt(EXAMPLE_ARGUMENT).unwrap());
}

/// Sentence skeleton with factor mentions removed, plus the factor set it mentions.
fn sentences(text: &str) -> Vec<(String, Vec<String>)> {
    let factor = regex::Regex::new(r"F\d+ [A-Za-z-]+ \([PD]\)").unwrap();
    text.split(". ")
        .map(|s| {
            let mut ids: Vec<String> = factor.find_iter(s).map(|m| m.as_str().to_string()).collect();
            ids.sort();
            let skeleton = factor.replace_all(s, "#").replace(',', " ").to_lowercase();
            let words: Vec<&str> = skeleton.split_whitespace().filter(|w| *w != "and" && *w != "#").collect();
            (words.join(" "), ids)
        })
        .collect()
}

#[test]
fn example_oracle_matches_worked_example() {
    let cat = Catalog::default_catalog();
    let text = render(&argue(&example_triple(), &cat).unwrap(), &cat);
    assert_eq!(sentences(&text), sentences(EXAMPLE_ARGUMENT));
}
