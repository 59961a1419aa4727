//! Plain-text and CSV rendering of aggregated results.
//!
//! Tables put models in rows and tests in columns: Acc_H over Tests 1-3,
//! Rec_U over Tests 1-2 and the abstention ratio for Test 3. Values use two
//! decimals; `-` marks a cell with no data and `n/a` a cell that is undefined
//! (Test 3 Acc_H when every triple abstained).

use std::fmt::Write;

use crate::metrics::{RunReport, TestKind};

const MISSING: &str = "-";
const UNDEFINED: &str = "n/a";

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), |x| format!("{x:.2}"))
}

fn models(reports: &[RunReport]) -> Vec<&str> {
    let mut seen: Vec<&str> = Vec::new();
    for r in reports {
        if !seen.contains(&r.model.as_str()) {
            seen.push(&r.model);
        }
    }
    seen
}

fn find<'a>(reports: &'a [RunReport], model: &str, test: TestKind) -> Option<&'a RunReport> {
    reports.iter().find(|r| r.model == model && r.test == test)
}

fn table(out: &mut String, title: &str, reports: &[RunReport], tests: &[TestKind], cell: impl Fn(&RunReport) -> String) {
    let rows: Vec<(&str, Vec<String>)> = models(reports)
        .into_iter()
        .map(|m| {
            let cells = tests.iter().map(|&t| find(reports, m, t).map_or_else(|| MISSING.to_string(), &cell)).collect();
            (m, cells)
        })
        .collect();
    let model_w = rows.iter().map(|(m, _)| m.len()).chain([5]).max().unwrap_or(5);
    let widths: Vec<usize> = tests
        .iter()
        .enumerate()
        .map(|(i, t)| rows.iter().map(|(_, c)| c[i].len()).chain([t.label().len()]).max().unwrap_or(0))
        .collect();

    writeln!(out, "{title}").unwrap();
    let mut header = format!("{:<model_w$}", "Model");
    for (t, w) in tests.iter().zip(&widths) {
        write!(header, "  {:>w$}", t.label()).unwrap();
    }
    writeln!(out, "{}", header.trim_end()).unwrap();
    writeln!(out, "{}", "-".repeat(header.trim_end().len())).unwrap();
    for (m, cells) in rows {
        let mut line = format!("{m:<model_w$}");
        for (c, w) in cells.iter().zip(&widths) {
            write!(line, "  {c:>w$}").unwrap();
        }
        writeln!(out, "{}", line.trim_end()).unwrap();
    }
}

pub fn render_table(reports: &[RunReport], verbose: bool) -> String {
    let all = [TestKind::Test1, TestKind::Test2, TestKind::Test3];
    let argued = [TestKind::Test1, TestKind::Test2];
    let mut out = String::new();
    table(&mut out, "Hallucination Accuracy (Acc_H, %)", reports, &all, |r| pct(r.acc_h_mean));
    out.push('\n');
    table(&mut out, "Factor Utilization Recall (Rec_U, %)", reports, &argued, |r| pct(r.rec_u_mean));
    out.push('\n');
    table(&mut out, "Abstention Ratio (Ratio_Abstain, %)", reports, &[TestKind::Test3], |r| {
        pct(r.abstention.map(|a| a.ratio))
    });
    if verbose {
        out.push('\n');
        table(&mut out, "Pooled Acc_H (sum N_H / sum N_GT, %)", reports, &all, |r| pct(r.acc_h_pooled));
        out.push('\n');
        table(&mut out, "Pooled Rec_U (sum N_U / sum N_GT, %)", reports, &argued, |r| pct(r.rec_u_pooled));
        out.push('\n');
        table(&mut out, "Scored / failed triples", reports, &all, |r| format!("{}/{}", r.n_triples, r.n_failed));
    }
    out
}

pub const CSV_HEADER: &str =
    "model,test,n_triples,n_failed,acc_h_mean,acc_h_pooled,rec_u_mean,rec_u_pooled,abstention_ratio,n_sa,n_ta";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_default()
}

pub fn render_csv(reports: &[RunReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        let (ratio, n_sa, n_ta) = match r.abstention {
            Some(a) => (format!("{:.2}", a.ratio), a.n_sa.to_string(), a.n_ta.to_string()),
            None => Default::default(),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&r.model),
            r.test,
            r.n_triples,
            r.n_failed,
            num(r.acc_h_mean),
            num(r.acc_h_pooled),
            num(r.rec_u_mean),
            num(r.rec_u_pooled),
            ratio,
            n_sa,
            n_ta
        )
        .unwrap();
    }
    out
}
