//! Summary tables of UAR in percent, one table per cognitive test.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::protocol::{ExperimentResult, Protocol};

/// `value` in percent with one decimal, rounded half away from zero.
pub fn percent(value: f64) -> String {
    let tenths = (value * 1000.0).round() as i64;
    let sign = if tenths < 0 { "-" } else { "" };
    let t = tenths.unsigned_abs();
    format!("{sign}{}.{}", t / 10, t % 10)
}

/// `61.7±9.1` with a deviation, `51.1` without.
pub fn format_cell(mean: f64, std: Option<f64>) -> String {
    match std {
        Some(s) => format!("{}±{}", percent(mean), percent(s)),
        None => percent(mean),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub text: String,
    pub mean_uar: f64,
    pub std_uar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub protocol: Protocol,
    pub train: String,
    pub test: String,
    /// Keyed by feature family.
    pub cells: BTreeMap<String, ReportCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub test_id: String,
    pub families: Vec<String>,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tables: Vec<ReportTable>,
}

fn row_key(r: &ExperimentResult) -> (u8, String, String) {
    let s = &r.spec;
    match s.protocol {
        Protocol::Within => (0, s.train_corpus.clone(), s.test_corpus.clone()),
        Protocol::Cross => (1, s.train_corpus.clone(), s.test_corpus.clone()),
        Protocol::Mixed => {
            let both = format!("{}+{}", s.train_corpus, s.test_corpus);
            (2, both.clone(), both)
        }
    }
}

/// Rows are within-corpus results, then cross-corpus, then mixed, each
/// sorted by corpus names. Columns are feature families in name order. A
/// later result for the same cell replaces an earlier one.
pub fn format_report(results: &[ExperimentResult]) -> Report {
    let mut by_test: BTreeMap<&str, Vec<&ExperimentResult>> = BTreeMap::new();
    for r in results {
        by_test.entry(r.spec.test_id.as_str()).or_default().push(r);
    }
    let tables = by_test
        .into_iter()
        .map(|(test_id, rs)| {
            let families: BTreeSet<String> = rs.iter().map(|r| r.spec.feature_family.clone()).collect();
            let mut rows: BTreeMap<(u8, String, String), ReportRow> = BTreeMap::new();
            for r in rs {
                let key = row_key(r);
                let row = rows.entry(key.clone()).or_insert_with(|| ReportRow {
                    protocol: r.spec.protocol,
                    train: key.1.clone(),
                    test: key.2.clone(),
                    cells: BTreeMap::new(),
                });
                let std = match r.spec.protocol {
                    Protocol::Cross => None,
                    _ => r.std_uar,
                };
                row.cells.insert(
                    r.spec.feature_family.clone(),
                    ReportCell {
                        text: format_cell(r.mean_uar, std),
                        mean_uar: r.mean_uar,
                        std_uar: std,
                    },
                );
            }
            ReportTable {
                test_id: test_id.to_string(),
                families: families.into_iter().collect(),
                rows: rows.into_values().collect(),
            }
        })
        .collect();
    Report { tables }
}

impl Report {
    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text tables; empty for an empty report.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (n, t) in self.tables.iter().enumerate() {
            if n > 0 {
                out.push('\n');
            }
            out.push_str(&format!("UAR (%) for test {}\n", t.test_id));
            let mut grid: Vec<Vec<String>> = vec![];
            let mut header = vec!["Train".to_string(), "Test".to_string()];
            header.extend(t.families.iter().cloned());
            grid.push(header);
            for r in &t.rows {
                let mut line = vec![r.train.clone(), r.test.clone()];
                line.extend(t.families.iter().map(|f| r.cells.get(f).map_or("-".to_string(), |c| c.text.clone())));
                grid.push(line);
            }
            let widths: Vec<usize> = (0..grid[0].len())
                .map(|j| grid.iter().map(|l| l[j].chars().count()).max().unwrap_or(0))
                .collect();
            for line in grid {
                let cells: Vec<String> = line
                    .iter()
                    .zip(&widths)
                    .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                    .collect();
                out.push_str(cells.join("  ").trim_end());
                out.push('\n');
            }
        }
        out
    }
}
