//! Plain-text rendering of results and analyses.

use cogscreen::analysis::{Breakdown, CellOverlap, PartitionStats};
use cogscreen::corpus::{class_counts_of, Corpus, LabelKind, NUM_CLASSES};
use cogscreen::protocol::{ExperimentResult, Protocol};
use cogscreen::report::{format_cell, percent};

const CLASS_NAMES: [&str; NUM_CLASSES] = ["HC", "MCI", "DEM"];

fn table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|j| rows.iter().filter_map(|r| r.get(j)).map(|c| c.chars().count()).max().unwrap_or(0))
        .collect();
    rows.iter()
        .map(|r| {
            r.iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn labelled<T>(cells: &[[T; NUM_CLASSES]; NUM_CLASSES], rows: &str, cols: &str, f: impl Fn(&T) -> String) -> String {
    let mut out = vec![std::iter::once(format!("{rows}\\{cols}"))
        .chain((0..NUM_CLASSES).map(|j| j.to_string()))
        .collect::<Vec<_>>()];
    for (i, r) in cells.iter().enumerate() {
        out.push(std::iter::once(i.to_string()).chain(r.iter().map(&f)).collect());
    }
    table(&out)
}

pub fn grid(counts: &[[u64; NUM_CLASSES]; NUM_CLASSES], rows: &str, cols: &str) -> String {
    labelled(counts, rows, cols, u64::to_string)
}

/// Each cell as `(count, fraction)`; the fraction is `-` for an empty
/// reference cell.
pub fn overlap_grid(cells: &[[CellOverlap; NUM_CLASSES]; NUM_CLASSES]) -> String {
    labelled(cells, "dep", "cog", |c| {
        let frac = c.fraction.map_or("-".to_string(), |f| format!("{f:.2}"));
        format!("({}, {frac})", c.count)
    })
}

pub fn class_count_table(corpus: &Corpus) -> String {
    let mut rows = vec![std::iter::once("test".to_string())
        .chain(CLASS_NAMES.iter().map(|s| s.to_string()))
        .chain(std::iter::once("total".to_string()))
        .collect::<Vec<_>>()];
    for t in corpus.test_ids() {
        let mut row = vec![t.clone()];
        match class_counts_of(corpus.sessions_for_test(&t), LabelKind::Cognitive) {
            Ok(c) => {
                row.extend(c.iter().map(usize::to_string));
                row.push(c.iter().sum::<usize>().to_string());
            }
            Err(_) => row.push("labels missing".into()),
        }
        rows.push(row);
    }
    table(&rows)
}

pub fn result_text(r: &ExperimentResult) -> String {
    let s = &r.spec;
    let std = match s.protocol {
        Protocol::Cross => None,
        _ => r.std_uar,
    };
    let mut out = format!(
        "{} {} -> {} test {} features {} target {} seed {}\n",
        s.protocol, s.train_corpus, s.test_corpus, s.test_id, s.feature_family, s.target_label, s.seed
    );
    out += &format!("UAR (%): {}\n", format_cell(r.mean_uar, std));
    for f in &r.folds {
        out += &format!(
            "fold {}: UAR {}  train {} test {}  chosen {} (inner {})\n",
            f.fold,
            percent(f.uar),
            f.n_train,
            f.n_test,
            f.chosen,
            percent(f.inner_uar)
        );
    }
    out += "Confusion (rows truth, columns predicted):\n";
    out += &grid(&r.pooled_confusion().counts, "true", "pred");
    out.push('\n');
    out
}

fn fraction(v: Option<f64>) -> String {
    v.map_or("unavailable".to_string(), |f| format!("{f:.3}"))
}

fn partition(name: &str, p: &PartitionStats) -> String {
    format!(
        "{name}: {} sessions\n  depressed fraction: {}\n  score above mean: {}\n  score below mean: {}\n",
        p.sessions.len(),
        fraction(p.depression_fraction),
        fraction(p.above_mean_score_fraction),
        fraction(p.below_mean_score_fraction)
    )
}

pub fn breakdown(b: &Breakdown) -> String {
    let mut out = String::from("Misclassification breakdown\n");
    out += &format!(
        "score mean: {}\n",
        b.score_mean.map_or("unavailable".to_string(), |m| format!("{m:.3}"))
    );
    out += &partition("under-predicted", &b.under);
    out += &partition("over-predicted", &b.over);
    for w in &b.warnings {
        out += &format!("warning: {w}\n");
    }
    out.trim_end().to_string()
}
