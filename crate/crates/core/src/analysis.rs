//! Error analysis against a second label: co-occurrence tables,
//! cross-label confusion, per-cell overlap and misclassification
//! breakdowns by covariate.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, LabelKind, SessionRecord, NUM_CLASSES};
use crate::protocol::ExperimentResult;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("missing {label} label on session(s) {sessions:?}")]
    MissingLabel { label: LabelKind, sessions: Vec<String> },
    #[error("no prediction for session(s) {0:?}")]
    MissingPrediction(Vec<String>),
    #[error("assignments cover different sessions ({only_a} only in the first, {only_b} only in the second)")]
    UniverseMismatch { only_a: usize, only_b: usize },
    #[error("label {0} out of range")]
    LabelOutOfRange(u8),
    #[error("{0}")]
    Precondition(String),
}

type Grid<T> = [[T; NUM_CLASSES]; NUM_CLASSES];

/// Sessions placed into the cells of a 3x3 table.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellAssignment {
    pub counts: Grid<u64>,
    pub cells: BTreeMap<String, (u8, u8)>,
}

impl CellAssignment {
    pub fn from_cells(cells: BTreeMap<String, (u8, u8)>) -> Result<Self, AnalysisError> {
        let mut counts = Grid::<u64>::default();
        for &(r, c) in cells.values() {
            for l in [r, c] {
                if l as usize >= NUM_CLASSES {
                    return Err(AnalysisError::LabelOutOfRange(l));
                }
            }
            counts[r as usize][c as usize] += 1;
        }
        Ok(Self { counts, cells })
    }

    pub fn transposed(&self) -> Self {
        Self {
            counts: std::array::from_fn(|i| std::array::from_fn(|j| self.counts[j][i])),
            cells: self.cells.iter().map(|(k, &(r, c))| (k.clone(), (c, r))).collect(),
        }
    }

    pub fn row_sums(&self) -> [u64; NUM_CLASSES] {
        self.counts.map(|r| r.iter().sum())
    }

    pub fn col_sums(&self) -> [u64; NUM_CLASSES] {
        std::array::from_fn(|j| self.counts.iter().map(|r| r[j]).sum())
    }

    pub fn total(&self) -> u64 {
        self.row_sums().iter().sum()
    }

    pub fn sessions_in(&self, row: u8, col: u8) -> BTreeSet<&str> {
        self.cells
            .iter()
            .filter(|(_, &cell)| cell == (row, col))
            .map(|(k, _)| k.as_str())
            .collect()
    }
}

fn selected<'a>(corpus: &'a Corpus, test_id: Option<&'a str>) -> impl Iterator<Item = &'a SessionRecord> {
    corpus
        .sessions()
        .iter()
        .filter(move |s| test_id.is_none_or(|t| s.test_id == t))
}

/// Rows are cognitive labels, columns depression labels.
pub fn cooccurrence(corpus: &Corpus, test_id: Option<&str>) -> Result<CellAssignment, AnalysisError> {
    let mut cells = BTreeMap::new();
    let mut missing = Vec::new();
    for s in selected(corpus, test_id) {
        match s.depression {
            Some(d) => {
                cells.insert(s.session_id.clone(), (s.cognitive, d));
            }
            None => missing.push(s.session_id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(AnalysisError::MissingLabel {
            label: LabelKind::Depression,
            sessions: missing,
        });
    }
    CellAssignment::from_cells(cells)
}

/// Rows are depression labels, columns predicted cognitive classes. Only
/// sessions with a depression label are counted, and each of them needs a
/// prediction.
pub fn cross_label_confusion(
    predictions: &BTreeMap<String, u8>,
    corpus: &Corpus,
    test_id: Option<&str>,
) -> Result<CellAssignment, AnalysisError> {
    let mut cells = BTreeMap::new();
    let mut uncovered = Vec::new();
    for s in selected(corpus, test_id) {
        let Some(d) = s.depression else { continue };
        match predictions.get(&s.session_id) {
            Some(&p) => {
                cells.insert(s.session_id.clone(), (d, p));
            }
            None => uncovered.push(s.session_id.clone()),
        }
    }
    if !uncovered.is_empty() {
        return Err(AnalysisError::MissingPrediction(uncovered));
    }
    CellAssignment::from_cells(cells)
}

/// Per-session predictions of `result` that belong to `corpus`.
pub fn predictions_for(result: &ExperimentResult, corpus: &Corpus) -> BTreeMap<String, u8> {
    result
        .predictions
        .iter()
        .filter(|p| p.corpus_id == corpus.corpus_id())
        .map(|p| (p.session_id.clone(), p.predicted))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellOverlap {
    /// Sessions in this cell of both assignments.
    pub count: u64,
    /// Size of this cell in the reference assignment.
    pub reference: u64,
    /// `count / reference`, absent for an empty reference cell.
    pub fraction: Option<f64>,
    /// `count / |union|`, absent when both cells are empty.
    pub symmetric: Option<f64>,
}

/// Overlap of `b` with the reference `a`, cell by cell. Both must cover the
/// same sessions.
pub fn cell_overlap(a: &CellAssignment, b: &CellAssignment) -> Result<Grid<CellOverlap>, AnalysisError> {
    let only_a = a.cells.keys().filter(|k| !b.cells.contains_key(*k)).count();
    let only_b = b.cells.keys().filter(|k| !a.cells.contains_key(*k)).count();
    if only_a + only_b > 0 {
        return Err(AnalysisError::UniverseMismatch { only_a, only_b });
    }
    let mut shared = Grid::<u64>::default();
    for (k, &cell) in &a.cells {
        if b.cells[k] == cell {
            shared[cell.0 as usize][cell.1 as usize] += 1;
        }
    }
    Ok(std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            let count = shared[i][j];
            let reference = a.counts[i][j];
            let union = reference + b.counts[i][j] - count;
            CellOverlap {
                count,
                reference,
                fraction: (reference > 0).then(|| count as f64 / reference as f64),
                symmetric: (union > 0).then(|| count as f64 / union as f64),
            }
        })
    }))
}

/// Covariate statistics over one group of misclassified sessions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PartitionStats {
    pub sessions: Vec<String>,
    /// Fraction with depression > 0.
    pub depression_fraction: Option<f64>,
    /// Fractions with a test score strictly above / below the mean.
    pub above_mean_score_fraction: Option<f64>,
    pub below_mean_score_fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    /// Predicted class lower than the truth.
    pub under: PartitionStats,
    /// Predicted class higher than the truth.
    pub over: PartitionStats,
    /// Mean test score over the analyzed corpus and test.
    pub score_mean: Option<f64>,
    pub warnings: Vec<String>,
}

fn fraction(hits: usize, n: usize) -> Option<f64> {
    (n > 0).then(|| hits as f64 / n as f64)
}

/// Splits the errors of `result` on `corpus` into under- and
/// over-classification and describes each group by depression and test
/// score. A covariate missing on any relevant session is skipped with a
/// warning.
pub fn misclassification_breakdown(result: &ExperimentResult, corpus: &Corpus) -> Result<Breakdown, AnalysisError> {
    if result.spec.target_label != LabelKind::Cognitive {
        return Err(AnalysisError::Precondition(format!(
            "breakdown needs cognitive predictions, result targets {}",
            result.spec.target_label
        )));
    }
    let test_id = result.spec.test_id.as_str();
    let mut out = Breakdown::default();
    for p in result.predictions.iter().filter(|p| p.corpus_id == corpus.corpus_id()) {
        if p.predicted < p.truth {
            out.under.sessions.push(p.session_id.clone());
        } else if p.predicted > p.truth {
            out.over.sessions.push(p.session_id.clone());
        }
    }

    let lookup = |id: &str| {
        corpus
            .session(id)
            .ok_or_else(|| AnalysisError::Precondition(format!("session {id:?} is not in corpus {:?}", corpus.corpus_id())))
    };
    let mut errors = Vec::new();
    for id in out.under.sessions.iter().chain(&out.over.sessions) {
        errors.push(lookup(id)?);
    }

    if let Some(s) = errors.iter().find(|s| s.depression.is_none()) {
        out.warnings
            .push(format!("depression statistics omitted: session {:?} has no depression label", s.session_id));
    } else {
        for part in [&mut out.under, &mut out.over] {
            let mut hits = 0;
            for id in &part.sessions {
                if lookup(id)?.depression.unwrap_or(0) > 0 {
                    hits += 1;
                }
            }
            part.depression_fraction = fraction(hits, part.sessions.len());
        }
    }

    let pool: Vec<&SessionRecord> = corpus.sessions_for_test(test_id).collect();
    match pool.iter().find(|s| s.test_score.is_none()) {
        Some(s) => out.warnings.push(format!(
            "test score statistics omitted: session {:?} has no test score",
            s.session_id
        )),
        None if pool.is_empty() => out
            .warnings
            .push(format!("test score statistics omitted: no sessions for test {test_id:?}")),
        None => {
            let mean = pool.iter().filter_map(|s| s.test_score).sum::<f64>() / pool.len() as f64;
            out.score_mean = Some(mean);
            for part in [&mut out.under, &mut out.over] {
                let mut above = 0;
                let mut below = 0;
                for id in &part.sessions {
                    let score = lookup(id)?.test_score.unwrap_or(mean);
                    if score > mean {
                        above += 1;
                    } else if score < mean {
                        below += 1;
                    }
                }
                part.above_mean_score_fraction = fraction(above, part.sessions.len());
                part.below_mean_score_fraction = fraction(below, part.sessions.len());
            }
        }
    }
    for w in &out.warnings {
        log::warn!("{w}");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assign(cells: &[(&str, u8, u8)]) -> CellAssignment {
        CellAssignment::from_cells(cells.iter().map(|(k, r, c)| (k.to_string(), (*r, *c))).collect()).unwrap()
    }

    #[test]
    fn identity_overlap() {
        let a = assign(&[("a", 0, 0), ("b", 1, 2), ("c", 1, 2)]);
        let o = cell_overlap(&a, &a).unwrap();
        assert_eq!(o[1][2].count, 2);
        assert_eq!(o[1][2].fraction, Some(1.0));
        assert_eq!(o[0][0].symmetric, Some(1.0));
        assert_eq!(o[2][2].fraction, None);
    }

    #[test]
    fn disjoint_overlap() {
        let a = assign(&[("a", 0, 0), ("b", 1, 1)]);
        let b = assign(&[("a", 1, 1), ("b", 0, 0)]);
        let o = cell_overlap(&a, &b).unwrap();
        assert_eq!(o[0][0].fraction, Some(0.0));
        assert_eq!(o[1][1].fraction, Some(0.0));
    }

    #[test]
    fn universe_mismatch() {
        let a = assign(&[("a", 0, 0)]);
        let b = assign(&[("b", 0, 0)]);
        assert_eq!(cell_overlap(&a, &b), Err(AnalysisError::UniverseMismatch { only_a: 1, only_b: 1 }));
    }

    #[test]
    fn out_of_range_cell() {
        let cells = BTreeMap::from([("a".to_string(), (0u8, 3u8))]);
        assert_eq!(CellAssignment::from_cells(cells), Err(AnalysisError::LabelOutOfRange(3)));
    }

    fn arb_assignment() -> impl Strategy<Value = (Vec<(u8, u8)>, Vec<(u8, u8)>)> {
        (1usize..40).prop_flat_map(|n| {
            let cell = (0u8..3, 0u8..3);
            (prop::collection::vec(cell.clone(), n), prop::collection::vec(cell, n))
        })
    }

    proptest! {
        #[test]
        fn overlap_bounds_and_total((xs, ys) in arb_assignment()) {
            let build = |v: &[(u8, u8)]| CellAssignment::from_cells(
                v.iter().enumerate().map(|(i, &c)| (format!("s{i}"), c)).collect()
            ).unwrap();
            let a = build(&xs);
            let b = build(&ys);
            let o = cell_overlap(&a, &b).unwrap();
            let mut total = 0;
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert!(o[i][j].count <= a.counts[i][j].min(b.counts[i][j]));
                    total += o[i][j].count;
                }
            }
            let same = xs.iter().zip(&ys).filter(|(x, y)| x == y).count() as u64;
            prop_assert_eq!(total, same);
            prop_assert_eq!(a.transposed().transposed(), a.clone());
            prop_assert_eq!(a.transposed().row_sums(), a.col_sums());
        }
    }
}
