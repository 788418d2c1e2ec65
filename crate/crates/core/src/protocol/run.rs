//! Nested grid search and the three evaluation protocols.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{HyperGrid, HyperPoint};
use super::split::{make_split_sessions, SplitPlan};
use super::{ExperimentSpec, Protocol, ProtocolError, INNER_SEED_OFFSET};
use crate::corpus::{Corpus, SessionRecord};
use crate::features::FeatureStore;
use crate::metrics::{confusion, mean_std, uar, ConfusionMatrix};
use crate::svm::train_multiclass;

/// Outcome of an inner-CV grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridChoice {
    pub point: HyperPoint,
    pub inner_uar: f64,
    /// Inner mean UAR of every grid point, in enumeration order.
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub confusion: ConfusionMatrix,
    pub uar: f64,
    pub chosen: HyperPoint,
    pub inner_uar: f64,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionPrediction {
    pub corpus_id: String,
    pub session_id: String,
    pub speaker_id: String,
    pub fold: usize,
    pub truth: u8,
    pub predicted: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub tool_version: String,
    pub spec: ExperimentSpec,
    pub grid: HyperGrid,
    /// Ids of every corpus that contributed sessions.
    pub corpora: Vec<String>,
    pub folds: Vec<FoldResult>,
    pub mean_uar: f64,
    /// Absent for a single evaluation.
    pub std_uar: Option<f64>,
    /// Sorted by (corpus_id, session_id).
    pub predictions: Vec<SessionPrediction>,
}

impl ExperimentResult {
    /// Confusion matrix summed over folds.
    pub fn pooled_confusion(&self) -> ConfusionMatrix {
        let mut m = ConfusionMatrix::default();
        for f in &self.folds {
            m.merge(&f.confusion);
        }
        m
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }
}

fn common_feature_sets(sessions: &[&SessionRecord]) -> BTreeSet<String> {
    let mut iter = sessions.iter();
    let Some(first) = iter.next() else {
        return BTreeSet::new();
    };
    let mut sets: BTreeSet<String> = first.features.keys().cloned().collect();
    for s in iter {
        sets.retain(|k| s.features.contains_key(k));
    }
    sets
}

fn labels_of(sessions: &[&SessionRecord], spec: &ExperimentSpec) -> Result<Vec<u8>, ProtocolError> {
    let mut missing = Vec::new();
    let mut out = Vec::with_capacity(sessions.len());
    for s in sessions {
        match s.label(spec.target_label) {
            Some(l) => out.push(l),
            None => missing.push(s.session_id.clone()),
        }
    }
    if missing.is_empty() {
        Ok(out)
    } else {
        Err(ProtocolError::MissingLabel {
            label: spec.target_label,
            sessions: missing,
        })
    }
}

fn train_and_predict(
    x_train: &[Vec<f64>],
    y_train: &[u8],
    x_test: &[Vec<f64>],
    point: &HyperPoint,
) -> Result<Vec<u8>, ProtocolError> {
    let model = train_multiclass(x_train, y_train, point.c, point.kernel).map_err(|source| ProtocolError::Training {
        point: point.to_string(),
        source,
    })?;
    Ok(model.predict_all(x_test)?)
}

fn inner_cv_uar(x: &[Vec<f64>], y: &[u8], folds: &[usize], k: usize, point: &HyperPoint) -> Result<f64, ProtocolError> {
    let mut total = 0.0;
    for fold in 0..k {
        let mut xt = Vec::new();
        let mut yt = Vec::new();
        let mut xv = Vec::new();
        let mut yv = Vec::new();
        for ((row, &label), &f) in x.iter().zip(y).zip(folds) {
            if f == fold {
                xv.push(row.clone());
                yv.push(label);
            } else {
                xt.push(row.clone());
                yt.push(label);
            }
        }
        let pred = train_and_predict(&xt, &yt, &xv, point)?;
        total += uar(&confusion(&yv, &pred)?)?;
    }
    Ok(total / k as f64)
}

/// Selects the grid point with the highest mean UAR over a stratified
/// inner split of `train` seeded with `inner_seed`. Only the feature files
/// of `train` sessions are read.
pub fn grid_search(
    train: &[&SessionRecord],
    spec: &ExperimentSpec,
    grid: &HyperGrid,
    store: &FeatureStore,
    inner_seed: u64,
) -> Result<GridChoice, ProtocolError> {
    let sets = grid.resolve_family(&spec.feature_family, &common_feature_sets(train))?;
    let points = grid.points(&sets)?;
    let plan = make_split_sessions(train, spec.k, inner_seed, spec.target_label)?;
    let y = labels_of(train, spec)?;
    let folds: Vec<usize> = train
        .iter()
        .map(|s| plan.fold_of(s).expect("every train speaker is assigned"))
        .collect();

    let names: BTreeSet<&str> = points.iter().map(|p| p.feature_set.as_str()).collect();
    let mut designs: BTreeMap<&str, Vec<Vec<f64>>> = BTreeMap::new();
    for name in names {
        designs.insert(name, store.design_matrix(train, name, spec.pooling)?);
    }

    let scores: Vec<f64> = points
        .par_iter()
        .map(|p| inner_cv_uar(&designs[p.feature_set.as_str()], &y, &folds, spec.k, p))
        .collect::<Result<_, _>>()?;

    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    log::debug!("grid search chose {} (inner UAR {:.4})", points[best], scores[best]);
    Ok(GridChoice {
        point: points[best].clone(),
        inner_uar: scores[best],
        scores,
    })
}

/// Trains on `train` with `point` and predicts `test`.
pub fn evaluate_point(
    train: &[&SessionRecord],
    test: &[&SessionRecord],
    spec: &ExperimentSpec,
    point: &HyperPoint,
    store: &FeatureStore,
) -> Result<Vec<u8>, ProtocolError> {
    let x_train = store.design_matrix(train, &point.feature_set, spec.pooling)?;
    let x_test = store.design_matrix(test, &point.feature_set, spec.pooling)?;
    let y_train = labels_of(train, spec)?;
    train_and_predict(&x_train, &y_train, &x_test, point)
}

fn run_fold(
    fold: usize,
    train: &[&SessionRecord],
    test: &[&SessionRecord],
    spec: &ExperimentSpec,
    grid: &HyperGrid,
    store: &FeatureStore,
    inner_seed: u64,
) -> Result<(FoldResult, Vec<SessionPrediction>), ProtocolError> {
    if test.is_empty() {
        return Err(ProtocolError::Precondition(format!("fold {fold} has no test sessions")));
    }
    let choice = grid_search(train, spec, grid, store, inner_seed)?;
    let pred = evaluate_point(train, test, spec, &choice.point, store)?;
    let truth = labels_of(test, spec)?;
    let m = confusion(&truth, &pred)?;
    let predictions = test
        .iter()
        .zip(truth.iter().zip(&pred))
        .map(|(s, (&t, &p))| SessionPrediction {
            corpus_id: s.corpus_id.clone(),
            session_id: s.session_id.clone(),
            speaker_id: s.speaker_id.clone(),
            fold,
            truth: t,
            predicted: p,
        })
        .collect();
    Ok((
        FoldResult {
            fold,
            confusion: m,
            uar: uar(&m)?,
            chosen: choice.point,
            inner_uar: choice.inner_uar,
            n_train: train.len(),
            n_test: test.len(),
        },
        predictions,
    ))
}

fn assemble(
    spec: &ExperimentSpec,
    grid: &HyperGrid,
    corpora: Vec<String>,
    parts: Vec<(FoldResult, Vec<SessionPrediction>)>,
) -> ExperimentResult {
    let mut folds = Vec::with_capacity(parts.len());
    let mut predictions = Vec::new();
    for (f, p) in parts {
        folds.push(f);
        predictions.extend(p);
    }
    folds.sort_by_key(|f| f.fold);
    predictions.sort_by(|a, b| (&a.corpus_id, &a.session_id).cmp(&(&b.corpus_id, &b.session_id)));
    let uars: Vec<f64> = folds.iter().map(|f| f.uar).collect();
    let (mean_uar, std_uar) = mean_std(&uars);
    ExperimentResult {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        spec: spec.clone(),
        grid: grid.clone(),
        corpora,
        folds,
        mean_uar,
        std_uar,
        predictions,
    }
}

fn expect_protocol(spec: &ExperimentSpec, want: Protocol) -> Result<(), ProtocolError> {
    spec.validate()?;
    if spec.protocol != want {
        return Err(ProtocolError::Precondition(format!(
            "spec is for the {} protocol, not {want}",
            spec.protocol
        )));
    }
    Ok(())
}

fn expect_corpus(corpus: &Corpus, id: &str) -> Result<(), ProtocolError> {
    if corpus.corpus_id() != id {
        return Err(ProtocolError::Precondition(format!(
            "spec names corpus {id:?} but got {:?}",
            corpus.corpus_id()
        )));
    }
    Ok(())
}

fn test_sessions<'a>(corpus: &'a Corpus, test_id: &'a str) -> Result<Vec<&'a SessionRecord>, ProtocolError> {
    let s: Vec<&SessionRecord> = corpus.sessions_for_test(test_id).collect();
    if s.is_empty() {
        return Err(ProtocolError::Precondition(format!(
            "corpus {:?} has no sessions for test {test_id:?}",
            corpus.corpus_id()
        )));
    }
    Ok(s)
}

fn inner_seed(spec: &ExperimentSpec, fold: usize) -> u64 {
    spec.seed.wrapping_add(INNER_SEED_OFFSET).wrapping_add(fold as u64)
}

fn run_folds(
    spec: &ExperimentSpec,
    grid: &HyperGrid,
    store: &FeatureStore,
    fold_sets: Vec<(Vec<&SessionRecord>, Vec<&SessionRecord>)>,
) -> Result<Vec<(FoldResult, Vec<SessionPrediction>)>, ProtocolError> {
    fold_sets
        .par_iter()
        .enumerate()
        .map(|(i, (train, test))| run_fold(i, train, test, spec, grid, store, inner_seed(spec, i)))
        .collect()
}

/// Stratified speaker-disjoint k-fold CV on one corpus.
pub fn run_within(
    corpus: &Corpus,
    spec: &ExperimentSpec,
    grid: &HyperGrid,
    store: &FeatureStore,
) -> Result<ExperimentResult, ProtocolError> {
    expect_protocol(spec, Protocol::Within)?;
    expect_corpus(corpus, &spec.train_corpus)?;
    let sessions = test_sessions(corpus, &spec.test_id)?;
    let plan = make_split_sessions(&sessions, spec.k, spec.seed, spec.target_label)?;
    let fold_sets = (0..spec.k).map(|i| plan.partition(&sessions, i)).collect();
    let parts = run_folds(spec, grid, store, fold_sets)?;
    Ok(assemble(spec, grid, vec![corpus.corpus_id().to_string()], parts))
}

/// Train on all of one corpus, test on all of another.
pub fn run_cross(
    train_corpus: &Corpus,
    test_corpus: &Corpus,
    spec: &ExperimentSpec,
    grid: &HyperGrid,
    store: &FeatureStore,
) -> Result<ExperimentResult, ProtocolError> {
    expect_protocol(spec, Protocol::Cross)?;
    expect_corpus(train_corpus, &spec.train_corpus)?;
    expect_corpus(test_corpus, &spec.test_corpus)?;
    let train = test_sessions(train_corpus, &spec.test_id)?;
    let test = test_sessions(test_corpus, &spec.test_id)?;
    let part = run_fold(0, &train, &test, spec, grid, store, inner_seed(spec, 0))?;
    Ok(assemble(
        spec,
        grid,
        vec![train_corpus.corpus_id().to_string(), test_corpus.corpus_id().to_string()],
        vec![part],
    ))
}

/// Both corpora are split independently and fold i of each is combined.
pub fn run_mixed(
    corpus_a: &Corpus,
    corpus_b: &Corpus,
    spec: &ExperimentSpec,
    grid: &HyperGrid,
    store: &FeatureStore,
) -> Result<ExperimentResult, ProtocolError> {
    expect_protocol(spec, Protocol::Mixed)?;
    expect_corpus(corpus_a, &spec.train_corpus)?;
    expect_corpus(corpus_b, &spec.test_corpus)?;
    let a = test_sessions(corpus_a, &spec.test_id)?;
    let b = test_sessions(corpus_b, &spec.test_id)?;
    let plan_a: SplitPlan = make_split_sessions(&a, spec.k, spec.seed, spec.target_label)?;
    let plan_b: SplitPlan = make_split_sessions(&b, spec.k, spec.seed.wrapping_add(1), spec.target_label)?;
    let fold_sets = (0..spec.k)
        .map(|i| {
            let (mut train, mut test) = plan_a.partition(&a, i);
            let (tb, sb) = plan_b.partition(&b, i);
            train.extend(tb);
            test.extend(sb);
            (train, test)
        })
        .collect();
    let parts = run_folds(spec, grid, store, fold_sets)?;
    Ok(assemble(
        spec,
        grid,
        vec![corpus_a.corpus_id().to_string(), corpus_b.corpus_id().to_string()],
        parts,
    ))
}
