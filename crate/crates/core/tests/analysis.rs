mod common;

use std::collections::BTreeMap;

use cogscreen::analysis::{cell_overlap, cooccurrence, cross_label_confusion, misclassification_breakdown, AnalysisError};
use cogscreen::corpus::{class_counts, Corpus, LabelKind, SessionRecord};
use cogscreen::metrics::ConfusionMatrix;
use cogscreen::protocol::{ExperimentResult, ExperimentSpec, HyperGrid, Protocol, SessionPrediction};
use common::{reference_corpus, planted_predictions};

fn result_with(corpus: &Corpus, preds: &BTreeMap<String, u8>) -> ExperimentResult {
    let predictions = corpus
        .sessions()
        .iter()
        .map(|s| SessionPrediction {
            corpus_id: s.corpus_id.clone(),
            session_id: s.session_id.clone(),
            speaker_id: s.speaker_id.clone(),
            fold: 0,
            truth: s.cognitive,
            predicted: preds[&s.session_id],
        })
        .collect();
    ExperimentResult {
        tool_version: "test".into(),
        spec: ExperimentSpec::new(Protocol::Within, "NSC", "NSC", "sVFT", "w2v2", 0),
        grid: HyperGrid::default(),
        corpora: vec!["NSC".into()],
        folds: vec![],
        mean_uar: 0.0,
        std_uar: None,
        predictions,
    }
}

#[test]
fn cooccurrence_marginals_match_class_counts() {
    let c = reference_corpus();
    let m = cooccurrence(&c, None).unwrap();
    assert_eq!(m.row_sums(), [29, 48, 83]);
    assert_eq!(m.col_sums(), [92, 36, 32]);
    let cog = class_counts(&c, LabelKind::Cognitive).unwrap();
    let dep = class_counts(&c, LabelKind::Depression).unwrap();
    assert_eq!(m.row_sums().map(|v| v as usize), cog);
    assert_eq!(m.col_sums().map(|v| v as usize), dep);
}

#[test]
fn degenerate_and_missing() {
    let mk = |id: &str, dep: Option<u8>| SessionRecord {
        session_id: id.into(),
        speaker_id: id.into(),
        corpus_id: "X".into(),
        test_id: "t".into(),
        cognitive: 0,
        depression: dep,
        test_score: None,
        features: Default::default(),
    };
    let c = Corpus::from_sessions_unchecked(vec![mk("a", Some(0)), mk("b", Some(0))]).unwrap();
    assert_eq!(cooccurrence(&c, None).unwrap().counts, [[2, 0, 0], [0; 3], [0; 3]]);
    let c = Corpus::from_sessions_unchecked(vec![mk("a", Some(0)), mk("b", None)]).unwrap();
    assert_eq!(
        cooccurrence(&c, None),
        Err(AnalysisError::MissingLabel {
            label: LabelKind::Depression,
            sessions: vec!["b".into()]
        })
    );
}

#[test]
fn identity_predictions_give_transposed_cooccurrence() {
    let c = reference_corpus();
    let preds: BTreeMap<String, u8> = c.sessions().iter().map(|s| (s.session_id.clone(), s.cognitive)).collect();
    let cross = cross_label_confusion(&preds, &c, None).unwrap();
    assert_eq!(cross, cooccurrence(&c, None).unwrap().transposed());
}

#[test]
fn constant_prediction_single_column() {
    let c = reference_corpus();
    let preds: BTreeMap<String, u8> = c.sessions().iter().map(|s| (s.session_id.clone(), 2)).collect();
    let cross = cross_label_confusion(&preds, &c, None).unwrap();
    assert_eq!(cross.col_sums(), [0, 0, 160]);
    assert_eq!(cross.total(), 160);
}

#[test]
fn uncovered_sessions_are_errors() {
    let c = reference_corpus();
    let mut preds = planted_predictions(&c);
    preds.remove("s00-00");
    assert_eq!(
        cross_label_confusion(&preds, &c, None),
        Err(AnalysisError::MissingPrediction(vec!["s00-00".into()]))
    );
}

#[test]
fn planted_overlap() {
    let c = reference_corpus();
    let reference = cooccurrence(&c, None).unwrap().transposed();
    let cross = cross_label_confusion(&planted_predictions(&c), &c, None).unwrap();
    assert_eq!(cross.counts[0][2], 51);
    let o = cell_overlap(&reference, &cross).unwrap();
    assert_eq!(o[0][2].count, 46);
    assert_eq!(o[0][2].reference, 57);
    assert_eq!(format!("{:.3}", o[0][2].fraction.unwrap()), "0.807");
    assert_eq!(o[0][2].symmetric, Some(46.0 / 62.0));
}

#[test]
fn breakdown_single_under_classification() {
    let c = reference_corpus();
    let mut preds: BTreeMap<String, u8> = c.sessions().iter().map(|s| (s.session_id.clone(), s.cognitive)).collect();
    preds.insert("s21-00".into(), 0);
    let b = misclassification_breakdown(&result_with(&c, &preds), &c).unwrap();
    assert_eq!(b.under.sessions, vec!["s21-00".to_string()]);
    assert_eq!(b.under.depression_fraction, Some(1.0));
    assert!(b.over.sessions.is_empty());
    assert_eq!(b.over.depression_fraction, None);
    // No test scores in the fixture.
    assert_eq!(b.score_mean, None);
    assert_eq!(b.warnings.len(), 1);
}

#[test]
fn breakdown_all_correct() {
    let c = reference_corpus();
    let preds: BTreeMap<String, u8> = c.sessions().iter().map(|s| (s.session_id.clone(), s.cognitive)).collect();
    let b = misclassification_breakdown(&result_with(&c, &preds), &c).unwrap();
    assert!(b.under.sessions.is_empty() && b.over.sessions.is_empty());
    assert_eq!(b.under.depression_fraction, None);
}

#[test]
fn breakdown_recovers_planted_covariates() {
    // 100 DEM sessions predicted MCI: 68 depressed, and scores above the
    // corpus mean for exactly 30 of them.
    let mut sessions = Vec::new();
    for i in 0..200 {
        let id = format!("x{i:03}");
        let under = i < 100;
        sessions.push(SessionRecord {
            session_id: id.clone(),
            speaker_id: id,
            corpus_id: "S".into(),
            test_id: "sVFT".into(),
            cognitive: if under { 2 } else { 0 },
            depression: Some(u8::from(under && i < 68)),
            test_score: Some(if under && i >= 70 { 30.0 } else if under { 10.0 } else { 20.0 }),
            features: Default::default(),
        });
    }
    let c = Corpus::from_sessions_unchecked(sessions).unwrap();
    let preds: BTreeMap<String, u8> = c
        .sessions()
        .iter()
        .map(|s| (s.session_id.clone(), if s.cognitive == 2 { 1 } else { 0 }))
        .collect();
    let mut r = result_with(&c, &preds);
    r.spec.train_corpus = "S".into();
    r.spec.test_corpus = "S".into();
    let b = misclassification_breakdown(&r, &c).unwrap();
    assert_eq!(b.under.sessions.len(), 100);
    assert!((b.under.depression_fraction.unwrap() - 0.68).abs() <= 0.01);
    assert!((b.under.above_mean_score_fraction.unwrap() - 0.30).abs() <= 0.01);
    assert!((b.under.below_mean_score_fraction.unwrap() - 0.70).abs() <= 0.01);
    assert!(b.warnings.is_empty());
}

#[test]
fn cross_label_total_counts_labelled_and_predicted() {
    let c = reference_corpus();
    let m = ConfusionMatrix::from_counts(cross_label_confusion(&planted_predictions(&c), &c, None).unwrap().counts);
    assert_eq!(m.total(), 160);
}
