//! Speaker-disjoint stratified fold assignment.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::corpus::{Corpus, LabelKind, SessionRecord, NUM_CLASSES};

/// Speakers are only unique within their corpus.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpeakerKey {
    pub corpus_id: String,
    pub speaker_id: String,
}

impl SpeakerKey {
    pub fn of(s: &SessionRecord) -> Self {
        Self {
            corpus_id: s.corpus_id.clone(),
            speaker_id: s.speaker_id.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub speaker: SpeakerKey,
    pub fold: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub k: usize,
    pub seed: u64,
    pub assignment: BTreeMap<SpeakerKey, usize>,
}

impl SplitPlan {
    pub fn fold_of(&self, s: &SessionRecord) -> Option<usize> {
        self.assignment.get(&SpeakerKey::of(s)).copied()
    }

    /// Sessions split into (train, test) for fold `fold`. Sessions of
    /// speakers outside the plan are dropped.
    pub fn partition<'a>(&self, sessions: &[&'a SessionRecord], fold: usize) -> (Vec<&'a SessionRecord>, Vec<&'a SessionRecord>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for &s in sessions {
            match self.fold_of(s) {
                Some(f) if f == fold => test.push(s),
                Some(_) => train.push(s),
                None => {}
            }
        }
        (train, test)
    }

    pub fn entries(&self) -> Vec<FoldAssignment> {
        self.assignment
            .iter()
            .map(|(speaker, &fold)| FoldAssignment {
                speaker: speaker.clone(),
                fold,
            })
            .collect()
    }
}

/// Stratified speaker-disjoint split of the sessions of one test.
pub fn make_split(corpus: &Corpus, test_id: &str, k: usize, seed: u64, label: LabelKind) -> Result<SplitPlan, ProtocolError> {
    let sessions: Vec<&SessionRecord> = corpus.sessions_for_test(test_id).collect();
    make_split_sessions(&sessions, k, seed, label)
}

/// Per class (ascending), speakers are sorted, shuffled with a generator
/// seeded from `seed` and dealt round-robin into folds. The deal continues
/// where the previous class stopped, so fold sizes also differ by at most
/// one.
pub fn make_split_sessions(sessions: &[&SessionRecord], k: usize, seed: u64, label: LabelKind) -> Result<SplitPlan, ProtocolError> {
    if k < 2 {
        return Err(ProtocolError::Precondition(format!("need at least 2 folds, got {k}")));
    }
    let mut speaker_label: BTreeMap<SpeakerKey, u8> = BTreeMap::new();
    let mut missing = Vec::new();
    for s in sessions {
        let Some(l) = s.label(label) else {
            missing.push(s.session_id.clone());
            continue;
        };
        let key = SpeakerKey::of(s);
        match speaker_label.get(&key) {
            Some(&prev) if prev != l => {
                return Err(ProtocolError::InconsistentSpeakerLabel {
                    speaker: key.speaker_id,
                    label,
                })
            }
            _ => {
                speaker_label.insert(key, l);
            }
        }
    }
    if !missing.is_empty() {
        return Err(ProtocolError::MissingLabel { label, sessions: missing });
    }

    let mut by_class: [Vec<SpeakerKey>; NUM_CLASSES] = Default::default();
    for (key, l) in speaker_label {
        by_class[l as usize].push(key);
    }
    for (class, speakers) in by_class.iter().enumerate() {
        if !speakers.is_empty() && speakers.len() < k {
            return Err(ProtocolError::InfeasibleSplit {
                class: class as u8,
                speakers: speakers.len(),
                k,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = BTreeMap::new();
    let mut next_fold = 0;
    for mut speakers in by_class {
        speakers.shuffle(&mut rng);
        for key in speakers {
            assignment.insert(key, next_fold);
            next_fold = (next_fold + 1) % k;
        }
    }
    Ok(SplitPlan { k, seed, assignment })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap as Map;

    fn sessions(counts: [usize; 3]) -> Vec<SessionRecord> {
        let mut out = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            for i in 0..n {
                let id = format!("c{c}-{i:03}");
                out.push(SessionRecord {
                    session_id: id.clone(),
                    speaker_id: id,
                    corpus_id: "NSC".into(),
                    test_id: "sVFT".into(),
                    cognitive: c as u8,
                    depression: None,
                    test_score: None,
                    features: Map::new(),
                });
            }
        }
        out
    }

    #[test]
    fn nsc_shaped_fold_sizes() {
        let all = sessions([29, 48, 83]);
        let refs: Vec<&SessionRecord> = all.iter().collect();
        let plan = make_split_sessions(&refs, 5, 7, LabelKind::Cognitive).unwrap();
        let mut per_fold = [[0usize; 3]; 5];
        for s in &all {
            per_fold[plan.fold_of(s).unwrap()][s.cognitive as usize] += 1;
        }
        for f in per_fold {
            assert!((5..=6).contains(&f[0]), "{f:?}");
            assert!((9..=10).contains(&f[1]), "{f:?}");
            assert!((16..=17).contains(&f[2]), "{f:?}");
            assert!((32..=32).contains(&f.iter().sum::<usize>()));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let all = sessions([10, 10, 10]);
        let refs: Vec<&SessionRecord> = all.iter().collect();
        let a = make_split_sessions(&refs, 5, 3, LabelKind::Cognitive).unwrap();
        let b = make_split_sessions(&refs, 5, 3, LabelKind::Cognitive).unwrap();
        let c = make_split_sessions(&refs, 5, 4, LabelKind::Cognitive).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.assignment, c.assignment);
    }

    #[test]
    fn too_few_speakers() {
        let all = sessions([3, 10, 10]);
        let refs: Vec<&SessionRecord> = all.iter().collect();
        assert!(matches!(
            make_split_sessions(&refs, 5, 0, LabelKind::Cognitive),
            Err(ProtocolError::InfeasibleSplit { class: 0, speakers: 3, k: 5 })
        ));
    }

    #[test]
    fn absent_class_is_fine() {
        let all = sessions([6, 0, 7]);
        let refs: Vec<&SessionRecord> = all.iter().collect();
        assert!(make_split_sessions(&refs, 5, 0, LabelKind::Cognitive).is_ok());
    }

    #[test]
    fn missing_depression_label() {
        let all = sessions([5, 5, 5]);
        let refs: Vec<&SessionRecord> = all.iter().collect();
        assert!(matches!(
            make_split_sessions(&refs, 5, 0, LabelKind::Depression),
            Err(ProtocolError::MissingLabel { .. })
        ));
    }

    #[test]
    fn speaker_with_two_sessions_stays_together() {
        let mut all = sessions([6, 6, 6]);
        let mut extra = all[0].clone();
        extra.session_id = "extra".into();
        all.push(extra);
        let refs: Vec<&SessionRecord> = all.iter().collect();
        let plan = make_split_sessions(&refs, 3, 1, LabelKind::Cognitive).unwrap();
        assert_eq!(plan.fold_of(&all[0]), plan.fold_of(all.last().unwrap()));
        let mut bad = all[1].clone();
        bad.session_id = "bad".into();
        bad.cognitive = 2;
        all.push(bad);
        let refs: Vec<&SessionRecord> = all.iter().collect();
        assert!(matches!(
            make_split_sessions(&refs, 3, 1, LabelKind::Cognitive),
            Err(ProtocolError::InconsistentSpeakerLabel { .. })
        ));
    }
}
