//! Synthetic corpora with known class geometry.
//!
//! Every frame is `class mean + corpus shift + N(0, I)`. Class means sit at
//! `s/sqrt(2) * e_c`, so any two classes are `s` apart (for `dim < 3` they
//! lie on a line, `s` apart between neighbours). The means do not depend on
//! the seed, so two corpora generated with different seeds share one
//! distribution unless a shift is requested.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{write_manifest, Corpus, CorpusError, SessionRecord, NUM_CLASSES};
use crate::matrix::{write_feature_matrix, FeatureMatrix, MatrixError};
use crate::protocol::{layer_feature_set, W2V2_LAYERS};

pub const MANIFEST_NAME: &str = "manifest.jsonl";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    Invalid(String),
    #[error("creating {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestScoreModel {
    pub class_means: [f64; NUM_CLASSES],
    pub noise_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub corpus_id: String,
    /// One session per speaker per test.
    pub test_ids: Vec<String>,
    pub speakers_per_class: [usize; NUM_CLASSES],
    pub dim: usize,
    /// Inclusive range of frames per session.
    pub frames: (usize, usize),
    /// Distance between class means in units of frame noise std.
    pub separation: f64,
    /// Length of an offset added to every frame, along a seeded direction.
    pub corpus_shift: f64,
    /// Joint (cognitive, depression) table. Rows are rescaled to the
    /// requested class sizes, and depression labels are apportioned by
    /// largest remainder.
    pub cooccurrence: Option<[[f64; NUM_CLASSES]; NUM_CLASSES]>,
    /// When set, twelve layer sets `family.LNN` are written and only this
    /// layer carries class signal.
    pub informative_layer: Option<u32>,
    pub feature_family: String,
    pub test_score: Option<TestScoreModel>,
}

impl SynthSpec {
    pub fn new(corpus_id: &str, seed: u64) -> Self {
        Self {
            seed,
            corpus_id: corpus_id.to_string(),
            test_ids: vec!["sVFT".to_string()],
            speakers_per_class: [20, 20, 20],
            dim: 8,
            frames: (20, 40),
            separation: 5.0,
            corpus_shift: 0.0,
            cooccurrence: None,
            informative_layer: None,
            feature_family: "w2v2".to_string(),
            test_score: None,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Invalid(m));
        if self.corpus_id.is_empty() {
            return bad("empty corpus id".into());
        }
        if self.test_ids.is_empty() {
            return bad("need at least one test id".into());
        }
        if self.dim == 0 {
            return bad("dim must be at least 1".into());
        }
        if self.frames.0 == 0 || self.frames.0 > self.frames.1 {
            return bad(format!("bad frame range {:?}", self.frames));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return bad(format!("separation must be >= 0, got {}", self.separation));
        }
        if !(self.corpus_shift >= 0.0 && self.corpus_shift.is_finite()) {
            return bad(format!("corpus shift must be >= 0, got {}", self.corpus_shift));
        }
        if let Some(t) = &self.cooccurrence {
            let total: f64 = t.iter().flatten().sum();
            if t.iter().flatten().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-6 {
                return bad(format!("co-occurrence table must be non-negative and sum to 1, sums to {total}"));
            }
            for (c, row) in t.iter().enumerate() {
                if self.speakers_per_class[c] > 0 && row.iter().sum::<f64>() <= 0.0 {
                    return bad(format!("co-occurrence row {c} is empty but class {c} has speakers"));
                }
            }
        }
        if let Some(l) = self.informative_layer {
            if !W2V2_LAYERS.contains(&l) {
                return bad(format!("informative layer {l} outside 1..=12"));
            }
        }
        if let Some(m) = &self.test_score {
            if !(m.noise_std >= 0.0) {
                return bad("test score noise must be >= 0".into());
            }
        }
        Ok(())
    }

    /// Planted mean of class `c`.
    pub fn class_mean(&self, c: usize) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        if self.dim >= NUM_CLASSES {
            m[c] = self.separation / std::f64::consts::SQRT_2;
        } else {
            m[0] = self.separation * c as f64;
        }
        m
    }

    fn feature_sets(&self) -> Vec<(String, bool)> {
        match self.informative_layer {
            None => vec![(self.feature_family.clone(), true)],
            Some(l) => W2V2_LAYERS
                .map(|layer| (layer_feature_set(&self.feature_family, layer), layer == l))
                .collect(),
        }
    }
}

/// Splits `n` into parts proportional to `weights` by largest remainder.
/// Ties go to the lower index.
pub fn apportion(n: usize, weights: &[f64; NUM_CLASSES]) -> [usize; NUM_CLASSES] {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return [0; NUM_CLASSES];
    }
    let exact: Vec<f64> = weights.iter().map(|w| w / total * n as f64).collect();
    let mut out: [usize; NUM_CLASSES] = std::array::from_fn(|i| exact[i].floor() as usize);
    let mut order: Vec<usize> = (0..NUM_CLASSES).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = n - out.iter().sum::<usize>();
    for i in order.into_iter().cycle() {
        if left == 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    out
}

fn unit_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Writes EMB1 files and `manifest.jsonl` under `out_dir` and returns the
/// validated corpus.
pub fn generate(spec: &SynthSpec, out_dir: impl AsRef<Path>) -> Result<Corpus, SynthError> {
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    let emb_dir = out_dir.join("emb");
    fs::create_dir_all(&emb_dir).map_err(|source| SynthError::Io {
        path: emb_dir.clone(),
        source,
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let shift: Vec<f64> = unit_direction(&mut rng, spec.dim)
        .into_iter()
        .map(|x| x * spec.corpus_shift)
        .collect();
    let means: Vec<Vec<f64>> = (0..NUM_CLASSES).map(|c| spec.class_mean(c)).collect();
    let sets = spec.feature_sets();

    // Speakers are numbered class by class.
    let mut speakers: Vec<(String, u8, Option<u8>)> = Vec::new();
    for (c, &n) in spec.speakers_per_class.iter().enumerate() {
        let mut dep: Vec<Option<u8>> = match &spec.cooccurrence {
            None => vec![None; n],
            Some(t) => apportion(n, &t[c])
                .iter()
                .enumerate()
                .flat_map(|(d, &k)| std::iter::repeat_n(Some(d as u8), k))
                .collect(),
        };
        dep.shuffle(&mut rng);
        for d in dep {
            let id = format!("{}-spk{:04}", spec.corpus_id, speakers.len());
            speakers.push((id, c as u8, d));
        }
    }

    let mut sessions = Vec::new();
    for test_id in &spec.test_ids {
        for (speaker_id, cognitive, depression) in &speakers {
            let session_id = format!("{speaker_id}-{test_id}");
            let frames = rng.random_range(spec.frames.0..=spec.frames.1);
            let mut features = BTreeMap::new();
            for (set, informative) in &sets {
                let mean = &means[*cognitive as usize];
                let mut values = Vec::with_capacity(frames * spec.dim);
                for _ in 0..frames {
                    for d in 0..spec.dim {
                        let centre = if *informative { mean[d] } else { 0.0 };
                        let noise: f64 = rng.sample(StandardNormal);
                        values.push(centre + shift[d] + noise);
                    }
                }
                let path = emb_dir.join(format!("{session_id}.{set}.emb"));
                write_feature_matrix(&path, &FeatureMatrix::new(frames, spec.dim, values)?)?;
                features.insert(set.clone(), path);
            }
            let test_score = spec.test_score.as_ref().map(|m| {
                let noise: f64 = rng.sample(StandardNormal);
                m.class_means[*cognitive as usize] + m.noise_std * noise
            });
            sessions.push(SessionRecord {
                session_id,
                speaker_id: speaker_id.clone(),
                corpus_id: spec.corpus_id.clone(),
                test_id: test_id.clone(),
                cognitive: *cognitive,
                depression: *depression,
                test_score,
                features,
            });
        }
    }
    let corpus = Corpus::from_sessions(sessions)?;
    write_manifest(&corpus, out_dir.join(MANIFEST_NAME))?;
    Ok(corpus)
}

/// Shuffles cognitive labels among the sessions of each test. Depression
/// labels and feature files are untouched.
pub fn permute_labels(corpus: &Corpus, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sessions = corpus.sessions().to_vec();
    for test_id in corpus.test_ids() {
        let idx: Vec<usize> = (0..sessions.len()).filter(|&i| sessions[i].test_id == test_id).collect();
        let mut labels: Vec<u8> = idx.iter().map(|&i| sessions[i].cognitive).collect();
        labels.shuffle(&mut rng);
        for (i, l) in idx.into_iter().zip(labels) {
            sessions[i].cognitive = l;
        }
    }
    corpus
        .with_sessions(sessions)
        .expect("permuting labels keeps a valid corpus")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{class_counts, load_manifest, LabelKind};
    use crate::features::FeatureStore;
    use crate::pooling::PoolingKind;
    use proptest::prelude::*;

    #[test]
    fn apportion_exact_and_remainders() {
        assert_eq!(apportion(29, &[20.0, 5.0, 4.0]), [20, 5, 4]);
        assert_eq!(apportion(10, &[1.0, 1.0, 1.0]), [4, 3, 3]);
        assert_eq!(apportion(0, &[1.0, 0.0, 0.0]), [0, 0, 0]);
    }

    #[test]
    fn generates_valid_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = SynthSpec::new("A", 3);
        spec.speakers_per_class = [4, 5, 6];
        spec.test_ids = vec!["sVFT".into(), "BNT".into()];
        spec.informative_layer = Some(7);
        spec.dim = 2;
        spec.frames = (3, 5);
        let c = generate(&spec, dir.path()).unwrap();
        assert_eq!(c.len(), 30);
        assert_eq!(c.feature_sets().len(), 12);
        let loaded = load_manifest(dir.path().join(MANIFEST_NAME)).unwrap();
        assert_eq!(loaded.sessions(), c.sessions());
        assert_eq!(class_counts(&c, LabelKind::Cognitive).unwrap(), [8, 10, 12]);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut spec = SynthSpec::new("A", 11);
        spec.speakers_per_class = [2, 2, 2];
        generate(&spec, a.path()).unwrap();
        generate(&spec, b.path()).unwrap();
        for e in fs::read_dir(a.path().join("emb")).unwrap() {
            let e = e.unwrap();
            let other = fs::read(b.path().join("emb").join(e.file_name())).unwrap();
            assert_eq!(fs::read(e.path()).unwrap(), other);
        }
        assert_eq!(
            fs::read(a.path().join(MANIFEST_NAME)).unwrap(),
            fs::read(b.path().join(MANIFEST_NAME)).unwrap()
        );
    }

    #[test]
    fn cooccurrence_marginals() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = SynthSpec::new("N", 0);
        spec.speakers_per_class = [29, 48, 83];
        spec.dim = 1;
        spec.frames = (1, 1);
        let t = [[20.0, 5.0, 4.0], [15.0, 18.0, 15.0], [57.0, 13.0, 13.0]];
        spec.cooccurrence = Some(t.map(|r| r.map(|v| v / 160.0)));
        let c = generate(&spec, dir.path()).unwrap();
        assert_eq!(class_counts(&c, LabelKind::Cognitive).unwrap(), [29, 48, 83]);
        assert_eq!(class_counts(&c, LabelKind::Depression).unwrap(), [92, 36, 32]);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = SynthSpec::new("A", 0);
        s.dim = 0;
        assert!(s.validate().is_err());
        let mut s = SynthSpec::new("A", 0);
        s.cooccurrence = Some([[0.5, 0.0, 0.0], [0.0; 3], [0.0; 3]]);
        assert!(s.validate().is_err());
        let mut s = SynthSpec::new("A", 0);
        s.informative_layer = Some(13);
        assert!(s.validate().is_err());
    }

    #[test]
    fn class_means_are_separation_apart() {
        let mut s = SynthSpec::new("A", 0);
        s.separation = 3.0;
        for dim in [1, 2, 5] {
            s.dim = dim;
            let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            assert!((d(&s.class_mean(0), &s.class_mean(1)) - 3.0).abs() < 1e-12);
            assert!((d(&s.class_mean(1), &s.class_mean(2)) - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn permutation_preserves_counts() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = SynthSpec::new("A", 1);
        spec.speakers_per_class = [5, 7, 9];
        spec.dim = 1;
        spec.frames = (1, 2);
        let c = generate(&spec, dir.path()).unwrap();
        let p = permute_labels(&c, 4);
        assert_eq!(class_counts(&c, LabelKind::Cognitive).unwrap(), class_counts(&p, LabelKind::Cognitive).unwrap());
        assert_eq!(p, permute_labels(&c, 4));
        assert_ne!(p, c);
        for (a, b) in c.sessions().iter().zip(p.sessions()) {
            assert_eq!(a.features, b.features);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn pooled_class_means_converge(seed in any::<u64>(), sep in 0.0f64..4.0) {
            let dir = tempfile::tempdir().unwrap();
            let mut spec = SynthSpec::new("A", seed);
            spec.speakers_per_class = [30, 30, 30];
            spec.dim = 4;
            spec.frames = (10, 10);
            spec.separation = sep;
            let c = generate(&spec, dir.path()).unwrap();
            let store = FeatureStore::new();
            for class in 0..3u8 {
                let members: Vec<&SessionRecord> = c.sessions().iter().filter(|s| s.cognitive == class).collect();
                let rows = store.design_matrix(&members, "w2v2", PoolingKind::Mean).unwrap();
                let planted = spec.class_mean(class as usize);
                // Each pooled vector has noise std 1/sqrt(10); n = 30 of them.
                let bound = 3.0 * (1.0 / 10f64.sqrt()) / (rows.len() as f64).sqrt();
                for d in 0..spec.dim {
                    let m = rows.iter().map(|r| r[d]).sum::<f64>() / rows.len() as f64;
                    prop_assert!((m - planted[d]).abs() < 1.5 * bound, "class {class} dim {d}: {m} vs {}", planted[d]);
                }
            }
        }
    }
}
