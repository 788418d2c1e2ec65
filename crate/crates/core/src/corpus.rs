//! Session records, JSON-Lines manifests and corpus validation.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{read_feature_matrix, MatrixError};

pub const NUM_CLASSES: usize = 3;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: malformed manifest line: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("duplicate session_id {0:?}")]
    DuplicateSession(String),
    #[error("session {session:?}: {field} label out of range: {value}")]
    LabelOutOfRange {
        session: String,
        field: &'static str,
        value: i64,
    },
    #[error("session {session:?}: feature file for {feature_set:?} is unusable: {source}")]
    FeatureFile {
        session: String,
        feature_set: String,
        #[source]
        source: MatrixError,
    },
    #[error("session {session:?}: missing feature set(s) {missing:?}")]
    MissingFeatureSet {
        session: String,
        missing: Vec<String>,
    },
    #[error("session {0:?}: empty speaker_id")]
    EmptySpeaker(String),
    #[error("manifest mixes corpus ids {0:?}")]
    MixedCorpus(Vec<String>),
    #[error("missing {label} label on session(s) {sessions:?}")]
    MissingLabel {
        label: LabelKind,
        sessions: Vec<String>,
    },
}

/// Which ground-truth labelling of a session is meant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Cognitive,
    Depression,
}

impl std::fmt::Display for LabelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LabelKind::Cognitive => "cognitive",
            LabelKind::Depression => "depression",
        })
    }
}

impl std::str::FromStr for LabelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cognitive" => Ok(LabelKind::Cognitive),
            "depression" => Ok(LabelKind::Depression),
            other => Err(format!("unknown label {other:?} (cognitive|depression)")),
        }
    }
}

/// One recorded administration of one cognitive test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub speaker_id: String,
    pub corpus_id: String,
    pub test_id: String,
    /// 0 = HC, 1 = MCI, 2 = DEM.
    pub cognitive: u8,
    /// 0 = none, 1 = mild, 2 = moderate-to-severe.
    pub depression: Option<u8>,
    pub test_score: Option<f64>,
    /// Feature-set name to resolved feature file path.
    pub features: BTreeMap<String, PathBuf>,
}

impl SessionRecord {
    pub fn label(&self, kind: LabelKind) -> Option<u8> {
        match kind {
            LabelKind::Cognitive => Some(self.cognitive),
            LabelKind::Depression => self.depression,
        }
    }
}

/// A validated, immutable set of sessions from one corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    corpus_id: String,
    sessions: Vec<SessionRecord>,
    feature_sets: Vec<String>,
}

impl Corpus {
    /// Validates and orders sessions. Feature files are checked for
    /// existence and parsability.
    pub fn from_sessions(sessions: Vec<SessionRecord>) -> Result<Self, CorpusError> {
        let corpus = Self::from_sessions_unchecked(sessions)?;
        corpus.check_feature_files()?;
        Ok(corpus)
    }

    /// Structural validation only; feature files are not touched.
    pub fn from_sessions_unchecked(mut sessions: Vec<SessionRecord>) -> Result<Self, CorpusError> {
        sessions.sort_by(|a, b| a.session_id.cmp(&b.session_id));
        let mut seen = HashSet::new();
        for s in &sessions {
            if !seen.insert(s.session_id.as_str()) {
                return Err(CorpusError::DuplicateSession(s.session_id.clone()));
            }
            if s.speaker_id.is_empty() {
                return Err(CorpusError::EmptySpeaker(s.session_id.clone()));
            }
            check_label(&s.session_id, "cognitive", i64::from(s.cognitive))?;
            if let Some(d) = s.depression {
                check_label(&s.session_id, "depression", i64::from(d))?;
            }
        }
        let ids: BTreeSet<&str> = sessions.iter().map(|s| s.corpus_id.as_str()).collect();
        if ids.len() > 1 {
            return Err(CorpusError::MixedCorpus(ids.into_iter().map(String::from).collect()));
        }
        let corpus_id = ids.into_iter().next().unwrap_or_default().to_string();

        let declared: BTreeSet<&String> = sessions.iter().flat_map(|s| s.features.keys()).collect();
        for s in &sessions {
            let missing: Vec<String> = declared
                .iter()
                .filter(|name| !s.features.contains_key(name.as_str()))
                .map(|name| name.to_string())
                .collect();
            if !missing.is_empty() {
                return Err(CorpusError::MissingFeatureSet {
                    session: s.session_id.clone(),
                    missing,
                });
            }
        }
        let feature_sets = declared.into_iter().cloned().collect();
        Ok(Self {
            corpus_id,
            sessions,
            feature_sets,
        })
    }

    fn check_feature_files(&self) -> Result<(), CorpusError> {
        for s in &self.sessions {
            for (name, path) in &s.features {
                read_feature_matrix(path).map_err(|source| CorpusError::FeatureFile {
                    session: s.session_id.clone(),
                    feature_set: name.clone(),
                    source,
                })?;
            }
        }
        Ok(())
    }

    pub fn corpus_id(&self) -> &str {
        &self.corpus_id
    }

    pub fn sessions(&self) -> &[SessionRecord] {
        &self.sessions
    }

    pub fn feature_sets(&self) -> &[String] {
        &self.feature_sets
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn session(&self, session_id: &str) -> Option<&SessionRecord> {
        self.sessions
            .binary_search_by(|s| s.session_id.as_str().cmp(session_id))
            .ok()
            .map(|i| &self.sessions[i])
    }

    /// Sessions of one cognitive test, in session_id order.
    pub fn sessions_for_test<'a>(&'a self, test_id: &'a str) -> impl Iterator<Item = &'a SessionRecord> {
        self.sessions.iter().filter(move |s| s.test_id == test_id)
    }

    pub fn test_ids(&self) -> Vec<String> {
        let ids: BTreeSet<&str> = self.sessions.iter().map(|s| s.test_id.as_str()).collect();
        ids.into_iter().map(String::from).collect()
    }

    /// Returns a copy with replaced sessions, re-running structural checks.
    pub fn with_sessions(&self, sessions: Vec<SessionRecord>) -> Result<Self, CorpusError> {
        Self::from_sessions_unchecked(sessions)
    }
}

fn check_label(session: &str, field: &'static str, value: i64) -> Result<(), CorpusError> {
    if (0..NUM_CLASSES as i64).contains(&value) {
        Ok(())
    } else {
        Err(CorpusError::LabelOutOfRange {
            session: session.to_string(),
            field,
            value,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestLine {
    session_id: String,
    speaker_id: String,
    corpus_id: String,
    test_id: String,
    cognitive: i64,
    #[serde(default)]
    depression: Option<i64>,
    #[serde(default)]
    test_score: Option<f64>,
    features: BTreeMap<String, String>,
}

/// Loads and validates a JSON-Lines manifest. Feature paths are resolved
/// relative to the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let sessions = read_manifest_lines(path)?;
    Corpus::from_sessions(sessions)
}

/// Parses a manifest without opening feature files.
pub fn load_manifest_unchecked(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let sessions = read_manifest_lines(path)?;
    Corpus::from_sessions_unchecked(sessions)
}

fn read_manifest_lines(path: &Path) -> Result<Vec<SessionRecord>, CorpusError> {
    let file = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut sessions = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: ManifestLine = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            msg: e.to_string(),
        })?;
        check_label(&raw.session_id, "cognitive", raw.cognitive)?;
        if let Some(d) = raw.depression {
            check_label(&raw.session_id, "depression", d)?;
        }
        if let Some(score) = raw.test_score {
            if !score.is_finite() {
                return Err(CorpusError::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    msg: "test_score is not finite".into(),
                });
            }
        }
        sessions.push(SessionRecord {
            session_id: raw.session_id,
            speaker_id: raw.speaker_id,
            corpus_id: raw.corpus_id,
            test_id: raw.test_id,
            cognitive: raw.cognitive as u8,
            depression: raw.depression.map(|d| d as u8),
            test_score: raw.test_score,
            features: raw
                .features
                .into_iter()
                .map(|(name, rel)| (name, base.join(rel)))
                .collect(),
        });
    }
    Ok(sessions)
}

/// Writes a manifest for `corpus`. Feature paths below the manifest's
/// directory are written relative to it, others are written as given.
pub fn write_manifest(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut out = Vec::new();
    for s in &corpus.sessions {
        let line = ManifestLine {
            session_id: s.session_id.clone(),
            speaker_id: s.speaker_id.clone(),
            corpus_id: s.corpus_id.clone(),
            test_id: s.test_id.clone(),
            cognitive: i64::from(s.cognitive),
            depression: s.depression.map(i64::from),
            test_score: s.test_score,
            features: s
                .features
                .iter()
                .map(|(k, p)| (k.clone(), relative_to(p, &base)))
                .collect(),
        };
        serde_json::to_writer(&mut out, &line).expect("manifest line serializes");
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(&out).map_err(io_err)
}

fn relative_to(path: &Path, base: &Path) -> String {
    let rel = path.strip_prefix(base).unwrap_or(path);
    let parts: Vec<String> = rel
        .components()
        .filter(|c| !matches!(c, Component::CurDir))
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect();
    if rel.is_absolute() {
        rel.to_string_lossy().into_owned()
    } else {
        parts.join("/")
    }
}

/// Per-class counts of `label` over all sessions.
pub fn class_counts(corpus: &Corpus, label: LabelKind) -> Result<[usize; NUM_CLASSES], CorpusError> {
    class_counts_of(corpus.sessions(), label)
}

pub fn class_counts_of<'a>(
    sessions: impl IntoIterator<Item = &'a SessionRecord>,
    label: LabelKind,
) -> Result<[usize; NUM_CLASSES], CorpusError> {
    let mut counts = [0usize; NUM_CLASSES];
    let mut missing = Vec::new();
    for s in sessions {
        match s.label(label) {
            Some(c) => counts[c as usize] += 1,
            None => missing.push(s.session_id.clone()),
        }
    }
    if missing.is_empty() {
        Ok(counts)
    } else {
        Err(CorpusError::MissingLabel {
            label,
            sessions: missing,
        })
    }
}
