//! Scoring backend: enrollment averaging, batched cosine trial scoring,
//! adaptive score normalization against a speaker cohort, and fusion.
//!
//! Trials are scored by independent workers over read-only stores, so the
//! output is identical regardless of worker count; records always come back
//! in trial order. Per-embedding cohort statistics are computed once per
//! unique id and shared across trials.

use crate::data::{EmbeddingStore, EnrollmentPolicy, ModelDefinition, ScoreRecord, Trial};
use rayon::prelude::*;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("trial line {line}: unknown model id {model_id:?}")]
    MissingModel { model_id: String, line: usize },
    #[error("trial line {line}: unknown test utterance id {utt_id:?}")]
    MissingTest { utt_id: String, line: usize },
    #[error("model {model_id:?}: enrollment utterance {utt_id:?} not in store")]
    MissingEnrollmentUtt { model_id: String, utt_id: String },
    #[error("model {model_id:?}: strict mode requires 3 enrollment utterances, found {found}")]
    EnrollmentCount { model_id: String, found: usize },
    #[error("duplicate model id {model_id:?}")]
    DuplicateModel { model_id: String },
    #[error("embedding {id:?} has zero norm")]
    ZeroNorm { id: String },
    #[error("speaker {speaker_id:?}: centroid has (near-)zero norm")]
    DegenerateCentroid { speaker_id: String },
    #[error("cohort utterance {utt_id:?} not in store")]
    MissingCohortUtt { utt_id: String },
    #[error("embedding {id:?}: cohort std {sigma:e} below epsilon")]
    DegenerateCohort { id: String, sigma: f64 },
    #[error("top_n {top_n} exceeds cohort size {cohort}")]
    TopNExceedsCohort { top_n: usize, cohort: usize },
    #[error("cohort is empty")]
    EmptyCohort,
    #[error("dimension mismatch: {what} has dim {found}, expected {expected}")]
    DimMismatch {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("fusion input {set} line {line}: trial does not match the first system")]
    FuseMisaligned { set: usize, line: usize },
    #[error("fusion input {set} has {found} records, expected {expected}")]
    FuseLength {
        set: usize,
        expected: usize,
        found: usize,
    },
    #[error("fusion needs at least one score set")]
    FuseEmpty,
}

fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

fn norm_f64(a: &[f32]) -> f64 {
    dot_f64(a, a).sqrt()
}

/// Cosine similarity in `[-1, 1]`; both vectors must be nonzero.
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64, BackendError> {
    let na = norm_f64(a);
    let nb = norm_f64(b);
    if na < 1e-12 {
        return Err(BackendError::ZeroNorm { id: "lhs".into() });
    }
    if nb < 1e-12 {
        return Err(BackendError::ZeroNorm { id: "rhs".into() });
    }
    Ok(dot_f64(a, b) / (na * nb))
}

fn normalized_f64(v: &[f32]) -> Option<Vec<f64>> {
    let norm = norm_f64(v);
    if norm < 1e-12 {
        return None;
    }
    Some(v.iter().map(|&x| x as f64 / norm).collect())
}

/// Averages the L2-normalized enrollment embeddings of each model. The
/// result is keyed by model id and is not re-normalized.
pub fn enroll(
    models: &[ModelDefinition],
    store: &EmbeddingStore,
    policy: EnrollmentPolicy,
) -> Result<EmbeddingStore, BackendError> {
    let mut out = EmbeddingStore::new();
    for model in models {
        if !policy.check(model.enrollment_utts.len()) {
            return Err(BackendError::EnrollmentCount {
                model_id: model.model_id.clone(),
                found: model.enrollment_utts.len(),
            });
        }
        let mut acc = vec![0.0f64; store.dim()];
        for utt in &model.enrollment_utts {
            let values = store
                .get(utt)
                .ok_or_else(|| BackendError::MissingEnrollmentUtt {
                    model_id: model.model_id.clone(),
                    utt_id: utt.clone(),
                })?;
            let unit = normalized_f64(values).ok_or_else(|| BackendError::ZeroNorm {
                id: utt.clone(),
            })?;
            for (a, u) in acc.iter_mut().zip(&unit) {
                *a += u;
            }
        }
        let n = model.enrollment_utts.len() as f64;
        let mean: Vec<f32> = acc.into_iter().map(|a| (a / n) as f32).collect();
        out.insert(model.model_id.clone(), mean).map_err(|_| {
            BackendError::DuplicateModel {
                model_id: model.model_id.clone(),
            }
        })?;
    }
    Ok(out)
}

/// Background speaker centroids used by score normalization.
#[derive(Debug, Clone)]
pub struct Cohort {
    dim: usize,
    speaker_ids: Vec<String>,
    centroids: Vec<Vec<f32>>,
}

impl Cohort {
    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn speaker_ids(&self) -> impl Iterator<Item = &str> {
        self.speaker_ids.iter().map(String::as_str)
    }

    /// Centroids in cohort-index order (first appearance of each speaker).
    pub fn centroids(&self) -> impl Iterator<Item = &[f32]> {
        self.centroids.iter().map(Vec::as_slice)
    }

    pub fn get(&self, speaker_id: &str) -> Option<&[f32]> {
        self.speaker_ids
            .iter()
            .position(|s| s == speaker_id)
            .map(|i| self.centroids[i].as_slice())
    }
}

/// One centroid per speaker: the arithmetic mean of that speaker's
/// L2-normalized embeddings. Speakers keep first-appearance order, which
/// fixes the cohort index used for tie-breaking.
pub fn build_cohort(
    store: &EmbeddingStore,
    speaker_map: &[(String, String)],
) -> Result<Cohort, BackendError> {
    if speaker_map.is_empty() {
        return Err(BackendError::EmptyCohort);
    }
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<&str>> = HashMap::new();
    for (utt, speaker) in speaker_map {
        if !store.contains(utt) {
            return Err(BackendError::MissingCohortUtt {
                utt_id: utt.clone(),
            });
        }
        let entry = groups.entry(speaker.as_str()).or_default();
        if entry.is_empty() {
            order.push(speaker.as_str());
        }
        entry.push(utt.as_str());
    }
    let dim = store.dim();
    let mut speaker_ids = Vec::with_capacity(order.len());
    let mut centroids = Vec::with_capacity(order.len());
    for speaker in order {
        let utts = &groups[speaker];
        let mut acc = vec![0.0f64; dim];
        for utt in utts {
            let unit = normalized_f64(store.get(utt).expect("checked above")).ok_or_else(|| {
                BackendError::ZeroNorm {
                    id: (*utt).to_string(),
                }
            })?;
            for (a, u) in acc.iter_mut().zip(&unit) {
                *a += u;
            }
        }
        let n = utts.len() as f64;
        let centroid: Vec<f32> = acc.into_iter().map(|a| (a / n) as f32).collect();
        if norm_f64(&centroid) < 1e-12 {
            return Err(BackendError::DegenerateCentroid {
                speaker_id: speaker.to_string(),
            });
        }
        speaker_ids.push(speaker.to_string());
        centroids.push(centroid);
    }
    Ok(Cohort {
        dim,
        speaker_ids,
        centroids,
    })
}

/// Scores every trial as the cosine between its model and test embeddings.
/// Output order equals trial order; errors name the 1-based trial line.
pub fn score_trials(
    trials: &[Trial],
    model_vecs: &EmbeddingStore,
    tests: &EmbeddingStore,
) -> Result<Vec<ScoreRecord>, BackendError> {
    // Validate serially so the first bad line is reported, then score in
    // parallel without fallible paths.
    for (i, trial) in trials.iter().enumerate() {
        let model = model_vecs
            .get(&trial.model_id)
            .ok_or_else(|| BackendError::MissingModel {
                model_id: trial.model_id.clone(),
                line: i + 1,
            })?;
        let test = tests
            .get(&trial.test_utt_id)
            .ok_or_else(|| BackendError::MissingTest {
                utt_id: trial.test_utt_id.clone(),
                line: i + 1,
            })?;
        if norm_f64(model) < 1e-12 {
            return Err(BackendError::ZeroNorm {
                id: trial.model_id.clone(),
            });
        }
        if norm_f64(test) < 1e-12 {
            return Err(BackendError::ZeroNorm {
                id: trial.test_utt_id.clone(),
            });
        }
    }
    Ok(trials
        .par_iter()
        .map(|trial| {
            let model = model_vecs.get(&trial.model_id).expect("validated");
            let test = tests.get(&trial.test_utt_id).expect("validated");
            let score = dot_f64(model, test) / (norm_f64(model) * norm_f64(test));
            ScoreRecord {
                model_id: trial.model_id.clone(),
                test_utt_id: trial.test_utt_id.clone(),
                score,
            }
        })
        .collect())
}

/// Adaptive score normalization parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsNormConfig {
    /// How many of the most similar cohort scores form the statistics.
    pub top_n: usize,
    /// Reject a cohort whose selected standard deviation falls below this.
    pub epsilon_sigma: f64,
}

impl Default for AsNormConfig {
    fn default() -> Self {
        AsNormConfig {
            top_n: 300,
            epsilon_sigma: 1e-6,
        }
    }
}

/// The `top_n` largest scores, ties broken toward the lower cohort index.
pub fn top_n_scores(scores: &[f64], top_n: usize) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(top_n);
    idx.into_iter().map(|i| scores[i]).collect()
}

/// Mean and population standard deviation.
pub fn mean_and_population_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy)]
struct CohortStats {
    mean: f64,
    std: f64,
}

fn cohort_stats(
    scores: &[f64],
    config: &AsNormConfig,
    id: &str,
) -> Result<CohortStats, BackendError> {
    let selected = top_n_scores(scores, config.top_n);
    let (mean, std) = mean_and_population_std(&selected);
    if std < config.epsilon_sigma {
        return Err(BackendError::DegenerateCohort {
            id: id.to_string(),
            sigma: std,
        });
    }
    Ok(CohortStats { mean, std })
}

/// Symmetric adaptive normalization of a single raw score given the full
/// cohort score lists of its enrollment and test sides.
pub fn asnorm_score(
    raw: f64,
    enroll_scores: &[f64],
    test_scores: &[f64],
    config: &AsNormConfig,
) -> Result<f64, BackendError> {
    let e = cohort_stats(enroll_scores, config, "<enrollment side>")?;
    let t = cohort_stats(test_scores, config, "<test side>")?;
    Ok(0.5 * ((raw - e.mean) / e.std + (raw - t.mean) / t.std))
}

fn embedding_cohort_scores(embedding: &[f32], cohort: &Cohort) -> Vec<f64> {
    let norm = norm_f64(embedding);
    cohort
        .centroids
        .iter()
        .map(|c| dot_f64(embedding, c) / (norm * norm_f64(c)))
        .collect()
}

fn unique_ids<'a>(ids: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for id in ids {
        if seen.insert(id) {
            out.push(id);
        }
    }
    out
}

/// Symmetric AS-Norm over a raw score list.
///
/// For each trial, the raw score is z-normalized twice — against the top-N
/// cohort scores of the model embedding and of the test embedding — and the
/// two z-scores are averaged. Statistics are computed once per unique
/// embedding and cached across trials.
pub fn asnorm(
    raw: &[ScoreRecord],
    model_vecs: &EmbeddingStore,
    tests: &EmbeddingStore,
    cohort: &Cohort,
    config: &AsNormConfig,
) -> Result<Vec<ScoreRecord>, BackendError> {
    if cohort.is_empty() {
        return Err(BackendError::EmptyCohort);
    }
    if config.top_n == 0 || config.top_n > cohort.len() {
        return Err(BackendError::TopNExceedsCohort {
            top_n: config.top_n,
            cohort: cohort.len(),
        });
    }
    if model_vecs.dim() != cohort.dim() {
        return Err(BackendError::DimMismatch {
            what: "model embeddings".into(),
            expected: cohort.dim(),
            found: model_vecs.dim(),
        });
    }
    if tests.dim() != cohort.dim() {
        return Err(BackendError::DimMismatch {
            what: "test embeddings".into(),
            expected: cohort.dim(),
            found: tests.dim(),
        });
    }
    for (i, record) in raw.iter().enumerate() {
        if !model_vecs.contains(&record.model_id) {
            return Err(BackendError::MissingModel {
                model_id: record.model_id.clone(),
                line: i + 1,
            });
        }
        if !tests.contains(&record.test_utt_id) {
            return Err(BackendError::MissingTest {
                utt_id: record.test_utt_id.clone(),
                line: i + 1,
            });
        }
    }

    let stats_for = |ids: Vec<&str>, store: &EmbeddingStore| {
        ids.into_par_iter()
            .map(|id| {
                let embedding = store.get(id).expect("validated");
                if norm_f64(embedding) < 1e-12 {
                    return Err(BackendError::ZeroNorm { id: id.to_string() });
                }
                let scores = embedding_cohort_scores(embedding, cohort);
                cohort_stats(&scores, config, id).map(|s| (id.to_string(), s))
            })
            .collect::<Result<HashMap<String, CohortStats>, BackendError>>()
    };
    let model_stats = stats_for(
        unique_ids(raw.iter().map(|r| r.model_id.as_str())),
        model_vecs,
    )?;
    let test_stats = stats_for(
        unique_ids(raw.iter().map(|r| r.test_utt_id.as_str())),
        tests,
    )?;

    Ok(raw
        .par_iter()
        .map(|record| {
            let e = model_stats[&record.model_id];
            let t = test_stats[&record.test_utt_id];
            let z = 0.5 * ((record.score - e.mean) / e.std + (record.score - t.mean) / t.std);
            ScoreRecord {
                model_id: record.model_id.clone(),
                test_utt_id: record.test_utt_id.clone(),
                score: z,
            }
        })
        .collect())
}

/// Equal-weight fusion of aligned score lists: the per-trial arithmetic
/// mean. Every set must cover the identical trial sequence.
pub fn fuse(score_sets: &[Vec<ScoreRecord>]) -> Result<Vec<ScoreRecord>, BackendError> {
    let first = score_sets.first().ok_or(BackendError::FuseEmpty)?;
    for (set_idx, set) in score_sets.iter().enumerate().skip(1) {
        if set.len() != first.len() {
            return Err(BackendError::FuseLength {
                set: set_idx + 1,
                expected: first.len(),
                found: set.len(),
            });
        }
        for (line, (a, b)) in first.iter().zip(set).enumerate() {
            if a.model_id != b.model_id || a.test_utt_id != b.test_utt_id {
                return Err(BackendError::FuseMisaligned {
                    set: set_idx + 1,
                    line: line + 1,
                });
            }
        }
    }
    let n = score_sets.len() as f64;
    Ok(first
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let sum: f64 = score_sets.iter().map(|s| s[i].score).sum();
            ScoreRecord {
                model_id: rec.model_id.clone(),
                test_utt_id: rec.test_utt_id.clone(),
                score: sum / n,
            }
        })
        .collect())
}
