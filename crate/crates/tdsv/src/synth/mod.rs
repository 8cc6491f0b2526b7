//! Deterministic synthetic-population generator.
//!
//! Speakers are uniform directions on the unit hypersphere; each utterance
//! perturbs its speaker mean with isotropic Gaussian noise and renormalizes
//! (a cheap stand-in for a von Mises-Fisher cluster). Every speaker enrolls
//! one phrase from three utterances, remaining utterances become tests, and
//! TC/TW/IC trials are enumerated per the label definitions (no IW).
//! Posteriors are one-hot on the true phrase, corrupted to a uniformly
//! random wrong class with a configurable probability.
//!
//! The whole dataset is a pure function of the config: same seed, same
//! bytes.

pub mod rng;

use crate::data::{
    EmbeddingFormat, EmbeddingStore, ModelDefinition, PhrasePosterior, Trial, TrialLabel,
    DataError, PHRASE_COUNT, POSTERIOR_CLASSES,
};
use rng::KeyedRng;
use std::collections::HashMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("infeasible config: {reason}")]
    Infeasible { reason: String },
    #[error("label check failed: {reason}")]
    LabelCheck { reason: String },
}

/// Generator parameters.
///
/// `within_noise` multiplies a per-component standard normal draw before
/// renormalization, so at dimension D the expected noise norm is
/// `within_noise * sqrt(D)` against a unit-norm speaker mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub n_speakers: usize,
    pub n_phrases: usize,
    pub utts_per_speaker_phrase: usize,
    pub dim: usize,
    pub within_noise: f64,
    pub posterior_confusion: f64,
    pub seed: u64,
    /// When set, exactly these many trials are kept per kind (evenly
    /// strided over the full enumeration).
    pub trial_counts: Option<TrialCounts>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialCounts {
    pub tc: usize,
    pub tw: usize,
    pub ic: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_speakers: 50,
            n_phrases: 10,
            utts_per_speaker_phrase: 5,
            dim: 256,
            within_noise: 0.0,
            posterior_confusion: 0.0,
            seed: 7,
            trial_counts: None,
        }
    }
}

/// Everything the pipeline consumes, plus the ground-truth phrase map used
/// by the label checker.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub embeddings: EmbeddingStore,
    pub models: Vec<ModelDefinition>,
    pub trials: Vec<Trial>,
    pub posteriors: Vec<PhrasePosterior>,
    pub speaker_map: Vec<(String, String)>,
    pub utt_phrases: HashMap<String, usize>,
}

fn speaker_id(i: usize) -> String {
    format!("spk{i:04}")
}

fn utt_id(speaker: usize, phrase: usize, k: usize) -> String {
    format!("spk{speaker:04}_p{phrase}_u{k}")
}

fn model_id(speaker: usize) -> String {
    format!("mdl{speaker:04}")
}

fn unit_mean(seed: u64, speaker: usize, dim: usize) -> Vec<f64> {
    let mut rng = KeyedRng::new(seed, &format!("spk/{speaker}"));
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.next_gaussian()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn utterance_vector(seed: u64, mean: &[f64], id: &str, sigma: f64) -> Vec<f32> {
    let mut rng = KeyedRng::new(seed, &format!("utt/{id}"));
    let noisy: Vec<f64> = mean
        .iter()
        .map(|m| m + sigma * rng.next_gaussian())
        .collect();
    let norm = noisy.iter().map(|x| x * x).sum::<f64>().sqrt();
    // sigma = 0 keeps the mean exactly; a vanishing norm cannot happen for
    // unit means unless the noise cancels it, which renormalization guards.
    let norm = if norm > 1e-12 { norm } else { 1.0 };
    noisy.into_iter().map(|x| (x / norm) as f32).collect()
}

fn strided_subset<T: Clone>(items: &[T], keep: usize) -> Vec<T> {
    // keep <= items.len(); indices are strictly increasing.
    (0..keep)
        .map(|j| items[j * items.len() / keep].clone())
        .collect()
}

/// Generates the full synthetic dataset for `config`.
pub fn generate(config: &SynthConfig) -> Result<SynthData, SynthError> {
    let fail = |reason: String| Err(SynthError::Infeasible { reason });
    if config.n_speakers < 2 {
        return fail("need at least 2 speakers for imposter trials".into());
    }
    if config.n_phrases == 0 || config.n_phrases > PHRASE_COUNT {
        return fail(format!(
            "n_phrases must be in 1..={PHRASE_COUNT}, got {}",
            config.n_phrases
        ));
    }
    if config.utts_per_speaker_phrase < 3 {
        return fail("need at least 3 utterances per (speaker, phrase) for enrollment".into());
    }
    if config.dim == 0 {
        return fail("dim must be positive".into());
    }
    if !(0.0..=1.0).contains(&config.posterior_confusion) {
        return fail(format!(
            "posterior_confusion must be in [0, 1], got {}",
            config.posterior_confusion
        ));
    }
    if config.within_noise < 0.0 {
        return fail(format!(
            "within_noise must be non-negative, got {}",
            config.within_noise
        ));
    }

    let s = config.n_speakers;
    let p = config.n_phrases;
    let u = config.utts_per_speaker_phrase;

    let means: Vec<Vec<f64>> = (0..s)
        .map(|i| unit_mean(config.seed, i, config.dim))
        .collect();

    let mut embeddings = EmbeddingStore::new();
    let mut speaker_map = Vec::with_capacity(s * p * u);
    let mut utt_phrases = HashMap::with_capacity(s * p * u);
    for (speaker, mean) in means.iter().enumerate() {
        for phrase in 0..p {
            for k in 0..u {
                let id = utt_id(speaker, phrase, k);
                let v = utterance_vector(config.seed, mean, &id, config.within_noise);
                embeddings
                    .insert(id.clone(), v)
                    .expect("generated ids are unique");
                speaker_map.push((id.clone(), speaker_id(speaker)));
                utt_phrases.insert(id, phrase);
            }
        }
    }

    // One model per speaker, enrolled on phrase (speaker mod p) from the
    // first three utterances of that phrase.
    let models: Vec<ModelDefinition> = (0..s)
        .map(|speaker| {
            let phrase = speaker % p;
            ModelDefinition {
                model_id: model_id(speaker),
                phrase_id: phrase,
                enrollment_utts: (0..3).map(|k| utt_id(speaker, phrase, k)).collect(),
            }
        })
        .collect();

    // Trials. Enrollment utterances never appear as tests.
    let is_enrollment =
        |speaker: usize, phrase: usize, k: usize| phrase == speaker % p && k < 3;
    let mut tc = Vec::new();
    let mut tw = Vec::new();
    let mut ic = Vec::new();
    for speaker in 0..s {
        let phrase = speaker % p;
        let mid = model_id(speaker);
        for k in 3..u {
            tc.push(Trial {
                model_id: mid.clone(),
                test_utt_id: utt_id(speaker, phrase, k),
                label: Some(TrialLabel::Tc),
            });
        }
        for other_phrase in (0..p).filter(|&q| q != phrase) {
            for k in 0..u {
                tw.push(Trial {
                    model_id: mid.clone(),
                    test_utt_id: utt_id(speaker, other_phrase, k),
                    label: Some(TrialLabel::Tw),
                });
            }
        }
        for imposter in (0..s).filter(|&j| j != speaker) {
            for k in 0..u {
                if is_enrollment(imposter, phrase, k) {
                    continue;
                }
                ic.push(Trial {
                    model_id: mid.clone(),
                    test_utt_id: utt_id(imposter, phrase, k),
                    label: Some(TrialLabel::Ic),
                });
            }
        }
    }
    if tc.is_empty() {
        return fail(format!(
            "no TC trials: utts_per_speaker_phrase={u} leaves nothing beyond enrollment"
        ));
    }

    let mut trials = Vec::new();
    match config.trial_counts {
        None => {
            trials.extend(tc);
            trials.extend(tw);
            trials.extend(ic);
        }
        Some(counts) => {
            for (kind, pool, want) in [
                ("TC", &tc, counts.tc),
                ("TW", &tw, counts.tw),
                ("IC", &ic, counts.ic),
            ] {
                if want > pool.len() {
                    return fail(format!(
                        "requested {want} {kind} trials but only {} are constructible",
                        pool.len()
                    ));
                }
                trials.extend(strided_subset(pool, want));
            }
        }
    }

    // Posteriors for every utterance: one-hot on the true phrase, corrupted
    // to a uniformly random wrong class (free text included) with
    // probability posterior_confusion.
    let mut posteriors = Vec::with_capacity(speaker_map.len());
    for (id, _) in &speaker_map {
        let true_phrase = utt_phrases[id];
        let mut rng = KeyedRng::new(config.seed, &format!("post/{id}"));
        let observed = if rng.next_f64() < config.posterior_confusion {
            let wrong = rng.next_range((POSTERIOR_CLASSES - 1) as u64) as usize;
            if wrong < true_phrase {
                wrong
            } else {
                wrong + 1
            }
        } else {
            true_phrase
        };
        let mut probs = vec![0.0; POSTERIOR_CLASSES];
        probs[observed] = 1.0;
        posteriors.push(PhrasePosterior {
            utt_id: id.clone(),
            probs,
        });
    }

    Ok(SynthData {
        embeddings,
        models,
        trials,
        posteriors,
        speaker_map,
        utt_phrases,
    })
}

/// Independent label checker: re-derives every trial's label from the
/// speaker map and the ground-truth phrase map and compares.
pub fn verify_labels(data: &SynthData) -> Result<(), SynthError> {
    let speaker_of: HashMap<&str, &str> = data
        .speaker_map
        .iter()
        .map(|(u, s)| (u.as_str(), s.as_str()))
        .collect();
    let mut model_speaker: HashMap<&str, &str> = HashMap::new();
    let model_phrase: HashMap<&str, usize> = data
        .models
        .iter()
        .map(|m| (m.model_id.as_str(), m.phrase_id))
        .collect();
    for model in &data.models {
        let mut speakers = model.enrollment_utts.iter().map(|u| {
            speaker_of.get(u.as_str()).copied().ok_or_else(|| SynthError::LabelCheck {
                reason: format!("enrollment utterance {u:?} has no speaker"),
            })
        });
        let first = speakers.next().ok_or_else(|| SynthError::LabelCheck {
            reason: format!("model {:?} has no enrollment utterances", model.model_id),
        })??;
        for s in speakers {
            if s? != first {
                return Err(SynthError::LabelCheck {
                    reason: format!("model {:?} mixes speakers", model.model_id),
                });
            }
        }
        for utt in &model.enrollment_utts {
            if data.utt_phrases.get(utt) != Some(&model.phrase_id) {
                return Err(SynthError::LabelCheck {
                    reason: format!(
                        "model {:?} enrolls {utt:?} of the wrong phrase",
                        model.model_id
                    ),
                });
            }
        }
        model_speaker.insert(model.model_id.as_str(), first);
    }
    for (i, trial) in data.trials.iter().enumerate() {
        let model_spk =
            model_speaker
                .get(trial.model_id.as_str())
                .ok_or_else(|| SynthError::LabelCheck {
                    reason: format!("trial {i}: unknown model {:?}", trial.model_id),
                })?;
        let test_spk = speaker_of.get(trial.test_utt_id.as_str()).ok_or_else(|| {
            SynthError::LabelCheck {
                reason: format!("trial {i}: unknown test utterance {:?}", trial.test_utt_id),
            }
        })?;
        let phrase = data.utt_phrases.get(&trial.test_utt_id).ok_or_else(|| {
            SynthError::LabelCheck {
                reason: format!("trial {i}: no phrase for {:?}", trial.test_utt_id),
            }
        })?;
        let enrolled_phrase = model_phrase[trial.model_id.as_str()];
        let same_speaker = model_spk == test_spk;
        let same_phrase = *phrase == enrolled_phrase;
        let expected = match (same_speaker, same_phrase) {
            (true, true) => TrialLabel::Tc,
            (true, false) => TrialLabel::Tw,
            (false, true) => TrialLabel::Ic,
            (false, false) => TrialLabel::Iw,
        };
        if trial.label != Some(expected) {
            return Err(SynthError::LabelCheck {
                reason: format!(
                    "trial {i}: label {:?}, derived {expected:?}",
                    trial.label
                ),
            });
        }
    }
    Ok(())
}

/// File names used by [`write_dataset`].
pub mod files {
    pub const EMBEDDINGS_BINARY: &str = "embeddings.bin";
    pub const EMBEDDINGS_TEXT: &str = "embeddings.txt";
    pub const MODELS: &str = "models.tsv";
    pub const TRIALS: &str = "trials.tsv";
    pub const POSTERIORS: &str = "posteriors.tsv";
    pub const SPEAKER_MAP: &str = "speaker_map.tsv";
}

/// Writes every artifact of the dataset into `dir` using the shared
/// interchange formats.
pub fn write_dataset(
    data: &SynthData,
    dir: &Path,
    format: EmbeddingFormat,
) -> Result<(), DataError> {
    let emb_name = match format {
        EmbeddingFormat::Binary => files::EMBEDDINGS_BINARY,
        EmbeddingFormat::Text => files::EMBEDDINGS_TEXT,
    };
    crate::data::write_embeddings(&dir.join(emb_name), &data.embeddings, format)?;
    crate::data::write_models(&dir.join(files::MODELS), &data.models)?;
    crate::data::write_trials(&dir.join(files::TRIALS), &data.trials)?;
    crate::data::write_posteriors(&dir.join(files::POSTERIORS), &data.posteriors)?;
    crate::data::write_speaker_map(&dir.join(files::SPEAKER_MAP), &data.speaker_map)?;
    Ok(())
}
