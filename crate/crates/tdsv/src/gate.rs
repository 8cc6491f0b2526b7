//! Phrase verification gate.
//!
//! Each test utterance carries an 11-class posterior (ten phrases plus free
//! text). A trial is accepted only when the argmax class equals the model's
//! enrolled phrase; rejected trials are floored to a constant that sits
//! below every achievable speaker score, which realizes rejection inside a
//! one-score-per-trial contract.

use crate::data::{ModelDefinition, PhrasePosterior, ScoreRecord, Trial};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GateError {
    #[error("trial line {line}: no posterior for test utterance {utt_id:?}")]
    MissingPosterior { utt_id: String, line: usize },
    #[error("trial line {line}: no model definition for {model_id:?}")]
    MissingModel { model_id: String, line: usize },
    #[error("scores have {found} records, trials have {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("line {line}: score record does not match the trial list")]
    Misaligned { line: usize },
    #[error(
        "floor {floor} is not strictly below the minimum accepted score {min_accepted}"
    )]
    FloorNotBelowScores { floor: f64, min_accepted: f64 },
}

/// Gate parameters. `min_confidence`, when set, additionally rejects
/// trials whose posterior maximum falls below the threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateConfig {
    pub floor_score: f64,
    pub min_confidence: Option<f64>,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            floor_score: -1000.0,
            min_confidence: None,
        }
    }
}

/// Audit record for one gated trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateDecision {
    pub trial_index: usize,
    pub predicted_class: usize,
    pub accept: bool,
}

/// Argmax over the 11 posterior classes, ties broken toward the lowest
/// index. Index 10 is the free-text class.
pub fn classify(posterior: &PhrasePosterior) -> usize {
    let mut best = 0;
    for (i, &p) in posterior.probs.iter().enumerate() {
        if p > posterior.probs[best] {
            best = i;
        }
    }
    best
}

/// Applies the phrase gate to a scored trial list.
///
/// Accepted trials keep their score bit-for-bit; rejected trials get
/// `floor_score`. Decisions are returned for auditing. The floor is
/// validated post hoc: it must sit strictly below every accepted score.
pub fn gate(
    trials: &[Trial],
    models: &[ModelDefinition],
    posteriors: &[PhrasePosterior],
    scores: &[ScoreRecord],
    config: &GateConfig,
) -> Result<(Vec<ScoreRecord>, Vec<GateDecision>), GateError> {
    if trials.len() != scores.len() {
        return Err(GateError::LengthMismatch {
            expected: trials.len(),
            found: scores.len(),
        });
    }
    let phrase_of: HashMap<&str, usize> = models
        .iter()
        .map(|m| (m.model_id.as_str(), m.phrase_id))
        .collect();
    let posterior_of: HashMap<&str, &PhrasePosterior> =
        posteriors.iter().map(|p| (p.utt_id.as_str(), p)).collect();

    let mut gated = Vec::with_capacity(trials.len());
    let mut decisions = Vec::with_capacity(trials.len());
    let mut min_accepted = f64::INFINITY;
    for (i, (trial, record)) in trials.iter().zip(scores).enumerate() {
        if trial.model_id != record.model_id || trial.test_utt_id != record.test_utt_id {
            return Err(GateError::Misaligned { line: i + 1 });
        }
        let phrase = *phrase_of
            .get(trial.model_id.as_str())
            .ok_or_else(|| GateError::MissingModel {
                model_id: trial.model_id.clone(),
                line: i + 1,
            })?;
        let posterior = posterior_of
            .get(trial.test_utt_id.as_str())
            .ok_or_else(|| GateError::MissingPosterior {
                utt_id: trial.test_utt_id.clone(),
                line: i + 1,
            })?;
        let predicted = classify(posterior);
        let confident = match config.min_confidence {
            Some(threshold) => posterior.probs[predicted] >= threshold,
            None => true,
        };
        let accept = predicted == phrase && confident;
        let score = if accept {
            min_accepted = min_accepted.min(record.score);
            record.score
        } else {
            config.floor_score
        };
        gated.push(ScoreRecord {
            model_id: record.model_id.clone(),
            test_utt_id: record.test_utt_id.clone(),
            score,
        });
        decisions.push(GateDecision {
            trial_index: i,
            predicted_class: predicted,
            accept,
        });
    }
    if min_accepted.is_finite() && config.floor_score >= min_accepted {
        return Err(GateError::FloorNotBelowScores {
            floor: config.floor_score,
            min_accepted,
        });
    }
    Ok((gated, decisions))
}

/// Writes the decisions file: `model_id<TAB>test_utt_id<TAB>predicted<TAB>accept`.
pub fn write_decisions_to<W: std::io::Write>(
    writer: &mut W,
    trials: &[Trial],
    decisions: &[GateDecision],
) -> std::io::Result<()> {
    for d in decisions {
        let t = &trials[d.trial_index];
        writeln!(
            writer,
            "{}\t{}\t{}\t{}",
            t.model_id,
            t.test_utt_id,
            d.predicted_class,
            if d.accept { "accept" } else { "reject" }
        )?;
    }
    Ok(())
}
