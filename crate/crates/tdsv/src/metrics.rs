//! DET operating points, EER and the normalized minimum detection cost.
//!
//! The curve sweeps a threshold over every distinct score plus the two
//! infinite boundary points; a trial is accepted iff its score is greater
//! than or equal to the threshold. Both summary metrics are invariant
//! under any strictly increasing transform of the scores.

use crate::data::{ScoreRecord, Trial, TrialLabel};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("trial line {line} is unlabeled; evaluation needs labels")]
    Unlabeled { line: usize },
    #[error("scores have {found} records, trials have {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("line {line}: score record does not match the trial list")]
    Misaligned { line: usize },
    #[error("no target trials after label mapping")]
    NoTargets,
    #[error("no non-target trials after label mapping")]
    NoNontargets,
    #[error("invalid metric config: {reason}")]
    InvalidConfig { reason: String },
    #[error("score for trial line {line} is not finite")]
    NonFiniteScore { line: usize },
}

/// Detection cost parameters. Defaults: a 1% target prior with misses ten
/// times as costly as false alarms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricConfig {
    pub p_target: f64,
    pub c_miss: f64,
    pub c_fa: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            p_target: 0.01,
            c_miss: 10.0,
            c_fa: 1.0,
        }
    }
}

impl MetricConfig {
    fn validate(&self) -> Result<(), MetricsError> {
        if !(self.p_target > 0.0 && self.p_target < 1.0) {
            return Err(MetricsError::InvalidConfig {
                reason: format!("p_target must be in (0, 1), got {}", self.p_target),
            });
        }
        if !(self.c_miss > 0.0 && self.c_fa > 0.0) {
            return Err(MetricsError::InvalidConfig {
                reason: "costs must be positive".to_string(),
            });
        }
        Ok(())
    }

    /// Cost of the best trivial (accept-all or reject-all) system.
    pub fn normalizer(&self) -> f64 {
        (self.c_miss * self.p_target).min(self.c_fa * (1.0 - self.p_target))
    }
}

/// One operating point of the DET curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint {
    pub threshold: f64,
    pub p_miss: f64,
    pub p_fa: f64,
}

/// Which trials enter the evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrialSubset {
    /// TC targets against every non-target kind.
    #[default]
    All,
    /// TC targets against TW non-targets only.
    TcVsTw,
}

/// EER extraction convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EerMethod {
    /// Linear interpolation where `p_miss - p_fa` changes sign.
    #[default]
    Interpolated,
    /// Discrete alternative: `max_t min(p_miss, p_fa)`.
    Discrete,
}

/// Summary of one evaluation.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub eer: f64,
    pub min_dcf: f64,
    pub n_target: usize,
    pub n_nontarget: usize,
    pub det: Vec<DetPoint>,
}

/// Splits aligned scores into target and non-target lists: TC is the target
/// class; TW, IC and IW are non-targets. `TcVsTw` keeps only TW non-targets.
pub fn map_labels(
    trials: &[Trial],
    scores: &[ScoreRecord],
    subset: TrialSubset,
) -> Result<(Vec<f64>, Vec<f64>), MetricsError> {
    if trials.len() != scores.len() {
        return Err(MetricsError::LengthMismatch {
            expected: trials.len(),
            found: scores.len(),
        });
    }
    let mut targets = Vec::new();
    let mut nontargets = Vec::new();
    for (i, (trial, record)) in trials.iter().zip(scores).enumerate() {
        if trial.model_id != record.model_id || trial.test_utt_id != record.test_utt_id {
            return Err(MetricsError::Misaligned { line: i + 1 });
        }
        if !record.score.is_finite() {
            return Err(MetricsError::NonFiniteScore { line: i + 1 });
        }
        let label = trial.label.ok_or(MetricsError::Unlabeled { line: i + 1 })?;
        match (subset, label) {
            (_, TrialLabel::Tc) => targets.push(record.score),
            (TrialSubset::All, _) => nontargets.push(record.score),
            (TrialSubset::TcVsTw, TrialLabel::Tw) => nontargets.push(record.score),
            (TrialSubset::TcVsTw, _) => {}
        }
    }
    if targets.is_empty() {
        return Err(MetricsError::NoTargets);
    }
    if nontargets.is_empty() {
        return Err(MetricsError::NoNontargets);
    }
    Ok((targets, nontargets))
}

/// DET curve over thresholds at every distinct score plus the infinities.
///
/// `p_miss(t)` is the fraction of targets below `t`; `p_fa(t)` the fraction
/// of non-targets at or above `t` (ties accept). Points come back in
/// ascending threshold order, so `p_miss` is non-decreasing and `p_fa`
/// non-increasing along the curve.
pub fn det_curve(targets: &[f64], nontargets: &[f64]) -> Result<Vec<DetPoint>, MetricsError> {
    if targets.is_empty() {
        return Err(MetricsError::NoTargets);
    }
    if nontargets.is_empty() {
        return Err(MetricsError::NoNontargets);
    }
    let mut sorted_targets = targets.to_vec();
    let mut sorted_nontargets = nontargets.to_vec();
    sorted_targets.sort_by(f64::total_cmp);
    sorted_nontargets.sort_by(f64::total_cmp);

    let mut thresholds = Vec::with_capacity(targets.len() + nontargets.len() + 2);
    thresholds.push(f64::NEG_INFINITY);
    let mut merged: Vec<f64> = sorted_targets
        .iter()
        .chain(sorted_nontargets.iter())
        .cloned()
        .collect();
    merged.sort_by(f64::total_cmp);
    merged.dedup();
    thresholds.extend(merged);
    thresholds.push(f64::INFINITY);

    let n_t = sorted_targets.len() as f64;
    let n_n = sorted_nontargets.len() as f64;
    let points = thresholds
        .into_iter()
        .map(|threshold| {
            let missed = sorted_targets.partition_point(|&s| s < threshold);
            let rejected = sorted_nontargets.partition_point(|&s| s < threshold);
            DetPoint {
                threshold,
                p_miss: missed as f64 / n_t,
                p_fa: (sorted_nontargets.len() - rejected) as f64 / n_n,
            }
        })
        .collect();
    Ok(points)
}

/// EER via linear interpolation at the sign change of `p_miss - p_fa`.
pub fn eer(det: &[DetPoint]) -> f64 {
    eer_with_method(det, EerMethod::Interpolated)
}

pub fn eer_with_method(det: &[DetPoint], method: EerMethod) -> f64 {
    match method {
        EerMethod::Interpolated => {
            // diff is monotone non-decreasing: -1 at -inf, +1 at +inf.
            let mut prev = det[0];
            for &point in det {
                let diff = point.p_miss - point.p_fa;
                if diff >= 0.0 {
                    if diff == 0.0 {
                        return point.p_miss;
                    }
                    let prev_diff = prev.p_miss - prev.p_fa;
                    if prev_diff >= 0.0 {
                        return point.p_miss.min(prev.p_miss);
                    }
                    let t = -prev_diff / (diff - prev_diff);
                    return prev.p_miss + t * (point.p_miss - prev.p_miss);
                }
                prev = point;
            }
            // Unreachable for curves with both boundary points.
            prev.p_miss
        }
        EerMethod::Discrete => det
            .iter()
            .map(|p| p.p_miss.min(p.p_fa))
            .fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Normalized minimum detection cost over the curve's operating points.
pub fn min_dcf(det: &[DetPoint], config: &MetricConfig) -> f64 {
    let normalizer = config.normalizer();
    det.iter()
        .map(|p| {
            (config.c_miss * p.p_miss * config.p_target
                + config.c_fa * p.p_fa * (1.0 - config.p_target))
                / normalizer
        })
        .fold(f64::INFINITY, f64::min)
}

/// Builds the curve once and reports EER, MinDCF and class counts.
pub fn evaluate(
    targets: &[f64],
    nontargets: &[f64],
    config: &MetricConfig,
) -> Result<EvalReport, MetricsError> {
    config.validate()?;
    let det = det_curve(targets, nontargets)?;
    Ok(EvalReport {
        eer: eer(&det),
        min_dcf: min_dcf(&det, config),
        n_target: targets.len(),
        n_nontarget: nontargets.len(),
        det,
    })
}

/// DET points as TSV: `threshold<TAB>p_miss<TAB>p_fa`.
pub fn write_det_to<W: std::io::Write>(writer: &mut W, det: &[DetPoint]) -> std::io::Result<()> {
    for p in det {
        writeln!(writer, "{}\t{:.6}\t{:.6}", p.threshold, p.p_miss, p.p_fa)?;
    }
    Ok(())
}
