//! Reference numerics for the margin-softmax training losses.
//!
//! The loss is additive-angular-margin softmax over subcenter cosines with
//! an optional penalty that tightens the hardest non-target classes. The
//! analytic input gradient is exposed so it can be checked against central
//! finite differences.
//!
//! Margin composition follows the usual angle-addition form
//! `cos(th + m) = cos th * cos m - sin th * sin m`, with the easy-margin
//! fallback `cos th - m * sin m` once `th + m` passes pi. The non-target
//! penalty subtracts the angle: `cos(max(th - m', 0))`, which clips to 1
//! when the class is already within `m'` of the input.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("input embedding has (near-)zero norm")]
    ZeroNormInput,
    #[error("prototype for class {class}, subcenter {subcenter} has (near-)zero norm")]
    ZeroNormPrototype { class: usize, subcenter: usize },
    #[error("label {label} out of range for {classes} classes")]
    BadLabel { label: usize, classes: usize },
    #[error("weight tensor size {found} does not match {classes}x{subcenters}x{dim}")]
    BadShape {
        classes: usize,
        subcenters: usize,
        dim: usize,
        found: usize,
    },
    #[error("embedding dim {found} does not match prototype dim {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("invalid config: {reason}")]
    InvalidConfig { reason: String },
}

/// Loss hyper-parameters. Scale/margin defaults are the usual production
/// values; `top_k`/`penalty_margin` control the hard-negative penalty and
/// reduce the loss to plain subcenter AAM-Softmax when either is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub scale: f64,
    pub margin: f64,
    pub subcenters: usize,
    pub top_k: usize,
    pub penalty_margin: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            scale: 32.0,
            margin: 0.2,
            subcenters: 2,
            top_k: 5,
            penalty_margin: 0.06,
        }
    }
}

impl LossConfig {
    fn validate(&self, classes: usize) -> Result<(), LossError> {
        let fail = |reason: String| Err(LossError::InvalidConfig { reason });
        if !self.scale.is_finite() || self.scale <= 0.0 {
            return fail(format!("scale must be positive, got {}", self.scale));
        }
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&self.margin) {
            return fail(format!("margin must be in [0, pi/2), got {}", self.margin));
        }
        if self.subcenters == 0 {
            return fail("subcenters must be >= 1".to_string());
        }
        if self.top_k >= classes {
            return fail(format!(
                "top_k ({}) must be smaller than the class count ({classes})",
                self.top_k
            ));
        }
        if !(self.penalty_margin >= 0.0 && self.penalty_margin < std::f64::consts::FRAC_PI_2) {
            return fail(format!(
                "penalty_margin must be in [0, pi/2), got {}",
                self.penalty_margin
            ));
        }
        Ok(())
    }
}

/// C x K x F tensor of class/subcenter prototypes, unit-normalized on
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    classes: usize,
    subcenters: usize,
    dim: usize,
    data: Vec<f64>,
}

const NORM_EPS: f64 = 1e-12;

impl ClassWeights {
    pub fn new(
        classes: usize,
        subcenters: usize,
        dim: usize,
        data: Vec<f64>,
    ) -> Result<Self, LossError> {
        if data.len() != classes * subcenters * dim || classes == 0 || subcenters == 0 || dim == 0 {
            return Err(LossError::BadShape {
                classes,
                subcenters,
                dim,
                found: data.len(),
            });
        }
        let mut w = ClassWeights {
            classes,
            subcenters,
            dim,
            data,
        };
        for j in 0..classes {
            for k in 0..subcenters {
                let start = (j * subcenters + k) * dim;
                let norm = w.data[start..start + dim]
                    .iter()
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt();
                if norm < NORM_EPS {
                    return Err(LossError::ZeroNormPrototype {
                        class: j,
                        subcenter: k,
                    });
                }
                for v in &mut w.data[start..start + dim] {
                    *v /= norm;
                }
            }
        }
        Ok(w)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn subcenters(&self) -> usize {
        self.subcenters
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn prototype(&self, class: usize, subcenter: usize) -> &[f64] {
        let start = (class * self.subcenters + subcenter) * self.dim;
        &self.data[start..start + self.dim]
    }
}

fn normalize_input(x: &[f64], dim: usize) -> Result<(Vec<f64>, f64), LossError> {
    if x.len() != dim {
        return Err(LossError::DimMismatch {
            expected: dim,
            found: x.len(),
        });
    }
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < NORM_EPS {
        return Err(LossError::ZeroNormInput);
    }
    Ok((x.iter().map(|v| v / norm).collect(), norm))
}

fn cosines_with_argmax(
    unit_x: &[f64],
    weights: &ClassWeights,
) -> Vec<(f64, usize)> {
    (0..weights.classes)
        .map(|j| {
            let mut best = (f64::NEG_INFINITY, 0);
            for k in 0..weights.subcenters {
                let c: f64 = unit_x
                    .iter()
                    .zip(weights.prototype(j, k))
                    .map(|(a, b)| a * b)
                    .sum();
                if c > best.0 {
                    best = (c, k);
                }
            }
            best
        })
        .collect()
}

/// Per-class cosine: the maximum cosine over that class's subcenters, with
/// the input and every prototype L2-normalized.
pub fn subcenter_cosines(x: &[f64], weights: &ClassWeights) -> Result<Vec<f64>, LossError> {
    let (unit_x, _) = normalize_input(x, weights.dim)?;
    Ok(cosines_with_argmax(&unit_x, weights)
        .into_iter()
        .map(|(c, _)| c)
        .collect())
}

/// Loss value, input gradient and the (scaled) logits for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct AamOutput {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub logits: Vec<f64>,
}

// Clamp for derivative terms near |cos| = 1 where sin -> 0.
fn sin_from_cos(c: f64) -> f64 {
    (1.0 - c * c).max(1e-24).sqrt()
}

/// Target map `cos th -> cos(th + m)` and its derivative in `cos th`.
fn target_margin(c: f64, m: f64) -> (f64, f64) {
    if m == 0.0 {
        return (c, 1.0);
    }
    let (sin_m, cos_m) = m.sin_cos();
    let threshold = -cos_m; // cos(pi - m)
    if c >= threshold {
        let s = sin_from_cos(c);
        (c * cos_m - s * sin_m, cos_m + (c / s) * sin_m)
    } else {
        // th + m > pi: fall back to the monotone linear extension.
        (c - m * sin_m, 1.0)
    }
}

/// Penalty map `cos th -> cos(max(th - m', 0))` and its derivative.
fn penalty_margin(c: f64, m: f64) -> (f64, f64) {
    if m == 0.0 {
        return (c, 1.0);
    }
    let (sin_m, cos_m) = m.sin_cos();
    if c <= cos_m {
        let s = sin_from_cos(c);
        (c * cos_m + s * sin_m, cos_m - (c / s) * sin_m)
    } else {
        // Already within m' of the input: clip at cos(0).
        (1.0, 0.0)
    }
}

/// AAM-Softmax with subcenters and the hard-negative top-K penalty.
///
/// Returns the cross-entropy loss over the margined logits together with
/// the analytic gradient with respect to `x`.
pub fn aam_softmax(
    x: &[f64],
    weights: &ClassWeights,
    label: usize,
    config: &LossConfig,
) -> Result<AamOutput, LossError> {
    config.validate(weights.classes)?;
    if config.subcenters != weights.subcenters {
        return Err(LossError::InvalidConfig {
            reason: format!(
                "config declares {} subcenters, weights have {}",
                config.subcenters, weights.subcenters
            ),
        });
    }
    if label >= weights.classes {
        return Err(LossError::BadLabel {
            label,
            classes: weights.classes,
        });
    }
    let (unit_x, norm) = normalize_input(x, weights.dim)?;
    let cosines = cosines_with_argmax(&unit_x, weights);

    // Hard negatives: the top_k non-target classes by cosine, ties toward
    // the lower class index.
    let mut penalized = vec![false; weights.classes];
    if config.top_k > 0 && config.penalty_margin > 0.0 {
        let mut order: Vec<usize> = (0..weights.classes).filter(|&j| j != label).collect();
        order.sort_by(|&a, &b| cosines[b].0.total_cmp(&cosines[a].0).then(a.cmp(&b)));
        for &j in order.iter().take(config.top_k) {
            penalized[j] = true;
        }
    }

    let mut logits = Vec::with_capacity(weights.classes);
    let mut dlogit_dcos = Vec::with_capacity(weights.classes);
    for (j, &(c, _)) in cosines.iter().enumerate() {
        let (mapped, deriv) = if j == label {
            target_margin(c, config.margin)
        } else if penalized[j] {
            penalty_margin(c, config.penalty_margin)
        } else {
            (c, 1.0)
        };
        logits.push(config.scale * mapped);
        dlogit_dcos.push(config.scale * deriv);
    }

    // Stable softmax cross-entropy.
    let max_logit = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp_sum: f64 = logits.iter().map(|z| (z - max_logit).exp()).sum();
    let loss = max_logit + exp_sum.ln() - logits[label];

    // dL/dz_j = p_j - [j == label]; chain through the margin map and the
    // normalized cosine. Subcenter max routes the gradient to the argmax
    // prototype of each class.
    let mut grad = vec![0.0; weights.dim];
    for (j, &(c, k)) in cosines.iter().enumerate() {
        let p = (logits[j] - max_logit).exp() / exp_sum;
        let dz = p - if j == label { 1.0 } else { 0.0 };
        let coeff = dz * dlogit_dcos[j] / norm;
        if coeff == 0.0 {
            continue;
        }
        let w = weights.prototype(j, k);
        for ((g, &wv), &xv) in grad.iter_mut().zip(w).zip(&unit_x) {
            *g += coeff * (wv - c * xv);
        }
    }

    Ok(AamOutput { loss, grad, logits })
}

/// Result of a finite-difference gradient audit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdCheckReport {
    pub instances: usize,
    pub max_rel_error: f64,
}

/// Draws random loss instances (subcenters and the top-K penalty active)
/// and compares the analytic input gradient against central finite
/// differences of the loss value. Instances are resampled away from the
/// piecewise boundaries of the margin maps so the difference window stays
/// inside one smooth branch.
pub fn finite_difference_check(instances: usize, seed: u64, step: f64) -> FdCheckReport {
    use crate::synth::rng::KeyedRng;
    let mut rng = KeyedRng::new(seed, "loss-fd-check");
    let mut max_rel: f64 = 0.0;
    for _ in 0..instances {
        let (x, weights, label, config) = loop {
            let classes = 3 + rng.next_range(4) as usize;
            let dim = 4 + rng.next_range(7) as usize;
            let subcenters = 2 + rng.next_range(2) as usize;
            let top_k = 1 + rng.next_range((classes - 2) as u64) as usize;
            let data: Vec<f64> = (0..classes * subcenters * dim)
                .map(|_| rng.next_gaussian())
                .collect();
            let weights = ClassWeights::new(classes, subcenters, dim, data)
                .expect("gaussian prototypes are nonzero");
            let x: Vec<f64> = (0..dim).map(|_| rng.next_gaussian() * 2.0).collect();
            let label = rng.next_range(classes as u64) as usize;
            let config = LossConfig {
                scale: 32.0,
                margin: 0.2,
                subcenters,
                top_k,
                penalty_margin: 0.06,
            };
            if instance_is_smooth(&x, &weights) {
                break (x, weights, label, config);
            }
        };
        let analytic = aam_softmax(&x, &weights, label, &config)
            .expect("sampled instance is valid")
            .grad;
        let mut fd = vec![0.0; x.len()];
        for i in 0..x.len() {
            let mut plus = x.clone();
            plus[i] += step;
            let mut minus = x.clone();
            minus[i] -= step;
            let lp = aam_softmax(&plus, &weights, label, &config).unwrap().loss;
            let lm = aam_softmax(&minus, &weights, label, &config).unwrap().loss;
            fd[i] = (lp - lm) / (2.0 * step);
        }
        let norm = |v: &[f64]| v.iter().map(|g| g * g).sum::<f64>().sqrt();
        let diff: f64 = analytic
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let rel = diff / norm(&analytic).max(norm(&fd)).max(1e-12);
        max_rel = max_rel.max(rel);
    }
    FdCheckReport {
        instances,
        max_rel_error: max_rel,
    }
}

fn instance_is_smooth(x: &[f64], weights: &ClassWeights) -> bool {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-6 {
        return false;
    }
    let unit: Vec<f64> = x.iter().map(|v| v / norm).collect();
    let mut per_class = Vec::with_capacity(weights.classes);
    for j in 0..weights.classes {
        let mut subs: Vec<f64> = (0..weights.subcenters)
            .map(|k| {
                unit.iter()
                    .zip(weights.prototype(j, k))
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        subs.sort_by(f64::total_cmp);
        let best = subs[weights.subcenters - 1];
        if weights.subcenters > 1 && best - subs[weights.subcenters - 2] < 1e-2 {
            return false;
        }
        if best.abs() > 0.98 {
            return false;
        }
        per_class.push(best);
    }
    per_class.sort_by(f64::total_cmp);
    per_class.windows(2).all(|w| w[1] - w[0] >= 1e-2)
}
