//! Label-smoothed targets, temperature-scaled softmax and the distillation
//! objective with its T² gradient compensation.

use crate::error::{LabError, Result};
use crate::nn::Objective;
use crate::scalar::Scalar;

/// Probabilities are clamped here before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingConfig {
    pub alpha: f64,
    pub num_classes: usize,
}

impl SmoothingConfig {
    pub fn new(alpha: f64, num_classes: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(LabError::Domain(format!("alpha must lie in [0, 1), got {alpha}")));
        }
        if num_classes == 0 {
            return Err(LabError::Domain("need at least one class".into()));
        }
        Ok(Self { alpha, num_classes })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistillConfig {
    pub temperature: f64,
    /// Weight of the soft term; `1 - beta` weighs the hard-label term.
    pub beta: f64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            beta: 1.0,
        }
    }
}

impl DistillConfig {
    pub fn new(temperature: f64, beta: f64) -> Result<Self> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(LabError::Domain(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(LabError::Domain(format!("beta must lie in [0, 1], got {beta}")));
        }
        Ok(Self { temperature, beta })
    }
}

/// A probability vector tagged with the temperature it was produced at.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftDistribution<S> {
    probs: Vec<S>,
    temperature: S,
}

impl<S: Scalar> SoftDistribution<S> {
    pub fn new(probs: Vec<S>, temperature: S) -> Result<Self> {
        if !(temperature > S::zero()) {
            return Err(LabError::Domain(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        if probs.is_empty() {
            return Err(LabError::Domain("empty distribution".into()));
        }
        if probs.iter().any(|&p| !(p >= S::zero())) {
            return Err(LabError::Domain("probabilities must be nonnegative".into()));
        }
        let total: S = probs.iter().copied().sum();
        if (total - S::one()).abs() > S::sum_tolerance(probs.len()) {
            return Err(LabError::Domain(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { probs, temperature })
    }

    pub fn probs(&self) -> &[S] {
        &self.probs
    }

    pub fn temperature(&self) -> S {
        self.temperature
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    pub fn uniform(k: usize) -> Self {
        Self {
            probs: vec![S::one() / S::from_usize_lossy(k); k],
            temperature: S::one(),
        }
    }

    pub fn into_probs(self) -> Vec<S> {
        self.probs
    }
}

pub fn one_hot<S: Scalar>(label: usize, num_classes: usize) -> Result<SoftDistribution<S>> {
    ls_targets(
        label,
        &SmoothingConfig {
            alpha: 0.0,
            num_classes,
        },
    )
}

/// `(1 - α)` on the true class plus `α / K` everywhere.
pub fn ls_targets<S: Scalar>(label: usize, cfg: &SmoothingConfig) -> Result<SoftDistribution<S>> {
    let k = cfg.num_classes;
    if label >= k {
        return Err(LabError::Index {
            index: label,
            classes: k,
        });
    }
    let alpha = S::lit(cfg.alpha);
    let off = alpha / S::from_usize_lossy(k);
    let mut probs = vec![off; k];
    probs[label] = (S::one() - alpha) + off;
    Ok(SoftDistribution {
        probs,
        temperature: S::one(),
    })
}

/// `softmax(logits / T)` with max subtraction.
pub fn tempered_softmax<S: Scalar>(logits: &[S], temperature: S) -> Result<SoftDistribution<S>> {
    if !(temperature > S::zero()) || !temperature.is_finite() {
        return Err(LabError::Domain(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if logits.is_empty() {
        return Err(LabError::Domain("empty logit vector".into()));
    }
    let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
    let exps: Vec<S> = logits.iter().map(|&z| ((z - max) / temperature).exp()).collect();
    let total: S = exps.iter().copied().sum();
    Ok(SoftDistribution {
        probs: exps.into_iter().map(|e| e / total).collect(),
        temperature,
    })
}

/// `H(target, pred) = -Σ target_k ln pred_k`, with `pred` clamped at [`PROB_FLOOR`].
pub fn cross_entropy<S: Scalar>(target: &SoftDistribution<S>, pred: &SoftDistribution<S>) -> Result<S> {
    cross_entropy_slices(target.probs(), pred.probs())
}

fn cross_entropy_slices<S: Scalar>(target: &[S], pred: &[S]) -> Result<S> {
    if target.len() != pred.len() {
        return Err(LabError::Shape(format!(
            "target has {} classes, prediction has {}",
            target.len(),
            pred.len()
        )));
    }
    let floor = S::from_f64(PROB_FLOOR)
        .unwrap_or_else(S::min_positive_value)
        .max(S::min_positive_value());
    Ok(target
        .iter()
        .zip(pred)
        .filter(|(&t, _)| t != S::zero())
        .fold(S::zero(), |acc, (&t, &p)| acc - t * p.max(floor).ln()))
}

fn check_teacher<S: Scalar>(
    student_logits: &[S],
    teacher: &SoftDistribution<S>,
    hard_label: usize,
    cfg: &DistillConfig,
) -> Result<()> {
    let tt = teacher.temperature().as_f64();
    if (tt - cfg.temperature).abs() > 1e-12 * cfg.temperature.max(1.0) {
        return Err(LabError::TemperatureMismatch {
            teacher: tt,
            config: cfg.temperature,
        });
    }
    if teacher.num_classes() != student_logits.len() {
        return Err(LabError::Shape(format!(
            "teacher has {} classes, student has {}",
            teacher.num_classes(),
            student_logits.len()
        )));
    }
    if hard_label >= student_logits.len() {
        return Err(LabError::Index {
            index: hard_label,
            classes: student_logits.len(),
        });
    }
    Ok(())
}

/// `(1 - β) H(y, p) + β T² H(p^t(T), p(T))`.
pub fn kd_loss<S: Scalar>(
    student_logits: &[S],
    teacher: &SoftDistribution<S>,
    hard_label: usize,
    cfg: &DistillConfig,
) -> Result<S> {
    check_teacher(student_logits, teacher, hard_label, cfg)?;
    let t = S::lit(cfg.temperature);
    let beta = S::lit(cfg.beta);
    let mut loss = S::zero();
    if cfg.beta > 0.0 {
        let soft = tempered_softmax(student_logits, t)?;
        loss = loss + beta * t * t * cross_entropy(teacher, &soft)?;
    }
    if cfg.beta < 1.0 {
        let hard = tempered_softmax(student_logits, S::one())?;
        let y = one_hot(hard_label, student_logits.len())?;
        loss = loss + (S::one() - beta) * cross_entropy(&y, &hard)?;
    }
    Ok(loss)
}

/// Analytic `∂ kd_loss / ∂ logits`: `β T (p(T) - p^t(T)) + (1 - β)(p - y)`.
pub fn kd_loss_grad<S: Scalar>(
    student_logits: &[S],
    teacher: &SoftDistribution<S>,
    hard_label: usize,
    cfg: &DistillConfig,
) -> Result<Vec<S>> {
    check_teacher(student_logits, teacher, hard_label, cfg)?;
    let t = S::lit(cfg.temperature);
    let beta = S::lit(cfg.beta);
    let mut grad = vec![S::zero(); student_logits.len()];
    if cfg.beta > 0.0 {
        let soft = tempered_softmax(student_logits, t)?;
        for ((g, &p), &q) in grad.iter_mut().zip(soft.probs()).zip(teacher.probs()) {
            *g = *g + beta * t * (p - q);
        }
    }
    if cfg.beta < 1.0 {
        let hard = tempered_softmax(student_logits, S::one())?;
        for (k, (g, &p)) in grad.iter_mut().zip(hard.probs()).enumerate() {
            let y = if k == hard_label { S::one() } else { S::zero() };
            *g = *g + (S::one() - beta) * (p - y);
        }
    }
    Ok(grad)
}

/// Cross entropy against label-smoothed targets; `α = 0` is plain cross entropy.
#[derive(Debug, Clone, Copy)]
pub struct SmoothedCrossEntropy {
    pub cfg: SmoothingConfig,
}

impl<S: Scalar> Objective<S> for SmoothedCrossEntropy {
    fn loss_and_grad(&self, _sample: usize, label: usize, logits: &[S]) -> Result<(S, Vec<S>)> {
        if logits.len() != self.cfg.num_classes {
            return Err(LabError::Shape(format!(
                "{} logits for {} classes",
                logits.len(),
                self.cfg.num_classes
            )));
        }
        let y = ls_targets::<S>(label, &self.cfg)?;
        let p = tempered_softmax(logits, S::one())?;
        let loss = cross_entropy(&y, &p)?;
        let grad = p.probs().iter().zip(y.probs()).map(|(&pk, &yk)| pk - yk).collect();
        Ok((loss, grad))
    }
}

/// Distillation against teacher distributions precomputed per training sample.
#[derive(Debug, Clone)]
pub struct Distillation<'a, S> {
    pub teacher: &'a [SoftDistribution<S>],
    pub cfg: DistillConfig,
}

impl<S: Scalar> Objective<S> for Distillation<'_, S> {
    fn loss_and_grad(&self, sample: usize, label: usize, logits: &[S]) -> Result<(S, Vec<S>)> {
        let teacher = self.teacher.get(sample).ok_or(LabError::Index {
            index: sample,
            classes: self.teacher.len(),
        })?;
        Ok((
            kd_loss(logits, teacher, label, &self.cfg)?,
            kd_loss_grad(logits, teacher, label, &self.cfg)?,
        ))
    }
}
