//! Smoothness of teacher soft targets: entropy, its average over a data
//! set, entropy-matched temperatures, averaged soft-output profiles and
//! dominance counting.

use std::fmt::Write as _;

use crate::error::{LabError, Result};
use crate::nn::{logits, NetworkParams};
use crate::objectives::{tempered_softmax, SoftDistribution};
use crate::scalar::{argmax, compensated_sum, Scalar};
use crate::synth::LabeledDataset;

/// Shannon entropy in nats, with `0 · ln 0 = 0`.
pub fn entropy<S: Scalar>(dist: &SoftDistribution<S>) -> S {
    entropy_of(dist.probs())
}

fn entropy_of<S: Scalar>(probs: &[S]) -> S {
    let floor = S::from_f64(crate::objectives::PROB_FLOOR).unwrap_or_else(S::min_positive_value);
    compensated_sum(probs.iter().filter(|&&p| p > floor).map(|&p| -p * p.ln()))
}

/// Logits of every sample, computed once so several temperatures can reuse them.
pub fn dataset_logits<S: Scalar>(net: &NetworkParams<S>, data: &LabeledDataset<S>) -> Result<Vec<Vec<S>>> {
    data.inputs.iter_rows().map(|row| logits(net, row)).collect()
}

pub fn average_entropy_from_logits<S: Scalar>(all_logits: &[Vec<S>], temperature: S) -> Result<S> {
    if all_logits.is_empty() {
        return Err(LabError::Contract("no samples to average over".into()));
    }
    let per_sample = all_logits
        .iter()
        .map(|z| tempered_softmax(z, temperature).map(|d| entropy(&d)))
        .collect::<Result<Vec<S>>>()?;
    Ok(compensated_sum(per_sample) / S::from_usize_lossy(all_logits.len()))
}

/// Mean entropy of the teacher's tempered outputs over `data`.
pub fn average_entropy<S: Scalar>(teacher: &NetworkParams<S>, data: &LabeledDataset<S>, temperature: S) -> Result<S> {
    if data.is_empty() {
        return Err(LabError::Contract("dataset is empty".into()));
    }
    average_entropy_from_logits(&dataset_logits(teacher, data)?, temperature)
}

pub const ENTROPY_MATCH_TOLERANCE: f64 = 1e-6;
pub const ENTROPY_MATCH_MAX_ITERS: usize = 200;

/// Temperature at which the teacher's average entropy equals `target`,
/// found by bisection inside `bracket`.
pub fn entropy_matched_temperature<S: Scalar>(
    teacher: &NetworkParams<S>,
    data: &LabeledDataset<S>,
    target_entropy: S,
    bracket: (S, S),
) -> Result<S> {
    let all = dataset_logits(teacher, data)?;
    entropy_matched_temperature_from_logits(&all, target_entropy, bracket)
}

pub fn entropy_matched_temperature_from_logits<S: Scalar>(
    all_logits: &[Vec<S>],
    target: S,
    bracket: (S, S),
) -> Result<S> {
    let (mut lo, mut hi) = bracket;
    if !(lo > S::zero()) || !(hi > lo) {
        return Err(LabError::Domain(format!("invalid temperature bracket ({lo}, {hi})")));
    }
    let h_lo = average_entropy_from_logits(all_logits, lo)?;
    let h_hi = average_entropy_from_logits(all_logits, hi)?;
    if h_lo > h_hi {
        return Err(LabError::NonMonotone {
            t_low: lo.as_f64(),
            h_low: h_lo.as_f64(),
            t_high: hi.as_f64(),
            h_high: h_hi.as_f64(),
        });
    }
    let tol = S::lit(ENTROPY_MATCH_TOLERANCE);
    if target < h_lo - tol || target > h_hi + tol {
        return Err(LabError::Bracket {
            target: target.as_f64(),
            low: h_lo.as_f64(),
            high: h_hi.as_f64(),
        });
    }
    if (h_lo - target).abs() < tol {
        return Ok(lo);
    }
    if (h_hi - target).abs() < tol {
        return Ok(hi);
    }
    let two = S::lit(2.0);
    let mut mid = (lo + hi) / two;
    for _ in 0..ENTROPY_MATCH_MAX_ITERS {
        mid = (lo + hi) / two;
        let h = average_entropy_from_logits(all_logits, mid)?;
        // tolerance alone can stop early on flat stretches; keep halving
        // until the bracket is also tight
        if (h - target).abs() < tol && (hi - lo) < S::lit(1e-9) * mid.max(S::one()) {
            break;
        }
        if h < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= S::epsilon() * mid {
            break;
        }
    }
    Ok(mid)
}

/// Average tempered teacher output over the samples of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftOutputProfile<S> {
    pub class_of_interest: usize,
    pub mean_probs: Vec<S>,
    pub temperature: S,
}

impl<S: Scalar> SoftOutputProfile<S> {
    /// Most probable class other than the class of interest, with its probability.
    pub fn largest_incorrect(&self) -> (usize, S) {
        let mut best: Option<(usize, S)> = None;
        for (k, &p) in self.mean_probs.iter().enumerate() {
            if k == self.class_of_interest {
                continue;
            }
            if best.is_none_or(|(_, b)| p > b) {
                best = Some((k, p));
            }
        }
        best.unwrap_or((self.class_of_interest, S::zero()))
    }

    /// `p_{k*} − p_ml`.
    pub fn gap(&self) -> S {
        self.mean_probs[self.class_of_interest] - self.largest_incorrect().1
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.mean_probs)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("class_index,mean_prob\n");
        for (k, p) in self.mean_probs.iter().enumerate() {
            let _ = writeln!(out, "{k},{p}");
        }
        out
    }
}

pub fn soft_output_profile<S: Scalar>(
    teacher: &NetworkParams<S>,
    data: &LabeledDataset<S>,
    k_star: usize,
    temperature: S,
) -> Result<SoftOutputProfile<S>> {
    if k_star >= data.num_classes {
        return Err(LabError::Index {
            index: k_star,
            classes: data.num_classes,
        });
    }
    let rows = data.indices_of(k_star);
    if rows.is_empty() {
        return Err(LabError::EmptyClass(k_star));
    }
    let k = teacher.num_classes();
    let mut columns: Vec<Vec<S>> = vec![Vec::with_capacity(rows.len()); k];
    for &i in &rows {
        let dist = tempered_softmax(&logits(teacher, data.inputs.row(i))?, temperature)?;
        for (col, &p) in columns.iter_mut().zip(dist.probs()) {
            col.push(p);
        }
    }
    let n = S::from_usize_lossy(rows.len());
    Ok(SoftOutputProfile {
        class_of_interest: k_star,
        mean_probs: columns.into_iter().map(|c| compensated_sum(c) / n).collect(),
        temperature,
    })
}

/// Number of incorrect classes `m` (other than the largest incorrect class
/// itself) with `p_ml ≥ factor · p_m`.
pub fn dominance_count<S: Scalar>(profile: &SoftOutputProfile<S>, factor: S) -> Result<usize> {
    if profile.mean_probs.len() < 3 {
        return Err(LabError::Contract(format!(
            "dominance needs at least 3 classes, got {}",
            profile.mean_probs.len()
        )));
    }
    if !(factor > S::zero()) {
        return Err(LabError::Domain(format!("factor must be positive, got {factor}")));
    }
    let (ml, p2) = profile.largest_incorrect();
    Ok(profile
        .mean_probs
        .iter()
        .enumerate()
        .filter(|&(m, &p)| m != profile.class_of_interest && m != ml && p2 >= factor * p)
        .count())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessRow {
    pub temperature: f64,
    pub alpha: f64,
    pub average_entropy: f64,
}

pub fn write_smoothness_csv(rows: &[SmoothnessRow]) -> String {
    let mut out = String::from("temperature,alpha,average_entropy\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.temperature, r.alpha, r.average_entropy);
    }
    out
}
