//! Relative centroid distances and the diffusion index.
//!
//! For a target class π and its comparison classes `S1 ∪ S2`,
//! `d(π, k) = ‖c_π − c_k‖² / R` with `R` the sum of those squared
//! distances over `S1 ∪ S2`. The diffusion index over a set `S` is the mean
//! fractional change of `d` between two temperatures:
//! `η = mean_{k∈S} (d_T2(π, k) − d_T1(π, k)) / d_T1(π, k)`.
//!
//! The pairwise variant swaps the centroid distance for the mean squared
//! distance over all cross-class sample pairs.

use std::fmt::{self, Write as _};

use super::{centroids, ClassCentroids, FeatureMatrix, SemanticSets, Split};
use crate::error::{LabError, Result};
use crate::scalar::{squared_distance, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetChoice {
    /// `S1`, the semantically similar classes.
    Similar,
    /// `S2`, the semantically dissimilar classes.
    Dissimilar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DistanceVariant {
    Centroid,
    Pairwise,
}

impl DistanceVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            DistanceVariant::Centroid => "centroid",
            DistanceVariant::Pairwise => "pairwise",
        }
    }
}

impl fmt::Display for DistanceVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Class mean plus mean squared distance of its samples to that mean.
struct ClassStats<S> {
    cents: ClassCentroids<S>,
    spread: Vec<S>,
}

impl<S: Scalar> ClassStats<S> {
    fn of(features: &FeatureMatrix<S>) -> Result<Self> {
        let cents = centroids(features, features.num_classes)?;
        let mut spread = vec![S::zero(); features.num_classes];
        for (row, &l) in features.rows.iter_rows().zip(&features.labels) {
            spread[l] = spread[l] + squared_distance(row, cents.centroids.row(l));
        }
        for (s, &c) in spread.iter_mut().zip(&cents.counts) {
            if c > 0 {
                *s = *s / S::from_usize_lossy(c);
            }
        }
        Ok(Self { cents, spread })
    }

    /// Mean over `i ∈ a, j ∈ b` of `‖x_i − x_j‖²`, which expands to
    /// `‖μ_a − μ_b‖² + spread_a + spread_b`.
    fn mean_pair_sq(&self, a: usize, b: usize) -> Result<S> {
        let sq = squared_distance(self.cents.centroid(a)?, self.cents.centroid(b)?);
        Ok(sq + self.spread[a] + self.spread[b])
    }
}

fn check_target(pi: usize, sets: &SemanticSets) -> Result<()> {
    if pi != sets.target() {
        return Err(LabError::Contract(format!(
            "target class {pi} does not match semantic sets built for {}",
            sets.target()
        )));
    }
    Ok(())
}

/// Relative distance of every `k ∈ S1 ∪ S2` given squared distances `sq(k)`.
fn relative_all<S: Scalar>(sets: &SemanticSets, sq: impl Fn(usize) -> Result<S>) -> Result<Vec<(usize, S)>> {
    let raw: Vec<(usize, S)> = sets
        .all_compared()
        .map(|k| sq(k).map(|d| (k, d)))
        .collect::<Result<_>>()?;
    let r: S = raw.iter().map(|&(_, d)| d).sum();
    if !(r > S::zero()) || !r.is_finite() {
        return Err(LabError::DegenerateGeometry(format!(
            "normalization constant R = {r} for target {}",
            sets.target()
        )));
    }
    Ok(raw.into_iter().map(|(k, d)| (k, d / r)).collect())
}

fn lookup<S: Scalar>(rel: &[(usize, S)], k: usize, sets: &SemanticSets) -> Result<S> {
    rel.iter()
        .find(|&&(c, _)| c == k)
        .map(|&(_, d)| d)
        .ok_or_else(|| LabError::Contract(format!("class {k} is in neither S1 nor S2 of target {}", sets.target())))
}

pub fn relative_distance<S: Scalar>(cents: &ClassCentroids<S>, pi: usize, k: usize, sets: &SemanticSets) -> Result<S> {
    check_target(pi, sets)?;
    if !sets.contains(k) {
        return Err(LabError::Contract(format!(
            "class {k} is in neither S1 nor S2 of target {pi}"
        )));
    }
    let c_pi = cents.centroid(pi)?;
    let rel = relative_all(sets, |c| Ok(squared_distance(c_pi, cents.centroid(c)?)))?;
    lookup(&rel, k, sets)
}

/// Relative distance using mean cross-class pairwise squared distances.
pub fn relative_distance_pairwise<S: Scalar>(
    features: &FeatureMatrix<S>,
    pi: usize,
    k: usize,
    sets: &SemanticSets,
) -> Result<S> {
    check_target(pi, sets)?;
    let stats = ClassStats::of(features)?;
    let rel = relative_all(sets, |c| stats.mean_pair_sq(pi, c))?;
    lookup(&rel, k, sets)
}

fn eta_from<S: Scalar>(before: &[(usize, S)], after: &[(usize, S)], members: &[usize], target: usize) -> Result<S> {
    if members.is_empty() {
        return Err(LabError::Contract("diffusion index over an empty class set".into()));
    }
    let mut total = S::zero();
    for &k in members {
        let d1 = before
            .iter()
            .find(|e| e.0 == k)
            .map(|e| e.1)
            .expect("member of S1 ∪ S2");
        let d2 = after.iter().find(|e| e.0 == k).map(|e| e.1).expect("member of S1 ∪ S2");
        if !(d1 > S::zero()) {
            return Err(LabError::DegenerateGeometry(format!(
                "class {k} coincides with target {target} at the reference temperature"
            )));
        }
        total = total + (d2 - d1) / d1;
    }
    Ok(total / S::from_usize_lossy(members.len()))
}

fn check_pair<S: Scalar>(a: &FeatureMatrix<S>, b: &FeatureMatrix<S>, sets: &SemanticSets) -> Result<()> {
    if a.num_classes != b.num_classes {
        return Err(LabError::Contract(format!(
            "feature matrices have {} and {} classes",
            a.num_classes, b.num_classes
        )));
    }
    if a.split != b.split {
        return Err(LabError::Contract(format!(
            "feature splits differ ({} vs {})",
            a.split, b.split
        )));
    }
    if let Some(bad) = std::iter::once(sets.target())
        .chain(sets.all_compared())
        .find(|&c| c >= a.num_classes)
    {
        return Err(LabError::Index {
            index: bad,
            classes: a.num_classes,
        });
    }
    Ok(())
}

fn relative_for<S: Scalar>(
    features: &FeatureMatrix<S>,
    sets: &SemanticSets,
    variant: DistanceVariant,
) -> Result<Vec<(usize, S)>> {
    let pi = sets.target();
    match variant {
        DistanceVariant::Centroid => {
            let cents = centroids(features, features.num_classes)?;
            let c_pi = cents.centroid(pi)?;
            relative_all(sets, |k| Ok(squared_distance(c_pi, cents.centroid(k)?)))
        }
        DistanceVariant::Pairwise => {
            let stats = ClassStats::of(features)?;
            relative_all(sets, |k| stats.mean_pair_sq(pi, k))
        }
    }
}

/// `(η over S1, η over S2)` for the move from `feat_t1` to `feat_t2`.
pub fn diffusion_pair<S: Scalar>(
    feat_t1: &FeatureMatrix<S>,
    feat_t2: &FeatureMatrix<S>,
    sets: &SemanticSets,
    variant: DistanceVariant,
) -> Result<(S, S)> {
    check_pair(feat_t1, feat_t2, sets)?;
    let before = relative_for(feat_t1, sets, variant)?;
    let after = relative_for(feat_t2, sets, variant)?;
    Ok((
        eta_from(&before, &after, sets.similar(), sets.target())?,
        eta_from(&before, &after, sets.dissimilar(), sets.target())?,
    ))
}

fn single<S: Scalar>(
    feat_t1: &FeatureMatrix<S>,
    feat_t2: &FeatureMatrix<S>,
    sets: &SemanticSets,
    over: SetChoice,
    variant: DistanceVariant,
) -> Result<S> {
    check_pair(feat_t1, feat_t2, sets)?;
    let before = relative_for(feat_t1, sets, variant)?;
    let after = relative_for(feat_t2, sets, variant)?;
    let members = match over {
        SetChoice::Similar => sets.similar(),
        SetChoice::Dissimilar => sets.dissimilar(),
    };
    eta_from(&before, &after, members, sets.target())
}

/// Diffusion index from class centroids, as a fraction (multiply by 100 for percent).
pub fn diffusion_index<S: Scalar>(
    feat_t1: &FeatureMatrix<S>,
    feat_t2: &FeatureMatrix<S>,
    sets: &SemanticSets,
    over: SetChoice,
) -> Result<S> {
    single(feat_t1, feat_t2, sets, over, DistanceVariant::Centroid)
}

pub fn diffusion_index_pairwise<S: Scalar>(
    feat_t1: &FeatureMatrix<S>,
    feat_t2: &FeatureMatrix<S>,
    sets: &SemanticSets,
    over: SetChoice,
) -> Result<S> {
    single(feat_t1, feat_t2, sets, over, DistanceVariant::Pairwise)
}

/// One line of the diffusion table. `None` marks degenerate geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionRow {
    pub target: usize,
    pub split: Split,
    pub variant: DistanceVariant,
    pub t1: f64,
    pub t2: f64,
    pub eta_s1: Option<f64>,
    pub eta_s2: Option<f64>,
}

fn fmt_opt(v: Option<f64>, scale: f64) -> String {
    v.map_or_else(|| "NaN".to_string(), |x| format!("{}", x * scale))
}

/// CSV with the fractional η columns followed by the same values ×100.
pub fn write_diffusion_csv(rows: &[DiffusionRow]) -> String {
    let mut out = String::from("target,split,variant,T1,T2,eta_S1,eta_S2,eta_S1_pct,eta_S2_pct\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.target,
            r.split,
            r.variant,
            r.t1,
            r.t2,
            fmt_opt(r.eta_s1, 1.0),
            fmt_opt(r.eta_s2, 1.0),
            fmt_opt(r.eta_s1, 100.0),
            fmt_opt(r.eta_s2, 100.0),
        );
    }
    out
}
