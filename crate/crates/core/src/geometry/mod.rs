//! Geometry of penultimate representations: class centroids, the
//! diffusion index, cluster tightness, template distances and per-class
//! accuracy.

mod diffusion;
mod sets;

pub use diffusion::{
    diffusion_index, diffusion_index_pairwise, diffusion_pair, relative_distance, relative_distance_pairwise,
    write_diffusion_csv, DiffusionRow, DistanceVariant, SetChoice,
};
pub use sets::{
    format_semantic_sets, parse_semantic_sets, read_semantic_sets, select_semantic_sets, set_consistency, SemanticSets,
};

use std::fmt;
use std::str::FromStr;

use crate::error::{LabError, Result};
use crate::matrix::Matrix;
use crate::nn::{predict, DenseLayer, NetworkParams};
use crate::scalar::{squared_distance, Scalar};
use crate::synth::LabeledDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Split::Train),
            1 => Some(Split::Val),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            other => Err(LabError::Validation(format!("unknown split {other:?}"))),
        }
    }
}

/// Penultimate activations of one split, tagged with the distillation
/// temperature of the network that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<S> {
    pub rows: Matrix<S>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub split: Split,
    pub temperature_tag: f64,
}

impl<S: Scalar> FeatureMatrix<S> {
    pub fn new(
        rows: Matrix<S>,
        labels: Vec<usize>,
        num_classes: usize,
        split: Split,
        temperature_tag: f64,
    ) -> Result<Self> {
        if rows.rows() != labels.len() {
            return Err(LabError::Validation(format!(
                "{} feature rows but {} labels",
                rows.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(LabError::Index {
                index: bad,
                classes: num_classes,
            });
        }
        if !(temperature_tag > 0.0) {
            return Err(LabError::Validation(format!(
                "temperature tag must be positive, got {temperature_tag}"
            )));
        }
        Ok(Self {
            rows,
            labels,
            num_classes,
            split,
            temperature_tag,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.cols()
    }

    /// Rows whose label is in `classes`, in original order.
    pub fn restrict_to(&self, classes: &[usize]) -> FeatureMatrix<S> {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| classes.contains(&self.labels[i])).collect();
        FeatureMatrix {
            rows: self.rows.select_rows(&idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            split: self.split,
            temperature_tag: self.temperature_tag,
        }
    }
}

/// Runs `net` over `data` and keeps the penultimate activations.
pub fn extract_features<S: Scalar>(
    net: &NetworkParams<S>,
    data: &LabeledDataset<S>,
    split: Split,
    temperature_tag: f64,
) -> Result<FeatureMatrix<S>> {
    let mut rows = Vec::with_capacity(data.len() * net.penultimate_dim());
    for input in data.inputs.iter_rows() {
        rows.extend(crate::nn::penultimate(net, input)?);
    }
    FeatureMatrix::new(
        Matrix::from_vec(data.len(), net.penultimate_dim(), rows)?,
        data.labels.clone(),
        data.num_classes,
        split,
        temperature_tag,
    )
}

/// Per-class means; classes without samples are flagged by a zero count.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCentroids<S> {
    pub centroids: Matrix<S>,
    pub counts: Vec<usize>,
}

impl<S: Scalar> ClassCentroids<S> {
    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty_class(&self, k: usize) -> bool {
        self.counts.get(k).is_none_or(|&c| c == 0)
    }

    pub fn centroid(&self, k: usize) -> Result<&[S]> {
        if k >= self.num_classes() {
            return Err(LabError::Index {
                index: k,
                classes: self.num_classes(),
            });
        }
        if self.counts[k] == 0 {
            return Err(LabError::EmptyClass(k));
        }
        Ok(self.centroids.row(k))
    }
}

pub fn centroids<S: Scalar>(features: &FeatureMatrix<S>, num_classes: usize) -> Result<ClassCentroids<S>> {
    if features.is_empty() {
        return Err(LabError::Contract("no feature rows".into()));
    }
    let h = features.dim();
    let mut sums = Matrix::zeros(num_classes, h);
    let mut counts = vec![0usize; num_classes];
    for (row, &label) in features.rows.iter_rows().zip(&features.labels) {
        if label >= num_classes {
            return Err(LabError::Index {
                index: label,
                classes: num_classes,
            });
        }
        counts[label] += 1;
        for (s, &v) in sums.row_mut(label).iter_mut().zip(row) {
            *s = *s + v;
        }
    }
    for (k, &c) in counts.iter().enumerate() {
        if c > 0 {
            let n = S::from_usize_lossy(c);
            sums.row_mut(k).iter_mut().for_each(|v| *v = *v / n);
        }
    }
    Ok(ClassCentroids {
        centroids: sums,
        counts,
    })
}

/// Mean squared distance of each class's rows to their own centroid;
/// `None` for classes without samples.
pub fn cluster_tightness<S: Scalar>(features: &FeatureMatrix<S>) -> Result<Vec<Option<S>>> {
    let cents = centroids(features, features.num_classes)?;
    let mut totals = vec![S::zero(); features.num_classes];
    for (row, &label) in features.rows.iter_rows().zip(&features.labels) {
        totals[label] = totals[label] + squared_distance(row, cents.centroids.row(label));
    }
    Ok(totals
        .into_iter()
        .zip(&cents.counts)
        .map(|(t, &c)| (c > 0).then(|| t / S::from_usize_lossy(c)))
        .collect())
}

/// Mean of the defined per-class tightness values.
pub fn mean_tightness<S: Scalar>(tightness: &[Option<S>]) -> Option<S> {
    let defined: Vec<S> = tightness.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().copied().sum::<S>() / S::from_usize_lossy(defined.len()))
}

/// `‖[x; 1] − [w_k; b_k]‖²` for the final layer's template of class `k`.
pub fn template_distance<S: Scalar>(penultimate: &[S], final_layer: &DenseLayer<S>, k: usize) -> Result<S> {
    if penultimate.len() != final_layer.in_dim() {
        return Err(LabError::Shape(format!(
            "feature of length {} against templates of length {}",
            penultimate.len(),
            final_layer.in_dim()
        )));
    }
    let template = final_layer.template(k)?;
    let bias_term = S::one() - template[template.len() - 1];
    Ok(squared_distance(penultimate, &template[..template.len() - 1]) + bias_term * bias_term)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassAccuracy {
    pub correct: Vec<usize>,
    pub total: Vec<usize>,
    /// `correct / total`, `None` for classes absent from the data.
    pub per_class: Vec<Option<f64>>,
    /// Macro average over classes that have samples.
    pub mean: f64,
}

pub fn class_accuracy<S: Scalar>(net: &NetworkParams<S>, data: &LabeledDataset<S>) -> Result<ClassAccuracy> {
    if data.is_empty() {
        return Err(LabError::Contract("cannot score an empty dataset".into()));
    }
    let k = data.num_classes;
    let mut correct = vec![0usize; k];
    let mut total = vec![0usize; k];
    for (row, &label) in data.inputs.iter_rows().zip(&data.labels) {
        total[label] += 1;
        if predict(net, row)? == label {
            correct[label] += 1;
        }
    }
    let per_class: Vec<Option<f64>> = correct
        .iter()
        .zip(&total)
        .map(|(&c, &t)| (t > 0).then(|| c as f64 / t as f64))
        .collect();
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    let mean = defined.iter().sum::<f64>() / defined.len() as f64;
    Ok(ClassAccuracy {
        correct,
        total,
        per_class,
        mean,
    })
}
