//! Hierarchical Gaussian-mixture datasets with known semantic groups, and
//! the `DSET` dataset file format.
//!
//! Group anchors sit on a sphere of radius `group_spread`; each class mean
//! is its group anchor plus a random offset of norm `class_spread`, so
//! classes sharing a group are the "semantically similar" ones.
//!
//! ```text
//! "DSET" | version: u16 | K: u32 | input_dim: u32 | N: u64
//! has_groups: u8 | (K × u32 group ids when has_groups = 1)
//! inputs: N × input_dim f64, row-major | labels: N × u32
//! ```

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::binio::{read_file, write_file, Reader, Writer};
use crate::error::{LabError, Result};
use crate::geometry::SemanticSets;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"DSET";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchySpec {
    pub num_groups: usize,
    pub classes_per_group: usize,
    pub input_dim: usize,
    /// Radius of the sphere carrying the group anchors.
    pub group_spread: f64,
    /// Norm of each class mean's offset from its group anchor.
    pub class_spread: f64,
    pub noise_sigma: f64,
    pub samples_per_class_train: usize,
    pub samples_per_class_val: usize,
    pub seed: u64,
}

impl Default for HierarchySpec {
    fn default() -> Self {
        Self {
            num_groups: 4,
            classes_per_group: 2,
            input_dim: 16,
            group_spread: 10.0,
            class_spread: 1.0,
            noise_sigma: 0.45,
            samples_per_class_train: 150,
            samples_per_class_val: 100,
            seed: 1,
        }
    }
}

impl HierarchySpec {
    pub fn num_classes(&self) -> usize {
        self.num_groups * self.classes_per_group
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_groups", self.num_groups),
            ("classes_per_group", self.classes_per_group),
            ("input_dim", self.input_dim),
            ("samples_per_class_train", self.samples_per_class_train),
            ("samples_per_class_val", self.samples_per_class_val),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(LabError::Spec(format!("{name} must be positive")));
            }
        }
        if !(self.group_spread > 0.0) || !(self.class_spread > 0.0) {
            return Err(LabError::Spec("spreads must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(LabError::Spec(format!(
                "noise_sigma must be nonnegative, got {}",
                self.noise_sigma
            )));
        }
        if self.class_spread >= self.group_spread {
            return Err(LabError::Spec(format!(
                "class_spread ({}) must be smaller than group_spread ({})",
                self.class_spread, self.group_spread
            )));
        }
        Ok(())
    }

    pub fn group_of(&self, class: usize) -> usize {
        class / self.classes_per_group
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<S> {
    pub inputs: Matrix<S>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    /// Group id per class, when the semantic hierarchy is known.
    pub semantic_groups: Option<Vec<usize>>,
}

impl<S: Scalar> LabeledDataset<S> {
    pub fn new(
        inputs: Matrix<S>,
        labels: Vec<usize>,
        num_classes: usize,
        semantic_groups: Option<Vec<usize>>,
    ) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(LabError::Validation(format!(
                "{} input rows but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(LabError::Validation(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if let Some(groups) = &semantic_groups {
            if groups.len() != num_classes {
                return Err(LabError::Validation(format!(
                    "group map has {} entries for {num_classes} classes",
                    groups.len()
                )));
            }
        }
        Ok(Self {
            inputs,
            labels,
            num_classes,
            semantic_groups,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn indices_of(&self, class: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == class).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows whose label is in `classes`, in original order.
    pub fn restrict_to(&self, classes: &[usize]) -> LabeledDataset<S> {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| classes.contains(&self.labels[i])).collect();
        LabeledDataset {
            inputs: self.inputs.select_rows(&idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            semantic_groups: self.semantic_groups.clone(),
        }
    }
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Random unit directions; mutually orthogonal when `count <= dim`.
fn anchor_directions(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(count);
    for i in 0..count {
        let mut v = unit_gaussian(rng, dim);
        if i < dim {
            for _ in 0..2 {
                for d in &dirs {
                    let proj: f64 = v.iter().zip(d).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(d).for_each(|(a, b)| *a -= proj * b);
                }
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|a| *a /= n);
        }
        dirs.push(v);
    }
    dirs
}

fn draw_class_means(spec: &HierarchySpec, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let anchors = anchor_directions(rng, spec.num_groups, spec.input_dim);
    let mut means = Vec::with_capacity(spec.num_classes());
    for anchor in &anchors {
        for _ in 0..spec.classes_per_group {
            let offset = unit_gaussian(rng, spec.input_dim);
            means.push(
                anchor
                    .iter()
                    .zip(&offset)
                    .map(|(a, o)| spec.group_spread * a + spec.class_spread * o)
                    .collect(),
            );
        }
    }
    means
}

/// Class means exactly as [`generate`] draws them for this spec.
pub fn class_means(spec: &HierarchySpec) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok(draw_class_means(spec, &mut rng))
}

fn draw_split<S: Scalar>(
    spec: &HierarchySpec,
    means: &[Vec<f64>],
    per_class: usize,
    rng: &mut ChaCha8Rng,
) -> Result<LabeledDataset<S>> {
    let k = spec.num_classes();
    let mut data = Vec::with_capacity(k * per_class * spec.input_dim);
    let mut labels = Vec::with_capacity(k * per_class);
    for (class, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            for &m in mean {
                let noise: f64 = rng.sample(StandardNormal);
                data.push(S::lit(m + spec.noise_sigma * noise));
            }
            labels.push(class);
        }
    }
    let groups = (0..k).map(|c| spec.group_of(c)).collect();
    LabeledDataset::new(
        Matrix::from_vec(labels.len(), spec.input_dim, data)?,
        labels,
        k,
        Some(groups),
    )
}

/// Draws `(train, val)`; both splits come from fresh noise draws.
pub fn generate<S: Scalar>(spec: &HierarchySpec) -> Result<(LabeledDataset<S>, LabeledDataset<S>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let means = draw_class_means(spec, &mut rng);
    let train = draw_split(spec, &means, spec.samples_per_class_train, &mut rng)?;
    let val = draw_split(spec, &means, spec.samples_per_class_val, &mut rng)?;
    Ok((train, val))
}

/// S1 = other classes in the target's group, S2 = every remaining class.
pub fn ground_truth_sets<S: Scalar>(data: &LabeledDataset<S>, target: usize) -> Result<SemanticSets> {
    let groups = data
        .semantic_groups
        .as_ref()
        .ok_or_else(|| LabError::Contract("dataset carries no semantic group map".into()))?;
    if target >= data.num_classes {
        return Err(LabError::Index {
            index: target,
            classes: data.num_classes,
        });
    }
    let (similar, dissimilar): (Vec<usize>, Vec<usize>) = (0..data.num_classes)
        .filter(|&c| c != target)
        .partition(|&c| groups[c] == groups[target]);
    SemanticSets::new(target, similar, dissimilar)
}

pub fn write_dataset<S: Scalar>(data: &LabeledDataset<S>) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u16(VERSION);
    w.u32(data.num_classes as u32);
    w.u32(data.input_dim() as u32);
    w.u64(data.len() as u64);
    match &data.semantic_groups {
        Some(groups) => {
            w.u8(1);
            groups.iter().for_each(|&g| w.u32(g as u32));
        }
        None => w.u8(0),
    }
    for &v in data.inputs.as_slice() {
        w.f64(v.as_f64());
    }
    for &l in &data.labels {
        w.u32(l as u32);
    }
    w.finish()
}

pub fn read_dataset<S: Scalar>(bytes: &[u8]) -> Result<LabeledDataset<S>> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(r.error(format!("unsupported dataset version {version}")));
    }
    let k = r.u32("class count")? as usize;
    let dim = r.u32("input dimension")? as usize;
    let n = r.u64("sample count")? as usize;
    let groups = match r.u8("group-map flag")? {
        0 => None,
        1 => {
            r.require(4 * k as u64, "group map")?;
            Some(
                (0..k)
                    .map(|_| r.u32("group id").map(|g| g as usize))
                    .collect::<Result<Vec<_>>>()?,
            )
        }
        other => return Err(r.error(format!("invalid group-map flag {other}"))),
    };
    let inputs = r.f64_vec(n * dim, "inputs")?;
    r.require(4 * n as u64, "labels")?;
    let labels = (0..n)
        .map(|_| r.u32("label").map(|l| l as usize))
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;
    LabeledDataset::new(
        Matrix::from_vec(n, dim, inputs.into_iter().map(S::lit).collect())?,
        labels,
        k,
        groups,
    )
}

pub fn save_dataset<S: Scalar>(data: &LabeledDataset<S>, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &write_dataset(data))
}

pub fn load_dataset<S: Scalar>(path: impl AsRef<Path>) -> Result<LabeledDataset<S>> {
    read_dataset(&read_file(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn zero_noise_collapses_onto_means() {
        let spec = HierarchySpec {
            noise_sigma: 0.0,
            samples_per_class_train: 3,
            samples_per_class_val: 2,
            ..HierarchySpec::default()
        };
        let (train, _) = generate::<f64>(&spec).unwrap();
        let means = class_means(&spec).unwrap();
        for (row, &l) in train.inputs.iter_rows().zip(&train.labels) {
            assert_eq!(row, means[l].as_slice());
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = HierarchySpec::default();
        assert_eq!(generate::<f64>(&spec).unwrap(), generate::<f64>(&spec).unwrap());
        let other = HierarchySpec {
            seed: 2,
            ..spec.clone()
        };
        assert_ne!(generate::<f64>(&spec).unwrap().0, generate::<f64>(&other).unwrap().0);
    }

    #[test]
    fn hierarchy_is_geometric() {
        let spec = HierarchySpec {
            num_groups: 4,
            classes_per_group: 2,
            class_spread: 1.0,
            group_spread: 10.0,
            ..HierarchySpec::default()
        };
        let means = class_means(&spec).unwrap();
        let (mut intra, mut inter) = (Vec::new(), Vec::new());
        for i in 0..8 {
            for j in i + 1..8 {
                let d = dist(&means[i], &means[j]);
                if spec.group_of(i) == spec.group_of(j) {
                    intra.push(d);
                } else {
                    inter.push(d);
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&intra) / mean(&inter) < 0.3);
        let anchor_norm_ok = means.iter().all(|m| {
            let n = m.iter().map(|x| x * x).sum::<f64>().sqrt();
            (n - 10.0).abs() <= 1.0 + 1e-9
        });
        assert!(anchor_norm_ok);
    }

    #[test]
    fn spec_validation() {
        let bad = HierarchySpec {
            class_spread: 10.0,
            group_spread: 5.0,
            ..HierarchySpec::default()
        };
        assert!(matches!(generate::<f64>(&bad), Err(LabError::Spec(_))));
        let bad = HierarchySpec {
            num_groups: 0,
            ..HierarchySpec::default()
        };
        assert!(matches!(generate::<f64>(&bad), Err(LabError::Spec(_))));
    }

    #[test]
    fn ground_truth_counts() {
        let (train, _) = generate::<f64>(&HierarchySpec::default()).unwrap();
        let sets = ground_truth_sets(&train, 0).unwrap();
        assert_eq!(sets.similar(), &[1]);
        assert_eq!(sets.dissimilar().len(), 6);
        let single = HierarchySpec {
            classes_per_group: 1,
            ..HierarchySpec::default()
        };
        let (train, _) = generate::<f64>(&single).unwrap();
        assert!(matches!(ground_truth_sets(&train, 0), Err(LabError::Contract(_))));
        let mut no_groups = train.clone();
        no_groups.semantic_groups = None;
        assert!(ground_truth_sets(&no_groups, 0).is_err());
    }

    #[test]
    fn dataset_round_trip_and_errors() {
        let spec = HierarchySpec {
            samples_per_class_train: 5,
            samples_per_class_val: 2,
            ..HierarchySpec::default()
        };
        let (train, _) = generate::<f64>(&spec).unwrap();
        let bytes = write_dataset(&train);
        assert_eq!(read_dataset::<f64>(&bytes).unwrap(), train);

        let err = read_dataset::<f64>(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(matches!(err, LabError::Parse { .. }));

        // Patch the last label to K.
        let mut bad = bytes.clone();
        let at = bad.len() - 4;
        bad[at..].copy_from_slice(&(train.num_classes as u32).to_le_bytes());
        assert!(matches!(read_dataset::<f64>(&bad), Err(LabError::Validation(_))));

        let mut bad = bytes;
        bad[0] = b'X';
        assert!(matches!(
            read_dataset::<f64>(&bad),
            Err(LabError::Parse { offset: 0, .. })
        ));
    }

    #[test]
    fn restrict_keeps_order() {
        let spec = HierarchySpec {
            samples_per_class_train: 2,
            samples_per_class_val: 1,
            ..HierarchySpec::default()
        };
        let (train, _) = generate::<f64>(&spec).unwrap();
        let sub = train.restrict_to(&[1, 3]);
        assert_eq!(sub.labels, vec![1, 1, 3, 3]);
        assert_eq!(sub.inputs.row(0), train.inputs.row(2));
    }
}
