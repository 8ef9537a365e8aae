//! Experiment configuration: a flat `key = value` file split into
//! `[dataset]`, `[teacher]`, `[student]`, `[grid]`, `[analysis]` and `[run]`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ini::Ini;
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};
use crate::geometry::Split;
use crate::nn::SgdConfig;
use crate::synth::HierarchySpec;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synthetic(HierarchySpec),
    /// Previously saved DSET files.
    Files {
        train: PathBuf,
        val: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseConfig {
    pub dims: Vec<usize>,
    /// `seed` is replaced per cell.
    pub sgd: SgdConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalysisFlags {
    pub eta: bool,
    pub projection: bool,
    pub smoothness: bool,
    pub class_accuracy: bool,
    pub dominance: bool,
}

impl Default for AnalysisFlags {
    fn default() -> Self {
        Self {
            eta: true,
            projection: true,
            smoothness: true,
            class_accuracy: true,
            dominance: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SetSource {
    /// Group map stored with the dataset.
    GroundTruth,
    /// Nearest and farthest classes by teacher centroid distance.
    Centroid {
        similar_frac: f64,
        dissimilar_frac: f64,
    },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub flags: AnalysisFlags,
    /// Low temperature every η is measured against.
    pub eta_reference: f64,
    pub sets: SetSource,
    pub projection_triples: Vec<[usize; 3]>,
    pub projection_split: Split,
    pub smoothness_temperatures: Vec<f64>,
    pub dominance_factor: f64,
    pub class_names: Option<Vec<String>>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            flags: AnalysisFlags::default(),
            eta_reference: 1.0,
            sets: SetSource::GroundTruth,
            projection_triples: vec![[0, 1, 2]],
            projection_split: Split::Train,
            smoothness_temperatures: vec![1.0, 1.5, 2.0, 3.0, 8.0, 64.0],
            dominance_factor: 100.0,
            class_names: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    /// Dataset seed given explicitly; otherwise the run seed is used.
    pub dataset_seed: Option<u64>,
    pub teacher: PhaseConfig,
    pub student: PhaseConfig,
    pub beta: f64,
    pub alpha_grid: Vec<f64>,
    pub temperature_grid: Vec<f64>,
    pub analysis: AnalysisConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub jobs: usize,
}

fn phase_sgd(epochs: usize) -> SgdConfig {
    SgdConfig {
        learning_rate: 0.05,
        momentum: 0.9,
        epochs,
        batch_size: 32,
        seed: 0,
        lr_decay_epochs: vec![epochs / 2, 3 * epochs / 4],
        lr_decay_factor: 0.1,
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::Synthetic(HierarchySpec::default()),
            dataset_seed: None,
            teacher: PhaseConfig {
                dims: vec![16, 64, 32, 8],
                sgd: phase_sgd(40),
            },
            student: PhaseConfig {
                dims: vec![16, 64, 32, 8],
                sgd: phase_sgd(90),
            },
            beta: 1.0,
            alpha_grid: vec![0.0, 0.1],
            temperature_grid: vec![1.0, 2.0, 4.0],
            analysis: AnalysisConfig::default(),
            output_dir: PathBuf::from("runs/default"),
            seed: 1,
            jobs: 1,
        }
    }
}

fn cfg_err(section: &str, key: &str, msg: impl std::fmt::Display) -> LabError {
    LabError::Config(format!("[{section}] {key}: {msg}"))
}

fn parse_num<T: std::str::FromStr>(section: &str, key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| cfg_err(section, key, format!("cannot parse {value:?}")))
}

fn parse_list<T: std::str::FromStr>(section: &str, key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(section, key, s))
        .collect()
}

fn parse_bool(section: &str, key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        other => Err(cfg_err(section, key, format!("expected a boolean, got {other:?}"))),
    }
}

fn parse_triples(section: &str, key: &str, value: &str) -> Result<Vec<[usize; 3]>> {
    value
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|t| {
            let v: Vec<usize> = parse_list(section, key, t)?;
            <[usize; 3]>::try_from(v).map_err(|_| cfg_err(section, key, format!("{t:?} is not a class triple")))
        })
        .collect()
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn apply_sgd(sgd: &mut SgdConfig, section: &str, key: &str, value: &str) -> Result<bool> {
    match key {
        "learning_rate" => sgd.learning_rate = parse_num(section, key, value)?,
        "momentum" => sgd.momentum = parse_num(section, key, value)?,
        "epochs" => sgd.epochs = parse_num(section, key, value)?,
        "batch_size" => sgd.batch_size = parse_num(section, key, value)?,
        "lr_decay_epochs" => sgd.lr_decay_epochs = parse_list(section, key, value)?,
        "lr_decay_factor" => sgd.lr_decay_factor = parse_num(section, key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

impl ExperimentConfig {
    pub fn from_ini_str(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        let mut cfg = ExperimentConfig::default();
        let mut spec = HierarchySpec::default();
        let mut train_path: Option<PathBuf> = None;
        let mut val_path: Option<PathBuf> = None;
        let mut sets_kind = "ground_truth".to_string();
        let mut sets_file: Option<PathBuf> = None;
        let (mut similar_frac, mut dissimilar_frac) = (0.1, 0.5);
        let mut decay_given = [false, false];

        for (section, props) in ini.iter() {
            let section = section.unwrap_or("");
            for (key, value) in props.iter() {
                let s = section;
                match (s, key) {
                    ("dataset", "num_groups") => spec.num_groups = parse_num(s, key, value)?,
                    ("dataset", "classes_per_group") => spec.classes_per_group = parse_num(s, key, value)?,
                    ("dataset", "input_dim") => spec.input_dim = parse_num(s, key, value)?,
                    ("dataset", "group_spread") => spec.group_spread = parse_num(s, key, value)?,
                    ("dataset", "class_spread") => spec.class_spread = parse_num(s, key, value)?,
                    ("dataset", "noise_sigma") => spec.noise_sigma = parse_num(s, key, value)?,
                    ("dataset", "samples_per_class_train") => spec.samples_per_class_train = parse_num(s, key, value)?,
                    ("dataset", "samples_per_class_val") => spec.samples_per_class_val = parse_num(s, key, value)?,
                    ("dataset", "seed") => cfg.dataset_seed = Some(parse_num(s, key, value)?),
                    ("dataset", "train_path") => train_path = Some(PathBuf::from(value.trim())),
                    ("dataset", "val_path") => val_path = Some(PathBuf::from(value.trim())),
                    ("teacher" | "student", _) => {
                        let phase = if s == "teacher" {
                            &mut cfg.teacher
                        } else {
                            &mut cfg.student
                        };
                        if key == "dims" {
                            phase.dims = parse_list(s, key, value)?;
                        } else if s == "student" && key == "beta" {
                            cfg.beta = parse_num(s, key, value)?;
                        } else if apply_sgd(&mut phase.sgd, s, key, value)? {
                            if key == "lr_decay_epochs" {
                                decay_given[(s == "student") as usize] = true;
                            }
                        } else {
                            return Err(cfg_err(s, key, "unknown key"));
                        }
                    }
                    ("grid", "alpha") => cfg.alpha_grid = parse_list(s, key, value)?,
                    ("grid", "temperature") => cfg.temperature_grid = parse_list(s, key, value)?,
                    ("analysis", "eta") => cfg.analysis.flags.eta = parse_bool(s, key, value)?,
                    ("analysis", "projection") => cfg.analysis.flags.projection = parse_bool(s, key, value)?,
                    ("analysis", "smoothness") => cfg.analysis.flags.smoothness = parse_bool(s, key, value)?,
                    ("analysis", "class_accuracy") => cfg.analysis.flags.class_accuracy = parse_bool(s, key, value)?,
                    ("analysis", "dominance") => cfg.analysis.flags.dominance = parse_bool(s, key, value)?,
                    ("analysis", "eta_reference") => cfg.analysis.eta_reference = parse_num(s, key, value)?,
                    ("analysis", "sets") => sets_kind = value.trim().to_string(),
                    ("analysis", "sets_file") => sets_file = Some(PathBuf::from(value.trim())),
                    ("analysis", "similar_frac") => similar_frac = parse_num(s, key, value)?,
                    ("analysis", "dissimilar_frac") => dissimilar_frac = parse_num(s, key, value)?,
                    ("analysis", "projection_triples") => {
                        cfg.analysis.projection_triples = parse_triples(s, key, value)?
                    }
                    ("analysis", "projection_split") => {
                        cfg.analysis.projection_split = value
                            .trim()
                            .parse()
                            .map_err(|_| cfg_err(s, key, format!("unknown split {value:?}")))?
                    }
                    ("analysis", "smoothness_temperatures") => {
                        cfg.analysis.smoothness_temperatures = parse_list(s, key, value)?
                    }
                    ("analysis", "dominance_factor") => cfg.analysis.dominance_factor = parse_num(s, key, value)?,
                    ("analysis", "class_names") => {
                        cfg.analysis.class_names = Some(value.split(',').map(|n| n.trim().to_string()).collect())
                    }
                    ("run", "output_dir") => cfg.output_dir = PathBuf::from(value.trim()),
                    ("run", "seed") => cfg.seed = parse_num(s, key, value)?,
                    ("run", "jobs") => cfg.jobs = parse_num(s, key, value)?,
                    ("", _) => return Err(cfg_err("", key, "keys must live inside a section")),
                    _ => return Err(cfg_err(s, key, "unknown key")),
                }
            }
        }

        for (given, phase) in decay_given.iter().zip([&mut cfg.teacher, &mut cfg.student]) {
            if !given {
                let e = phase.sgd.epochs;
                phase.sgd.lr_decay_epochs = vec![e / 2, 3 * e / 4];
            }
        }
        cfg.dataset = match (train_path, val_path) {
            (Some(train), Some(val)) => DatasetSource::Files { train, val },
            (None, None) => DatasetSource::Synthetic(spec),
            _ => {
                return Err(LabError::Config(
                    "[dataset] train_path and val_path must be given together".into(),
                ))
            }
        };
        cfg.analysis.sets = match sets_kind.as_str() {
            "ground_truth" => SetSource::GroundTruth,
            "centroid" => SetSource::Centroid {
                similar_frac,
                dissimilar_frac,
            },
            "file" => SetSource::File(
                sets_file.ok_or_else(|| LabError::Config("[analysis] sets = file needs sets_file".into()))?,
            ),
            other => return Err(cfg_err("analysis", "sets", format!("unknown set source {other:?}"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::from_ini_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha_grid.is_empty() || self.temperature_grid.is_empty() {
            return Err(LabError::Config("alpha and temperature grids must be nonempty".into()));
        }
        if let Some(a) = self.alpha_grid.iter().find(|a| !(0.0..1.0).contains(*a)) {
            return Err(LabError::Config(format!("alpha {a} outside [0, 1)")));
        }
        for grid in [&self.temperature_grid, &self.analysis.smoothness_temperatures] {
            if let Some(t) = grid.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
                return Err(LabError::Config(format!("temperature {t} must be positive and finite")));
            }
        }
        if !self.temperature_grid.contains(&1.0) {
            return Err(LabError::Config("temperature grid must contain 1".into()));
        }
        if !self.temperature_grid.contains(&self.analysis.eta_reference) {
            return Err(LabError::Config(format!(
                "eta_reference {} is not in the temperature grid",
                self.analysis.eta_reference
            )));
        }
        for (name, grid) in [("alpha", &self.alpha_grid), ("temperature", &self.temperature_grid)] {
            let mut seen: Vec<f64> = grid.clone();
            seen.sort_by(f64::total_cmp);
            if seen.windows(2).any(|w| w[0] == w[1]) {
                return Err(LabError::Config(format!("{name} grid has duplicates")));
            }
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(LabError::Config(format!("beta {} outside [0, 1]", self.beta)));
        }
        if !(self.analysis.dominance_factor > 0.0) {
            return Err(LabError::Config("dominance_factor must be positive".into()));
        }
        for (name, phase) in [("teacher", &self.teacher), ("student", &self.student)] {
            if phase.dims.len() < 2 || phase.dims.contains(&0) {
                return Err(LabError::Config(format!(
                    "[{name}] dims must list at least two positive sizes"
                )));
            }
            phase.sgd.validate()?;
        }
        if self.jobs == 0 {
            return Err(LabError::Config("jobs must be at least 1".into()));
        }
        if let DatasetSource::Synthetic(spec) = &self.dataset {
            spec.validate().map_err(|e| LabError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn hierarchy_spec(&self) -> Option<HierarchySpec> {
        match &self.dataset {
            DatasetSource::Synthetic(spec) => Some(HierarchySpec {
                seed: self.dataset_seed.unwrap_or(self.seed),
                ..spec.clone()
            }),
            DatasetSource::Files { .. } => None,
        }
    }

    /// Canonical text form. Output directory and job count are left out so
    /// that runs differing only in those hash identically.
    pub fn to_ini_string(&self) -> String {
        let mut sections: BTreeMap<&str, Vec<(String, String)>> = BTreeMap::new();
        let ds = sections.entry("dataset").or_default();
        match &self.dataset {
            DatasetSource::Synthetic(spec) => {
                ds.push(("num_groups".into(), spec.num_groups.to_string()));
                ds.push(("classes_per_group".into(), spec.classes_per_group.to_string()));
                ds.push(("input_dim".into(), spec.input_dim.to_string()));
                ds.push(("group_spread".into(), spec.group_spread.to_string()));
                ds.push(("class_spread".into(), spec.class_spread.to_string()));
                ds.push(("noise_sigma".into(), spec.noise_sigma.to_string()));
                ds.push((
                    "samples_per_class_train".into(),
                    spec.samples_per_class_train.to_string(),
                ));
                ds.push(("samples_per_class_val".into(), spec.samples_per_class_val.to_string()));
                if let Some(seed) = self.dataset_seed {
                    ds.push(("seed".into(), seed.to_string()));
                }
            }
            DatasetSource::Files { train, val } => {
                ds.push(("train_path".into(), train.display().to_string()));
                ds.push(("val_path".into(), val.display().to_string()));
            }
        }
        for (name, phase) in [("teacher", &self.teacher), ("student", &self.student)] {
            let e = sections.entry(name).or_default();
            e.push(("dims".into(), join(&phase.dims)));
            e.push(("learning_rate".into(), phase.sgd.learning_rate.to_string()));
            e.push(("momentum".into(), phase.sgd.momentum.to_string()));
            e.push(("epochs".into(), phase.sgd.epochs.to_string()));
            e.push(("batch_size".into(), phase.sgd.batch_size.to_string()));
            e.push(("lr_decay_epochs".into(), join(&phase.sgd.lr_decay_epochs)));
            e.push(("lr_decay_factor".into(), phase.sgd.lr_decay_factor.to_string()));
        }
        sections
            .get_mut("student")
            .unwrap()
            .push(("beta".into(), self.beta.to_string()));
        let g = sections.entry("grid").or_default();
        g.push(("alpha".into(), join(&self.alpha_grid)));
        g.push(("temperature".into(), join(&self.temperature_grid)));
        let a = sections.entry("analysis").or_default();
        let f = self.analysis.flags;
        a.push(("eta".into(), f.eta.to_string()));
        a.push(("projection".into(), f.projection.to_string()));
        a.push(("smoothness".into(), f.smoothness.to_string()));
        a.push(("class_accuracy".into(), f.class_accuracy.to_string()));
        a.push(("dominance".into(), f.dominance.to_string()));
        a.push(("eta_reference".into(), self.analysis.eta_reference.to_string()));
        match &self.analysis.sets {
            SetSource::GroundTruth => a.push(("sets".into(), "ground_truth".into())),
            SetSource::Centroid {
                similar_frac,
                dissimilar_frac,
            } => {
                a.push(("sets".into(), "centroid".into()));
                a.push(("similar_frac".into(), similar_frac.to_string()));
                a.push(("dissimilar_frac".into(), dissimilar_frac.to_string()));
            }
            SetSource::File(p) => {
                a.push(("sets".into(), "file".into()));
                a.push(("sets_file".into(), p.display().to_string()));
            }
        }
        let triples: Vec<String> = self.analysis.projection_triples.iter().map(|t| join(t)).collect();
        a.push(("projection_triples".into(), triples.join("; ")));
        a.push((
            "projection_split".into(),
            self.analysis.projection_split.as_str().into(),
        ));
        a.push((
            "smoothness_temperatures".into(),
            join(&self.analysis.smoothness_temperatures),
        ));
        a.push(("dominance_factor".into(), self.analysis.dominance_factor.to_string()));
        if let Some(names) = &self.analysis.class_names {
            a.push(("class_names".into(), names.join(", ")));
        }
        sections
            .entry("run")
            .or_default()
            .push(("seed".into(), self.seed.to_string()));

        let mut out = String::new();
        for (name, entries) in &sections {
            let _ = writeln!(out, "[{name}]");
            for (k, v) in entries {
                let _ = writeln!(out, "{k} = {v}");
            }
            out.push('\n');
        }
        out
    }

    /// First 16 hex digits of the SHA-256 of [`Self::to_ini_string`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_ini_string().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn class_name(&self, k: usize) -> String {
        self.analysis
            .class_names
            .as_ref()
            .and_then(|n| n.get(k).cloned())
            .unwrap_or_else(|| format!("class_{k}"))
    }
}
