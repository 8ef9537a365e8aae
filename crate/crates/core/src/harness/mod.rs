//! Grid orchestration: teacher training, distillation, analysis and reporting
//! over an `(α, T)` grid, with every artifact stored under one output directory.

mod analyze;
pub mod config;
pub mod record;
mod report;
mod runner;
mod table;

use std::path::{Path, PathBuf};

use crate::geometry::Split;

pub use analyze::cmd_analyze;
pub use config::{AnalysisConfig, AnalysisFlags, DatasetSource, ExperimentConfig, PhaseConfig, SetSource};
pub use record::{build_run_record, write_run_record, CellEntry, RunRecord, TeacherEntry};
pub use report::cmd_report;
pub use runner::{cmd_distill, cmd_gen_data, cmd_train_teacher, load_data, run_all};

/// A grid cell that did not complete.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellFailure {
    pub cell: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommandOutcome {
    pub failures: Vec<CellFailure>,
    pub warnings: Vec<String>,
}

impl CommandOutcome {
    pub fn is_success(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn merge(&mut self, other: CommandOutcome) {
        self.failures.extend(other.failures);
        self.warnings.extend(other.warnings);
    }
}

pub(crate) fn fmt_param(x: f64) -> String {
    format!("{x}")
}

pub fn teacher_cell_name(alpha: f64) -> String {
    format!("teacher alpha={}", fmt_param(alpha))
}

pub fn student_cell_name(alpha: f64, t: f64) -> String {
    format!("student alpha={} T={}", fmt_param(alpha), fmt_param(t))
}

/// Paths of every artifact a run produces, relative to its output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn data(&self, split: Split) -> PathBuf {
        self.root.join("data").join(format!("{}.dset", split.as_str()))
    }

    pub fn teacher_dir(&self, alpha: f64) -> PathBuf {
        self.root.join("teachers").join(format!("alpha_{}", fmt_param(alpha)))
    }

    pub fn teacher_checkpoint(&self, alpha: f64) -> PathBuf {
        self.teacher_dir(alpha).join("teacher.ckpt")
    }

    pub fn student_dir(&self, alpha: f64, t: f64) -> PathBuf {
        self.root
            .join("students")
            .join(format!("alpha_{}_T_{}", fmt_param(alpha), fmt_param(t)))
    }

    pub fn student_checkpoint(&self, alpha: f64, t: f64) -> PathBuf {
        self.student_dir(alpha, t).join("student.ckpt")
    }

    pub fn student_features(&self, alpha: f64, t: f64, split: Split) -> PathBuf {
        self.student_dir(alpha, t)
            .join(format!("features_{}.feat", split.as_str()))
    }

    pub fn analysis_dir(&self) -> PathBuf {
        self.root.join("analysis")
    }

    pub fn eta_csv(&self, alpha: f64) -> PathBuf {
        self.analysis_dir().join(format!("eta_alpha_{}.csv", fmt_param(alpha)))
    }

    pub fn smoothness_csv(&self, split: Split) -> PathBuf {
        match split {
            Split::Train => self.analysis_dir().join("smoothness.csv"),
            Split::Val => self.analysis_dir().join("smoothness_val.csv"),
        }
    }

    pub fn dominance_csv(&self) -> PathBuf {
        self.analysis_dir().join("dominance.csv")
    }

    pub fn class_accuracy_csv(&self) -> PathBuf {
        self.analysis_dir().join("class_accuracy.csv")
    }

    pub fn tightness_csv(&self) -> PathBuf {
        self.analysis_dir().join("tightness.csv")
    }

    pub fn profile_csv(&self, alpha: f64, t: f64, class: usize) -> PathBuf {
        self.analysis_dir().join("profiles").join(format!(
            "alpha_{}_T_{}_class_{class}.csv",
            fmt_param(alpha),
            fmt_param(t)
        ))
    }

    pub fn teacher_panel(&self, alpha: f64, triple: [usize; 3]) -> PathBuf {
        self.analysis_dir().join("panels").join(format!(
            "teacher_alpha_{}_classes_{}-{}-{}.svg",
            fmt_param(alpha),
            triple[0],
            triple[1],
            triple[2]
        ))
    }

    pub fn student_panel(&self, alpha: f64, t: f64, triple: [usize; 3]) -> PathBuf {
        self.analysis_dir().join("panels").join(format!(
            "student_alpha_{}_T_{}_classes_{}-{}-{}.svg",
            fmt_param(alpha),
            fmt_param(t),
            triple[0],
            triple[1],
            triple[2]
        ))
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.txt")
    }

    pub fn accuracy_matrix_csv(&self) -> PathBuf {
        self.root.join("accuracy_matrix.csv")
    }

    pub fn run_record(&self) -> PathBuf {
        self.root.join("run_record.txt")
    }

    /// `path` relative to the output directory with `/` separators.
    pub fn relative(&self, path: &Path) -> String {
        let rel = path.strip_prefix(&self.root).unwrap_or(path);
        rel.components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/")
    }
}

pub(crate) const METRICS_FILE: &str = "metrics.csv";
pub(crate) const LOSS_FILE: &str = "loss_history.csv";
pub(crate) const ERROR_FILE: &str = "error.txt";
