//! The run manifest: one entry per grid cell, rebuilt from the artifacts on disk.

use std::path::Path;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::runner::{student_seed, teacher_seed};
use super::table::Table;
use super::{Layout, ERROR_FILE, METRICS_FILE};
use crate::error::{LabError, Result};
use crate::geometry::Split;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TeacherEntry {
    pub alpha: f64,
    pub seed: u64,
    pub status: String,
    pub val_accuracy: Option<f64>,
    pub checkpoint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellEntry {
    pub alpha: f64,
    pub temperature: f64,
    pub seed: u64,
    pub status: String,
    pub teacher_accuracy: Option<f64>,
    pub student_accuracy: Option<f64>,
    pub checkpoint: Option<String>,
    pub features_train: Option<String>,
    pub features_val: Option<String>,
    pub analysis: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub seed: u64,
    pub alpha_grid: Vec<f64>,
    pub temperature_grid: Vec<f64>,
    pub teachers: Vec<TeacherEntry>,
    pub cells: Vec<CellEntry>,
    pub analysis: Vec<String>,
}

fn existing(layout: &Layout, path: &Path) -> Option<String> {
    path.exists().then(|| layout.relative(path))
}

fn metric(dir: &Path, column: &str) -> Option<f64> {
    let table = Table::read(&dir.join(METRICS_FILE)).ok()?;
    let row = table.rows().next()?;
    row.f64(column).ok()
}

fn status(dir: &Path, complete: bool) -> String {
    if complete {
        "ok".into()
    } else if dir.join(ERROR_FILE).exists() {
        "failed".into()
    } else {
        "missing".into()
    }
}

pub fn build_run_record(cfg: &ExperimentConfig, layout: &Layout) -> RunRecord {
    let teachers = cfg
        .alpha_grid
        .iter()
        .enumerate()
        .map(|(ai, &alpha)| {
            let dir = layout.teacher_dir(alpha);
            let checkpoint = existing(layout, &layout.teacher_checkpoint(alpha));
            let val_accuracy = metric(&dir, "val_accuracy");
            TeacherEntry {
                alpha,
                seed: teacher_seed(cfg, ai),
                status: status(&dir, checkpoint.is_some() && val_accuracy.is_some()),
                val_accuracy,
                checkpoint,
            }
        })
        .collect();

    let mut cells = Vec::new();
    for (ai, &alpha) in cfg.alpha_grid.iter().enumerate() {
        for (ti, &t) in cfg.temperature_grid.iter().enumerate() {
            let dir = layout.student_dir(alpha, t);
            let checkpoint = existing(layout, &layout.student_checkpoint(alpha, t));
            let features_train = existing(layout, &layout.student_features(alpha, t, Split::Train));
            let features_val = existing(layout, &layout.student_features(alpha, t, Split::Val));
            let student_accuracy = metric(&dir, "val_accuracy");
            let complete = checkpoint.is_some()
                && features_train.is_some()
                && features_val.is_some()
                && student_accuracy.is_some();
            let mut analysis: Vec<String> = (0..cfg.analysis.projection_triples.len())
                .filter_map(|i| {
                    existing(
                        layout,
                        &layout.student_panel(alpha, t, cfg.analysis.projection_triples[i]),
                    )
                })
                .collect();
            analysis.sort();
            cells.push(CellEntry {
                alpha,
                temperature: t,
                seed: student_seed(cfg, ai, ti),
                status: status(&dir, complete),
                teacher_accuracy: metric(&dir, "teacher_val_accuracy"),
                student_accuracy,
                checkpoint,
                features_train,
                features_val,
                analysis,
            });
        }
    }

    let mut analysis: Vec<String> = Vec::new();
    for &alpha in &cfg.alpha_grid {
        analysis.extend(existing(layout, &layout.eta_csv(alpha)));
        for &triple in &cfg.analysis.projection_triples {
            analysis.extend(existing(layout, &layout.teacher_panel(alpha, triple)));
        }
    }
    for p in [
        layout.smoothness_csv(Split::Train),
        layout.smoothness_csv(Split::Val),
        layout.dominance_csv(),
        layout.class_accuracy_csv(),
        layout.tightness_csv(),
        layout.report(),
        layout.accuracy_matrix_csv(),
    ] {
        analysis.extend(existing(layout, &p));
    }

    RunRecord {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        alpha_grid: cfg.alpha_grid.clone(),
        temperature_grid: cfg.temperature_grid.clone(),
        teachers,
        cells,
        analysis,
    }
}

impl RunRecord {
    pub fn to_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("record serializes");
        s.push('\n');
        s
    }
}

pub fn write_run_record(cfg: &ExperimentConfig, layout: &Layout) -> Result<RunRecord> {
    let record = build_run_record(cfg, layout);
    let path = layout.run_record();
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| LabError::io(parent, e))?;
    }
    std::fs::write(&path, record.to_text()).map_err(|e| LabError::io(&path, e))?;
    Ok(record)
}
