use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::config::{DatasetSource, ExperimentConfig};
use super::record::write_run_record;
use super::{
    student_cell_name, teacher_cell_name, CellFailure, CommandOutcome, Layout, ERROR_FILE, LOSS_FILE, METRICS_FILE,
};
use crate::error::{LabError, Result};
use crate::features::dump_features;
use crate::geometry::Split;
use crate::nn::{accuracy, init_network, load_checkpoint, logits, save_checkpoint, train, SgdConfig, TrainOutcome};
use crate::objectives::{tempered_softmax, DistillConfig, Distillation, SmoothedCrossEntropy, SmoothingConfig};
use crate::synth::{generate, load_dataset, save_dataset};
use crate::{Dataset, Network};

pub(crate) fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| LabError::Config(format!("cannot start {jobs} workers: {e}")))
}

pub(crate) fn teacher_seed(cfg: &ExperimentConfig, alpha_index: usize) -> u64 {
    cfg.seed.wrapping_add(alpha_index as u64)
}

pub(crate) fn student_seed(cfg: &ExperimentConfig, alpha_index: usize, t_index: usize) -> u64 {
    let cell = cfg.alpha_grid.len() + alpha_index * cfg.temperature_grid.len() + t_index;
    cfg.seed.wrapping_add(cell as u64)
}

fn check_dims(cfg: &ExperimentConfig, data: &Dataset) -> Result<()> {
    for (name, dims) in [("teacher", &cfg.teacher.dims), ("student", &cfg.student.dims)] {
        let (first, last) = (dims[0], dims[dims.len() - 1]);
        if first != data.input_dim() || last != data.num_classes {
            return Err(LabError::Config(format!(
                "[{name}] dims run {first} -> {last} but the data has {} inputs and {} classes",
                data.input_dim(),
                data.num_classes
            )));
        }
    }
    for t in &cfg.analysis.projection_triples {
        if t.iter().any(|&k| k >= data.num_classes) || t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
            return Err(LabError::Config(format!(
                "projection triple {t:?} needs three distinct classes below {}",
                data.num_classes
            )));
        }
    }
    Ok(())
}

/// Loads or regenerates both splits and writes them under `data/`.
pub fn load_data(cfg: &ExperimentConfig, layout: &Layout) -> Result<(Dataset, Dataset)> {
    let (train, val) = match &cfg.dataset {
        DatasetSource::Synthetic(_) => {
            let spec = cfg.hierarchy_spec().expect("synthetic source");
            generate::<f64>(&spec).map_err(|e| LabError::Config(e.to_string()))?
        }
        DatasetSource::Files { train, val } => (load_dataset(train)?, load_dataset(val)?),
    };
    if train.num_classes != val.num_classes || train.input_dim() != val.input_dim() {
        return Err(LabError::Config("train and val splits disagree on shape".into()));
    }
    check_dims(cfg, &train)?;
    save_dataset(&train, layout.data(Split::Train))?;
    save_dataset(&val, layout.data(Split::Val))?;
    Ok((train, val))
}

pub fn cmd_gen_data(cfg: &ExperimentConfig) -> Result<CommandOutcome> {
    load_data(cfg, &Layout::new(&cfg.output_dir))?;
    Ok(CommandOutcome::default())
}

fn reset_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    }
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| LabError::io(path, e))
}

fn loss_csv(history: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (e, l) in history.iter().enumerate() {
        out.push_str(&format!("{e},{l}\n"));
    }
    out
}

fn phase_sgd(base: &SgdConfig, seed: u64) -> SgdConfig {
    SgdConfig { seed, ..base.clone() }
}

fn record_failure(dir: &Path, cell: String, err: &LabError) -> CellFailure {
    let _ = fs::create_dir_all(dir);
    let _ = fs::write(dir.join(ERROR_FILE), format!("{err}\n"));
    CellFailure {
        cell,
        error: err.to_string(),
    }
}

fn run_teacher(cfg: &ExperimentConfig, layout: &Layout, train_set: &Dataset, val: &Dataset, ai: usize) -> Result<()> {
    let alpha = cfg.alpha_grid[ai];
    let seed = teacher_seed(cfg, ai);
    let objective = SmoothedCrossEntropy {
        cfg: SmoothingConfig::new(alpha, train_set.num_classes)?,
    };
    let net = init_network(&cfg.teacher.dims, seed)?;
    let TrainOutcome { net, loss_history } = train(net, train_set, &objective, &phase_sgd(&cfg.teacher.sgd, seed))?;
    let dir = layout.teacher_dir(alpha);
    save_checkpoint(&net, layout.teacher_checkpoint(alpha))?;
    write_text(&dir.join(LOSS_FILE), &loss_csv(&loss_history))?;
    write_text(
        &dir.join(METRICS_FILE),
        &format!(
            "alpha,seed,train_accuracy,val_accuracy,final_loss\n{},{},{},{},{}\n",
            alpha,
            seed,
            accuracy(&net, train_set)?,
            accuracy(&net, val)?,
            loss_history.last().copied().unwrap_or(f64::NAN)
        ),
    )
}

/// Trains one label-smoothed teacher per α.
pub fn cmd_train_teacher(cfg: &ExperimentConfig) -> Result<CommandOutcome> {
    let layout = Layout::new(&cfg.output_dir);
    let (train_set, val) = load_data(cfg, &layout)?;
    let pool = thread_pool(cfg.jobs)?;
    let results: Vec<Option<CellFailure>> = pool.install(|| {
        (0..cfg.alpha_grid.len())
            .into_par_iter()
            .map(|ai| {
                let alpha = cfg.alpha_grid[ai];
                let dir = layout.teacher_dir(alpha);
                reset_dir(&dir)
                    .and_then(|_| run_teacher(cfg, &layout, &train_set, &val, ai))
                    .err()
                    .map(|e| record_failure(&dir, teacher_cell_name(alpha), &e))
            })
            .collect()
    });
    let outcome = CommandOutcome {
        failures: results.into_iter().flatten().collect(),
        warnings: Vec::new(),
    };
    write_run_record(cfg, &layout)?;
    Ok(outcome)
}

pub(crate) fn load_teacher(layout: &Layout, alpha: f64) -> Result<Network> {
    let path = layout.teacher_checkpoint(alpha);
    if !path.exists() {
        return Err(LabError::Dependency(format!(
            "{} checkpoint {} not found",
            teacher_cell_name(alpha),
            path.display()
        )));
    }
    load_checkpoint(&path)
}

fn run_student(
    cfg: &ExperimentConfig,
    layout: &Layout,
    train_set: &Dataset,
    val: &Dataset,
    ai: usize,
    ti: usize,
) -> Result<()> {
    let (alpha, t) = (cfg.alpha_grid[ai], cfg.temperature_grid[ti]);
    let teacher = load_teacher(layout, alpha)?;
    if teacher.input_dim() != train_set.input_dim() || teacher.num_classes() != train_set.num_classes {
        return Err(LabError::Dependency(format!(
            "{}: teacher checkpoint does not match the data",
            student_cell_name(alpha, t)
        )));
    }
    let soft_targets = train_set
        .inputs
        .iter_rows()
        .map(|row| tempered_softmax(&logits(&teacher, row)?, t))
        .collect::<Result<Vec<_>>>()?;
    let objective = Distillation {
        teacher: &soft_targets,
        cfg: DistillConfig::new(t, cfg.beta)?,
    };
    let seed = student_seed(cfg, ai, ti);
    let net = init_network(&cfg.student.dims, seed)?;
    let TrainOutcome { net, loss_history } = train(net, train_set, &objective, &phase_sgd(&cfg.student.sgd, seed))?;
    let dir = layout.student_dir(alpha, t);
    save_checkpoint(&net, layout.student_checkpoint(alpha, t))?;
    dump_features(
        &net,
        train_set,
        Split::Train,
        t,
        layout.student_features(alpha, t, Split::Train),
    )?;
    dump_features(&net, val, Split::Val, t, layout.student_features(alpha, t, Split::Val))?;
    write_text(&dir.join(LOSS_FILE), &loss_csv(&loss_history))?;
    write_text(
        &dir.join(METRICS_FILE),
        &format!(
            "alpha,temperature,seed,teacher_val_accuracy,train_accuracy,val_accuracy,final_loss\n{},{},{},{},{},{},{}\n",
            alpha,
            t,
            seed,
            accuracy(&teacher, val)?,
            accuracy(&net, train_set)?,
            accuracy(&net, val)?,
            loss_history.last().copied().unwrap_or(f64::NAN)
        ),
    )
}

/// Distills one student per `(α, T)` cell from that α's teacher.
pub fn cmd_distill(cfg: &ExperimentConfig) -> Result<CommandOutcome> {
    let layout = Layout::new(&cfg.output_dir);
    let (train_set, val) = load_data(cfg, &layout)?;
    let cells: Vec<(usize, usize)> = (0..cfg.alpha_grid.len())
        .flat_map(|a| (0..cfg.temperature_grid.len()).map(move |t| (a, t)))
        .collect();
    let pool = thread_pool(cfg.jobs)?;
    let results: Vec<Option<CellFailure>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(ai, ti)| {
                let (alpha, t) = (cfg.alpha_grid[ai], cfg.temperature_grid[ti]);
                let dir = layout.student_dir(alpha, t);
                reset_dir(&dir)
                    .and_then(|_| run_student(cfg, &layout, &train_set, &val, ai, ti))
                    .err()
                    .map(|e| record_failure(&dir, student_cell_name(alpha, t), &e))
            })
            .collect()
    });
    let outcome = CommandOutcome {
        failures: results.into_iter().flatten().collect(),
        warnings: Vec::new(),
    };
    write_run_record(cfg, &layout)?;
    Ok(outcome)
}

/// Data, teachers, students, analysis and report in sequence. Failed cells
/// do not stop later stages.
pub fn run_all(cfg: &ExperimentConfig) -> Result<CommandOutcome> {
    let mut outcome = cmd_train_teacher(cfg)?;
    outcome.merge(cmd_distill(cfg)?);
    outcome.merge(super::cmd_analyze(cfg)?);
    let report = super::cmd_report(cfg)?;
    outcome.warnings.extend(report.warnings);
    Ok(outcome)
}
