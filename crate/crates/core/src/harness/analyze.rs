use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::config::{ExperimentConfig, SetSource};
use super::record::write_run_record;
use super::runner::{load_data, load_teacher, thread_pool};
use super::{fmt_param, student_cell_name, CellFailure, CommandOutcome, Layout};
use crate::error::{LabError, Result};
use crate::features::load_features;
use crate::geometry::{
    centroids, class_accuracy, cluster_tightness, diffusion_pair, extract_features, mean_tightness, read_semantic_sets,
    select_semantic_sets, write_diffusion_csv, DiffusionRow, DistanceVariant, SemanticSets, Split,
};
use crate::nn::load_checkpoint;
use crate::projection::{emit_scatter, pca_2d, project, qr_basis, TemplateMode};
use crate::smoothness::{
    average_entropy_from_logits, dataset_logits, dominance_count, soft_output_profile, write_smoothness_csv,
    SmoothnessRow,
};
use crate::synth::ground_truth_sets;
use crate::{Dataset, Features, Network};

const SPLITS: [Split; 2] = [Split::Train, Split::Val];
const VARIANTS: [DistanceVariant; 2] = [DistanceVariant::Centroid, DistanceVariant::Pairwise];

struct StudentArtifacts {
    net: Network,
    train: Features,
    val: Features,
}

impl StudentArtifacts {
    fn split(&self, split: Split) -> &Features {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
        }
    }
}

#[derive(Default)]
struct AlphaAnalysis {
    eta_rows: Option<Vec<DiffusionRow>>,
    smooth_train: Vec<SmoothnessRow>,
    smooth_val: Vec<SmoothnessRow>,
    dominance: String,
    class_accuracy: String,
    tightness: String,
    outcome: CommandOutcome,
}

fn load_student(layout: &Layout, alpha: f64, t: f64) -> Result<StudentArtifacts> {
    let cell = student_cell_name(alpha, t);
    let ckpt = layout.student_checkpoint(alpha, t);
    if !ckpt.exists() {
        return Err(LabError::Dependency(format!(
            "{cell}: student checkpoint {} not found",
            ckpt.display()
        )));
    }
    let net: Network = load_checkpoint(&ckpt)?;
    let h = Some(net.penultimate_dim());
    let train = load_features(layout.student_features(alpha, t, Split::Train), h)?;
    let val = load_features(layout.student_features(alpha, t, Split::Val), h)?;
    Ok(StudentArtifacts { net, train, val })
}

fn semantic_sets(
    cfg: &ExperimentConfig,
    teacher: &Network,
    train: &Dataset,
    outcome: &mut CommandOutcome,
    alpha: f64,
) -> Result<Vec<SemanticSets>> {
    let k = train.num_classes;
    Ok(match &cfg.analysis.sets {
        SetSource::GroundTruth => (0..k)
            .filter_map(|pi| match ground_truth_sets(train, pi) {
                Ok(s) => Some(s),
                Err(e) => {
                    outcome.warnings.push(format!(
                        "alpha={}: no semantic sets for target {pi}: {e}",
                        fmt_param(alpha)
                    ));
                    None
                }
            })
            .collect(),
        SetSource::Centroid {
            similar_frac,
            dissimilar_frac,
        } => {
            let feats = extract_features(teacher, train, Split::Train, 1.0)?;
            let cents = centroids(&feats, k)?;
            (0..k)
                .filter_map(
                    |pi| match select_semantic_sets(&cents, pi, *similar_frac, *dissimilar_frac) {
                        Ok(s) => Some(s),
                        Err(e) => {
                            outcome.warnings.push(format!(
                                "alpha={}: no semantic sets for target {pi}: {e}",
                                fmt_param(alpha)
                            ));
                            None
                        }
                    },
                )
                .collect()
        }
        SetSource::File(path) => {
            let sets = read_semantic_sets(path)?;
            if let Some(bad) = sets
                .iter()
                .find(|s| s.target() >= k || s.all_compared().any(|c| c >= k))
            {
                return Err(LabError::Config(format!(
                    "{}: set for target {} names classes beyond {k}",
                    path.display(),
                    bad.target()
                )));
            }
            sets
        }
    })
}

fn eta_rows(
    cfg: &ExperimentConfig,
    alpha: f64,
    sets: &[SemanticSets],
    students: &[Option<StudentArtifacts>],
    outcome: &mut CommandOutcome,
) -> Option<Vec<DiffusionRow>> {
    let t1 = cfg.analysis.eta_reference;
    let ref_idx = cfg.temperature_grid.iter().position(|&t| t == t1)?;
    let reference = students[ref_idx].as_ref()?;
    let mut rows = Vec::new();
    for s in sets {
        for split in SPLITS {
            for variant in VARIANTS {
                for (ti, &t2) in cfg.temperature_grid.iter().enumerate() {
                    if ti == ref_idx {
                        continue;
                    }
                    let Some(other) = students[ti].as_ref() else { continue };
                    let eta = diffusion_pair(reference.split(split), other.split(split), s, variant);
                    let (eta_s1, eta_s2) = match eta {
                        Ok((a, b)) => (Some(a), Some(b)),
                        Err(e) => {
                            outcome.warnings.push(format!(
                                "alpha={} target={} split={} variant={} T2={}: {e}",
                                fmt_param(alpha),
                                s.target(),
                                split,
                                variant.as_str(),
                                fmt_param(t2)
                            ));
                            (None, None)
                        }
                    };
                    rows.push(DiffusionRow {
                        target: s.target(),
                        split,
                        variant,
                        t1,
                        t2,
                        eta_s1,
                        eta_s2,
                    });
                }
            }
        }
    }
    Some(rows)
}

fn panel(net: &Network, features: &Features, triple: [usize; 3], names: &[String], path: &Path) -> Result<()> {
    let subset = features.restrict_to(&triple);
    let basis = qr_basis(net.final_layer(), triple, TemplateMode::WithBias)?;
    let points = project(&subset, &basis)?;
    let proj = pca_2d(&points, &subset.labels)?;
    emit_scatter(&proj, names, path)?;
    Ok(())
}

fn tightness_of(features: &Features) -> Result<f64> {
    mean_tightness(&cluster_tightness(features)?).ok_or_else(|| LabError::DegenerateData("no populated classes".into()))
}

fn analyze_alpha(cfg: &ExperimentConfig, layout: &Layout, train: &Dataset, val: &Dataset, ai: usize) -> AlphaAnalysis {
    let alpha = cfg.alpha_grid[ai];
    let a = fmt_param(alpha);
    let mut out = AlphaAnalysis::default();
    let teacher = match load_teacher(layout, alpha) {
        Ok(t) => t,
        Err(e) => {
            out.outcome.failures.push(CellFailure {
                cell: format!("analysis alpha={a}"),
                error: e.to_string(),
            });
            return out;
        }
    };
    let students: Vec<Option<StudentArtifacts>> = cfg
        .temperature_grid
        .iter()
        .map(|&t| match load_student(layout, alpha, t) {
            Ok(s) => Some(s),
            Err(e) => {
                out.outcome.failures.push(CellFailure {
                    cell: format!("analysis {}", student_cell_name(alpha, t)),
                    error: e.to_string(),
                });
                None
            }
        })
        .collect();
    let flags = cfg.analysis.flags;
    let guard = |outcome: &mut CommandOutcome, what: &str, r: Result<()>| {
        if let Err(e) = r {
            outcome.warnings.push(format!("alpha={a} {what}: {e}"));
        }
    };

    if flags.eta {
        match semantic_sets(cfg, &teacher, train, &mut out.outcome, alpha) {
            Ok(sets) => {
                out.eta_rows = eta_rows(cfg, alpha, &sets, &students, &mut out.outcome);
                if out.eta_rows.is_none() {
                    out.outcome.failures.push(CellFailure {
                        cell: format!("analysis alpha={a}"),
                        error: format!(
                            "reference student at T={} is unavailable",
                            fmt_param(cfg.analysis.eta_reference)
                        ),
                    });
                }
            }
            Err(e) => out.outcome.failures.push(CellFailure {
                cell: format!("analysis alpha={a}"),
                error: e.to_string(),
            }),
        }
    }

    let teacher_train = extract_features(&teacher, train, Split::Train, 1.0);
    match teacher_train
        .as_ref()
        .map_err(|e| e.to_string())
        .and_then(|f| tightness_of(f).map_err(|e| e.to_string()))
    {
        Ok(v) => {
            let _ = writeln!(out.tightness, "teacher,{a},,{v}");
        }
        Err(e) => out.outcome.warnings.push(format!("alpha={a} teacher tightness: {e}")),
    }
    for (s, &t) in students.iter().zip(&cfg.temperature_grid) {
        if let Some(s) = s {
            match tightness_of(&s.train) {
                Ok(v) => {
                    let _ = writeln!(out.tightness, "student,{a},{},{v}", fmt_param(t));
                }
                Err(e) => out.outcome.warnings.push(format!("alpha={a} T={t} tightness: {e}")),
            }
        }
    }

    if flags.smoothness {
        for (data, rows) in [(train, &mut out.smooth_train), (val, &mut out.smooth_val)] {
            let r = dataset_logits(&teacher, data).and_then(|logits| {
                for &t in &cfg.analysis.smoothness_temperatures {
                    rows.push(SmoothnessRow {
                        temperature: t,
                        alpha,
                        average_entropy: average_entropy_from_logits(&logits, t)?,
                    });
                }
                Ok(())
            });
            guard(&mut out.outcome, "smoothness", r);
        }
    }

    if flags.dominance {
        for &t in &cfg.temperature_grid {
            for k in 0..train.num_classes {
                let r = soft_output_profile(&teacher, train, k, t).and_then(|p| {
                    crate::binio::write_file(&layout.profile_csv(alpha, t, k), p.to_csv().as_bytes())?;
                    let count = dominance_count(&p, cfg.analysis.dominance_factor)?;
                    let (ml, p_ml) = p.largest_incorrect();
                    let _ = writeln!(
                        out.dominance,
                        "{a},{},{k},{ml},{},{p_ml},{},{count}",
                        fmt_param(t),
                        p.mean_probs[k],
                        p.gap()
                    );
                    Ok(())
                });
                guard(&mut out.outcome, &format!("dominance T={t} class={k}"), r);
            }
        }
    }

    if flags.class_accuracy {
        let mut models: Vec<(&str, String, &Network)> = vec![("teacher", String::new(), &teacher)];
        for (s, &t) in students.iter().zip(&cfg.temperature_grid) {
            if let Some(s) = s {
                models.push(("student", fmt_param(t), &s.net));
            }
        }
        for (role, t, net) in models {
            match class_accuracy(net, val) {
                Ok(acc) => {
                    for k in 0..acc.total.len() {
                        let per = acc.per_class[k].map_or_else(|| "NaN".to_string(), |v| v.to_string());
                        let _ = writeln!(
                            out.class_accuracy,
                            "{role},{a},{t},{k},{},{},{per}",
                            acc.correct[k], acc.total[k]
                        );
                    }
                }
                Err(e) => out
                    .outcome
                    .warnings
                    .push(format!("alpha={a} {role} T={t} class accuracy: {e}")),
            }
        }
    }

    if flags.projection {
        let names: Vec<String> = (0..train.num_classes).map(|k| cfg.class_name(k)).collect();
        let split = cfg.analysis.projection_split;
        let teacher_feats = match split {
            Split::Train => teacher_train,
            Split::Val => extract_features(&teacher, val, Split::Val, 1.0),
        };
        for &triple in &cfg.analysis.projection_triples {
            let r = teacher_feats
                .as_ref()
                .map_err(|e| LabError::DegenerateData(e.to_string()))
                .and_then(|f| panel(&teacher, f, triple, &names, &layout.teacher_panel(alpha, triple)));
            guard(&mut out.outcome, &format!("teacher panel {triple:?}"), r);
            for (s, &t) in students.iter().zip(&cfg.temperature_grid) {
                if let Some(s) = s {
                    let r = panel(
                        &s.net,
                        s.split(split),
                        triple,
                        &names,
                        &layout.student_panel(alpha, t, triple),
                    );
                    guard(&mut out.outcome, &format!("student T={t} panel {triple:?}"), r);
                }
            }
        }
    }
    out
}

fn write_csv(path: &Path, header: &str, body: &str) -> Result<()> {
    crate::binio::write_file(path, format!("{header}\n{body}").as_bytes())
}

/// Diffusion, smoothness, dominance, class-accuracy and projection outputs
/// for every α column. Degenerate geometry produces warnings, not failures.
pub fn cmd_analyze(cfg: &ExperimentConfig) -> Result<CommandOutcome> {
    let layout = Layout::new(&cfg.output_dir);
    let (train, val) = load_data(cfg, &layout)?;
    let analysis_dir = layout.analysis_dir();
    if analysis_dir.exists() {
        fs::remove_dir_all(&analysis_dir).map_err(|e| LabError::io(&analysis_dir, e))?;
    }
    fs::create_dir_all(&analysis_dir).map_err(|e| LabError::io(&analysis_dir, e))?;
    let pool = thread_pool(cfg.jobs)?;
    let results: Vec<AlphaAnalysis> = pool.install(|| {
        (0..cfg.alpha_grid.len())
            .into_par_iter()
            .map(|ai| analyze_alpha(cfg, &layout, &train, &val, ai))
            .collect()
    });

    let mut outcome = CommandOutcome::default();
    let (mut smooth_train, mut smooth_val) = (Vec::new(), Vec::new());
    let (mut dominance, mut class_acc, mut tightness) = (String::new(), String::new(), String::new());
    for (r, &alpha) in results.into_iter().zip(&cfg.alpha_grid) {
        if let Some(rows) = &r.eta_rows {
            crate::binio::write_file(&layout.eta_csv(alpha), write_diffusion_csv(rows).as_bytes())?;
        }
        smooth_train.extend(r.smooth_train);
        smooth_val.extend(r.smooth_val);
        dominance.push_str(&r.dominance);
        class_acc.push_str(&r.class_accuracy);
        tightness.push_str(&r.tightness);
        outcome.merge(r.outcome);
    }
    let flags = cfg.analysis.flags;
    if flags.smoothness {
        crate::binio::write_file(
            &layout.smoothness_csv(Split::Train),
            write_smoothness_csv(&smooth_train).as_bytes(),
        )?;
        crate::binio::write_file(
            &layout.smoothness_csv(Split::Val),
            write_smoothness_csv(&smooth_val).as_bytes(),
        )?;
    }
    if flags.dominance {
        write_csv(
            &layout.dominance_csv(),
            "alpha,temperature,class_of_interest,largest_incorrect,p_class_of_interest,p_largest_incorrect,gap,dominance_count",
            &dominance,
        )?;
    }
    if flags.class_accuracy {
        write_csv(
            &layout.class_accuracy_csv(),
            "model,alpha,temperature,class,correct,total,accuracy",
            &class_acc,
        )?;
    }
    write_csv(
        &layout.tightness_csv(),
        "model,alpha,temperature,mean_tightness",
        &tightness,
    )?;
    write_run_record(cfg, &layout)?;
    Ok(outcome)
}
