use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::config::ExperimentConfig;
use super::record::write_run_record;
use super::table::Table;
use super::{fmt_param, CommandOutcome, Layout, METRICS_FILE};
use crate::error::Result;
use crate::geometry::Split;

const MISSING: &str = "MISSING";

type EtaKey = (String, String, String, String);
fn read_metric(path: &Path, column: &str, warnings: &mut Vec<String>, what: &str) -> Option<f64> {
    let value = Table::read(path).and_then(|t| match t.rows().next() {
        Some(row) => row.f64(column),
        None => Err(crate::LabError::Validation("empty metrics table".into())),
    });
    match value {
        Ok(v) => Some(v),
        Err(e) => {
            warnings.push(format!("{what}: {e}"));
            None
        }
    }
}

fn pad(s: &str, width: usize) -> String {
    format!("{s:<width$}")
}

/// Marks every cell equal to the column maximum.
fn best_in_column(column: &[Option<f64>]) -> Vec<bool> {
    let best = column.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    column.iter().map(|v| v.is_some_and(|v| v == best)).collect()
}

fn accuracy_section(
    cfg: &ExperimentConfig,
    layout: &Layout,
    out: &mut String,
    csv: &mut String,
    warnings: &mut Vec<String>,
) {
    let grid: Vec<Vec<Option<f64>>> = cfg
        .alpha_grid
        .iter()
        .map(|&a| {
            cfg.temperature_grid
                .iter()
                .map(|&t| {
                    read_metric(
                        &layout.student_dir(a, t).join(METRICS_FILE),
                        "val_accuracy",
                        warnings,
                        &format!("student alpha={} T={}", fmt_param(a), fmt_param(t)),
                    )
                })
                .collect()
        })
        .collect();
    let marks: Vec<Vec<bool>> = (0..cfg.temperature_grid.len())
        .map(|ti| best_in_column(&grid.iter().map(|row| row[ti]).collect::<Vec<_>>()))
        .collect();

    let _ = writeln!(out, "Student validation accuracy (* = best alpha for that temperature)");
    let mut header = pad("alpha \\ T", 12);
    for &t in &cfg.temperature_grid {
        header.push_str(&pad(&fmt_param(t), 12));
    }
    let _ = writeln!(out, "{}", header.trim_end());
    for (ai, &a) in cfg.alpha_grid.iter().enumerate() {
        let mut line = pad(&fmt_param(a), 12);
        for ti in 0..cfg.temperature_grid.len() {
            let cell = match grid[ai][ti] {
                Some(v) => format!("{v:.4}{}", if marks[ti][ai] { "*" } else { "" }),
                None => MISSING.to_string(),
            };
            line.push_str(&pad(&cell, 12));
            let _ = writeln!(
                csv,
                "{},{},{},{}",
                fmt_param(a),
                fmt_param(cfg.temperature_grid[ti]),
                grid[ai][ti].map_or_else(|| MISSING.to_string(), |v| v.to_string()),
                marks[ti][ai]
            );
        }
        let _ = writeln!(out, "{}", line.trim_end());
    }
    out.push('\n');
}

fn teacher_section(cfg: &ExperimentConfig, layout: &Layout, out: &mut String, warnings: &mut Vec<String>) {
    let _ = writeln!(out, "Teacher validation accuracy");
    for &a in &cfg.alpha_grid {
        let v = read_metric(
            &layout.teacher_dir(a).join(METRICS_FILE),
            "val_accuracy",
            warnings,
            &format!("teacher alpha={}", fmt_param(a)),
        );
        let cell = v.map_or_else(|| MISSING.to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(out, "{}{cell}", pad(&format!("alpha={}", fmt_param(a)), 12));
    }
    out.push('\n');
}

fn eta_section(cfg: &ExperimentConfig, layout: &Layout, out: &mut String, warnings: &mut Vec<String>) {
    let _ = writeln!(out, "Diffusion sign pattern (targets with eta_S1 < 0 and eta_S2 > 0)");
    let _ = writeln!(out, "alpha       split  variant    T1    T2    matching");
    for &a in &cfg.alpha_grid {
        let path = layout.eta_csv(a);
        let table = match Table::read(&path) {
            Ok(t) => t,
            Err(e) => {
                warnings.push(format!("eta alpha={}: {e}", fmt_param(a)));
                let _ = writeln!(out, "{}{MISSING}", pad(&fmt_param(a), 12));
                continue;
            }
        };
        // (split, variant, T1, T2) -> (matching, finite, rows)
        let mut groups: BTreeMap<EtaKey, (usize, usize, usize)> = BTreeMap::new();
        let mut order: Vec<EtaKey> = Vec::new();
        for row in table.rows() {
            let parsed = (|| -> Result<_> {
                Ok((
                    row.get("split")?.to_string(),
                    row.get("variant")?.to_string(),
                    row.get("T1")?.to_string(),
                    row.get("T2")?.to_string(),
                    row.f64("eta_S1")?,
                    row.f64("eta_S2")?,
                ))
            })();
            let (split, variant, t1, t2, s1, s2) = match parsed {
                Ok(p) => p,
                Err(e) => {
                    warnings.push(format!("eta alpha={}: {e}", fmt_param(a)));
                    continue;
                }
            };
            let key = (split, variant, t1, t2);
            if !groups.contains_key(&key) {
                order.push(key.clone());
            }
            let g = groups.entry(key).or_default();
            g.2 += 1;
            if s1.is_finite() && s2.is_finite() {
                g.1 += 1;
                if s1 < 0.0 && s2 > 0.0 {
                    g.0 += 1;
                }
            }
        }
        for key in order {
            let (matching, valid, total) = groups[&key];
            let degenerate = if valid < total {
                format!(" ({} degenerate)", total - valid)
            } else {
                String::new()
            };
            let _ = writeln!(
                out,
                "{}{}{}{}{}{matching}/{valid}{degenerate}",
                pad(&fmt_param(a), 12),
                pad(&key.0, 7),
                pad(&key.1, 11),
                pad(&key.2, 6),
                pad(&key.3, 6)
            );
        }
    }
    out.push('\n');
}

fn smoothness_section(cfg: &ExperimentConfig, layout: &Layout, out: &mut String, warnings: &mut Vec<String>) {
    let _ = writeln!(out, "Average teacher entropy on the training split");
    let table = match Table::read(&layout.smoothness_csv(Split::Train)) {
        Ok(t) => t,
        Err(e) => {
            warnings.push(format!("smoothness: {e}"));
            let _ = writeln!(out, "{MISSING}\n");
            return;
        }
    };
    let temps = &cfg.analysis.smoothness_temperatures;
    let mut header = pad("alpha \\ T", 12);
    for &t in temps {
        header.push_str(&pad(&fmt_param(t), 10));
    }
    let _ = writeln!(out, "{}", header.trim_end());
    for &a in &cfg.alpha_grid {
        let mut line = pad(&fmt_param(a), 12);
        for &t in temps {
            let v = table.rows().find_map(|r| {
                (r.f64("alpha").ok()? == a && r.f64("temperature").ok()? == t)
                    .then(|| r.f64("average_entropy").ok())
                    .flatten()
            });
            let cell = match v {
                Some(v) => format!("{v:.4}"),
                None => {
                    warnings.push(format!("smoothness alpha={} T={}: no row", fmt_param(a), fmt_param(t)));
                    MISSING.to_string()
                }
            };
            line.push_str(&pad(&cell, 10));
        }
        let _ = writeln!(out, "{}", line.trim_end());
    }
    out.push('\n');
}

/// Summarizes a run from its stored tables only. Absent artifacts are
/// printed as `MISSING` and counted as warnings.
pub fn cmd_report(cfg: &ExperimentConfig) -> Result<CommandOutcome> {
    let layout = Layout::new(&cfg.output_dir);
    let mut warnings = Vec::new();
    let mut out = String::new();
    let _ = writeln!(out, "Run {} (seed {})", cfg.hash(), cfg.seed);
    let _ = writeln!(
        out,
        "alpha grid: {}; temperature grid: {}; beta: {}\n",
        cfg.alpha_grid
            .iter()
            .map(|a| fmt_param(*a))
            .collect::<Vec<_>>()
            .join(", "),
        cfg.temperature_grid
            .iter()
            .map(|t| fmt_param(*t))
            .collect::<Vec<_>>()
            .join(", "),
        cfg.beta
    );
    let mut csv = String::from("alpha,temperature,val_accuracy,best\n");
    teacher_section(cfg, &layout, &mut out, &mut warnings);
    accuracy_section(cfg, &layout, &mut out, &mut csv, &mut warnings);
    if cfg.analysis.flags.eta {
        eta_section(cfg, &layout, &mut out, &mut warnings);
    }
    if cfg.analysis.flags.smoothness {
        smoothness_section(cfg, &layout, &mut out, &mut warnings);
    }
    let _ = writeln!(out, "Warnings: {}", warnings.len());
    for w in &warnings {
        let _ = writeln!(out, "  {w}");
    }
    crate::binio::write_file(&layout.report(), out.as_bytes())?;
    crate::binio::write_file(&layout.accuracy_matrix_csv(), csv.as_bytes())?;
    write_run_record(cfg, &layout)?;
    Ok(CommandOutcome {
        failures: Vec::new(),
        warnings,
    })
}
