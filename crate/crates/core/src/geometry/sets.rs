//! Semantic class sets: construction by centroid proximity, agreement
//! between two selections, and the plain-text set file.
//!
//! Set file lines look like `target=3; S1=2; S2=0,1,4,5`. Blank lines and
//! lines starting with `#` are ignored.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use super::ClassCentroids;
use crate::error::{LabError, Result};
use crate::scalar::{squared_distance, Scalar};

/// Target class with its similar (`S1`) and dissimilar (`S2`) classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticSets {
    target: usize,
    similar: Vec<usize>,
    dissimilar: Vec<usize>,
}

impl SemanticSets {
    pub fn new(target: usize, similar: Vec<usize>, dissimilar: Vec<usize>) -> Result<Self> {
        let s1: BTreeSet<usize> = similar.into_iter().collect();
        let s2: BTreeSet<usize> = dissimilar.into_iter().collect();
        if s1.is_empty() || s2.is_empty() {
            return Err(LabError::Contract(format!(
                "target {target}: S1 and S2 must both be nonempty (|S1| = {}, |S2| = {})",
                s1.len(),
                s2.len()
            )));
        }
        if s1.contains(&target) || s2.contains(&target) {
            return Err(LabError::Contract(format!(
                "target {target} appears in its own comparison sets"
            )));
        }
        if let Some(k) = s1.intersection(&s2).next() {
            return Err(LabError::Contract(format!(
                "class {k} is in both S1 and S2 of target {target}"
            )));
        }
        Ok(Self {
            target,
            similar: s1.into_iter().collect(),
            dissimilar: s2.into_iter().collect(),
        })
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn similar(&self) -> &[usize] {
        &self.similar
    }

    pub fn dissimilar(&self) -> &[usize] {
        &self.dissimilar
    }

    pub fn contains(&self, k: usize) -> bool {
        self.similar.binary_search(&k).is_ok() || self.dissimilar.binary_search(&k).is_ok()
    }

    /// `S1` followed by `S2`.
    pub fn all_compared(&self) -> impl Iterator<Item = usize> + '_ {
        self.similar.iter().chain(&self.dissimilar).copied()
    }
}

fn band_size(frac: f64, others: usize) -> usize {
    // guard against products like 0.01 * 1000 landing a hair above an integer
    ((frac * others as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Nearest `⌈similar_frac·(K−1)⌉` classes form `S1`, farthest
/// `⌈dissimilar_frac·(K−1)⌉` form `S2`. Ties go to the lower class index.
pub fn select_semantic_sets<S: Scalar>(
    cents: &ClassCentroids<S>,
    pi: usize,
    similar_frac: f64,
    dissimilar_frac: f64,
) -> Result<SemanticSets> {
    for (name, f) in [("similar_frac", similar_frac), ("dissimilar_frac", dissimilar_frac)] {
        if !(f > 0.0 && f < 1.0) {
            return Err(LabError::Contract(format!("{name} must lie in (0, 1), got {f}")));
        }
    }
    let k = cents.num_classes();
    let c_pi = cents.centroid(pi)?;
    let others = k - 1;
    let n_similar = band_size(similar_frac, others);
    let n_dissimilar = band_size(dissimilar_frac, others);
    if n_similar + n_dissimilar > others {
        return Err(LabError::Contract(format!(
            "bands overlap: {n_similar} similar + {n_dissimilar} dissimilar > {others} candidate classes"
        )));
    }
    let mut ranked: Vec<(S, usize)> = (0..k)
        .filter(|&c| c != pi)
        .map(|c| cents.centroid(c).map(|x| (squared_distance(c_pi, x), c)))
        .collect::<Result<_>>()?;
    ranked.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });
    let similar: Vec<usize> = ranked.iter().take(n_similar).map(|e| e.1).collect();
    ranked.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });
    let dissimilar: Vec<usize> = ranked
        .iter()
        .map(|e| e.1)
        .filter(|c| !similar.contains(c))
        .take(n_dissimilar)
        .collect();
    SemanticSets::new(pi, similar, dissimilar)
}

/// `(|S1a ∩ S1b| / |S1a|, |S2a ∩ S2b| / |S2a|)`.
pub fn set_consistency(a: &SemanticSets, b: &SemanticSets) -> Result<(f64, f64)> {
    if a.target != b.target {
        return Err(LabError::Contract(format!(
            "comparing sets for different targets ({} vs {})",
            a.target, b.target
        )));
    }
    let overlap =
        |x: &[usize], y: &[usize]| x.iter().filter(|k| y.binary_search(k).is_ok()).count() as f64 / x.len() as f64;
    Ok((overlap(&a.similar, &b.similar), overlap(&a.dissimilar, &b.dissimilar)))
}

fn parse_ids(field: &str, offset: u64) -> Result<Vec<usize>> {
    field
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>().map_err(|_| LabError::Parse {
                offset,
                msg: format!("invalid class id {s:?}"),
            })
        })
        .collect()
}

pub fn parse_semantic_sets(text: &str) -> Result<Vec<SemanticSets>> {
    let mut out = Vec::new();
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        let line_offset = offset;
        offset += line.len() as u64;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (mut target, mut s1, mut s2) = (None, None, None);
        for part in trimmed.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let Some((key, value)) = part.split_once('=') else {
                return Err(LabError::Parse {
                    offset: line_offset,
                    msg: format!("expected key=value, found {part:?}"),
                });
            };
            match key.trim() {
                "target" => {
                    target = Some(value.trim().parse::<usize>().map_err(|_| LabError::Parse {
                        offset: line_offset,
                        msg: format!("invalid target {value:?}"),
                    })?)
                }
                "S1" => s1 = Some(parse_ids(value, line_offset)?),
                "S2" => s2 = Some(parse_ids(value, line_offset)?),
                other => {
                    return Err(LabError::Parse {
                        offset: line_offset,
                        msg: format!("unknown key {other:?}"),
                    })
                }
            }
        }
        match (target, s1, s2) {
            (Some(t), Some(a), Some(b)) => out.push(SemanticSets::new(t, a, b)?),
            _ => {
                return Err(LabError::Parse {
                    offset: line_offset,
                    msg: "line needs target, S1 and S2".into(),
                })
            }
        }
    }
    Ok(out)
}

pub fn format_semantic_sets(sets: &[SemanticSets]) -> String {
    let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
    let mut out = String::new();
    for s in sets {
        let _ = writeln!(
            out,
            "target={}; S1={}; S2={}",
            s.target,
            join(&s.similar),
            join(&s.dissimilar)
        );
    }
    out
}

pub fn read_semantic_sets(path: impl AsRef<Path>) -> Result<Vec<SemanticSets>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    parse_semantic_sets(&text)
}
