//! Three-class visualization of penultimate features: an orthonormal basis
//! for the span of three class templates, projection into that 3-D
//! subspace, PCA down to 2-D, and SVG/CSV emission.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::binio::write_file;
use crate::error::{LabError, Result};
use crate::geometry::FeatureMatrix;
use crate::matrix::Matrix;
use crate::nn::DenseLayer;
use crate::scalar::{dot, Scalar};

/// Whether templates (and features) carry the appended bias coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateMode {
    /// `[w_k; b_k]` against `[x; 1]`.
    WithBias,
    WeightsOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionBasis<S> {
    /// `h' × 3`, orthonormal columns.
    pub basis: Matrix<S>,
    pub class_triple: [usize; 3],
    pub mode: TemplateMode,
}

impl<S: Scalar> ProjectionBasis<S> {
    pub fn column(&self, j: usize) -> Vec<S> {
        self.basis.column(j)
    }
}

/// Flips `v` so its first clearly nonzero entry is positive.
fn canonical_sign<S: Scalar>(v: &mut [S]) {
    let tiny = S::epsilon() * S::lit(16.0);
    if let Some(&first) = v.iter().find(|x| x.abs() > tiny) {
        if first < S::zero() {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn norm<S: Scalar>(v: &[S]) -> S {
    dot(v, v).sqrt()
}

/// Gram-Schmidt with one reorthogonalization pass. Fails when a vector is
/// (numerically) in the span of its predecessors.
pub fn orthonormalize<S: Scalar>(vectors: &[Vec<S>]) -> Result<Vec<Vec<S>>> {
    let rel_tol = S::lit(1e-10).max(S::epsilon() * S::lit(1e3));
    let mut basis: Vec<Vec<S>> = Vec::with_capacity(vectors.len());
    for (j, v) in vectors.iter().enumerate() {
        let original = norm(v);
        let mut u = v.clone();
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &u);
                u.iter_mut().zip(q).for_each(|(a, &b)| *a = *a - c * b);
            }
        }
        let n = norm(&u);
        if !(original > S::zero()) || !(n > rel_tol * original) {
            return Err(LabError::DegenerateTemplates(format!(
                "vector {j} is linearly dependent on the previous ones"
            )));
        }
        u.iter_mut().for_each(|a| *a = *a / n);
        basis.push(u);
    }
    Ok(basis)
}

pub fn qr_basis<S: Scalar>(
    final_layer: &DenseLayer<S>,
    classes: [usize; 3],
    mode: TemplateMode,
) -> Result<ProjectionBasis<S>> {
    if classes[0] == classes[1] || classes[0] == classes[2] || classes[1] == classes[2] {
        return Err(LabError::Contract(format!("classes {classes:?} are not distinct")));
    }
    let templates = classes
        .iter()
        .map(|&k| match mode {
            TemplateMode::WithBias => final_layer.template(k),
            TemplateMode::WeightsOnly => final_layer.template(k).map(|mut t| {
                t.pop();
                t
            }),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut columns = orthonormalize(&templates)?;
    columns.iter_mut().for_each(|c| canonical_sign(c));
    let rows = columns[0].len();
    let mut basis = Matrix::zeros(rows, 3);
    for (j, c) in columns.iter().enumerate() {
        for (i, &v) in c.iter().enumerate() {
            basis[(i, j)] = v;
        }
    }
    Ok(ProjectionBasis {
        basis,
        class_triple: classes,
        mode,
    })
}

/// Coordinates of one raw feature vector in the basis.
pub fn project_vector<S: Scalar>(x: &[S], basis: &ProjectionBasis<S>) -> Result<[S; 3]> {
    let expected = match basis.mode {
        TemplateMode::WithBias => basis.basis.rows() - 1,
        TemplateMode::WeightsOnly => basis.basis.rows(),
    };
    if x.len() != expected {
        return Err(LabError::Shape(format!(
            "feature of length {} against a basis expecting {expected}",
            x.len()
        )));
    }
    let mut out = [S::zero(); 3];
    for (j, o) in out.iter_mut().enumerate() {
        let mut acc = S::zero();
        for (i, &xi) in x.iter().enumerate() {
            acc = acc + basis.basis[(i, j)] * xi;
        }
        if basis.mode == TemplateMode::WithBias {
            acc = acc + basis.basis[(expected, j)];
        }
        *o = acc;
    }
    Ok(out)
}

/// `N × 3` matrix whose row `i` is `basisᵀ · x_i`.
pub fn project<S: Scalar>(features: &FeatureMatrix<S>, basis: &ProjectionBasis<S>) -> Result<Matrix<S>> {
    let mut data = Vec::with_capacity(features.len() * 3);
    for row in features.rows.iter_rows() {
        data.extend(project_vector(row, basis)?);
    }
    Matrix::from_vec(features.len(), 3, data)
}

/// Eigen-decomposition of a small symmetric matrix by cyclic Jacobi
/// rotations. Returns eigenvalues in descending order and the matching
/// eigenvectors as columns.
pub fn symmetric_eigen<S: Scalar>(m: &Matrix<S>) -> Result<(Vec<S>, Matrix<S>)> {
    let n = m.rows();
    if m.cols() != n {
        return Err(LabError::Shape(format!(
            "{}x{} matrix is not square",
            m.rows(),
            m.cols()
        )));
    }
    let mut a = m.clone();
    let mut v = Matrix::identity(n);
    let scale = a.as_slice().iter().fold(S::zero(), |acc, x| acc + *x * *x).sqrt();
    for _sweep in 0..100 {
        let mut off = S::zero();
        for p in 0..n {
            for q in p + 1..n {
                off = off + a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= S::epsilon() * S::lit(1e-3) * scale || off == S::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == S::zero() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (S::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + S::one()).sqrt());
                let c = S::one() / (t * t + S::one()).sqrt();
                let s = t * c;
                // A ← Jᵀ A J with J the (p, q) plane rotation
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[(j, j)]
            .partial_cmp(&a[(i, i)])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src);
        canonical_sign(&mut col);
        for (i, x) in col.into_iter().enumerate() {
            vectors[(i, dst)] = x;
        }
    }
    Ok((values, vectors))
}

/// Sample covariance (divisor `N − 1`) of the rows of `points`.
pub fn covariance<S: Scalar>(points: &Matrix<S>) -> Result<(Vec<S>, Matrix<S>)> {
    let n = points.rows();
    if n < 2 {
        return Err(LabError::DegenerateData(format!("need at least 2 points, got {n}")));
    }
    let d = points.cols();
    let count = S::from_usize_lossy(n);
    let mut mean = vec![S::zero(); d];
    for row in points.iter_rows() {
        mean.iter_mut().zip(row).for_each(|(m, &x)| *m = *m + x);
    }
    mean.iter_mut().for_each(|m| *m = *m / count);
    let mut cov = Matrix::zeros(d, d);
    for row in points.iter_rows() {
        for i in 0..d {
            let di = row[i] - mean[i];
            for j in i..d {
                cov[(i, j)] = cov[(i, j)] + di * (row[j] - mean[j]);
            }
        }
    }
    let denom = S::from_usize_lossy(n - 1);
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok((mean, cov))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projected2D<S> {
    /// `N × 2` principal-component scores.
    pub points: Matrix<S>,
    pub labels: Vec<usize>,
    /// Top two eigenvalues of the 3-D covariance, non-increasing.
    pub explained_variance: [S; 2],
    pub components: [[S; 3]; 2],
    pub mean: [S; 3],
}

pub fn pca_2d<S: Scalar>(points3: &Matrix<S>, labels: &[usize]) -> Result<Projected2D<S>> {
    if points3.cols() != 3 {
        return Err(LabError::Shape(format!("expected 3 columns, got {}", points3.cols())));
    }
    if points3.rows() != labels.len() {
        return Err(LabError::Shape(format!(
            "{} points but {} labels",
            points3.rows(),
            labels.len()
        )));
    }
    let (mean, cov) = covariance(points3)?;
    if cov.as_slice().iter().all(|&c| c == S::zero()) {
        return Err(LabError::DegenerateData("all points coincide".into()));
    }
    let (values, vectors) = symmetric_eigen(&cov)?;
    let comp = |j: usize| [vectors[(0, j)], vectors[(1, j)], vectors[(2, j)]];
    let components = [comp(0), comp(1)];
    let mut data = Vec::with_capacity(points3.rows() * 2);
    for row in points3.iter_rows() {
        let centered = [row[0] - mean[0], row[1] - mean[1], row[2] - mean[2]];
        data.push(dot(&centered, &components[0]));
        data.push(dot(&centered, &components[1]));
    }
    Ok(Projected2D {
        points: Matrix::from_vec(points3.rows(), 2, data)?,
        labels: labels.to_vec(),
        explained_variance: [values[0].max(S::zero()), values[1].max(S::zero())],
        components,
        mean: [mean[0], mean[1], mean[2]],
    })
}

const PALETTE: [&str; 10] = [
    "#d62728", "#2ca02c", "#1f77b4", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn class_name(names: &[String], k: usize) -> String {
    names.get(k).cloned().unwrap_or_else(|| format!("class_{k}"))
}

/// Renders the scatter as SVG. One `<circle>` per point; the legend and
/// frame use other elements.
pub fn render_scatter_svg<S: Scalar>(proj: &Projected2D<S>, class_names: &[String]) -> Result<String> {
    if proj.labels.is_empty() {
        return Err(LabError::DegenerateData("nothing to plot".into()));
    }
    let (width, height, margin) = (640.0, 480.0, 56.0);
    let xs: Vec<f64> = proj.points.iter_rows().map(|r| r[0].as_f64()).collect();
    let ys: Vec<f64> = proj.points.iter_rows().map(|r| r[1].as_f64()).collect();
    let bounds = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo > 0.0 {
            (lo, hi)
        } else {
            (lo - 1.0, hi + 1.0)
        }
    };
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&ys);
    let plot_w = width - 2.0 * margin - 120.0;
    let plot_h = height - 2.0 * margin;
    let sx = |x: f64| margin + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| height - margin - (y - y0) / (y1 - y0) * plot_h;

    let mut classes: Vec<usize> = proj.labels.clone();
    classes.sort_unstable();
    classes.dedup();
    let color = |k: usize| PALETTE[classes.binary_search(&k).unwrap_or(0) % PALETTE.len()];

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r##"<g id="axes" stroke="#444" stroke-width="1"><line x1="{m}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{m}" y1="{t}" x2="{m}" y2="{b}"/></g>"##,
        m = margin,
        b = height - margin,
        r = margin + plot_w,
        t = margin
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">PC1 (variance {:.4})</text>"#,
        margin + plot_w / 2.0,
        height - margin / 3.0,
        proj.explained_variance[0].as_f64()
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 {:.1} {:.1})">PC2 (variance {:.4})</text>"#,
        margin / 3.0,
        height / 2.0,
        margin / 3.0,
        height / 2.0,
        proj.explained_variance[1].as_f64()
    );
    let _ = writeln!(svg, r#"<g id="points" fill-opacity="0.7">"#);
    for ((x, y), &k) in xs.iter().zip(&ys).zip(&proj.labels) {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.3}" cy="{:.3}" r="2.5" fill="{}"/>"#,
            sx(*x),
            sy(*y),
            color(k)
        );
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(svg, r#"<g id="legend" font-family="sans-serif" font-size="12">"#);
    for (i, &k) in classes.iter().enumerate() {
        let ly = margin + 18.0 * i as f64;
        let lx = width - margin - 110.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{lx:.1}" y="{:.1}" width="10" height="10" fill="{}"/>"#,
            ly - 9.0,
            color(k)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{ly:.1}">{}</text>"#,
            lx + 16.0,
            xml_escape(&class_name(class_names, k))
        );
    }
    let _ = writeln!(svg, "</g>");
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn render_scatter_csv<S: Scalar>(proj: &Projected2D<S>, class_names: &[String]) -> String {
    let mut out = String::from("x,y,label,class_name\n");
    for (row, &k) in proj.points.iter_rows().zip(&proj.labels) {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            row[0],
            row[1],
            k,
            class_name(class_names, k).replace(',', " ")
        );
    }
    out
}

/// Writes the SVG to `path` and the point table next to it with a `.csv`
/// extension. Returns the CSV path. Nothing is written for empty input.
pub fn emit_scatter<S: Scalar>(
    proj: &Projected2D<S>,
    class_names: &[String],
    path: impl AsRef<Path>,
) -> Result<PathBuf> {
    let path = path.as_ref();
    let svg = render_scatter_svg(proj, class_names)?;
    let csv_path = path.with_extension("csv");
    write_file(path, svg.as_bytes())?;
    write_file(&csv_path, render_scatter_csv(proj, class_names).as_bytes())?;
    Ok(csv_path)
}
