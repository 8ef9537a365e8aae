//! Reference computations written directly from the formulas, sharing no
//! code with the library paths they check.
#![allow(dead_code)]

use difflab::Network;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Plain forward pass reading parameters straight from the layers.
pub fn forward_logits(net: &Network, x: &[f64]) -> Vec<f64> {
    let layers = net.layers();
    let mut a = x.to_vec();
    for (i, layer) in layers.iter().enumerate() {
        let w = &layer.weights;
        let mut z = vec![0.0; w.rows()];
        for (r, zr) in z.iter_mut().enumerate() {
            let mut s = layer.bias[r];
            for c in 0..w.cols() {
                s += w[(r, c)] * a[c];
            }
            *zr = s;
        }
        if i + 1 < layers.len() {
            z.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        a = z;
    }
    a
}

/// Smallest |pre-activation| over the hidden layers, used to steer finite
/// differences away from ReLU kinks.
pub fn min_hidden_margin(net: &Network, x: &[f64]) -> f64 {
    let layers = net.layers();
    let mut a = x.to_vec();
    let mut margin = f64::INFINITY;
    for (i, layer) in layers.iter().enumerate() {
        let w = &layer.weights;
        let z: Vec<f64> = (0..w.rows())
            .map(|r| layer.bias[r] + (0..w.cols()).map(|c| w[(r, c)] * a[c]).sum::<f64>())
            .collect();
        if i + 1 < layers.len() {
            margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
            a = z.iter().map(|v| v.max(0.0)).collect();
        }
    }
    margin
}

fn log_softmax(z: &[f64], t: f64) -> Vec<f64> {
    let scaled: Vec<f64> = z.iter().map(|v| v / t).collect();
    let m = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + scaled.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    scaled.iter().map(|v| v - lse).collect()
}

pub fn softmax(z: &[f64], t: f64) -> Vec<f64> {
    log_softmax(z, t).into_iter().map(f64::exp).collect()
}

/// Cross entropy against `y(1−α) + α/K`.
pub fn smoothed_ce(z: &[f64], label: usize, alpha: f64) -> f64 {
    let k = z.len() as f64;
    let lp = log_softmax(z, 1.0);
    lp.iter()
        .enumerate()
        .map(|(i, l)| {
            let y = if i == label { 1.0 - alpha + alpha / k } else { alpha / k };
            -y * l
        })
        .sum()
}

/// `(1−β)·CE(one-hot, p) + β·T²·CE(q, p(T))`.
pub fn distill_loss(z: &[f64], teacher: &[f64], label: usize, t: f64, beta: f64) -> f64 {
    let soft: f64 = log_softmax(z, t).iter().zip(teacher).map(|(l, q)| -q * l).sum();
    let hard = -log_softmax(z, 1.0)[label];
    (1.0 - beta) * hard + beta * t * t * soft
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn class_rows<'a>(rows: &'a [Vec<f64>], labels: &[usize], k: usize) -> Vec<&'a Vec<f64>> {
    rows.iter()
        .zip(labels)
        .filter(|(_, &l)| l == k)
        .map(|(r, _)| r)
        .collect()
}

pub fn mean_of(rows: &[&Vec<f64>]) -> Vec<f64> {
    let h = rows[0].len();
    let mut c = vec![0.0; h];
    for r in rows {
        for (ci, v) in c.iter_mut().zip(r.iter()) {
            *ci += v;
        }
    }
    c.iter().map(|v| v / rows.len() as f64).collect()
}

/// Squared distance between class `a` and class `b`, either between centroids
/// or averaged over every cross-class pair of samples.
pub fn class_distance(rows: &[Vec<f64>], labels: &[usize], a: usize, b: usize, pairwise: bool) -> f64 {
    let ra = class_rows(rows, labels, a);
    let rb = class_rows(rows, labels, b);
    if pairwise {
        let mut total = 0.0;
        for x in &ra {
            for y in &rb {
                total += sq_dist(x, y);
            }
        }
        total / (ra.len() * rb.len()) as f64
    } else {
        sq_dist(&mean_of(&ra), &mean_of(&rb))
    }
}

/// Fractional diffusion index from raw feature rows at two temperatures.
#[allow(clippy::too_many_arguments)]
pub fn brute_eta(
    rows1: &[Vec<f64>],
    labels1: &[usize],
    rows2: &[Vec<f64>],
    labels2: &[usize],
    pi: usize,
    s1: &[usize],
    s2: &[usize],
    over_similar: bool,
    pairwise: bool,
) -> f64 {
    let all: Vec<usize> = s1.iter().chain(s2).copied().collect();
    let rel = |rows: &[Vec<f64>], labels: &[usize], k: usize| {
        let r: f64 = all.iter().map(|&j| class_distance(rows, labels, pi, j, pairwise)).sum();
        class_distance(rows, labels, pi, k, pairwise) / r
    };
    let set = if over_similar { s1 } else { s2 };
    set.iter()
        .map(|&k| {
            let d1 = rel(rows1, labels1, k);
            let d2 = rel(rows2, labels2, k);
            (d2 - d1) / d1
        })
        .sum::<f64>()
        / set.len() as f64
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v: f64 = rng.sample(rand_distr::StandardNormal);
            v * scale
        })
        .collect()
}

pub fn random_distribution(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

/// Double-double value `hi + lo`, used to take logit differences without
/// cancellation.
#[derive(Debug, Clone, Copy)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

impl Dd {
    pub fn new(v: f64) -> Self {
        Self { hi: v, lo: 0.0 }
    }

    fn renorm(s: f64, e: f64) -> Self {
        let hi = s + e;
        Self { hi, lo: e - (hi - s) }
    }

    pub fn add(self, o: Dd) -> Dd {
        let s = self.hi + o.hi;
        let bb = s - self.hi;
        let e = (self.hi - (s - bb)) + (o.hi - bb);
        Dd::renorm(s, e + self.lo + o.lo)
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(Dd { hi: -o.hi, lo: -o.lo })
    }

    pub fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        Dd::renorm(p, e + self.hi * o.lo + self.lo * o.hi)
    }
}

/// Forward pass in double-double with parameter `index` (weights row-major,
/// then bias, layer by layer) shifted by `delta`.
pub fn forward_logits_dd(net: &Network, x: &[f64], index: usize, delta: f64) -> Vec<Dd> {
    let layers = net.layers();
    let mut a: Vec<Dd> = x.iter().map(|&v| Dd::new(v)).collect();
    let mut offset = 0;
    for (i, layer) in layers.iter().enumerate() {
        let w = &layer.weights;
        let nw = w.rows() * w.cols();
        let param = |flat: usize, v: f64| {
            if flat == index {
                Dd::new(v).add(Dd::new(delta))
            } else {
                Dd::new(v)
            }
        };
        let z: Vec<Dd> = (0..w.rows())
            .map(|r| {
                let mut s = param(offset + nw + r, layer.bias[r]);
                for c in 0..w.cols() {
                    s = s.add(param(offset + r * w.cols() + c, w[(r, c)]).mul(a[c]));
                }
                s
            })
            .collect();
        offset += nw + w.rows();
        a = if i + 1 < layers.len() {
            z.into_iter()
                .map(|v| if v.hi > 0.0 { v } else { Dd::new(0.0) })
                .collect()
        } else {
            z
        };
    }
    a
}

/// `lse(z + dz) − lse(z)` for scaled logits, from `p = softmax(z)`.
fn lse_shift(p: &[f64], dz: &[f64]) -> f64 {
    p.iter().zip(dz).map(|(pk, d)| pk * d.exp_m1()).sum::<f64>().ln_1p()
}

/// `smoothed_ce(z + dz) − smoothed_ce(z)` without cancellation.
pub fn smoothed_ce_change(z: &[f64], dz: &[f64], label: usize, alpha: f64) -> f64 {
    let k = z.len() as f64;
    let linear: f64 = dz
        .iter()
        .enumerate()
        .map(|(i, d)| d * if i == label { 1.0 - alpha + alpha / k } else { alpha / k })
        .sum();
    lse_shift(&softmax(z, 1.0), dz) - linear
}

/// `distill_loss(z + dz) − distill_loss(z)` without cancellation.
pub fn distill_loss_change(z: &[f64], dz: &[f64], teacher: &[f64], label: usize, t: f64, beta: f64) -> f64 {
    let scaled: Vec<f64> = dz.iter().map(|d| d / t).collect();
    let soft = lse_shift(&softmax(z, t), &scaled) - teacher.iter().zip(&scaled).map(|(q, d)| q * d).sum::<f64>();
    let hard = lse_shift(&softmax(z, 1.0), dz) - dz[label];
    (1.0 - beta) * hard + beta * t * t * soft
}
