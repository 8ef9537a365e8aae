mod common;

use difflab::geometry::{
    centroids, class_accuracy, diffusion_index, diffusion_index_pairwise, relative_distance_pairwise,
    select_semantic_sets, template_distance, SemanticSets, SetChoice, Split,
};
use difflab::nn::{backward, forward, init_network, logits, predict, Activation, Objective};
use difflab::objectives::{SmoothedCrossEntropy, SmoothingConfig};
use difflab::projection::pca_2d;
use difflab::{Dataset, Features, Layer, Matrix, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn features_from(rows: &[Vec<f64>], labels: &[usize], k: usize, tag: f64) -> Features {
    Features::new(Matrix::from_rows(rows).unwrap(), labels.to_vec(), k, Split::Train, tag).unwrap()
}

#[test]
fn forward_matches_hand_rolled_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..50 {
        let dims = [
            rng.random_range(1..8),
            rng.random_range(1..10),
            rng.random_range(1..10),
            rng.random_range(2..6),
        ];
        let net: Network = init_network(&dims, seed).unwrap();
        let x = common::gaussian_vec(&mut rng, dims[0], 2.0);
        let lib = logits(&net, &x).unwrap();
        let oracle = common::forward_logits(&net, &x);
        for (a, b) in lib.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }
}

#[test]
fn three_layer_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-5;
    for seed in 0..20 {
        let net: Network = init_network(&[4, 7, 6, 5], seed).unwrap();
        let x = loop {
            let x = common::gaussian_vec(&mut rng, 4, 1.0);
            if common::min_hidden_margin(&net, &x) > 1e-2 {
                break x;
            }
        };
        let label = rng.random_range(0..5);
        let obj = SmoothedCrossEntropy {
            cfg: SmoothingConfig::new(0.1, 5).unwrap(),
        };
        let trace = forward(&net, &x).unwrap();
        let (_, d) = obj.loss_and_grad(0, label, trace.logits()).unwrap();
        let analytic: Vec<f64> = backward(&net, &trace, &d).unwrap().iter().copied().collect();
        for (i, &a) in analytic.iter().enumerate() {
            let up = common::forward_logits_dd(&net, &x, i, h);
            let down = common::forward_logits_dd(&net, &x, i, -h);
            let z: Vec<f64> = down.iter().map(|v| v.hi).collect();
            let dz: Vec<f64> = up.iter().zip(&down).map(|(u, d)| u.sub(*d).hi).collect();
            let n = common::smoothed_ce_change(&z, &dz, label, 0.1) / (2.0 * h);
            let scale = a.abs().max(n.abs());
            assert!(scale == 0.0 || (a - n).abs() / scale < 1e-4, "param {i}: {a} vs {n}");
        }
    }
}

#[test]
fn pairwise_relative_distance_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..30 {
        let k = rng.random_range(4..8);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..k {
            let center = common::gaussian_vec(&mut rng, 4, 3.0);
            for _ in 0..rng.random_range(1..12) {
                rows.push(
                    center
                        .iter()
                        .zip(common::gaussian_vec(&mut rng, 4, 1.0))
                        .map(|(a, b)| a + b)
                        .collect(),
                );
                labels.push(c);
            }
        }
        let f = features_from(&rows, &labels, k, 1.0);
        let sets = SemanticSets::new(0, vec![1, 2], (3..k).collect()).unwrap();
        let total: f64 = sets
            .all_compared()
            .map(|c| common::class_distance(&rows, &labels, 0, c, true))
            .sum();
        for c in sets.all_compared() {
            let brute = common::class_distance(&rows, &labels, 0, c, true) / total;
            let lib = relative_distance_pairwise(&f, 0, c, &sets).unwrap();
            assert!((lib - brute).abs() < 1e-10, "{lib} vs {brute}");
        }
    }
}

#[test]
fn pairwise_and_centroid_agree_in_sign_for_tight_clusters() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let k = 6;
    let h = 4;
    for _ in 0..50 {
        let before: Vec<Vec<f64>> = (0..k).map(|_| common::gaussian_vec(&mut rng, h, 10.0)).collect();
        let after: Vec<Vec<f64>> = before
            .iter()
            .map(|c| {
                c.iter()
                    .zip(common::gaussian_vec(&mut rng, h, 4.0))
                    .map(|(a, b)| a + b)
                    .collect()
            })
            .collect();
        let min_sq = |cs: &[Vec<f64>]| {
            let mut m = f64::INFINITY;
            for a in 0..k {
                for b in a + 1..k {
                    m = m.min(common::sq_dist(&cs[a], &cs[b]));
                }
            }
            m
        };
        let mut sample = |cs: &[Vec<f64>], tag: f64| {
            // per-class variance h·σ² capped at 1% of the smallest squared centroid gap
            let sigma = (0.01 * min_sq(cs) / h as f64).sqrt();
            let mut rows = Vec::new();
            let mut labels = Vec::new();
            for (c, center) in cs.iter().enumerate() {
                for _ in 0..10 {
                    rows.push(
                        center
                            .iter()
                            .zip(common::gaussian_vec(&mut rng, h, sigma))
                            .map(|(a, b)| a + b)
                            .collect(),
                    );
                    labels.push(c);
                }
            }
            features_from(&rows, &labels, k, tag)
        };
        let f1 = sample(&before, 1.0);
        let f2 = sample(&after, 4.0);
        let sets = SemanticSets::new(0, vec![1, 2], vec![3, 4, 5]).unwrap();
        for over in [SetChoice::Similar, SetChoice::Dissimilar] {
            let c = diffusion_index(&f1, &f2, &sets, over).unwrap();
            let p = diffusion_index_pairwise(&f1, &f2, &sets, over).unwrap();
            assert_eq!(c.signum(), p.signum(), "centroid {c} vs pairwise {p}");
        }
    }
}

#[test]
fn semantic_bands_for_a_thousand_classes() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let k = 1000;
    let rows: Vec<Vec<f64>> = (0..k).map(|_| common::gaussian_vec(&mut rng, 8, 1.0)).collect();
    let labels: Vec<usize> = (0..k).collect();
    let cents = centroids(&features_from(&rows, &labels, k, 1.0), k).unwrap();
    let sets = select_semantic_sets(&cents, 0, 0.01, 0.90).unwrap();
    assert_eq!(sets.similar().len(), 10);
    assert_eq!(sets.dissimilar().len(), 900);
    let mut d: Vec<(f64, usize)> = (1..k).map(|c| (common::sq_dist(&rows[0], &rows[c]), c)).collect();
    d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut nearest: Vec<usize> = d[..10].iter().map(|e| e.1).collect();
    nearest.sort();
    assert_eq!(sets.similar(), nearest.as_slice());
}

#[test]
fn isotropic_cloud_has_balanced_variances() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let n = 10_000;
    let data = common::gaussian_vec(&mut rng, 3 * n, 1.0);
    let pca = pca_2d(&Matrix::from_vec(n, 3, data).unwrap(), &vec![0; n]).unwrap();
    let [a, b] = pca.explained_variance;
    assert!(a >= b && (a - b) / a < 0.1, "{a} {b}");
}

#[test]
fn centroids_match_two_pass_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let k = 5;
    let rows: Vec<Vec<f64>> = (0..200).map(|_| common::gaussian_vec(&mut rng, 6, 5.0)).collect();
    let labels: Vec<usize> = (0..200).map(|i| (i * 7) % k).collect();
    let cents = centroids(&features_from(&rows, &labels, k, 1.0), k).unwrap();
    for c in 0..k {
        // accumulate back to front to use a different summation order
        let members: Vec<&Vec<f64>> = common::class_rows(&rows, &labels, c).into_iter().rev().collect();
        let expected = common::mean_of(&members);
        for (a, b) in cents.centroid(c).unwrap().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn class_accuracy_matches_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let net: Network = init_network(&[3, 8, 4], 2).unwrap();
    let n = 120;
    let inputs = common::gaussian_vec(&mut rng, 3 * n, 1.0);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
    let data = Dataset::new(Matrix::from_vec(n, 3, inputs).unwrap(), labels.clone(), 4, None).unwrap();
    let acc = class_accuracy(&net, &data).unwrap();
    let mut per_class = Vec::new();
    for c in 0..4 {
        let idx: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        let hits = idx
            .iter()
            .filter(|&&i| {
                let z = common::forward_logits(&net, data.inputs.row(i));
                let best = (0..4).fold(0, |b, j| if z[j] > z[b] { j } else { b });
                best == c
            })
            .count();
        assert_eq!(acc.correct[c], hits);
        assert_eq!(acc.total[c], idx.len());
        per_class.push(hits as f64 / idx.len() as f64);
    }
    let mean = per_class.iter().sum::<f64>() / 4.0;
    assert!((acc.mean - mean).abs() < 1e-15 && (0.0..=1.0).contains(&acc.mean));
}

#[test]
fn template_distance_ranks_like_logits_under_equal_norms() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let (k, h) = (6, 5);
    let mut w = Vec::new();
    for _ in 0..k {
        let row = common::gaussian_vec(&mut rng, h, 1.0);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        w.extend(row.iter().map(|v| v / norm * 2.0));
    }
    let layer = Layer::new(Matrix::from_vec(k, h, w).unwrap(), vec![0.0; k], Activation::Identity).unwrap();
    let hidden = Layer::new(Matrix::identity(h), vec![0.0; h], Activation::Relu).unwrap();
    let net = Network::from_layers(vec![hidden, layer.clone()]).unwrap();
    for _ in 0..100 {
        let x: Vec<f64> = common::gaussian_vec(&mut rng, h, 1.0).iter().map(|v| v.abs()).collect();
        let by_template = (0..k)
            .map(|c| (c, -template_distance(&x, &layer, c).unwrap()))
            .fold((0, f64::NEG_INFINITY), |b, e| if e.1 > b.1 { e } else { b })
            .0;
        assert_eq!(by_template, predict(&net, &x).unwrap());
    }
}
