mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

use difflab::geometry::{
    centroids, cluster_tightness, extract_features, mean_tightness, select_semantic_sets, set_consistency, Split,
};
use difflab::nn::{accuracy, init_network, train, write_checkpoint, Objective, SgdConfig};
use difflab::objectives::{tempered_softmax, DistillConfig, Distillation, SmoothedCrossEntropy, SmoothingConfig};
use difflab::smoothness::{average_entropy, dominance_count, entropy_matched_temperature, soft_output_profile};
use difflab::synth::{class_means, generate, ground_truth_sets, HierarchySpec};
use difflab::{Dataset, Distribution, Features, LabError, Matrix, Network};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sgd(epochs: usize, seed: u64) -> SgdConfig {
    SgdConfig {
        learning_rate: 0.05,
        momentum: 0.9,
        epochs,
        batch_size: 32,
        seed,
        lr_decay_epochs: vec![epochs / 2, 3 * epochs / 4],
        lr_decay_factor: 0.1,
    }
}

fn teacher_for(spec: &HierarchySpec, train_set: &Dataset, alpha: f64, epochs: usize) -> Network {
    let k = spec.num_classes();
    let obj = SmoothedCrossEntropy {
        cfg: SmoothingConfig::new(alpha, k).unwrap(),
    };
    let net = init_network(&[spec.input_dim, 64, 32, k], 7).unwrap();
    train(net, train_set, &obj, &sgd(epochs, 7)).unwrap().net
}

struct Trained {
    train: Dataset,
    val: Dataset,
    ce: Network,
    ls: Network,
}

fn trained() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let spec = HierarchySpec::default();
        let (train_set, val) = generate(&spec).unwrap();
        Trained {
            ce: teacher_for(&spec, &train_set, 0.0, 40),
            ls: teacher_for(&spec, &train_set, 0.1, 40),
            train: train_set,
            val,
        }
    })
}

#[test]
fn separable_blobs_are_fit_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..200 {
        let c = i % 2;
        let center = if c == 0 { [-4.0, -4.0] } else { [4.0, 4.0] };
        let noise = common::gaussian_vec(&mut rng, 2, 0.5);
        rows.push(vec![center[0] + noise[0], center[1] + noise[1]]);
        labels.push(c);
    }
    let data = Dataset::new(Matrix::from_rows(&rows).unwrap(), labels, 2, None).unwrap();
    let obj = SmoothedCrossEntropy {
        cfg: SmoothingConfig::new(0.0, 2).unwrap(),
    };
    let out = train(init_network(&[2, 8, 2], 3).unwrap(), &data, &obj, &sgd(50, 3)).unwrap();
    assert_eq!(accuracy(&out.net, &data).unwrap(), 1.0);
    assert_eq!(out.loss_history.len(), 50);
}

/// Cross entropy that reports NaN once `poison_after` samples have been seen.
struct Poisoned {
    inner: SmoothedCrossEntropy,
    seen: AtomicUsize,
    poison_after: usize,
}

impl Objective<f64> for Poisoned {
    fn loss_and_grad(&self, sample: usize, label: usize, logits: &[f64]) -> difflab::Result<(f64, Vec<f64>)> {
        let (loss, grad) = self.inner.loss_and_grad(sample, label, logits)?;
        if self.seen.fetch_add(1, Ordering::SeqCst) >= self.poison_after {
            return Ok((f64::NAN, grad));
        }
        Ok((loss, grad))
    }
}

#[test]
fn nan_loss_is_reported_with_its_epoch() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 64;
    let data = Dataset::new(
        Matrix::from_vec(n, 6, common::gaussian_vec(&mut rng, n * 6, 1.0)).unwrap(),
        (0..n).map(|i| i % 3).collect(),
        3,
        None,
    )
    .unwrap();
    let obj = Poisoned {
        inner: SmoothedCrossEntropy {
            cfg: SmoothingConfig::new(0.0, 3).unwrap(),
        },
        seen: AtomicUsize::new(0),
        poison_after: 2 * n + 5,
    };
    match train(init_network(&[6, 16, 3], 1).unwrap(), &data, &obj, &sgd(10, 1)) {
        Err(LabError::Divergence { epoch, .. }) => assert_eq!(epoch, 2),
        other => panic!("expected divergence, got {:?}", other.map(|o| o.loss_history)),
    }
}

#[test]
fn hard_label_only_distillation_ignores_the_teacher() {
    let t = trained();
    let k = t.train.num_classes;
    let soft = |net: &Network| -> Vec<Distribution> {
        t.train
            .inputs
            .iter_rows()
            .map(|x| tempered_softmax(&common::forward_logits(net, x), 4.0).unwrap())
            .collect()
    };
    let student = |targets: &[Distribution]| {
        let obj = Distillation {
            teacher: targets,
            cfg: DistillConfig::new(4.0, 0.0).unwrap(),
        };
        let net = init_network(&[t.train.input_dim(), 32, k], 9).unwrap();
        write_checkpoint(&train(net, &t.train, &obj, &sgd(3, 9)).unwrap().net)
    };
    assert_eq!(student(&soft(&t.ce)), student(&soft(&t.ls)));
}

#[test]
fn teachers_generalize() {
    let t = trained();
    for net in [&t.ce, &t.ls] {
        let acc = accuracy(net, &t.val).unwrap();
        assert!(acc > 0.9, "val accuracy {acc}");
    }
}

#[test]
fn label_smoothing_tightens_clusters() {
    let t = trained();
    let tight = |net: &Network| {
        let f = extract_features(net, &t.train, Split::Train, 1.0).unwrap();
        mean_tightness(&cluster_tightness(&f).unwrap()).unwrap()
    };
    let (ce, ls) = (tight(&t.ce), tight(&t.ls));
    assert!(ls < ce, "LS {ls} vs CE {ce}");
}

#[test]
fn plain_teacher_matches_smoothed_entropy_at_higher_temperature() {
    let t = trained();
    let target = average_entropy(&t.ls, &t.train, 1.0).unwrap();
    let t_star = entropy_matched_temperature(&t.ce, &t.train, target, (0.5, 64.0)).unwrap();
    assert!(t_star > 1.0, "T* = {t_star}");
}

#[test]
fn profiles_peak_at_the_class_of_interest_and_flatten_with_temperature() {
    let t = trained();
    for k in 0..t.train.num_classes {
        let p1 = soft_output_profile(&t.ls, &t.train, k, 1.0).unwrap();
        let p2 = soft_output_profile(&t.ls, &t.train, k, 2.0).unwrap();
        assert_eq!(p1.argmax(), k);
        assert!(p2.gap() < p1.gap());
    }
}

#[test]
fn smoothed_teacher_has_dominant_confusions_on_many_classes() {
    let spec = HierarchySpec {
        num_groups: 25,
        classes_per_group: 2,
        input_dim: 32,
        class_spread: 0.3,
        ..HierarchySpec::default()
    };
    let (train_set, _) = generate(&spec).unwrap();
    let net = teacher_for(&spec, &train_set, 0.1, 40);
    let k = spec.num_classes();
    let need = (0.8 * (k - 2) as f64).ceil() as usize;
    for c in 0..k {
        let profile = soft_output_profile(&net, &train_set, c, 1.0).unwrap();
        let count = dominance_count(&profile, 100.0).unwrap();
        assert!(count >= need, "class {c}: {count} < {need}");
    }
}

#[test]
fn generated_means_respect_the_hierarchy() {
    let spec = HierarchySpec::default();
    let means = class_means(&spec).unwrap();
    let (mut intra, mut inter) = (Vec::new(), Vec::new());
    for a in 0..means.len() {
        for b in a + 1..means.len() {
            let d = common::sq_dist(&means[a], &means[b]).sqrt();
            if spec.group_of(a) == spec.group_of(b) {
                intra.push(d);
            } else {
                inter.push(d);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&intra) / mean(&inter) < 0.3);
}

#[test]
fn ground_truth_sets_agree_with_centroid_selection() {
    let spec = HierarchySpec::default();
    let (train_set, _) = generate::<f64>(&spec).unwrap();
    let k = train_set.num_classes;
    let f = Features::new(train_set.inputs.clone(), train_set.labels.clone(), k, Split::Train, 1.0).unwrap();
    let cents = centroids(&f, k).unwrap();
    let others = (k - 1) as f64;
    let mut agreement = Vec::new();
    for pi in 0..k {
        let truth = ground_truth_sets(&train_set, pi).unwrap();
        let frac_1 = truth.similar().len() as f64 / others;
        let frac_2 = truth.dissimilar().len() as f64 / others;
        let chosen = select_semantic_sets(&cents, pi, frac_1, frac_2).unwrap();
        let (s1, s2) = set_consistency(&truth, &chosen).unwrap();
        agreement.push((s1 + s2) / 2.0);
    }
    let mean = agreement.iter().sum::<f64>() / k as f64;
    assert!(mean >= 0.9, "agreement {mean}");
}
