use bise::analysis::{evaluate_predictions, sparsity};
use bise::data::{build_synthetic_blobs, inject_bias_label_noise, load_dataset, save_dataset, split};
use bise::engine::{mask_objective, MaskBatch};
use bise::mask::{gate_forward, gate_soft, ste_factor, structural_prune, BooleanMask, GateMode, MaskSet};
use bise::nn::{loss, Mlp, Optimizer, OptimizerConfig};
use bise::objective::{entropy, soft_mutual_information, AuxHead, GroupWeights};
use bise::seed;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng as _;

fn model(s: u64, input: usize, hidden: &[usize], output: usize) -> Mlp {
    let mut rng = seed::stream(s, "prop-model");
    let mut m = Mlp::new(input, hidden, output, &mut rng);
    for layer in m.layers_mut() {
        layer.bias.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
    }
    m
}

fn matrix(s: u64, rows: usize, cols: usize) -> Array2<f64> {
    let mut rng = seed::stream(s, "prop-matrix");
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

fn arch() -> impl Strategy<Value = (usize, Vec<usize>, usize)> {
    (1usize..8, prop::collection::vec(1usize..7, 1..4), 2usize..5)
}

fn mask_for(m: &Mlp, keep_bits: &[bool]) -> BooleanMask {
    let keep: Vec<bool> = (0..m.hidden_count()).map(|i| keep_bits[i % keep_bits.len()]).collect();
    BooleanMask::from_keep(keep, m.hidden_dims()).unwrap()
}

proptest! {
    #[test]
    fn soft_gate_lies_in_unit_interval_and_increases(m in -50.0f64..50.0, d in 1e-3f64..5.0, tau in 1e-3f64..10.0) {
        let a = gate_soft(m, tau).unwrap();
        let b = gate_soft(m + d, tau).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b >= a);
    }

    #[test]
    fn default_threshold_keeps_exactly_the_nonnegative_masks(m in -10.0f64..10.0, h in -5.0f64..5.0, tau in 1e-3f64..10.0) {
        let out = gate_forward(h, m, tau, 0.5).unwrap();
        prop_assert_eq!(out, if m >= 0.0 { h } else { 0.0 });
        prop_assert_eq!(gate_forward(h, m, tau, 0.0).unwrap(), h);
    }

    #[test]
    fn straight_through_factor_matches_the_sigmoid_derivative(m in -5.0f64..5.0, tau in 0.05f64..5.0) {
        let eps = 1e-6;
        let numeric = (gate_soft(m + eps, tau).unwrap() - gate_soft(m - eps, tau).unwrap()) / (2.0 * eps);
        let analytic = ste_factor(m, tau).unwrap();
        prop_assert!((numeric - analytic).abs() <= 1e-6 * (1.0 + analytic.abs()));
        prop_assert!(analytic <= 0.25 / tau + 1e-15);
    }

    #[test]
    fn straight_through_factor_vanishes_far_from_the_threshold(m in 1.0f64..5.0, sign in prop::bool::ANY) {
        // Far from zero relative to a small temperature, σ' is below e^{-|m|/τ}/τ.
        let tau = 0.01;
        let m = if sign { m } else { -m };
        let f = ste_factor(m, tau).unwrap();
        prop_assert!(f <= (-m.abs() / tau).exp() / tau);
        prop_assert!(f < 1e-40);
    }

    #[test]
    fn masked_and_pruned_networks_agree((input, hidden, output) in arch(), bits in prop::collection::vec(any::<bool>(), 1..20), s in any::<u64>()) {
        let m = model(s, input, &hidden, output);
        let mask = mask_for(&m, &bits);
        let x = matrix(s, 5, input);
        let masked = m.forward(x.view(), Some(&mask.gates())).unwrap().logits;
        let pruned = structural_prune(&m, &mask).unwrap();
        let direct = pruned.model.forward(x.view(), None).unwrap().logits;
        let worst = (&masked - &direct).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        prop_assert!(worst <= 1e-12, "max deviation {worst}");
        let emptied: Vec<usize> = mask.kept_per_layer().iter().enumerate().filter(|(_, &k)| k == 0).map(|(i, _)| i).collect();
        prop_assert_eq!(pruned.degenerate_layers, emptied);
    }

    #[test]
    fn sparsity_accounting_matches_the_pruned_network((input, hidden, output) in arch(), bits in prop::collection::vec(any::<bool>(), 1..20), s in any::<u64>()) {
        let m = model(s, input, &hidden, output);
        let mask = mask_for(&m, &bits);
        let report = sparsity(&m, &mask).unwrap();
        let pruned = structural_prune(&m, &mask).unwrap().model;
        let macs: u64 = pruned.layers().iter().map(|l| l.weight.len() as u64).sum();
        prop_assert_eq!(report.flops, macs);
        prop_assert_eq!(report.params_removed, m.param_count() - pruned.param_count());
        let expected = 100.0 * report.params_removed as f64 / m.param_count() as f64;
        prop_assert!((report.sparsity_percent - expected).abs() < 1e-12);
        let dense = sparsity(&m, &BooleanMask::all_keep(m.hidden_dims())).unwrap();
        prop_assert_eq!(dense.params_removed, 0);
        prop_assert!(report.flops <= dense.flops);
    }

    #[test]
    fn softmax_rows_are_distributions(rows in prop::collection::vec(prop::collection::vec(-700.0f64..700.0, 3), 1..6)) {
        let x = Array2::from_shape_vec((rows.len(), 3), rows.concat()).unwrap();
        let p = loss::softmax(x.view());
        for r in p.rows() {
            prop_assert!(r.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!((r.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mutual_information_is_bounded_by_the_marginal_entropies(
        k in 2usize..5,
        raw in prop::collection::vec((prop::collection::vec(0.01f64..1.0, 4), 0usize..4, any::<bool>()), 1..30),
    ) {
        let n = raw.len();
        let mut probs = Array2::zeros((n, k));
        let mut bias = Vec::with_capacity(n);
        let mut select = Vec::with_capacity(n);
        for (i, (w, b, keep)) in raw.iter().enumerate() {
            let total: f64 = w[..k].iter().sum();
            for j in 0..k {
                probs[[i, j]] = w[j] / total;
            }
            bias.push(b % k);
            select.push(*keep);
        }
        let out = soft_mutual_information(probs.view(), &bias, Some(&select)).unwrap();
        let used: Vec<usize> = (0..n).filter(|&i| select[i]).collect();
        prop_assert_eq!(out.samples, used.len());
        prop_assert!(out.value >= -1e-12);
        if used.is_empty() {
            prop_assert_eq!(out.value, 0.0);
        } else {
            let mut row = vec![0.0; k];
            let mut col = vec![0.0; k];
            for &i in &used {
                col[bias[i]] += 1.0 / used.len() as f64;
                for j in 0..k {
                    row[j] += probs[[i, j]] / used.len() as f64;
                }
            }
            prop_assert!(out.value <= entropy(&row).min(entropy(&col)) + 1e-9);
            prop_assert!(out.value <= (k as f64).ln() + 1e-9);
        }
        for i in (0..n).filter(|&i| !select[i]) {
            prop_assert!(out.grad.row(i).iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn empirical_weights_sum_to_the_sample_count(rho in 0.2f64..0.98, classes in 2usize..6, n in 20usize..80, s in 0u64..1000) {
        let ds = build_synthetic_blobs(classes, n, 2 * classes + 2, rho, 1.0, s).unwrap();
        let frac = ds.aligned_fraction()[0];
        prop_assume!(frac > 0.0 && frac < 1.0);
        let r = GroupWeights::empirical(&ds).per_sample(&ds).unwrap();
        let sum: f64 = r.iter().sum();
        prop_assert!((sum - ds.len() as f64).abs() <= 1e-9 * ds.len() as f64);
        let aligned: f64 = (0..ds.len()).filter(|&i| ds.is_aligned(0, i)).map(|i| r[i]).sum();
        // Aligned samples carry 1/C of the total mass.
        prop_assert!((aligned - ds.len() as f64 / classes as f64).abs() <= 1e-9 * ds.len() as f64);
    }

    #[test]
    fn evaluation_ignores_sample_order(s in 0u64..1000, shift in 0usize..5) {
        let ds = build_synthetic_blobs(4, 15, 10, 0.7, 1.0, s).unwrap();
        let n = ds.len();
        let pred: Vec<usize> = (0..n).map(|i| (ds.labels()[i] + usize::from(i % (shift + 2) == 0)) % 4).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.reverse();
        perm.rotate_left(shift);
        let permuted = ds.subset(&perm);
        let ppred: Vec<usize> = perm.iter().map(|&i| pred[i]).collect();
        prop_assert_eq!(evaluate_predictions(&ds, &pred).unwrap(), evaluate_predictions(&permuted, &ppred).unwrap());
    }

    #[test]
    fn blob_datasets_keep_their_invariants(classes in 2usize..6, n in 5usize..40, rho in 0.0f64..=1.0, p in 0.0f64..=1.0, s in 0u64..1000) {
        let ds = build_synthetic_blobs(classes, n, 2 * classes, rho, 1.0, s).unwrap();
        prop_assert_eq!(ds.len(), classes * n);
        for c in 0..classes {
            prop_assert_eq!(ds.labels().iter().filter(|&&y| y == c).count(), n);
        }
        prop_assert_eq!(ds.group_sizes().iter().sum::<usize>(), ds.len());
        prop_assert!(ds.bias(0).iter().all(|&b| b < ds.num_bias()));
        if rho == 1.0 {
            prop_assert_eq!(ds.aligned_fraction()[0], 1.0);
        }

        let noisy = inject_bias_label_noise(&ds, p, s).unwrap();
        let changed = (0..ds.len()).filter(|&i| noisy.bias(0)[i] != ds.bias(0)[i]).count();
        prop_assert_eq!(changed, (p * ds.len() as f64).round() as usize);
        prop_assert_eq!(noisy.labels(), ds.labels());
        prop_assert_eq!(noisy.batch(&[0]), ds.batch(&[0]));

        let (a, b, c) = split(&ds, [0.6, 0.2, 0.2], s).unwrap();
        prop_assert_eq!(a.len() + b.len() + c.len(), ds.len());
    }

    #[test]
    fn optimizer_updates_are_deterministic(
        adam in any::<bool>(),
        grads in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 6), 1..6),
    ) {
        let config = if adam { OptimizerConfig::adam(1e-2, 1e-4) } else { OptimizerConfig::sgd(0.1, 0.9, 5e-4) };
        let run = |opt: &mut Optimizer| {
            let mut p = vec![0.5, -0.25, 1.0, 0.0, 2.0, -1.0];
            for g in &grads {
                opt.step(&mut [&mut p[..]], &[&g[..]]).unwrap();
            }
            p
        };
        let mut opt = Optimizer::new(config);
        let first = run(&mut opt);
        prop_assert_eq!(opt.steps(), grads.len() as u64);
        prop_assert_eq!(&first, &run(&mut Optimizer::new(config)));
        opt.reset();
        prop_assert_eq!(first, run(&mut opt));
    }

    #[test]
    fn boolean_masks_round_trip_through_csv((input, hidden, output) in arch(), bits in prop::collection::vec(any::<bool>(), 1..20)) {
        let m = model(0, input, &hidden, output);
        let mask = mask_for(&m, &bits);
        prop_assert_eq!(BooleanMask::from_csv(&mask.to_csv()).unwrap().keep, mask.keep);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn soft_gate_objective_gradient_matches_finite_differences(
        (input, hidden) in (2usize..6, prop::collection::vec(2usize..5, 1..3)),
        axes in 1usize..3,
        tau in 0.3f64..0.95,
        gamma in 0.0f64..3.0,
        s in any::<u64>(),
    ) {
        let classes = 3;
        let mut rng = seed::stream(s, "prop-fd");
        let m = model(s, input, &hidden, classes);
        let mut masks = MaskSet::for_model(&m, tau, 1, 1e-3).unwrap();
        masks.anneal();
        for v in masks.values_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let heads: Vec<AuxHead> = (0..axes)
            .map(|_| AuxHead::new(m.bottleneck_dim(), classes, OptimizerConfig::sgd(0.1, 0.9, 0.0), &mut rng))
            .collect();
        let n = 6;
        let x = matrix(s, n, input);
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..3.0)).collect();
        let bias: Vec<Vec<usize>> = (0..axes).map(|_| (0..n).map(|_| rng.gen_range(0..classes)).collect()).collect();
        let select: Vec<Vec<bool>> = (0..axes).map(|_| (0..n).map(|_| rng.gen_bool(0.7)).collect()).collect();
        let batch = MaskBatch { start: 0, input: x.view(), labels: &labels, weights: &weights, bias: &bias, select: Some(&select) };
        let analytic = mask_objective(&m, &masks, GateMode::Soft, &heads, &batch, gamma).unwrap().grad_m;
        let h = 1e-6;
        for i in 0..masks.len() {
            let orig = masks.values()[i];
            masks.values_mut()[i] = orig + h;
            let up = mask_objective(&m, &masks, GateMode::Soft, &heads, &batch, gamma).unwrap().objective.value;
            masks.values_mut()[i] = orig - h;
            let down = mask_objective(&m, &masks, GateMode::Soft, &heads, &batch, gamma).unwrap().objective.value;
            masks.values_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            prop_assert!((numeric - analytic[i]).abs() <= 1e-5 * (1.0 + numeric.abs()), "gate {i}: {numeric} vs {}", analytic[i]);
        }
    }

    #[test]
    fn anneal_schedule_stops_after_the_predicted_count(kappa in 0.05f64..0.95, tau_min in 1e-4f64..0.9) {
        let m = model(0, 3, &[2], 2);
        let mut masks = MaskSet::for_model(&m, kappa, 1, tau_min).unwrap();
        let expected = masks.scheduled_anneals();
        let mut n = 0;
        while !masks.anneal() {
            n += 1;
            prop_assert!(masks.tau() >= tau_min);
        }
        prop_assert_eq!(n + 1, expected);
        prop_assert!(masks.tau() < tau_min);
        let closed = (tau_min.ln() / kappa.ln()).floor() as usize + 1;
        prop_assert!(expected.abs_diff(closed) <= 1);
    }

    #[test]
    fn dataset_cache_round_trips(classes in 2usize..5, n in 1usize..20, rho in 0.0f64..=1.0, s in 0u64..100) {
        let ds = build_synthetic_blobs(classes, n, 2 * classes + 1, rho, 0.5, s).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.bised");
        save_dataset(&path, &ds).unwrap();
        prop_assert_eq!(load_dataset(&path).unwrap(), ds);
    }
}
