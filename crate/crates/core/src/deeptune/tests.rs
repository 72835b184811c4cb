use super::*;
use crate::space::{Domain, ParameterDef, Stage, Value};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn space(n: usize) -> ConfigSpace {
    let params = (0..n)
        .map(|i| {
            ParameterDef::new(
                format!("x{i}"),
                Domain::Continuous { lo: -1.0, hi: 1.0 },
                Stage::Run,
                Value::Float(0.0),
                None,
            )
            .unwrap()
        })
        .collect();
    ConfigSpace::new(params, None).unwrap()
}

fn small_arch(dropout: f64) -> Architecture {
    Architecture {
        hidden: vec![6, 5, 4],
        dropout,
        centroids: 3,
        gamma: 0.7,
        learning_rate: 1e-2,
        balance_classes: true,
    }
}

fn random_set(n: usize, width: usize, rng: &mut ChaCha8Rng) -> TrainingSet<f64> {
    let inputs = Array2::from_shape_fn((n, width), |_| rng.gen_range(-1.5..1.5));
    let crashed: Vec<bool> = (0..n).map(|i| inputs[[i, 0]] > 0.5).collect();
    let perf = (0..n)
        .map(|i| (!crashed[i]).then(|| inputs[[i, 1]] * 2.0 - inputs[[i, 2]]))
        .collect();
    TrainingSet::new(inputs, crashed, perf).unwrap()
}

#[test]
fn build_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let m = DeepTuneModel::<f64>::build(&space(10), &mut rng).unwrap();
    assert_eq!(m.input_width(), 10);
    assert_eq!(m.trunk().input_width(), Some(10));
    let Layer::Dense(c) = &m.crash_head().layers()[0] else { panic!() };
    let Layer::Dense(p) = &m.perf_head().layers()[0] else { panic!() };
    assert_eq!((c.inputs(), c.outputs()), (32, 2));
    assert_eq!((p.inputs(), p.outputs()), (32, 1));
    assert_eq!(m.rbf_layers().len(), 3);
    assert_eq!(m.gamma(), 0.1);
    assert!(matches!(
        DeepTuneModel::<f64>::build(&ConfigSpace::new(vec![], None).unwrap(), &mut rng),
        Err(DeepTuneError::EmptySpace)
    ));
}

#[test]
fn predictions_are_in_range_and_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let m = DeepTuneModel::<f64>::build(&space(7), &mut rng).unwrap();
    let x = Array2::from_shape_fn((500, 7), |_| rng.gen_range(-50.0..50.0));
    let a = m.predict_batch(x.view()).unwrap();
    assert_eq!(a, m.predict_batch(x.view()).unwrap());
    for p in a {
        assert!((0.0..=1.0).contains(&p.crash_prob));
        assert!(p.uncertainty > 0.0 && p.uncertainty.is_finite());
    }
    assert!(matches!(m.predict(&[0.0; 3]), Err(DeepTuneError::Shape { expected: 7, got: 3 })));
}

#[test]
fn far_inputs_have_negligible_rbf_activation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut m = DeepTuneModel::<f64>::build(&space(4), &mut rng).unwrap();
    for net in &mut m.rbf {
        let r = DeepTuneModel::rbf_layer_mut(net);
        r.centroids.fill(0.0);
    }
    let x = Array2::from_shape_fn((20, 4), |_| rng.gen_range(-1.0..1.0));
    let mut r = ChaCha8Rng::seed_from_u64(0);
    let (_, cache) = m.trunk.forward(x.view(), &mut r).unwrap();
    let latents = m.latents(&cache);
    let phi = m.rbf_activations(x.view()).unwrap();
    for i in 0..20 {
        for (k, z) in latents.iter().enumerate() {
            let dist = z.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            let gamma = m.gamma();
            for j in 0..32 {
                let expected = (-dist * dist / (2.0 * gamma * gamma)).exp();
                assert!((phi[[i, 32 * k + j]] - expected).abs() < 1e-12);
                if dist >= 10.0 * gamma {
                    assert!(phi[[i, 32 * k + j]] < 1e-6);
                }
            }
        }
    }
}

/// Compare central differences of `objective` against the analytic
/// gradients of the sub-networks listed in `nets`.
fn check_gradients(
    m: &mut DeepTuneModel<f64>,
    set: &TrainingSet<f64>,
    nets: &[usize],
    objective: fn(LossParts) -> f64,
) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let idx: Vec<usize> = (0..set.len()).collect();
    let (_, g) = m.loss_and_gradients(set, &idx, false, &mut rng).unwrap();
    let grads: Vec<&Gradients<f64>> = [&g.trunk, &g.crash_head, &g.perf_head, &g.var_head]
        .into_iter()
        .chain(g.rbf.iter())
        .collect();
    let h = 1e-6;
    let mut checked = 0;
    for &k in nets {
        let flat: Vec<Vec<f64>> = grads[k].flat().into_iter().map(<[f64]>::to_vec).collect();
        for (t, tensor) in flat.iter().enumerate() {
            for e in (0..tensor.len()).step_by(3) {
                let eval = |delta: f64, m: &mut DeepTuneModel<f64>| {
                    m.networks_mut()[k].params_mut()[t].1[e] += delta;
                    let l = objective(m.loss(set).unwrap());
                    m.networks_mut()[k].params_mut()[t].1[e] -= delta;
                    l
                };
                let fd = (eval(h, m) - eval(-h, m)) / (2.0 * h);
                let an = tensor[e];
                let scale = fd.abs().max(an.abs()).max(1e-3);
                assert!((fd - an).abs() / scale < 1e-4, "net {k} tensor {t} elem {e}: fd {fd} vs {an}");
                checked += 1;
            }
        }
    }
    checked
}

/// Heads and centroids are checked against the total loss. The trunk only
/// receives the classification and regression terms (the uncertainty branch
/// reads detached latents), so it is checked with the variance head's weights
/// zeroed and the Chamfer term left out.
#[test]
fn model_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut m = DeepTuneModel::<f64>::new(5, "t".into(), &small_arch(0.0), &mut rng).unwrap();
    let set = random_set(12, 5, &mut rng);
    m.init_centroids(&set, &mut rng).unwrap();
    let others: Vec<usize> = (1..4 + m.rbf.len()).collect();
    let mut checked = check_gradients(&mut m, &set, &others, |l| l.total());

    m.networks_mut()[3].params_mut()[0].1.fill(0.0);
    checked += check_gradients(&mut m, &set, &[0], |l| l.cce + l.reg);
    assert!(checked > 50);
}

/// Held-out accuracy averaged over eight independent datasets and initializations.
#[test]
fn separable_crashes_are_learned() {
    let width = 6;
    let make = |n: usize, rng: &mut ChaCha8Rng| {
        let inputs = Array2::from_shape_fn((n, width), |_| rng.gen_range(-1.7..1.7));
        let crashed: Vec<bool> = (0..n).map(|i| inputs[[i, 0]] > 0.0).collect();
        let perf = (0..n).map(|i| (!crashed[i]).then_some(inputs[[i, 1]])).collect();
        TrainingSet::<f64>::new(inputs, crashed, perf).unwrap()
    };
    let mut accuracies = Vec::new();
    for seed in 0..8 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let train = make(200, &mut rng);
        let test = make(1000, &mut rng);
        let mut m = DeepTuneModel::<f64>::new(width, "t".into(), &Architecture::default(), &mut rng).unwrap();
        m.train_epochs(&train, 100, &mut rng).unwrap();
        let preds = m.predict_batch(test.inputs.view()).unwrap();
        let correct = preds
            .iter()
            .zip(&test.crashed)
            .filter(|(p, c)| (p.crash_prob > 0.5) == **c)
            .count();
        accuracies.push(correct as f64 / test.len() as f64);
    }
    let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
    assert!(mean >= 0.95, "{accuracies:?}");
}

#[test]
fn longer_training_lowers_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let set = random_set(60, 5, &mut rng);
    let mut m = DeepTuneModel::<f64>::new(5, "t".into(), &small_arch(0.0), &mut rng).unwrap();
    m.train_epochs(&set, 1, &mut rng).unwrap();
    let after_one = m.loss(&set).unwrap().total();
    m.train_epochs(&set, 49, &mut rng).unwrap();
    assert!(m.loss(&set).unwrap().total() <= after_one);
}

#[test]
fn crashed_only_set_leaves_perf_head_unsupervised() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let inputs = Array2::from_shape_fn((10, 5), |_| rng.gen_range(-1.0..1.0));
    let set = TrainingSet::<f64>::new(inputs, vec![true; 10], vec![None; 10]).unwrap();
    let mut m = DeepTuneModel::<f64>::new(5, "t".into(), &small_arch(0.0), &mut rng).unwrap();
    let idx: Vec<usize> = (0..10).collect();
    let (parts, g) = m.loss_and_gradients(&set, &idx, false, &mut rng).unwrap();
    assert_eq!(parts.reg, 0.0);
    for t in g.perf_head.flat().into_iter().chain(g.var_head.flat()) {
        assert!(t.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn balanced_crash_loss_weights_classes_by_inverse_frequency() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let inputs = Array2::from_shape_fn((4, 5), |_| rng.gen_range(-1.0..1.0));
    let crashed = vec![true, false, false, false];
    let perf = vec![None, Some(1.0), Some(2.0), Some(4.0)];
    let set = TrainingSet::<f64>::new(inputs, crashed, perf).unwrap();
    let plain_arch = Architecture {
        balance_classes: false,
        ..small_arch(0.0)
    };
    let mut plain = DeepTuneModel::<f64>::new(5, "t".into(), &plain_arch, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let mut balanced = DeepTuneModel::<f64>::new(5, "t".into(), &small_arch(0.0), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let per_sample: Vec<f64> = (0..4)
        .map(|i| plain.loss_and_gradients(&set, &[i], false, &mut rng).unwrap().0.cce)
        .collect();
    // n / (2 n_class): 2 for the lone crash, 2/3 for each run.
    let oracle = (2.0 * per_sample[0] + (2.0 / 3.0) * per_sample[1..].iter().sum::<f64>()) / 4.0;
    let idx = [0, 1, 2, 3];
    let got = balanced.loss_and_gradients(&set, &idx, false, &mut rng).unwrap().0.cce;
    assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
    let unweighted = plain.loss_and_gradients(&set, &idx, false, &mut rng).unwrap().0.cce;
    assert!((unweighted - per_sample.iter().sum::<f64>() / 4.0).abs() < 1e-12);
}

#[test]
fn training_set_labels_must_match() {
    let inputs = Array2::<f64>::zeros((2, 1));
    assert!(TrainingSet::new(inputs.clone(), vec![true, false], vec![Some(1.0), None]).is_err());
    let s = TrainingSet::new(inputs, vec![false, false], vec![Some(1.0), Some(3.0)]).unwrap();
    assert_eq!(s.perf, vec![Some(-1.0), Some(1.0)]);
}

#[test]
fn warm_start_reproduces_predictions() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let sp = space(5);
    let mut m = DeepTuneModel::<f64>::build(&sp, &mut rng).unwrap();
    let set = random_set(40, 5, &mut rng);
    m.train_epochs(&set, 3, &mut rng).unwrap();
    let loaded = DeepTuneModel::<f64>::warm_start(&m.save(), &sp).unwrap();
    assert!(loaded.is_trained());
    let x = Array2::from_shape_fn((50, 5), |_| rng.gen_range(-2.0..2.0));
    assert_eq!(m.predict_batch(x.view()).unwrap(), loaded.predict_batch(x.view()).unwrap());
    assert!(matches!(
        DeepTuneModel::<f64>::warm_start(&m.save(), &space(6)),
        Err(DeepTuneError::LayoutMismatch(_))
    ));
}

#[test]
fn f32_model_trains() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut m = DeepTuneModel::<f32>::new(5, "t".into(), &small_arch(0.1), &mut rng).unwrap();
    let inputs = Array2::from_shape_fn((30, 5), |_| rng.gen_range(-1.0f32..1.0));
    let crashed: Vec<bool> = (0..30).map(|i| inputs[[i, 0]] > 0.0).collect();
    let perf = (0..30).map(|i| (!crashed[i]).then(|| f64::from(inputs[[i, 1]]))).collect();
    let set = TrainingSet::new(inputs, crashed, perf).unwrap();
    m.train(&set, &TrainSchedule::default(), &mut rng).unwrap();
    let p = m.predict(&[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
    assert!((0.0..=1.0).contains(&p.crash_prob));
}

#[test]
fn multi_metric_boundaries() {
    let mut stats = MetricStats::default();
    stats.observe(&[("t".to_string(), 10.0), ("m".to_string(), 300.0)].into());
    stats.observe(&[("t".to_string(), 20.0), ("m".to_string(), 330.0)].into());
    let w: BTreeMap<String, f64> = [("t".to_string(), 1.0), ("m".to_string(), -1.0)].into();
    let best = [("t".to_string(), 20.0), ("m".to_string(), 300.0)].into();
    let worst = [("t".to_string(), 10.0), ("m".to_string(), 330.0)].into();
    assert_eq!(multi_metric_score(&best, &stats, &w), 1.0);
    assert_eq!(multi_metric_score(&worst, &stats, &w), -1.0);
    let mut flat = MetricStats::default();
    flat.observe(&best);
    assert_eq!(multi_metric_score(&best, &flat, &w), 0.0);
}

