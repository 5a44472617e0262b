mod common;

use common::tiny_model_config;
use sugar::harness::erm_config;
use sugar::objective::cross_entropy_with_grad;
use sugar::synthgen::{gen_dataset, DatasetSplit, SynthConfig, SynthMode};
use sugar::tensor::{Mat, Tape};
use sugar::trainer::{step_gradients, train_sugar, TrainConfig, TrainingLog};
use sugar::{Graph, InvariantGNN, SugarError};

fn small_data() -> DatasetSplit {
    gen_dataset(&SynthConfig {
        mode: SynthMode::SPMotif,
        bias: 0.6,
        train_per_class: 8,
        eval_per_class: 4,
        feature_dim: 3,
        base_size_range: (5, 8),
        seed: 9,
    })
    .unwrap()
}

fn small_config() -> TrainConfig {
    TrainConfig {
        n_models: 3,
        epochs: 3,
        batch_size: 8,
        lr: 5e-3,
        model: tiny_model_config(),
        diversity_probe: 16,
        ..TrainConfig::default()
    }
}

fn traces_close(a: &TrainingLog, b: &TrainingLog, tol: f64) -> bool {
    let close = |x: f64, y: f64| (x - y).abs() <= tol * x.abs().max(y.abs()).max(1e-300);
    a.steps.len() == b.steps.len()
        && a.steps.iter().zip(&b.steps).all(|(s, t)| {
            close(s.total, t.total)
                && s.risk.iter().zip(&t.risk).all(|(x, y)| close(*x, *y))
                && s.contrastive.iter().zip(&t.contrastive).all(|(x, y)| close(*x, *y))
        })
}

#[test]
fn fixed_seed_runs_reproduce() {
    let data = small_data();
    let cfg = small_config();
    let a = train_sugar(&cfg, &data, 4).unwrap();
    let b = train_sugar(&cfg, &data, 4).unwrap();
    assert!(traces_close(&a.log, &b.log, 1e-6));
    assert_eq!(a.log, b.log);
    assert_eq!(a.best_val, b.best_val);
    for (x, y) in a.models.iter().zip(&b.models) {
        assert_eq!(x.params(), y.params());
    }
    let c = train_sugar(&cfg, &data, 5).unwrap();
    assert!(!traces_close(&a.log, &c.log, 1e-6));
}

#[test]
fn log_has_one_record_per_step_and_epoch() {
    let data = small_data();
    let cfg = small_config();
    let out = train_sugar(&cfg, &data, 1).unwrap();
    assert_eq!(out.log.steps.len(), cfg.epochs * 3);
    assert_eq!(out.log.epochs.len(), cfg.epochs);
    for s in &out.log.steps {
        assert_eq!(s.risk.len(), 3);
        assert!(s.diversity.is_some());
    }
    for (i, &v) in out.best_val.iter().enumerate() {
        let max = out
            .log
            .epochs
            .iter()
            .map(|e| e.val_metric[i])
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(v, max);
        assert_eq!(out.log.epochs[out.best_epochs[i]].val_metric[i], v);
    }
}

/// Plain full-batch ERM with its own Adam, written against the tape API.
fn reference_erm(config: &TrainConfig, train: &[Graph], seed: u64) -> Vec<f64> {
    let mut model = InvariantGNN::new(config.model.clone(), seed).unwrap();
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut m: Vec<Vec<f64>> = model
        .params()
        .tensors()
        .iter()
        .map(|t| vec![0.0; t.data.len()])
        .collect();
    let mut v = m.clone();
    let mut risks = Vec::new();
    for t in 1..=config.epochs {
        let mut grads = model.params().zeros_like();
        let mut risk = 0.0;
        for g in train {
            let mut tape = Tape::new(model.params().tensors());
            let ones = tape.constant(Mat::from_vec(g.num_edges(), 1, vec![1.0; g.num_edges()]));
            let out = model.classify_on_tape(&mut tape, g, ones, None);
            let (l, dl) = cross_entropy_with_grad(&tape.value(out.logits).data, g.label());
            risk += l / train.len() as f64;
            let seed_grad = Mat::from_vec(1, dl.len(), dl.iter().map(|x| x / train.len() as f64).collect());
            tape.backward(&[(out.logits, &seed_grad)], &mut grads);
        }
        risks.push(risk);
        for (p, param) in model.params_mut().tensors_mut().iter_mut().enumerate() {
            for k in 0..param.data.len() {
                let gk = grads[p].data[k];
                m[p][k] = b1 * m[p][k] + (1.0 - b1) * gk;
                v[p][k] = b2 * v[p][k] + (1.0 - b2) * gk * gk;
                let mh = m[p][k] / (1.0 - b1.powi(t as i32));
                let vh = v[p][k] / (1.0 - b2.powi(t as i32));
                param.data[k] -= config.lr * mh / (vh.sqrt() + eps);
            }
        }
    }
    risks
}

#[test]
fn erm_mode_matches_reference_loop() {
    let data = small_data();
    let mut cfg = erm_config(&small_config());
    cfg.epochs = 6;
    cfg.batch_size = data.train.len();
    let out = train_sugar(&cfg, &data, 13).unwrap();
    let reference = reference_erm(&cfg, &data.train, 13);
    assert_eq!(out.log.steps.len(), reference.len());
    for (s, r) in out.log.steps.iter().zip(&reference) {
        assert!((s.risk[0] - r).abs() <= 1e-9 * r.abs(), "{} vs {r}", s.risk[0]);
        assert_eq!(s.contrastive, vec![0.0]);
        assert_eq!(s.diversity, None);
        assert!((s.total - s.risk[0]).abs() < 1e-15);
    }
}

#[test]
fn empty_batch_and_bad_configs_are_errors() {
    let models = vec![InvariantGNN::new(tiny_model_config(), 0).unwrap()];
    let cfg = small_config();
    assert!(matches!(
        step_gradients(&models, &cfg, &[], 0, 0, 0),
        Err(SugarError::EmptyBatch)
    ));
    let data = small_data();
    for bad in [
        TrainConfig {
            n_models: 0,
            ..small_config()
        },
        TrainConfig {
            lr: 0.0,
            ..small_config()
        },
        TrainConfig {
            s_c: 1.5,
            ..small_config()
        },
    ] {
        assert!(train_sugar(&bad, &data, 0).unwrap_err().is_config_error());
    }
    let mut wrong_dim = small_config();
    wrong_dim.model.feature_dim = 4;
    assert!(matches!(
        train_sugar(&wrong_dim, &data, 0),
        Err(SugarError::FeatureDimMismatch { .. })
    ));
}
