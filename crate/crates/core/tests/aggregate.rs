use sugar::aggregate::{
    aggregate_metric, ens_predict, hard_vote, merge_average, merge_max, select_greedy, select_uniform, soft_vote,
    AggregationConfig, AggregationMode, EnsCache, Merge, Vote,
};
use sugar::synthgen::{gen_dataset, DatasetSplit, SynthConfig, SynthMode};
use sugar::trainer::{train_sugar, validate, Metric, TrainConfig};
use sugar::{EdgeWeights, InvariantGNN, ModelConfig, SugarError};

fn data() -> DatasetSplit {
    gen_dataset(&SynthConfig {
        mode: SynthMode::SUMotif,
        train_per_class: 12,
        eval_per_class: 6,
        feature_dim: 3,
        base_size_range: (5, 8),
        seed: 21,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn models(data: &DatasetSplit) -> Vec<InvariantGNN> {
    let cfg = TrainConfig {
        n_models: 4,
        epochs: 3,
        batch_size: 12,
        lr: 1e-2,
        model: ModelConfig {
            num_layers: 2,
            hidden_dim: 6,
            feature_dim: 3,
            ..ModelConfig::default()
        },
        diversity_probe: 12,
        ..TrainConfig::default()
    };
    train_sugar(&cfg, data, 3).unwrap().models
}

#[test]
fn greedy_admits_best_single_first_and_never_ends_below_it() {
    let d = data();
    let ms = models(&d);
    for mode in [AggregationMode::Ens, AggregationMode::Wa] {
        let cfg = AggregationConfig {
            mode,
            ..AggregationConfig::default()
        };
        let sel = select_greedy(&ms, &d.val, &cfg).unwrap();
        assert_eq!(sel.trace.len(), ms.len());
        let singles: Vec<f64> = (0..ms.len())
            .map(|i| validate(&ms[i], &d.val, Some(cfg.k_ratio), Metric::Accuracy).unwrap())
            .collect();
        let best = singles.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let first = sel.trace[0].candidate;
        assert!(sel.trace[0].admitted);
        assert_eq!(sel.chosen_indices[0], first);
        let metric = sel.metric.unwrap();
        assert!(metric >= best);
        assert_eq!(
            metric,
            aggregate_metric(&ms, &sel.chosen_indices, &d.val, &cfg).unwrap()
        );
        for w in sel.trace.windows(2) {
            assert!(w[0].candidate_metric >= w[1].candidate_metric);
        }
    }
}

#[test]
fn cached_predictions_match_direct_ones() {
    let d = data();
    let ms = models(&d);
    let cache = EnsCache::new(&ms, &d.test).unwrap();
    for merge in [Merge::Average, Merge::Max] {
        for vote in [Vote::Soft, Vote::Hard] {
            let cfg = AggregationConfig {
                merge,
                vote,
                k_ratio: 0.4,
                ..AggregationConfig::default()
            };
            let subset = [2, 0];
            let cached = cache.predict(&subset, &cfg).unwrap();
            let members = [&ms[2], &ms[0]];
            for (p, g) in cached.iter().zip(&d.test) {
                assert_eq!(p, &ens_predict(g, &members, &cfg).unwrap());
            }
        }
    }
}

#[test]
fn merges_are_elementwise() {
    let a = EdgeWeights::new(vec![0.2, 0.9, 0.5]).unwrap();
    let b = EdgeWeights::new(vec![0.6, 0.1, 0.5]).unwrap();
    let avg = merge_average(&[a.clone(), b.clone()]).unwrap();
    for (x, y) in avg.values().iter().zip([0.4, 0.5, 0.5]) {
        assert!((x - y).abs() < 1e-15);
    }
    assert_eq!(merge_max(&[a.clone(), b]).unwrap().values(), &[0.6, 0.9, 0.5]);
    let short = EdgeWeights::new(vec![0.1]).unwrap();
    assert!(matches!(
        merge_average(&[a, short]),
        Err(SugarError::MisalignedWeights { .. })
    ));
    assert!(merge_max(&[]).is_err());
}

#[test]
fn hard_vote_breaks_ties_by_mean_probability() {
    let probs = vec![vec![0.6, 0.4, 0.0], vec![0.1, 0.9, 0.0]];
    assert_eq!(hard_vote(&probs).unwrap(), 1);
    assert_eq!(soft_vote(&probs).unwrap(), 1);
    let probs = vec![vec![0.5, 0.3, 0.2], vec![0.4, 0.0, 0.6], vec![0.45, 0.1, 0.45]];
    assert_eq!(hard_vote(&probs).unwrap(), 0);
    assert!(soft_vote(&[]).is_err());
}

#[test]
fn uniform_selection_takes_everything() {
    assert_eq!(select_uniform(4).unwrap().chosen_indices, vec![0, 1, 2, 3]);
    assert!(select_uniform(0).is_err());
    let d = data();
    assert!(select_greedy(&[], &d.val, &AggregationConfig::default()).is_err());
}
