mod common;

use common::{grad_config, max_rel_error, tiny_model_config, toy_batch, toy_graph, two_models};
use sugar::{EdgeWeights, InvariantGNN};

#[test]
fn joint_objective_gradient_matches_finite_differences() {
    let err = max_rel_error(&two_models(), &grad_config(0.7, 1.3), &toy_batch());
    assert!(err <= 1e-4, "max relative error {err:e}");
}

#[test]
fn risk_only_gradient_matches_finite_differences() {
    let err = max_rel_error(&two_models(), &grad_config(0.0, 0.0), &toy_batch());
    assert!(err <= 1e-4, "max relative error {err:e}");
}

#[test]
fn classifier_loss_gradient_through_soft_mask() {
    let model = InvariantGNN::new(tiny_model_config(), 3).unwrap();
    let graph = toy_graph(6, 3, 3, 1, 9);
    let mut config = grad_config(0.0, 0.0);
    config.n_models = 1;
    config.train_topk = false;
    let batch = vec![graph];
    let err = max_rel_error(std::slice::from_ref(&model), &config, &batch);
    assert!(err <= 1e-4, "max relative error {err:e}");
}

#[test]
fn oracle_mask_keeps_exactly_the_budget() {
    let model = InvariantGNN::new(tiny_model_config(), 3).unwrap();
    let graph = toy_graph(6, 3, 3, 1, 9);
    let mask = common::oracle_mask(&model, &graph, &grad_config(0.0, 0.0));
    let kept = mask.values().iter().filter(|&&x| x > 0.0).count();
    assert_eq!(kept, 4);
    let full = EdgeWeights::ones(graph.num_edges());
    assert_eq!(model.classify(&graph, &full).unwrap().len(), 3);
}
