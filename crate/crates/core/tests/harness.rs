use std::collections::HashMap;

use proptest::prelude::*;
use sugar::harness::{
    assemble_report, conditional_mi, metrics_table, render_dot, run_experiment, DataSource, DiscreteJoint,
    ExperimentConfig, SeedResult, VizInput, MAX_PENWIDTH, MIN_PENWIDTH, ROW_ENS, ROW_ERM,
};
use sugar::synthgen::{gen_dataset, SynthConfig, SynthMode};
use sugar::trainer::{Metric, TrainConfig};
use sugar::{EdgeWeights, ModelConfig, SubgraphSelection};

fn seed_result(seed: u64, base: f64, with_erm: bool) -> SeedResult {
    SeedResult {
        seed,
        erm: with_erm.then_some(base - 0.1),
        best_single: base,
        mean_single: base - 0.05,
        single: vec![base, base - 0.1],
        ens: base + 0.1,
        ens_chosen: vec![0, 1],
        wa: base + 0.05,
        wa_chosen: vec![0],
        ens_jaccard: None,
        single_jaccard: None,
        final_diversity: 0.25,
        ablations: vec![("SU-A".into(), base + 0.1), ("SU-None".into(), base)],
    }
}

#[test]
fn metrics_table_matches_golden() {
    let a = assemble_report(
        "spmotif-0.9",
        Metric::Accuracy,
        vec![seed_result(1, 0.5, true), seed_result(2, 0.6, true)],
    );
    let mut b = assemble_report("sumotif-0.9", Metric::Accuracy, vec![seed_result(1, 0.4, false)]);
    b.rows.retain(|r| r.method != "SU-None");
    let table = metrics_table(&[a, b]);
    let golden = include_str!("fixtures/metrics_table.md");
    assert_eq!(table, golden);
}

#[test]
fn report_rows_use_population_std() {
    let r = assemble_report(
        "x",
        Metric::Accuracy,
        vec![seed_result(1, 0.5, true), seed_result(2, 0.7, true)],
    );
    let ens = r.row(ROW_ENS).unwrap();
    assert_eq!(ens.values.len(), 2);
    assert!((ens.values[0] - 0.6).abs() < 1e-12 && (ens.values[1] - 0.8).abs() < 1e-12);
    assert!((ens.mean - 0.7).abs() < 1e-12);
    assert!((ens.std - 0.1).abs() < 1e-12);
    let single = assemble_report("y", Metric::Accuracy, vec![seed_result(1, 0.5, false)]);
    assert!(single.row(ROW_ERM).is_none());
    assert_eq!(single.row(ROW_ENS).unwrap().std, 0.0);
}

fn raw_entropy(cells: &[(Vec<u64>, f64)], vars: &[usize]) -> f64 {
    let total: f64 = cells.iter().map(|c| c.1).sum();
    let mut marg: HashMap<Vec<u64>, f64> = HashMap::new();
    for (t, m) in cells {
        *marg.entry(vars.iter().map(|&v| t[v]).collect()).or_default() += m / total;
    }
    marg.values().filter(|&&p| p > 0.0).map(|p| -p * p.ln()).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conditional_mi_agrees_with_entropy_identity(
        cells in prop::collection::vec((0u64..3, 0u64..3, 0u64..2, 0.01f64..1.0), 1..20),
    ) {
        let cells: Vec<(Vec<u64>, f64)> = cells.into_iter().map(|(a, b, c, m)| (vec![a, b, c], m)).collect();
        let joint = DiscreteJoint::from_weighted(3, cells.clone()).unwrap();
        let expected = raw_entropy(&cells, &[0, 2]) + raw_entropy(&cells, &[1, 2])
            - raw_entropy(&cells, &[0, 1, 2]) - raw_entropy(&cells, &[2]);
        let got = conditional_mi(&joint, &[0], &[1], &[2]);
        prop_assert!((got - expected.max(0.0)).abs() < 1e-10);
        prop_assert!((got - conditional_mi(&joint, &[1], &[0], &[2])).abs() < 1e-10);
        prop_assert!(got <= raw_entropy(&cells, &[0]).min(raw_entropy(&cells, &[1])) + 1e-10);
    }
}

#[test]
fn viz_colours_each_sumotif_motif_separately() {
    let data = gen_dataset(&SynthConfig {
        mode: SynthMode::SUMotif,
        train_per_class: 2,
        eval_per_class: 1,
        feature_dim: 2,
        ..SynthConfig::default()
    })
    .unwrap();
    for g in &data.train {
        let truth = g.truth_edge_mask().unwrap();
        let w = EdgeWeights::new((0..g.num_edges()).map(|i| i as f64 / g.num_edges() as f64).collect()).unwrap();
        let dot = render_dot(g, &VizInput::Weights(&w)).unwrap();
        let edge_lines: Vec<&str> = dot.lines().filter(|l| l.contains(" -- ")).collect();
        assert_eq!(edge_lines.len(), g.num_edges());
        let mut motifs = std::collections::BTreeSet::new();
        for (e, line) in edge_lines.iter().enumerate() {
            assert_eq!(line.contains("truth=true"), truth[e]);
            if let Some(pos) = line.find("motif=") {
                motifs.insert(line[pos + 6..].trim_end_matches("];").to_string());
            }
            let pen: f64 = line
                .split("penwidth=")
                .nth(1)
                .unwrap()
                .split(',')
                .next()
                .unwrap()
                .parse()
                .unwrap();
            assert!((MIN_PENWIDTH..=MAX_PENWIDTH).contains(&pen));
        }
        assert_eq!(motifs.len(), 2);
    }
}

#[test]
fn viz_of_selection_uses_extreme_widths() {
    let g = &gen_dataset(&SynthConfig {
        train_per_class: 1,
        eval_per_class: 1,
        ..SynthConfig::default()
    })
    .unwrap()
    .train[0];
    let sel = SubgraphSelection::new(vec![0], g.num_edges()).unwrap();
    let dot = render_dot(g, &VizInput::Selection(&sel)).unwrap();
    let widths: Vec<&str> = dot
        .lines()
        .filter(|l| l.contains(" -- "))
        .map(|l| l.split("penwidth=").nth(1).unwrap().split(',').next().unwrap())
        .collect();
    assert_eq!(widths[0], "5.0000");
    assert!(widths[1..].iter().all(|w| *w == "0.5000"));
}

#[test]
fn tiny_experiment_produces_all_rows() {
    let config = ExperimentConfig {
        name: "tiny".into(),
        data: DataSource::Synth(SynthConfig {
            mode: SynthMode::SUMotif,
            train_per_class: 6,
            eval_per_class: 4,
            feature_dim: 2,
            base_size_range: (5, 7),
            ..SynthConfig::default()
        }),
        train: TrainConfig {
            n_models: 3,
            epochs: 2,
            batch_size: 6,
            model: ModelConfig {
                num_layers: 2,
                hidden_dim: 4,
                feature_dim: 2,
                ..ModelConfig::default()
            },
            diversity_probe: 8,
            ..TrainConfig::default()
        },
        seeds: vec![1, 2],
        aggregate: Default::default(),
        report: None,
        ablation_grid: true,
        erm_baseline: true,
    };
    let report = run_experiment(&config).unwrap();
    let names: Vec<&str> = report.rows.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(
        names,
        [
            "ERM-baseline",
            "best-single",
            "mean-single",
            "SuGAr(ENS)",
            "SuGAr(WA)",
            "SU-A",
            "SU-D",
            "SU-S",
            "SU-None"
        ]
    );
    for s in &report.seeds {
        assert!(s.ens_jaccard.is_some() && s.single_jaccard.is_some());
        assert!(!s.ens_chosen.is_empty());
        assert_eq!(s.ablations[0].1, s.ens);
    }
    assert_eq!(report, run_experiment(&config).unwrap());
}
