use std::sync::Arc;

use super::*;
use crate::games::{exact_shapley, exact_shapley_all};
use crate::masking::{make_mean_imputation, ConditionalSampler, Marginal, ProductMarginal};
use crate::predictors::FnPredictor;

const SIDE: usize = 12;
const D: usize = 3;

/// Detects a bright 3x3 patch anywhere on the 3-pixel grid of a 12x12 image.
fn detector() -> FnPredictor<impl Fn(&[f64]) -> f64 + Send + Sync> {
    FnPredictor::new(SIDE * SIDE, |x: &[f64]| {
        let hit = (0..4).any(|i| {
            (0..4).any(|j| {
                let s: f64 = (0..D)
                    .flat_map(|u| (0..D).map(move |v| (i * D + u) * SIDE + j * D + v))
                    .map(|p| x[p])
                    .sum();
                s >= 4.5
            })
        });
        f64::from(u8::from(hit))
    })
}

fn image_with(patches: &[(usize, usize)]) -> Vec<f64> {
    let mut x = vec![0.0; SIDE * SIDE];
    for &(i, j) in patches {
        for u in 0..D {
            for v in 0..D {
                x[(i * D + u) * SIDE + j * D + v] = 1.0;
            }
        }
    }
    x
}

fn zeros() -> Arc<dyn ConditionalSampler> {
    Arc::new(make_mean_imputation(vec![0.0; SIDE * SIDE]))
}

fn cfg(depth: usize) -> HierarchyConfig {
    HierarchyConfig {
        depth,
        rule: SelectionRule::default(),
        min_side: D,
        summands: SummandConfig {
            k: 1,
            l: 1,
            m: 1,
            alpha: 0.05,
            seed: 0,
        },
    }
}

fn quadrant_masker() -> Masker {
    let regions = Region::image(SIDE, SIDE).quadrants(1).unwrap();
    Masker::new(
        zeros(),
        region_partition(SIDE * SIDE, SIDE, &regions).unwrap(),
    )
    .unwrap()
}

#[test]
fn group_game_endpoints() {
    let f = detector();
    let x = image_with(&[(0, 3)]);
    let m = quadrant_masker();
    let g = group_game(&f, &x, &m, 10, 0).unwrap();
    assert_eq!(
        g.value(Coalition::full(4).unwrap()).unwrap(),
        f.predict(&x).unwrap()
    );
    assert_eq!(g.value(Coalition::empty(4).unwrap()).unwrap(), 0.0);
    let r = exact_shapley(&g, 1).unwrap();
    assert_eq!(r.contributions.len(), 8);
    assert_eq!(r.phi, 1.0);
}

#[test]
fn group_additivity_under_mean_imputation() {
    let f = detector();
    let x = image_with(&[(0, 0), (3, 3), (2, 1)]);
    let m = quadrant_masker();
    let g = group_game(&f, &x, &m, 1, 0).unwrap();
    let total: f64 = exact_shapley_all(&g).unwrap().iter().map(|r| r.phi).sum();
    let expected = g.value(Coalition::full(4).unwrap()).unwrap()
        - g.value(Coalition::empty(4).unwrap()).unwrap();
    assert!((total - expected).abs() < 1e-12);
}

#[test]
fn feature_report_reconciles_with_game() {
    let f = detector();
    let x = image_with(&[(0, 0), (3, 3)]);
    let m = quadrant_masker();
    let c = cfg(1).summands;
    let rep = explain_feature(&f, &x, &m, 0, &c).unwrap();
    let g = group_game(&f, &x, &m, 1, 0).unwrap();
    assert_eq!(rep.phi, exact_shapley(&g, 0).unwrap().phi);
    assert!((rep.recompute_phi() - rep.phi).abs() <= 1e-12);
    assert!(rep.all_within_bound());
}

#[test]
fn one_signal_is_found_and_refined() {
    let f = detector();
    // patch (1, 2) lies in quadrant 1 (top right), child 2 of it
    let x = image_with(&[(1, 2)]);
    let tree = hierarchical_explain(&f, &x, SIDE, SIDE, zeros(), &cfg(2)).unwrap();
    assert_eq!(tree.len(), 4);
    let q = &tree[1];
    assert_eq!(q.phi, 1.0);
    assert!(q.records.iter().all(|r| r.p == 0.0));
    assert!(q.selected && q.rejected);
    assert!(tree
        .iter()
        .enumerate()
        .all(|(i, r)| i == 1 || (!r.selected && r.phi == 0.0)));
    assert_eq!(q.children.len(), 4);
    let leaf = &q.children[2];
    assert_eq!(leaf.region.id, "1.2");
    assert_eq!(leaf.phi, 1.0);
    assert!(leaf.selected);
}

#[test]
fn two_signals_split_the_value() {
    let f = detector();
    let x = image_with(&[(3, 0), (3, 3)]);
    let tree = hierarchical_explain(&f, &x, SIDE, SIDE, zeros(), &cfg(1)).unwrap();
    for q in [2, 3] {
        assert!((tree[q].phi - 0.5).abs() < 1e-12);
        let rejected = tree[q].records.iter().filter(|r| r.p == 0.0).count();
        assert_eq!(rejected, 4);
        assert!(!tree[q].rejected);
    }
}

#[test]
fn blank_image_selects_nothing() {
    let f = detector();
    let tree =
        hierarchical_explain(&f, &vec![0.0; SIDE * SIDE], SIDE, SIDE, zeros(), &cfg(2)).unwrap();
    assert!(tree.iter().all(|r| !r.selected && r.children.is_empty()));
}

#[test]
fn monte_carlo_records_carry_slack() {
    let s = ProductMarginal::new(vec![Marginal::Normal { mean: 0.0, sd: 1.0 }; 3]).unwrap();
    let m = Masker::singletons(Arc::new(s)).unwrap();
    let f = FnPredictor::new(3, |x: &[f64]| 1.0 / (1.0 + (-2.0 * x[0] - x[1]).exp()));
    let c = SummandConfig {
        k: 200,
        l: 1,
        m: 400,
        alpha: 0.05,
        seed: 3,
    };
    let rep = explain_feature(&f, &[2.0, 0.5, 0.0], &m, 0, &c).unwrap();
    assert_eq!(rep.records.len(), 4);
    assert!(rep.records.iter().all(|r| r.slack > 0.0));
    assert!(rep.all_within_bound());
    assert_eq!(
        rep,
        explain_feature(&f, &[2.0, 0.5, 0.0], &m, 0, &c).unwrap()
    );
}

#[test]
fn percentile_examples() {
    assert_eq!(
        percentile_select(&[0.0, 0.0, 1.0, 1.0], 70.0, 0.05),
        vec![true, true, false, false]
    );
    assert_eq!(percentile_select(&[0.3; 4], 70.0, 0.05), vec![false; 4]);
    assert_eq!(percentile_select(&[0.01], 70.0, 0.05), vec![true]);
    assert_eq!(percentile_select(&[0.2], 70.0, 0.05), vec![false]);
}

#[test]
fn scoring_examples() {
    let truth = vec![vec![true, false, true, false]];
    let s = precision_f1(&truth, &truth).unwrap();
    assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    let s = precision_f1(&[vec![true; 4]], &truth).unwrap();
    assert_eq!((s.precision, s.recall), (0.5, 1.0));
    assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);
    assert!(matches!(
        precision_f1(&[vec![true]], &[vec![false]]),
        Err(crate::Error::UndefinedRecall)
    ));
}

#[test]
fn containment_rule() {
    let quads = Region::image(10, 10).quadrants(1).unwrap();
    let inside = Region {
        id: "s".into(),
        row: 0,
        col: 0,
        height: 4,
        width: 4,
    };
    assert_eq!(
        region_truth(&quads, &[inside]),
        Some(vec![true, false, false, false])
    );
    // 4 of 5 columns in quadrant 0
    let mostly = Region {
        id: "s".into(),
        row: 0,
        col: 1,
        height: 2,
        width: 5,
    };
    assert!((containment(&quads[0], &mostly) - 0.8).abs() < 1e-15);
    assert_eq!(
        region_truth(&quads, &[mostly]),
        Some(vec![true, false, false, false])
    );
    let straddle = Region {
        id: "s".into(),
        row: 3,
        col: 3,
        height: 4,
        width: 4,
    };
    assert_eq!(region_truth(&quads, &[straddle]), None);
}
