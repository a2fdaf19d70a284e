mod common;

use brood::graph::{compatible_orders, enumerate_dags, Dag, SearchSpace};
use brood::logspace::log_sum_exp;
use brood::oracle::{
    detailed_balance_residual, exact_q0_kernel, hellinger, row_sum_error, stationary_distribution,
    tv_distance, ExactPosterior,
};
use brood::tables::TableSet;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Outside mass with each DAG weighted by its number of linear extensions.
fn order_induced_outside(s: &brood::BgeScore, h: &SearchSpace) -> f64 {
    let mut all = Vec::new();
    let mut out = Vec::new();
    for g in enumerate_dags(s.p()).unwrap() {
        let w = s.dag_score(&g) + (compatible_orders(&g).unwrap().len() as f64).ln();
        all.push(w);
        if !h.admits(&g) {
            out.push(w);
        }
    }
    (log_sum_exp(&out) - log_sum_exp(&all)).exp()
}

#[test]
fn space_covering_the_support_has_no_error() {
    let target = Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
    let post =
        ExactPosterior::from_log_scores(3, |g| if *g == target { 0.0 } else { f64::NEG_INFINITY })
            .unwrap();
    let h = SearchSpace::from_edges(3, &[(0, 1), (1, 2)], None).unwrap();
    let r = post.verify_bounds(&h).unwrap();
    assert_eq!(r.epsilon, 0.0);
    assert_eq!(r.tv, 0.0);
    assert!(r.c_const.is_none());
}

#[test]
fn removing_one_edge_from_four_nodes() {
    let s = common::scorer(4, 40, 12);
    let post = ExactPosterior::from_scorer(&s).unwrap();
    let h = SearchSpace::complete(4, None)
        .unwrap()
        .remove_edge(brood::Edge::new(0, 2).unwrap())
        .unwrap();
    let r = post.verify_bounds(&h).unwrap();
    assert!(r.epsilon > 0.0 && r.tv > 0.0);
    assert!((r.epsilon - order_induced_outside(&s, &h)).abs() < 1e-12);
    assert!(r.lower - 1e-12 <= r.tv && r.tv <= r.upper + 1e-12);
    let full = post.order_posterior().unwrap();
    let restricted = post.restricted_order_posterior(&h).unwrap();
    assert!((tv_distance(&full, &restricted).unwrap() - r.tv).abs() < 1e-15);
}

#[test]
fn bounds_hold_over_random_three_node_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for seed in 0..100 {
        let s = common::scorer(3, 20 + (seed as usize % 5) * 10, seed);
        let post = ExactPosterior::from_scorer(&s).unwrap();
        let h = common::random_space(3, 0.5, None, &mut rng);
        let r = post.verify_bounds(&h).unwrap();
        assert!((r.epsilon - order_induced_outside(&s, &h)).abs() < 1e-12);
        assert!(r.mixture_residual < 1e-12);
        if let Some(c) = r.c_const {
            assert!((-1e-12..=1.0 + 1e-12).contains(&c), "c = {c}");
            assert!(r.lower - 1e-12 <= r.tv && r.tv <= r.upper + 1e-12, "{r:?}");
        } else {
            assert_eq!(r.tv, 0.0);
        }
    }
}

#[test]
fn fixed_space_kernel_targets_the_restricted_posterior() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..10 {
        let s = common::scorer(4, 40, seed);
        let h = common::random_space(4, 0.5, None, &mut rng);
        let t = TableSet::build(&h, &s).unwrap();
        let (orders, m) = exact_q0_kernel(&t).unwrap();
        assert!(row_sum_error(&m) < 1e-12);
        let (pi, residual) = stationary_distribution(&m).unwrap();
        assert!(residual < 1e-12);
        assert!(detailed_balance_residual(&m, &pi) < 1e-12);
        let post = ExactPosterior::from_scorer(&s).unwrap();
        let want = post.restricted_order_posterior(&h).unwrap();
        let by_order: Vec<f64> = post
            .orders()
            .iter()
            .map(|o| pi[orders.iter().position(|x| x == o).unwrap()])
            .collect();
        assert!(tv_distance(&by_order, &want).unwrap() < 1e-10);
    }
}

fn distribution() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 6).prop_filter_map("nonzero", |v| {
        let z: f64 = v.iter().sum();
        (z > 0.0).then(|| v.iter().map(|x| x / z).collect())
    })
}

proptest! {
    #[test]
    fn hellinger_sandwiches_total_variation(a in distribution(), b in distribution()) {
        let tv = tv_distance(&a, &b).unwrap();
        let h = hellinger(&a, &b).unwrap();
        prop_assert!(h * h / 2.0 <= tv + 1e-12);
        prop_assert!(tv <= h + 1e-12);
        prop_assert!(tv <= 1.0 + 1e-12);
    }
}
