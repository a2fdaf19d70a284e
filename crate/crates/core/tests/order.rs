mod common;

use std::collections::HashMap;

use brood::graph::{dags_in, TopOrder};
use brood::order::{proposal_distribution, propose_order, q0_step, sample_dag_given, OrderState};
use brood::tables::TableSet;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn kernel_row(o: &TopOrder) -> HashMap<TopOrder, f64> {
    let mut row = HashMap::new();
    for (t, w) in proposal_distribution(o) {
        *row.entry(t).or_insert(0.0) += w;
    }
    row
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn proposals_are_permutations_in_the_support(p in 1usize..=8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let o = common::random_order(p, &mut rng);
        let row = kernel_row(&o);
        prop_assert!((row.values().sum::<f64>() - 1.0).abs() < 1e-12);
        for _ in 0..50 {
            let (next, _) = propose_order(&o, &mut rng);
            let mut sorted = next.perm().to_vec();
            sorted.sort_unstable();
            prop_assert_eq!(sorted, (0..p).collect::<Vec<_>>());
            prop_assert!(row.get(&next).copied().unwrap_or(0.0) > 0.0);
        }
    }

    #[test]
    fn proposal_is_symmetric(p in 2usize..=6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let o = common::random_order(p, &mut rng);
        for (t, w) in kernel_row(&o) {
            let back = kernel_row(&t)[&o];
            prop_assert!((w - back).abs() < 1e-12);
        }
    }

    #[test]
    fn sampled_dags_respect_space_and_order(seed in any::<u64>(), p in 2usize..=5) {
        let s = common::scorer(p, 40, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = common::random_space(p, 0.5, Some(3), &mut rng);
        let t = TableSet::build(&h, &s).unwrap();
        let o = common::random_order(p, &mut rng);
        let support = dags_in(&h, Some(&o)).unwrap();
        for _ in 0..30 {
            let g = sample_dag_given(&o, &t, &mut rng, false);
            prop_assert!(support.contains(&g));
            let g = sample_dag_given(&o, &t, &mut rng, true);
            for i in 0..p {
                prop_assert!(g.parents(i).iter().all(|j| o.precedes(j, i)));
                prop_assert!(g.parents(i).difference(h.allowed(i)).len() <= 1);
            }
        }
    }
}

#[test]
fn forward_and_reverse_moves_are_equally_frequent() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = TopOrder::from_perm(vec![0, 1, 2, 3, 4]).unwrap();
    let b = TopOrder::from_perm(vec![0, 2, 1, 3, 4]).unwrap();
    let q = kernel_row(&a)[&b];
    let n = 200_000;
    let hits = |from: &TopOrder, to: &TopOrder, rng: &mut ChaCha8Rng| {
        (0..n).filter(|_| propose_order(from, rng).0 == *to).count() as f64
    };
    let fwd = hits(&a, &b, &mut rng);
    let rev = hits(&b, &a, &mut rng);
    let sd = (n as f64 * q * (1.0 - q)).sqrt();
    assert!((fwd - n as f64 * q).abs() < 4.0 * sd, "forward {fwd}");
    assert!((rev - n as f64 * q).abs() < 4.0 * sd, "reverse {rev}");
    assert!((fwd - rev).abs() < 4.0 * sd * std::f64::consts::SQRT_2);
}

#[test]
fn incremental_order_score_tracks_full_recomputation() {
    let p = 15;
    let s = common::scorer(p, 150, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let h = common::random_space(p, 0.12, None, &mut rng);
    let t = TableSet::build(&h, &s).unwrap();
    let mut state = OrderState::new(common::random_order(p, &mut rng), &t);
    let mut accepted = 0;
    for _ in 0..5000 {
        accepted += q0_step(&mut state, &t, &mut rng) as usize;
    }
    assert!(accepted > 0);
    assert!(state.cache_error(&t) < 1e-9);
}
