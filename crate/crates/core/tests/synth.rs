use brood::graph::{Dag, NodeSet};
use brood::synth::{
    generate, pc_skeleton, sample_graph, sample_sem, BlockSpec, ErrorModel, GraphModel, SemSpec,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sample_cov(d: &brood::DataSet, a: usize, b: usize) -> f64 {
    let n = d.n();
    (0..n)
        .map(|r| d.centered(r, a) * d.centered(r, b))
        .sum::<f64>()
        / (n - 1) as f64
}

fn component_sizes(g: &Dag) -> Vec<usize> {
    let p = g.p();
    let mut seen = vec![false; p];
    let mut sizes = Vec::new();
    for start in 0..p {
        if seen[start] {
            continue;
        }
        let (mut stack, mut size) = (vec![start], 0);
        seen[start] = true;
        while let Some(v) = stack.pop() {
            size += 1;
            for u in 0..p {
                if !seen[u] && (g.has_edge(u, v) || g.has_edge(v, u)) {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        sizes.push(size);
    }
    sizes.sort_unstable();
    sizes
}

#[test]
fn er_edge_count_matches_expected_degree() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (p, draws) = (20, 10_000);
    let q = 4.0 / 19.0;
    let pairs = 190.0;
    let total: usize = (0..draws)
        .map(|_| sample_graph(&GraphModel::er(), p, &mut rng).edge_count())
        .sum();
    let mean = total as f64 / draws as f64;
    let sd = (pairs * q * (1.0 - q) / draws as f64).sqrt();
    assert!((mean - 40.0).abs() < 3.0 * sd, "mean edges {mean}");
}

#[test]
fn hsbm_clusters_have_the_configured_sizes() {
    let full = || BlockSpec {
        block_probs: vec![1.0],
        connect: vec![vec![1.0]],
    };
    let model = GraphModel::Hsbm {
        proportions: vec![0.1, 0.3, 0.6],
        clusters: vec![full(), full(), full()],
        between: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let g = sample_graph(&model, 20, &mut rng);
        assert_eq!(component_sizes(&g), vec![2, 6, 12]);
        assert_eq!(g.edge_count(), 1 + 15 + 66);
    }
}

#[test]
fn two_node_chain_covariance() {
    let b = 1.5;
    let g = Dag::from_edges(2, &[(0, 1)]).unwrap();
    let spec = SemSpec {
        weight_low: b,
        weight_high: b,
        ..SemSpec::new(2, 100_000, GraphModel::er(), ErrorModel::Gaussian, 0)
    };
    let truth = sample_sem(&g, &spec, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let d = &truth.data;
    for (a, c, want) in [(0, 0, 1.0), (0, 1, b), (1, 1, 1.0 + b * b)] {
        let got = sample_cov(d, a, c);
        assert!((got - want).abs() < 0.04 * want, "cov({a},{c}) = {got}");
    }
}

#[test]
fn error_variances() {
    for (errors, want) in [
        (ErrorModel::Gaussian, 1.0),
        (ErrorModel::Mixture, 1.5),
        (ErrorModel::MixtureSd, 2.5),
    ] {
        let spec = SemSpec::new(1, 200_000, GraphModel::er(), errors, 4);
        let d = generate(&spec).unwrap().data;
        let got = sample_cov(&d, 0, 0);
        assert!((got - want).abs() < 0.02 * want, "{errors:?}: {got}");
    }
}

#[test]
fn weights_stay_in_range() {
    for seed in 0..20 {
        let t = generate(&SemSpec::new(
            15,
            20,
            GraphModel::er(),
            ErrorModel::Gaussian,
            seed,
        ))
        .unwrap();
        assert_eq!(t.weights.len(), t.dag.edge_count());
        assert!(t.weights.iter().all(|(_, w)| (0.4..=2.0).contains(w)));
    }
}

#[test]
fn marginal_tests_on_null_data_keep_alpha_of_pairs() {
    let (p, alpha, reps) = (10usize, 0.05, 100u64);
    let empty = GraphModel::Er {
        expected_degree: 0.0,
    };
    let kept: usize = (0..reps)
        .map(|seed| {
            let d = generate(&SemSpec::new(
                p,
                500,
                empty.clone(),
                ErrorModel::Gaussian,
                seed,
            ))
            .unwrap()
            .data;
            pc_skeleton(&d, alpha, 0, None).edge_count() / 2
        })
        .sum();
    let tests = (reps as usize * p * (p - 1) / 2) as f64;
    let sd = (tests * alpha * (1.0 - alpha)).sqrt();
    assert!(
        (kept as f64 - tests * alpha).abs() < 4.0 * sd,
        "{kept} of {tests}"
    );
    let d = generate(&SemSpec::new(p, 500, empty, ErrorModel::Gaussian, 0))
        .unwrap()
        .data;
    assert!(
        pc_skeleton(&d, alpha, 1, None).edge_count()
            <= pc_skeleton(&d, alpha, 0, None).edge_count()
    );
}

#[test]
fn skeleton_recovers_a_strong_chain() {
    let g = Dag::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
    let spec = SemSpec {
        weight_low: 0.8,
        weight_high: 0.8,
        ..SemSpec::new(5, 2000, GraphModel::er(), ErrorModel::Gaussian, 0)
    };
    let d = sample_sem(&g, &spec, &mut ChaCha8Rng::seed_from_u64(6))
        .unwrap()
        .data;
    let h = pc_skeleton(&d, 0.01, 1, None);
    for i in 0..4 {
        assert!(h.allowed(i + 1).contains(i) && h.allowed(i).contains(i + 1));
    }
    let far: NodeSet = [0usize].into_iter().collect();
    assert!(
        h.allowed(2).intersection(&far).is_empty(),
        "0 and 2 are separated by 1"
    );
}
