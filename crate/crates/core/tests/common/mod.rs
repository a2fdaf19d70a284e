//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use brood::bge::{BgeScore, DataSet};
use brood::graph::{SearchSpace, TopOrder};
use brood::synth::{generate, ErrorModel, GraphModel, SemSpec};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn data(p: usize, n: usize, seed: u64) -> DataSet {
    let spec = SemSpec::new(
        p,
        n,
        GraphModel::Er {
            expected_degree: 1.5,
        },
        ErrorModel::Gaussian,
        seed,
    );
    generate(&spec).unwrap().data
}

pub fn scorer(p: usize, n: usize, seed: u64) -> BgeScore {
    BgeScore::from_data(&data(p, n, seed)).unwrap()
}

pub fn random_space<R: Rng>(
    p: usize,
    density: f64,
    cap: Option<usize>,
    rng: &mut R,
) -> SearchSpace {
    loop {
        let edges: Vec<(usize, usize)> = (0..p)
            .flat_map(|i| (0..p).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .filter(|_| rng.random_bool(density))
            .collect();
        if let Ok(h) = SearchSpace::from_edges(p, &edges, cap) {
            return h;
        }
    }
}

pub fn random_order<R: Rng>(p: usize, rng: &mut R) -> TopOrder {
    let mut perm: Vec<usize> = (0..p).collect();
    perm.shuffle(rng);
    TopOrder::from_perm(perm).unwrap()
}

/// Acyclicity by repeated removal of parentless nodes, on an adjacency
/// matrix `adj[src][dst]`.
pub fn acyclic(adj: &[Vec<bool>]) -> bool {
    let p = adj.len();
    let mut alive = vec![true; p];
    for _ in 0..p {
        let root = (0..p).find(|&v| alive[v] && (0..p).all(|u| !alive[u] || !adj[u][v]));
        match root {
            Some(v) => alive[v] = false,
            None => return false,
        }
    }
    true
}
