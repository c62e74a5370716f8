//! Seeded random instances for tests, sweeps and examples.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg;
use crate::network::{GraphFamily, NeighborGraph};
use crate::plant::Plant;

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Random invertible matrix with 2-norm condition number at most `max_cond`.
pub fn well_conditioned<R: Rng + ?Sized>(rng: &mut R, n: usize, max_cond: f64) -> DMatrix<f64> {
    loop {
        let t = gaussian_matrix(rng, n, n);
        if linalg::condition_number(&t) <= max_cond {
            return t;
        }
    }
}

/// Random matrix whose spectral abscissa lies in `[-1, -0.1]`.
pub fn hurwitz_matrix<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let m = gaussian_matrix(rng, n, n);
    let shift = linalg::spectral_abscissa(&m) + rng.random_range(0.1..1.0);
    m - DMatrix::identity(n, n) * shift
}

/// Real modal blocks: 1x1 real eigenvalues and 2x2 rotation blocks.
fn modal_blocks<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<DMatrix<f64>> {
    let mut blocks = Vec::new();
    let mut left = n;
    while left > 0 {
        if left >= 2 && rng.random_bool(0.35) {
            let a = rng.random_range(-1.0..1.0);
            let w = rng.random_range(0.5..2.0);
            blocks.push(DMatrix::from_row_slice(2, 2, &[a, w, -w, a]));
            left -= 2;
        } else {
            blocks.push(DMatrix::from_element(1, 1, rng.random_range(-1.0..1.5)));
            left -= 1;
        }
    }
    blocks
}

/// Random plant whose agents each see a random subset of the modes.
///
/// With `cover_all` every mode is seen by some agent, which makes the plant
/// jointly observable; without it the plant may have a shared blind mode.
pub fn modal_plant<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize, cover_all: bool) -> Plant {
    let blocks = modal_blocks(rng, n);
    let d = linalg::block_diag(&blocks);
    let t = well_conditioned(rng, n, 30.0);
    let t_inv = t.clone().try_inverse().expect("well-conditioned");
    let a = &t * d * &t_inv;

    let nb = blocks.len();
    let mut sees = vec![vec![false; nb]; m];
    for row in sees.iter_mut() {
        for s in row.iter_mut() {
            *s = rng.random_bool(0.5);
        }
        if !row.iter().any(|&s| s) {
            row[rng.random_range(0..nb)] = true;
        }
    }
    if cover_all {
        for b in 0..nb {
            if !sees.iter().any(|row| row[b]) {
                sees[rng.random_range(0..m)][b] = true;
            }
        }
    }

    let offsets: Vec<usize> = blocks
        .iter()
        .scan(0, |acc, b| {
            let o = *acc;
            *acc += b.nrows();
            Some(o)
        })
        .collect();
    let channels = sees
        .iter()
        .map(|row| {
            let coords: Vec<usize> = (0..nb)
                .filter(|&b| row[b])
                .flat_map(|b| offsets[b]..offsets[b] + blocks[b].nrows())
                .collect();
            let s = if coords.len() >= 2 && rng.random_bool(0.3) {
                2
            } else {
                1
            };
            let mut select = DMatrix::zeros(coords.len(), n);
            for (r, &c) in coords.iter().enumerate() {
                select[(r, c)] = 1.0;
            }
            gaussian_matrix(rng, s, coords.len()) * select * &t_inv
        })
        .collect();
    Plant::new(a, channels).expect("generated plant is well formed")
}

/// Unstructured plant: dense random `A` and `C_i` of random rank.
pub fn dense_plant<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> Plant {
    let a = gaussian_matrix(rng, n, n);
    let channels = (0..m)
        .map(|_| {
            let s = rng.random_range(1..=2);
            if rng.random_bool(0.2) {
                DMatrix::zeros(s, n)
            } else {
                gaussian_matrix(rng, s, n)
            }
        })
        .collect();
    Plant::new(a, channels).expect("generated plant is well formed")
}

fn shuffled<R: Rng + ?Sized>(rng: &mut R, m: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(rng);
    order
}

/// A random Hamiltonian cycle plus extra arcs with probability `extra`.
pub fn strongly_connected_graph<R: Rng + ?Sized>(rng: &mut R, m: usize, extra: f64) -> NeighborGraph {
    let order = shuffled(rng, m);
    let mut arcs: Vec<(usize, usize)> = (0..m).map(|k| (order[k], order[(k + 1) % m])).collect();
    for j in 0..m {
        for i in 0..m {
            if i != j && rng.random_bool(extra) {
                arcs.push((j, i));
            }
        }
    }
    NeighborGraph::new(m, arcs).expect("arcs in range")
}

/// Graph whose averaging matrix is doubly stochastic: a random directed
/// cycle (in- and out-degree two) or, occasionally, the complete graph.
pub fn doubly_stochastic_graph<R: Rng + ?Sized>(rng: &mut R, m: usize) -> NeighborGraph {
    if m <= 2 || rng.random_bool(0.2) {
        NeighborGraph::complete(m).expect("m >= 1")
    } else {
        NeighborGraph::cycle(&shuffled(rng, m)).expect("m >= 1")
    }
}

/// `size` strongly connected graphs on `m` agents.
pub fn graph_family<R: Rng + ?Sized>(rng: &mut R, m: usize, size: usize, extra: f64) -> GraphFamily {
    let graphs = (0..size).map(|_| strongly_connected_graph(rng, m, extra)).collect();
    GraphFamily::new(graphs).expect("generated graphs are strongly connected")
}

/// `size` graphs whose averaging matrices are all doubly stochastic.
pub fn doubly_stochastic_family<R: Rng + ?Sized>(rng: &mut R, m: usize, size: usize) -> GraphFamily {
    let graphs = (0..size).map(|_| doubly_stochastic_graph(rng, m)).collect();
    GraphFamily::new(graphs).expect("generated graphs are strongly connected")
}
