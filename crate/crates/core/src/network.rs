//! Neighbor graphs and their averaging matrices.

use std::collections::BTreeSet;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const DEFAULT_STOCHASTIC_TOL: f64 = 1e-12;

/// Directed neighbor graph on `m` agents. An arc `(j, i)` means agent `j`
/// is a neighbor of agent `i`, i.e. `i` receives `j`'s estimate. Every agent
/// is its own neighbor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborGraph {
    m: usize,
    arcs: BTreeSet<(usize, usize)>,
}

impl NeighborGraph {
    /// Builds a graph from arcs `(from, to)`, adding any missing self-loops.
    pub fn new(m: usize, arcs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if m == 0 {
            return Err(Error::Validation("graph needs at least one vertex".into()));
        }
        let mut set: BTreeSet<_> = (0..m).map(|i| (i, i)).collect();
        for (j, i) in arcs {
            if j >= m || i >= m {
                return Err(Error::Validation(format!("arc ({j}, {i}) out of range for {m} agents")));
            }
            set.insert((j, i));
        }
        Ok(Self { m, arcs: set })
    }

    /// Self-loops only.
    pub fn isolated(m: usize) -> Result<Self> {
        Self::new(m, [])
    }

    pub fn complete(m: usize) -> Result<Self> {
        Self::new(m, (0..m).flat_map(|j| (0..m).map(move |i| (j, i))))
    }

    /// Directed cycle visiting `order[0] -> order[1] -> ... -> order[0]`.
    pub fn cycle(order: &[usize]) -> Result<Self> {
        let m = order.len();
        let arcs = (0..m).map(|k| (order[k], order[(k + 1) % m]));
        Self::new(m, arcs)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.arcs.iter().copied()
    }

    /// Labels of agent `i`'s neighbors (including `i`).
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.arcs.iter().filter(move |&&(_, to)| to == i).map(|&(from, _)| from)
    }

    pub fn in_degree(&self, i: usize) -> usize {
        self.neighbors(i).count()
    }

    /// Row-stochastic `S = D^{-1} A'`: `S[i][j] = 1/m_i` when `j` is a
    /// neighbor of `i`.
    pub fn stochastic_matrix(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.m, self.m);
        for i in 0..self.m {
            let w = 1.0 / self.in_degree(i) as f64;
            for j in self.neighbors(i) {
                s[(i, j)] = w;
            }
        }
        s
    }

    pub fn is_strongly_connected(&self) -> bool {
        let m = self.m;
        let mut reach = vec![vec![false; m]; m];
        for (j, i) in self.arcs() {
            reach[j][i] = true;
        }
        for k in 0..m {
            let via = reach[k].clone();
            for row in reach.iter_mut().filter(|row| row[k]) {
                for (dst, &v) in row.iter_mut().zip(&via) {
                    *dst |= v;
                }
            }
        }
        reach.iter().all(|row| row.iter().all(|&r| r))
    }
}

/// Every column of the row-stochastic `s` sums to one within `tol`.
pub fn is_doubly_stochastic(s: &DMatrix<f64>, tol: f64) -> bool {
    s.column_iter().all(|c| (c.sum() - 1.0).abs() <= tol)
}

/// `2I - S - S'` for a doubly stochastic `S`.
pub fn generalized_laplacian(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !is_doubly_stochastic(s, DEFAULT_STOCHASTIC_TOL) {
        return Err(Error::NotDoublyStochastic { mode: None });
    }
    let m = s.nrows();
    Ok(DMatrix::identity(m, m) * 2.0 - s - s.transpose())
}

/// The indexed set of admissible neighbor graphs. All members share `m`
/// and are strongly connected.
#[derive(Debug, Clone)]
pub struct GraphFamily {
    graphs: Vec<NeighborGraph>,
}

impl GraphFamily {
    pub fn new(graphs: Vec<NeighborGraph>) -> Result<Self> {
        let Some(first) = graphs.first() else {
            return Err(Error::Validation("graph family is empty".into()));
        };
        let m = first.m();
        for (p, g) in graphs.iter().enumerate() {
            if g.m() != m {
                return Err(Error::Validation(format!(
                    "graph {p} has {} agents, expected {m}",
                    g.m()
                )));
            }
            if !g.is_strongly_connected() {
                return Err(Error::Validation(format!("graph {p} is not strongly connected")));
            }
        }
        Ok(Self { graphs })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn m(&self) -> usize {
        self.graphs[0].m()
    }

    pub fn graph(&self, p: usize) -> &NeighborGraph {
        &self.graphs[p]
    }

    pub fn graphs(&self) -> &[NeighborGraph] {
        &self.graphs
    }

    pub fn stochastic(&self, p: usize) -> DMatrix<f64> {
        self.graphs[p].stochastic_matrix()
    }

    pub fn doubly_stochastic_modes(&self) -> Vec<bool> {
        (0..self.len())
            .map(|p| is_doubly_stochastic(&self.stochastic(p), DEFAULT_STOCHASTIC_TOL))
            .collect()
    }

    pub fn is_doubly_stochastic(&self) -> bool {
        self.doubly_stochastic_modes().into_iter().all(|d| d)
    }

    pub fn generalized_laplacian(&self, p: usize) -> Result<DMatrix<f64>> {
        generalized_laplacian(&self.stochastic(p)).map_err(|_| Error::NotDoublyStochastic { mode: Some(p) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn complete_pair_averages_evenly() {
        let g = NeighborGraph::complete(2).unwrap();
        assert_eq!(g.stochastic_matrix(), m(2, 2, &[0.5, 0.5, 0.5, 0.5]));
        assert!(g.is_strongly_connected());
    }

    #[test]
    fn isolated_agents() {
        let g = NeighborGraph::isolated(3).unwrap();
        assert_eq!(g.stochastic_matrix(), DMatrix::identity(3, 3));
        assert!(!g.is_strongly_connected());
        assert!(NeighborGraph::isolated(1).unwrap().is_strongly_connected());
    }

    #[test]
    fn ring_of_three() {
        let g = NeighborGraph::cycle(&[0, 1, 2]).unwrap();
        let s = g.stochastic_matrix();
        for i in 0..3 {
            let row: Vec<f64> = s.row(i).iter().copied().filter(|&x| x > 0.0).collect();
            assert_eq!(row, vec![0.5, 0.5]);
        }
        // agent 1 hears agent 0; agent 0 hears agent 2
        assert_eq!(s[(1, 0)], 0.5);
        assert_eq!(s[(0, 2)], 0.5);
        assert!(g.is_strongly_connected());
        assert!(is_doubly_stochastic(&s, DEFAULT_STOCHASTIC_TOL));
    }

    #[test]
    fn one_way_chain_is_not_strongly_connected() {
        let g = NeighborGraph::new(3, [(0, 1), (1, 2)]).unwrap();
        assert!(!g.is_strongly_connected());
    }

    #[test]
    fn doubly_stochastic_examples() {
        assert!(is_doubly_stochastic(&m(2, 2, &[0.5, 0.5, 0.5, 0.5]), 1e-12));
        assert!(!is_doubly_stochastic(&m(2, 2, &[1., 0., 0.5, 0.5]), 1e-12));
        assert!(is_doubly_stochastic(&DMatrix::identity(4, 4), 1e-12));
    }

    #[test]
    fn generalized_laplacian_examples() {
        let l = generalized_laplacian(&m(2, 2, &[0.5, 0.5, 0.5, 0.5])).unwrap();
        assert_eq!(l, m(2, 2, &[1., -1., -1., 1.]));
        assert_eq!(
            generalized_laplacian(&DMatrix::identity(3, 3)).unwrap(),
            DMatrix::zeros(3, 3)
        );
        let l = generalized_laplacian(&DMatrix::from_element(3, 3, 1.0 / 3.0)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 4.0 / 3.0 } else { -2.0 / 3.0 };
                assert!((l[(i, j)] - want).abs() < 1e-15);
            }
        }
        assert!(matches!(
            generalized_laplacian(&m(2, 2, &[1., 0., 0.5, 0.5])),
            Err(Error::NotDoublyStochastic { mode: None })
        ));
    }

    #[test]
    fn family_rejects_disconnected_member() {
        let err = GraphFamily::new(vec![
            NeighborGraph::complete(3).unwrap(),
            NeighborGraph::new(3, [(0, 1), (1, 2)]).unwrap(),
        ])
        .unwrap_err();
        assert!(err.to_string().contains("graph 1"));
    }

    #[test]
    fn family_rejects_mixed_sizes() {
        assert!(GraphFamily::new(vec![
            NeighborGraph::complete(3).unwrap(),
            NeighborGraph::complete(2).unwrap(),
        ])
        .is_err());
    }

    #[test]
    fn arcs_out_of_range() {
        assert!(NeighborGraph::new(2, [(0, 2)]).is_err());
    }
}
