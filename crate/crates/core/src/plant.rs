//! The multi-channel plant `x' = A x`, `y_i = C_i x`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, DEFAULT_RANK_TOL};
use crate::subspaces;

#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    a: DMatrix<f64>,
    channels: Vec<DMatrix<f64>>,
}

impl Plant {
    pub fn new(a: DMatrix<f64>, channels: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::Dimension(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if channels.is_empty() {
            return Err(Error::Dimension("plant needs at least one channel".into()));
        }
        for (i, c) in channels.iter().enumerate() {
            if c.ncols() != n {
                return Err(Error::Dimension(format!(
                    "channel {i} has {} columns, expected {n}",
                    c.ncols()
                )));
            }
        }
        if a.iter()
            .chain(channels.iter().flat_map(|c| c.iter()))
            .any(|x| !x.is_finite())
        {
            return Err(Error::Dimension("plant entries must be finite".into()));
        }
        Ok(Self { a, channels })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn channels(&self) -> &[DMatrix<f64>] {
        &self.channels
    }

    pub fn channel(&self, i: usize) -> &DMatrix<f64> {
        &self.channels[i]
    }

    /// State dimension `n`.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Number of agents / output channels `m`.
    pub fn m(&self) -> usize {
        self.channels.len()
    }

    /// All channel matrices stacked vertically in agent order.
    pub fn stacked_output(&self) -> DMatrix<f64> {
        linalg::vstack(&self.channels, self.n())
    }

    pub fn is_jointly_observable(&self, tol: f64) -> bool {
        let obs = observability_matrix(&self.a, &self.stacked_output());
        linalg::numerical_rank(&obs, tol) == self.n()
    }

    /// Dimension of the intersection of the per-channel unobservable
    /// subspaces. Zero exactly when the plant is jointly observable.
    pub fn unobservable_intersection_dim(&self, tol: f64) -> usize {
        let n = self.n();
        // x lies in every span(V_i) iff (I - V_i V_i') x = 0 for all i.
        let blocks: Vec<DMatrix<f64>> = self
            .channels
            .iter()
            .map(|c| {
                let v = subspaces::unobservable_subspace(&self.a, c, tol);
                DMatrix::identity(n, n) - &v * v.transpose()
            })
            .collect();
        let stacked = linalg::vstack(&blocks, n);
        n - linalg::numerical_rank(&stacked, DEFAULT_RANK_TOL.max(tol))
    }
}

/// `[C; CA; ...; CA^(n-1)]`.
pub fn observability_matrix(a: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let s = c.nrows();
    let mut obs = DMatrix::zeros(s * n, n);
    let mut block = c.clone();
    for k in 0..n {
        obs.view_mut((k * s, 0), (s, n)).copy_from(&block);
        block = &block * a;
    }
    obs
}

pub fn is_observable(a: &DMatrix<f64>, c: &DMatrix<f64>, tol: f64) -> bool {
    let n = a.nrows();
    n == 0 || linalg::numerical_rank(&observability_matrix(a, c), tol) == n
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn stacks_identity_rows() {
        let p = Plant::new(DMatrix::identity(2, 2), vec![m(1, 2, &[1., 0.]), m(1, 2, &[0., 1.])]).unwrap();
        assert_eq!(p.stacked_output(), DMatrix::identity(2, 2));
    }

    #[test]
    fn single_channel_stack_is_itself() {
        let c = m(2, 3, &[1., 2., 3., 4., 5., 6.]);
        let p = Plant::new(DMatrix::identity(3, 3), vec![c.clone()]).unwrap();
        assert_eq!(p.stacked_output(), c);
    }

    #[test]
    fn running_example_is_jointly_observable() {
        let p = Plant::new(
            m(2, 2, &[1., 0., 0., -1.]),
            vec![m(1, 2, &[1., 0.]), m(1, 2, &[0., 1.])],
        )
        .unwrap();
        assert_eq!(p.stacked_output(), DMatrix::identity(2, 2));
        assert!(p.is_jointly_observable(DEFAULT_RANK_TOL));
        assert_eq!(p.unobservable_intersection_dim(DEFAULT_RANK_TOL), 0);
    }

    #[test]
    fn shared_blind_direction_is_not_jointly_observable() {
        let p = Plant::new(DMatrix::identity(2, 2), vec![m(1, 2, &[1., 0.]), m(1, 2, &[1., 0.])]).unwrap();
        assert!(!p.is_jointly_observable(DEFAULT_RANK_TOL));
        assert_eq!(p.unobservable_intersection_dim(DEFAULT_RANK_TOL), 1);
    }

    #[test]
    fn full_rank_channel_observes_everything() {
        let a = m(3, 3, &[0., 1., 0., 0., 0., 1., -1., -2., -3.]);
        let p = Plant::new(a, vec![DMatrix::zeros(1, 3), DMatrix::identity(3, 3)]).unwrap();
        assert!(p.is_jointly_observable(DEFAULT_RANK_TOL));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Plant::new(DMatrix::zeros(2, 3), vec![DMatrix::zeros(1, 3)]).is_err());
        assert!(Plant::new(DMatrix::identity(2, 2), vec![]).is_err());
        assert!(Plant::new(DMatrix::identity(2, 2), vec![DMatrix::zeros(1, 3)]).is_err());
        assert!(Plant::new(m(1, 1, &[f64::NAN]), vec![DMatrix::zeros(1, 1)]).is_err());
    }
}
