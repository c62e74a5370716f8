//! Invariant-subspace algebra.
//!
//! For an `M`-invariant subspace with orthonormal basis `V` and an
//! orthonormal-row annihilator `Q` (so `QV = 0`), the change of basis
//! `H = [Q; V']` is orthogonal and
//!
//! ```text
//! H M H' = [ Q M Q'   0     ]  =  [ Abar  0    ]
//!          [ V' M Q'  V' M V ]     [ Ahat  Asub ]
//! ```
//!
//! The zero upper-right block is exactly the invariance condition `Q M V = 0`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, norm2};
use crate::plant::observability_matrix;

/// Absolute-plus-relative tolerance used for invariance and reconstruction
/// residuals: `RESIDUAL_TOL * (1 + |M|)`.
pub const RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct InvariantDecomposition {
    pub v: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub abar: DMatrix<f64>,
    pub asub: DMatrix<f64>,
    pub ahat: DMatrix<f64>,
    pub h: DMatrix<f64>,
}

impl InvariantDecomposition {
    /// `H^{-1} [Abar 0; Ahat Asub] H`, which should reproduce the original matrix.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let n = self.h.nrows();
        let r = self.q.nrows();
        let mut t = DMatrix::zeros(n, n);
        t.view_mut((0, 0), (r, r)).copy_from(&self.abar);
        t.view_mut((r, 0), self.ahat.shape()).copy_from(&self.ahat);
        t.view_mut((r, r), self.asub.shape()).copy_from(&self.asub);
        self.h.transpose() * t * &self.h
    }
}

/// Flips column signs so the largest-magnitude entry of each column is positive.
fn canonical_signs(mut basis: DMatrix<f64>) -> DMatrix<f64> {
    for mut col in basis.column_iter_mut() {
        let pivot = col
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0);
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
    basis
}

/// Orthonormal basis of the unobservable subspace of `(C, A)`, i.e. the
/// kernel of the observability matrix. May have zero columns.
pub fn unobservable_subspace(a: &DMatrix<f64>, c: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    canonical_signs(linalg::null_space(&observability_matrix(a, c), tol))
}

/// Orthonormal rows spanning the orthogonal complement of `span(V)`.
pub fn annihilator(v: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, k) = v.shape();
    if k == 0 {
        return DMatrix::identity(n, n);
    }
    if k == n {
        return DMatrix::zeros(0, n);
    }
    canonical_signs(linalg::null_space(&v.transpose(), linalg::DEFAULT_RANK_TOL)).transpose()
}

/// Solves `Q A = Abar Q` and `Cbar Q = C` in the least-squares sense.
pub fn quotient_map(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    q: &DMatrix<f64>,
    tol: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let qt = q.transpose();
    let abar = q * a * &qt;
    let cbar = c * &qt;
    let scale = tol * (1.0 + norm2(a));
    let res_a = norm2(&(q * a - &abar * q));
    if res_a > scale {
        return Err(Error::ResidualTooLarge {
            what: "QA - Abar Q",
            residual: res_a,
            tol: scale,
        });
    }
    let res_c = norm2(&(&cbar * q - c));
    if res_c > scale {
        return Err(Error::ResidualTooLarge {
            what: "Cbar Q - C",
            residual: res_c,
            tol: scale,
        });
    }
    Ok((abar, cbar))
}

/// `|(I - V V') M V|`, zero exactly when `span(V)` is `M`-invariant.
pub fn invariance_residual(m: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    let mv = m * v;
    norm2(&(&mv - v * (v.transpose() * &mv)))
}

/// The restriction `V' M V` of `M` to the invariant subspace `span(V)`.
pub fn restriction(m: &DMatrix<f64>, v: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let residual = invariance_residual(m, v);
    let bound = tol * (1.0 + norm2(m));
    if residual > bound {
        return Err(Error::NotInvariant { residual, tol: bound });
    }
    Ok(v.transpose() * m * v)
}

pub fn block_decompose(
    m: &DMatrix<f64>,
    v: &DMatrix<f64>,
    q: &DMatrix<f64>,
    tol: f64,
) -> Result<InvariantDecomposition> {
    let asub = restriction(m, v, tol)?;
    let qt = q.transpose();
    let abar = q * m * &qt;
    let ahat = v.transpose() * m * &qt;
    let h = linalg::vstack(&[q.clone(), v.transpose()], m.ncols());
    let dec = InvariantDecomposition {
        v: v.clone(),
        q: q.clone(),
        abar,
        asub,
        ahat,
        h,
    };
    let residual = norm2(&(dec.reconstruct() - m));
    let bound = tol * (1.0 + norm2(m));
    if residual > bound {
        return Err(Error::NotInvariant { residual, tol: bound });
    }
    Ok(dec)
}

/// Norm of the upper-right block `Q M V` of `H M H'`.
pub fn upper_right_block_norm(m: &DMatrix<f64>, v: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    norm2(&(q * m * v))
}
