//! Switched error dynamics `e' = (Abar - g P ((I - S(p)) ⊗ I_n)) e` and
//! its block-triangular form in the coordinates `z1 = Q e`, `z2 = V' e`:
//!
//! ```text
//! z1' = Abar_V z1
//! z2' = A_V(p) z2 + Ahat_V(p) z1
//! ```

use nalgebra::DMatrix;

use crate::design::ObserverDesign;
use crate::error::{Error, Result};
use crate::linalg::{self, norm2};
use crate::network::GraphFamily;
use crate::subspaces;

/// `(I_m - S(p)) ⊗ I_n`.
pub fn consensus_operator(family: &GraphFamily, p: usize, n: usize) -> DMatrix<f64> {
    let m = family.m();
    (DMatrix::identity(m, m) - family.stochastic(p)).kronecker(&DMatrix::identity(n, n))
}

/// `M(p) = Abar - g P ((I_m - S(p)) ⊗ I_n)`.
pub fn mode_matrix(design: &ObserverDesign, family: &GraphFamily, g: f64, p: usize) -> DMatrix<f64> {
    let l = consensus_operator(family, p, design.n());
    &design.abar_block - (&design.p_block * l) * g
}

/// `G(p) = V' ((I_m - S(p)) ⊗ I_n) V`.
pub fn coupling_block(design: &ObserverDesign, family: &GraphFamily, p: usize) -> DMatrix<f64> {
    let v = &design.v_block;
    v.transpose() * consensus_operator(family, p, design.n()) * v
}

/// Returns `(Abar_V, A_V(p), Ahat_V(p))`.
pub fn reduced_matrices(
    design: &ObserverDesign,
    family: &GraphFamily,
    g: f64,
    p: usize,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let v = &design.v_block;
    let vt = v.transpose();
    let qt = design.q_block.transpose();
    let l = consensus_operator(family, p, design.n());
    let vl = &vt * l;
    let abar_v = &design.q_block * &design.abar_block * &qt;
    let a_v = &design.atilde - (&vl * v) * g;
    let ahat_v = &vt * &design.abar_block * &qt - (&vl * &qt) * g;
    (abar_v, a_v, ahat_v)
}

/// `(lambda I + A_V(p)) + (lambda I + A_V(p))'`, built from the generalized
/// Laplacian `2I - S - S'`.
fn lyapunov_derivative(
    design: &ObserverDesign,
    family: &GraphFamily,
    g: f64,
    lambda: f64,
    p: usize,
) -> Result<DMatrix<f64>> {
    let k = design.coupled_dim();
    let w = generalized_coupling(design, family, p)?;
    let at = &design.atilde;
    Ok(DMatrix::identity(k, k) * (2.0 * lambda) + at + at.transpose() - w * g)
}

/// `V' ((2I - S - S') ⊗ I_n) V`.
fn generalized_coupling(design: &ObserverDesign, family: &GraphFamily, p: usize) -> Result<DMatrix<f64>> {
    let lap = family.generalized_laplacian(p)?;
    let v = &design.v_block;
    Ok(v.transpose() * lap.kronecker(&DMatrix::identity(design.n(), design.n())) * v)
}

/// Per-mode check that `(lambda I + A_V(p)) + (lambda I + A_V(p))'` is
/// negative definite. When every mode passes, `z'z` is a common Lyapunov
/// function decaying at rate `2 lambda` under arbitrary switching.
pub fn doubly_stochastic_certificate(
    design: &ObserverDesign,
    family: &GraphFamily,
    g: f64,
    lambda: f64,
) -> Result<Vec<bool>> {
    (0..family.len())
        .map(|p| {
            let d = lyapunov_derivative(design, family, g, lambda, p)?;
            Ok(d.is_empty() || linalg::max_symmetric_eigenvalue(&d) < 0.0)
        })
        .collect()
}

/// Smallest `g*` such that every `g > g*` passes
/// [`doubly_stochastic_certificate`]; infinite when no gain does.
pub fn doubly_stochastic_gain_threshold(design: &ObserverDesign, family: &GraphFamily, lambda: f64) -> Result<f64> {
    let k = design.coupled_dim();
    let b = DMatrix::identity(k, k) * (2.0 * lambda) + &design.atilde + design.atilde.transpose();
    let mut threshold: f64 = 0.0;
    for p in 0..family.len() {
        let w = generalized_coupling(design, family, p)?;
        if k == 0 {
            continue;
        }
        // B - g W < 0  <=>  g > lambda_max(R^{-1} B R^{-T}) with W = R R'.
        let Some(chol) = w.clone().cholesky() else {
            return Ok(f64::INFINITY);
        };
        let r = chol.l();
        let r_inv = r.try_inverse().ok_or(Error::NotHurwitz { abscissa: 0.0 })?;
        let reduced = &r_inv * &b * r_inv.transpose();
        threshold = threshold.max(linalg::max_symmetric_eigenvalue(&linalg::symmetric_part(&reduced)));
    }
    Ok(threshold)
}

#[derive(Debug, Clone)]
pub struct ModeMatrices {
    /// Full error dynamics `M(p)`.
    pub full: DMatrix<f64>,
    pub a_v: DMatrix<f64>,
    pub ahat_v: DMatrix<f64>,
    pub coupling: DMatrix<f64>,
}

/// Error dynamics for a fixed gain, with every mode's matrices cached.
#[derive(Debug, Clone)]
pub struct ErrorModel {
    design: ObserverDesign,
    family: GraphFamily,
    g: f64,
    abar_v: DMatrix<f64>,
    modes: Vec<ModeMatrices>,
}

impl ErrorModel {
    pub fn new(design: ObserverDesign, family: GraphFamily, g: f64) -> Result<Self> {
        if family.m() != design.m() {
            return Err(Error::Validation(format!(
                "graph family has {} agents but the plant has {} channels",
                family.m(),
                design.m()
            )));
        }
        if !(g >= 0.0 && g.is_finite()) {
            return Err(Error::Validation(format!("coupling gain must be >= 0, got {g}")));
        }
        let mut abar_v = DMatrix::zeros(0, 0);
        let modes = (0..family.len())
            .map(|p| {
                let (q_part, a_v, ahat_v) = reduced_matrices(&design, &family, g, p);
                abar_v = q_part;
                ModeMatrices {
                    full: mode_matrix(&design, &family, g, p),
                    a_v,
                    ahat_v,
                    coupling: coupling_block(&design, &family, p),
                }
            })
            .collect();
        Ok(Self {
            design,
            family,
            g,
            abar_v,
            modes,
        })
    }

    /// Same design and family, different gain.
    pub fn with_gain(&self, g: f64) -> Result<Self> {
        Self::new(self.design.clone(), self.family.clone(), g)
    }

    pub fn design(&self) -> &ObserverDesign {
        &self.design
    }

    pub fn family(&self) -> &GraphFamily {
        &self.family
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn abar_v(&self) -> &DMatrix<f64> {
        &self.abar_v
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn mode(&self, p: usize) -> &ModeMatrices {
        &self.modes[p]
    }

    pub fn dim(&self) -> usize {
        self.design.n() * self.design.m()
    }

    /// `max_p |M(p)|`.
    pub fn max_mode_norm(&self) -> f64 {
        self.modes.iter().map(|m| norm2(&m.full)).fold(0.0, f64::max)
    }

    /// `|upper-right block of H M(p) H'| / (1 + |M(p)|)`.
    pub fn block_residual(&self, p: usize) -> f64 {
        let full = &self.modes[p].full;
        subspaces::upper_right_block_norm(full, &self.design.v_block, &self.design.q_block) / (1.0 + norm2(full))
    }

    /// `|H M(p) H' - [Abar_V 0; Ahat_V A_V]|`, relative to `1 + |M(p)|`.
    pub fn similarity_residual(&self, p: usize) -> f64 {
        let mode = &self.modes[p];
        let h = self.design.h();
        let r = self.abar_v.nrows();
        let dim = self.dim();
        let mut t = DMatrix::zeros(dim, dim);
        t.view_mut((0, 0), (r, r)).copy_from(&self.abar_v);
        t.view_mut((r, 0), mode.ahat_v.shape()).copy_from(&mode.ahat_v);
        t.view_mut((r, r), mode.a_v.shape()).copy_from(&mode.a_v);
        norm2(&(&h * &mode.full * h.transpose() - t)) / (1.0 + norm2(&mode.full))
    }

    pub fn doubly_stochastic_certificate(&self, lambda: f64) -> Result<Vec<bool>> {
        doubly_stochastic_certificate(&self.design, &self.family, self.g, lambda)
    }
}
