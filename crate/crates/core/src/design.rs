//! Observer construction: per-agent output injection on the observable
//! quotient, lifted back to the full state, plus the block aggregates used
//! by the error model.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{self, block_diag, norm2};
use crate::plant::{self, Plant};
use crate::subspaces::{self, RESIDUAL_TOL};

/// Spacing between consecutive assigned eigenvalues.
pub const EIGEN_SPACING: f64 = 0.5;
const MAX_ASSIGN_ATTEMPTS: usize = 10;
const MAX_SYLVESTER_COND: f64 = 1e8;
/// Accepted only after every attempt stayed above `MAX_SYLVESTER_COND`.
const FALLBACK_SYLVESTER_COND: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct AgentDesign {
    /// Orthonormal basis of the agent's unobservable subspace (`n x k`).
    pub v: DMatrix<f64>,
    /// Orthonormal-row annihilator of `v` (`(n-k) x n`).
    pub q: DMatrix<f64>,
    pub abar: DMatrix<f64>,
    pub cbar: DMatrix<f64>,
    pub kbar: DMatrix<f64>,
    /// Lifted injection gain `Q' Kbar` (`n x s`).
    pub k: DMatrix<f64>,
    /// Orthogonal projection `V V'` onto the unobservable subspace.
    pub p: DMatrix<f64>,
    /// Restriction of `A + K C` to the unobservable subspace.
    pub asub: DMatrix<f64>,
}

impl AgentDesign {
    pub fn unobservable_dim(&self) -> usize {
        self.v.ncols()
    }

    /// `Abar + Kbar Cbar`.
    pub fn quotient_closed_loop(&self) -> DMatrix<f64> {
        &self.abar + &self.kbar * &self.cbar
    }
}

#[derive(Debug, Clone)]
pub struct ObserverDesign {
    pub agents: Vec<AgentDesign>,
    /// `blockdiag(A + K_i C_i)`.
    pub abar_block: DMatrix<f64>,
    pub p_block: DMatrix<f64>,
    pub v_block: DMatrix<f64>,
    pub q_block: DMatrix<f64>,
    /// Restriction of `abar_block` to `span(v_block)`.
    pub atilde: DMatrix<f64>,
    pub lambda_hat: f64,
    n: usize,
}

impl ObserverDesign {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.agents.len()
    }

    /// Total unobservable dimension `sum k_i`.
    pub fn coupled_dim(&self) -> usize {
        self.v_block.ncols()
    }

    /// `blockdiag(Abar_i + Kbar_i Cbar_i)`, the autonomous quotient dynamics.
    pub fn quotient_block(&self) -> DMatrix<f64> {
        let blocks: Vec<_> = self.agents.iter().map(AgentDesign::quotient_closed_loop).collect();
        block_diag(&blocks)
    }

    /// Orthogonal change of basis `[Q; V']`.
    pub fn h(&self) -> DMatrix<f64> {
        linalg::vstack(&[self.q_block.clone(), self.v_block.transpose()], self.n * self.m())
    }
}

const RETRY_SHIFT: f64 = 0.137;

fn target_spectrum(q: usize, lambda_hat: f64) -> Vec<f64> {
    (0..q).map(|j| -lambda_hat - j as f64 * EIGEN_SPACING).collect()
}

/// Output-injection gain placing the spectrum of `Abar + Kbar Cbar` at
/// `-lambda_hat - j * EIGEN_SPACING`, `j = 0..q`.
///
/// Works on the dual state-feedback problem: solve
/// `Abar' X - X F = Cbar' G` for a random `G`, then `Kbar = -(G X^{-1})'`
/// gives `Abar + Kbar Cbar = X'^{-1} F X'`.
pub fn assign_spectrum(abar: &DMatrix<f64>, cbar: &DMatrix<f64>, lambda_hat: f64, seed: u64) -> Result<DMatrix<f64>> {
    let q = abar.nrows();
    let s = cbar.nrows();
    if q == 0 {
        return Ok(DMatrix::zeros(0, s));
    }
    if !plant::is_observable(abar, cbar, linalg::DEFAULT_RANK_TOL) {
        let rank = linalg::numerical_rank(&plant::observability_matrix(abar, cbar), linalg::DEFAULT_RANK_TOL);
        return Err(Error::NotObservable { rank, n: q });
    }

    let abar_t = abar.transpose();
    let cbar_t = cbar.transpose();
    let abscissa_tol = 1e-6 * (1.0 + lambda_hat + q as f64 * EIGEN_SPACING + norm2(abar));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last_issue = String::from("no attempt made");
    let mut fallback: Option<(f64, DMatrix<f64>)> = None;

    for attempt in 0..MAX_ASSIGN_ATTEMPTS {
        // Retries after the first slide the targets further left, so a target
        // that collides with an open-loop eigenvalue does not fail every try.
        let targets = target_spectrum(q, lambda_hat + attempt as f64 * RETRY_SHIFT * EIGEN_SPACING);
        let g = DMatrix::<f64>::from_fn(s, q, |_, _| StandardNormal.sample(&mut rng));
        let mut x = DMatrix::zeros(q, q);
        let mut solved = true;
        for (j, &f) in targets.iter().enumerate() {
            let shifted = &abar_t - DMatrix::identity(q, q) * f;
            let rhs = &cbar_t * g.column(j);
            match shifted.lu().solve(&rhs) {
                Some(col) => x.set_column(j, &col),
                None => {
                    solved = false;
                    last_issue = format!("target {f} coincides with an open-loop eigenvalue");
                    break;
                }
            }
        }
        if !solved {
            continue;
        }
        let cond = linalg::condition_number(&x);
        if !(cond <= FALLBACK_SYLVESTER_COND) {
            last_issue = format!("Sylvester solution condition number {cond:.3e}");
            continue;
        }
        let Some(x_inv) = x.try_inverse() else {
            last_issue = "Sylvester solution is singular".into();
            continue;
        };
        let kbar = -(&g * x_inv).transpose();
        let abscissa = linalg::spectral_abscissa(&(abar + &kbar * cbar));
        if abscissa > -lambda_hat + abscissa_tol {
            last_issue = format!("closed-loop abscissa {abscissa:.6} above -{lambda_hat}");
            continue;
        }
        if cond <= MAX_SYLVESTER_COND {
            return Ok(kbar);
        }
        last_issue = format!("Sylvester solution condition number {cond:.3e}");
        if fallback.as_ref().is_none_or(|(c, _)| cond < *c) {
            fallback = Some((cond, kbar));
        }
    }
    // Nearly unobservable quotients make every X poorly conditioned; a gain
    // whose closed loop checks out is still better than no design.
    match fallback {
        Some((_, kbar)) => Ok(kbar),
        None => Err(Error::AssignmentFailed(last_issue)),
    }
}

/// `K = Q' Kbar`; `Q'` is the right inverse of an orthonormal-row `Q`.
pub fn lift_gain(q: &DMatrix<f64>, kbar: &DMatrix<f64>) -> DMatrix<f64> {
    q.transpose() * kbar
}

fn agent_seed(seed: u64, agent: usize) -> u64 {
    seed.wrapping_add((agent as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub fn build_agent(plant: &Plant, agent: usize, lambda_hat: f64, tol: f64, seed: u64) -> Result<AgentDesign> {
    let a = plant.a();
    let c = plant.channel(agent);
    let n = plant.n();

    let v = subspaces::unobservable_subspace(a, c, tol);
    let q = subspaces::annihilator(&v);
    let (abar, cbar) = subspaces::quotient_map(a, c, &q, RESIDUAL_TOL)?;
    let kbar = assign_spectrum(&abar, &cbar, lambda_hat, agent_seed(seed, agent))?;
    let k = if q.nrows() == 0 {
        DMatrix::zeros(n, c.nrows())
    } else {
        lift_gain(&q, &kbar)
    };
    let p = &v * v.transpose();
    let closed = a + &k * c;
    let asub = subspaces::restriction(&closed, &v, RESIDUAL_TOL)?;

    let quotient = &abar + &kbar * &cbar;
    let residual = norm2(&(&q * &closed - &quotient * &q));
    let bound = RESIDUAL_TOL * (1.0 + norm2(&closed));
    if residual > bound {
        return Err(Error::ResidualTooLarge {
            what: "Q(A+KC) - (Abar+Kbar Cbar)Q",
            residual,
            tol: bound,
        });
    }

    Ok(AgentDesign {
        v,
        q,
        abar,
        cbar,
        kbar,
        k,
        p,
        asub,
    })
}

pub fn build_observer(plant: &Plant, lambda_hat: f64, tol: f64, seed: u64) -> Result<ObserverDesign> {
    if !plant.is_jointly_observable(tol) {
        return Err(Error::NotJointlyObservable {
            dim: plant.unobservable_intersection_dim(tol).max(1),
        });
    }
    let n = plant.n();
    let agents = (0..plant.m())
        .map(|i| build_agent(plant, i, lambda_hat, tol, seed))
        .collect::<Result<Vec<_>>>()?;

    let closed: Vec<_> = agents
        .iter()
        .enumerate()
        .map(|(i, ag)| plant.a() + &ag.k * plant.channel(i))
        .collect();
    let abar_block = block_diag(&closed);
    let p_block = block_diag(&agents.iter().map(|a| a.p.clone()).collect::<Vec<_>>());
    let v_block = block_diag(&agents.iter().map(|a| a.v.clone()).collect::<Vec<_>>());
    let q_block = block_diag(&agents.iter().map(|a| a.q.clone()).collect::<Vec<_>>());
    let atilde = subspaces::restriction(&abar_block, &v_block, RESIDUAL_TOL)?;

    let expected = block_diag(&agents.iter().map(|a| a.asub.clone()).collect::<Vec<_>>());
    let residual = norm2(&(&atilde - &expected));
    if residual > RESIDUAL_TOL {
        return Err(Error::ResidualTooLarge {
            what: "Atilde - blockdiag(Asub)",
            residual,
            tol: RESIDUAL_TOL,
        });
    }

    Ok(ObserverDesign {
        agents,
        abar_block,
        p_block,
        v_block,
        q_block,
        atilde,
        lambda_hat,
        n,
    })
}
