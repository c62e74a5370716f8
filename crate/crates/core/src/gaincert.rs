//! Exponential bounds `|e^{Mt}| <= c e^{-lambda t}` for the consensus
//! coupling of each mode, the coupling-gain lower bound built from them,
//! and sampled checks of the resulting transition-matrix bound.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::errormodel::ErrorModel;
use crate::linalg::{self, norm2};
use crate::switching::SwitchingSignal;

pub const DEFAULT_SLACK: f64 = 0.05;
pub const DEFAULT_HORIZON_MULT: f64 = 10.0;
/// Multiplier applied to a sampled overshoot above one.
pub const SAFETY_INFLATION: f64 = 1.1;
const EXP_BOUND_SAMPLES: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpBound {
    pub c: f64,
    pub lambda: f64,
}

/// Constants `(c, lambda)` with `|e^{Mt}|_2 <= c e^{-lambda t}`.
///
/// `lambda` is the decay margin `-(1 - slack) * abscissa(M)`. `c` is the
/// sup of `|e^{Mt}| e^{lambda t}` over `t in [0, horizon_mult / lambda]`,
/// inflated by [`SAFETY_INFLATION`] when it exceeds one. The sup is sampled,
/// so the bound is not certified beyond the sampled window.
pub fn exp_bound(m: &DMatrix<f64>, slack: f64, horizon_mult: f64) -> Result<ExpBound> {
    if m.is_empty() || !m.is_square() {
        return Err(Error::Dimension(format!(
            "exp_bound needs a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !(0.0..1.0).contains(&slack) || !(horizon_mult > 0.0) {
        return Err(Error::Validation(format!(
            "slack must lie in [0, 1) and horizon_mult be positive (got {slack}, {horizon_mult})"
        )));
    }
    let abscissa = linalg::spectral_abscissa(m);
    if abscissa >= 0.0 {
        return Err(Error::NotHurwitz { abscissa });
    }
    let lambda = -(1.0 - slack) * abscissa;
    let dt = horizon_mult / lambda / EXP_BOUND_SAMPLES as f64;
    let step = (m * dt).exp();
    let mut phi = DMatrix::identity(m.nrows(), m.ncols());
    let mut sup: f64 = 1.0;
    for k in 1..=EXP_BOUND_SAMPLES {
        phi = &step * phi;
        sup = sup.max(norm2(&phi) * (lambda * dt * k as f64).exp());
    }
    let c = if sup <= 1.0 + 1e-9 { 1.0 } else { SAFETY_INFLATION * sup };
    Ok(ExpBound { c, lambda })
}

/// `max{(lambda + b c) / lambda*, (lambda + b c) / lambda* + ln c / (lambda* tau_d)}`.
pub fn gain_formula(c: f64, lambda_star: f64, b: f64, lambda: f64, tau_d: f64) -> f64 {
    let base = (lambda + b * c) / lambda_star;
    base.max(base + c.ln() / (lambda_star * tau_d))
}

/// Gain lower bound with `c = max c_i` and `lambda* = min lambda_i`.
pub fn gain_lower_bound(bounds: &[ExpBound], b: f64, lambda: f64, tau_d: f64) -> f64 {
    let c = bounds.iter().map(|e| e.c).fold(1.0, f64::max);
    let lambda_star = bounds.iter().map(|e| e.lambda).fold(f64::INFINITY, f64::min);
    gain_formula(c, lambda_star, b, lambda, tau_d)
}

#[derive(Debug, Clone, Serialize)]
pub struct GainCertificate {
    /// Bounds for `-G(p)`, one per mode.
    pub per_mode: Vec<ExpBound>,
    pub c: f64,
    pub lambda_star: f64,
    /// `|Atilde|_2`.
    pub b: f64,
    /// `max_p |Ahat_V(p)|_2` at `g = g_min`.
    pub c_hat: f64,
    pub lambda: f64,
    pub tau_d: f64,
    pub g_min: f64,
    /// Whether `g_min * lambda* >= lambda + b c` (the gain also dominates
    /// the perturbation margin on its own).
    pub rate_margin_ok: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct CertificateOptions {
    pub slack: f64,
    pub horizon_mult: f64,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        Self {
            slack: DEFAULT_SLACK,
            horizon_mult: DEFAULT_HORIZON_MULT,
        }
    }
}

/// Computes the certificate for `model`'s design and family. The model's
/// own gain is irrelevant except as the starting point for `c_hat`.
pub fn certify(model: &ErrorModel, lambda: f64, tau_d: f64, opts: CertificateOptions) -> Result<GainCertificate> {
    if !(lambda > 0.0) || !(tau_d > 0.0) {
        return Err(Error::Validation(format!(
            "rate and dwell time must be positive (got {lambda}, {tau_d})"
        )));
    }
    let per_mode = if model.design().coupled_dim() == 0 {
        Vec::new()
    } else {
        (0..model.num_modes())
            .map(|p| exp_bound(&-&model.mode(p).coupling, opts.slack, opts.horizon_mult))
            .collect::<Result<Vec<_>>>()?
    };
    let b = norm2(&model.design().atilde);
    let c = per_mode.iter().map(|e| e.c).fold(1.0, f64::max);
    let lambda_star = per_mode.iter().map(|e| e.lambda).fold(f64::INFINITY, f64::min);
    let g_min = if per_mode.is_empty() {
        0.0
    } else {
        gain_lower_bound(&per_mode, b, lambda, tau_d)
    };
    let at_min = model.with_gain(g_min)?;
    let c_hat = (0..at_min.num_modes())
        .map(|p| norm2(&at_min.mode(p).ahat_v))
        .fold(0.0, f64::max);
    let rate_margin_ok = per_mode.is_empty() || g_min * lambda_star >= lambda + b * c;
    Ok(GainCertificate {
        per_mode,
        c,
        lambda_star,
        b,
        c_hat,
        lambda,
        tau_d,
        g_min,
        rate_margin_ok,
    })
}

/// Ordered product of `exp(select(p) * duration)` over the constancy
/// intervals of `signal` inside `[t0, t1]`, latest interval leftmost.
pub fn transition_with<'a>(
    signal: &SwitchingSignal,
    t0: f64,
    t1: f64,
    dim: usize,
    select: impl Fn(usize) -> &'a DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let horizon = signal.horizon();
    for t in [t0, t1] {
        if !(0.0..=horizon).contains(&t) {
            return Err(Error::OutOfHorizon { t, horizon });
        }
    }
    if t0 > t1 {
        return Err(Error::OutOfHorizon { t: t0, horizon: t1 });
    }
    // Fast switching repeats the same few durations; exact keys keep the
    // product bit-identical to the uncached one.
    let mut cache: HashMap<(usize, u64), DMatrix<f64>> = HashMap::new();
    let mut phi = DMatrix::identity(dim, dim);
    for (start, end, p) in signal.intervals() {
        let lo = start.max(t0);
        let hi = end.min(t1);
        if hi > lo {
            let d = hi - lo;
            let factor = cache.entry((p, d.to_bits())).or_insert_with(|| (select(p) * d).exp());
            phi = &*factor * phi;
        }
    }
    Ok(phi)
}

/// `Phi_V(t1, t0)` of the reduced dynamics `z2' = A_V(sigma(t)) z2`.
pub fn transition_matrix(model: &ErrorModel, signal: &SwitchingSignal, t0: f64, t1: f64) -> Result<DMatrix<f64>> {
    transition_with(signal, t0, t1, model.design().coupled_dim(), |p| &model.mode(p).a_v)
}

/// Transition matrix of the full error system `e' = M(sigma(t)) e`.
pub fn full_transition_matrix(model: &ErrorModel, signal: &SwitchingSignal, t0: f64, t1: f64) -> Result<DMatrix<f64>> {
    transition_with(signal, t0, t1, model.dim(), |p| &model.mode(p).full)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundReport {
    /// Largest `|Phi_V(t, tau)| / (c e^{-lambda (t - tau)})` over sampled pairs.
    pub max_ratio: f64,
    pub max_violation: f64,
    pub pass: bool,
}

/// Checks `|Phi_V(t, tau)| <= c e^{-lambda (t - tau)}` on all pairs of
/// `samples + 1` equally spaced instants over the signal's horizon.
pub fn verify_switched_bound(
    model: &ErrorModel,
    signal: &SwitchingSignal,
    lambda: f64,
    c: f64,
    samples: usize,
) -> Result<BoundReport> {
    let samples = samples.max(1);
    let horizon = signal.horizon();
    let grid: Vec<f64> = (0..=samples).map(|k| horizon * k as f64 / samples as f64).collect();
    let cells = grid
        .windows(2)
        .map(|w| transition_matrix(model, signal, w[0], w[1]))
        .collect::<Result<Vec<_>>>()?;
    let dim = model.design().coupled_dim();
    let mut max_ratio: f64 = 0.0;
    for i in 0..samples {
        let mut phi = DMatrix::identity(dim, dim);
        for j in i..samples {
            phi = &cells[j] * phi;
            let elapsed = grid[j + 1] - grid[i];
            max_ratio = max_ratio.max(norm2(&phi) / (c * (-lambda * elapsed).exp()));
        }
    }
    Ok(BoundReport {
        max_ratio,
        max_violation: (max_ratio - 1.0).max(0.0),
        pass: max_ratio <= 1.0,
    })
}
