//! Fixed-step integration of the switched error system and of the full
//! observer network, plus empirical decay-rate estimation.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::design::ObserverDesign;
use crate::error::{Error, Result};
use crate::errormodel::ErrorModel;
use crate::linalg::norm2;
use crate::network::GraphFamily;
use crate::plant::Plant;
use crate::switching::SwitchingSignal;

pub const DEFAULT_BURN_IN: f64 = 0.1;
pub const DEFAULT_FLOOR: f64 = 1e-13;
const MIN_FIT_SAMPLES: usize = 10;

/// Sampled trajectory of a stacked state made of equally sized blocks.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// One tag per block, e.g. `x`, `x_1`, `e_2`.
    pub labels: Vec<String>,
    pub block_size: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn norms(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.norm()).collect()
    }

    /// Sub-trajectory of block `i`.
    pub fn block(&self, i: usize) -> Trajectory {
        let b = self.block_size;
        Trajectory {
            times: self.times.clone(),
            states: self.states.iter().map(|s| s.rows(i * b, b).into_owned()).collect(),
            labels: vec![self.labels[i].clone()],
            block_size: b,
        }
    }

    /// Applies a linear map to every sample.
    pub fn map(&self, t: &DMatrix<f64>, labels: Vec<String>, block_size: usize) -> Trajectory {
        Trajectory {
            times: self.times.clone(),
            states: self.states.iter().map(|s| t * s).collect(),
            labels,
            block_size,
        }
    }
}

fn rk4_step(m: &DMatrix<f64>, x: &DVector<f64>, dt: f64) -> DVector<f64> {
    let k1 = m * x;
    let k2 = m * (x + &k1 * (0.5 * dt));
    let k3 = m * (x + &k2 * (0.5 * dt));
    let k4 = m * (x + &k3 * dt);
    x + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0)
}

/// RK4 on `x' = select(sigma(t)) x`. Steps land on the global grid `k * step`
/// and are shortened at switch instants, so every step sees one mode.
fn integrate_switched<'a>(
    signal: &SwitchingSignal,
    x0: &DVector<f64>,
    step: f64,
    select: impl Fn(usize) -> &'a DMatrix<f64>,
) -> (Vec<f64>, Vec<DVector<f64>>) {
    let mut times = vec![0.0];
    let mut states = vec![x0.clone()];
    let mut x = x0.clone();
    for (start, end, p) in signal.intervals() {
        let m = select(p);
        let mut t = start;
        while t < end {
            let mut k = (t / step).floor() as i64 + 1;
            // skip grid points that coincide with `t` up to rounding
            while (k as f64) * step <= t + 1e-9 * step {
                k += 1;
            }
            let mut next = k as f64 * step;
            if next >= end - 1e-9 * step {
                next = end;
            }
            x = rk4_step(m, &x, next - t);
            t = next;
            times.push(t);
            states.push(x.clone());
        }
    }
    (times, states)
}

fn check_step(step: f64, norms: impl Iterator<Item = (usize, f64)>) -> Result<()> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Validation(format!("step must be positive, got {step}")));
    }
    for (mode, norm) in norms {
        let product = step * norm;
        if product > 1.0 {
            return Err(Error::StepTooLarge { step, mode, product });
        }
    }
    Ok(())
}

fn used_modes(signal: &SwitchingSignal) -> Vec<usize> {
    let mut modes = signal.values().to_vec();
    modes.sort_unstable();
    modes.dedup();
    modes
}

/// `min(0.05 / max_norm, min_gap / 10)`.
pub fn default_step(max_norm: f64, min_gap: f64) -> f64 {
    let by_gap = min_gap / 10.0;
    if max_norm > 0.0 {
        (0.05 / max_norm).min(by_gap)
    } else {
        by_gap
    }
}

fn check_signal(model: &ErrorModel, signal: &SwitchingSignal) -> Result<()> {
    if signal.max_value() >= model.num_modes() {
        return Err(Error::Validation(format!(
            "signal uses mode {} but the family has {} graphs",
            signal.max_value(),
            model.num_modes()
        )));
    }
    Ok(())
}

pub fn integrate_error(
    model: &ErrorModel,
    signal: &SwitchingSignal,
    e0: &DVector<f64>,
    step: f64,
) -> Result<Trajectory> {
    check_signal(model, signal)?;
    if e0.len() != model.dim() {
        return Err(Error::Dimension(format!(
            "initial error has length {}, expected {}",
            e0.len(),
            model.dim()
        )));
    }
    check_step(
        step,
        used_modes(signal).into_iter().map(|p| (p, norm2(&model.mode(p).full))),
    )?;
    let (times, states) = integrate_switched(signal, e0, step, |p| &model.mode(p).full);
    let m = model.design().m();
    Ok(Trajectory {
        times,
        states,
        labels: (1..=m).map(|i| format!("e_{i}")).collect(),
        block_size: model.design().n(),
    })
}

/// Generator of the stacked state `(x, x_1, ..., x_m)` in mode `p`.
pub fn observer_matrix(plant: &Plant, design: &ObserverDesign, family: &GraphFamily, g: f64, p: usize) -> DMatrix<f64> {
    let n = plant.n();
    let m = plant.m();
    let s = family.stochastic(p);
    let mut big = DMatrix::zeros(n * (m + 1), n * (m + 1));
    big.view_mut((0, 0), (n, n)).copy_from(plant.a());
    for i in 0..m {
        let ag = &design.agents[i];
        let kc = &ag.k * plant.channel(i);
        let row = n * (i + 1);
        big.view_mut((row, 0), (n, n)).copy_from(&(-&kc));
        let own = plant.a() + &kc - &ag.p * g;
        big.view_mut((row, row), (n, n)).copy_from(&own);
        for j in 0..m {
            if s[(i, j)] != 0.0 {
                let col = n * (j + 1);
                let mut blk = big.view_mut((row, col), (n, n));
                blk += &ag.p * (g * s[(i, j)]);
            }
        }
    }
    big
}

/// Co-integrates the plant and all `m` local estimators.
#[allow(clippy::too_many_arguments)]
pub fn integrate_observer(
    plant: &Plant,
    design: &ObserverDesign,
    family: &GraphFamily,
    signal: &SwitchingSignal,
    g: f64,
    x0: &DVector<f64>,
    xhat0: &[DVector<f64>],
    step: f64,
) -> Result<Trajectory> {
    let n = plant.n();
    let m = plant.m();
    if x0.len() != n || xhat0.len() != m || xhat0.iter().any(|x| x.len() != n) {
        return Err(Error::Dimension(format!(
            "observer initial state must be x0 of length {n} and {m} estimates of length {n}"
        )));
    }
    if signal.max_value() >= family.len() {
        return Err(Error::Validation(format!(
            "signal uses mode {} but the family has {} graphs",
            signal.max_value(),
            family.len()
        )));
    }
    let mats: Vec<DMatrix<f64>> = (0..family.len())
        .map(|p| observer_matrix(plant, design, family, g, p))
        .collect();
    check_step(step, used_modes(signal).into_iter().map(|p| (p, norm2(&mats[p]))))?;
    let mut z0 = DVector::zeros(n * (m + 1));
    z0.rows_mut(0, n).copy_from(x0);
    for (i, xi) in xhat0.iter().enumerate() {
        z0.rows_mut(n * (i + 1), n).copy_from(xi);
    }
    let (times, states) = integrate_switched(signal, &z0, step, |p| &mats[p]);
    let mut labels = vec!["x".to_string()];
    labels.extend((1..=m).map(|i| format!("x_{i}")));
    Ok(Trajectory {
        times,
        states,
        labels,
        block_size: n,
    })
}

/// Stacked estimation errors `x_i - x` of an observer trajectory.
pub fn observer_errors(traj: &Trajectory) -> Trajectory {
    let n = traj.block_size;
    let m = traj.labels.len() - 1;
    let states = traj
        .states
        .iter()
        .map(|s| {
            let x = s.rows(0, n);
            let mut e = DVector::zeros(n * m);
            for i in 0..m {
                e.rows_mut(i * n, n).copy_from(&(s.rows(n * (i + 1), n) - x));
            }
            e
        })
        .collect();
    Trajectory {
        times: traj.times.clone(),
        states,
        labels: (1..=m).map(|i| format!("e_{i}")).collect(),
        block_size: n,
    }
}

/// `(z1, z2) = (Q e, V' e)` at every sample.
pub fn project_coordinates(design: &ObserverDesign, traj: &Trajectory) -> (Trajectory, Trajectory) {
    let z1 = traj.map(&design.q_block, vec!["z1".into()], design.q_block.nrows());
    let z2 = traj.map(&design.v_block.transpose(), vec!["z2".into()], design.v_block.ncols());
    (z1, z2)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RateEstimate {
    pub lambda_fit: f64,
    pub r_squared: f64,
    pub window: [f64; 2],
}

/// Least-squares slope of `log max(|e(t)|, floor)` over
/// `[burn_in * T_eff, T_eff]`, where `T_eff` is the last instant before the
/// norm first reaches `floor` (the final time if it never does).
pub fn estimate_rate(traj: &Trajectory, burn_in_fraction: f64, floor: f64) -> Result<RateEstimate> {
    fit_rate(&traj.times, &traj.norms(), burn_in_fraction, floor)
}

pub fn fit_rate(times: &[f64], norms: &[f64], burn_in_fraction: f64, floor: f64) -> Result<RateEstimate> {
    let cutoff = norms.iter().position(|&v| v <= floor).unwrap_or(norms.len());
    if cutoff == 0 {
        return Err(Error::DegenerateFit { usable: 0 });
    }
    let t_eff = times[cutoff - 1];
    let t_start = times[0] + burn_in_fraction * (t_eff - times[0]);
    let (ts, ys): (Vec<f64>, Vec<f64>) = times[..cutoff]
        .iter()
        .zip(&norms[..cutoff])
        .filter(|(&t, _)| t >= t_start)
        .map(|(&t, &v)| (t, v.max(floor).ln()))
        .unzip();
    if ts.len() < MIN_FIT_SAMPLES {
        return Err(Error::DegenerateFit { usable: ts.len() });
    }
    let k = ts.len() as f64;
    let t_mean = ts.iter().sum::<f64>() / k;
    let y_mean = ys.iter().sum::<f64>() / k;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (t, y) in ts.iter().zip(&ys) {
        sxy += (t - t_mean) * (y - y_mean);
        sxx += (t - t_mean) * (t - t_mean);
        syy += (y - y_mean) * (y - y_mean);
    }
    if sxx == 0.0 {
        return Err(Error::DegenerateFit { usable: ts.len() });
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(RateEstimate {
        lambda_fit: -slope,
        r_squared,
        window: [t_start, t_eff],
    })
}

/// Largest `|Q e_a(t) - Q e_b(t)|` between two error trajectories that
/// differ only in switching signal and gain.
#[allow(clippy::too_many_arguments)]
pub fn z1_autonomy_check(
    design: &ObserverDesign,
    family: &GraphFamily,
    signal_a: &SwitchingSignal,
    signal_b: &SwitchingSignal,
    g_a: f64,
    g_b: f64,
    e0: &DVector<f64>,
    step: f64,
) -> Result<f64> {
    let model_a = ErrorModel::new(design.clone(), family.clone(), g_a)?;
    let model_b = ErrorModel::new(design.clone(), family.clone(), g_b)?;
    let ta = integrate_error(&model_a, signal_a, e0, step)?;
    let tb = integrate_error(&model_b, signal_b, e0, step)?;
    let q = &design.q_block;
    let mut deviation: f64 = 0.0;
    let (mut i, mut j) = (0, 0);
    while i < ta.len() && j < tb.len() {
        let (t1, t2) = (ta.times[i], tb.times[j]);
        if (t1 - t2).abs() <= 1e-9 * step {
            deviation = deviation.max((q * (&ta.states[i] - &tb.states[j])).norm());
            i += 1;
            j += 1;
        } else if t1 < t2 {
            i += 1;
        } else {
            j += 1;
        }
    }
    Ok(deviation)
}

/// Writes `t,e_1_1,...,e_m_n,norm_e,z1_norm,z2_norm`, one row per sample.
pub fn write_error_csv<W: Write>(out: W, design: &ObserverDesign, errors: &Trajectory) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let n = design.n();
    let m = design.m();
    let mut header = vec!["t".to_string()];
    for i in 1..=m {
        for k in 1..=n {
            header.push(format!("e_{i}_{k}"));
        }
    }
    header.extend(["norm_e", "z1_norm", "z2_norm"].map(String::from));
    wtr.write_record(&header)?;
    let vt = design.v_block.transpose();
    for (t, e) in errors.times.iter().zip(&errors.states) {
        let mut row = Vec::with_capacity(header.len());
        row.push(t.to_string());
        row.extend(e.iter().map(|x| x.to_string()));
        row.push(e.norm().to_string());
        row.push((&design.q_block * e).norm().to_string());
        row.push((&vt * e).norm().to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(f: impl Fn(f64) -> f64, horizon: f64, dt: f64) -> Trajectory {
        let k = (horizon / dt).round() as usize;
        let times: Vec<f64> = (0..=k).map(|i| i as f64 * dt).collect();
        let v = DVector::from_vec(vec![0.6, -0.8]);
        let states = times.iter().map(|&t| &v * f(t)).collect();
        Trajectory {
            times,
            states,
            labels: vec!["e".into()],
            block_size: 2,
        }
    }

    #[test]
    fn exact_exponential_rate() {
        let traj = synthetic(|t| (-2.0 * t).exp(), 10.0, 0.01);
        let r = estimate_rate(&traj, DEFAULT_BURN_IN, DEFAULT_FLOOR).unwrap();
        assert!((r.lambda_fit - 2.0).abs() < 1e-6);
        assert!(r.r_squared > 1.0 - 1e-12);
    }

    #[test]
    fn polynomial_times_exponential_rate() {
        let traj = synthetic(|t| (1.0 + t) * (-2.0 * t).exp(), 20.0, 0.01);
        let r = estimate_rate(&traj, DEFAULT_BURN_IN, DEFAULT_FLOOR).unwrap();
        assert!(r.lambda_fit > 1.8 && r.lambda_fit < 2.0, "{}", r.lambda_fit);
        // the floor truncates the window
        assert!(r.window[1] < 20.0);
    }

    #[test]
    fn zero_trajectory_is_degenerate() {
        let traj = synthetic(|_| 0.0, 5.0, 0.01);
        assert!(matches!(
            estimate_rate(&traj, DEFAULT_BURN_IN, DEFAULT_FLOOR),
            Err(Error::DegenerateFit { .. })
        ));
    }

    #[test]
    fn rk4_scalar_accuracy() {
        let m = DMatrix::from_element(1, 1, -1.0);
        let mut x = DVector::from_element(1, 1.0);
        for _ in 0..10 {
            x = rk4_step(&m, &x, 0.1);
        }
        assert!((x[0] - (-1.0f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn grid_includes_switch_instants() {
        let signal = SwitchingSignal::new(vec![0.25, 0.7], vec![0, 1, 0], 1.0).unwrap();
        let m = DMatrix::from_element(1, 1, -1.0);
        let (times, _) = integrate_switched(&signal, &DVector::from_element(1, 1.0), 0.1, |_| &m);
        assert!(times.contains(&0.25));
        assert!(times.contains(&0.7));
        assert!((times.last().unwrap() - 1.0).abs() < 1e-15);
        assert!(times.windows(2).all(|w| w[1] > w[0] && w[1] - w[0] <= 0.1 + 1e-12));
        assert_eq!(times.len(), 12);
    }

    #[test]
    fn default_step_rule() {
        assert_eq!(default_step(10.0, 1.0), 0.005);
        assert_eq!(default_step(0.1, 1.0), 0.1);
        assert_eq!(default_step(0.0, 2.0), 0.2);
    }
}
