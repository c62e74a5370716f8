//! Piecewise-constant switching signals `sigma: [0, T] -> P`, their
//! dwell-time and average-dwell-time validation, and seeded generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Relative slack applied when comparing accumulated switch times against
/// dwell bounds, so generated signals survive floating-point summation.
const TIME_SLACK: f64 = 1e-9;
const MAX_GENERATION_ATTEMPTS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingSignal {
    switch_times: Vec<f64>,
    values: Vec<usize>,
    horizon: f64,
}

impl SwitchingSignal {
    /// `values[0]` is active on `[0, t_1)`, `values[k]` on `[t_k, t_{k+1})`.
    pub fn new(switch_times: Vec<f64>, values: Vec<usize>, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Validation(format!("horizon must be positive, got {horizon}")));
        }
        if values.len() != switch_times.len() + 1 {
            return Err(Error::Validation(format!(
                "{} switch times need {} values, got {}",
                switch_times.len(),
                switch_times.len() + 1,
                values.len()
            )));
        }
        let mut prev = 0.0;
        for &t in &switch_times {
            if !(t > prev && t < horizon) {
                return Err(Error::Validation(format!(
                    "switch times must be strictly increasing inside (0, {horizon}), got {t}"
                )));
            }
            prev = t;
        }
        if let Some(w) = values.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Validation(format!(
                "consecutive signal values must differ, got {} twice",
                w[0]
            )));
        }
        Ok(Self {
            switch_times,
            values,
            horizon,
        })
    }

    pub fn constant(value: usize, horizon: f64) -> Result<Self> {
        Self::new(Vec::new(), vec![value], horizon)
    }

    pub fn switch_times(&self) -> &[f64] {
        &self.switch_times
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn num_switches(&self) -> usize {
        self.switch_times.len()
    }

    /// Largest mode index used, for checking against a graph family.
    pub fn max_value(&self) -> usize {
        self.values.iter().copied().max().unwrap_or(0)
    }

    pub fn value_at(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::OutOfHorizon {
                t,
                horizon: self.horizon,
            });
        }
        Ok(self.values[self.switch_times.partition_point(|&s| s <= t)])
    }

    /// Constancy intervals `(start, end, value)` covering `[0, horizon]`.
    pub fn intervals(&self) -> Vec<(f64, f64, usize)> {
        let mut bounds = Vec::with_capacity(self.switch_times.len() + 2);
        bounds.push(0.0);
        bounds.extend_from_slice(&self.switch_times);
        bounds.push(self.horizon);
        bounds
            .windows(2)
            .zip(&self.values)
            .map(|(w, &v)| (w[0], w[1], v))
            .collect()
    }

    /// Shortest gap between consecutive switches, counting `t_1 - 0`.
    /// The horizon when there are no switches.
    pub fn min_gap(&self) -> f64 {
        let mut prev = 0.0;
        let mut min = f64::INFINITY;
        for &t in &self.switch_times {
            min = min.min(t - prev);
            prev = t;
        }
        if min.is_finite() {
            min
        } else {
            self.horizon
        }
    }

    /// Membership in the dwell-time class: every gap `t_{k+1} - t_k`,
    /// with `t_0 = 0`, is at least `tau_d`.
    pub fn validate_dwell(&self, tau_d: f64) -> bool {
        let mut prev = 0.0;
        for &t in &self.switch_times {
            if t - prev < tau_d * (1.0 - TIME_SLACK) {
                return false;
            }
            prev = t;
        }
        true
    }

    /// Number of switch times strictly between the two instants.
    pub fn count_switches(&self, tau: f64, t: f64) -> usize {
        let (lo, hi) = if tau <= t { (tau, t) } else { (t, tau) };
        let start = self.switch_times.partition_point(|&s| s <= lo);
        let end = self.switch_times.partition_point(|&s| s < hi);
        end.saturating_sub(start)
    }

    /// Membership in the average-dwell-time class with chatter bound `n0`:
    /// `N(tau, t) <= n0 + (t - tau) / tau_d` for every interval.
    ///
    /// The count only changes at switch instants, so the supremum over open
    /// intervals is attained by intervals shrinking onto pairs of switch
    /// times `t_a <= t_b`, which contain `b - a + 1` switches.
    pub fn validate_average_dwell(&self, tau_d: f64, n0: f64) -> bool {
        // With w_k = k - (1 + slack) t_k / tau_d the pair condition
        // `b - a + 1 <= allowed + slack (1 + allowed)` reads
        // `w_b - w_a <= (1 + slack) n0 + slack - 1`, so a running minimum
        // of w covers every pair in one pass.
        let scale = (1.0 + TIME_SLACK) / tau_d;
        let budget = (1.0 + TIME_SLACK) * n0 + TIME_SLACK - 1.0;
        let mut lowest = f64::INFINITY;
        for (k, &t) in self.switch_times.iter().enumerate() {
            let w = k as f64 - scale * t;
            lowest = lowest.min(w);
            if w - lowest > budget {
                return false;
            }
        }
        true
    }
}

fn next_value(rng: &mut ChaCha8Rng, family_size: usize, current: usize) -> usize {
    let pick = rng.random_range(0..family_size - 1);
    if pick >= current {
        pick + 1
    } else {
        pick
    }
}

/// Random dwell-time signal: gaps uniform in `[tau_d, 2 tau_d]`.
pub fn generate_dwell(family_size: usize, tau_d: f64, horizon: f64, seed: u64) -> Result<SwitchingSignal> {
    check_generator_args(family_size, tau_d, horizon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut value = rng.random_range(0..family_size);
    let mut values = vec![value];
    let mut times = Vec::new();
    if family_size > 1 {
        let mut t = 0.0;
        loop {
            t += rng.random_range(tau_d..=2.0 * tau_d);
            if t >= horizon {
                break;
            }
            value = next_value(&mut rng, family_size, value);
            times.push(t);
            values.push(value);
        }
    }
    SwitchingSignal::new(times, values, horizon)
}

/// Signal switching every `gap` time units to a random different mode.
/// Used to approximate arbitrary switching at the integrator's resolution.
pub fn generate_fastest(family_size: usize, gap: f64, horizon: f64, seed: u64) -> Result<SwitchingSignal> {
    check_generator_args(family_size, gap, horizon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut value = rng.random_range(0..family_size);
    let mut values = vec![value];
    let mut times = Vec::new();
    if family_size > 1 {
        let mut k = 1;
        while (k as f64) * gap < horizon * (1.0 - TIME_SLACK) {
            value = next_value(&mut rng, family_size, value);
            times.push(k as f64 * gap);
            values.push(value);
            k += 1;
        }
    }
    SwitchingSignal::new(times, values, horizon)
}

/// Random average-dwell-time signal with bursts of closely spaced switches.
///
/// Switch instants are admitted by a token bucket of capacity `n0` that
/// refills at rate `1 / tau_d` and starts full; a sequence is admissible for
/// such a bucket exactly when it satisfies the average-dwell bound on every
/// interval. When `n0 > 1` the result contains at least one gap shorter than
/// `tau_d`.
pub fn generate_average_dwell(
    family_size: usize,
    tau_d: f64,
    n0: f64,
    horizon: f64,
    seed: u64,
) -> Result<SwitchingSignal> {
    check_generator_args(family_size, tau_d, horizon)?;
    if !(n0 >= 1.0) {
        return Err(Error::Validation(format!("chatter bound must be >= 1, got {n0}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if family_size == 1 {
        return SwitchingSignal::constant(0, horizon);
    }
    for _ in 0..MAX_GENERATION_ATTEMPTS {
        let mut value = rng.random_range(0..family_size);
        let mut values = vec![value];
        let mut times: Vec<f64> = Vec::new();
        let mut tokens = n0;
        let mut last = 0.0;
        let mut t = rng.random_range(tau_d..=2.0 * tau_d);
        loop {
            let mut available = (tokens + (t - last) / tau_d).min(n0);
            if available < 1.0 {
                t += (1.0 - available) * tau_d * (1.0 + TIME_SLACK) + f64::EPSILON * t;
                available = (tokens + (t - last) / tau_d).min(n0);
            }
            if t >= horizon {
                break;
            }
            value = next_value(&mut rng, family_size, value);
            times.push(t);
            values.push(value);
            tokens = available - 1.0;
            last = t;
            t += if rng.random_bool(0.6) {
                rng.random_range(0.05 * tau_d..=0.3 * tau_d)
            } else {
                rng.random_range(tau_d..=2.0 * tau_d)
            };
        }
        let signal = SwitchingSignal::new(times, values, horizon)?;
        let bursty = n0 <= 1.0 || !signal.validate_dwell(tau_d);
        if bursty && signal.validate_average_dwell(tau_d, n0) {
            return Ok(signal);
        }
    }
    Err(Error::GenerationFailed {
        attempts: MAX_GENERATION_ATTEMPTS,
    })
}

fn check_generator_args(family_size: usize, tau: f64, horizon: f64) -> Result<()> {
    if family_size == 0 {
        return Err(Error::Validation("family must contain at least one graph".into()));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Validation(format!("dwell time must be positive, got {tau}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Validation(format!("horizon must be positive, got {horizon}")));
    }
    Ok(())
}
