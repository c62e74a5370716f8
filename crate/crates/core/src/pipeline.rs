//! End-to-end runs: design, certify, simulate, estimate and report.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::design::{self, ObserverDesign};
use crate::error::{Error, Result};
use crate::errormodel::{self, ErrorModel};
use crate::gaincert::{self, BoundReport, CertificateOptions, GainCertificate};
use crate::linalg::{self, norm2};
use crate::scenario::{GainSpec, Scenario, SwitchingSpec};
use crate::simulate::{self, RateEstimate, Trajectory};
use crate::switching::SwitchingSignal;

/// Fraction of the target rate a fitted rate must reach.
pub const RATE_FRACTION: f64 = 0.95;
pub const BLOCK_TOL: f64 = 1e-9;
pub const Z1_TOL: f64 = 1e-6;
pub const CONSISTENCY_TOL: f64 = 1e-8;
const BOUND_SAMPLES: usize = 200;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replaces every seed in the scenario.
    pub seed: Option<u64>,
    pub step: Option<f64>,
    /// Replaces the scenario's gain.
    pub g: Option<f64>,
    /// `false` stops after design, certificate and structural checks.
    pub integrate: bool,
}

impl RunOptions {
    pub fn full() -> Self {
        Self {
            integrate: true,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub check: String,
    pub measured: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphReport {
    pub strongly_connected: bool,
    pub doubly_stochastic: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DesignReport {
    pub lambda_hat: f64,
    pub unobservable_dims: Vec<usize>,
    /// Slowest quotient eigenvalue real part over all agents.
    pub quotient_abscissa: f64,
    pub atilde_norm: f64,
    pub atilde_abscissa: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DoublyStochasticReport {
    pub threshold: f64,
    pub per_mode: Vec<bool>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SignalReport {
    pub switches: usize,
    pub min_gap: f64,
    pub tau_d: f64,
    pub n0: f64,
    pub dwell_ok: bool,
    pub average_dwell_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub aggregate: RateEstimate,
    pub per_agent: Vec<RateEstimate>,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InvariantReport {
    pub block_residual: f64,
    pub similarity_residual: f64,
    pub z1_deviation: Option<f64>,
    pub z1_tolerance: Option<f64>,
    pub consistency: Option<f64>,
    pub switched_bound: Option<BoundReport>,
    /// Constant used by the switched bound: `c^N_0`, with `N_0 = 1` under dwell time.
    pub switched_bound_c: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub status: &'static str,
    pub regime: &'static str,
    pub n: usize,
    pub m: usize,
    pub modes: usize,
    pub jointly_observable: bool,
    pub graphs: Vec<GraphReport>,
    pub design: DesignReport,
    pub certificate: GainCertificate,
    pub doubly_stochastic: Option<DoublyStochasticReport>,
    /// Gain the run must reach to be certified.
    pub g_min: f64,
    pub g: f64,
    pub g_auto: bool,
    pub certified: bool,
    pub step: Option<f64>,
    pub signal: Option<SignalReport>,
    pub invariants: InvariantReport,
    pub rate: Option<RateReport>,
    pub failures: Vec<Failure>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    /// One-line machine-readable digest.
    pub fn summary_line(&self) -> String {
        let fit = self
            .rate
            .as_ref()
            .map(|r| format!("{:.6}", r.aggregate.lambda_fit))
            .unwrap_or_else(|| "na".into());
        let lambda = self.certificate.lambda;
        let failed = if self.failures.is_empty() {
            "none".to_string()
        } else {
            self.failures
                .iter()
                .map(|f| f.check.as_str())
                .collect::<Vec<_>>()
                .join(",")
        };
        format!(
            "SUMMARY status={} regime={} g={:.6} g_min={:.6} lambda={lambda} lambda_fit={fit} failures={}",
            self.status, self.regime, self.g, self.g_min, failed
        )
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub design: ObserverDesign,
    pub errors: Option<Trajectory>,
}

fn apply_options(scenario: &Scenario, opts: &RunOptions) -> Scenario {
    let mut s = scenario.clone();
    if let Some(seed) = opts.seed {
        s.seed = seed;
        s.switching.reseed(seed);
        if let crate::scenario::InitialSpec::Seeded(_) = s.initial {
            s.initial = crate::scenario::InitialSpec::Seeded(seed);
        }
    }
    if let Some(h) = opts.step {
        s.step = Some(h);
    }
    if let Some(g) = opts.g {
        s.gain = GainSpec::Fixed(g);
    }
    s
}

fn fail(failures: &mut Vec<Failure>, check: impl Into<String>, measured: f64, threshold: f64) {
    failures.push(Failure {
        check: check.into(),
        measured,
        threshold,
    });
}

/// Runs the whole pipeline in memory.
pub fn run(scenario: &Scenario, opts: &RunOptions) -> Result<RunOutput> {
    let s = apply_options(scenario, opts);
    let tol = linalg::DEFAULT_RANK_TOL;
    let plant = &s.plant;
    let family = &s.family;
    let jointly_observable = plant.is_jointly_observable(tol);
    let design = design::build_observer(plant, s.lambda_hat, tol, s.seed)?;
    let mut failures = Vec::new();

    let ds_modes = family.doubly_stochastic_modes();
    let all_ds = ds_modes.iter().all(|&d| d);
    let arbitrary = matches!(s.switching, SwitchingSpec::Arbitrary { .. });

    // Explicit signals without tau_D use their own shortest gap.
    let explicit_signal = match &s.switching {
        SwitchingSpec::Explicit { .. } => Some(s.switching.realize(family.len(), s.horizon, 1.0)?),
        _ => None,
    };
    let (tau_d, n0) = match (&s.switching.dwell_parameters(), &explicit_signal) {
        (Some(p), _) => *p,
        (None, Some(sig)) => (sig.min_gap(), 1.0),
        (None, None) => (f64::NAN, 1.0),
    };

    let base = ErrorModel::new(design.clone(), family.clone(), 0.0)?;
    let ds_threshold = if all_ds {
        Some(errormodel::doubly_stochastic_gain_threshold(&design, family, s.lambda)?)
    } else {
        None
    };

    // Under arbitrary switching the gain comes from the common Lyapunov
    // certificate; the dwell-time bound is kept for diagnostics only, with
    // tau_D set to the fastest realizable gap once the step is known.
    let (g, g_auto, g_min, certificate, step, signal) = if arbitrary {
        let Some(threshold) = ds_threshold else {
            return Err(Error::Validation(
                "arbitrary switching needs every graph to give a doubly stochastic matrix".into(),
            ));
        };
        let (g, g_auto) = match s.gain {
            GainSpec::Auto { margin } => (margin * threshold, true),
            GainSpec::Fixed(g) => (g, false),
        };
        let model = base.with_gain(g)?;
        let step = match s.step {
            Some(h) => h,
            None => simulate::default_step(max_generator_norm(plant, &design, family, g, &model), f64::INFINITY),
        };
        let signal = s.switching.realize(family.len(), s.horizon, step)?;
        let certificate = gaincert::certify(&base, s.lambda, 2.0 * step, CertificateOptions::default())?;
        (g, g_auto, threshold, certificate, step, signal)
    } else {
        let certificate = gaincert::certify(&base, s.lambda, tau_d, CertificateOptions::default())?;
        let g_min = certificate.g_min;
        let (g, g_auto) = match s.gain {
            GainSpec::Auto { margin } => (margin * g_min, true),
            GainSpec::Fixed(g) => (g, false),
        };
        let signal = match explicit_signal {
            Some(sig) => sig,
            None => s.switching.realize(family.len(), s.horizon, 1.0)?,
        };
        let model = base.with_gain(g)?;
        let step = match s.step {
            Some(h) => h,
            None => simulate::default_step(max_generator_norm(plant, &design, family, g, &model), signal.min_gap()),
        };
        (g, g_auto, g_min, certificate, step, signal)
    };
    let model = base.with_gain(g)?;

    let doubly_stochastic = match ds_threshold {
        Some(threshold) => {
            let per_mode = model.doubly_stochastic_certificate(s.lambda)?;
            let pass = per_mode.iter().all(|&b| b);
            Some(DoublyStochasticReport {
                threshold,
                per_mode,
                pass,
            })
        }
        None => None,
    };

    let certified = if arbitrary {
        doubly_stochastic.as_ref().is_some_and(|d| d.pass)
    } else {
        g >= g_min
    };
    if !certified {
        fail(&mut failures, "certificate", g, g_min);
    }

    let block_residual = (0..model.num_modes())
        .map(|p| model.block_residual(p))
        .fold(0.0, f64::max);
    let similarity_residual = (0..model.num_modes())
        .map(|p| model.similarity_residual(p))
        .fold(0.0, f64::max);
    if block_residual > BLOCK_TOL {
        fail(&mut failures, "block_structure", block_residual, BLOCK_TOL);
    }
    let mut invariants = InvariantReport {
        block_residual,
        similarity_residual,
        z1_deviation: None,
        z1_tolerance: None,
        consistency: None,
        switched_bound: None,
        switched_bound_c: None,
    };

    let mut signal_report = None;
    let mut rate = None;
    let mut errors = None;
    let mut used_step = None;
    if opts.integrate {
        used_step = Some(step);
        signal_report = Some(SignalReport {
            switches: signal.num_switches(),
            min_gap: signal.min_gap(),
            tau_d: if arbitrary { 2.0 * step } else { tau_d },
            n0,
            dwell_ok: signal.validate_dwell(if arbitrary { 2.0 * step } else { tau_d }),
            average_dwell_ok: signal.validate_average_dwell(if arbitrary { 2.0 * step } else { tau_d }, n0),
        });

        let (x0, xhat0) = s.initial.realize(plant.n(), plant.m());
        let e0 = stack_errors(&x0, &xhat0);
        let direct = simulate::integrate_error(&model, &signal, &e0, step)?;
        let observer = simulate::integrate_observer(plant, &design, family, &signal, g, &x0, &xhat0, step)?;
        let derived = simulate::observer_errors(&observer);
        let consistency = direct
            .states
            .iter()
            .zip(&derived.states)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        let consistency_tol = CONSISTENCY_TOL * (1.0 + e0.norm());
        invariants.consistency = Some(consistency);
        if consistency > consistency_tol {
            fail(&mut failures, "consistency", consistency, consistency_tol);
        }

        let other = SwitchingSignal::constant(family.len() - 1, s.horizon)?;
        let z1 = simulate::z1_autonomy_check(&design, family, &signal, &other, g, 0.5 * g, &e0, step)?;
        let z1_tol = Z1_TOL * (1.0 + e0.norm());
        invariants.z1_deviation = Some(z1);
        invariants.z1_tolerance = Some(z1_tol);
        if z1 > z1_tol {
            fail(&mut failures, "z1_autonomy", z1, z1_tol);
        }

        let c = if arbitrary { 1.0 } else { certificate.c.powf(n0) };
        let bound = gaincert::verify_switched_bound(&model, &signal, s.lambda, c, BOUND_SAMPLES)?;
        invariants.switched_bound = Some(bound);
        invariants.switched_bound_c = Some(c);
        if !bound.pass {
            fail(&mut failures, "switched_bound", bound.max_ratio, 1.0);
        }

        let threshold = RATE_FRACTION * s.lambda;
        let fit = |t: &Trajectory| simulate::estimate_rate(t, simulate::DEFAULT_BURN_IN, simulate::DEFAULT_FLOOR);
        let aggregate = fit(&direct)?;
        if aggregate.lambda_fit < threshold {
            fail(&mut failures, "rate", aggregate.lambda_fit, threshold);
        }
        let per_agent = (0..plant.m())
            .map(|i| fit(&direct.block(i)))
            .collect::<Result<Vec<_>>>()?;
        for (i, r) in per_agent.iter().enumerate() {
            if r.lambda_fit < threshold {
                fail(&mut failures, format!("rate_agent_{}", i + 1), r.lambda_fit, threshold);
            }
        }
        rate = Some(RateReport {
            aggregate,
            per_agent,
            threshold,
        });
        errors = Some(direct);
    }

    let quotient = design.quotient_block();
    let report = RunReport {
        status: if failures.is_empty() { "PASS" } else { "FAIL" },
        regime: s.switching.regime(),
        n: plant.n(),
        m: plant.m(),
        modes: family.len(),
        jointly_observable,
        graphs: family
            .graphs()
            .iter()
            .zip(&ds_modes)
            .map(|(gr, &ds)| GraphReport {
                strongly_connected: gr.is_strongly_connected(),
                doubly_stochastic: ds,
            })
            .collect(),
        design: DesignReport {
            lambda_hat: design.lambda_hat,
            unobservable_dims: design.agents.iter().map(|a| a.unobservable_dim()).collect(),
            quotient_abscissa: linalg::spectral_abscissa(&quotient),
            atilde_norm: norm2(&design.atilde),
            atilde_abscissa: linalg::spectral_abscissa(&design.atilde),
        },
        certificate,
        doubly_stochastic,
        g_min,
        g,
        g_auto,
        certified,
        step: used_step,
        signal: signal_report,
        invariants,
        rate,
        failures,
    };
    Ok(RunOutput { report, design, errors })
}

fn max_generator_norm(
    plant: &crate::plant::Plant,
    design: &ObserverDesign,
    family: &crate::network::GraphFamily,
    g: f64,
    model: &ErrorModel,
) -> f64 {
    let observer = (0..family.len())
        .map(|p| norm2(&simulate::observer_matrix(plant, design, family, g, p)))
        .fold(0.0, f64::max);
    observer.max(model.max_mode_norm())
}

/// `(x_1 - x, ..., x_m - x)`.
pub fn stack_errors(x0: &DVector<f64>, xhat0: &[DVector<f64>]) -> DVector<f64> {
    let n = x0.len();
    let mut e = DVector::zeros(n * xhat0.len());
    for (i, xi) in xhat0.iter().enumerate() {
        e.rows_mut(i * n, n).copy_from(&(xi - x0));
    }
    e
}

/// Writes `report.json` and, when the run integrated, `trajectory.csv`.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut json = serde_json::to_string_pretty(&out.report).map_err(|e| Error::Validation(e.to_string()))?;
    json.push('\n');
    fs::write(dir.join("report.json"), json)?;
    if let Some(errors) = &out.errors {
        let file = fs::File::create(dir.join("trajectory.csv"))?;
        simulate::write_error_csv(BufWriter::new(file), &out.design, errors)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub g: f64,
    pub status: &'static str,
    pub g_min: f64,
    pub lambda_fit: Option<f64>,
    pub r_squared: Option<f64>,
    pub failures: Vec<String>,
}

/// Runs the scenario once per gain in parallel. Results come back in the
/// order of `gains`.
pub fn sweep(scenario: &Scenario, opts: &RunOptions, gains: &[f64]) -> Vec<Result<RunOutput>> {
    gains
        .par_iter()
        .map(|&g| {
            let opts = RunOptions {
                g: Some(g),
                integrate: true,
                ..opts.clone()
            };
            run(scenario, &opts)
        })
        .collect()
}

impl SweepPoint {
    pub fn from_report(report: &RunReport) -> Self {
        Self {
            g: report.g,
            status: report.status,
            g_min: report.g_min,
            lambda_fit: report.rate.as_ref().map(|r| r.aggregate.lambda_fit),
            r_squared: report.rate.as_ref().map(|r| r.aggregate.r_squared),
            failures: report.failures.iter().map(|f| f.check.clone()).collect(),
        }
    }
}
