//! JSON scenario files.
//!
//! ```json
//! {
//!   "plant": { "A": [[1, 0], [0, -1]], "channels": [[[1, 0]], [[0, 1]]] },
//!   "graphs": [[[0, 1], [1, 0]]],
//!   "switching": { "kind": "dwell", "tau_D": 1.0, "seed": 7 },
//!   "lambda": 1.0,
//!   "g": "auto",
//!   "horizon": 10.0,
//!   "seed": 0,
//!   "initial": { "seed": 1 }
//! }
//! ```
//!
//! Arcs are `[j, i]` (agent `i` hears agent `j`), agents are numbered from 0
//! and self-loops are added on load.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::network::{GraphFamily, NeighborGraph};
use crate::plant::Plant;
use crate::random;
use crate::switching::{self, SwitchingSignal};

pub const DEFAULT_G_MARGIN: f64 = 1.2;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlant {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    channels: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum RawGain {
    Value(f64),
    Keyword(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    plant: RawPlant,
    graphs: Vec<Vec<[usize; 2]>>,
    switching: serde_json::Value,
    lambda: f64,
    #[serde(default)]
    lambda_hat: Option<f64>,
    #[serde(default)]
    g: Option<RawGain>,
    #[serde(default)]
    g_margin: Option<f64>,
    #[serde(default)]
    step: Option<f64>,
    horizon: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    initial: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExplicitSignal {
    switch_times: Vec<f64>,
    values: Vec<usize>,
    #[serde(rename = "tau_D", default)]
    tau_d: Option<f64>,
    #[serde(rename = "N_0", default)]
    n0: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGenerator {
    kind: String,
    #[serde(rename = "tau_D", default)]
    tau_d: Option<f64>,
    #[serde(rename = "N_0", default)]
    n0: Option<f64>,
    #[serde(default)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExplicitInitial {
    x0: Vec<f64>,
    xhat0: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSeededInitial {
    seed: u64,
}

/// How the switching signal is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum SwitchingSpec {
    /// Given switch instants; `n0` set means the average-dwell regime.
    Explicit {
        switch_times: Vec<f64>,
        values: Vec<usize>,
        tau_d: Option<f64>,
        n0: Option<f64>,
    },
    Dwell {
        tau_d: f64,
        seed: u64,
    },
    AverageDwell {
        tau_d: f64,
        n0: f64,
        seed: u64,
    },
    /// Fastest switching the integrator resolves: a switch every two steps.
    Arbitrary {
        seed: u64,
    },
}

impl SwitchingSpec {
    /// `(tau_D, N_0)` used by the gain bound; `None` under arbitrary switching.
    pub fn dwell_parameters(&self) -> Option<(f64, f64)> {
        match self {
            SwitchingSpec::Explicit { tau_d, n0, .. } => tau_d.map(|t| (t, n0.unwrap_or(1.0))),
            SwitchingSpec::Dwell { tau_d, .. } => Some((*tau_d, 1.0)),
            SwitchingSpec::AverageDwell { tau_d, n0, .. } => Some((*tau_d, *n0)),
            SwitchingSpec::Arbitrary { .. } => None,
        }
    }

    pub fn regime(&self) -> &'static str {
        match self {
            SwitchingSpec::Explicit { n0: Some(_), .. } | SwitchingSpec::AverageDwell { .. } => "average_dwell",
            SwitchingSpec::Explicit { .. } | SwitchingSpec::Dwell { .. } => "dwell",
            SwitchingSpec::Arbitrary { .. } => "arbitrary",
        }
    }

    /// Builds the signal. `step` is only used by the arbitrary regime.
    pub fn realize(&self, family_size: usize, horizon: f64, step: f64) -> Result<SwitchingSignal> {
        match self {
            SwitchingSpec::Explicit {
                switch_times, values, ..
            } => SwitchingSignal::new(switch_times.clone(), values.clone(), horizon),
            SwitchingSpec::Dwell { tau_d, seed } => switching::generate_dwell(family_size, *tau_d, horizon, *seed),
            SwitchingSpec::AverageDwell { tau_d, n0, seed } => {
                switching::generate_average_dwell(family_size, *tau_d, *n0, horizon, *seed)
            }
            SwitchingSpec::Arbitrary { seed } => switching::generate_fastest(family_size, 2.0 * step, horizon, *seed),
        }
    }

    /// Overrides the generator seed; explicit signals are unaffected.
    pub fn reseed(&mut self, new_seed: u64) {
        match self {
            SwitchingSpec::Explicit { .. } => {}
            SwitchingSpec::Dwell { seed, .. }
            | SwitchingSpec::AverageDwell { seed, .. }
            | SwitchingSpec::Arbitrary { seed } => *seed = new_seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainSpec {
    /// `margin * g_min`.
    Auto {
        margin: f64,
    },
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    Explicit { x0: DVector<f64>, xhat0: Vec<DVector<f64>> },
    Seeded(u64),
}

impl InitialSpec {
    /// `(x0, [x_1(0), ..., x_m(0)])`.
    pub fn realize(&self, n: usize, m: usize) -> (DVector<f64>, Vec<DVector<f64>>) {
        match self {
            InitialSpec::Explicit { x0, xhat0 } => (x0.clone(), xhat0.clone()),
            InitialSpec::Seeded(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let x0 = random::gaussian_vector(&mut rng, n);
                let xhat0 = (0..m).map(|_| random::gaussian_vector(&mut rng, n)).collect();
                (x0, xhat0)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub plant: Plant,
    pub family: GraphFamily,
    pub switching: SwitchingSpec,
    pub lambda: f64,
    pub lambda_hat: f64,
    pub gain: GainSpec,
    pub step: Option<f64>,
    pub horizon: f64,
    /// Seed for the spectrum-assignment draws.
    pub seed: u64,
    pub initial: InitialSpec,
}

fn parse_error(e: serde_json::Error, location: &str) -> Error {
    let location = if e.line() > 0 {
        format!("{location}line {} column {}", e.line(), e.column())
    } else {
        location.trim_end_matches(", ").to_string()
    };
    Error::Parse {
        location,
        message: e.to_string(),
    }
}

fn matrix(rows: &[Vec<f64>], what: &str, cols: Option<usize>) -> Result<DMatrix<f64>> {
    let width = cols.or_else(|| rows.first().map(Vec::len)).unwrap_or(0);
    linalg::from_rows(rows, width)
        .ok_or_else(|| Error::Validation(format!("{what}: rows must all have {width} entries")))
}

fn positive(value: f64, what: &str) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Validation(format!("{what} must be positive, got {value}")))
    }
}

fn parse_switching(value: serde_json::Value) -> Result<SwitchingSpec> {
    let is_generator = value.get("kind").is_some();
    if !is_generator {
        let raw: RawExplicitSignal = serde_json::from_value(value).map_err(|e| parse_error(e, "switching, "))?;
        if let Some(t) = raw.tau_d {
            positive(t, "switching.tau_D")?;
        }
        if let Some(n0) = raw.n0 {
            if !(n0 >= 1.0) {
                return Err(Error::Validation(format!("switching.N_0 must be >= 1, got {n0}")));
            }
        }
        return Ok(SwitchingSpec::Explicit {
            switch_times: raw.switch_times,
            values: raw.values,
            tau_d: raw.tau_d,
            n0: raw.n0,
        });
    }
    let raw: RawGenerator = serde_json::from_value(value).map_err(|e| parse_error(e, "switching, "))?;
    let seed = raw.seed.unwrap_or(0);
    let tau = || -> Result<f64> {
        positive(
            raw.tau_d
                .ok_or_else(|| Error::Validation(format!("switching kind \"{}\" needs tau_D", raw.kind)))?,
            "switching.tau_D",
        )
    };
    match raw.kind.as_str() {
        "dwell" => Ok(SwitchingSpec::Dwell { tau_d: tau()?, seed }),
        "average_dwell" => {
            let n0 = raw
                .n0
                .ok_or_else(|| Error::Validation("switching kind \"average_dwell\" needs N_0".into()))?;
            if !(n0 >= 1.0) {
                return Err(Error::Validation(format!("switching.N_0 must be >= 1, got {n0}")));
            }
            Ok(SwitchingSpec::AverageDwell {
                tau_d: tau()?,
                n0,
                seed,
            })
        }
        "arbitrary" => Ok(SwitchingSpec::Arbitrary { seed }),
        other => Err(Error::Validation(format!(
            "unknown switching kind \"{other}\" (expected dwell, average_dwell or arbitrary)"
        ))),
    }
}

fn parse_initial(value: Option<serde_json::Value>, n: usize, m: usize) -> Result<InitialSpec> {
    let Some(value) = value else {
        return Ok(InitialSpec::Seeded(0));
    };
    if value.get("seed").is_some() {
        let raw: RawSeededInitial = serde_json::from_value(value).map_err(|e| parse_error(e, "initial, "))?;
        return Ok(InitialSpec::Seeded(raw.seed));
    }
    let raw: RawExplicitInitial = serde_json::from_value(value).map_err(|e| parse_error(e, "initial, "))?;
    if raw.x0.len() != n || raw.xhat0.len() != m || raw.xhat0.iter().any(|x| x.len() != n) {
        return Err(Error::Validation(format!(
            "initial: x0 needs {n} entries and xhat0 {m} vectors of {n} entries"
        )));
    }
    Ok(InitialSpec::Explicit {
        x0: DVector::from_vec(raw.x0),
        xhat0: raw.xhat0.into_iter().map(DVector::from_vec).collect(),
    })
}

/// Parses and validates a scenario held in memory.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let raw: RawScenario = serde_json::from_str(text).map_err(|e| parse_error(e, ""))?;

    let a = matrix(&raw.plant.a, "plant.A", None)?;
    let n = a.nrows();
    let channels = raw
        .plant
        .channels
        .iter()
        .enumerate()
        .map(|(i, c)| matrix(c, &format!("plant.channels[{i}]"), Some(n)))
        .collect::<Result<Vec<_>>>()?;
    let plant = Plant::new(a, channels).map_err(|e| Error::Validation(format!("plant: {e}")))?;
    let m = plant.m();

    if raw.graphs.is_empty() {
        return Err(Error::Validation("graphs: at least one graph is required".into()));
    }
    let graphs = raw
        .graphs
        .iter()
        .enumerate()
        .map(|(p, arcs)| {
            NeighborGraph::new(m, arcs.iter().map(|&[j, i]| (j, i)))
                .map_err(|e| Error::Validation(format!("graph {p}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let family = GraphFamily::new(graphs).map_err(|e| match e {
        Error::Validation(msg) => Error::Validation(msg),
        other => Error::Validation(other.to_string()),
    })?;

    let switching = parse_switching(raw.switching)?;
    let lambda = positive(raw.lambda, "lambda")?;
    let lambda_hat = match raw.lambda_hat {
        Some(lh) => positive(lh, "lambda_hat")?,
        None => lambda + 1.0,
    };
    let margin = positive(raw.g_margin.unwrap_or(DEFAULT_G_MARGIN), "g_margin")?;
    let gain = match raw.g {
        None => GainSpec::Auto { margin },
        Some(RawGain::Keyword(k)) if k == "auto" => GainSpec::Auto { margin },
        Some(RawGain::Keyword(k)) => {
            return Err(Error::Validation(format!(
                "g must be a number or \"auto\", got \"{k}\""
            )))
        }
        Some(RawGain::Value(g)) if g >= 0.0 && g.is_finite() => GainSpec::Fixed(g),
        Some(RawGain::Value(g)) => return Err(Error::Validation(format!("g must be >= 0, got {g}"))),
    };
    let step = raw.step.map(|h| positive(h, "step")).transpose()?;
    let horizon = positive(raw.horizon, "horizon")?;
    let initial = parse_initial(raw.initial, n, m)?;

    let scenario = Scenario {
        plant,
        family,
        switching,
        lambda,
        lambda_hat,
        gain,
        step,
        horizon,
        seed: raw.seed,
        initial,
    };
    if let SwitchingSpec::Explicit { .. } = scenario.switching {
        // explicit signals can be checked now; generators need the step
        let signal = scenario
            .switching
            .realize(scenario.family.len(), horizon, 1.0)
            .map_err(|e| Error::Validation(format!("switching: {e}")))?;
        if signal.max_value() >= scenario.family.len() {
            return Err(Error::Validation(format!(
                "switching: mode {} used but only {} graphs given",
                signal.max_value(),
                scenario.family.len()
            )));
        }
    }
    Ok(scenario)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "plant": { "A": [[1, 0], [0, -1]], "channels": [[[1, 0]], [[0, 1]]] },
        "graphs": [[[0, 1], [1, 0]]],
        "switching": { "kind": "dwell", "tau_D": 1.0, "seed": 7 },
        "lambda": 1.0,
        "g": "auto",
        "horizon": 10.0
    }"#;

    fn with(field: &str, value: &str) -> String {
        let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        v[field] = serde_json::from_str(value).unwrap();
        v.to_string()
    }

    #[test]
    fn minimal_scenario_loads() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert_eq!((s.plant.n(), s.plant.m()), (2, 2));
        assert_eq!(s.gain, GainSpec::Auto { margin: 1.2 });
        assert_eq!(s.lambda_hat, 2.0);
        assert_eq!(s.switching, SwitchingSpec::Dwell { tau_d: 1.0, seed: 7 });
        // self-loops added on load
        assert_eq!(s.family.graph(0).in_degree(0), 2);
        assert_eq!(s.initial, InitialSpec::Seeded(0));
    }

    #[test]
    fn fixed_gain_and_explicit_parts() {
        let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        v["g"] = 5.0.into();
        v["switching"] = serde_json::json!({ "switch_times": [2.0], "values": [0, 0] });
        assert!(parse_scenario(&v.to_string()).is_err());
        v["graphs"] = serde_json::json!([[[0, 1], [1, 0]], [[0, 1], [1, 0]]]);
        v["switching"] = serde_json::json!({ "switch_times": [2.0], "values": [0, 1], "tau_D": 2.0 });
        v["initial"] = serde_json::json!({ "x0": [1, 2], "xhat0": [[0, 0], [0, 0]] });
        let s = parse_scenario(&v.to_string()).unwrap();
        assert_eq!(s.gain, GainSpec::Fixed(5.0));
        assert_eq!(s.switching.dwell_parameters(), Some((2.0, 1.0)));
        assert_eq!(s.switching.regime(), "dwell");
        let (x0, xhat0) = s.initial.realize(2, 2);
        assert_eq!(x0.as_slice(), &[1.0, 2.0]);
        assert_eq!(xhat0.len(), 2);
    }

    #[test]
    fn syntax_errors_carry_a_position() {
        let err = parse_scenario("{\n  \"lambda\": 1.0,\n  \"horizon\": ,\n}").unwrap_err();
        match err {
            Error::Parse { location, .. } => assert!(location.starts_with("line 3"), "{location}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn disconnected_graph_is_named() {
        let text = with("graphs", "[[[0, 1], [1, 0]], [[0, 1]]]");
        let err = parse_scenario(&text).unwrap_err().to_string();
        assert!(err.contains("graph 1"), "{err}");
    }

    #[test]
    fn bad_values_are_rejected() {
        for (field, value) in [
            ("lambda", "0"),
            ("lambda", "-1"),
            ("horizon", "0"),
            ("g", "\"fast\""),
            ("g", "-2"),
            ("step", "0"),
            ("graphs", "[[[0, 5]]]"),
            ("switching", r#"{"kind": "dwell"}"#),
            ("switching", r#"{"kind": "sometimes", "tau_D": 1}"#),
            ("switching", r#"{"kind": "average_dwell", "tau_D": 1, "N_0": 0.5}"#),
            ("initial", r#"{"x0": [1], "xhat0": [[0, 0], [0, 0]]}"#),
        ] {
            let err = parse_scenario(&with(field, value)).unwrap_err();
            assert!(err.is_input_error(), "{field}={value}: {err}");
        }
        let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        v["plant"]["channels"] = serde_json::json!([[[1, 0, 0]], [[0, 1]]]);
        assert!(parse_scenario(&v.to_string()).is_err());
        v["plant"]["channels"] = serde_json::json!([[[1, 0]], [[0, 1]], [[1, 1]]]);
        // three channels but the arcs only mention two agents: agent 2 is isolated
        assert!(parse_scenario(&v.to_string())
            .unwrap_err()
            .to_string()
            .contains("graph 0"));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = parse_scenario(&with("gain", "3")).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn generator_regimes() {
        let s = parse_scenario(&with("switching", r#"{"kind": "average_dwell", "tau_D": 1, "N_0": 3}"#)).unwrap();
        assert_eq!(s.switching.dwell_parameters(), Some((1.0, 3.0)));
        assert_eq!(s.switching.regime(), "average_dwell");
        let s = parse_scenario(&with("switching", r#"{"kind": "arbitrary", "seed": 2}"#)).unwrap();
        assert_eq!(s.switching.dwell_parameters(), None);
        let sig = s.switching.realize(1, 1.0, 0.01).unwrap();
        assert_eq!(sig.num_switches(), 0);
    }
}
