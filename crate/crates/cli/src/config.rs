//! Scenario documents and `--set` overrides.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use wedgefield::dynamics::{EvolutionConfig, GaugeConfig, ScanAxis, ScanConfig};
use wedgefield::{DenseBudget, GridSpec, PhysicsParams, PotentialSpec};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Spectrum,
    Evolve,
    Scan,
    Qnorm,
    Lift,
    Gauge,
    WedgeSuite,
}

impl Experiment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::Spectrum => "spectrum",
            Experiment::Evolve => "evolve",
            Experiment::Scan => "scan",
            Experiment::Qnorm => "qnorm",
            Experiment::Lift => "lift",
            Experiment::Gauge => "gauge",
            Experiment::WedgeSuite => "wedge-suite",
        }
    }

    /// Whether the experiment draws random numbers and so needs a seed.
    pub fn stochastic(&self) -> bool {
        matches!(
            self,
            Experiment::Qnorm | Experiment::Lift | Experiment::WedgeSuite
        )
    }
}

/// Grid ‖Q‖² against the trace formula over a list of cutoffs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QNormSection {
    pub axis: ScanAxis,
    /// Time at which Q is evaluated.
    pub time: f64,
    #[serde(default = "default_qmc_points")]
    pub points: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_qmc_points() -> usize {
    1 << 14
}

fn default_replicates() -> usize {
    8
}

fn default_threshold() -> f64 {
    0.02
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiftSection {
    /// Smallest admissible singular value of the sea overlap.
    #[serde(default = "default_lift_threshold")]
    pub threshold: f64,
    /// Number of random determinant-one rephasings.
    #[serde(default = "default_rephasings")]
    pub rephasings: usize,
    #[serde(default)]
    pub write_seas: bool,
}

impl Default for LiftSection {
    fn default() -> Self {
        LiftSection {
            threshold: default_lift_threshold(),
            rephasings: default_rephasings(),
            write_seas: false,
        }
    }
}

fn default_lift_threshold() -> f64 {
    1e-8
}

fn default_rephasings() -> usize {
    8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WedgeSection {
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Largest ambient dimension N of a random sea.
    #[serde(default = "default_max_n")]
    pub max_n: usize,
    /// Largest index dimension M of a random sea.
    #[serde(default = "default_max_m")]
    pub max_m: usize,
    /// Fock window {−K, …, L}.
    #[serde(default = "default_window")]
    pub window: (usize, usize),
}

impl Default for WedgeSection {
    fn default() -> Self {
        WedgeSection {
            trials: default_trials(),
            max_n: default_max_n(),
            max_m: default_max_m(),
            window: default_window(),
        }
    }
}

fn default_trials() -> usize {
    200
}

fn default_max_n() -> usize {
    10
}

fn default_max_m() -> usize {
    4
}

fn default_window() -> (usize, usize) {
    (4, 3)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub grid: GridSpec,
    #[serde(default)]
    pub physics: PhysicsParams,
    #[serde(default = "PotentialSpec::zero")]
    pub potential: PotentialSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evolution: Option<EvolutionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gauge: Option<GaugeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qnorm: Option<QNormSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lift: Option<LiftSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wedge: Option<WedgeSection>,
    /// Bytes allowed for dense operator storage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dense_budget: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ScenarioConfig {
    /// Parses a JSON document, reporting the failing field path.
    pub fn from_slice(bytes: &[u8]) -> CliResult<Self> {
        let value: Value = serde_json::from_slice(bytes).map_err(|e| {
            CliError::config(
                format!("line {} column {}", e.line(), e.column()),
                e.to_string(),
            )
        })?;
        Self::from_value(&value)
    }

    pub fn from_value(value: &Value) -> CliResult<Self> {
        serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            CliError::config(path, e.into_inner().to_string())
        })
    }

    pub fn budget(&self) -> DenseBudget {
        self.dense_budget.map(DenseBudget).unwrap_or_default()
    }

    /// Checks that every section `exp` needs is present and valid.
    pub fn validate(&self, exp: Experiment) -> CliResult<()> {
        if let Some(declared) = self.experiment {
            if declared != exp {
                return Err(CliError::config(
                    "experiment",
                    format!(
                        "config declares `{}` but `{}` was requested",
                        declared.as_str(),
                        exp.as_str()
                    ),
                ));
            }
        }
        if exp.stochastic() && self.seed.is_none() {
            return Err(CliError::config(
                "seed",
                format!("required for `{}`", exp.as_str()),
            ));
        }
        self.grid.validate()?;
        self.physics.validate()?;
        self.potential.validate()?;
        if let Some(ev) = &self.evolution {
            ev.validate()?;
        }
        let needs_evolution = matches!(
            exp,
            Experiment::Evolve | Experiment::Scan | Experiment::Gauge | Experiment::Lift
        );
        if needs_evolution && self.evolution.is_none() {
            return Err(CliError::config(
                "evolution",
                format!("section required for `{}`", exp.as_str()),
            ));
        }
        match exp {
            Experiment::Scan => {
                let scan = self
                    .scan
                    .as_ref()
                    .ok_or_else(|| CliError::config("scan", "section required"))?;
                if !(scan.threshold.is_finite() && scan.threshold > 0.0) {
                    return Err(CliError::config("scan.threshold", "must be positive"));
                }
                scan.grid_sizes(self.grid.box_length)?;
            }
            Experiment::Gauge => {
                let g = self
                    .gauge
                    .as_ref()
                    .ok_or_else(|| CliError::config("gauge", "section required"))?;
                if g.steps.is_empty() || g.steps.contains(&0) {
                    return Err(CliError::config(
                        "gauge.steps",
                        "must be a nonempty list of positive step counts",
                    ));
                }
            }
            Experiment::Qnorm => {
                let q = self
                    .qnorm
                    .as_ref()
                    .ok_or_else(|| CliError::config("qnorm", "section required"))?;
                if !q.time.is_finite() {
                    return Err(CliError::config("qnorm.time", "must be finite"));
                }
                if q.replicates < 2 || q.points == 0 {
                    return Err(CliError::config(
                        "qnorm.replicates",
                        "need at least 2 replicates and 1 point",
                    ));
                }
                ScanConfig {
                    axis: q.axis.clone(),
                    threshold: q.threshold,
                }
                .grid_sizes(self.grid.box_length)?;
            }
            Experiment::WedgeSuite => {
                let w = self.wedge.clone().unwrap_or_default();
                if w.max_m == 0 || w.max_n <= w.max_m || w.max_n > 12 {
                    return Err(CliError::config("wedge", "need 1 <= max_m < max_n <= 12"));
                }
                if w.window.0 + w.window.1 + 1 > 12 {
                    return Err(CliError::config("wedge.window", "at most 12 modes"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// SHA-256 of the canonical JSON form (sorted keys, no output path).
pub fn config_hash(value: &Value) -> String {
    let mut v = value.clone();
    if let Value::Object(map) = &mut v {
        map.remove("output");
    }
    let bytes = serde_json::to_vec(&v).expect("JSON value serializes");
    format!("sha256:{}", hex::encode(Sha256::digest(&bytes)))
}

/// One `--set path=value` override.
#[derive(Clone, Debug, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: Value,
}

/// Parses `a.b.0.c=VALUE`. The value is read as JSON when it parses, else as a string.
pub fn parse_override(raw: &str) -> CliResult<Override> {
    let err = |m: &str| CliError::Override {
        raw: raw.to_string(),
        message: m.to_string(),
    };
    let (key, val) = raw
        .split_once('=')
        .ok_or_else(|| err("expected KEY=VALUE"))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(err("empty key"));
    }
    let path: Vec<String> = key.split('.').map(str::to_string).collect();
    if path.iter().any(|s| s.is_empty()) {
        return Err(err("empty path segment"));
    }
    let value = serde_json::from_str(val).unwrap_or_else(|_| Value::String(val.to_string()));
    Ok(Override { path, value })
}

/// Writes `ov.value` at `ov.path`, creating missing object keys.
pub fn apply_override(doc: &mut Value, ov: &Override) -> CliResult<()> {
    let dotted = ov.path.join(".");
    let err = |m: String| CliError::Override {
        raw: dotted.clone(),
        message: m,
    };
    let mut cur = doc;
    for (depth, seg) in ov.path.iter().enumerate() {
        let last = depth + 1 == ov.path.len();
        if cur.is_null() {
            *cur = Value::Object(Default::default());
        }
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(seg.clone(), ov.value.clone());
                    return Ok(());
                }
                map.entry(seg.clone())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let len = items.len();
                let idx: usize = seg
                    .parse()
                    .map_err(|_| err(format!("`{seg}` is not an array index")))?;
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| err(format!("index {idx} out of range (length {len})")))?;
                if last {
                    *slot = ov.value.clone();
                    return Ok(());
                }
                slot
            }
            other => {
                return Err(err(format!(
                    "cannot descend into {} at `{seg}`",
                    kind(other)
                )))
            }
        };
    }
    Ok(())
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

/// Reads the document, applies overrides in order and parses the result.
pub fn load(bytes: &[u8], overrides: &[String]) -> CliResult<(Value, ScenarioConfig)> {
    let mut doc: Value = serde_json::from_slice(bytes).map_err(|e| {
        CliError::config(
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    for raw in overrides {
        apply_override(&mut doc, &parse_override(raw)?)?;
    }
    let cfg = ScenarioConfig::from_value(&doc)?;
    Ok((doc, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    const MINIMAL: &str = r#"{"grid": {"dim": 1, "n": 16, "box_length": 8.0}}"#;

    #[test]
    fn minimal_document_parses() {
        let c = ScenarioConfig::from_slice(MINIMAL.as_bytes()).unwrap();
        assert_eq!(c.grid.n, 16);
        assert!(c.potential.is_zero());
        assert_eq!(c.physics, PhysicsParams::default());
        c.validate(Experiment::Spectrum).unwrap();
    }

    #[test]
    fn errors_carry_field_paths() {
        let bad = r#"{"grid": {"dim": 1, "n": "many", "box_length": 8.0}}"#;
        match ScenarioConfig::from_slice(bad.as_bytes()) {
            Err(CliError::Config { path, .. }) => assert_eq!(path, "grid.n"),
            other => panic!("{other:?}"),
        }
        let unknown = r#"{"grid": {"dim": 1, "n": 16, "box_length": 8.0, "extra": 1}}"#;
        assert!(matches!(
            ScenarioConfig::from_slice(unknown.as_bytes()),
            Err(CliError::Config { .. })
        ));
        match ScenarioConfig::from_slice(b"{\"grid\": ") {
            Err(CliError::Config { path, .. }) => assert!(path.starts_with("line 1")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stochastic_experiments_need_a_seed() {
        let c = ScenarioConfig::from_slice(MINIMAL.as_bytes()).unwrap();
        assert!(
            matches!(c.validate(Experiment::WedgeSuite), Err(CliError::Config { path, .. }) if path == "seed")
        );
        assert!(
            matches!(c.validate(Experiment::Evolve), Err(CliError::Config { path, .. }) if path == "evolution")
        );
    }

    #[test]
    fn overrides_edit_nested_values() {
        let (doc, cfg) = load(
            MINIMAL.as_bytes(),
            &[
                "grid.n=32".into(),
                "seed=9".into(),
                "physics.m=2.5".into(),
                "output=runs/a".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.grid.n, 32);
        assert_eq!(cfg.seed, Some(9));
        assert_eq!(cfg.physics.m, 2.5);
        assert_eq!(doc["output"], json!("runs/a"));
    }

    #[test]
    fn overrides_index_arrays() {
        let mut doc = json!({"a": [1, {"b": 2}]});
        apply_override(&mut doc, &parse_override("a.1.b=[3,4]").unwrap()).unwrap();
        assert_eq!(doc, json!({"a": [1, {"b": [3, 4]}]}));
        assert!(apply_override(&mut doc, &parse_override("a.5=0").unwrap()).is_err());
        assert!(apply_override(&mut doc, &parse_override("a.0.c=0").unwrap()).is_err());
        assert!(parse_override("novalue").is_err());
        assert!(parse_override("a..b=1").is_err());
        assert!(parse_override("=1").is_err());
    }

    #[test]
    fn hash_ignores_output_and_key_order() {
        let a = json!({"grid": {"n": 4, "dim": 1}, "output": "x"});
        let b = json!({"grid": {"dim": 1, "n": 4}, "output": "y"});
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_ne!(
            config_hash(&a),
            config_hash(&json!({"grid": {"n": 8, "dim": 1}}))
        );
    }

    proptest! {
        #[test]
        fn override_parsing_never_panics(raw in ".{0,40}") {
            if let Ok(ov) = parse_override(&raw) {
                let mut doc = json!({"grid": {"n": 4}, "list": [0, 1]});
                let _ = apply_override(&mut doc, &ov);
            }
        }

        #[test]
        fn scalar_override_round_trips(n in 4usize..1000) {
            let (_, cfg) = load(MINIMAL.as_bytes(), &[format!("grid.n={n}")]).unwrap();
            prop_assert_eq!(cfg.grid.n, n);
        }
    }
}
