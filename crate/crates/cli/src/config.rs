use std::fmt;

use arcbound::flows::TransportMode;
use arcbound::geometry::PolyTable;
use serde::Serialize;
use serde_json::{Map, Value};

/// One problem found while validating a config, located by a dotted path.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

/// All problems found in a config.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError(pub Vec<ConfigIssue>);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config ({} problem{})", self.0.len(), if self.0.len() == 1 { "" } else { "s" })?;
        for i in &self.0 {
            write!(f, "\n  {}: {}", i.path, i.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum SystemSpec {
    Fixture(String),
    Polynomial { name: String, x1: PolyTable, x2: PolyTable },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Tolerances {
    pub integrator: f64,
    pub eps_zero: f64,
    pub eps_hit: f64,
    pub rank: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FramesConfig {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub samples: usize,
    pub threshold: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Initial {
    /// Switching values `(φ1, φ2, φ12)` at `q0`.
    Switching([f64; 3]),
    Covector([f64; 3]),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulateConfig {
    pub q0: [f64; 3],
    pub initial: Initial,
    pub horizon: f64,
    pub normalize: bool,
    pub singular_exit: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SecondOrderConfig {
    pub t1: Vec<f64>,
    pub mode: TransportMode,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RandomTargets {
    pub count: usize,
    pub arcs: usize,
    pub horizon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleConfig {
    pub q0: [f64; 3],
    pub targets: Vec<[f64; 3]>,
    pub random_targets: Option<RandomTargets>,
    pub max_arcs: usize,
    pub t_max: f64,
    pub singular: bool,
    pub starts: usize,
    pub tol_rel: f64,
    pub margin: f64,
}

/// Validated run configuration with every default filled in.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub system: SystemSpec,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub frames: FramesConfig,
    pub simulate: SimulateConfig,
    pub second_order: SecondOrderConfig,
    pub oracle: OracleConfig,
}

struct Checker {
    issues: Vec<ConfigIssue>,
}

impl Checker {
    fn push(&mut self, path: &str, message: impl Into<String>) {
        self.issues.push(ConfigIssue { path: path.to_string(), message: message.into() });
    }

    fn object<'a>(&mut self, root: &'a Map<String, Value>, key: &str, path: &str, allowed: &[&str]) -> Option<&'a Map<String, Value>> {
        match root.get(key) {
            None | Some(Value::Null) => None,
            Some(Value::Object(m)) => {
                for k in m.keys() {
                    if !allowed.contains(&k.as_str()) {
                        self.push(&format!("{path}.{k}"), "unknown field");
                    }
                }
                Some(m)
            }
            Some(_) => {
                self.push(path, "expected an object");
                None
            }
        }
    }

    fn number(&mut self, m: Option<&Map<String, Value>>, key: &str, path: &str, default: f64, positive: bool) -> f64 {
        let Some(v) = m.and_then(|m| m.get(key)) else { return default };
        match v.as_f64() {
            Some(x) if !x.is_finite() => {
                self.push(path, "must be finite");
                default
            }
            Some(x) if positive && x <= 0.0 => {
                self.push(path, format!("must be positive, got {x}"));
                default
            }
            Some(x) => x,
            None => {
                self.push(path, "expected a number");
                default
            }
        }
    }

    fn count(&mut self, m: Option<&Map<String, Value>>, key: &str, path: &str, default: usize) -> usize {
        let Some(v) = m.and_then(|m| m.get(key)) else { return default };
        match v.as_u64() {
            Some(0) => {
                self.push(path, "must be at least 1");
                default
            }
            Some(n) => n as usize,
            None => {
                self.push(path, "expected a positive integer");
                default
            }
        }
    }

    fn flag(&mut self, m: Option<&Map<String, Value>>, key: &str, path: &str, default: bool) -> bool {
        let Some(v) = m.and_then(|m| m.get(key)) else { return default };
        v.as_bool().unwrap_or_else(|| {
            self.push(path, "expected true or false");
            default
        })
    }

    fn triple(&mut self, v: &Value, path: &str) -> Option<[f64; 3]> {
        let arr = v.as_array().filter(|a| a.len() == 3);
        let vals: Option<Vec<f64>> = arr.map(|a| a.iter().map(Value::as_f64).collect()).unwrap_or(None);
        match vals {
            Some(v) if v.iter().all(|x| x.is_finite()) => Some([v[0], v[1], v[2]]),
            _ => {
                self.push(path, "expected an array of three finite numbers");
                None
            }
        }
    }

    fn point(&mut self, m: Option<&Map<String, Value>>, key: &str, path: &str, default: [f64; 3]) -> [f64; 3] {
        match m.and_then(|m| m.get(key)) {
            Some(v) => self.triple(v, path).unwrap_or(default),
            None => default,
        }
    }
}

/// Parses and validates a raw config, collecting every problem.
///
/// Only `system` is required. It is either a fixture name or an object
/// `{"name": .., "x1": {..}, "x2": {..}}` of polynomial tables.
pub fn validate_config(raw: &Value) -> Result<RunConfig, ConfigError> {
    let mut c = Checker { issues: Vec::new() };
    let Some(root) = raw.as_object() else {
        return Err(ConfigError(vec![ConfigIssue { path: "$".into(), message: "expected a JSON object".into() }]));
    };
    const TOP: [&str; 7] = ["system", "seed", "tolerances", "frames", "simulate", "second_order", "oracle"];
    for k in root.keys() {
        if !TOP.contains(&k.as_str()) {
            c.push(k, "unknown field");
        }
    }

    let system = match root.get("system") {
        None | Some(Value::Null) => {
            c.push("system", "required field missing (fixture name or polynomial descriptor)");
            SystemSpec::Fixture(String::new())
        }
        Some(Value::String(name)) => {
            if !arcbound::fixtures::FIXTURE_NAMES.contains(&name.as_str()) {
                c.push("system", format!("unknown fixture `{name}`; expected one of {:?}", arcbound::fixtures::FIXTURE_NAMES));
            }
            SystemSpec::Fixture(name.clone())
        }
        Some(Value::Object(m)) => {
            let name = m.get("name").and_then(Value::as_str).unwrap_or("custom").to_string();
            let mut table = |key: &str| match m.get(key).map(|v| serde_json::from_value::<PolyTable>(v.clone())) {
                Some(Ok(t)) => match arcbound::geometry::PolyField::<f64>::from_table(&t) {
                    Ok(_) => t,
                    Err(e) => {
                        c.push(&format!("system.{key}"), e.to_string());
                        PolyTable::default()
                    }
                },
                Some(Err(e)) => {
                    c.push(&format!("system.{key}"), e.to_string());
                    PolyTable::default()
                }
                None => {
                    c.push(&format!("system.{key}"), "required field missing");
                    PolyTable::default()
                }
            };
            let (x1, x2) = (table("x1"), table("x2"));
            for k in m.keys() {
                if !["name", "x1", "x2"].contains(&k.as_str()) {
                    c.push(&format!("system.{k}"), "unknown field");
                }
            }
            SystemSpec::Polynomial { name, x1, x2 }
        }
        Some(_) => {
            c.push("system", "expected a fixture name or a polynomial descriptor object");
            SystemSpec::Fixture(String::new())
        }
    };

    let seed = match root.get("seed") {
        None => 0,
        Some(v) => v.as_u64().unwrap_or_else(|| {
            c.push("seed", "expected a nonnegative integer");
            0
        }),
    };

    let tol = c.object(root, "tolerances", "tolerances", &["integrator", "eps_zero", "eps_hit", "rank"]);
    let tolerances = Tolerances {
        integrator: c.number(tol, "integrator", "tolerances.integrator", 1e-10, true),
        eps_zero: c.number(tol, "eps_zero", "tolerances.eps_zero", 1e-9, true),
        eps_hit: c.number(tol, "eps_hit", "tolerances.eps_hit", 1e-6, true),
        rank: c.number(tol, "rank", "tolerances.rank", 1e-7, true),
    };

    let fr = c.object(root, "frames", "frames", &["lo", "hi", "samples", "threshold"]);
    let frames = FramesConfig {
        lo: c.point(fr, "lo", "frames.lo", [-1.0; 3]),
        hi: c.point(fr, "hi", "frames.hi", [1.0; 3]),
        samples: c.count(fr, "samples", "frames.samples", 9),
        threshold: c.number(fr, "threshold", "frames.threshold", arcbound::geometry::DEFAULT_FRAME_THRESHOLD, true),
    };
    if (0..3).any(|i| frames.lo[i] >= frames.hi[i]) {
        c.push("frames", "lo must be below hi in every coordinate");
    }

    let sim = c.object(root, "simulate", "simulate", &["q0", "switching", "covector", "horizon", "normalize", "singular_exit"]);
    let initial = match (sim.and_then(|m| m.get("switching")), sim.and_then(|m| m.get("covector"))) {
        (Some(_), Some(_)) => {
            c.push("simulate", "give either `switching` or `covector`, not both");
            Initial::Switching([0.3, 0.5, -1.0])
        }
        (Some(v), None) => Initial::Switching(c.triple(v, "simulate.switching").unwrap_or([0.3, 0.5, -1.0])),
        (None, Some(v)) => Initial::Covector(c.triple(v, "simulate.covector").unwrap_or([0.0, 0.0, 1.0])),
        (None, None) => Initial::Switching([0.3, 0.5, -1.0]),
    };
    let simulate = SimulateConfig {
        q0: c.point(sim, "q0", "simulate.q0", [0.0; 3]),
        initial,
        horizon: c.number(sim, "horizon", "simulate.horizon", 2.0, true),
        normalize: c.flag(sim, "normalize", "simulate.normalize", true),
        singular_exit: sim
            .and_then(|m| m.get("singular_exit"))
            .filter(|v| !v.is_null())
            .map(|_| c.number(sim, "singular_exit", "simulate.singular_exit", 0.1, true)),
    };

    let so = c.object(root, "second_order", "second_order", &["t1", "mode"]);
    let t1 = match so.and_then(|m| m.get("t1")) {
        None => vec![0.2, 0.1, 0.05],
        Some(Value::Array(a)) if !a.is_empty() => a
            .iter()
            .enumerate()
            .filter_map(|(i, v)| match v.as_f64() {
                Some(x) if x > 0.0 && x.is_finite() => Some(x),
                _ => {
                    c.push(&format!("second_order.t1[{i}]"), "arc duration must be a positive number");
                    None
                }
            })
            .collect(),
        Some(_) => {
            c.push("second_order.t1", "expected a non-empty array of durations");
            vec![]
        }
    };
    let mode = match so.and_then(|m| m.get("mode")) {
        None => TransportMode::Numeric,
        Some(v) => serde_json::from_value(v.clone()).unwrap_or_else(|_| {
            c.push("second_order.mode", "expected \"numeric\" or \"leading_order\"");
            TransportMode::Numeric
        }),
    };

    let or = c.object(
        root,
        "oracle",
        "oracle",
        &["q0", "targets", "random_targets", "max_arcs", "t_max", "singular", "starts", "tol_rel", "margin"],
    );
    let targets = match or.and_then(|m| m.get("targets")) {
        None => vec![],
        Some(Value::Array(a)) => a
            .iter()
            .enumerate()
            .filter_map(|(i, v)| c.triple(v, &format!("oracle.targets[{i}]")))
            .collect(),
        Some(_) => {
            c.push("oracle.targets", "expected an array of points");
            vec![]
        }
    };
    let rt = c.object(or.unwrap_or(&Map::new()), "random_targets", "oracle.random_targets", &["count", "arcs", "horizon"]).cloned();
    let random_targets = match (rt, targets.is_empty()) {
        (Some(m), _) => Some(RandomTargets {
            count: c.count(Some(&m), "count", "oracle.random_targets.count", 10),
            arcs: c.count(Some(&m), "arcs", "oracle.random_targets.arcs", 5),
            horizon: c.number(Some(&m), "horizon", "oracle.random_targets.horizon", 0.45, true),
        }),
        (None, true) => Some(RandomTargets { count: 10, arcs: 5, horizon: 0.45 }),
        (None, false) => None,
    };
    let oracle = OracleConfig {
        q0: c.point(or, "q0", "oracle.q0", [0.0; 3]),
        targets,
        random_targets,
        max_arcs: c.count(or, "max_arcs", "oracle.max_arcs", 6),
        t_max: c.number(or, "t_max", "oracle.t_max", 1.0, true),
        singular: c.flag(or, "singular", "oracle.singular", false),
        starts: c.count(or, "starts", "oracle.starts", 8),
        tol_rel: c.number(or, "tol_rel", "oracle.tol_rel", 1e-3, true),
        margin: c.number(or, "margin", "oracle.margin", 1e-3, true),
    };

    if c.issues.is_empty() {
        Ok(RunConfig { system, seed, tolerances, frames, simulate, second_order: SecondOrderConfig { t1, mode }, oracle })
    } else {
        Err(ConfigError(c.issues))
    }
}
