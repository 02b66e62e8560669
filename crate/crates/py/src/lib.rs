//! Python bindings: scenario configuration, simulation runs and the
//! consensus attack analysis.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyBytes, PyDict, PyList, PyString};
use serde::Serialize;

use roadchain::analysis::{self, AttackModel};
use roadchain::config::ScenarioConfig;
use roadchain::consensus::quorum_for;
use roadchain::sim::{audit_chain, run_scenario, RunOutput};
use roadchain::validation::{travel_bound as bound, BoundKind, ValidationParams};
use roadchain::{report, Error};

create_exception!(roadchain_py, RoadchainError, PyException);
create_exception!(roadchain_py, ElectionExhausted, RoadchainError);

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Config(msg) => PyValueError::new_err(msg),
        e @ Error::ElectionExhausted { .. } => ElectionExhausted::new_err(e.to_string()),
        other => RoadchainError::new_err(other.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    use serde_json::Value;
    Ok(match value {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(u)) => u.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => PyString::new(py, s).into_any(),
        Value::Array(items) => {
            let items = items.iter().map(|v| json_to_py(py, v)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, json_to_py(py, v)?)?;
            }
            dict.into_any()
        }
    })
}

fn rows_to_py<'py, T: Serialize>(py: Python<'py>, rows: &[T]) -> PyResult<Bound<'py, PyAny>> {
    let value = serde_json::to_value(rows).map_err(|e| RoadchainError::new_err(e.to_string()))?;
    json_to_py(py, &value)
}

/// Closed-form probability that attackers holding share `p` of the
/// reputation insert a block.
#[pyfunction]
fn attack_success_probability(p: f64, f: usize) -> PyResult<f64> {
    let model = AttackModel::new(p, f).map_err(to_py_err)?;
    Ok(analysis::attack_success_probability(&model))
}

/// Monte Carlo estimate through the real lottery; returns
/// `(frequency, stderr)`.
#[pyfunction]
#[pyo3(signature = (p, f, trials = 100_000, seed = 1))]
fn monte_carlo_attack_probability(py: Python<'_>, p: f64, f: usize, trials: usize, seed: u64) -> PyResult<(f64, f64)> {
    let model = AttackModel::new(p, f).map_err(to_py_err)?;
    let est = py
        .detach(|| analysis::monte_carlo_attack_probability(&model, trials, seed))
        .map_err(to_py_err)?;
    Ok((est.frequency, est.stderr))
}

/// Largest plausible displacement in meters. `kind` is one of "ss", "sd",
/// "ds", "dd" (old role, new role; s = sender, d = detected).
#[pyfunction]
#[pyo3(signature = (kind, dt_s, v_max = None, range_max = None))]
fn travel_bound(kind: &str, dt_s: f64, v_max: Option<f64>, range_max: Option<f64>) -> PyResult<f64> {
    let kind = match kind.to_ascii_lowercase().as_str() {
        "ss" => BoundKind::SenderSender,
        "sd" => BoundKind::SenderDetected,
        "ds" => BoundKind::DetectedSender,
        "dd" => BoundKind::DetectedDetected,
        other => return Err(PyValueError::new_err(format!("unknown bound kind {other:?}"))),
    };
    if dt_s < 0.0 {
        return Err(PyValueError::new_err("dt_s must be >= 0"));
    }
    let mut params = ValidationParams::default();
    if let Some(v) = v_max {
        params.v_max = v;
    }
    if let Some(r) = range_max {
        params.range_max = r;
    }
    Ok(bound(kind, dt_s, &params))
}

/// A scenario configuration. Starts from the desk profile unless
/// `paper_scale` is set; `toml` holds overrides.
#[pyclass(module = "roadchain_py")]
struct Scenario {
    config: ScenarioConfig,
}

#[pymethods]
impl Scenario {
    #[new]
    #[pyo3(signature = (toml = None, paper_scale = false))]
    fn new(toml: Option<&str>, paper_scale: bool) -> PyResult<Self> {
        let base = if paper_scale {
            ScenarioConfig::paper_scale()
        } else {
            ScenarioConfig::desk()
        };
        let config = match toml {
            Some(text) => ScenarioConfig::from_toml_with_base(text, &base).map_err(to_py_err)?,
            None => base,
        };
        Ok(Scenario { config })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Scenario {
            config: ScenarioConfig::load(&path).map_err(to_py_err)?,
        })
    }

    /// Sets one parameter by name, dotted for the attack table.
    fn set(&mut self, key: &str, value: &Bound<'_, PyAny>) -> PyResult<()> {
        let text = match value.extract::<bool>() {
            Ok(b) => b.to_string(),
            Err(_) => value.str()?.to_string(),
        };
        let mut next = self.config.clone();
        next.set_param(key, &text).map_err(to_py_err)?;
        next.check().map_err(to_py_err)?;
        self.config = next;
        Ok(())
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.config.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.config.seed = seed;
    }

    fn to_toml(&self) -> String {
        self.config.to_toml_string()
    }

    /// Runs the scenario with the GIL released.
    fn run(&self, py: Python<'_>) -> PyResult<RunResult> {
        let config = self.config.clone();
        let output = py.detach(|| run_scenario(&config)).map_err(to_py_err)?;
        Ok(RunResult { config, output })
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(seed={}, vehicles={}, rsus={}, duration_s={}, attack={:?})",
            self.config.seed,
            self.config.num_vehicles,
            self.config.num_rsus,
            self.config.duration_s,
            self.config.attack.kind
        )
    }
}

#[pyclass(module = "roadchain_py")]
struct RunResult {
    config: ScenarioConfig,
    output: RunOutput,
}

#[pymethods]
impl RunResult {
    /// Per-block metric rows as dicts.
    #[getter]
    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        rows_to_py(py, &self.output.metrics)
    }

    /// One row per consensus round, including failed ones.
    #[getter]
    fn consensus<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        rows_to_py(py, &self.output.consensus)
    }

    /// Hex ids of the attacker identities.
    #[getter]
    fn attackers(&self) -> Vec<String> {
        self.output.attackers.iter().map(|id| hex::encode(id.id)).collect()
    }

    #[getter]
    fn height(&self) -> u64 {
        self.output.chain.height()
    }

    /// `None`, or a dict describing why the run stopped early.
    #[getter]
    fn halt<'py>(&self, py: Python<'py>) -> PyResult<Option<Bound<'py, PyAny>>> {
        self.output
            .halt
            .map(|h| {
                let dict = PyDict::new(py);
                dict.set_item("time_s", h.time_s)?;
                dict.set_item("height", h.height)?;
                dict.set_item("attempts", h.attempts)?;
                Ok(dict.into_any())
            })
            .transpose()
    }

    fn tip_hash(&self) -> String {
        self.output.chain.tip().hash().to_hex()
    }

    /// The chain in its JSON-lines export format.
    fn chain_jsonl<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        let bytes = report::chain_jsonl(&self.output.chain).map_err(to_py_err)?;
        Ok(PyBytes::new(py, &bytes))
    }

    /// Re-checks hash links, quorum and every committee.
    fn audit(&self) -> PyResult<()> {
        let f = self.config.fault_tolerance;
        let quorum = quorum_for(f, self.config.quorum_policy);
        audit_chain(&self.output.chain, f, quorum, self.config.block_time()).map_err(to_py_err)
    }

    /// Writes the same artifacts as `roadchain run`.
    #[pyo3(signature = (dir, dump_reputation = false))]
    fn write(&self, dir: PathBuf, dump_reputation: bool) -> PyResult<()> {
        report::write_run(&dir, &self.config, &self.output, dump_reputation).map_err(to_py_err)
    }

    fn __len__(&self) -> usize {
        self.output.metrics.len()
    }
}

#[pymodule]
pub fn roadchain_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(attack_success_probability, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo_attack_probability, m)?)?;
    m.add_function(wrap_pyfunction!(travel_bound, m)?)?;
    m.add_class::<Scenario>()?;
    m.add_class::<RunResult>()?;
    m.add("RoadchainError", m.py().get_type::<RoadchainError>())?;
    m.add("ElectionExhausted", m.py().get_type::<ElectionExhausted>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
