//! Python bindings: the experiment configuration, workload synthesis,
//! baseline evaluation, controller training and policy evaluation, driven
//! in-process from Python.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use edgetimer::exp::run::{prepare, tuned_baselines, Prepared};
use edgetimer::exp::ExperimentConfig as CoreConfig;
use edgetimer::hdrl::rollout::{run_script, BaselineDecider, FixedDecider};
use edgetimer::hdrl::train::{infer, train as core_train, TrainConfig, TrainedPolicy, Variant};
use edgetimer::hdrl::{checkpoint_bytes, checkpoint_from_bytes};
use edgetimer::rules::RuleTriple;
use edgetimer::simenv::{Env, EnvOptions};
use edgetimer::timescale::BaselineKind;
use edgetimer::domain::UpdateAction;

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// The full experiment configuration (TOML-backed).
#[pyclass(name = "ExperimentConfig", skip_from_py_object)]
#[derive(Clone)]
struct PyExperimentConfig {
    inner: CoreConfig,
}

#[pymethods]
impl PyExperimentConfig {
    /// Stock configuration; pass a TOML string to override sections.
    #[new]
    #[pyo3(signature = (toml_text=None))]
    fn new(toml_text: Option<&str>) -> PyResult<Self> {
        let inner = match toml_text {
            Some(t) => CoreConfig::from_str_toml(t).map_err(value_err)?,
            None => CoreConfig::default(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_path(path: &str) -> PyResult<Self> {
        let inner =
            CoreConfig::from_path(std::path::Path::new(path)).map_err(value_err)?;
        Ok(Self { inner })
    }

    fn to_toml(&self) -> PyResult<String> {
        toml::to_string_pretty(&self.inner).map_err(value_err)
    }

    /// Stable hash over (config, seed); stamped into checkpoints.
    fn hash(&self, seed: u64) -> u64 {
        self.inner.hash(seed)
    }

    #[getter]
    fn num_edges(&self) -> usize {
        self.inner.cluster.num_edges
    }

    #[getter]
    fn num_services(&self) -> usize {
        self.inner.cluster.num_services
    }

    #[getter]
    fn rule_triple(&self) -> String {
        self.inner.rules.triple.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "ExperimentConfig(edges={}, services={}, rules={})",
            self.inner.cluster.num_edges, self.inner.cluster.num_services, self.inner.rules.triple
        )
    }
}

/// An arrival script.
#[pyclass(name = "WorkloadScript")]
struct PyWorkloadScript {
    inner: edgetimer::WorkloadScript,
}

#[pymethods]
impl PyWorkloadScript {
    #[getter]
    fn horizon(&self) -> u64 {
        self.inner.horizon
    }

    #[getter]
    fn pattern(&self) -> String {
        self.inner.pattern.to_string()
    }

    fn __len__(&self) -> usize {
        self.inner.events.len()
    }

    fn total_workload(&self) -> f64 {
        self.inner.total_workload()
    }

    /// Arrival events as dicts (truncated to `limit` when given).
    #[pyo3(signature = (limit=None))]
    fn events<'py>(&self, py: Python<'py>, limit: Option<usize>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let n = limit.unwrap_or(self.inner.events.len());
        self.inner
            .events
            .iter()
            .take(n)
            .map(|t| {
                let d = PyDict::new(py);
                d.set_item("id", t.id)?;
                d.set_item("service", t.service)?;
                d.set_item("slot", t.arrival_slot)?;
                d.set_item("cpu_demand", t.cpu_demand)?;
                d.set_item("workload", t.workload)?;
                d.set_item("delay_budget", t.delay_budget)?;
                d.set_item("origin_edge", t.origin_edge)?;
                Ok(d)
            })
            .collect()
    }

    fn save_jsonl(&self, path: &str) -> PyResult<()> {
        let f = std::fs::File::create(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        self.inner
            .write_jsonl(std::io::BufWriter::new(f))
            .map_err(|e| PyIOError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "WorkloadScript(pattern={}, horizon={}, events={})",
            self.inner.pattern,
            self.inner.horizon,
            self.inner.events.len()
        )
    }
}

/// Trained controller stack.
#[pyclass(name = "TrainedPolicy")]
struct PyTrainedPolicy {
    inner: TrainedPolicy,
}

#[pymethods]
impl PyTrainedPolicy {
    fn save(&self, path: &str, config: &PyExperimentConfig, seed: u64) -> PyResult<()> {
        let TrainedPolicy::Layered(ctrl) = &self.inner else {
            return Err(PyValueError::new_err("only layered policies are persisted"));
        };
        std::fs::write(path, checkpoint_bytes(ctrl, config.inner.hash(seed)))
            .map_err(|e| PyIOError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        let (ctrl, _) = checkpoint_from_bytes(&bytes).map_err(value_err)?;
        Ok(Self { inner: TrainedPolicy::Layered(ctrl) })
    }
}

fn metrics_dict<'py>(
    py: Python<'py>,
    name: &str,
    ledgers: &[edgetimer::SlotLedger],
    completed: &[(usize, u64, u64)],
) -> PyResult<Bound<'py, PyDict>> {
    let m = edgetimer::exp::metrics::summarize(name, ledgers, completed);
    let d = PyDict::new(py);
    d.set_item("method", &m.method)?;
    d.set_item("total_profit", m.total_profit)?;
    d.set_item("total_revenue", m.total_revenue)?;
    d.set_item("total_gated_cost", m.total_gated_cost)?;
    d.set_item("completions", m.completions)?;
    d.set_item("within_budget_fraction", m.within_budget_fraction)?;
    d.set_item("unsafe_routes", m.unsafe_routes)?;
    d.set_item("updates", m.updates.to_vec())?;
    d.set_item("profit_per_slot", ledgers.iter().map(|l| l.total_profit()).collect::<Vec<_>>())?;
    Ok(d)
}

fn prepared(config: &PyExperimentConfig, seed: u64) -> PyResult<Prepared> {
    prepare(&config.inner, seed).map_err(value_err)
}

/// Builds the (pattern-transformed) workload script for (config, seed).
#[pyfunction]
fn build_workload(config: &PyExperimentConfig, seed: u64) -> PyResult<PyWorkloadScript> {
    let p = prepared(config, seed)?;
    Ok(PyWorkloadScript { inner: p.script })
}

/// Rolls out one timescale baseline: "sst", "smt", "dt", "wt" (the latter
/// three tuned by grid search first) or "hold".
#[pyfunction]
fn evaluate_baseline<'py>(
    py: Python<'py>,
    config: &PyExperimentConfig,
    seed: u64,
    method: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let p = prepared(config, seed)?;
    let mut env = Env::new(p.cluster.clone(), EnvOptions::default());
    let ledgers = match method {
        "hold" => {
            let mut d = FixedDecider(UpdateAction::ALL_HOLD);
            run_script(&mut env, &p.script, &p.rcfg, &mut d, None).map_err(value_err)?.0
        }
        "sst" => {
            let mut d = BaselineDecider { kind: BaselineKind::StaticSingle };
            run_script(&mut env, &p.script, &p.rcfg, &mut d, None).map_err(value_err)?.0
        }
        "smt" | "dt" | "wt" => {
            let tuned = tuned_baselines(&config.inner, &p.cluster, &p.script, &p.rcfg)
                .map_err(value_err)?;
            let kind = tuned
                .iter()
                .map(|(k, _)| *k)
                .find(|k| k.name() == method)
                .ok_or_else(|| PyValueError::new_err("tuning failed"))?;
            let mut d = BaselineDecider { kind };
            run_script(&mut env, &p.script, &p.rcfg, &mut d, None).map_err(value_err)?.0
        }
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown method '{other}', expected sst/smt/dt/wt/hold"
            )))
        }
    };
    metrics_dict(py, method, &ledgers, env.completed_delays())
}

/// Trains the adaptive controllers on the configured workload.
#[pyfunction]
#[pyo3(signature = (config, seed, epochs=None))]
fn train(
    config: &PyExperimentConfig,
    seed: u64,
    epochs: Option<usize>,
) -> PyResult<(PyTrainedPolicy, Vec<(usize, f64)>)> {
    let p = prepared(config, seed)?;
    let mut tcfg: TrainConfig = p.tcfg.clone();
    if let Some(e) = epochs {
        tcfg.epochs = e;
    }
    let out = core_train(&p.cluster, &p.script, &p.rcfg, &config.inner.rewards, &tcfg, Variant::Full)
        .map_err(value_err)?;
    let curves = out.curves.iter().map(|s| (s.epoch, s.profit)).collect();
    Ok((PyTrainedPolicy { inner: out.policy }, curves))
}

/// Deterministic evaluation of a trained policy on the configured workload.
#[pyfunction]
fn evaluate_policy<'py>(
    py: Python<'py>,
    config: &PyExperimentConfig,
    seed: u64,
    policy: &PyTrainedPolicy,
) -> PyResult<Bound<'py, PyDict>> {
    let p = prepared(config, seed)?;
    let out = infer(&policy.inner, &p.cluster, &p.script, &p.rcfg, &config.inner.rewards)
        .map_err(value_err)?;
    metrics_dict(py, "edgetimer", &out.ledgers, &out.completed)
}

/// All 45 built-in rule combinations.
#[pyfunction]
fn rule_triples() -> Vec<String> {
    RuleTriple::all().iter().map(|t| t.to_string()).collect()
}

#[pymodule]
fn edgetimer_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyExperimentConfig>()?;
    m.add_class::<PyWorkloadScript>()?;
    m.add_class::<PyTrainedPolicy>()?;
    m.add_function(wrap_pyfunction!(build_workload, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_policy, m)?)?;
    m.add_function(wrap_pyfunction!(rule_triples, m)?)?;
    Ok(())
}
