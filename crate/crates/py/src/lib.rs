//! Python bindings.

use std::path::Path;

use investesg::config::{AnalyzeConfig, ConfigFile};
use investesg::dilemma::{classify_zone as classify, signflip_lambda as signflip, SimplifiedWorld};
use investesg::env::simulate_fixed as simulate;
use investesg::metrics::{gini as gini_of, market_total_wealth};
use investesg::training::train as train_run;
use investesg::{EnvConfig, Error, InvestEsgEnv, JointAction, TrainConfig};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn to_py(e: Error) -> PyErr {
    if e.is_config() || matches!(e, Error::Action(_) | Error::UndefinedInput(_) | Error::Domain(_)) {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn parse(config_toml: Option<&str>) -> Result<ConfigFile, Error> {
    match config_toml {
        Some(text) => ConfigFile::parse(text, Path::new("<python>")),
        None => Ok(ConfigFile::new()),
    }
}

fn env_config(config_toml: Option<&str>, alpha: Option<f64>) -> Result<EnvConfig, Error> {
    let mut env = parse(config_toml)?.env.unwrap_or_default();
    if let Some(a) = alpha {
        env.alpha = a;
    }
    env.validate()?;
    Ok(env)
}

/// Converts any serialisable value into Python objects via JSON.
fn to_object<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// One climate-investment game. Agents are ordered companies first.
#[pyclass(module = "investesg_py")]
struct Env {
    inner: InvestEsgEnv,
}

#[pymethods]
impl Env {
    #[new]
    #[pyo3(signature = (config_toml=None, alpha=None, seed=0))]
    fn new(config_toml: Option<&str>, alpha: Option<f64>, seed: u64) -> PyResult<Self> {
        let config = env_config(config_toml, alpha).map_err(to_py)?;
        let (inner, _) = InvestEsgEnv::reset(config, seed).map_err(to_py)?;
        Ok(Env { inner })
    }

    /// Restarts the episode and returns one observation per agent.
    fn reset(&mut self, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let (inner, obs) = InvestEsgEnv::reset(self.inner.config().clone(), seed).map_err(to_py)?;
        self.inner = inner;
        Ok(obs)
    }

    /// Applies mitigation fractions and binary portfolios; returns
    /// `(observations, rewards, done)`.
    fn step(&mut self, mitigation: Vec<f64>, portfolio: Vec<Vec<u8>>) -> PyResult<(Vec<Vec<f64>>, Vec<f64>, bool)> {
        let outcome = self.inner.step(&JointAction { mitigation, portfolio }).map_err(to_py)?;
        Ok((outcome.observations, outcome.rewards, outcome.done))
    }

    fn observe(&self) -> Vec<Vec<f64>> {
        self.inner.observe()
    }

    #[getter]
    fn t(&self) -> usize {
        self.inner.state().t
    }

    #[getter]
    fn done(&self) -> bool {
        self.inner.is_done()
    }

    #[getter]
    fn num_agents(&self) -> usize {
        self.inner.config().num_agents()
    }

    fn market_total_wealth(&self) -> f64 {
        market_total_wealth(self.inner.state())
    }

    /// Current state as a dict.
    fn state(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_object(py, self.inner.state())
    }

    /// Resolved configuration as a dict.
    fn config(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_object(py, self.inner.config())
    }
}

/// Final state of an episode in which every company mitigates `rate` and
/// investors hold every company.
#[pyfunction]
#[pyo3(signature = (rate, seed=0, alpha=None, config_toml=None))]
fn simulate_fixed(py: Python<'_>, rate: f64, seed: u64, alpha: Option<f64>, config_toml: Option<&str>) -> PyResult<Py<PyAny>> {
    let config = env_config(config_toml, alpha).map_err(to_py)?;
    let action = JointAction::uniform(&config, rate);
    let state = py.detach(|| simulate(&config, &action, seed)).map_err(to_py)?;
    to_object(py, &state)
}

/// Dilemma-zone classification at `alpha`, evaluated at `step`.
#[pyfunction]
#[pyo3(signature = (alpha, step=None, config_toml=None))]
fn classify_zone(py: Python<'_>, alpha: f64, step: Option<usize>, config_toml: Option<&str>) -> PyResult<Py<PyAny>> {
    let config = env_config(config_toml, None).map_err(to_py)?;
    let world = SimplifiedWorld::from_env(&config, step.unwrap_or(AnalyzeConfig::default().step)).map_err(to_py)?;
    let result = classify(&world.with_lambda(alpha), alpha).map_err(to_py)?;
    to_object(py, &result)
}

/// The alpha at which company `company`'s lag-0 private gradient changes sign.
#[pyfunction]
#[pyo3(signature = (company=0, step=None, config_toml=None))]
fn signflip_lambda(company: usize, step: Option<usize>, config_toml: Option<&str>) -> PyResult<f64> {
    let config = env_config(config_toml, None).map_err(to_py)?;
    let world = SimplifiedWorld::from_env(&config, step.unwrap_or(AnalyzeConfig::default().step)).map_err(to_py)?;
    signflip(&world, company).map_err(to_py)
}

#[pyfunction]
fn gini(values: Vec<f64>) -> PyResult<f64> {
    gini_of(&values).map_err(to_py)
}

/// Trains with the `[env]` and `[train]` sections of `config_toml` and
/// returns the evaluation summary.
#[pyfunction]
#[pyo3(signature = (config_toml=None, total_steps=None, seed=None))]
fn train(py: Python<'_>, config_toml: Option<&str>, total_steps: Option<u64>, seed: Option<u64>) -> PyResult<Py<PyAny>> {
    let file = parse(config_toml).map_err(to_py)?;
    let env = file.env.unwrap_or_default();
    let mut cfg = file.train.unwrap_or_else(TrainConfig::ppo);
    if let Some(s) = total_steps {
        cfg.total_steps = s;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let result = py.detach(|| train_run(&env, &cfg, None)).map_err(to_py)?;
    to_object(py, &result.summary)
}

#[pymodule]
fn investesg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Env>()?;
    m.add_function(wrap_pyfunction!(simulate_fixed, m)?)?;
    m.add_function(wrap_pyfunction!(classify_zone, m)?)?;
    m.add_function(wrap_pyfunction!(signflip_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(gini, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
