//! Python bindings: markets, stable matchings, the pull module, single
//! episodes, batch experiments and the oracle suites.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use matchbandit::adversarial::{self, ABParams};
use matchbandit::agent::Policy;
use matchbandit::experiment::{self, ExperimentConfig};
use matchbandit::market::{self, Matching, ProposingSide, Setting, UtilityScheme};
use matchbandit::market_file;
use matchbandit::oracle::{self, Suite};
use matchbandit::rng::{stream_rng, Stream};
use matchbandit::simulator::{self, SimConfig};
use matchbandit::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(py_err)
}

#[pyclass(name = "Market", module = "pymatchbandit", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyMarket {
    inner: market::Market,
}

#[pymethods]
impl PyMarket {
    /// `agent_util[a][f]` and `firm_util[f][a]`; strict rows, n_agents <= n_firms.
    #[new]
    fn new(agent_util: Vec<Vec<f64>>, firm_util: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self {
            inner: market::Market::new(agent_util, firm_util).map_err(py_err)?,
        })
    }

    /// Random market: setting "S1" (shared firm ranking) or "S2" (not decomposable).
    #[staticmethod]
    #[pyo3(signature = (setting, n_agents, n_firms, seed))]
    fn generate(setting: &str, n_agents: usize, n_firms: usize, seed: u64) -> PyResult<Self> {
        let setting: Setting = parse(setting)?;
        let mut rng = stream_rng(seed, Stream::Market);
        let inner = market::gen_market(&mut rng, n_agents, n_firms, setting, UtilityScheme::default())
            .map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: market_file::parse_market(text).map_err(py_err)?,
        })
    }

    fn to_text(&self) -> String {
        market_file::format_market(&self.inner)
    }

    #[getter]
    fn n_agents(&self) -> usize {
        self.inner.n_agents()
    }

    #[getter]
    fn n_firms(&self) -> usize {
        self.inner.n_firms()
    }

    #[getter]
    fn agent_util(&self) -> Vec<Vec<f64>> {
        self.inner.agent_util_rows().to_vec()
    }

    #[getter]
    fn firm_util(&self) -> Vec<Vec<f64>> {
        self.inner.firm_util_rows().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("Market(n_agents={}, n_firms={})", self.inner.n_agents(), self.inner.n_firms())
    }
}

/// Agent-indexed firm list of the DA matching; `side` is "agents" or "firms".
#[pyfunction]
#[pyo3(signature = (market, side = "agents"))]
fn deferred_acceptance(market: &PyMarket, side: &str) -> PyResult<Vec<Option<usize>>> {
    let side = match side {
        "agents" => ProposingSide::Agents,
        "firms" => ProposingSide::Firms,
        other => return Err(PyValueError::new_err(format!("unknown proposing side `{other}`"))),
    };
    Ok(market::deferred_acceptance(&market.inner, side).assign().to_vec())
}

#[pyfunction]
fn find_blocking_pair(market: &PyMarket, assign: Vec<Option<usize>>) -> PyResult<Option<(usize, usize)>> {
    let matching = Matching::new(assign).map_err(py_err)?;
    market::find_blocking_pair(&market.inner, &matching).map_err(py_err)
}

#[pyfunction]
fn is_stable(market: &PyMarket, assign: Vec<Option<usize>>) -> PyResult<bool> {
    Ok(find_blocking_pair(market, assign)?.is_none())
}

/// Fixed-pair levels as lists of `(agent, firm)`, or None if some residual
/// market has no fixed pair.
#[pyfunction]
fn decompose(market: &PyMarket) -> Option<Vec<Vec<(usize, usize)>>> {
    market::decompose(&market.inner).map(|d| d.levels.into_iter().map(|l| l.pairs).collect())
}

#[pyfunction]
fn is_alpha_reducible(market: &PyMarket) -> PyResult<bool> {
    market::is_alpha_reducible_bruteforce(&market.inner).map_err(py_err)
}

/// Agent-optimal stable benchmark: stable firms, gaps and firm classes.
#[pyfunction]
fn benchmark<'py>(py: Python<'py>, market: &PyMarket) -> PyResult<Bound<'py, PyDict>> {
    let b = market::make_benchmark(&market.inner).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("stable_firm", b.stable_firm)?;
    d.set_item("gap", b.gap)?;
    d.set_item("super_opt", b.super_opt)?;
    d.set_item("sub_opt", b.sub_opt)?;
    d.set_item("min_gap", b.min_gap)?;
    Ok(d)
}

#[pyclass(name = "PullState", module = "pymatchbandit", from_py_object)]
#[derive(Clone, Default)]
pub struct PyPullState {
    inner: adversarial::PullState,
}

#[pymethods]
impl PyPullState {
    #[new]
    fn new() -> Self {
        Self::default()
    }

    #[getter]
    fn p(&self) -> f64 {
        self.inner.p
    }

    #[getter]
    fn x(&self) -> f64 {
        self.inner.x
    }

    #[getter]
    fn last_loss(&self) -> i8 {
        self.inner.last_loss
    }

    #[getter]
    fn updates(&self) -> u64 {
        self.inner.updates
    }

    #[getter]
    fn path_length(&self) -> u64 {
        self.inner.path_length
    }

    /// `(prune, pull)` loss estimates for the given outcome.
    fn loss_estimates(&self, pulled: bool, matched: bool) -> PyResult<(f64, f64)> {
        adversarial::loss_estimates(&self.inner, pulled, matched).map_err(py_err)
    }

    #[pyo3(signature = (pulled, matched, eta = 0.02, lambda_bar = 0.16))]
    fn step(&mut self, pulled: bool, matched: bool, eta: f64, lambda_bar: f64) -> PyResult<()> {
        let params = ABParams::new(eta, lambda_bar).map_err(py_err)?;
        self.inner.step(pulled, matched, &params).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("PullState(p={}, x={}, last_loss={})", self.inner.p, self.inner.x, self.inner.last_loss)
    }
}

#[pyfunction]
fn md_closed_form(xi: f64) -> f64 {
    adversarial::md_closed_form(xi)
}

/// One episode against the agent-optimal stable matching.
#[pyfunction]
#[pyo3(signature = (market, policy = "ucb", horizon = 50_000, seed = 0, noise_std = 1.0, grid_size = 500))]
fn run_episode<'py>(
    py: Python<'py>,
    market: &PyMarket,
    policy: &str,
    horizon: u64,
    seed: u64,
    noise_std: f64,
    grid_size: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let policy: Policy = parse(policy)?;
    let bench = market::make_benchmark(&market.inner).map_err(py_err)?;
    let mut config = SimConfig::new(market.inner.clone(), bench, policy, horizon, seed);
    config.noise_std = noise_std;
    config.sample_grid = simulator::even_grid(horizon, grid_size);
    let metrics = py.detach(|| simulator::run_episode(&config)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("grid", &metrics.grid)?;
    d.set_item("regret", metrics.agents.iter().map(|a| a.regret.clone()).collect::<Vec<_>>())?;
    d.set_item("matches", metrics.agents.iter().map(|a| a.matches.clone()).collect::<Vec<_>>())?;
    d.set_item("collisions", metrics.agents.iter().map(|a| a.collisions.clone()).collect::<Vec<_>>())?;
    d.set_item(
        "tail_stable_rate",
        (0..metrics.agents.len()).map(|a| metrics.tail_stable_rate(a)).collect::<Vec<_>>(),
    )?;
    d.set_item("stable_firm", &config.benchmark.stable_firm)?;
    Ok(d)
}

/// Runs a batch from config-file text (see the experiment module docs),
/// with optional `key -> value` overrides. Writes result files only when
/// `write` is true.
#[pyfunction]
#[pyo3(signature = (config_text = "", overrides = None, write = false))]
fn run_batch<'py>(
    py: Python<'py>,
    config_text: &str,
    overrides: Option<Vec<(String, String)>>,
    write: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let mut config = ExperimentConfig::parse(config_text).map_err(py_err)?;
    for (k, v) in overrides.unwrap_or_default() {
        config.set(&k, &v).map_err(py_err)?;
    }
    let result = py
        .detach(|| {
            let r = experiment::run_batch(&config)?;
            if write {
                experiment::write_outputs(&r, &config.output_dir)?;
            }
            Ok::<_, Error>(r)
        })
        .map_err(py_err)?;
    let agg = &result.aggregate;
    let d = PyDict::new(py);
    d.set_item("grid", &agg.grid)?;
    d.set_item("mean", &agg.mean)?;
    d.set_item("std", &agg.std)?;
    d.set_item("seeds", &result.seeds)?;
    d.set_item("tail_stable_rate", agg.mean_tail_stable_rate())?;
    d.set_item("final_regret_std", agg.final_regret_std())?;
    d.set_item("aggregate_csv", experiment::aggregate_csv(agg))?;
    d.set_item("runs_csv", experiment::runs_csv(&result.runs))?;
    Ok(d)
}

/// Runs an oracle suite ("md", "estimator", "da" or "alpha").
#[pyfunction]
#[pyo3(signature = (suite, seed = 0))]
fn run_oracle<'py>(py: Python<'py>, suite: &str, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let suite: Suite = parse(suite)?;
    let report = py.detach(|| oracle::run_suite(suite, seed));
    let d = PyDict::new(py);
    d.set_item("passed", report.passed())?;
    d.set_item("cases", report.cases)?;
    d.set_item("violation_count", report.violation_count)?;
    d.set_item("max_error", report.max_error)?;
    d.set_item("tolerance", report.tolerance)?;
    d.set_item("violations", &report.violations)?;
    Ok(d)
}

#[pymodule]
pub fn pymatchbandit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMarket>()?;
    m.add_class::<PyPullState>()?;
    m.add_function(wrap_pyfunction!(deferred_acceptance, m)?)?;
    m.add_function(wrap_pyfunction!(find_blocking_pair, m)?)?;
    m.add_function(wrap_pyfunction!(is_stable, m)?)?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(is_alpha_reducible, m)?)?;
    m.add_function(wrap_pyfunction!(benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(md_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(run_episode, m)?)?;
    m.add_function(wrap_pyfunction!(run_batch, m)?)?;
    m.add_function(wrap_pyfunction!(run_oracle, m)?)?;
    Ok(())
}
