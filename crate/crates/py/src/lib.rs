//! Python bindings: the gain-synthesis and regulator solvers plus a
//! `Scenario` class that validates, runs, and serializes simulations
//! in-process.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use etcsim::linalg;
use etcsim::scenario::{Scenario as CoreScenario, ScenarioError};
use etcsim::DMatrix;

type PyMatrix = Vec<Vec<f64>>;

fn to_dmatrix(raw: &PyMatrix, what: &str) -> PyResult<DMatrix<f64>> {
    if raw.is_empty() || raw[0].is_empty() {
        return Err(PyValueError::new_err(format!(
            "{what}: matrix must be non-empty"
        )));
    }
    let cols = raw[0].len();
    if raw.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err(format!("{what}: ragged matrix")));
    }
    Ok(DMatrix::from_fn(raw.len(), cols, |i, j| raw[i][j]))
}

fn from_dmatrix(m: &DMatrix<f64>) -> PyMatrix {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn linalg_err(e: linalg::LinalgError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn scenario_err(e: ScenarioError) -> PyErr {
    match e {
        ScenarioError::Engine(_) => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// exp(A t) for a square matrix given as nested row lists.
#[pyfunction]
fn matrix_exponential(a: PyMatrix, t: f64) -> PyResult<PyMatrix> {
    let a = to_dmatrix(&a, "a")?;
    Ok(from_dmatrix(
        &linalg::matrix_exponential(&a, t).map_err(linalg_err)?,
    ))
}

/// Broadcast-consensus gain G = -B^T E^T E for a neutrally stable A.
#[pyfunction]
fn consensus_gain(a: PyMatrix, b: PyMatrix) -> PyResult<PyMatrix> {
    let a = to_dmatrix(&a, "a")?;
    let b = to_dmatrix(&b, "b")?;
    Ok(from_dmatrix(
        &linalg::consensus_gain(&a, &b).map_err(linalg_err)?,
    ))
}

/// Split a neutrally stable matrix into skew and Hurwitz parts.
///
/// Returns a dict with keys e, f, eplus, fplus, x, y (nested lists) and n1.
#[pyfunction]
fn neutral_decomposition(py: Python<'_>, a: PyMatrix) -> PyResult<Py<pyo3::types::PyDict>> {
    use pyo3::types::PyDict;
    let a = to_dmatrix(&a, "a")?;
    let dec = linalg::neutral_stable_decompose(&a).map_err(linalg_err)?;
    let out = PyDict::new(py);
    out.set_item("e", from_dmatrix(&dec.e))?;
    out.set_item("f", from_dmatrix(&dec.f))?;
    out.set_item("eplus", from_dmatrix(&dec.eplus))?;
    out.set_item("fplus", from_dmatrix(&dec.fplus))?;
    out.set_item("x", from_dmatrix(&dec.x))?;
    out.set_item("y", from_dmatrix(&dec.y))?;
    out.set_item("n1", dec.n1)?;
    Ok(out.into())
}

/// State feedback K with every eigenvalue of A + BK left of -margin.
#[pyfunction]
fn stabilizing_feedback(a: PyMatrix, b: PyMatrix, margin: f64) -> PyResult<PyMatrix> {
    let a = to_dmatrix(&a, "a")?;
    let b = to_dmatrix(&b, "b")?;
    Ok(from_dmatrix(
        &linalg::stabilizing_feedback(&a, &b, margin).map_err(linalg_err)?,
    ))
}

/// Solve the stacked regulator equations.
///
/// `agents` is a list of (A, B, C, E, F) tuples; `output_map` optionally pins
/// the common output map R. Returns a dict with pi, u (lists of matrices),
/// r, residual, unique, family_dim.
#[pyfunction]
#[pyo3(signature = (agents, s, output_map=None))]
fn solve_regulator(
    py: Python<'_>,
    agents: Vec<(PyMatrix, PyMatrix, PyMatrix, PyMatrix, PyMatrix)>,
    s: PyMatrix,
    output_map: Option<PyMatrix>,
) -> PyResult<Py<pyo3::types::PyDict>> {
    use pyo3::types::PyDict;
    let s = to_dmatrix(&s, "s")?;
    let plants: Vec<linalg::RegulatorAgent> = agents
        .iter()
        .enumerate()
        .map(|(i, (a, b, c, e, f))| {
            Ok(linalg::RegulatorAgent {
                a: to_dmatrix(a, &format!("agents[{i}].a"))?,
                b: to_dmatrix(b, &format!("agents[{i}].b"))?,
                c: to_dmatrix(c, &format!("agents[{i}].c"))?,
                e: to_dmatrix(e, &format!("agents[{i}].e"))?,
                f: to_dmatrix(f, &format!("agents[{i}].f"))?,
            })
        })
        .collect::<PyResult<_>>()?;
    let r = output_map
        .map(|m| to_dmatrix(&m, "output_map"))
        .transpose()?;
    let sol = linalg::solve_regulator(&plants, &s, r.as_ref()).map_err(linalg_err)?;
    let out = PyDict::new(py);
    out.set_item("pi", sol.pi.iter().map(from_dmatrix).collect::<Vec<_>>())?;
    out.set_item("u", sol.u.iter().map(from_dmatrix).collect::<Vec<_>>())?;
    out.set_item("r", from_dmatrix(&sol.r))?;
    out.set_item("residual", sol.residual)?;
    out.set_item("unique", sol.unique)?;
    out.set_item("family_dim", sol.family_dim)?;
    Ok(out.into())
}

/// Feedforward gain K2 = U - K1 Pi from explicit matrices.
#[pyfunction]
fn feedforward_gain(u: PyMatrix, k1: PyMatrix, pi: PyMatrix) -> PyResult<PyMatrix> {
    let u = to_dmatrix(&u, "u")?;
    let k1 = to_dmatrix(&k1, "k1")?;
    let pi = to_dmatrix(&pi, "pi")?;
    if k1.ncols() != pi.nrows() || u.nrows() != k1.nrows() || u.ncols() != pi.ncols() {
        return Err(PyValueError::new_err(
            "feedforward_gain: incompatible shapes",
        ));
    }
    Ok(from_dmatrix(&(u - k1 * pi)))
}

/// A scenario loaded from TOML; validate and run it in-process.
#[pyclass]
struct Scenario {
    inner: CoreScenario,
}

#[pymethods]
impl Scenario {
    /// Parse a scenario from TOML text.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Scenario {
            inner: CoreScenario::from_toml_str(text).map_err(scenario_err)?,
        })
    }

    /// Load a scenario from a file path.
    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        Ok(Scenario {
            inner: CoreScenario::from_path(path).map_err(scenario_err)?,
        })
    }

    fn set_seed(&mut self, seed: u64) {
        self.inner.set_seed(seed);
    }

    fn set_step(&mut self, step: f64) {
        self.inner.set_step(step);
    }

    fn set_horizon(&mut self, horizon: f64) {
        self.inner.set_horizon(horizon);
    }

    /// Run all assumption checks; returns (passed, [(name, ok, detail), ...]).
    fn validate(&self) -> (bool, Vec<(String, bool, String)>) {
        let report = self.inner.validate();
        (
            report.passed,
            report
                .checks
                .into_iter()
                .map(|c| (c.name, c.passed, c.detail))
                .collect(),
        )
    }

    /// Simulate; optionally write the CSV/JSON artifacts to `out_dir`.
    /// Returns the metrics summary as a JSON string.
    #[pyo3(signature = (out_dir=None))]
    fn run(&self, out_dir: Option<&str>) -> PyResult<String> {
        match out_dir {
            Some(dir) => {
                let artifacts = self.inner.run_to_dir(dir).map_err(scenario_err)?;
                serde_json::to_string(&artifacts.metrics)
                    .map_err(|e| PyRuntimeError::new_err(e.to_string()))
            }
            None => {
                let result = self.inner.run().map_err(scenario_err)?;
                serde_json::to_string(&result.trace.metrics)
                    .map_err(|e| PyRuntimeError::new_err(e.to_string()))
            }
        }
    }

    /// Simulate and return the event log as (agent, time, reason) tuples.
    fn run_events(&self) -> PyResult<Vec<(usize, f64, String)>> {
        let result = self.inner.run().map_err(scenario_err)?;
        Ok(result
            .trace
            .events
            .iter()
            .map(|e| (e.agent, e.time, e.reason.to_string()))
            .collect())
    }

    fn __repr__(&self) -> String {
        format!("Scenario(mode={:?})", self.inner.mode())
    }
}

#[pymodule]
fn etcsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(matrix_exponential, m)?)?;
    m.add_function(wrap_pyfunction!(consensus_gain, m)?)?;
    m.add_function(wrap_pyfunction!(neutral_decomposition, m)?)?;
    m.add_function(wrap_pyfunction!(stabilizing_feedback, m)?)?;
    m.add_function(wrap_pyfunction!(solve_regulator, m)?)?;
    m.add_function(wrap_pyfunction!(feedforward_gain, m)?)?;
    m.add_class::<Scenario>()?;
    Ok(())
}
