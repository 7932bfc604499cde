//! Python bindings. Structured results come back as plain dicts and lists
//! built from the same JSON the CLI writes.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use strongdamp::action::{action, DiscretePath, Functional};
use strongdamp::exit::{exit_scaling, ExitConfig};
use strongdamp::fields::{validate_with, ValidationOptions};
use strongdamp::front::{self, FrontPathConfig, GridSpec};
use strongdamp::ldpcheck::{h_eps_scaling, laplace_check, HScalingConfig, LaplaceConfig};
use strongdamp::noise::NoisePath;
use strongdamp::quasipotential::{gradient_case_oracle, quasipotential_boundary, quasipotential_v, MamConfig};
use strongdamp::sde::{simulate_first_order, simulate_inertial, Scheme, SimParams};
use strongdamp::suite::{run_suite as run_suite_core, SuiteConfig};
use strongdamp::{parse_expression, presets, Error, ProblemDefinition};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Parse(_) | Error::Problem(_) | Error::Precondition(_) | Error::GridMismatch(_) | Error::Json(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn functional(name: &str) -> PyResult<Functional> {
    match name {
        "cf41" => Ok(Functional::Cf41),
        "cf400" => Ok(Functional::Cf400),
        _ => Err(PyValueError::new_err(format!(
            "unknown functional `{name}`, use cf41 or cf400"
        ))),
    }
}

/// A compiled problem: drift, noise, friction and the optional potential,
/// reaction, initial datum and exit domain.
#[pyclass(frozen)]
struct Problem {
    inner: ProblemDefinition,
}

#[pymethods]
impl Problem {
    /// One of the bundled presets: p1, p2, p3, tilted, huygens_2d, kpp_1d.
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        let inner = presets::load(name)
            .map_err(|_| PyValueError::new_err(format!("unknown preset `{name}` (have {:?})", presets::NAMES)))?;
        Ok(Problem { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Problem {
            inner: ProblemDefinition::from_json(text).map_err(py_err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn r(&self) -> usize {
        self.inner.noise_dim()
    }

    #[getter]
    fn equilibrium(&self) -> Vec<f64> {
        self.inner.equilibrium().to_vec()
    }

    fn drift(&self, q: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.drift(&q).map_err(py_err)
    }

    fn alpha(&self, q: Vec<f64>) -> PyResult<f64> {
        self.inner.alpha(&q).map_err(py_err)
    }

    /// Sample-based check of the standing hypotheses.
    #[pyo3(signature = (samples=1000, seed=0))]
    fn validate<'py>(&self, py: Python<'py>, samples: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let report = py
            .detach(|| validate_with(&self.inner, samples, seed, ValidationOptions::default()))
            .map_err(py_err)?;
        to_py(py, &report)
    }

    fn __repr__(&self) -> String {
        format!("Problem(d={}, r={})", self.inner.dim(), self.inner.noise_dim())
    }
}

/// One inertial (or first-order) trajectory on the grid `k h`. Returns a dict
/// with `t`, `q` and `p`, the last two as lists of points.
#[pyfunction]
#[pyo3(signature = (problem, eps, t_end, h, seed, q0=None, p0=None, scheme="exponential", stream=0, first_order=false))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    problem: &Problem,
    eps: f64,
    t_end: f64,
    h: f64,
    seed: u64,
    q0: Option<Vec<f64>>,
    p0: Option<Vec<f64>>,
    scheme: &str,
    stream: u64,
    first_order: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let p = &problem.inner;
    let scheme = match scheme {
        "exponential" => Scheme::Exponential,
        "euler" => Scheme::Euler,
        _ => return Err(PyValueError::new_err(format!("unknown scheme `{scheme}`"))),
    };
    let q0 = q0.unwrap_or_else(|| p.equilibrium().to_vec());
    let p0 = p0.unwrap_or_else(|| vec![0.0; p.dim()]);
    let sp = SimParams {
        seed,
        ..SimParams::new(eps, t_end, h, scheme)
    };
    let tr = py
        .detach(|| {
            let noise = NoisePath::generate(seed, stream, sp.steps()?, p.noise_dim(), h)?;
            if first_order {
                simulate_first_order(p, &sp, &q0, &noise, None)
            } else {
                simulate_inertial(p, &sp, &q0, &p0, &noise, None)
            }
        })
        .map_err(py_err)?;
    let d = tr.d;
    let q: Vec<&[f64]> = tr.q.chunks(d).collect();
    let v: Vec<&[f64]> = tr.p.chunks(d).collect();
    to_py(py, &serde_json::json!({ "t": tr.times, "q": q, "p": v }))
}

/// Discrete action of a path given as `N + 1` points on `[0, T]`.
#[pyfunction]
#[pyo3(signature = (problem, points, t_end, which="cf41"))]
fn path_action(problem: &Problem, points: Vec<Vec<f64>>, t_end: f64, which: &str) -> PyResult<f64> {
    let d = points.first().map(|x| x.len()).unwrap_or(0);
    if points.iter().any(|x| x.len() != d) {
        return Err(PyValueError::new_err("points must all have the same dimension"));
    }
    let f = DiscretePath::new(t_end, d, points.concat()).map_err(py_err)?;
    Ok(action(&f, &problem.inner, functional(which)?).map_err(py_err)?.value)
}

/// Minimum action from `start` (the equilibrium by default) to `q`.
#[pyfunction]
#[pyo3(signature = (problem, q, start=None, n=128, which="cf41"))]
fn quasipotential<'py>(
    py: Python<'py>,
    problem: &Problem,
    q: Vec<f64>,
    start: Option<Vec<f64>>,
    n: usize,
    which: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let p = &problem.inner;
    let start = start.unwrap_or_else(|| p.equilibrium().to_vec());
    let cfg = MamConfig {
        n,
        functional: functional(which)?,
        ..MamConfig::default()
    };
    let r = py.detach(|| quasipotential_v(&start, &q, p, &cfg)).map_err(py_err)?;
    to_py(py, &r)
}

/// Minimum of the quasi-potential over the boundary of the exit domain.
#[pyfunction]
#[pyo3(signature = (problem, samples=32))]
fn boundary_minimum<'py>(py: Python<'py>, problem: &Problem, samples: usize) -> PyResult<Bound<'py, PyAny>> {
    let r = py
        .detach(|| quasipotential_boundary(&problem.inner, samples, &MamConfig::default()))
        .map_err(py_err)?;
    to_py(py, &r)
}

/// `2 (U(q) - U(O))` in the gradient case.
#[pyfunction]
fn gradient_oracle(problem: &Problem, q: Vec<f64>) -> PyResult<f64> {
    gradient_case_oracle(&q, &problem.inner).map_err(py_err)
}

/// Exit-time Monte Carlo along a decreasing eps ladder.
#[pyfunction]
#[pyo3(signature = (problem, eps_ladder, m, seed, h_over_eps2=0.25))]
fn exit_times<'py>(
    py: Python<'py>,
    problem: &Problem,
    eps_ladder: Vec<f64>,
    m: usize,
    seed: u64,
    h_over_eps2: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = ExitConfig {
        h_over_eps2,
        ..ExitConfig::default()
    };
    let r = py
        .detach(|| exit_scaling(&problem.inner, &eps_ladder, m, seed, &cfg, None))
        .map_err(py_err)?;
    to_py(py, &r)
}

/// Riemannian distance to the support of the initial datum on a grid.
#[pyfunction]
fn riemannian_distance<'py>(
    py: Python<'py>,
    problem: &Problem,
    lo: Vec<f64>,
    hi: Vec<f64>,
    h: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let spec = GridSpec { lo, hi, h };
    let g = py
        .detach(|| front::riemannian_distance(&problem.inner, &spec))
        .map_err(py_err)?;
    to_py(py, &g)
}

/// Mean front radius over `times` and the fitted speed, for constant `c`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn front_speed<'py>(
    py: Python<'py>,
    problem: &Problem,
    lo: Vec<f64>,
    hi: Vec<f64>,
    h: f64,
    c: f64,
    times: Vec<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let p = &problem.inner;
    let spec = GridSpec { lo, hi, h };
    let s = py
        .detach(|| {
            let rho = front::riemannian_distance(p, &spec)?;
            front::front_speed(&rho, c, &times, p.equilibrium())
        })
        .map_err(py_err)?;
    to_py(py, &s)
}

/// Path-optimized `R(t, q)`.
#[pyfunction]
#[pyo3(signature = (problem, q, t, n=64))]
fn r_general<'py>(py: Python<'py>, problem: &Problem, q: Vec<f64>, t: f64, n: usize) -> PyResult<Bound<'py, PyAny>> {
    let r = py
        .detach(|| front::r_general(&problem.inner, &q, t, n, &FrontPathConfig::default()))
        .map_err(py_err)?;
    to_py(py, &r)
}

/// Path-optimized `R~(t, q)` with the prefix minimum.
#[pyfunction]
#[pyo3(signature = (problem, q, t, n=64))]
fn r_tilde<'py>(py: Python<'py>, problem: &Problem, q: Vec<f64>, t: f64, n: usize) -> PyResult<Bound<'py, PyAny>> {
    let r = py
        .detach(|| front::r_tilde(&problem.inner, &q, t, n, &FrontPathConfig::default()))
        .map_err(py_err)?;
    to_py(py, &r)
}

/// Fitted exponent of `E sup |H|` against eps.
#[pyfunction]
fn h_scaling<'py>(
    py: Python<'py>,
    problem: &Problem,
    eps_ladder: Vec<f64>,
    m: usize,
    t_end: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let r = py
        .detach(|| h_eps_scaling(&problem.inner, &eps_ladder, m, t_end, seed, &HScalingConfig::default()))
        .map_err(py_err)?;
    to_py(py, &r)
}

/// Monte Carlo `-eps log E exp(-lambda(q(T)) / eps)` against the
/// variational value.
#[pyfunction]
fn laplace<'py>(
    py: Python<'py>,
    problem: &Problem,
    terminal_cost: &str,
    eps_ladder: Vec<f64>,
    m: usize,
    t_end: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let lambda = parse_expression(terminal_cost).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let r = py
        .detach(|| {
            laplace_check(
                &problem.inner,
                &lambda,
                &eps_ladder,
                m,
                t_end,
                seed,
                &LaplaceConfig::default(),
            )
        })
        .map_err(py_err)?;
    to_py(py, &r)
}

/// Runs acceptance criteria into `out` and returns the report.
#[pyfunction]
#[pyo3(signature = (seed, out, criteria=None))]
fn run_suite<'py>(py: Python<'py>, seed: u64, out: PathBuf, criteria: Option<Vec<u32>>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = SuiteConfig {
        seed,
        criteria: criteria.unwrap_or_else(|| (1..=9).collect()),
        ..SuiteConfig::default()
    };
    let run = py.detach(|| run_suite_core(&cfg, &out)).map_err(py_err)?;
    to_py(
        py,
        &serde_json::json!({
            "report": run.report,
            "seconds": run.seconds,
            "lines": run.lines(),
            "all_passed": run.all_passed(),
        }),
    )
}

#[pymodule]
fn strongdamp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Problem>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(path_action, m)?)?;
    m.add_function(wrap_pyfunction!(quasipotential, m)?)?;
    m.add_function(wrap_pyfunction!(boundary_minimum, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(exit_times, m)?)?;
    m.add_function(wrap_pyfunction!(riemannian_distance, m)?)?;
    m.add_function(wrap_pyfunction!(front_speed, m)?)?;
    m.add_function(wrap_pyfunction!(r_general, m)?)?;
    m.add_function(wrap_pyfunction!(r_tilde, m)?)?;
    m.add_function(wrap_pyfunction!(h_scaling, m)?)?;
    m.add_function(wrap_pyfunction!(laplace, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
