//! Python bindings for the behavior/negativity toolkit.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use bellns::behavior::{make_family, mix, Behavior, Family, Scenario};
use bellns::corrbasis::{chsh_from_fixed, min_l2_quasiprob, z0_from_behavior};
use bellns::detcomp::{apply_deterministic, QuasiProb};
use bellns::lp_baseline::{min_l1_quasiprob_lp, ns_distance};
use bellns::quantify::{critical_visibility, neg_of_behavior, Method};
use bellns::sparse_solver::SolverConfig;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_method(method: &str) -> PyResult<Method> {
    Method::parse(method).ok_or_else(|| PyValueError::new_err(format!("unknown method `{method}`")))
}

/// A bipartite no-signalling behavior P(ab|xy).
#[pyclass(name = "Behavior", skip_from_py_object)]
#[derive(Clone)]
struct PyBehavior {
    inner: Behavior,
}

#[pymethods]
impl PyBehavior {
    /// Build from a flat probability table in (x, y, a, b) row-major order.
    #[new]
    fn new(n: usize, m: usize, p: Vec<f64>) -> PyResult<Self> {
        let scenario = Scenario::new(n, m).map_err(err)?;
        Ok(PyBehavior {
            inner: Behavior::new(scenario, p).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyBehavior {
            inner: Behavior::from_json(text).map_err(err)?,
        })
    }

    #[staticmethod]
    fn family(name: &str, n: usize, m: usize) -> PyResult<Self> {
        let scenario = Scenario::new(n, m).map_err(err)?;
        let family = match name.to_ascii_lowercase().as_str() {
            "whitenoise" => Family::WhiteNoise,
            "localdet" => Family::LocalDeterministic,
            "pr" => Family::GeneralizedPr,
            other => return Err(PyValueError::new_err(format!("unknown family `{other}`"))),
        };
        Ok(PyBehavior {
            inner: make_family(family, scenario).map_err(err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.scenario().n
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.scenario().m
    }

    fn get(&self, x: usize, y: usize, a: usize, b: usize) -> f64 {
        self.inner.get(x, y, a, b)
    }

    fn probabilities(&self) -> Vec<f64> {
        self.inner.as_slice().to_vec()
    }

    fn is_no_signalling(&self, tol: f64) -> bool {
        self.inner.check_no_signalling(tol).is_ns
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn mix_with(&self, other: &PyBehavior, weight: f64) -> PyResult<Self> {
        Ok(PyBehavior {
            inner: mix(
                &[self.inner.clone(), other.inner.clone()],
                &[weight, 1.0 - weight],
            )
            .map_err(err)?,
        })
    }

    fn chsh(&self) -> PyResult<f64> {
        let fixed = z0_from_behavior(&self.inner).map_err(err)?;
        chsh_from_fixed(&fixed).map_err(err)
    }

    fn __repr__(&self) -> String {
        let s = self.inner.scenario();
        format!("Behavior(n={}, m={})", s.n, s.m)
    }
}

/// A quasi-probability over joint deterministic assignments.
#[pyclass(name = "QuasiProb", skip_from_py_object)]
#[derive(Clone)]
struct PyQuasiProb {
    inner: QuasiProb,
}

#[pymethods]
impl PyQuasiProb {
    #[new]
    fn new(n: usize, m: usize, q: Vec<f64>) -> PyResult<Self> {
        let scenario = Scenario::new(n, m).map_err(err)?;
        Ok(PyQuasiProb {
            inner: QuasiProb::new(scenario, q).map_err(err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.scenario().n
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.scenario().m
    }

    fn values(&self) -> Vec<f64> {
        self.inner.as_slice().to_vec()
    }

    fn l1_norm(&self) -> f64 {
        self.inner.l1_norm()
    }

    fn negativity(&self) -> f64 {
        self.inner
            .as_slice()
            .iter()
            .map(|&v| (-v).max(0.0))
            .sum()
    }

    fn to_behavior(&self) -> PyResult<PyBehavior> {
        Ok(PyBehavior {
            inner: apply_deterministic(&self.inner),
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn __repr__(&self) -> String {
        let s = self.inner.scenario();
        format!("QuasiProb(n={}, m={}, len={})", s.n, s.m, self.inner.as_slice().len())
    }
}

/// Minimal negativity of a behavior; method is "nesta" or "lp".
#[pyfunction]
#[pyo3(signature = (behavior, method = "nesta"))]
fn negativity(behavior: &PyBehavior, method: &str) -> PyResult<f64> {
    let method = parse_method(method)?;
    let record = neg_of_behavior(&behavior.inner, method, &SolverConfig::default()).map_err(err)?;
    Ok(record.negativity)
}

/// ℓ1 distance to the local polytope (LP).
#[pyfunction]
fn local_distance(behavior: &PyBehavior) -> PyResult<f64> {
    ns_distance(&behavior.inner).map_err(err)
}

/// Whether the behavior admits a proper local model.
#[pyfunction]
#[pyo3(signature = (behavior, method = "lp", threshold = 1e-5))]
fn is_local(behavior: &PyBehavior, method: &str, threshold: f64) -> PyResult<bool> {
    match parse_method(method)? {
        Method::Lp => Ok(ns_distance(&behavior.inner).map_err(err)? <= 1e-9),
        Method::Nesta => Ok(negativity(behavior, "nesta")? <= threshold),
    }
}

/// Minimal-ℓ1 quasi-probability via the LP baseline.
#[pyfunction]
fn sparsest_quasiprob(behavior: &PyBehavior) -> PyResult<PyQuasiProb> {
    let (q, _) = min_l1_quasiprob_lp(&behavior.inner).map_err(err)?;
    Ok(PyQuasiProb { inner: q })
}

/// Minimal-ℓ2 quasi-probability from the closed-form decomposition.
#[pyfunction]
fn min_l2(behavior: &PyBehavior) -> PyResult<PyQuasiProb> {
    min_l2_quasiprob(&behavior.inner)
        .map(|q| PyQuasiProb { inner: q })
        .map_err(err)
}

/// Critical visibility of target mixed with noise, by bisection.
#[pyfunction]
#[pyo3(signature = (target, noise, method = "lp", tol = 1e-3))]
fn visibility_threshold(
    target: &PyBehavior,
    noise: &PyBehavior,
    method: &str,
    tol: f64,
) -> PyResult<f64> {
    critical_visibility(
        &target.inner,
        &noise.inner,
        parse_method(method)?,
        tol,
        &SolverConfig::default(),
    )
    .map_err(err)
}

#[pymodule]
fn bellns_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBehavior>()?;
    m.add_class::<PyQuasiProb>()?;
    m.add_function(wrap_pyfunction!(negativity, m)?)?;
    m.add_function(wrap_pyfunction!(local_distance, m)?)?;
    m.add_function(wrap_pyfunction!(is_local, m)?)?;
    m.add_function(wrap_pyfunction!(sparsest_quasiprob, m)?)?;
    m.add_function(wrap_pyfunction!(min_l2, m)?)?;
    m.add_function(wrap_pyfunction!(visibility_threshold, m)?)?;
    Ok(())
}
