//! Python bindings: field laws, asymptotic constants, recentering and
//! enumeration of single replicas. Structured results come back as plain
//! dicts and lists.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use remfield::extremal::{sample_reference_process, ReferenceProcess};
use remfield::{EmpiricalField, Error, FieldModel, ReplicaSpec, ThermoSolution};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Convergence(_) | Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn py_to_json<T: serde::de::DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = if let Ok(s) = obj.extract::<String>() {
        s
    } else {
        obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?
    };
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Law of one field component.
#[pyclass(name = "FieldModel", frozen, module = "remfield", skip_from_py_object)]
#[derive(Clone)]
pub struct PyFieldModel {
    inner: FieldModel,
}

#[pymethods]
impl PyFieldModel {
    #[staticmethod]
    fn zero() -> Self {
        PyFieldModel { inner: FieldModel::zero() }
    }

    #[staticmethod]
    fn point_mass(h: f64) -> PyResult<Self> {
        Ok(PyFieldModel { inner: FieldModel::point_mass(h).map_err(to_py)? })
    }

    #[staticmethod]
    #[pyo3(signature = (p = 0.5, a = 1.0))]
    fn rademacher(p: f64, a: f64) -> PyResult<Self> {
        Ok(PyFieldModel { inner: FieldModel::rademacher(p, a).map_err(to_py)? })
    }

    #[staticmethod]
    #[pyo3(signature = (mean = 0.0, stddev = 1.0))]
    fn gaussian(mean: f64, stddev: f64) -> PyResult<Self> {
        Ok(PyFieldModel { inner: FieldModel::gaussian(mean, stddev).map_err(to_py)? })
    }

    #[staticmethod]
    fn uniform(lo: f64, hi: f64) -> PyResult<Self> {
        Ok(PyFieldModel { inner: FieldModel::uniform(lo, hi).map_err(to_py)? })
    }

    #[staticmethod]
    fn discrete(values: Vec<f64>, probs: Vec<f64>) -> PyResult<Self> {
        Ok(PyFieldModel { inner: FieldModel::discrete(values, probs).map_err(to_py)? })
    }

    /// From a tagged dict or JSON string such as `{"kind": "rademacher", "p": 0.5, "a": 1.0}`.
    #[staticmethod]
    fn from_json(obj: &Bound<'_, PyAny>) -> PyResult<Self> {
        Ok(PyFieldModel { inner: py_to_json(obj)? })
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, &self.inner)
    }

    /// `(psi, psi', psi'')` at `t`.
    fn psi(&self, t: f64) -> PyResult<(f64, f64, f64)> {
        let c = self.inner.psi(t).map_err(to_py)?;
        Ok((c.psi, c.psi_prime, c.psi_double_prime))
    }

    fn mean_abs(&self) -> f64 {
        self.inner.mean_abs()
    }

    fn rate(&self, y: f64) -> PyResult<f64> {
        remfield::rate_i(&self.inner, y).map_err(to_py)
    }

    /// `(t, I)` with `psi'(t) = y`.
    fn conjugate(&self, y: f64) -> PyResult<(f64, f64)> {
        let p = remfield::conjugate(&self.inner, y).map_err(to_py)?;
        Ok((p.t, p.i))
    }

    fn sample(&self, n: usize, seed: u64) -> PyResult<Vec<f64>> {
        Ok(self.inner.sample(n, seed).map_err(to_py)?.h().to_vec())
    }

    fn __repr__(&self) -> String {
        format!("FieldModel({})", serde_json::to_string(&self.inner).unwrap_or_default())
    }
}

/// Asymptotic constants of one field law.
#[pyclass(name = "ThermoSolution", frozen, module = "remfield")]
pub struct PyThermo {
    inner: ThermoSolution,
    model: FieldModel,
}

#[pymethods]
impl PyThermo {
    #[new]
    fn new(model: &PyFieldModel) -> PyResult<Self> {
        Ok(PyThermo { inner: ThermoSolution::solve(&model.inner).map_err(to_py)?, model: model.inner.clone() })
    }

    #[getter]
    fn beta_c(&self) -> f64 {
        self.inner.beta_c
    }

    #[getter]
    fn e_max(&self) -> f64 {
        self.inner.e_max
    }

    #[getter]
    fn e_min(&self) -> f64 {
        self.inner.e_min
    }

    #[getter]
    fn q(&self) -> f64 {
        self.inner.q
    }

    #[getter]
    fn c_intensity(&self) -> f64 {
        self.inner.c_intensity
    }

    #[getter]
    fn y_star(&self) -> f64 {
        self.inner.y_star
    }

    fn free_energy(&self, beta: f64) -> f64 {
        self.inner.free_energy(&self.model, beta)
    }

    fn gibbs_variational(&self, beta: f64) -> PyResult<(f64, f64)> {
        let v = self.inner.gibbs_variational(&self.model, beta).map_err(to_py)?;
        Ok((v.value, v.e_star))
    }

    /// `(value, m_star)`.
    fn fractional_bound(&self, beta: f64) -> PyResult<(f64, f64)> {
        let b = self.inner.fractional_bound(&self.model, beta).map_err(to_py)?;
        Ok((b.value, b.m_star))
    }

    fn entropy(&self, e: f64) -> PyResult<f64> {
        Ok(remfield::thermo::entropy_s(&self.model, e).map_err(to_py)?.s)
    }

    /// Points of one realization of the limiting extremal process above `floor`.
    fn reference_process(&self, seed: u64, floor: f64) -> PyResult<Vec<f64>> {
        let ReferenceProcess { points, .. } = sample_reference_process(&self.inner, seed, floor).map_err(to_py)?;
        Ok(points)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!("ThermoSolution(beta_c={}, e_max={}, q={})", self.inner.beta_c, self.inner.e_max, self.inner.q)
    }
}

#[pyfunction]
fn solve_thermo(model: &PyFieldModel) -> PyResult<PyThermo> {
    PyThermo::new(model)
}

/// Finite-size recentering constants of a field given as a list of floats.
#[pyfunction]
fn recentering_constants<'py>(py: Python<'py>, h: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    let k = remfield::recentering_constants(&EmpiricalField::new(h)).map_err(to_py)?;
    json_to_py(py, &k)
}

/// Enumerates one replica. `spec` is a dict or JSON string with keys `model`,
/// `n`, `seed_field`, `seed_energy`, `betas` and optionally `top_k`, `delta`,
/// `entropy_grid`; the record comes back as a dict.
#[pyfunction]
fn run_replica<'py>(py: Python<'py>, spec: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let spec: ReplicaSpec = py_to_json(spec)?;
    let rec = py.detach(|| remfield::run_replica(&spec)).map_err(to_py)?;
    json_to_py(py, &rec)
}

#[pyfunction]
fn energy_at(spec: &Bound<'_, PyAny>, config_index: u64) -> PyResult<f64> {
    let spec: ReplicaSpec = py_to_json(spec)?;
    remfield::energy_at(&spec, config_index).map_err(to_py)
}

#[pymodule(name = "remfield")]
fn remfield_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFieldModel>()?;
    m.add_class::<PyThermo>()?;
    m.add_function(wrap_pyfunction!(solve_thermo, m)?)?;
    m.add_function(wrap_pyfunction!(recentering_constants, m)?)?;
    m.add_function(wrap_pyfunction!(run_replica, m)?)?;
    m.add_function(wrap_pyfunction!(energy_at, m)?)?;
    let dict = PyDict::new(m.py());
    dict.set_item("version", env!("CARGO_PKG_VERSION"))?;
    m.add("build", dict)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn module_round_trip() {
        Python::initialize();
        Python::attach(|py| {
            let m = PyModule::new(py, "remfield").unwrap();
            remfield_module(&m).unwrap();
            let model = PyFieldModel::rademacher(0.5, 1.0).unwrap();
            let th = solve_thermo(&model).unwrap();
            assert!((th.beta_c() - 0.9024711129010354).abs() < 1e-12);
            let spec = PyDict::new(py);
            spec.set_item("model", model.to_dict(py).unwrap()).unwrap();
            spec.set_item("n", 8).unwrap();
            spec.set_item("seed_field", 1).unwrap();
            spec.set_item("seed_energy", 2).unwrap();
            spec.set_item("betas", vec![0.5, 2.0]).unwrap();
            let rec = run_replica(py, spec.as_any()).unwrap();
            let max: f64 = rec.get_item("max_energy").unwrap().extract().unwrap();
            let pattern: u64 = rec.get_item("max_pattern").unwrap().extract().unwrap();
            assert_eq!(energy_at(spec.as_any(), pattern).unwrap(), max);
            let err = PyFieldModel::rademacher(1.5, 1.0).err().unwrap();
            assert!(err.is_instance_of::<PyValueError>(py));
        });
    }
}
