//! Python bindings for `hopf_energy`.
//!
//! Reports cross the boundary as JSON strings (`to_json`).

use hopf::fields::Bump;
use hopf::inequality::LabConfig;
use hopf::optimizer::{OptimizerConfig, Problem};
use hopf::shape::DerivativeMethod;
use hopf::Error;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::Normalization { .. } | Error::IllConditioned(_) | Error::NonPositiveJacobian { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> PyResult<String> {
    serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// A point of the unit sphere `S^{2k+1}`.
#[pyclass(name = "SpherePoint", frozen)]
struct PySpherePoint(hopf::SpherePoint);

#[pymethods]
impl PySpherePoint {
    #[new]
    fn new(coords: Vec<f64>) -> PyResult<Self> {
        hopf::SpherePoint::new(coords).map(Self).map_err(py_err)
    }

    /// Normalizes a nonzero ambient vector.
    #[staticmethod]
    fn from_ambient(coords: Vec<f64>) -> PyResult<Self> {
        hopf::SpherePoint::from_ambient(coords).map(Self).map_err(py_err)
    }

    #[getter]
    fn coords(&self) -> Vec<f64> {
        self.0.coords().to_vec()
    }

    #[getter]
    fn k(&self) -> usize {
        self.0.k()
    }

    fn distance(&self, other: &PySpherePoint) -> f64 {
        self.0.distance(&other.0)
    }

    fn __repr__(&self) -> String {
        format!("SpherePoint({:?})", self.0.coords())
    }
}

#[pyclass(name = "Domain", frozen)]
struct PyDomain(hopf::DomainSpec);

#[pymethods]
impl PyDomain {
    #[staticmethod]
    fn full(k: usize) -> Self {
        Self(hopf::DomainSpec::full_sphere(k))
    }

    /// Geodesic cap of radius `rho` around the first basis vector.
    #[staticmethod]
    fn cap(k: usize, rho: f64) -> PyResult<Self> {
        hopf::DomainSpec::cap(k, rho).map(Self).map_err(py_err)
    }

    /// `"full"` or `"cap:rho=R"`.
    #[staticmethod]
    fn parse(k: usize, s: &str) -> PyResult<Self> {
        hopf::DomainSpec::parse(k, s).map(Self).map_err(py_err)
    }

    #[getter]
    fn k(&self) -> usize {
        self.0.k()
    }

    #[getter]
    fn radius(&self) -> f64 {
        self.0.radius()
    }

    fn exact_volume(&self) -> f64 {
        self.0.exact_volume()
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.0)
    }

    fn __repr__(&self) -> String {
        format!("Domain({})", self.0.label())
    }
}

#[pyclass(name = "Field", frozen)]
struct PyField(hopf::FieldSpec);

#[pymethods]
impl PyField {
    #[staticmethod]
    fn hopf(k: usize) -> Self {
        Self(hopf::FieldSpec::hopf(k))
    }

    /// The Hopf field of the conjugate complex structure.
    #[staticmethod]
    fn opposite_hopf(k: usize) -> Self {
        Self(hopf::FieldSpec::opposite_hopf(k))
    }

    /// `normalize(H + ψ Σ c_m W_m)` with the default generator family.
    #[staticmethod]
    #[pyo3(signature = (k, coefficients, rho0, profile = "quartic"))]
    fn perturbed(k: usize, coefficients: Vec<f64>, rho0: f64, profile: &str) -> PyResult<Self> {
        let bump = match profile {
            "quartic" => Bump::quartic(rho0),
            "constant" => Bump::constant(rho0),
            other => return Err(PyValueError::new_err(format!("unknown bump profile `{other}`"))),
        };
        hopf::FieldSpec::perturbed(k, coefficients, bump).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        hopf::FieldSpec::from_json(s).map(Self).map_err(py_err)
    }

    #[getter]
    fn k(&self) -> usize {
        self.0.k()
    }

    fn eval(&self, x: &PySpherePoint) -> PyResult<Vec<f64>> {
        hopf::eval_field(&self.0, &x.0).map(|v| v.vec().to_vec()).map_err(py_err)
    }

    /// Shape matrix `h_ij = <∇_{e_i} v, e_j>` in the adapted frame at `x`.
    fn shape_matrix(&self, x: &PySpherePoint) -> PyResult<Vec<Vec<f64>>> {
        let sm = hopf::shape::shape_matrix(&self.0, &x.0).map_err(py_err)?;
        Ok(sm.h.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    /// `[σ_1, …, σ_2k]` at `x`.
    fn sigma(&self, x: &PySpherePoint) -> PyResult<Vec<f64>> {
        let sm = hopf::shape::shape_matrix_with(&self.0, &x.0, DerivativeMethod::Auto).map_err(py_err)?;
        Ok(hopf::shape::sigma(&sm).sigma)
    }

    fn divergence(&self, x: &PySpherePoint) -> PyResult<f64> {
        hopf::shape::divergence(&self.0, &x.0).map_err(py_err)
    }

    fn energy_density(&self, x: &PySpherePoint) -> PyResult<f64> {
        hopf::shape::energy_density(&self.0, &x.0).map_err(py_err)
    }

    /// `(numeric, formula)` determinants of `d(x + t v)` at `x`.
    fn jacobian_det(&self, x: &PySpherePoint, t: f64) -> PyResult<(f64, f64)> {
        let numeric = hopf::phi::jacobian_det_numeric(&self.0, &x.0, t).map_err(py_err)?;
        let sm = hopf::shape::shape_matrix_with(&self.0, &x.0, DerivativeMethod::Auto).map_err(py_err)?;
        Ok((numeric, hopf::phi::jacobian_det_formula(&hopf::shape::sigma(&sm), t)))
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(py_err)
    }

    fn __repr__(&self) -> String {
        match &self.0 {
            hopf::FieldSpec::Hopf { k } => format!("Field.hopf({k})"),
            hopf::FieldSpec::RotatedHopf { k, .. } => format!("Field<rotated hopf, k={k}>"),
            hopf::FieldSpec::Perturbed { k, .. } => format!("Field<perturbed, k={k}>"),
        }
    }
}

#[pyclass(name = "QuadratureRule", frozen)]
struct PyRule(hopf::QuadratureRule);

#[pymethods]
impl PyRule {
    #[new]
    #[pyo3(signature = (domain, radial = None, angular = None))]
    fn new(domain: &PyDomain, radial: Option<usize>, angular: Option<usize>) -> PyResult<Self> {
        let d = hopf::quadrature::Resolution::default_for(domain.0.k());
        hopf::build_quadrature(&domain.0, radial.unwrap_or(d.radial), angular.unwrap_or(d.angular))
            .map(Self)
            .map_err(py_err)
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        hopf::QuadratureRule::from_json(s).map(Self).map_err(py_err)
    }

    fn volume(&self) -> f64 {
        self.0.volume()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(py_err)
    }
}

#[pyclass(name = "EnergyReport", frozen, get_all)]
struct PyEnergyReport {
    k: usize,
    vol_k: f64,
    dirichlet: f64,
    energy: f64,
    bound: f64,
    gap: f64,
    nodes: usize,
    json: String,
}

#[pymethods]
impl PyEnergyReport {
    fn to_json(&self) -> String {
        self.json.clone()
    }

    fn __repr__(&self) -> String {
        format!("EnergyReport(energy={}, bound={}, gap={:e})", self.energy, self.bound, self.gap)
    }
}

/// Energy of `field` over `rule`.
#[pyfunction]
fn energy(py: Python<'_>, field: &PyField, rule: &PyRule) -> PyResult<PyEnergyReport> {
    let r = py
        .detach(|| hopf::energy(&field.0, &rule.0, rule.0.k))
        .map_err(py_err)?;
    Ok(PyEnergyReport {
        k: r.k,
        vol_k: r.vol_k,
        dirichlet: r.dirichlet,
        energy: r.energy,
        bound: r.bound,
        gap: r.gap,
        nodes: r.nodes,
        json: to_json(&r)?,
    })
}

#[pyfunction]
fn energy_lower_bound(k: usize, vol: f64) -> f64 {
    hopf::shape::energy_lower_bound(k, vol)
}

/// Moment identities as a JSON report.
#[pyfunction]
#[pyo3(signature = (field, rule, t_grid = None))]
fn moment_identities(py: Python<'_>, field: &PyField, rule: &PyRule, t_grid: Option<Vec<f64>>) -> PyResult<String> {
    let grid = t_grid.unwrap_or_else(hopf::phi::default_t_grid);
    let r = py
        .detach(|| hopf::phi::moment_identities(&field.0, &rule.0, &grid))
        .map_err(py_err)?;
    to_json(&r)
}

/// Matrix identity lab as a JSON report.
#[pyfunction]
#[pyo3(signature = (samples = 100_000, dims = vec![2, 4, 6], seed = 0))]
fn verify_identities(py: Python<'_>, samples: u64, dims: Vec<usize>, seed: u64) -> PyResult<String> {
    let cfg = LabConfig { samples, dims, seed, ..LabConfig::default() };
    let r = py.detach(|| hopf::run_lab(&cfg)).map_err(py_err)?;
    to_json(&r)
}

fn optimizer_config(config_json: Option<&str>) -> PyResult<OptimizerConfig> {
    match config_json {
        None => Ok(OptimizerConfig::default()),
        Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string())),
    }
}

/// Penalized objective at `c`; `config_json` is an optimizer config object.
#[pyfunction]
#[pyo3(signature = (c, config_json = None))]
fn penalized_objective(py: Python<'_>, c: Vec<f64>, config_json: Option<&str>) -> PyResult<f64> {
    let cfg = optimizer_config(config_json)?;
    py.detach(|| hopf::penalized_objective(&c, &cfg)).map_err(py_err)
}

/// Runs the optimizer from `c0` (a seeded random start when omitted).
#[pyfunction]
#[pyo3(signature = (config_json = None, c0 = None))]
fn minimize(py: Python<'_>, config_json: Option<&str>, c0: Option<Vec<f64>>) -> PyResult<String> {
    let cfg = optimizer_config(config_json)?;
    let r = py
        .detach(|| {
            let p = Problem::new(&cfg)?;
            let start = c0.unwrap_or_else(|| p.random_start(0));
            hopf::optimizer::minimize_problem(&p, &start)
        })
        .map_err(py_err)?;
    to_json(&r)
}

#[pymodule]
fn hopf_energy(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", hopf::VERSION)?;
    m.add_class::<PySpherePoint>()?;
    m.add_class::<PyDomain>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PyRule>()?;
    m.add_class::<PyEnergyReport>()?;
    m.add_function(wrap_pyfunction!(energy, m)?)?;
    m.add_function(wrap_pyfunction!(energy_lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(moment_identities, m)?)?;
    m.add_function(wrap_pyfunction!(verify_identities, m)?)?;
    m.add_function(wrap_pyfunction!(penalized_objective, m)?)?;
    m.add_function(wrap_pyfunction!(minimize, m)?)?;
    Ok(())
}
