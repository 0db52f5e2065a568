//! Python bindings: run configurations, training, composite solutions,
//! networks, spectra and the reference oracles.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use mspinn::autodiff::eval_jets;
use mspinn::io::{load_checkpoint, save_checkpoint};
use mspinn::multistage::{self, CompositeSolution, RunReport};
use mspinn::network::{xavier_init, NetworkParams};
use mspinn::problems::{burgers_reference, HelmholtzProblem, ProblemConfig};
use mspinn::spectral::{self, GridField};
use mspinn::{specfun, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        e @ (Error::InvalidArgument(_)
        | Error::Format(_)
        | Error::DimensionMismatch { .. }
        | Error::Domain(_)
        | Error::Range(_)) => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn flatten(points: &[[f64; 2]]) -> Vec<f64> {
    points.iter().flatten().copied().collect()
}

fn rows(flat: Vec<f64>, width: usize) -> Vec<Vec<f64>> {
    flat.chunks(width).map(<[f64]>::to_vec).collect()
}

/// A full run description; see the repository docs for the schema.
#[pyclass(name = "RunConfig")]
#[derive(Clone)]
struct PyRunConfig {
    inner: multistage::RunConfig,
}

#[pymethods]
impl PyRunConfig {
    #[new]
    #[pyo3(signature = (toml = ""))]
    fn new(toml: &str) -> PyResult<Self> {
        let inner: multistage::RunConfig =
            toml::from_str(toml).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    fn to_toml(&self) -> PyResult<String> {
        toml::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn method(&self) -> &'static str {
        self.inner.method.as_str()
    }

    #[setter]
    fn set_method(&mut self, name: &str) -> PyResult<()> {
        self.inner.method = name.parse().map_err(py_err)?;
        Ok(())
    }

    #[getter]
    fn stages(&self) -> usize {
        self.inner.stages
    }

    #[setter]
    fn set_stages(&mut self, n: usize) {
        self.inner.stages = n;
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    fn __repr__(&self) -> String {
        format!(
            "RunConfig(method={:?}, stages={}, seed={}, problem={:?})",
            self.inner.method.as_str(),
            self.inner.stages,
            self.inner.seed,
            self.inner.problem.as_problem().name()
        )
    }
}

/// A trained composite solution `Σ ε_j u_j` with the problem it solves.
#[pyclass(name = "Solution")]
struct PySolution {
    problem: ProblemConfig,
    inner: CompositeSolution,
}

#[pymethods]
impl PySolution {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ck = load_checkpoint(&path).map_err(py_err)?;
        Ok(Self {
            problem: ck.problem,
            inner: ck.solution,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&path, &self.problem, &self.inner).map_err(py_err)
    }

    #[getter]
    fn problem(&self) -> &'static str {
        self.problem.as_problem().name()
    }

    #[getter]
    fn epsilons(&self) -> Vec<f64> {
        self.inner.epsilons()
    }

    #[getter]
    fn n_stages(&self) -> usize {
        self.inner.stages().len()
    }

    /// Solution components at each `(x, y)` point.
    fn values(&self, points: Vec<[f64; 2]>) -> PyResult<Vec<Vec<f64>>> {
        let v = self.inner.values(&flatten(&points)).map_err(py_err)?;
        Ok(rows(v, self.inner.output_dim()))
    }

    /// Value, gradient and Hessian diagonal per component at each point.
    fn jets(&self, points: Vec<[f64; 2]>) -> PyResult<Vec<Vec<f64>>> {
        let j = self.inner.jets(&flatten(&points)).map_err(py_err)?;
        Ok(rows(j, self.inner.output_dim() * 5))
    }

    /// Relative L2 error per component against the reference on an inclusive grid.
    #[pyo3(signature = (nx = 101, ny = 101))]
    fn l2_errors(&self, nx: usize, ny: usize) -> PyResult<Vec<f64>> {
        multistage::evaluate_error(&self.inner, self.problem.as_problem(), [nx, ny]).map_err(py_err)
    }

    /// RMS of the interior residual on the spectrum grid.
    #[pyo3(signature = (nx = 64, ny = 64))]
    fn residual_rms(&self, nx: usize, ny: usize) -> PyResult<f64> {
        let fields = multistage::residual_field(&self.inner, self.problem.as_problem(), [nx, ny]).map_err(py_err)?;
        multistage::rms_fields(&fields).map_err(py_err)
    }

    fn network(&self, stage: usize) -> PyResult<PyNetwork> {
        self.inner
            .stages()
            .get(stage)
            .map(|s| PyNetwork { inner: s.network.clone() })
            .ok_or_else(|| PyValueError::new_err(format!("no stage {stage}")))
    }
}

/// Train a run; returns the solution and the report as a TOML string.
#[pyfunction]
fn run(py: Python<'_>, config: &PyRunConfig) -> PyResult<(PySolution, String)> {
    let cfg = config.inner.clone();
    let out = py.allow_threads(|| multistage::run(&cfg)).map_err(py_err)?;
    let report: &RunReport = &out.report;
    let text = report.to_toml().map_err(py_err)?;
    Ok((
        PySolution {
            problem: cfg.problem,
            inner: out.solution,
        },
        text,
    ))
}

/// A single dense stage network.
#[pyclass(name = "Network")]
#[derive(Clone)]
struct PyNetwork {
    inner: NetworkParams,
}

#[pymethods]
impl PyNetwork {
    /// Tanh MLP with Xavier-uniform weights, e.g. `dims=[2, 20, 20, 1]`.
    #[staticmethod]
    fn xavier(dims: Vec<usize>, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: xavier_init(&dims, seed).map_err(py_err)?,
        })
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.inner.dims()
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.inner.n_params()
    }

    fn params(&self) -> Vec<f64> {
        self.inner.params()
    }

    fn set_params(&mut self, params: Vec<f64>) -> PyResult<()> {
        self.inner.set_params(&params).map_err(py_err)
    }

    /// Per point: for each output, value, gradient and Hessian diagonal.
    fn jets(&self, points: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let flat: Vec<f64> = points.concat();
        let j = eval_jets(&self.inner, &flat).map_err(py_err)?;
        let d = self.inner.input_dim();
        Ok(rows(j, self.inner.output_dim() * (1 + 2 * d)))
    }
}

/// Dominant modes of a row-major `nx × ny` field sampled on the periodic grid
/// over `domain = [[x0, x1], [y0, y1]]`, as `(k_x, k_y, amplitude, phase)`
/// with angular frequencies and physical amplitudes.
#[pyfunction]
fn top_modes(
    values: Vec<f64>,
    nx: usize,
    ny: usize,
    domain: [[f64; 2]; 2],
    n: usize,
) -> PyResult<Vec<(f64, f64, f64, f64)>> {
    let field = GridField::new(nx, ny, domain, values).map_err(py_err)?;
    let modes = spectral::extract_top_modes(&spectral::dft2(&field), n).map_err(py_err)?;
    Ok(modes
        .modes
        .iter()
        .map(|m| (m.frequency[0], m.frequency[1], m.alpha * modes.scale, m.phase))
        .collect())
}

/// Power spectral density of a row-major field, in DFT bin order.
#[pyfunction]
fn psd(values: Vec<f64>, nx: usize, ny: usize, domain: [[f64; 2]; 2]) -> PyResult<Vec<f64>> {
    let field = GridField::new(nx, ny, domain, values).map_err(py_err)?;
    Ok(spectral::psd(&spectral::dft2(&field)).values().to_vec())
}

#[pyfunction]
#[pyo3(signature = (x, t, nu = 1.0))]
fn burgers_solution(x: f64, t: f64, nu: f64) -> PyResult<f64> {
    burgers_reference(x, t, nu).map_err(py_err)
}

/// `(E_rz, E_iz)` of plane-wave scattering by the dielectric disk.
#[pyfunction]
#[pyo3(signature = (x, y, eps_r = 1.0))]
fn mie_field(x: f64, y: f64, eps_r: f64) -> PyResult<(f64, f64)> {
    let p = HelmholtzProblem::new(eps_r).map_err(py_err)?;
    let f = p.mie().map_err(py_err)?.field(x, y).map_err(py_err)?.value;
    Ok((f.re, f.im))
}

#[pyfunction]
fn bessel_j(n: i32, x: f64) -> PyResult<f64> {
    specfun::bessel_j(n, x).map_err(py_err)
}

#[pyfunction]
fn bessel_y(n: i32, x: f64) -> PyResult<f64> {
    specfun::bessel_y(n, x).map_err(py_err)
}

#[pymodule]
fn pymspinn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PySolution>()?;
    m.add_class::<PyNetwork>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(top_modes, m)?)?;
    m.add_function(wrap_pyfunction!(psd, m)?)?;
    m.add_function(wrap_pyfunction!(burgers_solution, m)?)?;
    m.add_function(wrap_pyfunction!(mie_field, m)?)?;
    m.add_function(wrap_pyfunction!(bessel_j, m)?)?;
    m.add_function(wrap_pyfunction!(bessel_y, m)?)?;
    Ok(())
}
