//! Python bindings. Grid values travel as flat row-major lists of floats.

use neuropde::activation::Activation;
use neuropde::error::Error;
use neuropde::experiments::{run_bsde, run_kolmogorov, run_pinn_laplace, BsdeConfig, FitReport, KolmogorovConfig, PinnConfig};
use neuropde::fourier::dft_n;
use neuropde::grid::{discrete_l2_seminorm, interp_eval, GridFunction};
use neuropde::operators::OperatorSpec;
use neuropde::rng::RngState;
use neuropde::solvers::grf::{grf_sample as grf_sample_rs, GrfSpec};
use neuropde::solvers::{solve_operator, Method, SemilinearPde, SolverConfig};
use neuropde::tensor::Tensor;
use neuropde::train::bench::{ArchConfig, ModelConfig};
use neuropde::train::{
    dataset_generate, read_results, run_bench as run_bench_rs, Approximator, BenchConfig, Checkpoint as CheckpointRs,
    Dataset as DatasetRs, ResultRow,
};
use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use std::collections::HashMap;
use std::path::Path;

create_exception!(neuropde_py, NumericalError, PyRuntimeError, "A loss, iterate or solver state became non-finite.");

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Numerical(m) => NumericalError::new_err(m),
        Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for neuropde::error::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn pde_by_name(name: &str, dim: usize) -> PyResult<SemilinearPde> {
    match (name, dim) {
        ("burgers", 1) => Ok(SemilinearPde::burgers()),
        ("reaction-diffusion", 1) => Ok(SemilinearPde::reaction_diffusion()),
        ("allen-cahn", 1..=3) => Ok(SemilinearPde::allen_cahn(dim)),
        _ => Err(PyValueError::new_err(format!("no PDE {name:?} in dimension {dim}"))),
    }
}

fn prior_by_name(name: &str) -> PyResult<GrfSpec> {
    match name {
        "burgers" => Ok(GrfSpec::burgers()),
        "allen-cahn" => Ok(GrfSpec::allen_cahn()),
        "reaction-diffusion" => Ok(GrfSpec::reaction_diffusion()),
        _ => Err(PyValueError::new_err(format!("no GRF prior {name:?}"))),
    }
}

fn activation(name: &str) -> PyResult<Activation> {
    name.parse().py()
}

fn method(name: &str) -> PyResult<Method> {
    name.parse().py()
}

fn grid(lengths: &[f64], extents: &[usize], values: Vec<f64>) -> PyResult<GridFunction> {
    GridFunction::from_vec(lengths.to_vec(), extents.to_vec(), values).py()
}

/// A neural operator architecture. Parameters are kept separately as a flat list.
#[pyclass(module = "neuropde_py", frozen)]
struct Operator {
    spec: OperatorSpec,
}

#[pymethods]
impl Operator {
    /// From the JSON architecture descriptor used in checkpoints.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let spec: OperatorSpec = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        spec.validate().py()?;
        Ok(Operator { spec })
    }

    #[staticmethod]
    #[pyo3(signature = (extents, width, layers, modes, activation="gelu", real=true))]
    fn fno(extents: Vec<usize>, width: usize, layers: usize, modes: usize, activation: &str, real: bool) -> PyResult<Self> {
        Self::build(extents, ArchConfig::Fno { width, layers, modes, real }, activation)
    }

    #[staticmethod]
    #[pyo3(signature = (extents, channels, half_width, activation="gelu"))]
    fn periodic_cnn(extents: Vec<usize>, channels: Vec<usize>, half_width: usize, activation: &str) -> PyResult<Self> {
        Self::build(extents, ArchConfig::Pcnn { channels, half_width }, activation)
    }

    #[staticmethod]
    #[pyo3(signature = (extents, channels, kernel, activation="gelu"))]
    fn encoder_decoder(extents: Vec<usize>, channels: Vec<usize>, kernel: usize, activation: &str) -> PyResult<Self> {
        Self::build(extents, ArchConfig::EncDec { channels, kernel }, activation)
    }

    #[staticmethod]
    #[pyo3(signature = (extents, branch, trunk, latent, activation="gelu"))]
    fn deeponet(extents: Vec<usize>, branch: Vec<usize>, trunk: Vec<usize>, latent: usize, activation: &str) -> PyResult<Self> {
        Self::build(extents, ArchConfig::DeepOnet { branch, trunk, latent }, activation)
    }

    #[staticmethod]
    #[pyo3(signature = (extents, hidden, activation="gelu"))]
    fn fcnn(extents: Vec<usize>, hidden: Vec<usize>, activation: &str) -> PyResult<Self> {
        Self::build(extents, ArchConfig::Fcnn { hidden }, activation)
    }

    #[staticmethod]
    #[pyo3(signature = (extents, width, layers, radius, activation="gelu"))]
    fn integral_kernel(extents: Vec<usize>, width: usize, layers: usize, radius: f64, activation: &str) -> PyResult<Self> {
        Self::build(extents, ArchConfig::Ikno { width, layers, radius }, activation)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.spec.kind()
    }

    #[getter]
    fn extents(&self) -> Vec<usize> {
        self.spec.extents().to_vec()
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.spec.param_count()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.spec).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// Default initialization drawn from `seed`.
    fn init(&self, seed: u64) -> Vec<f64> {
        self.spec.init(&mut RngState::new(seed)).values
    }

    /// Applies the operator to a batch of flat grid inputs.
    fn apply(&self, py: Python<'_>, params: Vec<f64>, inputs: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let p = self.spec.points();
        if params.len() != self.spec.param_count() {
            return Err(PyValueError::new_err(format!("expected {} parameters, got {}", self.spec.param_count(), params.len())));
        }
        if inputs.iter().any(|x| x.len() != p) {
            return Err(PyValueError::new_err(format!("every input needs {p} grid values")));
        }
        let b = inputs.len();
        let x = Tensor::new(vec![b, p], inputs.concat()).py()?;
        let y = py.detach(|| self.spec.apply_batch(&params, &x)).py()?;
        Ok(y.data().chunks(p.max(1)).map(<[f64]>::to_vec).collect())
    }

    fn __repr__(&self) -> String {
        format!("Operator(kind={:?}, extents={:?}, params={})", self.spec.kind(), self.spec.extents(), self.spec.param_count())
    }
}

impl Operator {
    fn build(extents: Vec<usize>, arch: ArchConfig, act: &str) -> PyResult<Self> {
        let m = ModelConfig { activation: activation(act)?, ..ModelConfig::new("python", arch) };
        Ok(Operator { spec: m.build(&extents).py()? })
    }
}

/// Input/target pairs on a common grid.
#[pyclass(module = "neuropde_py", frozen)]
struct Dataset {
    inner: DatasetRs,
}

#[pymethods]
impl Dataset {
    /// Samples GRF inputs for `pde`, solves them on an `solver_n` grid and
    /// restricts both to `n` points per axis.
    #[staticmethod]
    #[pyo3(signature = (pde, count, seed, n=64, solver_n=128, steps=1000, method="spectral", dim=1))]
    #[allow(clippy::too_many_arguments)]
    fn generate(py: Python<'_>, pde: &str, count: usize, seed: u64, n: usize, solver_n: usize, steps: usize, method: &str, dim: usize) -> PyResult<Self> {
        let p = pde_by_name(pde, dim)?;
        let grf = prior_by_name(pde)?;
        let solver = SolverConfig::new(self::method(method)?, solver_n, steps).py()?;
        let inner = py.detach(|| dataset_generate(&p, &grf, &solver, n, count, seed)).py()?;
        Ok(Dataset { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Dataset { inner: DatasetRs::load(Path::new(path)).py()? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(Path::new(path)).py()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn extents(&self) -> Vec<usize> {
        self.inner.meta.extents.clone()
    }

    #[getter]
    fn lengths(&self) -> Vec<f64> {
        self.inner.meta.lengths.clone()
    }

    #[getter]
    fn inputs(&self) -> Vec<Vec<f64>> {
        self.inner.inputs.iter().map(|g| g.data().to_vec()).collect()
    }

    #[getter]
    fn targets(&self) -> Vec<Vec<f64>> {
        self.inner.targets.iter().map(|g| g.data().to_vec()).collect()
    }
}

/// A trained operator with its parameters and training metadata.
#[pyclass(module = "neuropde_py", frozen)]
struct Checkpoint {
    inner: CheckpointRs,
}

#[pymethods]
impl Checkpoint {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Checkpoint { inner: CheckpointRs::load(Path::new(path)).py()? })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.meta.name.clone()
    }

    #[getter]
    fn params(&self) -> Vec<f64> {
        self.inner.params.values.clone()
    }

    #[getter]
    fn operator(&self) -> Operator {
        Operator { spec: self.inner.spec.clone() }
    }

    #[getter]
    fn best_validation(&self) -> f64 {
        self.inner.meta.best_validation
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.meta.total_steps
    }

    /// Predictions for the inputs of `data`.
    fn predict(&self, py: Python<'_>, data: &Dataset) -> PyResult<Vec<Vec<f64>>> {
        let a = Approximator::Model(self.inner.clone());
        let out = py.detach(|| a.predict(&data.inner.inputs)).py()?;
        Ok(out.iter().map(|g| g.data().to_vec()).collect())
    }
}

/// One GRF sample for the named prior on a grid over `lengths`.
#[pyfunction]
fn grf_sample(prior: &str, lengths: Vec<f64>, extents: Vec<usize>, seed: u64) -> PyResult<Vec<f64>> {
    let g = grf_sample_rs(&prior_by_name(prior)?, &lengths, &extents, &mut RngState::new(seed)).py()?;
    Ok(g.data().to_vec())
}

/// Solution operator of the named PDE applied to a flat grid input.
#[pyfunction]
#[pyo3(signature = (pde, values, method="spectral", steps=1000, dim=1))]
fn solve(py: Python<'_>, pde: &str, values: Vec<f64>, method: &str, steps: usize, dim: usize) -> PyResult<Vec<f64>> {
    let p = pde_by_name(pde, dim)?;
    let n = (values.len() as f64).powf(1.0 / dim as f64).round() as usize;
    let input = grid(&p.lengths, &vec![n; dim], values)?;
    let cfg = SolverConfig::new(self::method(method)?, n, steps).py()?;
    let u = py.detach(|| solve_operator(&p, &input, &cfg)).py()?;
    Ok(u.data().to_vec())
}

/// Periodic multilinear interpolation of grid values at `point ∈ [0,1]^d`.
#[pyfunction]
fn interpolate(values: Vec<f64>, extents: Vec<usize>, point: Vec<f64>) -> PyResult<f64> {
    interp_eval(&Tensor::new(extents, values).py()?, &point).py()
}

/// Normalized DFT of values on an `N^d` grid; returns (re, im).
#[pyfunction]
fn dft(values: Vec<f64>, n: usize, dim: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let c = dft_n(&Tensor::new(vec![n; dim], values).py()?, n).py()?;
    Ok((c.re.data().to_vec(), c.im.data().to_vec()))
}

/// Discrete L² seminorm of grid values over a box with the given side lengths.
#[pyfunction]
fn l2_seminorm(values: Vec<f64>, extents: Vec<usize>, lengths: Vec<f64>) -> PyResult<f64> {
    Ok(discrete_l2_seminorm(&grid(&lengths, &extents, values)?))
}

fn row_tuple(r: ResultRow) -> (String, f64, usize, f64, f64, usize) {
    (r.method, r.l2_error, r.nr_params, r.training_time, r.test_time, r.done_trainsteps)
}

/// Full pipeline from a TOML configuration string (empty for defaults).
/// Returns `(method, L2_error, nr_params, training_time, test_time, done_trainsteps)` rows.
#[pyfunction]
#[pyo3(signature = (config, out, seed=None))]
fn run_bench(py: Python<'_>, config: &str, out: &str, seed: Option<u64>) -> PyResult<Vec<(String, f64, usize, f64, f64, usize)>> {
    let mut cfg = BenchConfig::from_toml(config).py()?;
    if let Some(s) = seed {
        cfg.set_seed(s);
    }
    let rows = py.detach(|| run_bench_rs(&cfg, Path::new(out), &|_| {})).py()?;
    Ok(rows.into_iter().map(row_tuple).collect())
}

#[pyfunction]
fn load_results(path: &str) -> PyResult<Vec<(String, f64, usize, f64, f64, usize)>> {
    Ok(read_results(Path::new(path)).py()?.into_iter().map(row_tuple).collect())
}

fn fit_dict(r: FitReport) -> HashMap<&'static str, f64> {
    HashMap::from([("relative_l2_error", r.relative_l2_error), ("l2_error", r.l2_error), ("final_loss", r.final_loss)])
}

/// Deep Kolmogorov regression for the heat equation with `φ(x) = |x|²`.
#[pyfunction]
#[pyo3(signature = (steps=None, seed=0))]
fn kolmogorov(py: Python<'_>, steps: Option<usize>, seed: u64) -> PyResult<HashMap<&'static str, f64>> {
    let mut cfg = KolmogorovConfig { seed, ..KolmogorovConfig::default() };
    cfg.steps = steps.unwrap_or(cfg.steps);
    Ok(fit_dict(py.detach(|| run_kolmogorov(&cfg)).py()?))
}

/// Physics-informed network for the Laplace equation on the unit square.
#[pyfunction]
#[pyo3(signature = (steps=None, seed=0))]
fn pinn(py: Python<'_>, steps: Option<usize>, seed: u64) -> PyResult<HashMap<&'static str, f64>> {
    let mut cfg = PinnConfig { seed, ..PinnConfig::default() };
    cfg.steps = steps.unwrap_or(cfg.steps);
    Ok(fit_dict(py.detach(|| run_pinn_laplace(&cfg)).py()?))
}

/// Deep BSDE for the backward heat equation.
#[pyfunction]
#[pyo3(signature = (steps=None, seed=0))]
fn bsde(py: Python<'_>, steps: Option<usize>, seed: u64) -> PyResult<HashMap<&'static str, f64>> {
    let mut cfg = BsdeConfig { seed, ..BsdeConfig::default() };
    cfg.steps = steps.unwrap_or(cfg.steps);
    Ok(fit_dict(py.detach(|| run_bsde(&cfg)).py()?))
}

#[pymodule]
fn neuropde_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add_class::<Operator>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Checkpoint>()?;
    m.add_function(wrap_pyfunction!(grf_sample, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(interpolate, m)?)?;
    m.add_function(wrap_pyfunction!(dft, m)?)?;
    m.add_function(wrap_pyfunction!(l2_seminorm, m)?)?;
    m.add_function(wrap_pyfunction!(run_bench, m)?)?;
    m.add_function(wrap_pyfunction!(load_results, m)?)?;
    m.add_function(wrap_pyfunction!(kolmogorov, m)?)?;
    m.add_function(wrap_pyfunction!(pinn, m)?)?;
    m.add_function(wrap_pyfunction!(bsde, m)?)?;
    Ok(())
}
