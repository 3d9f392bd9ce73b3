//! Python bindings for `marcusfpe`.
//!
//! Points and jumps are plain lists of floats; densities come back as
//! `(centers, values)` with one center row per grid cell.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use marcusfpe::cli::{self, CliError, Task};
use marcusfpe::examples::{self, builtin_model};
use marcusfpe::flow::{self, VERIFICATION_STEPS};
use marcusfpe::fpe::{self, Axis, DensityField, Grid, QuadratureParams, SolveOptions};
use marcusfpe::levy::Truncation;
use marcusfpe::model::ModelSpec;
use marcusfpe::sde::{self, SimulationParams};

create_exception!(marcusfpe, NumericError, PyException);

fn to_py(e: marcusfpe::Error) -> PyErr {
    match e {
        marcusfpe::Error::Validation { .. } | marcusfpe::Error::Dimension(_) => PyValueError::new_err(e.to_string()),
        other => NumericError::new_err(other.to_string()),
    }
}

fn cli_to_py(e: CliError) -> PyErr {
    match e {
        CliError::Config(msg) => PyValueError::new_err(msg),
        other => NumericError::new_err(other.to_string()),
    }
}

/// A Marcus SDE model: noise coefficient, drift, driver triplet and initial
/// law.
#[pyclass(name = "Model", module = "marcusfpe", frozen)]
struct PyModel {
    inner: ModelSpec,
    id: String,
}

#[pymethods]
impl PyModel {
    /// Built-in model by id (`example1`, `example2`, `example3`).
    #[staticmethod]
    fn builtin(id: &str) -> PyResult<Self> {
        let inner = builtin_model(id, None, None, None)
            .ok_or_else(|| PyValueError::new_err(format!("unknown model `{id}`")))?
            .map_err(to_py)?;
        Ok(PyModel { inner, id: id.into() })
    }

    /// Model from the `model` entry of a run config, given as JSON text of
    /// either a built-in id string or an inline model object.
    #[staticmethod]
    fn from_json(model_json: &str) -> PyResult<Self> {
        let text = format!("{{\"model\": {model_json}}}");
        let cfg = cli::parse_config(&text, Some(Task::FlowCheck), None).map_err(cli_to_py)?;
        Ok(PyModel {
            inner: cfg.model,
            id: cfg.model_id,
        })
    }

    #[getter]
    fn id(&self) -> &str {
        &self.id
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn has_closed_form(&self) -> bool {
        self.inner.closed_form.is_some()
    }

    /// `H(u, v)` by RK4.
    #[pyo3(signature = (u, v, steps = VERIFICATION_STEPS))]
    fn forward(&self, u: Vec<f64>, v: Vec<f64>, steps: usize) -> PyResult<Vec<f64>> {
        flow::marcus_forward(&u, &v, &self.inner.noise, steps).map_err(to_py)
    }

    /// `(H̃(u, v), |∂H̃/∂u|)` by RK4.
    #[pyo3(signature = (u, v, steps = VERIFICATION_STEPS))]
    fn inverse(&self, u: Vec<f64>, v: Vec<f64>, steps: usize) -> PyResult<(Vec<f64>, f64)> {
        let r = flow::marcus_inverse(&u, &v, &self.inner.noise, steps).map_err(to_py)?;
        Ok((r.point, r.jac_det.unwrap_or(f64::NAN)))
    }

    /// Closed-form `(H̃(u, v), |∂H̃/∂u|)`, or `None` without one.
    fn closed_form_inverse(&self, u: Vec<f64>, v: Vec<f64>) -> PyResult<Option<(Vec<f64>, f64)>> {
        if u.len() != self.inner.d() || v.len() != self.inner.n() {
            return Err(PyValueError::new_err("u or v has the wrong length"));
        }
        Ok(self.inner.closed_form.map(|m| (m.inverse)(&u, &v)))
    }

    /// `‖H̃(H(u, v), v) − u‖`.
    #[pyo3(signature = (u, v, steps = VERIFICATION_STEPS))]
    fn check_inverse(&self, u: Vec<f64>, v: Vec<f64>, steps: usize) -> PyResult<f64> {
        flow::check_inverse(&u, &v, &self.inner.noise, steps).map_err(to_py)
    }

    /// Terminal states of `n_paths` paths, one row per kept path.
    #[pyo3(signature = (t_final, dt, n_paths, seed = 0, eps = 1e-2, r_max = 100.0))]
    #[allow(clippy::too_many_arguments)]
    fn simulate(
        &self,
        py: Python<'_>,
        t_final: f64,
        dt: f64,
        n_paths: usize,
        seed: u64,
        eps: f64,
        r_max: f64,
    ) -> PyResult<Vec<Vec<f64>>> {
        let params = SimulationParams::new(t_final, dt).with_truncation(Truncation::new(eps).with_outer(r_max));
        let ens = py
            .detach(|| sde::simulate_ensemble(&self.inner, &params, n_paths, seed))
            .map_err(to_py)?;
        Ok((0..ens.len()).map(|k| ens.state(k).to_vec()).collect())
    }

    /// Fokker-Planck density at `t_final` as `(centers, values)`.
    #[pyo3(signature = (lower, upper, cells, t_final, eps = 1e-2, r_max = 100.0, renormalize = true))]
    #[allow(clippy::too_many_arguments)]
    fn solve(
        &self,
        py: Python<'_>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        cells: Vec<usize>,
        t_final: f64,
        eps: f64,
        r_max: f64,
        renormalize: bool,
    ) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
        let grid = make_grid(&lower, &upper, &cells)?;
        let field = py.detach(|| self.solve_field(&grid, t_final, eps, r_max, renormalize))?;
        let centers = (0..grid.len()).map(|c| grid.center(c)).collect();
        Ok((centers, field.values))
    }

    /// `(l1, linf, fpe_mass, mc_coverage)` between the Fokker-Planck density
    /// and a Monte Carlo histogram on the same grid.
    #[pyo3(signature = (lower, upper, cells, t_final, dt, n_paths, seed = 0, eps = 1e-2, r_max = 100.0))]
    #[allow(clippy::too_many_arguments)]
    fn compare(
        &self,
        py: Python<'_>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        cells: Vec<usize>,
        t_final: f64,
        dt: f64,
        n_paths: usize,
        seed: u64,
        eps: f64,
        r_max: f64,
    ) -> PyResult<(f64, f64, f64, f64)> {
        let grid = make_grid(&lower, &upper, &cells)?;
        py.detach(|| {
            let fpe = self.solve_field(&grid, t_final, eps, r_max, false)?;
            let params = SimulationParams::new(t_final, dt).with_truncation(Truncation::new(eps).with_outer(r_max));
            let ens = sde::simulate_ensemble(&self.inner, &params, n_paths, seed).map_err(to_py)?;
            let emp = sde::empirical_density(&ens, &grid).map_err(to_py)?;
            let (l1, linf) = fpe::distances(&fpe, &emp.field).map_err(to_py)?;
            Ok((l1, linf, fpe::total_mass(&fpe), emp.coverage))
        })
    }

    fn __repr__(&self) -> String {
        format!("Model(id={:?}, d={}, n={})", self.id, self.inner.d(), self.inner.n())
    }
}

impl PyModel {
    fn solve_field(&self, grid: &Grid, t_final: f64, eps: f64, r_max: f64, renormalize: bool) -> PyResult<DensityField> {
        let quad = QuadratureParams {
            truncation: Truncation::new(eps).with_outer(r_max),
            ..Default::default()
        };
        let opts = SolveOptions {
            renormalize,
            ..Default::default()
        };
        let p0 = DensityField::from_initial(grid.clone(), &self.inner.initial);
        let out = fpe::solve(&self.inner, grid, &p0, t_final, &quad, &opts).map_err(to_py)?;
        Ok(out.final_snapshot().field.clone())
    }
}

fn make_grid(lower: &[f64], upper: &[f64], cells: &[usize]) -> PyResult<Grid> {
    if lower.len() != upper.len() || lower.len() != cells.len() {
        return Err(PyValueError::new_err("lower, upper and cells need one entry per axis"));
    }
    let axes = (0..lower.len()).map(|k| Axis::new(lower[k], upper[k], cells[k])).collect();
    Grid::new(axes).map_err(to_py)
}

/// Runs a CLI task (`flow-check`, `simulate`, `solve`, `compare`) on a
/// config file and returns the process exit code.
#[pyfunction]
#[pyo3(signature = (task, config, output, seed = None))]
fn run_config(py: Python<'_>, task: &str, config: &str, output: &str, seed: Option<u64>) -> i32 {
    let mut args = vec![
        "marcusfpe".to_string(),
        task.to_string(),
        "--config".into(),
        config.into(),
        "--output".into(),
        output.into(),
    ];
    if let Some(s) = seed {
        args.extend(["--seed".into(), s.to_string()]);
    }
    py.detach(|| cli::main_with_args(args))
}

#[pyfunction]
fn k_function(x: f64) -> f64 {
    examples::k_function(x)
}

#[pyfunction]
fn cosbar(x: f64) -> f64 {
    examples::cosbar(x)
}

#[pyfunction]
fn sinbar(x: f64) -> f64 {
    examples::sinbar(x)
}

#[pyfunction]
fn example1_htilde(u: f64, v: f64) -> (f64, f64) {
    examples::example1_htilde(u, v)
}

#[pyfunction]
fn example2_htilde(u: [f64; 2], v: [f64; 2]) -> ([f64; 2], f64) {
    examples::example2_htilde(u, v)
}

#[pyfunction]
fn example3_htilde(u: [f64; 2], v: [f64; 2]) -> ([f64; 2], f64) {
    examples::example3_htilde(u, v)
}

#[pymodule]
pub fn marcusfpe_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add("NumericError", m.py().get_type::<NumericError>())?;
    m.add("MODEL_IDS", examples::MODEL_IDS.to_vec())?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(k_function, m)?)?;
    m.add_function(wrap_pyfunction!(cosbar, m)?)?;
    m.add_function(wrap_pyfunction!(sinbar, m)?)?;
    m.add_function(wrap_pyfunction!(example1_htilde, m)?)?;
    m.add_function(wrap_pyfunction!(example2_htilde, m)?)?;
    m.add_function(wrap_pyfunction!(example3_htilde, m)?)?;
    Ok(())
}
