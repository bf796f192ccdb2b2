use std::collections::HashMap;
use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIndexError, PyValueError};
use pyo3::prelude::*;

use fano_master::cli::{parse_config, RunConfig};
use fano_master::linalg::{self, CMat};
use fano_master::master::{DensityMatrix, FockSpace as CoreFockSpace};
use fano_master::oracle;
use fano_master::{Error, Simulation as CoreSimulation, SimulationOptions, Statistics, TimeGrid};

create_exception!(fano, FanoError, PyException);
create_exception!(fano, SingularPropagatorError, FanoError);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::SingularPropagator { .. } => SingularPropagatorError::new_err(e.to_string()),
        _ => FanoError::new_err(e.to_string()),
    }
}

fn rows(m: &CMat) -> Vec<Vec<Complex64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn statistics(name: &str) -> PyResult<Statistics> {
    match name {
        "boson" => Ok(Statistics::Boson),
        "fermion" => Ok(Statistics::Fermion),
        other => Err(PyValueError::new_err(format!("statistics must be 'boson' or 'fermion', got '{other}'"))),
    }
}

/// Validated run configuration parsed from TOML.
#[pyclass(frozen, module = "fano")]
struct Config {
    inner: RunConfig,
}

#[pymethods]
impl Config {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        parse_config(text).map(|inner| Self { inner }).map_err(py_err)
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| py_err(e.into()))?;
        Self::from_toml(&text)
    }

    /// Copy with a different number of grid steps.
    fn with_steps(&self, steps: usize) -> PyResult<Self> {
        let g = self.inner.grid;
        let mut inner = self.inner.clone();
        inner.grid = TimeGrid::new(g.t0, g.t_final, steps).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn levels(&self) -> usize {
        self.inner.spec.levels()
    }

    #[getter]
    fn modes(&self) -> usize {
        self.inner.spec.mode_count()
    }

    #[getter]
    fn statistics(&self) -> String {
        self.inner.spec.statistics.to_string()
    }

    #[getter]
    fn t0(&self) -> f64 {
        self.inner.grid.t0
    }

    #[getter]
    fn t_final(&self) -> f64 {
        self.inner.grid.t_final
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.grid.steps
    }

    #[getter]
    fn n_max(&self) -> usize {
        self.inner.n_max
    }

    #[getter]
    fn config_hash(&self) -> String {
        self.inner.hash.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(statistics='{}', levels={}, modes={}, steps={})",
            self.statistics(),
            self.levels(),
            self.modes(),
            self.steps()
        )
    }
}

/// A finished run of the Green-function and master-equation pipeline.
#[pyclass(frozen, module = "fano")]
struct Simulation {
    config: RunConfig,
    inner: CoreSimulation,
}

impl Simulation {
    fn check_index(&self, n: usize) -> PyResult<()> {
        let steps = self.inner.grid().steps;
        if n > steps {
            return Err(PyIndexError::new_err(format!("time index {n} beyond last step {steps}")));
        }
        Ok(())
    }

    fn states(&self) -> PyResult<impl Iterator<Item = DensityMatrix> + '_> {
        let traj = self
            .inner
            .trajectory
            .as_ref()
            .ok_or_else(|| FanoError::new_err("run was made without evolving the reduced state"))?;
        Ok(traj.states.iter().map(|rho| DensityMatrix { rho: rho.clone() }))
    }
}

#[pymethods]
impl Simulation {
    #[new]
    #[pyo3(signature = (config, evolve_state = true))]
    fn new(py: Python<'_>, config: &Config, evolve_state: bool) -> PyResult<Self> {
        let cfg = config.inner.clone();
        let opts = SimulationOptions {
            n_max: (cfg.spec.statistics == Statistics::Boson).then_some(cfg.n_max),
            evolve_state,
            ..SimulationOptions::default()
        };
        let inner = py
            .detach(|| CoreSimulation::run(&cfg.spec, &cfg.initial_state, &cfg.grid, &opts))
            .map_err(py_err)?;
        Ok(Self { config: cfg, inner })
    }

    fn times(&self) -> Vec<f64> {
        self.inner.grid().times()
    }

    /// `⟨a†_i a_i⟩` per time and level.
    fn occupations(&self) -> PyResult<Vec<Vec<f64>>> {
        self.inner.occupations().map_err(py_err)
    }

    /// `u(t_n, t0)`.
    fn propagator(&self, n: usize) -> PyResult<Vec<Vec<Complex64>>> {
        self.check_index(n)?;
        Ok(rows(&self.inner.greens.field.u_mat(n, 0)))
    }

    /// Equal-time `(G<, Ḡ<)` at `t_n`.
    fn lesser_green(&self, n: usize) -> PyResult<(Vec<Vec<Complex64>>, Vec<Vec<Complex64>>)> {
        self.check_index(n)?;
        let (g, gbar) = self.inner.greens.lesser_diag(n).map_err(py_err)?;
        Ok((rows(&g), rows(&gbar)))
    }

    /// Master-equation coefficients at `t_n`.
    fn coefficients(&self, n: usize) -> PyResult<HashMap<String, Vec<Vec<Complex64>>>> {
        self.check_index(n)?;
        let c = &self.inner.coefficients.nodes[n];
        Ok(HashMap::from([
            ("eps_prime".to_string(), rows(&c.eps_prime)),
            ("gamma".to_string(), rows(&c.gamma)),
            ("gamma_tilde".to_string(), rows(&c.gamma_tilde)),
            ("gamma_bar".to_string(), rows(&c.gamma_bar)),
        ]))
    }

    fn density_matrix(&self, n: usize) -> PyResult<Vec<Vec<Complex64>>> {
        self.check_index(n)?;
        Ok(rows(&self.states()?.nth(n).expect("index checked").rho))
    }

    fn traces(&self) -> PyResult<Vec<f64>> {
        Ok(self.states()?.map(|d| d.trace()).collect())
    }

    fn purities(&self) -> PyResult<Vec<f64>> {
        Ok(self.states()?.map(|d| d.purity()).collect())
    }

    fn min_eigenvalues(&self) -> PyResult<Vec<f64>> {
        Ok(self.states()?.map(|d| d.min_eigenvalue()).collect())
    }

    /// Maximal deviations from the exact finite-bath dynamics.
    fn compare(&self, py: Python<'_>) -> PyResult<HashMap<String, f64>> {
        let report = py
            .detach(|| {
                let prop = oracle::total_propagator(&self.config.spec, &self.inner.grid())?;
                oracle::compare(&self.inner, &prop)
            })
            .map_err(py_err)?;
        let mut out = HashMap::from([
            ("u_err".to_string(), report.max_u_err()),
            ("Gless_err".to_string(), report.max_gless_err()),
            ("gamma_bar".to_string(), report.max_gamma_bar()),
        ]);
        if let Some(e) = report.max_moment_err() {
            out.insert("moment_err".into(), e);
        }
        if let Some(e) = report.max_trace_dist() {
            out.insert("trace_dist".into(), e);
        }
        Ok(out)
    }
}

/// Truncated Fock space with ladder operators.
#[pyclass(frozen, module = "fano")]
struct FockSpace {
    inner: CoreFockSpace,
}

#[pymethods]
impl FockSpace {
    #[new]
    #[pyo3(signature = (statistics, modes, n_max = 1))]
    fn new(statistics: &str, modes: usize, n_max: usize) -> PyResult<Self> {
        let stats = self::statistics(statistics)?;
        CoreFockSpace::new(stats, modes, n_max).map(|inner| Self { inner }).map_err(py_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    fn annihilation(&self, i: usize) -> PyResult<Vec<Vec<Complex64>>> {
        self.inner.annihilation(i).map(|m| rows(&m)).map_err(py_err)
    }

    fn creation(&self, i: usize) -> PyResult<Vec<Vec<Complex64>>> {
        self.inner.creation(i).map(|m| rows(&m)).map_err(py_err)
    }
}

/// Bose-Einstein or Fermi-Dirac occupation at inverse temperature `beta`.
#[pyfunction]
fn occupation(statistics: &str, beta: f64, x: f64) -> PyResult<f64> {
    Ok(self::statistics(statistics)?.occupation(beta, x))
}

/// Smallest boson cutoff with `(n/(1+n))^n_max < tol`.
#[pyfunction]
#[pyo3(signature = (nbar, tol = 1e-8))]
fn boson_cutoff(nbar: f64, tol: f64) -> usize {
    CoreFockSpace::boson_cutoff(nbar, tol)
}

/// Trace distance of two Hermitian matrices.
#[pyfunction]
fn trace_distance(a: Vec<Vec<Complex64>>, b: Vec<Vec<Complex64>>) -> PyResult<f64> {
    let to_mat = |m: &[Vec<Complex64>]| -> PyResult<CMat> {
        let n = m.len();
        if m.iter().any(|r| r.len() != n) {
            return Err(PyValueError::new_err("matrices must be square"));
        }
        Ok(CMat::from_fn(n, n, |i, j| m[i][j]))
    };
    let (a, b) = (to_mat(&a)?, to_mat(&b)?);
    if a.shape() != b.shape() {
        return Err(PyValueError::new_err("matrices differ in size"));
    }
    Ok(linalg::trace_distance(&a, &b))
}

#[pymodule]
fn fano(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Config>()?;
    m.add_class::<Simulation>()?;
    m.add_class::<FockSpace>()?;
    m.add_function(wrap_pyfunction!(occupation, m)?)?;
    m.add_function(wrap_pyfunction!(boson_cutoff, m)?)?;
    m.add_function(wrap_pyfunction!(trace_distance, m)?)?;
    m.add("FanoError", m.py().get_type::<FanoError>())?;
    m.add("SingularPropagatorError", m.py().get_type::<SingularPropagatorError>())?;
    Ok(())
}
