//! Python bindings: the main tower types and operations, thin and owned.
//!
//! Branch symbols are 0-based positions into the spec's branch list, matching
//! the core library.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use towerlab::fit::RateClass;
use towerlab::systems::{ambient_step, SystemSpec};
use towerlab::tower;
use towerlab::{measures, stats, transfer};

fn err(e: towerlab::Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Truncated branch distribution defining a tower base.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Spec {
    inner: tower::ReturnTimeSpec,
}

#[pymethods]
impl Spec {
    /// Geometric family: p_i ~ 2^-i, R_i = i up to r_max.
    #[staticmethod]
    fn geometric(r_max: u32) -> PyResult<Spec> {
        let (inner, _) = tower::ReturnTimeSpec::geometric(r_max).map_err(err)?;
        Ok(Spec { inner })
    }

    /// Polynomial family with tail (n+1)^-alpha up to r_max.
    #[staticmethod]
    fn polynomial(alpha: f64, r_max: u32) -> PyResult<Spec> {
        let (inner, _) = tower::ReturnTimeSpec::polynomial(alpha, r_max).map_err(err)?;
        Ok(Spec { inner })
    }

    /// Full shift on `branches` symbols, return time 1.
    #[staticmethod]
    #[pyo3(signature = (branches, beta_s=0.5))]
    fn bernoulli(branches: u16, beta_s: f64) -> PyResult<Spec> {
        Ok(Spec {
            inner: tower::ReturnTimeSpec::bernoulli(branches, beta_s).map_err(err)?,
        })
    }

    /// Parse the plain-text spec table (header `beta_u beta_s`, rows `i p R`).
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Spec> {
        Ok(Spec {
            inner: tower::ReturnTimeSpec::parse_table(text).map_err(err)?,
        })
    }

    fn to_text(&self) -> String {
        self.inner.to_table()
    }

    #[getter]
    fn branch_count(&self) -> usize {
        self.inner.branch_count()
    }

    #[getter]
    fn beta_u(&self) -> f64 {
        self.inner.beta_u()
    }

    #[getter]
    fn beta_s(&self) -> f64 {
        self.inner.beta_s()
    }

    #[getter]
    fn max_return(&self) -> u32 {
        self.inner.max_return()
    }

    fn mean_return(&self) -> f64 {
        measures::mean_return(&self.inner)
    }

    /// Mass of branches with return time above n.
    fn tail(&self, n: u32) -> f64 {
        measures::tail(&self.inner, n)
    }

    /// (kac_norm, [mass per level]).
    fn level_masses(&self) -> (f64, Vec<f64>) {
        let m = measures::level_masses(&self.inner);
        (m.kac_norm, m.level_mass)
    }

    fn __repr__(&self) -> String {
        format!(
            "Spec(branches={}, max_return={})",
            self.inner.branch_count(),
            self.inner.max_return()
        )
    }
}

/// A tower point: level plus a two-sided symbolic itinerary.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Point {
    inner: tower::TowerPoint,
}

#[pymethods]
impl Point {
    /// Build a point with an explicit future prefix and an empty recorded
    /// past. `quotient=True` puts it on the quotient tower instead.
    #[staticmethod]
    #[pyo3(signature = (spec, seed, future, level, quotient=false))]
    fn new(spec: &Spec, seed: u64, future: Vec<u16>, level: u32, quotient: bool) -> PyResult<Point> {
        let past = if quotient {
            tower::Past::Quotient
        } else {
            tower::Past::Recorded(Default::default())
        };
        Ok(Point {
            inner: tower::TowerPoint::new(&spec.inner, seed, &future, level, past).map_err(err)?,
        })
    }

    #[getter]
    fn level(&self) -> u32 {
        self.inner.level()
    }

    #[getter]
    fn column(&self) -> u16 {
        self.inner.column()
    }

    #[getter]
    fn is_quotient(&self) -> bool {
        self.inner.is_quotient()
    }

    fn future(&self, spec: &Spec, k: usize) -> u16 {
        self.inner.future_symbol(&spec.inner, k)
    }

    fn past(&self, spec: &Spec, k: usize) -> Option<u16> {
        self.inner.past_symbol(&spec.inner, k)
    }

    /// One application of the tower map.
    fn step(&self, spec: &Spec) -> PyResult<Point> {
        Ok(Point {
            inner: tower::tower_step(&spec.inner, &self.inner).map_err(err)?,
        })
    }

    /// Projection onto the quotient tower (past cleared, stays cleared).
    fn quotient(&self) -> Point {
        Point {
            inner: tower::quotient_project(&self.inner),
        }
    }

    /// Separation time against another point; None is the infinite sentinel.
    fn separation(&self, spec: &Spec, other: &Point, horizon: usize) -> Option<u64> {
        tower::separation_time(&spec.inner, &self.inner, &other.inner, horizon).finite()
    }

    fn dyn_distance(&self, spec: &Spec, other: &Point, beta: f64, horizon: usize) -> f64 {
        tower::dyn_distance(
            beta,
            tower::separation_time(&spec.inner, &self.inner, &other.inner, horizon),
        )
    }

    /// Embedded (u, s) coordinates at the given depth.
    fn embed(&self, spec: &Spec, depth: usize) -> (f64, f64) {
        let c = tower::geometric_embed(&spec.inner, &self.inner, depth);
        (c.u, c.s)
    }
}

/// Exact i.i.d. sample of the tower's invariant measure.
#[pyfunction]
fn srb_sample(spec: &Spec, seed: u64, count: usize) -> Vec<Point> {
    measures::srb_sample(&spec.inner, seed, count)
        .into_iter()
        .map(|inner| Point { inner })
        .collect()
}

/// Finite-rank transfer operator on depth-d cylinder functions.
#[pyclass]
struct Operator {
    inner: transfer::CylinderOperator,
}

#[pymethods]
impl Operator {
    #[staticmethod]
    #[pyo3(signature = (spec, depth, cap=None))]
    fn build(spec: &Spec, depth: usize, cap: Option<usize>) -> PyResult<Operator> {
        Ok(Operator {
            inner: transfer::build_operator(
                &spec.inner,
                depth,
                cap.unwrap_or(transfer::DEFAULT_CELL_CAP),
            )
            .map_err(err)?,
        })
    }

    #[getter]
    fn cell_count(&self) -> usize {
        self.inner.basis().cell_count()
    }

    /// Coefficient vector of a built-in observable: "level" or "symbol".
    fn vector(&self, kind: &str, arg: u32) -> PyResult<Vec<f64>> {
        match kind {
            "level" => Ok(self.inner.basis().level_indicator(arg)),
            "symbol" => Ok(self.inner.basis().symbol_indicator(arg as u16)),
            other => Err(PyValueError::new_err(format!(
                "unknown vector kind {other:?} (level|symbol)"
            ))),
        }
    }

    fn integral(&self, v: Vec<f64>) -> PyResult<f64> {
        self.inner.basis().integral(&v).map_err(err)
    }

    fn apply(&self, v: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.apply(&v).map_err(err)
    }

    /// Centered L1 decay series D(0..n_max).
    fn l1_decay(&self, v: Vec<f64>, n_max: usize) -> PyResult<Vec<f64>> {
        self.inner.l1_decay(&v, n_max).map_err(err)
    }

    /// Exact correlation curve of two coefficient vectors.
    fn corr_exact(&self, phi: Vec<f64>, psi: Vec<f64>, n_max: usize) -> PyResult<Vec<f64>> {
        self.inner.corr_exact(&phi, &psi, n_max).map_err(err)
    }
}

/// Fit a decay class; returns a dict with class, params, r_squared, range.
#[pyfunction]
#[pyo3(signature = (ns, ys, hint=None, n_lo=None, n_hi=None))]
fn fit_rate<'py>(
    py: Python<'py>,
    ns: Vec<f64>,
    ys: Vec<f64>,
    hint: Option<&str>,
    n_lo: Option<f64>,
    n_hi: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let hint = match hint {
        None | Some("auto") => None,
        Some(other) => Some(
            other
                .parse::<RateClass>()
                .map_err(|e| PyValueError::new_err(e.to_string()))?,
        ),
    };
    let range = match (n_lo, n_hi) {
        (None, None) => None,
        (lo, hi) => Some((lo.unwrap_or(f64::NEG_INFINITY), hi.unwrap_or(f64::INFINITY))),
    };
    let f = towerlab::fit::fit_rate(&ns, &ys, hint, range).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item(
        "class",
        match f.class {
            RateClass::Polynomial => "polynomial",
            RateClass::Exponential => "exponential",
            RateClass::Stretched => "stretched",
        },
    )?;
    if let Some(a) = f.alpha {
        d.set_item("alpha", a)?;
    }
    if let Some(t) = f.tau {
        d.set_item("tau", t)?;
    }
    if let Some(t) = f.theta {
        d.set_item("theta", t)?;
    }
    if let Some(t) = f.theta_prime {
        d.set_item("theta_prime", t)?;
    }
    d.set_item("r_squared", f.r_squared)?;
    d.set_item("fit_range", f.fit_range)?;
    d.set_item("trimmed", f.trimmed)?;
    Ok(d)
}

/// Large and maximal large deviations of a level indicator on a tower
/// ensemble; returns a dict of series.
#[pyfunction]
#[pyo3(signature = (spec, level, epsilon, n_grid, j_max, ensemble, seed))]
#[allow(clippy::too_many_arguments)]
fn deviation_series<'py>(
    py: Python<'py>,
    spec: &Spec,
    level: u32,
    epsilon: f64,
    n_grid: Vec<u32>,
    j_max: u32,
    ensemble: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let s = &spec.inner;
    let pts = measures::srb_sample_quotient(s, seed, ensemble);
    let mean = measures::tail(s, level) / measures::mean_return(s);
    let series = stats::deviation_series(
        &pts,
        |p: &mut tower::TowerPoint| p.step_in_place(s).unwrap(),
        |p| if p.level() == level { 1.0 } else { 0.0 },
        mean,
        epsilon,
        &n_grid,
        j_max,
        seed ^ 0xb57,
    )
    .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("n", series.n_grid)?;
    d.set_item("ld", series.ld)?;
    d.set_item("ld_stderr", series.ld_stderr)?;
    d.set_item("mld", series.mld)?;
    d.set_item("mld_stderr", series.mld_stderr)?;
    d.set_item("last_change", series.last_change)?;
    d.set_item("unstable", series.unstable)?;
    Ok(d)
}

/// Exact large deviation of the first-symbol indicator by cylinder
/// enumeration (small n only).
#[pyfunction]
fn ld_exact_symbol(spec: &Spec, symbol: u16, epsilon: f64, n: u32) -> f64 {
    stats::ld_exact(
        &spec.inner,
        |_, s| if s == symbol { 1.0 } else { 0.0 },
        epsilon,
        n,
    )
}

/// Export the first-return structure of the intermittent map as a spec.
#[pyfunction]
#[pyo3(signature = (gamma, r_max, beta_s=0.5))]
fn lsv_inducing_spec(gamma: f64, r_max: u32, beta_s: f64) -> PyResult<Spec> {
    let scheme = towerlab::systems::build_inducing(gamma, r_max).map_err(err)?;
    Ok(Spec {
        inner: scheme.to_spec(beta_s).map_err(err)?,
    })
}

/// One application of the intermittent interval map.
#[pyfunction]
fn lsv_step(gamma: f64, x: f64) -> f64 {
    towerlab::systems::lsv_map(gamma, x)
}

/// One application of the skew product (m x mod 1, lambda z + a x).
#[pyfunction]
fn solenoid_step(base_factor: u32, fiber_contraction: f64, amplitude: f64, x: f64, z: f64) -> PyResult<(f64, f64)> {
    let sys = SystemSpec::solenoid(base_factor, fiber_contraction, amplitude).map_err(err)?;
    let q = ambient_step(
        &sys,
        towerlab::systems::AmbientPoint { x, z },
    );
    Ok((q.x, q.z))
}

#[pymodule]
fn towerlab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Spec>()?;
    m.add_class::<Point>()?;
    m.add_class::<Operator>()?;
    m.add_function(wrap_pyfunction!(srb_sample, m)?)?;
    m.add_function(wrap_pyfunction!(fit_rate, m)?)?;
    m.add_function(wrap_pyfunction!(deviation_series, m)?)?;
    m.add_function(wrap_pyfunction!(ld_exact_symbol, m)?)?;
    m.add_function(wrap_pyfunction!(lsv_inducing_spec, m)?)?;
    m.add_function(wrap_pyfunction!(lsv_step, m)?)?;
    m.add_function(wrap_pyfunction!(solenoid_step, m)?)?;
    Ok(())
}
