//! Python bindings: solving, sweeping, locating bifurcations, and the
//! asymptotic predictions.

use carrier_core::continuation::{self, EventKind, SweepConfig};
use carrier_core::model::{self, Grid, NewtonOptions, State};
use carrier_core::{enumerator, io, kuzmak, moore, predictor, CarrierError};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: CarrierError) -> PyErr {
    match e {
        CarrierError::Config(_) | CarrierError::InvalidArgument(_) | CarrierError::GridMismatch(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn kind_of(name: &str) -> PyResult<EventKind> {
    match name {
        "fold" => Ok(EventKind::Fold),
        "pitchfork" => Ok(EventKind::Pitchfork),
        _ => Err(PyValueError::new_err(format!("kind must be 'fold' or 'pitchfork', got {name:?}"))),
    }
}

/// A discrete solution on the uniform grid over [-1, 1].
#[pyclass(name = "Solution", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySolution {
    state: State,
}

#[pymethods]
impl PySolution {
    #[new]
    fn new(eps_sq: f64, values: Vec<f64>) -> PyResult<Self> {
        let grid = Grid::new(values.len()).map_err(to_py)?;
        Ok(Self { state: State::new(eps_sq, grid, values).map_err(to_py)? })
    }

    #[getter]
    fn eps_sq(&self) -> f64 {
        self.state.eps_sq
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.state.values.clone()
    }

    #[getter]
    fn x(&self) -> Vec<f64> {
        self.state.grid.nodes()
    }

    #[getter]
    fn symmetry(&self) -> String {
        self.state.symmetry().to_string()
    }

    #[getter]
    fn interior_maxima(&self) -> usize {
        self.state.interior_maxima()
    }

    /// Sup norm, H1 norm, y(0) and y'(-1).
    fn functionals(&self) -> Vec<(String, f64)> {
        let f = self.state.functionals();
        model::Functionals::NAMES.iter().map(|n| n.to_string()).zip(f.values()).collect()
    }

    fn residual(&self) -> Vec<f64> {
        model::residual(&self.state)
    }

    fn __repr__(&self) -> String {
        format!(
            "Solution(eps_sq={}, nodes={}, maxima={}, {})",
            self.state.eps_sq,
            self.state.grid.n_nodes(),
            self.state.interior_maxima(),
            self.state.symmetry()
        )
    }
}

/// Newton's method from a constant or a list of nodal values.
#[pyfunction]
#[pyo3(signature = (eps_sq, guess, n_nodes = 2001, tol = 1e-10))]
fn solve(eps_sq: f64, guess: &Bound<'_, PyAny>, n_nodes: usize, tol: f64) -> PyResult<PySolution> {
    let start = if let Ok(c) = guess.extract::<f64>() {
        State::constant(eps_sq, Grid::new(n_nodes).map_err(to_py)?, c).map_err(to_py)?
    } else {
        let values: Vec<f64> = guess.extract()?;
        State::new(eps_sq, Grid::new(values.len()).map_err(to_py)?, values).map_err(to_py)?
    };
    let rep = model::newton_solve(&start, &NewtonOptions { tol, ..Default::default() }).map_err(to_py)?;
    if !rep.converged {
        return Err(PyRuntimeError::new_err(format!("Newton stalled at residual {:.3e}", rep.residual_norm)));
    }
    Ok(PySolution { state: rep.state })
}

/// Outcome of a deflated sweep.
#[pyclass(name = "SweepResult", frozen)]
struct PySweepResult {
    result: continuation::SweepResult,
}

#[pymethods]
impl PySweepResult {
    /// `(eps_sq, number of solutions)` at every visited value.
    #[getter]
    fn counts(&self) -> Vec<(f64, usize)> {
        self.result.counts.clone()
    }

    /// `(kind, component, eps)` for each distinct event, largest eps first within a kind.
    fn events(&self) -> Vec<(String, u32, f64)> {
        let mut out = Vec::new();
        for k in [EventKind::Pitchfork, EventKind::Fold] {
            for (i, e) in continuation::distinct_events(&self.result.events, k).into_iter().enumerate() {
                out.push((k.to_string(), continuation::component_index(k, i), e.eps_estimate));
            }
        }
        out
    }

    fn final_solutions(&self) -> Vec<PySolution> {
        self.result.final_states().into_iter().map(|(_, s)| PySolution { state: s.clone() }).collect()
    }

    /// Refines the `index`-th distinct event of `kind` (from 0) with the augmented system.
    #[pyo3(signature = (kind, index, grids = vec![2001, 4001, 8001]))]
    fn locate(&self, kind: &str, index: usize, grids: Vec<usize>) -> PyResult<(f64, f64)> {
        let k = kind_of(kind)?;
        let events = continuation::distinct_events(&self.result.events, k);
        let e =
            events.get(index).ok_or_else(|| PyValueError::new_err(format!("only {} {kind} events", events.len())))?;
        let opts = moore::MooreOptions { grids, ..Default::default() };
        let l = moore::locate(e, &opts).map_err(to_py)?;
        Ok((l.eps, l.error_estimate))
    }

    /// Every branch point as database records, written to `path` as a new run.
    fn save(&self, path: &str) -> PyResult<String> {
        io::Database::new(path).append_run(&io::records_from_sweep(&self.result)).map_err(to_py)
    }
}

/// Deflated continuation from `eps_sq_start` down to `eps_sq_end`.
#[pyfunction]
#[pyo3(signature = (eps_sq_start = 0.5, eps_sq_end = 0.0025, step = 1e-4, n_nodes = 2001))]
fn sweep(py: Python<'_>, eps_sq_start: f64, eps_sq_end: f64, step: f64, n_nodes: usize) -> PyResult<PySweepResult> {
    let config = SweepConfig { eps_sq_start, eps_sq_end, step, n_nodes, ..Default::default() };
    let result = py.detach(|| continuation::deflated_sweep(&config)).map_err(to_py)?;
    Ok(PySweepResult { result })
}

/// Augmented-system refinement starting from a solution near a bifurcation.
/// Returns `(eps, error_estimate)`.
#[pyfunction]
#[pyo3(signature = (kind, solution, grids = vec![2001, 4001, 8001]))]
fn locate(kind: &str, solution: &PySolution, grids: Vec<usize>) -> PyResult<(f64, f64)> {
    let k = kind_of(kind)?;
    let guess = moore::initial_guess_at(k, &solution.state, solution.state.eps_sq).map_err(to_py)?;
    let l = moore::locate_from(&guess, k, &moore::MooreOptions { grids, ..Default::default() }).map_err(to_py)?;
    Ok((l.eps, l.error_estimate))
}

/// `(eps_exact, eps_asymptotic)`; `eps_exact` is None where no tangency exists.
#[pyfunction]
fn predict(kind: &str, n: u32) -> PyResult<(Option<f64>, f64)> {
    match kind_of(kind)? {
        EventKind::Pitchfork => {
            let p = predictor::predict_pitchfork(n).map_err(to_py)?;
            Ok((p.eps_exact, p.eps_asym))
        }
        EventKind::Fold => match predictor::predict_fold(n) {
            Ok(p) => Ok((p.eps_exact, p.eps_asym)),
            Err(CarrierError::NoConvergence(_)) => Ok((None, predictor::fold_asymptotic(n).map_err(to_py)?)),
            Err(e) => Err(to_py(e)),
        },
    }
}

/// Counts of asymptotic solutions: `(symmetric, non-symmetric, turning-point)`.
#[pyfunction]
fn enumerate(py: Python<'_>, eps: f64) -> PyResult<(usize, usize, usize)> {
    let c = py.detach(|| enumerator::enumerate(eps)).map_err(to_py)?;
    Ok((c.symmetric.len(), c.nonsymmetric.len(), c.turning_point.len()))
}

#[pyfunction]
fn max_spikes(eps: f64) -> usize {
    enumerator::max_spikes(eps)
}

/// The adiabatic invariant of the orbit with amplitude `a` at `x`.
#[pyfunction]
fn action_integral(a: f64, x: f64) -> PyResult<f64> {
    kuzmak::action_integral(a, x).map_err(to_py)
}

/// `int_a^b Phi(k, s) ds`.
#[pyfunction]
fn phase_integral(k: f64, a: f64, b: f64) -> PyResult<f64> {
    kuzmak::phase_integral(k, a, b).map_err(to_py)
}

/// `(k0, k1)`: the invariant at the fold nose and at the full-domain limit.
#[pyfunction]
fn invariant_limits() -> (f64, f64) {
    (kuzmak::k0(), kuzmak::k1())
}

/// CSV of a solution database, one row per record and functional.
#[pyfunction]
fn diagram_csv(path: &str) -> PyResult<String> {
    let records = io::Database::new(path).read().map_err(to_py)?;
    let mut buf = Vec::new();
    io::write_diagram(&records, &mut buf).map_err(to_py)?;
    String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn carrier(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySolution>()?;
    m.add_class::<PySweepResult>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(locate, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate, m)?)?;
    m.add_function(wrap_pyfunction!(max_spikes, m)?)?;
    m.add_function(wrap_pyfunction!(action_integral, m)?)?;
    m.add_function(wrap_pyfunction!(phase_integral, m)?)?;
    m.add_function(wrap_pyfunction!(invariant_limits, m)?)?;
    m.add_function(wrap_pyfunction!(diagram_csv, m)?)?;
    Ok(())
}
