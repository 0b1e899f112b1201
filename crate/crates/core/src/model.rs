//! Discretised boundary-value problem `eps^2 y'' + 2(1 - x^2) y + y^2 = 1`, `y(-1) = y(1) = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{CarrierError, Result};
use crate::linalg::{inverse_iteration, norm_inf, sturm_count, Tridiagonal};

/// Peaks with smaller topographic prominence are ignored when counting maxima.
pub const MAXIMA_PROMINENCE: f64 = 0.1;
/// Relative tolerance for classifying a state as even about `x = 0`.
pub const SYMMETRY_TOL: f64 = 1e-6;

/// Uniform grid on `[-1, 1]` with an odd number of nodes, so `x = 0` is a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    n_nodes: usize,
}

impl Grid {
    pub fn new(n_nodes: usize) -> Result<Self> {
        if n_nodes < 5 || n_nodes.is_multiple_of(2) {
            return Err(CarrierError::InvalidArgument(format!("grid needs an odd node count >= 5, got {n_nodes}")));
        }
        Ok(Self { n_nodes })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn h(&self) -> f64 {
        2.0 / (self.n_nodes - 1) as f64
    }

    pub fn centre(&self) -> usize {
        (self.n_nodes - 1) / 2
    }

    /// Node `i`, computed so that `x(i) == -x(n - 1 - i)` exactly.
    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        let m = (self.n_nodes - 1) as f64;
        (2.0 * i as f64 - m) / m
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_nodes).map(|i| self.x(i)).collect()
    }

    /// Trapezoid quadrature weights.
    pub fn weights(&self) -> Vec<f64> {
        let h = self.h();
        let mut w = vec![h; self.n_nodes];
        w[0] = 0.5 * h;
        w[self.n_nodes - 1] = 0.5 * h;
        w
    }

    pub fn from_fn(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.n_nodes).map(|i| f(self.x(i))).collect()
    }
}

/// Nodal values of a candidate solution at a given `eps^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub eps_sq: f64,
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl State {
    pub fn new(eps_sq: f64, grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(CarrierError::GridMismatch(format!(
                "{} values for a {}-node grid",
                values.len(),
                grid.n_nodes()
            )));
        }
        if !(eps_sq > 0.0) || !eps_sq.is_finite() {
            return Err(CarrierError::InvalidArgument(format!("eps_sq must be positive, got {eps_sq}")));
        }
        Ok(Self { eps_sq, grid, values })
    }

    pub fn constant(eps_sq: f64, grid: Grid, c: f64) -> Result<Self> {
        let mut v = vec![c; grid.n_nodes()];
        v[0] = 0.0;
        v[grid.n_nodes() - 1] = 0.0;
        Self::new(eps_sq, grid, v)
    }

    pub fn with_eps_sq(&self, eps_sq: f64) -> Self {
        Self { eps_sq, grid: self.grid, values: self.values.clone() }
    }

    /// Linear interpolation onto another grid.
    pub fn resample(&self, grid: Grid) -> Self {
        if grid == self.grid {
            return self.clone();
        }
        let values = grid.from_fn(|x| interpolate(&self.grid, &self.values, x));
        Self { eps_sq: self.eps_sq, grid, values }
    }

    pub fn sup_norm(&self) -> f64 {
        norm_inf(&self.values)
    }

    pub fn l2_norm(&self) -> f64 {
        l2_norm(&self.grid, &self.values)
    }

    pub fn h1_norm(&self) -> f64 {
        h1_norm(&self.grid, &self.values)
    }

    pub fn h1_distance(&self, other: &State) -> f64 {
        let d: Vec<f64> = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        h1_norm(&self.grid, &d)
    }

    pub fn symmetry(&self) -> Symmetry {
        classify_symmetry(&self.values)
    }

    pub fn interior_maxima(&self) -> usize {
        count_interior_maxima(&self.values, MAXIMA_PROMINENCE)
    }

    pub fn functionals(&self) -> Functionals {
        let h = self.grid.h();
        let y = &self.values;
        Functionals {
            sup_norm: self.sup_norm(),
            h1_norm: self.h1_norm(),
            centre_value: y[self.grid.centre()],
            left_slope: (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * h),
        }
    }

    /// Even part `(y(x) + y(-x)) / 2`.
    pub fn symmetrized(&self) -> Self {
        let n = self.values.len();
        let values = (0..n).map(|i| 0.5 * (self.values[i] + self.values[n - 1 - i])).collect();
        Self { eps_sq: self.eps_sq, grid: self.grid, values }
    }

    /// Adds `amplitude * sin(pi x) cos(pi x / 2)`-shaped odd perturbation, vanishing at the ends.
    pub fn odd_perturbed(&self, amplitude: f64) -> Self {
        let g = self.grid;
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let x = g.x(i);
                v + amplitude * (std::f64::consts::PI * x).sin() * (0.5 * std::f64::consts::PI * x).cos()
            })
            .collect();
        Self { eps_sq: self.eps_sq, grid: g, values }
    }
}

/// Scalar summaries written with every stored solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Functionals {
    pub sup_norm: f64,
    pub h1_norm: f64,
    pub centre_value: f64,
    pub left_slope: f64,
}

impl Functionals {
    pub const NAMES: [&'static str; 4] = ["sup_norm", "h1_norm", "centre_value", "left_slope"];

    pub fn values(&self) -> [f64; 4] {
        [self.sup_norm, self.h1_norm, self.centre_value, self.left_slope]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Self::NAMES.iter().position(|n| *n == name).map(|i| self.values()[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symmetry {
    Symmetric,
    Asymmetric,
}

impl std::fmt::Display for Symmetry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Symmetry::Symmetric => "symmetric",
            Symmetry::Asymmetric => "asymmetric",
        })
    }
}

pub fn interpolate(grid: &Grid, values: &[f64], x: f64) -> f64 {
    let n = grid.n_nodes();
    let t = ((x + 1.0) / grid.h()).clamp(0.0, (n - 1) as f64);
    let i = (t.floor() as usize).min(n - 2);
    let f = t - i as f64;
    values[i] * (1.0 - f) + values[i + 1] * f
}

pub fn l2_norm(grid: &Grid, v: &[f64]) -> f64 {
    grid.weights().iter().zip(v).map(|(w, y)| w * y * y).sum::<f64>().sqrt()
}

/// Discrete H1 norm: trapezoid L2 of the values plus L2 of the difference quotients.
pub fn h1_norm(grid: &Grid, v: &[f64]) -> f64 {
    let h = grid.h();
    let grad: f64 = v.windows(2).map(|p| (p[1] - p[0]).powi(2)).sum::<f64>() / h;
    (l2_norm(grid, v).powi(2) + grad).sqrt()
}

/// Applies the Gram matrix of the discrete H1 inner product.
pub fn h1_gram_apply(grid: &Grid, v: &[f64]) -> Vec<f64> {
    let h = grid.h();
    let n = v.len();
    let w = grid.weights();
    let mut out: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a * b).collect();
    for i in 0..n - 1 {
        let g = (v[i + 1] - v[i]) / h;
        out[i] -= g;
        out[i + 1] += g;
    }
    out
}

pub fn classify_symmetry(values: &[f64]) -> Symmetry {
    let n = values.len();
    let scale = norm_inf(values);
    let asym = (0..n / 2).map(|i| (values[i] - values[n - 1 - i]).abs()).fold(0.0, f64::max);
    if asym <= SYMMETRY_TOL * scale {
        Symmetry::Symmetric
    } else {
        Symmetry::Asymmetric
    }
}

/// Counts interior local maxima whose topographic prominence is at least `min_prominence`.
/// Flat plateaus count once.
pub fn count_interior_maxima(values: &[f64], min_prominence: f64) -> usize {
    peak_indices(values).into_iter().filter(|&p| prominence(values, p) >= min_prominence).count()
}

fn peak_indices(y: &[f64]) -> Vec<usize> {
    let n = y.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if y[i - 1] < y[i] {
            let mut j = i;
            while j + 1 < n && y[j + 1] == y[i] {
                j += 1;
            }
            if j + 1 < n && y[j + 1] < y[i] {
                peaks.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

fn prominence(y: &[f64], p: usize) -> f64 {
    let v = y[p];
    let mut left_min = v;
    for i in (0..p).rev() {
        if y[i] > v {
            break;
        }
        left_min = left_min.min(y[i]);
    }
    let mut right_min = v;
    for &yi in &y[p + 1..] {
        if yi > v {
            break;
        }
        right_min = right_min.min(yi);
    }
    v - left_min.max(right_min)
}

/// Discrete residual, Dirichlet rows included.
pub fn residual(state: &State) -> Vec<f64> {
    let g = state.grid;
    let n = g.n_nodes();
    let y = &state.values;
    let c = state.eps_sq / (g.h() * g.h());
    let mut r = vec![0.0; n];
    r[0] = y[0];
    r[n - 1] = y[n - 1];
    for i in 1..n - 1 {
        let x = g.x(i);
        let yi = y[i];
        r[i] = c * ((y[i - 1] - yi) + (y[i + 1] - yi)) + (2.0 * (1.0 - x * x) + yi) * yi - 1.0;
    }
    r
}

/// Jacobian of [`residual`] with respect to the nodal values.
pub fn jacobian(state: &State) -> Tridiagonal {
    let g = state.grid;
    let n = g.n_nodes();
    let c = state.eps_sq / (g.h() * g.h());
    let mut t = Tridiagonal::zeros(n);
    t.diag[0] = 1.0;
    t.diag[n - 1] = 1.0;
    for i in 1..n - 1 {
        let x = g.x(i);
        t.diag[i] = -2.0 * c + 2.0 * (1.0 - x * x) + 2.0 * state.values[i];
        t.lower[i - 1] = c;
        t.upper[i] = c;
    }
    t
}

/// Derivative of [`residual`] with respect to `eps^2`.
pub fn residual_eps_sq_derivative(state: &State) -> Vec<f64> {
    let g = state.grid;
    let n = g.n_nodes();
    let y = &state.values;
    let ih2 = 1.0 / (g.h() * g.h());
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        d[i] = ((y[i - 1] - y[i]) + (y[i + 1] - y[i])) * ih2;
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 50 }
    }
}

/// Residual level reachable in double precision: the second-difference term
/// amplifies rounding in the values by roughly `4 eps^2 / h^2`.
pub fn rounding_floor(state: &State) -> f64 {
    let g = state.grid;
    let amp = 4.0 * state.eps_sq / (g.h() * g.h()) + 4.0;
    2.0 * f64::EPSILON * amp * state.sup_norm().max(1.0)
}

/// Convergence threshold actually applied: the requested tolerance, raised to
/// the rounding floor when the grid is too fine for it.
pub fn effective_tolerance(state: &State, tol: f64) -> f64 {
    tol.max(rounding_floor(state))
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    pub residual_norm: f64,
    pub tolerance: f64,
    pub state: State,
}

/// Undamped Newton iteration from `initial`.
pub fn newton_solve(initial: &State, opts: &NewtonOptions) -> Result<SolveReport> {
    let mut state = initial.clone();
    let mut iterations = 0;
    loop {
        let r = residual(&state);
        let rn = norm_inf(&r);
        let tol = effective_tolerance(&state, opts.tol);
        if !rn.is_finite() {
            return Ok(SolveReport { converged: false, iterations, residual_norm: rn, tolerance: tol, state });
        }
        if rn <= tol || iterations >= opts.max_iter {
            return Ok(SolveReport { converged: rn <= tol, iterations, residual_norm: rn, tolerance: tol, state });
        }
        let lu = jacobian(&state).factor()?;
        let mut d = r;
        lu.solve_in_place(&mut d);
        for (y, dy) in state.values.iter_mut().zip(&d) {
            *y -= dy;
        }
        iterations += 1;
    }
}

/// Eigenvalue counts of the linearisation restricted to interior nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inertia {
    /// Negative eigenvalues with even eigenvectors (all of them for asymmetric states).
    pub even: usize,
    /// Negative eigenvalues with odd eigenvectors (zero for asymmetric states).
    pub odd: usize,
}

impl Inertia {
    pub fn total(&self) -> usize {
        self.even + self.odd
    }
}

fn interior_operator(state: &State) -> (Vec<f64>, f64) {
    let j = jacobian(state);
    let n = state.grid.n_nodes();
    (j.diag[1..n - 1].to_vec(), j.upper[1])
}

/// Negative-eigenvalue counts of the interior Jacobian. For even states the
/// count is split by eigenvector parity, which separates symmetry-breaking
/// events from symmetric ones.
pub fn inertia(state: &State) -> Inertia {
    let (d, b) = interior_operator(state);
    let ni = d.len();
    match state.symmetry() {
        Symmetry::Asymmetric => Inertia { even: sturm_count(&d, &vec![b * b; ni - 1], 0.0), odd: 0 },
        Symmetry::Symmetric => {
            // interior index of x = 0
            let m = state.grid.centre() - 1;
            let odd = sturm_count(&d[..m], &vec![b * b; m.saturating_sub(1)], 0.0);
            let mut e2 = vec![b * b; m];
            e2[m - 1] = 2.0 * b * b;
            let even = sturm_count(&d[..=m], &e2, 0.0);
            Inertia { even, odd }
        }
    }
}

/// Eigenpair of the interior Jacobian closest to zero. The vector is padded
/// with zero boundary values and normalised to unit trapezoid L2 norm.
pub fn critical_mode(state: &State) -> Result<(f64, Vec<f64>)> {
    let j = jacobian(state);
    let n = state.grid.n_nodes();
    let t = Tridiagonal {
        lower: j.lower[1..n - 2].to_vec(),
        diag: j.diag[1..n - 1].to_vec(),
        upper: j.upper[1..n - 2].to_vec(),
    };
    let (lambda, v) = inverse_iteration(&t, 0.0, 30)?;
    let mut full = vec![0.0; n];
    full[1..n - 1].copy_from_slice(&v);
    let s = l2_norm(&state.grid, &full);
    full.iter_mut().for_each(|x| *x /= s);
    Ok((lambda, full))
}
