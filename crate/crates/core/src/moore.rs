//! High-accuracy bifurcation points from the augmented system
//! `F(y, eps^2) = 0`, `F_y(y, eps^2) v = 0`, `||v||^2 = 1`,
//! with Richardson extrapolation over successively refined grids.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::continuation::{BifurcationEvent, EventKind};
use crate::error::{CarrierError, Result};
use crate::linalg::{inverse_iteration, norm_inf, solve_bordered, BandMatrix, Tridiagonal};
use crate::model::{jacobian, l2_norm, newton_solve, rounding_floor, Grid, NewtonOptions, State};

/// A solution, a null vector of its linearisation, and the parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedState {
    pub y: Vec<f64>,
    pub v: Vec<f64>,
    pub eps_sq: f64,
    pub grid: Grid,
}

impl AugmentedState {
    pub fn new(grid: Grid, y: Vec<f64>, v: Vec<f64>, eps_sq: f64) -> Result<Self> {
        if y.len() != grid.n_nodes() || v.len() != grid.n_nodes() {
            return Err(CarrierError::GridMismatch(format!(
                "augmented state needs {} values, got {} and {}",
                grid.n_nodes(),
                y.len(),
                v.len()
            )));
        }
        Ok(Self { y, v, eps_sq, grid })
    }

    pub fn solution(&self) -> State {
        State { eps_sq: self.eps_sq, grid: self.grid, values: self.y.clone() }
    }

    pub fn resample(&self, grid: Grid) -> Self {
        let y = self.solution().resample(grid).values;
        let v = State { eps_sq: self.eps_sq, grid: self.grid, values: self.v.clone() }.resample(grid).values;
        Self { y, v, eps_sq: self.eps_sq, grid }
    }
}

/// Residual rows for `y`, then for `v`, then `||v||^2 - 1` with the trapezoid norm.
pub fn augmented_residual(s: &AugmentedState) -> Vec<f64> {
    let g = s.grid;
    let n = g.n_nodes();
    let c = s.eps_sq / (g.h() * g.h());
    let (y, v) = (&s.y, &s.v);
    let mut r = vec![0.0; 2 * n + 1];
    r[0] = y[0];
    r[n - 1] = y[n - 1];
    r[n] = v[0];
    r[2 * n - 1] = v[n - 1];
    for i in 1..n - 1 {
        let q = 2.0 * (1.0 - g.x(i) * g.x(i));
        r[i] = c * ((y[i - 1] - y[i]) + (y[i + 1] - y[i])) + (q + y[i]) * y[i] - 1.0;
        r[n + i] = c * ((v[i - 1] - v[i]) + (v[i + 1] - v[i])) + (q + 2.0 * y[i]) * v[i];
    }
    let norm = l2_norm(&g, v);
    r[2 * n] = norm * norm - 1.0;
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MooreOptions {
    pub grids: Vec<usize>,
    pub tol: f64,
    pub fold_max_iter: usize,
    pub pitchfork_max_iter: usize,
}

impl Default for MooreOptions {
    fn default() -> Self {
        Self { grids: vec![2001, 4001, 8001], tol: 1e-10, fold_max_iter: 50, pitchfork_max_iter: 100 }
    }
}

impl MooreOptions {
    fn max_iter(&self, kind: EventKind) -> usize {
        match kind {
            EventKind::Fold => self.fold_max_iter,
            EventKind::Pitchfork => self.pitchfork_max_iter,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AugmentedSolve {
    pub converged: bool,
    pub iterations: usize,
    pub residual_norm: f64,
    pub state: AugmentedState,
}

/// Parity of the null vector: even at folds of symmetric branches, odd at
/// symmetry-breaking points.
fn null_parity(kind: EventKind) -> f64 {
    match kind {
        EventKind::Fold => 1.0,
        EventKind::Pitchfork => -1.0,
    }
}

fn is_symmetric(y: &[f64]) -> bool {
    let n = y.len();
    let scale = norm_inf(y).max(1.0);
    (0..n).all(|i| (y[i] - y[n - 1 - i]).abs() <= 1e-6 * scale)
}

/// Replaces `v` by its part with the given parity (`1` even, `-1` odd).
fn project(v: &mut [f64], parity: f64) {
    let n = v.len();
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let a = 0.5 * (v[i] + parity * v[j]);
        v[i] = a;
        v[j] = parity * a;
    }
    if n % 2 == 1 && parity < 0.0 {
        v[n / 2] = 0.0;
    }
}

/// Solution at the bracket midpoint and the eigenvector closest to zero of its linearisation.
pub fn initial_guess(event: &BifurcationEvent) -> Result<AugmentedState> {
    let (a, b) = (&event.bracket.0, &event.bracket.1);
    let start = a
        .state
        .as_ref()
        .or(b.state.as_ref())
        .ok_or_else(|| CarrierError::InvalidArgument("event bracket carries no solution".into()))?;
    initial_guess_at(event.kind, start, 0.5 * (a.eps_sq + b.eps_sq))
}

/// As [`initial_guess`], re-solving `start` at `eps_sq`.
pub fn initial_guess_at(kind: EventKind, start: &State, eps_sq: f64) -> Result<AugmentedState> {
    let rep = newton_solve(&start.with_eps_sq(eps_sq), &NewtonOptions::default())?;
    if !rep.converged {
        return Err(CarrierError::NoConvergence(format!("no solution near the bracket at eps^2 = {eps_sq}")));
    }
    let s = rep.state;
    let j = jacobian(&s);
    let n = s.grid.n_nodes();
    let t = Tridiagonal {
        lower: j.lower[1..n - 2].to_vec(),
        diag: j.diag[1..n - 1].to_vec(),
        upper: j.upper[1..n - 2].to_vec(),
    };
    let (_, inner) = inverse_iteration(&t, 0.0, 30).or_else(|_| inverse_iteration(&t, 1e-8, 30))?;
    let mut v = vec![0.0; n];
    v[1..n - 1].copy_from_slice(&inner);
    if is_symmetric(&s.values) {
        project(&mut v, null_parity(kind));
    }
    let norm = l2_norm(&s.grid, &v);
    if !(norm > 0.0) {
        return Err(CarrierError::NoConvergence("critical mode has the wrong parity".into()));
    }
    v.iter_mut().for_each(|x| *x /= norm);
    AugmentedState::new(s.grid, s.values, v, s.eps_sq)
}

/// Band form of the augmented Jacobian without its border, unknowns interleaved as `(y_i, v_i)`.
fn augmented_jacobian(s: &AugmentedState) -> (BandMatrix, Vec<f64>, Vec<f64>) {
    let g = s.grid;
    let n = g.n_nodes();
    let ih2 = 1.0 / (g.h() * g.h());
    let c = s.eps_sq * ih2;
    let (y, v) = (&s.y, &s.v);
    let mut a = BandMatrix::zeros(2 * n, 2, 2);
    let mut col = vec![0.0; 2 * n];
    let w = g.weights();
    let row: Vec<f64> = (0..2 * n).map(|k| if k % 2 == 1 { 2.0 * w[k / 2] * v[k / 2] } else { 0.0 }).collect();
    for i in [0, n - 1] {
        a.set(2 * i, 2 * i, 1.0);
        a.set(2 * i + 1, 2 * i + 1, 1.0);
    }
    for i in 1..n - 1 {
        let d = -2.0 * c + 2.0 * (1.0 - g.x(i) * g.x(i)) + 2.0 * y[i];
        let (ry, rv) = (2 * i, 2 * i + 1);
        a.set(ry, ry - 2, c);
        a.set(ry, ry, d);
        a.set(ry, ry + 2, c);
        a.set(rv, rv - 2, c);
        a.set(rv, rv, d);
        a.set(rv, rv + 2, c);
        a.set(rv, ry, 2.0 * v[i]);
        col[ry] = ((y[i - 1] - y[i]) + (y[i + 1] - y[i])) * ih2;
        col[rv] = ((v[i - 1] - v[i]) + (v[i + 1] - v[i])) * ih2;
    }
    (a, col, row)
}

fn residual_norm(s: &AugmentedState) -> (f64, f64) {
    let r = augmented_residual(s);
    let floor = rounding_floor(&s.solution()) * norm_inf(&s.v).max(1.0);
    (norm_inf(&r), floor)
}

/// Newton on the augmented system. Iterates from a symmetric solution are
/// kept exactly symmetric, with `v` of the parity belonging to `kind`, so
/// rounding cannot excite the direction in which a symmetry-breaking point
/// leaves the full system singular.
pub fn solve_augmented(guess: &AugmentedState, kind: EventKind, opts: &MooreOptions) -> Result<AugmentedSolve> {
    let max_iter = opts.max_iter(kind);
    let symmetric = is_symmetric(&guess.y);
    let mut s = guess.clone();
    let mut perturbed = false;
    let mut it = 0;
    loop {
        if symmetric {
            project(&mut s.y, 1.0);
            project(&mut s.v, null_parity(kind));
        }
        let (rn, floor) = residual_norm(&s);
        if !rn.is_finite() {
            return Err(CarrierError::NonFinite(format!("augmented residual at iteration {it}")));
        }
        let tol = opts.tol.max(floor);
        if rn <= tol || it >= max_iter {
            debug!("augmented Newton: {it} iterations, residual {rn:.3e} (tolerance {tol:.3e})");
            return Ok(AugmentedSolve { converged: rn <= tol, iterations: it, residual_norm: rn, state: s });
        }
        let (a, col, row) = augmented_jacobian(&s);
        let r = augmented_residual(&s);
        let n = s.grid.n_nodes();
        let rhs: Vec<f64> = (0..2 * n).map(|k| -if k % 2 == 0 { r[k / 2] } else { r[n + k / 2] }).collect();
        let (dz, dl) = match solve_bordered(&a, &col, &row, 0.0, &rhs, -r[2 * n]) {
            Ok(x) => x,
            Err(e @ CarrierError::SingularPivot { .. }) if !perturbed => {
                debug!("{e}; perturbing eps^2");
                perturbed = true;
                s.eps_sq += 1e-8;
                continue;
            }
            Err(e) => return Err(e),
        };
        for i in 0..n {
            s.y[i] += dz[2 * i];
            s.v[i] += dz[2 * i + 1];
        }
        s.eps_sq += dl;
        if !(s.eps_sq > 0.0) {
            return Err(CarrierError::NoConvergence("augmented Newton left eps^2 > 0".into()));
        }
        it += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridEstimate {
    pub n_nodes: usize,
    pub eps: f64,
    pub iterations: usize,
    pub residual_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocatedBifurcation {
    pub kind: EventKind,
    /// Extrapolated value of `eps` (not `eps^2`).
    pub eps: f64,
    pub error_estimate: f64,
    pub per_grid: Vec<GridEstimate>,
    /// `(eps(h) - eps(h/2)) / (eps(h/2) - eps(h/4))` for the last three grids, about 4 for a second-order method.
    pub order_ratio: Option<f64>,
}

/// Refines an event on each grid in turn, starting every grid from the
/// previous solution, and extrapolates in `h^2`.
pub fn locate(event: &BifurcationEvent, opts: &MooreOptions) -> Result<LocatedBifurcation> {
    let guess = initial_guess(event)?;
    locate_from(&guess, event.kind, opts)
}

pub fn locate_from(guess: &AugmentedState, kind: EventKind, opts: &MooreOptions) -> Result<LocatedBifurcation> {
    if opts.grids.is_empty() {
        return Err(CarrierError::InvalidArgument("no grids to locate on".into()));
    }
    let mut current = guess.clone();
    let mut per_grid = Vec::new();
    for &nodes in &opts.grids {
        let grid = Grid::new(nodes)?;
        let start = if current.grid == grid { current.clone() } else { current.resample(grid) };
        let sol = solve_augmented(&start, kind, opts)?;
        if !sol.converged {
            return Err(CarrierError::NoConvergence(format!(
                "augmented system on {nodes} nodes: residual {:.3e} after {} iterations (eps = {})",
                sol.residual_norm,
                sol.iterations,
                sol.state.eps_sq.sqrt()
            )));
        }
        per_grid.push(GridEstimate {
            n_nodes: nodes,
            eps: sol.state.eps_sq.sqrt(),
            iterations: sol.iterations,
            residual_norm: sol.residual_norm,
        });
        current = sol.state;
    }
    let (eps, error_estimate) = richardson(&per_grid);
    let order_ratio = (per_grid.len() >= 3).then(|| {
        let k = per_grid.len();
        (per_grid[k - 3].eps - per_grid[k - 2].eps) / (per_grid[k - 2].eps - per_grid[k - 1].eps)
    });
    Ok(LocatedBifurcation { kind, eps, error_estimate, per_grid, order_ratio })
}

/// Second-order extrapolation from the last two grids; the error estimate is
/// the change from the previous extrapolation, or the last correction.
fn richardson(g: &[GridEstimate]) -> (f64, f64) {
    let extrapolate = |a: &GridEstimate, b: &GridEstimate| {
        let r = (b.n_nodes - 1) as f64 / (a.n_nodes - 1) as f64;
        b.eps + (b.eps - a.eps) / (r * r - 1.0)
    };
    match g.len() {
        0 => (f64::NAN, f64::NAN),
        1 => (g[0].eps, f64::NAN),
        k => {
            let e = extrapolate(&g[k - 2], &g[k - 1]);
            let err = if k >= 3 { (e - extrapolate(&g[k - 3], &g[k - 2])).abs() } else { (e - g[k - 1].eps).abs() };
            (e, err)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::critical_mode;

    fn grid(n: usize) -> Grid {
        Grid::new(n).unwrap()
    }

    /// The symmetric solution with one interior maximum.
    fn one_spike(n: usize, eps_sq: f64) -> State {
        [0.0, 1.0]
            .iter()
            .filter_map(|&c| {
                newton_solve(&State::constant(eps_sq, grid(n), c).unwrap(), &NewtonOptions::default()).ok()
            })
            .find(|r| r.converged && r.state.interior_maxima() == 1)
            .unwrap()
            .state
    }

    #[test]
    fn residual_norm_row() {
        let s = one_spike(401, 0.22);
        let g = s.grid;
        let (_, v) = critical_mode(&s).unwrap();
        let a = AugmentedState::new(g, s.values.clone(), v.iter().map(|x| 2.0 * x).collect(), 0.22).unwrap();
        let r = augmented_residual(&a);
        assert_eq!(r.len(), 2 * 401 + 1);
        assert!((r[802] - 3.0).abs() < 1e-12);
        assert!(AugmentedState::new(g, vec![0.0; 3], v, 0.2).is_err());
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn jacobian_matches_finite_differences() {
        let s = one_spike(41, 0.3);
        let g = s.grid;
        let n = 41;
        let v: Vec<f64> = g.from_fn(|x| (std::f64::consts::PI * x).sin() * (1.0 - x * x));
        let a = AugmentedState::new(g, s.values.clone(), v, 0.3).unwrap();
        let (band, col, row) = augmented_jacobian(&a);
        let r0 = augmented_residual(&a);
        let reorder = |r: &[f64]| -> Vec<f64> {
            (0..2 * n).map(|k| if k % 2 == 0 { r[k / 2] } else { r[n + k / 2] }).chain([r[2 * n]]).collect()
        };
        let base = reorder(&r0);
        let h = 1e-6;
        for k in 0..=2 * n {
            let mut p = a.clone();
            if k == 2 * n {
                p.eps_sq += h;
            } else if k % 2 == 0 {
                p.y[k / 2] += h;
            } else {
                p.v[k / 2] += h;
            }
            let fd: Vec<f64> = reorder(&augmented_residual(&p)).iter().zip(&base).map(|(a, b)| (a - b) / h).collect();
            for (i, d) in fd.iter().enumerate() {
                let exact = match (i == 2 * n, k == 2 * n) {
                    (false, false) => band.get(i, k),
                    (false, true) => col[i],
                    (true, false) => row[k],
                    (true, true) => 0.0,
                };
                assert!((d - exact).abs() < 1e-4 * exact.abs().max(1.0), "entry ({i}, {k}): {d} vs {exact}");
            }
        }
    }

    #[test]
    fn first_symmetry_breaking_point() {
        let s = one_spike(2001, 0.2198);
        let guess = initial_guess_at(EventKind::Pitchfork, &s, 0.2198).unwrap();
        let (lambda, _) = critical_mode(&s).unwrap();
        assert!(lambda.abs() < 0.1);
        let n = guess.v.len();
        assert!((0..n).all(|i| (guess.v[i] + guess.v[n - 1 - i]).abs() < 1e-12));
        let opts = MooreOptions { grids: vec![2001], ..Default::default() };
        let sol = solve_augmented(&guess, EventKind::Pitchfork, &opts).unwrap();
        assert!(sol.converged);
        let norm = l2_norm(&sol.state.grid, &sol.state.v);
        assert!((norm - 1.0).abs() < 1e-10);
        assert!((sol.state.eps_sq.sqrt() - 0.46886251).abs() < 1e-5, "{}", sol.state.eps_sq.sqrt());
        // -v is also a solution
        let mut neg = sol.state.clone();
        neg.v.iter_mut().for_each(|x| *x = -*x);
        assert!(norm_inf(&augmented_residual(&neg)) <= sol.residual_norm * 1.0001 + 1e-15);
    }

    #[test]
    fn richardson_removes_h_squared_term() {
        let mk = |n: usize| {
            let h = 2.0 / (n - 1) as f64;
            GridEstimate { n_nodes: n, eps: 0.5 + 3.0 * h * h + 7.0 * h.powi(4), iterations: 0, residual_norm: 0.0 }
        };
        let g = [mk(101), mk(201), mk(401)];
        let (e, err) = richardson(&g);
        assert!((e - 0.5).abs() < 1e-7);
        assert!(err < 1e-5);
        let ratio = (g[0].eps - g[1].eps) / (g[1].eps - g[2].eps);
        assert!((ratio - 4.0).abs() < 0.1);
    }
}
