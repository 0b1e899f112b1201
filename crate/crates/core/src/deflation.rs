//! Deflation of known solutions: Newton on `M(y) F(y)` where
//! `M(y) = prod_i (1 / ||y - y_i||^p + sigma)` repels iterates from each `y_i`.

use serde::{Deserialize, Serialize};

use crate::error::{CarrierError, Result};
use crate::linalg::{norm_inf, Tridiagonal};
use crate::model::{effective_tolerance, h1_gram_apply, jacobian, residual, Grid, NewtonOptions, SolveReport, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeflationNorm {
    H1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeflationParams {
    pub power: f64,
    pub shift: f64,
    pub norm: DeflationNorm,
}

impl Default for DeflationParams {
    fn default() -> Self {
        Self { power: 2.0, shift: 1.0, norm: DeflationNorm::H1 }
    }
}

/// Known solutions to deflate, all on the same grid.
#[derive(Debug, Clone)]
pub struct DeflationSet {
    pub params: DeflationParams,
    pub known: Vec<State>,
}

impl DeflationSet {
    pub fn new(params: DeflationParams) -> Self {
        Self { params, known: Vec::new() }
    }

    pub fn with_known(params: DeflationParams, known: Vec<State>) -> Self {
        Self { params, known }
    }

    pub fn push(&mut self, s: State) {
        self.known.push(s);
    }

    pub fn len(&self) -> usize {
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known.is_empty()
    }

    fn gram_apply(&self, grid: &Grid, v: &[f64]) -> Vec<f64> {
        match self.params.norm {
            DeflationNorm::H1 => h1_gram_apply(grid, v),
            DeflationNorm::L2 => v.iter().zip(grid.weights()).map(|(a, w)| a * w).collect(),
        }
    }

    /// Deflation factor `M(y)` and its gradient with respect to the nodal values.
    pub fn factor(&self, state: &State) -> Result<(f64, Vec<f64>)> {
        let n = state.values.len();
        let p = self.params.power;
        let sigma = self.params.shift;
        let mut m = 1.0;
        let mut parts = Vec::with_capacity(self.known.len());
        for k in &self.known {
            if k.values.len() != n {
                return Err(CarrierError::GridMismatch("deflated solution on a different grid".into()));
            }
            let diff: Vec<f64> = state.values.iter().zip(&k.values).map(|(a, b)| a - b).collect();
            let kd = self.gram_apply(&state.grid, &diff);
            let d2: f64 = kd.iter().zip(&diff).map(|(a, b)| a * b).sum();
            let d = d2.sqrt();
            if d == 0.0 {
                return Err(CarrierError::InvalidArgument("iterate coincides with a deflated solution".into()));
            }
            let mi = d.powf(-p) + sigma;
            m *= mi;
            parts.push((diff, d, mi));
        }
        // grad M = K sum_i c_i (y - y_i),  c_i = -p M d_i^(-p-2) / m_i
        let mut acc = vec![0.0; n];
        for (diff, d, mi) in &parts {
            let c = -p * m * d.powf(-p - 2.0) / mi;
            for (a, v) in acc.iter_mut().zip(diff) {
                *a += c * v;
            }
        }
        let grad = self.gram_apply(&state.grid, &acc);
        if !m.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(CarrierError::NonFinite("deflation factor".into()));
        }
        Ok((m, grad))
    }

    pub fn deflated_residual(&self, state: &State) -> Result<Vec<f64>> {
        let (m, _) = self.factor(state)?;
        Ok(residual(state).into_iter().map(|r| m * r).collect())
    }

    pub fn deflated_jacobian(&self, state: &State) -> Result<DeflatedJacobian> {
        let (m, grad) = self.factor(state)?;
        Ok(DeflatedJacobian { base: jacobian(state), m, residual: residual(state), grad })
    }
}

/// `M J + F grad(M)^T`: the undeflated Jacobian plus a rank-one correction.
#[derive(Debug, Clone)]
pub struct DeflatedJacobian {
    pub base: Tridiagonal,
    pub m: f64,
    pub residual: Vec<f64>,
    pub grad: Vec<f64>,
}

impl DeflatedJacobian {
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let gv: f64 = self.grad.iter().zip(v).map(|(a, b)| a * b).sum();
        self.base.matvec(v).iter().zip(&self.residual).map(|(jv, f)| self.m * jv + f * gv).collect()
    }

    /// Newton update `-(M J + F g^T)^{-1} M F`, which is the undeflated
    /// step scaled by `M / (M + g^T J^{-1} F)`.
    pub fn newton_step(&self) -> Result<Vec<f64>> {
        let z = self.base.solve(&self.residual)?;
        let gz: f64 = self.grad.iter().zip(&z).map(|(a, b)| a * b).sum();
        let denom = self.m + gz;
        if denom.abs() <= 1e-14 * self.m.abs() || !denom.is_finite() {
            return Err(CarrierError::SingularPivot { index: z.len(), magnitude: denom.abs() });
        }
        let tau = self.m / denom;
        Ok(z.into_iter().map(|v| -tau * v).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeflatedNewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Iterates with a larger sup norm are abandoned as divergent.
    pub divergence_bound: f64,
    /// Abandon when the residual has not halved over this many iterations.
    pub stall_window: usize,
}

impl Default for DeflatedNewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 100, divergence_bound: 50.0, stall_window: 30 }
    }
}

impl From<NewtonOptions> for DeflatedNewtonOptions {
    fn from(o: NewtonOptions) -> Self {
        Self { tol: o.tol, max_iter: o.max_iter, ..Default::default() }
    }
}

/// Deflated Newton iteration. Convergence is judged on the undeflated residual,
/// with the same tolerance rule as plain Newton.
pub fn deflated_newton(initial: &State, set: &DeflationSet, opts: &DeflatedNewtonOptions) -> Result<SolveReport> {
    let mut state = initial.clone();
    let mut best = f64::INFINITY;
    let mut best_at = 0;
    let mut iterations = 0;
    loop {
        let dj = set.deflated_jacobian(&state)?;
        let rn = norm_inf(&dj.residual);
        let tol = effective_tolerance(&state, opts.tol);
        let diverged = !rn.is_finite() || state.sup_norm() > opts.divergence_bound;
        if rn < 0.5 * best {
            best = rn;
            best_at = iterations;
        }
        let stalled = iterations - best_at > opts.stall_window;
        if rn <= tol || diverged || stalled || iterations >= opts.max_iter {
            return Ok(SolveReport { converged: rn <= tol, iterations, residual_norm: rn, tolerance: tol, state });
        }
        let step = dj.newton_step()?;
        for (y, d) in state.values.iter_mut().zip(&step) {
            *y += d;
        }
        iterations += 1;
    }
}
