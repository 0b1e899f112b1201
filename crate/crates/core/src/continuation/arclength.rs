use serde::{Deserialize, Serialize};

use super::events::{detect_events, BifurcationEvent, EventKind};
use super::{Branch, BranchPoint, Origin};
use crate::error::{CarrierError, Result};
use crate::linalg::{norm_inf, solve_bordered};
use crate::model::{
    effective_tolerance, jacobian, newton_solve, residual, residual_eps_sq_derivative, NewtonOptions, State,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArclengthOptions {
    pub ds: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub max_steps: usize,
    pub eps_sq_min: f64,
    pub eps_sq_max: f64,
    pub tol: f64,
    pub max_corrector_iter: usize,
}

impl Default for ArclengthOptions {
    fn default() -> Self {
        Self {
            ds: 1e-3,
            ds_min: 1e-9,
            ds_max: 2e-2,
            max_steps: 4000,
            eps_sq_min: 1e-4,
            eps_sq_max: 1.0,
            tol: 1e-10,
            max_corrector_iter: 8,
        }
    }
}

/// Point in `(y, eps^2)` space.
#[derive(Clone)]
struct Augmented {
    y: Vec<f64>,
    lambda: f64,
}

fn inner(w: &[f64], a: &Augmented, b: &Augmented) -> f64 {
    w.iter().zip(a.y.iter().zip(&b.y)).map(|(w, (p, q))| w * p * q).sum::<f64>() + a.lambda * b.lambda
}

fn normalized(w: &[f64], mut t: Augmented) -> Augmented {
    let n = inner(w, &t, &t).sqrt();
    t.y.iter_mut().for_each(|v| *v /= n);
    t.lambda /= n;
    t
}

/// Pseudo-arclength continuation from a solution, with a secant predictor.
///
/// `direction` picks the initial sense of travel in `eps^2` (positive: increasing).
/// Stops at the `eps^2` bounds, after `max_steps`, or when the step size falls below `ds_min`.
pub fn arclength_continue(seed: &State, direction: f64, opts: &ArclengthOptions) -> Result<Branch> {
    continue_until(seed, direction, opts, |_| false)
}

fn continue_until(
    seed: &State,
    direction: f64,
    opts: &ArclengthOptions,
    mut stop: impl FnMut(&[BranchPoint]) -> bool,
) -> Result<Branch> {
    let newton = NewtonOptions { tol: opts.tol, max_iter: 50 };
    let start = newton_solve(seed, &newton)?;
    if !start.converged {
        return Err(CarrierError::NoConvergence("arclength seed is not a solution".into()));
    }
    let grid = seed.grid;
    let w = grid.weights();
    let mut branch = Branch::new(0, Origin::Traced, None);
    let mut state = start.state;
    branch.points.push(BranchPoint::from_state(&state, true));
    if state.eps_sq < opts.eps_sq_min || state.eps_sq > opts.eps_sq_max {
        return Ok(branch);
    }

    // tangent from J t_y = -F_lambda, t_lambda = 1
    let fl = residual_eps_sq_derivative(&state);
    let ty = jacobian(&state).solve(&fl)?;
    let mut tangent = normalized(&w, Augmented { y: ty.into_iter().map(|v| -v).collect(), lambda: 1.0 });
    if tangent.lambda * direction < 0.0 {
        tangent.y.iter_mut().for_each(|v| *v = -*v);
        tangent.lambda = -tangent.lambda;
    }

    let mut ds = opts.ds;
    for _ in 0..opts.max_steps {
        let current = Augmented { y: state.values.clone(), lambda: state.eps_sq };
        let (next, iters) = loop {
            let pred = Augmented {
                y: current.y.iter().zip(&tangent.y).map(|(a, b)| a + ds * b).collect(),
                lambda: current.lambda + ds * tangent.lambda,
            };
            match correct(&state, &pred, &tangent, &w, opts) {
                Some(r) => break r,
                None => {
                    ds *= 0.5;
                    if ds < opts.ds_min {
                        return Ok(branch);
                    }
                }
            }
        };
        if next.eps_sq < opts.eps_sq_min || next.eps_sq > opts.eps_sq_max {
            break;
        }
        let secant = Augmented {
            y: next.values.iter().zip(&current.y).map(|(a, b)| a - b).collect(),
            lambda: next.eps_sq - current.lambda,
        };
        tangent = normalized(&w, secant);
        state = next;
        branch.points.push(BranchPoint::from_state(&state, true));
        if iters <= 3 {
            ds = (ds * 1.5).min(opts.ds_max);
        }
        if stop(&branch.points) {
            break;
        }
    }
    Ok(branch)
}

/// Newton on the residual plus the pseudo-arclength constraint.
fn correct(
    base: &State,
    pred: &Augmented,
    tangent: &Augmented,
    w: &[f64],
    opts: &ArclengthOptions,
) -> Option<(State, usize)> {
    if !(pred.lambda > 0.0) {
        return None;
    }
    let mut s = State { eps_sq: pred.lambda, grid: base.grid, values: pred.y.clone() };
    let row: Vec<f64> = tangent.y.iter().zip(w).map(|(t, w)| t * w).collect();
    for it in 0..=opts.max_corrector_iter {
        let r = residual(&s);
        let cur = Augmented { y: s.values.clone(), lambda: s.eps_sq };
        let diff =
            Augmented { y: cur.y.iter().zip(&pred.y).map(|(a, b)| a - b).collect(), lambda: cur.lambda - pred.lambda };
        let g = inner(w, tangent, &diff);
        let rn = norm_inf(&r);
        if !rn.is_finite() {
            return None;
        }
        if rn <= effective_tolerance(&s, opts.tol) && g.abs() <= 1e-12 {
            return Some((s, it));
        }
        if it == opts.max_corrector_iter {
            return None;
        }
        let a = jacobian(&s).to_band();
        let fl = residual_eps_sq_derivative(&s);
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let (dy, dl) = solve_bordered(&a, &fl, &row, tangent.lambda, &neg, -g).ok()?;
        for (y, d) in s.values.iter_mut().zip(&dy) {
            *y += d;
        }
        s.eps_sq += dl;
        if !(s.eps_sq > 0.0) {
            return None;
        }
    }
    None
}

/// Follows a solution towards increasing `eps^2` until `eps^2` turns around.
///
/// Returns `None` when no turning point is met within the step budget, or when
/// the turning point is where an asymmetric branch meets its mirror image
/// (a symmetry-breaking point rather than a fold).
pub fn trace_to_fold(state: &State, opts: &ArclengthOptions) -> Result<Option<BifurcationEvent>> {
    let asymmetric_start = asymmetry(state) > 1e-3;
    let branch = continue_until(state, 1.0, opts, |pts| {
        let n = pts.len();
        n >= 3 && (pts[n - 2].eps_sq - pts[n - 3].eps_sq) * (pts[n - 1].eps_sq - pts[n - 2].eps_sq) < 0.0
    })?;
    let fold = detect_events(&branch).into_iter().find(|e| e.kind == EventKind::Fold);
    Ok(fold.filter(|e| !asymmetric_start || !is_mirror_turn(e)))
}

/// An asymmetric branch turning back through a symmetric state onto its mirror image.
fn is_mirror_turn(e: &BifurcationEvent) -> bool {
    let (Some(a), Some(c)) = (e.bracket.0.state.as_ref(), e.bracket.1.state.as_ref()) else {
        return false;
    };
    let mut mirror = c.clone();
    mirror.values.reverse();
    a.h1_distance(&mirror) < a.h1_distance(c)
}

/// Relative size of the odd part.
fn asymmetry(s: &State) -> f64 {
    let n = s.values.len();
    let odd = (0..n).map(|i| (s.values[i] - s.values[n - 1 - i]).abs()).fold(0.0, f64::max);
    odd / s.sup_norm().max(f64::MIN_POSITIVE)
}
