use std::collections::VecDeque;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use super::arclength::{trace_to_fold, ArclengthOptions};
use super::events::{pitchfork_estimate, BifurcationEvent, EventKind};
use super::{Branch, BranchPoint, Origin};
use crate::deflation::{deflated_newton, DeflatedNewtonOptions, DeflationParams, DeflationSet};
use crate::error::{CarrierError, Result};
use crate::model::{critical_mode, newton_solve, Grid, NewtonOptions, State, Symmetry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub n_nodes: usize,
    pub eps_sq_start: f64,
    pub eps_sq_end: f64,
    pub step: f64,
    pub deflation: DeflationParams,
    pub newton: NewtonOptions,
    pub deflated: DeflatedNewtonOptions,
    pub max_solutions_per_step: usize,
    /// Seed groups allowed to fail per step beyond the current solution count.
    pub extra_failures: usize,
    /// Solutions closer than this in H1 are the same solution.
    pub dedupe_tol: f64,
    /// Amplitude of the odd perturbation added to symmetric seeds.
    pub perturbation: f64,
    /// Keep full states every this many steps (plus event brackets and branch ends).
    pub store_every: usize,
    /// Follow newly found solutions back to the fold they were born at.
    pub trace_births: bool,
    pub arclength: ArclengthOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_nodes: 2001,
            eps_sq_start: 0.5,
            eps_sq_end: 0.0025,
            step: 1e-4,
            deflation: DeflationParams::default(),
            newton: NewtonOptions::default(),
            deflated: DeflatedNewtonOptions::default(),
            max_solutions_per_step: 200,
            extra_failures: 4,
            dedupe_tol: 1e-4,
            perturbation: 0.05,
            store_every: 250,
            trace_births: true,
            arclength: ArclengthOptions::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        Grid::new(self.n_nodes)?;
        let ok = self.eps_sq_start > 0.0
            && self.eps_sq_end > 0.0
            && self.eps_sq_end <= self.eps_sq_start
            && self.step > 0.0
            && self.dedupe_tol > 0.0
            && self.max_solutions_per_step > 0
            && self.store_every > 0;
        if !ok {
            return Err(CarrierError::Config(format!(
                "sweep needs 0 < eps_sq_end <= eps_sq_start, positive step and tolerances (got {} -> {} by {})",
                self.eps_sq_start, self.eps_sq_end, self.step
            )));
        }
        Ok(())
    }

    /// The `eps^2` values visited, from start down to end.
    pub fn schedule(&self) -> Vec<f64> {
        let n = ((self.eps_sq_start - self.eps_sq_end) / self.step + 1e-9).floor() as usize;
        let mut v: Vec<f64> = (0..=n).map(|i| self.eps_sq_start - i as f64 * self.step).collect();
        if let Some(last) = v.last() {
            if *last - self.eps_sq_end > 1e-12 * self.step.max(1.0) {
                v.push(self.eps_sq_end);
            }
        }
        v
    }
}

/// Solutions held after one step of a sweep.
#[derive(Debug)]
pub struct StepReport<'a> {
    pub step: usize,
    pub eps_sq: f64,
    pub solutions: Vec<(usize, &'a State)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub branches: Vec<Branch>,
    /// Number of distinct solutions held at each visited `eps^2`.
    pub counts: Vec<(f64, usize)>,
    pub events: Vec<BifurcationEvent>,
}

impl SweepResult {
    pub fn count_at(&self, eps_sq: f64) -> Option<usize> {
        self.counts.iter().min_by(|a, b| (a.0 - eps_sq).abs().total_cmp(&(b.0 - eps_sq).abs())).map(|c| c.1)
    }

    /// States held at the last visited `eps^2`.
    pub fn final_states(&self) -> Vec<(usize, &State)> {
        let last = match self.counts.last() {
            Some(c) => c.0,
            None => return Vec::new(),
        };
        self.branches
            .iter()
            .filter_map(|b| {
                let p = b.points.last()?;
                (p.eps_sq == last).then_some((b.id, p.state.as_ref()?))
            })
            .collect()
    }

    pub fn events_of(&self, kind: EventKind) -> Vec<&BifurcationEvent> {
        self.events.iter().filter(|e| e.kind == kind).collect()
    }
}

struct Live {
    branch: usize,
    state: State,
}

pub fn deflated_sweep(config: &SweepConfig) -> Result<SweepResult> {
    deflated_sweep_observed(config, |_| {})
}

/// Deflated continuation over the configured `eps^2` schedule.
///
/// Each step first continues every live branch from its previous state, then
/// searches for new solutions with deflated Newton from the previous states
/// (plus odd perturbations of the symmetric ones) and the constant seeds.
pub fn deflated_sweep_observed(config: &SweepConfig, observe: impl FnMut(&StepReport)) -> Result<SweepResult> {
    deflated_sweep_from(config, &[], observe)
}

/// Resumes a sweep from known solutions, which become the initial branches.
/// Their `eps^2` is replaced by the first scheduled value.
pub fn deflated_sweep_from(
    config: &SweepConfig,
    initial: &[State],
    mut observe: impl FnMut(&StepReport),
) -> Result<SweepResult> {
    config.validate()?;
    let grid = Grid::new(config.n_nodes)?;
    if let Some(s) = initial.iter().find(|s| s.grid != grid) {
        return Err(CarrierError::GridMismatch(format!(
            "resume state has {} nodes, sweep uses {}",
            s.grid.n_nodes(),
            grid.n_nodes()
        )));
    }
    let schedule = config.schedule();
    let mut branches: Vec<Branch> = Vec::new();
    let mut live: Vec<Live> = Vec::new();
    for s in initial {
        let id = new_branch(&mut branches, Origin::Initial, None, s);
        live.push(Live { branch: id, state: s.clone() });
    }
    let mut counts = Vec::with_capacity(schedule.len());
    let mut events: Vec<BifurcationEvent> = Vec::new();

    for (step, &eps_sq) in schedule.iter().enumerate() {
        let last_step = step + 1 == schedule.len();
        let keep = step % config.store_every == 0 || last_step;
        let mut accepted: Vec<Live> = Vec::new();
        let mut set = DeflationSet::new(config.deflation);

        // continue live branches
        let mut lost: Vec<&Live> = Vec::new();
        for l in &live {
            match continue_state(&l.state.with_eps_sq(eps_sq), &set, config) {
                Some(s) => {
                    set.push(s.clone());
                    accepted.push(Live { branch: l.branch, state: s });
                }
                None => lost.push(l),
            }
        }
        // an asymmetric branch whose mirror partner survived continues as its image
        for l in lost {
            let guess = l.state.with_eps_sq(eps_sq);
            let image = (l.state.symmetry() == Symmetry::Asymmetric)
                .then(|| nearest_mirror(&guess, &accepted))
                .flatten()
                .filter(|m| !is_duplicate(m, &set, config.dedupe_tol));
            match image {
                Some(s) => {
                    set.push(s.clone());
                    accepted.push(Live { branch: l.branch, state: s });
                }
                None => {
                    debug!("branch {} ends at eps^2 = {eps_sq}", l.branch);
                    let b = &mut branches[l.branch];
                    if let Some(p) = b.points.last_mut() {
                        p.state.get_or_insert_with(|| l.state.clone());
                    }
                }
            }
        }

        // record continued points and look for symmetry-breaking crossings
        for a in &accepted {
            let prev = live.iter().find(|l| l.branch == a.branch).map(|l| &l.state);
            let point = BranchPoint::from_state(&a.state, keep);
            let b = &mut branches[a.branch];
            if let (Some(prev_state), Some(prev_point)) = (prev, b.points.last_mut()) {
                if prev_point.symmetry == Symmetry::Symmetric
                    && point.symmetry == Symmetry::Symmetric
                    && prev_point.inertia.odd != point.inertia.odd
                {
                    prev_point.state.get_or_insert_with(|| prev_state.clone());
                    let mut current = point.clone();
                    current.state = Some(a.state.clone());
                    let estimate = pitchfork_estimate(prev_state, &a.state);
                    info!("symmetry-breaking crossing on branch {} near eps = {estimate:.6}", a.branch);
                    events.push(BifurcationEvent {
                        kind: EventKind::Pitchfork,
                        branch: a.branch,
                        eps_estimate: estimate,
                        bracket: (prev_point.clone(), current.clone()),
                    });
                    b.points.push(current);
                    continue;
                }
            }
            b.points.push(point);
        }

        // discovery: newest branches first, since new components resemble the most recent ones.
        // A seed group counts as one failure when none of its seeds gives a new solution.
        let mut groups: VecDeque<(Option<usize>, Vec<State>)> = VecDeque::new();
        for l in live.iter().rev() {
            groups.push_back((Some(l.branch), discovery_seeds(&l.state.with_eps_sq(eps_sq), config.perturbation)));
        }
        groups.push_back((None, vec![State::constant(eps_sq, grid, 1.0)?]));
        groups.push_back((None, vec![State::constant(eps_sq, grid, 0.0)?]));

        let mut failures = 0usize;
        let mut newborn: Vec<usize> = Vec::new();
        while let Some((parent, group)) = groups.pop_front() {
            if failures >= set.len() + config.extra_failures || set.len() >= config.max_solutions_per_step {
                break;
            }
            let found = group.iter().find_map(|seed| {
                let rep = deflated_newton(seed, &set, &config.deflated).ok()?;
                (rep.converged && !is_duplicate(&rep.state, &set, config.dedupe_tol)).then_some(rep.state)
            });
            let Some(state) = found else {
                failures += 1;
                continue;
            };
            let origin = if step == 0 { Origin::Initial } else { Origin::Discovered };
            let id = new_branch(&mut branches, origin, parent, &state);
            debug!("eps^2 = {eps_sq}: new solution {id} ({} maxima)", state.interior_maxima());
            set.push(state.clone());
            accepted.push(Live { branch: id, state: state.clone() });
            newborn.push(id);
            // retry the same group, then search around the new solution for its partner
            let mut around = discovery_seeds(&state, config.perturbation);
            if let Some(p) = fold_partner_seed(&state) {
                around.insert(0, p);
            }
            groups.push_front((parent, group));
            groups.push_front((Some(id), around));
            if state.symmetry() == Symmetry::Asymmetric && set.len() < config.max_solutions_per_step {
                if let Ok(m) = newton_solve(&mirrored(&state), &config.newton) {
                    if m.converged && !is_duplicate(&m.state, &set, config.dedupe_tol) {
                        let mid = new_branch(&mut branches, Origin::Mirror, Some(id), &m.state);
                        set.push(m.state.clone());
                        accepted.push(Live { branch: mid, state: m.state });
                    }
                }
            }
        }

        if config.trace_births && step > 0 {
            for id in newborn {
                let state = accepted.iter().find(|l| l.branch == id).map(|l| l.state.clone());
                let Some(state) = state else { continue };
                let mut opts = config.arclength.clone();
                opts.eps_sq_max = opts.eps_sq_max.min(config.eps_sq_start);
                match trace_to_fold(&state, &opts) {
                    Ok(Some(mut ev)) => {
                        ev.branch = id;
                        if !events.iter().any(|e| same_fold(e, &ev)) {
                            info!("fold of branch {id} near eps = {:.6}", ev.eps_estimate);
                            events.push(ev);
                        }
                    }
                    Ok(None) => {}
                    Err(e) => debug!("tracing birth of branch {id} failed: {e}"),
                }
            }
        }

        accepted.sort_by_key(|l| l.branch);
        counts.push((eps_sq, accepted.len()));
        if step % 100 == 0 || last_step {
            info!("step {step}: eps^2 = {eps_sq:.6}, {} solutions", accepted.len());
        }
        observe(&StepReport { step, eps_sq, solutions: accepted.iter().map(|l| (l.branch, &l.state)).collect() });
        if last_step {
            for a in &accepted {
                if let Some(p) = branches[a.branch].points.last_mut() {
                    p.state.get_or_insert_with(|| a.state.clone());
                }
            }
        }
        live = accepted;
    }

    Ok(SweepResult { config: config.clone(), branches, counts, events })
}

fn new_branch(branches: &mut Vec<Branch>, origin: Origin, parent: Option<usize>, state: &State) -> usize {
    let id = branches.len();
    let mut b = Branch::new(id, origin, parent);
    b.points.push(BranchPoint::from_state(state, true));
    branches.push(b);
    id
}

fn is_duplicate(s: &State, set: &DeflationSet, tol: f64) -> bool {
    set.known.iter().any(|k| k.h1_distance(s) < tol)
}

fn discovery_seeds(s: &State, perturbation: f64) -> Vec<State> {
    let mut v = vec![s.clone()];
    if s.symmetry() == Symmetry::Symmetric {
        v.push(s.odd_perturbed(perturbation));
    }
    v
}

/// Newton from the previous state; asymmetric states that fall back onto their
/// symmetric parent are retried with the asymmetric part amplified, since it
/// grows like a square root just past a symmetry-breaking point.
fn continue_state(guess: &State, set: &DeflationSet, config: &SweepConfig) -> Option<State> {
    let fresh = |s: &State| -> Option<State> {
        let rep = newton_solve(s, &config.newton).ok()?;
        (rep.converged && !is_duplicate(&rep.state, set, config.dedupe_tol)).then_some(rep.state)
    };
    if let Some(s) = fresh(guess) {
        return Some(s);
    }
    if guess.symmetry() == Symmetry::Asymmetric {
        let sym = guess.symmetrized();
        for c in AMPLIFICATIONS {
            let mut g = guess.clone();
            g.values.iter_mut().zip(&sym.values).for_each(|(v, m)| *v = m + c * (*v - m));
            if let Some(s) = fresh(&g) {
                return Some(s);
            }
        }
    }
    let rep = deflated_newton(guess, set, &config.deflated).ok()?;
    (rep.converged && !is_duplicate(&rep.state, set, config.dedupe_tol)).then_some(rep.state)
}

const AMPLIFICATIONS: [f64; 3] = [2.0, 4.0, 8.0];

/// The mirror image of the accepted state closest to `guess` after reflection,
/// provided no accepted state is closer to `guess` itself.
fn nearest_mirror(guess: &State, accepted: &[Live]) -> Option<State> {
    let image = accepted
        .iter()
        .map(|a| mirrored(&a.state))
        .min_by(|a, b| a.h1_distance(guess).total_cmp(&b.h1_distance(guess)))?;
    let d = image.h1_distance(guess);
    accepted.iter().all(|a| a.state.h1_distance(guess) > d).then_some(image)
}

/// Near a fold the partner solution lies along the critical mode `v` of the
/// Jacobian. With the quadratic nonlinearity the residual along `y + s v` is
/// `s lambda v + s^2 v^2`, whose projection vanishes at `s = -lambda sum v^2 / sum v^3`.
fn fold_partner_seed(s: &State) -> Option<State> {
    let (lambda, v) = critical_mode(s).ok()?;
    let v2: f64 = v.iter().map(|x| x * x).sum();
    let v3: f64 = v.iter().map(|x| x * x * x).sum();
    if v3.abs() < 1e-3 * v2 * v.iter().fold(0.0f64, |m, x| m.max(x.abs())) {
        return None;
    }
    let t = -lambda * v2 / v3;
    let mut p = s.clone();
    p.values.iter_mut().zip(&v).for_each(|(y, vi)| *y += t * vi);
    p.values.iter().all(|y| y.is_finite()).then_some(p)
}

fn mirrored(s: &State) -> State {
    let mut m = s.clone();
    m.values.reverse();
    m
}

fn same_fold(a: &BifurcationEvent, b: &BifurcationEvent) -> bool {
    if a.kind != EventKind::Fold || b.kind != EventKind::Fold {
        return false;
    }
    let close = (a.eps_estimate - b.eps_estimate).abs() < 1e-6 * a.eps_estimate;
    match (a.bracket.0.state.as_ref(), b.bracket.0.state.as_ref()) {
        (Some(x), Some(y)) => close && x.resample(y.grid).h1_distance(y) < 0.05,
        _ => close,
    }
}
