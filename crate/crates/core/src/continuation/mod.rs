//! Solution branches: deflated natural-parameter sweeps in `eps^2`,
//! pseudo-arclength continuation, and bifurcation detection.

mod arclength;
mod events;
mod sweep;

pub use arclength::{arclength_continue, trace_to_fold, ArclengthOptions};
pub use events::{component_index, detect_events, distinct_events, BifurcationEvent, EventKind};
pub use sweep::{deflated_sweep, deflated_sweep_from, deflated_sweep_observed, StepReport, SweepConfig, SweepResult};

use serde::{Deserialize, Serialize};

use crate::model::{inertia, Functionals, Inertia, State, Symmetry};

/// One solution on a branch. The full state is kept only where it is needed
/// later (event brackets, branch ends, every `store_every`-th step).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchPoint {
    pub eps_sq: f64,
    pub functionals: Functionals,
    pub maxima: usize,
    pub symmetry: Symmetry,
    pub inertia: Inertia,
    pub state: Option<State>,
}

impl BranchPoint {
    pub fn from_state(state: &State, keep: bool) -> Self {
        Self {
            eps_sq: state.eps_sq,
            functionals: state.functionals(),
            maxima: state.interior_maxima(),
            symmetry: state.symmetry(),
            inertia: inertia(state),
            state: keep.then(|| state.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    /// Found from the constant seeds at the first step.
    Initial,
    /// Found by deflation while sweeping.
    Discovered,
    /// Mirror image `y(-x)` of another branch.
    Mirror,
    /// Traced by arclength continuation.
    Traced,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Branch {
    pub id: usize,
    pub origin: Origin,
    /// Branch whose previous state seeded the deflated solve that found this one.
    pub parent: Option<usize>,
    pub points: Vec<BranchPoint>,
}

impl Branch {
    pub fn new(id: usize, origin: Origin, parent: Option<usize>) -> Self {
        Self { id, origin, parent, points: Vec::new() }
    }

    pub fn last_state(&self) -> Option<&State> {
        self.points.iter().rev().find_map(|p| p.state.as_ref())
    }
}
