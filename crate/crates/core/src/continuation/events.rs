use serde::{Deserialize, Serialize};

use super::{Branch, BranchPoint};
use crate::model::{critical_mode, State, Symmetry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Fold,
    Pitchfork,
}

impl std::fmt::Display for EventKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EventKind::Fold => "fold",
            EventKind::Pitchfork => "pitchfork",
        })
    }
}

/// A bracketed bifurcation on a branch. `eps_estimate` is in units of `eps`, not `eps^2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BifurcationEvent {
    pub kind: EventKind,
    pub branch: usize,
    pub eps_estimate: f64,
    pub bracket: (BranchPoint, BranchPoint),
}

/// Turning points of `eps^2` along the branch, and changes of the odd-mode
/// instability count between consecutive symmetric points.
pub fn detect_events(branch: &Branch) -> Vec<BifurcationEvent> {
    let p = &branch.points;
    let mut out = Vec::new();
    for i in 1..p.len() {
        let (a, b) = (&p[i - 1], &p[i]);
        if a.symmetry == Symmetry::Symmetric && b.symmetry == Symmetry::Symmetric && a.inertia.odd != b.inertia.odd {
            let eps_estimate = match (&a.state, &b.state) {
                (Some(sa), Some(sb)) => pitchfork_estimate(sa, sb),
                _ => (0.5 * (a.eps_sq + b.eps_sq)).sqrt(),
            };
            out.push(BifurcationEvent {
                kind: EventKind::Pitchfork,
                branch: branch.id,
                eps_estimate,
                bracket: (a.clone(), b.clone()),
            });
        }
        if i + 1 < p.len() {
            let c = &p[i + 1];
            let d1 = b.eps_sq - a.eps_sq;
            let d2 = c.eps_sq - b.eps_sq;
            if d1 * d2 < 0.0 {
                out.push(BifurcationEvent {
                    kind: EventKind::Fold,
                    branch: branch.id,
                    eps_estimate: fold_vertex(a, b, c).sqrt(),
                    bracket: (a.clone(), c.clone()),
                });
            }
        }
    }
    out
}

/// Extremum of the parabola through three points, with the H1 norm as abscissa.
fn fold_vertex(a: &BranchPoint, b: &BranchPoint, c: &BranchPoint) -> f64 {
    let extreme =
        if b.eps_sq > a.eps_sq { a.eps_sq.max(b.eps_sq).max(c.eps_sq) } else { a.eps_sq.min(b.eps_sq).min(c.eps_sq) };
    let (x0, x1, x2) = (a.functionals.h1_norm, b.functionals.h1_norm, c.functionals.h1_norm);
    let (y0, y1, y2) = (a.eps_sq, b.eps_sq, c.eps_sq);
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let q = (d12 - d01) / (x2 - x0);
    if !q.is_finite() || q == 0.0 {
        return extreme;
    }
    // y = y0 + d01 (x - x0) + q (x - x0)(x - x1)
    let xv = 0.5 * (x0 + x1) - d01 / (2.0 * q);
    let yv = y0 + d01 * (xv - x0) + q * (xv - x0) * (xv - x1);
    let lo = a.eps_sq.min(b.eps_sq).min(c.eps_sq);
    let hi = a.eps_sq.max(b.eps_sq).max(c.eps_sq);
    let span = hi - lo;
    if yv.is_finite() && yv > lo - span && yv < hi + span {
        yv
    } else {
        extreme
    }
}

/// `eps` where the eigenvalue closest to zero crosses zero, interpolated linearly in `eps^2`.
pub fn pitchfork_estimate(a: &State, b: &State) -> f64 {
    let mid = 0.5 * (a.eps_sq + b.eps_sq);
    let est = match (critical_mode(a), critical_mode(b)) {
        (Ok((la, _)), Ok((lb, _))) if la != lb => {
            let t = la / (la - lb);
            if (0.0..=1.0).contains(&t) {
                a.eps_sq + t * (b.eps_sq - a.eps_sq)
            } else {
                mid
            }
        }
        _ => mid,
    };
    est.sqrt()
}

/// Events of one kind with mirror duplicates removed, largest `eps` first.
/// The position in the list is the component index, starting at 1 for
/// pitchforks and 2 for folds.
pub fn distinct_events(events: &[BifurcationEvent], kind: EventKind) -> Vec<&BifurcationEvent> {
    let mut out: Vec<&BifurcationEvent> = Vec::new();
    for e in events.iter().filter(|e| e.kind == kind) {
        if !out.iter().any(|o| (o.eps_estimate - e.eps_estimate).abs() <= 1e-6 * e.eps_estimate) {
            out.push(e);
        }
    }
    out.sort_by(|a, b| b.eps_estimate.total_cmp(&a.eps_estimate));
    out
}

/// Component index of the `i`-th entry (from 0) of [`distinct_events`].
pub fn component_index(kind: EventKind, i: usize) -> u32 {
    let offset = match kind {
        EventKind::Pitchfork => 1,
        EventKind::Fold => 2,
    };
    i as u32 + offset
}
