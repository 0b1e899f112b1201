//! Asymptotic census: symmetric, non-symmetric and turning-point solution
//! families at a given `eps`, with their leading-order profiles.

use std::f64::consts::SQRT_2;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{CarrierError, Result};
use crate::kuzmak::{
    boundary_envelopes, boundary_offset_x0, envelope_action, k0, k1, k_max, orbit_from_k, phase_integral,
    phase_to_edge, turning_point, CubicOrbit,
};
use crate::model::{count_interior_maxima, Grid, MAXIMA_PROMINENCE};
use crate::quadrature::GaussLegendre;

/// Above this `eps` the asymptotic census is flagged as low confidence.
pub const LOW_CONFIDENCE_EPS: f64 = 0.15;
/// Turning points closer than this many `eps` to the boundary sit inside the boundary layer.
pub const HAND_OFF_WIDTH: f64 = 5.0;
/// Points per end of the log-refined `k` scan grids.
const SCAN_POINTS: usize = 1000;

/// `-1 + x^2 - sqrt(x^4 - 2x^2 + 2)`, the negative root of the reduced equation.
pub fn outer_solution(x: f64) -> f64 {
    let x2 = x * x;
    -1.0 + x2 - (x2 * x2 - 2.0 * x2 + 2.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// `Plus` decays monotonically away from the wall; `Minus` carries a boundary spike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerSign {
    Plus,
    Minus,
}

/// Additive boundary-layer term `3 sech^2(+-X / sqrt 2 + atanh sqrt(2/3))`, `X` the scaled wall distance.
pub fn boundary_layer(x: f64, side: Side, sign: LayerSign, eps: f64) -> f64 {
    let dist = match side {
        Side::Left => 1.0 + x,
        Side::Right => 1.0 - x,
    } / eps;
    let s = match sign {
        LayerSign::Plus => 1.0,
        LayerSign::Minus => -1.0,
    };
    let c = 1.0 / (s * dist / SQRT_2 + (2.0f64 / 3.0).sqrt().atanh()).cosh();
    3.0 * c * c
}

/// Interior spike `3 sqrt 2 sech^2(2^(-1/4) X) - 1 - sqrt 2` in the inner variable.
pub fn interior_spike(x_inner: f64) -> f64 {
    let c = 1.0 / (x_inner * 2f64.powf(-0.25)).cosh();
    3.0 * SQRT_2 * c * c - 1.0 - SQRT_2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    SymMin,
    SymMax,
    AsymPlus,
    AsymMinus,
    TurningPointSymMin,
    TurningPointSymMax,
}

impl Family {
    pub fn is_turning_point(self) -> bool {
        matches!(self, Family::TurningPointSymMin | Family::TurningPointSymMax)
    }

    pub fn is_symmetric(self) -> bool {
        !matches!(self, Family::AsymPlus | Family::AsymMinus)
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Family::SymMin => "sym-min",
            Family::SymMax => "sym-max",
            Family::AsymPlus => "asym-plus",
            Family::AsymMinus => "asym-minus",
            Family::TurningPointSymMin => "turning-point-sym-min",
            Family::TurningPointSymMax => "turning-point-sym-max",
        })
    }
}

/// One leading-order solution: `y = Y(phi(x) / eps + mu, x; k)` on the oscillatory
/// region, outer solution plus boundary layers beyond a turning point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticSolution {
    pub family: Family,
    pub k: f64,
    /// Phase shift in `[0, 1)`.
    pub mu: f64,
    /// Integer label of the phase condition the root satisfies.
    pub n: i64,
    /// `+1` or `-1` for the `n +- X0` choice of symmetric solutions, else 0.
    pub offset_sign: i8,
    pub boundary_layers: Option<(LayerSign, LayerSign)>,
    /// The turning point (real or extrapolated past `x = 1`) lies within the boundary layer.
    pub hand_off: bool,
    pub low_confidence: bool,
}

/// Solutions from the three enumerators at one `eps`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Census {
    pub eps: f64,
    pub symmetric: Vec<AsymptoticSolution>,
    pub nonsymmetric: Vec<AsymptoticSolution>,
    pub turning_point: Vec<AsymptoticSolution>,
}

impl Census {
    pub fn total(&self) -> usize {
        self.symmetric.len() + self.nonsymmetric.len() + self.turning_point.len()
    }

    /// Solutions whose turning point is clear of the boundary layers.
    pub fn confident_total(&self) -> usize {
        self.all().filter(|s| !s.hand_off).count()
    }

    pub fn all(&self) -> impl Iterator<Item = &AsymptoticSolution> {
        self.symmetric.iter().chain(&self.nonsymmetric).chain(&self.turning_point)
    }
}

pub fn enumerate(eps: f64) -> Result<Census> {
    Ok(Census {
        eps,
        symmetric: enumerate_symmetric(eps)?,
        nonsymmetric: enumerate_nonsymmetric(eps)?,
        turning_point: enumerate_turning_point(eps)?,
    })
}

/// Sampled `phi(1)` and `X0` on `(k0, k1]`, and `phi(x*)` on `(k1, k_max)`.
struct Tables {
    full: Vec<(f64, f64, f64)>,
    turning: Vec<(f64, f64)>,
}

fn tables() -> &'static Tables {
    static T: OnceLock<Tables> = OnceLock::new();
    T.get_or_init(|| {
        let (k0, k1, km) = (k0(), k1(), k_max());
        let full = parallel_map(&log_refined(k0, k1), |k| {
            let phi = phase_integral(k, 0.0, 1.0).unwrap_or(f64::NAN);
            let x0 = boundary_offset_x0(k).unwrap_or(f64::NAN);
            (k, phi, x0)
        });
        let turning = parallel_map(&log_refined(k1, km), |k| (k, phase_to_edge(k).unwrap_or(f64::NAN)));
        Tables { full, turning }
    })
}

/// Open interval `(a, b)` sampled geometrically towards both ends, with `b` included.
fn log_refined(a: f64, b: f64) -> Vec<f64> {
    let half = 0.5 * (b - a);
    let mut v = Vec::with_capacity(2 * SCAN_POINTS + 1);
    for i in 0..SCAN_POINTS {
        let t = -12.0 + 12.0 * i as f64 / SCAN_POINTS as f64;
        v.push(a + half * 10f64.powf(t));
    }
    for i in (0..SCAN_POINTS).rev() {
        let t = -12.0 + 12.0 * i as f64 / SCAN_POINTS as f64;
        v.push(b - half * 10f64.powf(t));
    }
    v.push(b);
    v
}

fn parallel_map<T: Send>(xs: &[f64], f: impl Fn(f64) -> T + Sync) -> Vec<T> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(16);
    let chunk = xs.len().div_ceil(workers).max(1);
    std::thread::scope(|scope| {
        let handles: Vec<_> = xs
            .chunks(chunk)
            .map(|c| {
                let f = &f;
                scope.spawn(move || c.iter().map(|&x| f(x)).collect::<Vec<T>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("scan worker panicked")).collect()
    })
}

/// Roots of `g(k) = m` for every integer `m` crossed between consecutive samples,
/// refined by bisection on the exact `g`.
fn integer_crossings(samples: &[(f64, f64)], g: impl Fn(f64) -> Option<f64>) -> Vec<(f64, i64)> {
    let mut out = Vec::new();
    for w in samples.windows(2) {
        let ((ka, ga), (kb, gb)) = (w[0], w[1]);
        if !(ga.is_finite() && gb.is_finite()) {
            continue;
        }
        let (lo, hi) = (ga.min(gb), ga.max(gb));
        // an exact hit on a sample belongs to the cell that ends there
        for m in (lo.floor() as i64)..=(hi.ceil() as i64) {
            let target = m as f64;
            let crosses = (ga - target) * (gb - target) < 0.0 || gb == target;
            if crosses {
                if let Some(k) = bisect(&g, ka, kb, ga - target, gb - target, target) {
                    out.push((k, m));
                }
            }
        }
    }
    out
}

fn bisect(g: &impl Fn(f64) -> Option<f64>, mut a: f64, mut b: f64, mut fa: f64, fb: f64, target: f64) -> Option<f64> {
    if fa == 0.0 {
        return None;
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    for _ in 0..100 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = g(mid)? - target;
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Some(0.5 * (a + b))
}

fn full_phase(k: f64) -> Option<f64> {
    phase_integral(k, 0.0, 1.0).ok()
}

fn x0_or_limit(k: f64) -> Option<f64> {
    boundary_offset_x0(k).ok()
}

/// Symmetric full-domain solutions: `phi(1)/eps = n +- X0` (`mu = 0`) and
/// `phi(1)/eps = n + 1/2 +- X0` (`mu = 1/2`), for `k` in `(k0, k1]`.
pub fn enumerate_symmetric(eps: f64) -> Result<Vec<AsymptoticSolution>> {
    check_eps(eps)?;
    let t = tables();
    let mut out = Vec::new();
    for sign in [1i8, -1] {
        // sign +1 means phi/eps = m/2 + X0, i.e. 2 phi/eps - 2 X0 = m
        let s = -2.0 * f64::from(sign);
        let samples: Vec<(f64, f64)> = t.full.iter().map(|&(k, p, x0)| (k, 2.0 * p / eps + s * x0)).collect();
        let g = |k: f64| Some(2.0 * full_phase(k)? / eps + s * x0_or_limit(k)?);
        for (k, m) in integer_crossings(&samples, g) {
            let (family, mu) = if m.rem_euclid(2) == 0 { (Family::SymMin, 0.0) } else { (Family::SymMax, 0.5) };
            out.push(AsymptoticSolution {
                family,
                k,
                mu,
                n: m.div_euclid(2),
                offset_sign: sign,
                boundary_layers: None,
                hand_off: full_domain_hand_off(k, eps),
                low_confidence: eps > LOW_CONFIDENCE_EPS,
            });
        }
    }
    out.sort_by(|a, b| a.k.total_cmp(&b.k));
    Ok(out)
}

/// Non-symmetric full-domain solutions: `phi(1)/eps` an integer (`mu = +-X0`) or a
/// half-integer (`mu = 1/2 +- X0`); each root gives a mirror pair.
pub fn enumerate_nonsymmetric(eps: f64) -> Result<Vec<AsymptoticSolution>> {
    check_eps(eps)?;
    let t = tables();
    let samples: Vec<(f64, f64)> = t.full.iter().map(|&(k, p, _)| (k, 2.0 * p / eps)).collect();
    let g = |k: f64| Some(2.0 * full_phase(k)? / eps);
    let mut out = Vec::new();
    for (k, m) in integer_crossings(&samples, g) {
        let x0 = boundary_offset_x0(k)?;
        let (base, n) = if m.rem_euclid(2) == 0 { (0.0, m / 2) } else { (0.5, (m + 1) / 2) };
        for (family, mu) in [(Family::AsymPlus, base + x0), (Family::AsymMinus, base - x0)] {
            out.push(AsymptoticSolution {
                family,
                k,
                mu: mu.rem_euclid(1.0),
                n,
                offset_sign: 0,
                boundary_layers: None,
                hand_off: full_domain_hand_off(k, eps),
                low_confidence: eps > LOW_CONFIDENCE_EPS,
            });
        }
    }
    Ok(out)
}

/// Solutions oscillating only inside `|x| < x*`: `phi(x*)/eps + mu = n` with
/// `mu` in `{0, 1/2}`; each root gives the four boundary-layer combinations.
pub fn enumerate_turning_point(eps: f64) -> Result<Vec<AsymptoticSolution>> {
    check_eps(eps)?;
    let t = tables();
    let samples: Vec<(f64, f64)> = t.turning.iter().map(|&(k, p)| (k, 2.0 * p / eps)).collect();
    let g = |k: f64| phase_to_edge(k).ok().map(|p| 2.0 * p / eps);
    let mut out = Vec::new();
    for (k, m) in integer_crossings(&samples, g) {
        if m < 1 {
            continue;
        }
        let (family, mu, n) = if m % 2 == 0 {
            (Family::TurningPointSymMin, 0.0, m / 2)
        } else {
            (Family::TurningPointSymMax, 0.5, (m + 1) / 2)
        };
        let x_star = turning_point(k).map_or(1.0, |tp| tp.x_star);
        for left in [LayerSign::Plus, LayerSign::Minus] {
            for right in [LayerSign::Plus, LayerSign::Minus] {
                out.push(AsymptoticSolution {
                    family,
                    k,
                    mu,
                    n,
                    offset_sign: 0,
                    boundary_layers: Some((left, right)),
                    hand_off: 1.0 - x_star < HAND_OFF_WIDTH * eps,
                    low_confidence: eps > LOW_CONFIDENCE_EPS,
                });
            }
        }
    }
    out.sort_by(|a, b| a.k.total_cmp(&b.k));
    Ok(out)
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(CarrierError::InvalidArgument(format!("eps must be positive, got {eps}")))
    }
}

/// For `k < k1` the homoclinic envelope is met at some `x* > 1` on the analytic
/// continuation of the slow variables; a root is unreliable when that point is within the boundary layer.
fn full_domain_hand_off(k: f64, eps: f64) -> bool {
    let edge = 1.0 + HAND_OFF_WIDTH * eps;
    envelope_action(edge) < k
}

/// `floor(2 phi(1)|k0 / eps)`: the most spikes a full-domain solution can carry.
pub fn max_spikes(eps: f64) -> usize {
    let p = phase_integral(k0(), 0.0, 1.0).expect("phase at k0");
    (2.0 * p / eps).floor().max(0.0) as usize
}

/// Sampled leading-order profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Profile {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Right-side minus left-side slope of `y` at `x*`, for turning-point solutions.
    pub gradient_jump: Option<f64>,
}

impl Profile {
    pub fn interior_maxima(&self) -> usize {
        count_interior_maxima(&self.y, MAXIMA_PROMINENCE)
    }
}

/// Evaluates a solution on the grid nodes.
pub fn build_profile(sol: &AsymptoticSolution, eps: f64, grid: Grid) -> Result<Profile> {
    let x = grid.nodes();
    let edge = turning_point(sol.k).map(|t| t.x_star);
    let limit = edge.unwrap_or(1.0);
    // cumulative phase at the non-negative nodes
    let centre = grid.centre();
    let mut phase = vec![0.0; x.len()];
    let mut acc = 0.0;
    for i in centre + 1..x.len() {
        let (a, b) = (x[i - 1], x[i]);
        if a >= limit {
            phase[i] = acc;
            continue;
        }
        acc += phase_integral(sol.k, a, b.min(limit))?;
        phase[i] = acc;
    }
    for i in 0..centre {
        phase[i] = -phase[x.len() - 1 - i];
    }
    let mut y = vec![0.0; x.len()];
    let mut orbits: Vec<Option<(CubicOrbit, f64)>> = vec![None; centre + 1];
    for (i, &xi) in x.iter().enumerate() {
        let j = i.abs_diff(centre);
        if xi.abs() > limit {
            let (l, r) = sol.boundary_layers.unwrap_or((LayerSign::Plus, LayerSign::Plus));
            y[i] =
                outer_solution(xi) + boundary_layer(xi, Side::Left, l, eps) + boundary_layer(xi, Side::Right, r, eps);
            continue;
        }
        if orbits[j].is_none() {
            orbits[j] = match orbit_from_k(sol.k, xi.abs()) {
                Ok(o) => Some((o, o.period_function().unwrap_or(0.0))),
                Err(CarrierError::TurningPoint { .. }) | Err(CarrierError::Domain(_)) if edge.is_some() => None,
                Err(e) => return Err(e),
            };
        }
        y[i] = match orbits[j] {
            Some((o, phi)) if phi > 0.0 => o.profile(phi, phase[i] / eps + sol.mu),
            _ => outer_solution(xi),
        };
    }
    if edge.is_none() {
        y[0] = 0.0;
        let n = y.len();
        y[n - 1] = 0.0;
    }
    let gradient_jump = edge.map(|xs| {
        let h = grid.h();
        let inner = (0..x.len()).rfind(|&i| x[i] > 0.0 && x[i] <= xs);
        let outer_slope = outer_slope(xs);
        match inner {
            Some(i) if i >= 1 => outer_slope - (y[i] - y[i - 1]) / h,
            _ => 0.0,
        }
    });
    Ok(Profile { x, y, gradient_jump })
}

fn outer_slope(x: f64) -> f64 {
    let x2 = x * x;
    2.0 * x - (2.0 * x2 * x - 2.0 * x) / (x2 * x2 - 2.0 * x2 + 2.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LargeEpsBranch {
    /// `y ~ eps^-2 (x^2 - 1) / 2`, no interior maximum.
    Small,
    /// `y ~ eps^2 y0(x)` with `y0'' + y0^2 = 0`, one interior maximum.
    Large,
}

/// `int_0^w dv / sqrt(1 - v^3)` with `v = 1 - s^2`, which removes the endpoint singularity.
fn cubic_root_integral(w: f64) -> f64 {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    let rule = RULE.get_or_init(|| GaussLegendre::new(40));
    let s_lo = (1.0 - w.clamp(0.0, 1.0)).sqrt();
    rule.integrate(
        &mut |s: f64| {
            let v = 1.0 - s * s;
            2.0 / (1.0 + v + v * v).sqrt()
        },
        s_lo,
        1.0,
    )
}

/// Peak of the large-`eps` profile `y0`, from `1 = sqrt(3 / (2 y_max)) int_0^1 dv / sqrt(1 - v^3)`.
pub fn large_branch_peak() -> f64 {
    let g = cubic_root_integral(1.0);
    1.5 * g * g
}

/// Leading-order profiles of the two solutions that persist as `eps` grows.
pub fn large_eps_profiles(eps: f64, which: LargeEpsBranch, grid: Grid) -> Vec<f64> {
    let x = grid.nodes();
    match which {
        LargeEpsBranch::Small => x.iter().map(|x| (x * x - 1.0) / (2.0 * eps * eps)).collect(),
        LargeEpsBranch::Large => {
            let ymax = large_branch_peak();
            let scale = (1.5 / ymax).sqrt();
            x.iter()
                .map(|&xi| {
                    // 1 - |x| = sqrt(3 / 2) ymax^(-1/2) int_0^(y / ymax) dv / sqrt(1 - v^3)
                    let target = 1.0 - xi.abs();
                    let (mut lo, mut hi) = (0.0, 1.0);
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        if scale * cubic_root_integral(mid) < target {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    eps * eps * ymax * 0.5 * (lo + hi)
                })
                .collect()
        }
    }
}

/// Lower and upper envelopes `Y1`, `Y2` of the oscillation at `x` for action `k`.
pub fn envelopes(k: f64, x: f64) -> Result<(f64, f64)> {
    let o = orbit_from_k(k, x)?;
    Ok((o.y1, o.y2))
}

/// Centre of the oscillation at `x`, the elliptic fixed point where `A = A2`.
pub fn oscillation_centre(x: f64) -> f64 {
    CubicOrbit::new(boundary_envelopes(x).1, x).map_or(f64::NAN, |o| o.y2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outer_solution_values() {
        assert!((outer_solution(0.0) + 1.0 + SQRT_2).abs() < 1e-15);
        assert!((outer_solution(1.0) + 1.0).abs() < 1e-15);
        for x in [0.2, 0.55, 0.9] {
            assert_eq!(outer_solution(x), outer_solution(-x));
            // root of 2(1 - x^2) y + y^2 = 1
            let y = outer_solution(x);
            assert!((2.0 * (1.0 - x * x) * y + y * y - 1.0).abs() < 1e-13);
            let h = 1e-6;
            let fd = (outer_solution(x + h) - outer_solution(x - h)) / (2.0 * h);
            assert!((outer_slope(x) - fd).abs() < 1e-7);
        }
    }

    #[test]
    fn boundary_layer_shapes() {
        let eps = 0.05;
        for side in [Side::Left, Side::Right] {
            let wall = if side == Side::Left { -1.0 } else { 1.0 };
            for sign in [LayerSign::Plus, LayerSign::Minus] {
                assert!((boundary_layer(wall, side, sign, eps) - 1.0).abs() < 1e-14);
            }
        }
        // increments into the domain from the right wall
        let xs: Vec<f64> = (0..400).map(|i| 1.0 - i as f64 * 1e-3).collect();
        let plus: Vec<f64> = xs.iter().map(|&x| boundary_layer(x, Side::Right, LayerSign::Plus, eps)).collect();
        assert!(plus.windows(2).all(|w| w[1] < w[0]));
        let minus: Vec<f64> = xs.iter().map(|&x| boundary_layer(x, Side::Right, LayerSign::Minus, eps)).collect();
        let (imax, vmax) = minus.iter().enumerate().fold((0, 0.0), |b, (i, v)| if *v > b.1 { (i, *v) } else { b });
        assert!((vmax - 3.0).abs() < 1e-4);
        let expected = SQRT_2 * (2.0f64 / 3.0).sqrt().atanh() * eps;
        assert!(((1.0 - xs[imax]) - expected).abs() < 1e-3);
    }

    #[test]
    fn interior_spike_values() {
        assert!((interior_spike(0.0) - (2.0 * SQRT_2 - 1.0)).abs() < 1e-14);
        assert!((interior_spike(60.0) + 1.0 + SQRT_2).abs() < 1e-12);
        assert_eq!(interior_spike(1.3), interior_spike(-1.3));
    }

    #[test]
    fn max_spikes_values() {
        assert_eq!(max_spikes(0.0335), 14);
        assert_eq!(max_spikes(0.01), 47);
        let p = 2.0 * phase_integral(k0(), 0.0, 1.0).unwrap();
        assert_eq!(max_spikes(p * (1.0 + 1e-9)), 0);
    }

    #[test]
    fn large_branch_peak_closed_form() {
        let g = |x: f64| statrs::function::gamma::gamma(x);
        let closed = 3.0 * std::f64::consts::PI * g(4.0 / 3.0).powi(2) / (2.0 * g(5.0 / 6.0).powi(2));
        assert!((large_branch_peak() - closed).abs() < 1e-12);
        assert!((closed - 2.949172).abs() < 1e-6);
    }

    #[test]
    fn large_eps_profiles_solve_their_equations() {
        let grid = Grid::new(4001).unwrap();
        let eps = 2.0;
        let small = large_eps_profiles(eps, LargeEpsBranch::Small, grid);
        assert!((small[grid.centre()] + 1.0 / (2.0 * eps * eps)).abs() < 1e-15);
        let large = large_eps_profiles(1.0, LargeEpsBranch::Large, grid);
        assert!((large[grid.centre()] - large_branch_peak()).abs() < 1e-9);
        assert!(large[0].abs() < 1e-12 && large[4000].abs() < 1e-12);
        let h = grid.h();
        let mut worst: f64 = 0.0;
        for i in 1..4000 {
            let d2 = (large[i - 1] - 2.0 * large[i] + large[i + 1]) / (h * h);
            worst = worst.max((d2 + large[i] * large[i]).abs());
        }
        assert!(worst < 1e-6 * large_branch_peak(), "{worst}");
    }
}
