//! Slowly modulated oscillations: the leading-order oscillator
//! `Phi^2 Y_XX + 2(1 - x^2) Y + Y^2 = 1` in the fast phase `X = phi(x) / eps`,
//! with first integral `Phi^2 Y_X^2 = c(A, x, Y)`,
//! `c = A + 2Y - 2(1 - x^2) Y^2 - (2/3) Y^3`, unit period, and the
//! adiabatic invariant `k = 2 int_{Y1}^{Y2} sqrt(c) dY` fixing `A(x)`.
//!
//! Integrals over the orbit use `y = Y1 + (Y2 - Y1) sin^2(theta)`, which
//! cancels the square-root endpoint singularities.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{CarrierError, Result};
use crate::quadrature::{integrate_adaptive, GaussLegendre};

const REL_TOL: f64 = 1e-13;

/// Amplitudes where two roots of `c` coalesce: `A1` (lower pair, homoclinic)
/// and `A2` (upper pair, centre).
pub fn boundary_envelopes(x: f64) -> (f64, f64) {
    let x2 = x * x;
    let poly = 5.0 - 9.0 * x2 + 6.0 * x2 * x2 - 2.0 * x2 * x2 * x2;
    let root = 2.0 * (2.0 - 2.0 * x2 + x2 * x2).powf(1.5);
    (2.0 / 3.0 * (poly + root), 2.0 / 3.0 * (poly - root))
}

/// The first-integral cubic `c(A, x, y)`.
pub fn cubic(a: f64, x: f64, y: f64) -> f64 {
    a + 2.0 * y - 2.0 * (1.0 - x * x) * y * y - 2.0 / 3.0 * y * y * y
}

/// Real roots `Y0 <= Y1 <= Y2` of `c(A, x, .)` with the orbit on `[Y1, Y2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicOrbit {
    pub a: f64,
    pub x: f64,
    pub y0: f64,
    pub y1: f64,
    pub y2: f64,
    /// `Y1 - Y0`, computed without cancellation.
    pub lower_gap: f64,
    /// `Y2 - Y1`, computed without cancellation.
    pub width: f64,
}

impl CubicOrbit {
    /// Trigonometric solution of the depressed cubic. Roots and gaps come from
    /// sine products so that near-coalescing pairs keep full relative accuracy.
    pub fn new(a: f64, x: f64) -> Result<Self> {
        let (a1, a2) = boundary_envelopes(x);
        let slack = 1e-12 * (a1.abs() + a2.abs());
        if a > a1 + slack || a < a2 - slack {
            return Err(CarrierError::Domain(format!("A = {a} outside [{a2}, {a1}] at x = {x}: complex roots")));
        }
        let s = 1.0 - x * x;
        let p = -3.0 - 3.0 * s * s;
        let q = 2.0 * s * s * s + 3.0 * s - 1.5 * a;
        // cos(theta) = (3q / 2p) sqrt(-3/p); sin(theta) from the discriminant (A1 - A)(A - A2)
        let cos_t = (3.0 * q / (2.0 * p)) * (-3.0 / p).sqrt();
        let disc = 60.75 * (a1 - a).max(0.0) * (a - a2).max(0.0);
        let sin_t = (disc / (-4.0 * p * p * p)).sqrt();
        let theta = sin_t.atan2(cos_t);
        let r = 2.0 * (-p / 3.0).sqrt();
        let sq3 = 3.0f64.sqrt();
        let y2 = r * (theta / 3.0).cos() - s;
        let y0 = r * ((theta + 2.0 * PI) / 3.0).cos() - s;
        let width = r * sq3 * ((theta + 2.0 * PI) / 3.0).sin();
        let lower_gap = r * sq3 * (theta / 3.0).sin();
        Ok(Self { a, x, y0, y1: y2 - width, y2, lower_gap, width })
    }

    pub fn roots(&self) -> (f64, f64, f64) {
        (self.y0, self.y1, self.y2)
    }

    /// `int_0^theta 2 / sqrt((2/3)(d + L sin^2 t)) dt`, the fast-phase time from
    /// `Y1` to `Y1 + L sin^2(theta)` in units of `1 / Phi`.
    pub fn phase_time(&self, theta: f64) -> f64 {
        let (d, l) = (self.lower_gap, self.width);
        integrate_adaptive(|t| 2.0 / (2.0 / 3.0 * (d + l * t.sin().powi(2))).sqrt(), 0.0, theta, REL_TOL)
    }

    /// `int_{Y1}^{Y2} c^{-1/2} dy` in closed form via the arithmetic-geometric mean.
    pub fn half_period(&self) -> f64 {
        let (mut a, mut b) = ((self.lower_gap + self.width).sqrt(), self.lower_gap.sqrt());
        while (a - b).abs() > 1e-15 * a {
            let next = 0.5 * (a + b);
            b = (a * b).sqrt();
            a = next;
        }
        (1.5f64).sqrt() * PI / a
    }

    /// Unit-period frequency `Phi = 1 / (2 int_{Y1}^{Y2} c^{-1/2} dy)`.
    pub fn period_function(&self) -> Result<f64> {
        if self.lower_gap <= 0.0 {
            return Err(CarrierError::TurningPoint { x: self.x });
        }
        Ok(0.5 / self.half_period())
    }

    /// `k = 2 int_{Y1}^{Y2} sqrt(c) dy`.
    pub fn action(&self) -> f64 {
        let (d, l) = (self.lower_gap, self.width);
        let rule = action_rule();
        let f = |t: f64| {
            let (s, c) = t.sin_cos();
            4.0 * l * l * s * s * c * c * (2.0 / 3.0 * (d + l * s * s)).sqrt()
        };
        rule.integrate(&mut { f }, 0.0, FRAC_PI_2)
    }

    pub fn y_at(&self, theta: f64) -> f64 {
        self.y1 + self.width * theta.sin().powi(2)
    }

    /// `theta` at which the orbit passes `y` (clamped to the orbit).
    pub fn theta_of(&self, y: f64) -> f64 {
        ((y - self.y1) / self.width).clamp(0.0, 1.0).sqrt().asin()
    }

    /// Profile value at fast phase `X` (period 1, `Y(0) = Y1`, `Y(1/2) = Y2`).
    pub fn profile(&self, phi: f64, x_phase: f64) -> f64 {
        let mut t = x_phase.rem_euclid(1.0);
        if t > 0.5 {
            t = 1.0 - t;
        }
        if t <= 0.0 {
            return self.y1;
        }
        if t >= 0.5 {
            return self.y2;
        }
        // invert phi * T(theta) = t by Newton with a bisection safeguard
        let (mut lo, mut hi) = (0.0, FRAC_PI_2);
        let mut theta = FRAC_PI_2 * 2.0 * t;
        let d = self.lower_gap;
        let l = self.width;
        for _ in 0..100 {
            let g = phi * self.phase_time(theta) - t;
            if g > 0.0 {
                hi = theta;
            } else {
                lo = theta;
            }
            let dg = phi * 2.0 / (2.0 / 3.0 * (d + l * theta.sin().powi(2))).sqrt();
            let mut next = theta - g / dg;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - theta).abs() < 1e-15 || hi - lo < 1e-15 {
                theta = next;
                break;
            }
            theta = next;
        }
        self.y_at(theta)
    }
}

fn panel_rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(24))
}

fn action_rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(64))
}

pub fn cubic_roots(a: f64, x: f64) -> Result<(f64, f64, f64)> {
    Ok(CubicOrbit::new(a, x)?.roots())
}

pub fn period_function(a: f64, x: f64) -> Result<f64> {
    let (a1, _) = boundary_envelopes(x);
    if a >= a1 {
        return Err(CarrierError::TurningPoint { x });
    }
    CubicOrbit::new(a, x)?.period_function()
}

pub fn action_integral(a: f64, x: f64) -> Result<f64> {
    Ok(CubicOrbit::new(a, x)?.action())
}

/// Action on the homoclinic envelope `A = A1(x)`; the largest `k` admitting
/// an oscillation at `x`.
pub fn envelope_action(x: f64) -> f64 {
    let (a1, _) = boundary_envelopes(x);
    CubicOrbit::new(a1, x).map(|o| o.action()).unwrap_or(f64::NAN)
}

/// The amplitude with `action_integral(A, x) = k`.
pub fn amplitude_from_k(k: f64, x: f64) -> Result<f64> {
    orbit_from_k(k, x).map(|o| o.a)
}

/// Orbit at `x` whose action equals `k`, by safeguarded Newton on `A`
/// (`dk/dA = 1 / (2 Phi)`).
pub fn orbit_from_k(k: f64, x: f64) -> Result<CubicOrbit> {
    let (a1, a2) = boundary_envelopes(x);
    if !(k > 0.0) {
        return Err(CarrierError::Domain(format!("action must be positive, got {k}")));
    }
    let top = CubicOrbit::new(a1, x)?;
    let k_top = top.action();
    if k > k_top * (1.0 + 1e-14) {
        return Err(CarrierError::Domain(format!(
            "k = {k} exceeds the largest action {k_top} at x = {x} (beyond the turning point)"
        )));
    }
    if k >= k_top {
        return Ok(top);
    }
    let (mut lo, mut hi) = (a2, a1);
    let mut a = a2 + (a1 - a2) * (k / k_top).clamp(0.05, 0.95);
    for _ in 0..200 {
        let orbit = CubicOrbit::new(a, x)?;
        let g = orbit.action() - k;
        if g.abs() <= 1e-14 * k {
            return Ok(orbit);
        }
        if g > 0.0 {
            hi = a;
        } else {
            lo = a;
        }
        let dk = orbit.half_period();
        let mut next = a - g / dk;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - a).abs() <= 1e-15 * (1.0 + a.abs()) || hi - lo <= 1e-15 * (1.0 + a.abs()) {
            return CubicOrbit::new(next, x);
        }
        a = next;
    }
    Err(CarrierError::NoConvergence(format!("amplitude for k = {k} at x = {x}")))
}

/// `Phi(A(x), x)` along the branch of constant action `k`.
pub fn slow_frequency(k: f64, x: f64) -> Result<f64> {
    orbit_from_k(k, x)?.period_function()
}

/// `phi(x) = int_0^x Phi(A(s), s) ds`, odd in `x`.
pub fn phase(k: f64, x: f64) -> Result<f64> {
    if let Some(tp) = turning_point(k) {
        if x.abs() > tp.x_star {
            return Err(CarrierError::TurningPoint { x: tp.x_star });
        }
    } else if k >= k_max() {
        return Err(CarrierError::TurningPoint { x: 0.0 });
    }
    Ok(x.signum() * phase_integral(k, 0.0, x.abs())?)
}

/// Largest `-ln(edge - x)` resolved by [`phase_integral`]; beyond it the integrand is below rounding.
const LOG_DEPTH: f64 = 40.0;

/// `int_a^b Phi(A(s), s) ds` for `0 <= a <= b`, clamped to the oscillatory region.
///
/// `Phi` vanishes like `1 / ln(1 / (edge - x))` at a turning point, where it is
/// also ill-conditioned in `k`. In `u = -ln(edge - x)` the integrand is smooth,
/// so unit panels of a fixed Gauss rule converge without chasing rounding noise.
pub fn phase_integral(k: f64, a: f64, b: f64) -> Result<f64> {
    let edge = turning_point(k).map_or(1.0, |t| t.x_star);
    let b = b.min(edge);
    if !(a >= 0.0) || a >= b {
        return Ok(0.0);
    }
    let ua = -(edge - a).ln();
    let ub = if edge - b > 0.0 { (-(edge - b).ln()).min(LOG_DEPTH) } else { LOG_DEPTH };
    if ua >= ub {
        return Ok(0.0);
    }
    let rule = panel_rule();
    let mut err = None;
    let mut f = |u: f64| {
        let gap = (-u).exp();
        match slow_frequency(k, edge - gap) {
            Ok(p) => p * gap,
            Err(CarrierError::TurningPoint { .. }) => 0.0,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        }
    };
    // panels of unit width up to u = 2, then doubling: the integrand varies on the scale of u
    let mut total = 0.0;
    let mut lo = ua;
    while lo < ub {
        let hi = if lo < 2.0 { (lo.floor() + 1.0).min(ub) } else { (2.0 * lo).min(ub) };
        total += rule.integrate(&mut f, lo, hi);
        lo = hi;
    }
    match err {
        Some(e) => Err(e),
        None => Ok(total),
    }
}

/// Phase accumulated from the centre to the edge of the oscillatory region:
/// `phi(1)` without a turning point, `phi(x*)` with one.
pub fn phase_to_edge(k: f64) -> Result<f64> {
    match turning_point(k) {
        Some(tp) => phase_integral(k, 0.0, tp.x_star),
        None if k >= k_max() => Ok(0.0),
        None => phase_integral(k, 0.0, 1.0),
    }
}

/// Leading-order oscillation `Y(X, x)` on the branch of action `k`.
pub fn profile_y(x_phase: f64, x: f64, k: f64) -> Result<f64> {
    let orbit = orbit_from_k(k, x)?;
    let phi = orbit.period_function()?;
    Ok(orbit.profile(phi, x_phase))
}

/// Smaller zero `X0` of the unit-cell profile at `x = 1`.
/// Tends to 1/2 as `k` approaches `k1`, where the period diverges.
pub fn boundary_offset_x0(k: f64) -> Result<f64> {
    let k0 = k0();
    if k < k0 * (1.0 - 1e-13) {
        return Err(CarrierError::Domain(format!("no boundary zero for k = {k} < k0 = {k0}")));
    }
    if k >= k1() {
        return Ok(0.5);
    }
    let orbit = orbit_from_k(k, 1.0)?;
    if orbit.y1 >= 0.0 {
        return Ok(0.0);
    }
    let phi = orbit.period_function()?;
    Ok(phi * orbit.phase_time(orbit.theta_of(0.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurningPointInfo {
    pub x_star: f64,
    pub a_at_star: f64,
}

/// Turning point `x*` where the branch of action `k` meets the homoclinic
/// envelope. `None` for `k <= k1` (oscillation reaches the boundary) and for
/// `k >= k_max` (no oscillatory region at all).
pub fn turning_point(k: f64) -> Option<TurningPointInfo> {
    if k <= k1() || k >= k_max() {
        return None;
    }
    // envelope action decreases from k_max at x = 0 to k1 at x = 1
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if envelope_action(mid) > k {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let x_star = 0.5 * (lo + hi);
    Some(TurningPointInfo { x_star, a_at_star: boundary_envelopes(x_star).0 })
}

/// Action whose branch has `A(1) = 0`: the boundary zero sits at the bottom of the orbit.
pub fn k0() -> f64 {
    static V: OnceLock<f64> = OnceLock::new();
    *V.get_or_init(|| action_integral(0.0, 1.0).expect("orbit at A = 0, x = 1"))
}

/// Action whose branch reaches the homoclinic envelope exactly at `x = 1`.
pub fn k1() -> f64 {
    static V: OnceLock<f64> = OnceLock::new();
    *V.get_or_init(|| envelope_action(1.0))
}

/// Action of the homoclinic orbit at `x = 0`; larger actions have no oscillation anywhere.
pub fn k_max() -> f64 {
    static V: OnceLock<f64> = OnceLock::new();
    *V.get_or_init(|| envelope_action(0.0))
}

/// Slow variables of one branch of constant action, tabulated on nodes in `[0, edge]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KuzmakBranch {
    pub k: f64,
    pub x_star: Option<f64>,
    pub nodes: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub phase: Vec<f64>,
}

impl KuzmakBranch {
    /// Tabulates `A(x)` and `phi(x)` at the given non-negative increasing nodes.
    /// Nodes beyond a turning point are dropped.
    pub fn tabulate(k: f64, nodes: &[f64]) -> Result<Self> {
        let x_star = turning_point(k).map(|t| t.x_star);
        if x_star.is_none() && k >= k_max() {
            return Err(CarrierError::Domain(format!("no oscillatory region for k = {k}")));
        }
        let edge = x_star.unwrap_or(1.0);
        let kept: Vec<f64> = nodes.iter().copied().filter(|x| *x >= 0.0 && *x <= edge).collect();
        let mut amplitude = Vec::with_capacity(kept.len());
        let mut phase = Vec::with_capacity(kept.len());
        let mut acc = 0.0;
        let mut prev = 0.0;
        for &x in &kept {
            amplitude.push(amplitude_from_k(k, x)?);
            acc += phase_integral(k, prev, x)?;
            prev = x;
            phase.push(acc);
        }
        Ok(Self { k, x_star, nodes: kept, amplitude, phase })
    }
}

/// Central or one-sided difference with one Richardson step.
pub(crate) fn richardson_derivative(f: impl Fn(f64) -> Result<f64>, k: f64, h: f64, forward: bool) -> Result<f64> {
    let d = |h: f64| -> Result<f64> {
        if forward {
            Ok((f(k + h)? - f(k)?) / h)
        } else {
            Ok((f(k + h)? - f(k - h)?) / (2.0 * h))
        }
    };
    let (a, b) = (d(h)?, d(0.5 * h)?);
    Ok(if forward { 2.0 * b - a } else { (4.0 * b - a) / 3.0 })
}

/// `d phi(1) / dk`.
pub fn phase_edge_derivative(k: f64) -> Result<f64> {
    let forward = k - 1e-5 * k < k0();
    richardson_derivative(|k| phase_integral(k, 0.0, 1.0), k, 1e-5 * k, forward)
}

/// `d X0 / dk` for `k0 < k < k1`.
pub fn x0_derivative(k: f64) -> Result<f64> {
    let h = (1e-5 * k).min(0.25 * (k - k0()));
    richardson_derivative(boundary_offset_x0, k, h, false)
}

/// `d X0^2 / dk` at `k0`, from the right since `X0` is undefined below `k0`.
pub fn x0_squared_slope_at_k0() -> Result<f64> {
    let k0 = k0();
    richardson_derivative(|k| boundary_offset_x0(k).map(|v| v * v), k0, 1e-5 * k0, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Complete elliptic integral of the first kind by the arithmetic-geometric mean.
    fn ellip_k(m: f64) -> f64 {
        let (mut a, mut b) = (1.0, (1.0 - m).sqrt());
        for _ in 0..60 {
            let (an, bn) = (0.5 * (a + b), (a * b).sqrt());
            a = an;
            b = bn;
        }
        PI / (2.0 * a)
    }

    /// Carlson's symmetric integral R_F.
    fn carlson_rf(mut x: f64, mut y: f64, mut z: f64) -> f64 {
        for _ in 0..100 {
            let l = (x * y).sqrt() + (y * z).sqrt() + (z * x).sqrt();
            x = 0.25 * (x + l);
            y = 0.25 * (y + l);
            z = 0.25 * (z + l);
        }
        1.0 / ((x + y + z) / 3.0).sqrt()
    }

    /// Incomplete elliptic integral F(psi | m).
    fn ellip_f(psi: f64, m: f64) -> f64 {
        let (s, c) = psi.sin_cos();
        s * carlson_rf(c * c, 1.0 - m * s * s, 1.0)
    }

    fn phi_closed_form(a: f64, x: f64) -> f64 {
        let o = CubicOrbit::new(a, x).unwrap();
        let m = o.width / (o.y2 - o.y0);
        (o.y2 - o.y0).sqrt() / (2.0 * 6f64.sqrt() * ellip_k(m))
    }

    fn gamma(x: f64) -> f64 {
        statrs::function::gamma::gamma(x)
    }

    #[test]
    fn envelopes_closed_form_values() {
        let (a1, a2) = boundary_envelopes(1.0);
        assert!((a1 - 4.0 / 3.0).abs() < 1e-14 && (a2 + 4.0 / 3.0).abs() < 1e-14);
        let (a1, _) = boundary_envelopes(0.0);
        assert!((a1 - 2.0 / 3.0 * (5.0 + 2.0 * 2f64.powf(1.5))).abs() < 1e-13);
        assert!((a1 - 7.10457).abs() < 1e-5);
        for x in [0.13, 0.5, 0.91] {
            assert_eq!(boundary_envelopes(x), boundary_envelopes(-x));
        }
    }

    #[test]
    fn roots_of_degenerate_cubic() {
        let (y0, y1, y2) = cubic_roots(0.0, 1.0).unwrap();
        let s3 = 3f64.sqrt();
        assert!((y0 + s3).abs() < 1e-14 && y1.abs() < 1e-14 && (y2 - s3).abs() < 1e-14);
    }

    #[test]
    fn roots_coalesce_on_envelope() {
        let (a1, _) = boundary_envelopes(0.5);
        let o = CubicOrbit::new(a1, 0.5).unwrap();
        assert!(o.lower_gap.abs() < 1e-7, "{}", o.lower_gap);
        assert!((o.y1 - o.y0).abs() < 1e-7);
    }

    #[test]
    fn roots_match_companion_eigenvalues() {
        for &(a, x) in &[(2.0, 0.0), (0.3, 0.7), (-1.0, 0.9), (5.0, 0.2)] {
            let (y0, y1, y2) = cubic_roots(a, x).unwrap();
            let s = 1.0 - x * x;
            // monic: y^3 + 3s y^2 - 3y - 1.5A
            let comp = nalgebra::Matrix3::new(-3.0 * s, 3.0, 1.5 * a, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
            let ev = comp.complex_eigenvalues();
            let mut re: Vec<f64> = ev.iter().map(|c| c.re).collect();
            re.sort_by(f64::total_cmp);
            assert!((re[0] - y0).abs() < 1e-10 && (re[1] - y1).abs() < 1e-10 && (re[2] - y2).abs() < 1e-10);
            for y in [y0, y1, y2] {
                assert!(cubic(a, x, y).abs() < 1e-12 * (1.0 + a.abs()));
            }
        }
        assert!(cubic_roots(9.0, 0.0).is_err());
        assert!(cubic_roots(-3.0, 1.0).is_err());
    }

    #[test]
    fn period_function_matches_elliptic_closed_form() {
        for &(a, x) in &[(0.0, 1.0), (2.0, 0.0), (1.0, 0.5), (4.0, 0.3)] {
            let p = period_function(a, x).unwrap();
            let e = phi_closed_form(a, x);
            assert!((p / e - 1.0).abs() < 1e-10, "A={a} x={x}: {p} vs {e}");
        }
        let (a1, _) = boundary_envelopes(0.5);
        let p = period_function(a1 - 1e-8, 0.5).unwrap();
        assert!(p < period_function(a1 - 1e-2, 0.5).unwrap());
        assert!((p / phi_closed_form(a1 - 1e-8, 0.5) - 1.0).abs() < 1e-8);
        assert!(period_function(a1, 0.5).is_err());
    }

    #[test]
    fn closed_form_half_period_matches_quadrature() {
        for &(a, x) in &[(0.0, 1.0), (2.0, 0.0), (1.0, 0.5), (7.0, 0.0)] {
            let o = CubicOrbit::new(a, x).unwrap();
            assert!((o.half_period() / o.phase_time(FRAC_PI_2) - 1.0).abs() < 1e-11, "A={a} x={x}");
        }
    }

    #[test]
    fn period_function_harmonic_limit() {
        let (_, a2) = boundary_envelopes(0.0);
        let p = period_function(a2 + 1e-9, 0.0).unwrap();
        assert!((p - 2f64.powf(0.75) / (2.0 * PI)).abs() < 1e-6);
    }

    #[test]
    fn period_function_against_midpoint_quadrature() {
        // raw integral of c^{-1/2} over (Y1, Y2), substituting y = Y1 + L (1 - cos u) / 2
        let o = CubicOrbit::new(0.0, 1.0).unwrap();
        let n = 1_000_000;
        let mut s = 0.0;
        for i in 0..n {
            let u = PI * (i as f64 + 0.5) / n as f64;
            let y = o.y1 + o.width * 0.5 * (1.0 - u.cos());
            let dy = o.width * 0.5 * u.sin() * PI / n as f64;
            s += dy / cubic(0.0, 1.0, y).sqrt();
        }
        assert!((period_function(0.0, 1.0).unwrap() - 0.5 / s).abs() < 1e-6);
    }

    #[test]
    fn action_constants() {
        let k0_closed = 16.0 * 3f64.powf(0.75) * PI.powf(1.5) / (5.0 * gamma(0.25).powi(2));
        assert!((k0() - k0_closed).abs() < 1e-12);
        assert!((k0() - 3.08997).abs() < 1e-5);
        // homoclinic at x = 1: roots (-1, -1, 2), action (8/15) sqrt(2/3) 3^(5/2)
        let k1_closed = 8.0 / 15.0 * (2.0f64 / 3.0).sqrt() * 3f64.powf(2.5);
        assert!((k1() - k1_closed).abs() < 1e-12);
        assert!((k1() - 6.78823).abs() < 1e-5);
        let (_, a2) = boundary_envelopes(0.4);
        assert!(action_integral(a2, 0.4).unwrap().abs() < 1e-12);
    }

    #[test]
    fn amplitude_inverts_action() {
        assert!(amplitude_from_k(k0(), 1.0).unwrap().abs() < 1e-8);
        assert!((amplitude_from_k(k1(), 1.0).unwrap() - 4.0 / 3.0).abs() < 1e-8);
        let a_lo = amplitude_from_k(1.0, 0.0).unwrap();
        let a_mid = amplitude_from_k(5.0, 0.0).unwrap();
        let a_hi = amplitude_from_k(k1(), 0.0).unwrap();
        assert!(a_lo < a_mid && a_mid < a_hi);
        assert!(amplitude_from_k(7.0, 1.0).is_err());
    }

    #[test]
    fn adiabatic_invariance_along_branch() {
        for k in [1.0, 3.0, 5.0] {
            for i in 0..50 {
                let x = -1.0 + 2.0 * i as f64 / 49.0;
                let a = amplitude_from_k(k, x).unwrap();
                let back = action_integral(a, x).unwrap();
                assert!((back - k).abs() < 1e-8, "k={k} x={x}");
            }
        }
    }

    #[test]
    fn phase_constants() {
        let p0 = 2.0 * phase(k0(), 1.0).unwrap();
        assert!((p0 - 0.472537).abs() < 1e-6, "{p0}");
        let p1 = 2.0 * phase(k1(), 1.0).unwrap();
        assert!((p1 - 0.4156985).abs() < 1e-6, "{p1}");
        assert_eq!(phase(5.0, 0.0).unwrap(), 0.0);
        assert!((phase(5.0, -0.3).unwrap() + phase(5.0, 0.3).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn phase_integral_matches_direct_quadrature() {
        for k in [1.0, 3.0, 5.0] {
            let direct = integrate_adaptive(|s| slow_frequency(k, s).unwrap(), 0.0, 1.0, 1e-11);
            assert!((phase_integral(k, 0.0, 1.0).unwrap() - direct).abs() < 1e-10, "k={k}");
            let split = phase_integral(k, 0.0, 0.4).unwrap() + phase_integral(k, 0.4, 1.0).unwrap();
            assert!((split - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn profile_turning_values_and_period() {
        let k = 5.0;
        for x in [0.0, 0.4, 0.8] {
            let o = orbit_from_k(k, x).unwrap();
            assert!((profile_y(0.0, x, k).unwrap() - o.y1).abs() < 1e-12);
            assert!((profile_y(0.5, x, k).unwrap() - o.y2).abs() < 1e-12);
            for t in [0.1, 0.37, 0.8] {
                let a = profile_y(t, x, k).unwrap();
                assert!((profile_y(t + 1.0, x, k).unwrap() - a).abs() < 1e-8);
                assert!(a >= o.y1 - 1e-12 && a <= o.y2 + 1e-12);
            }
        }
    }

    #[test]
    fn profile_matches_elliptic_inversion() {
        // X(theta) = Phi sqrt(6) F(theta | m') / sqrt(Y2 - Y0) in Jacobi form
        let k = 5.0;
        let x = 0.0;
        let o = orbit_from_k(k, x).unwrap();
        let phi = o.period_function().unwrap();
        let m = o.width / (o.y2 - o.y0);
        let y = profile_y(0.25, x, k).unwrap();
        let theta = o.theta_of(y);
        // the substitution gives int dtheta / sqrt(d + L sin^2) = F(theta | -L/d) / sqrt(d)
        let _ = m;
        let t = phi * 6f64.sqrt() * ellip_f(theta, -o.width / o.lower_gap) / o.lower_gap.sqrt();
        assert!((t - 0.25).abs() < 1e-9, "{t}");
    }

    #[test]
    fn first_integral_residual() {
        let k = 5.0;
        for x in [0.0, 0.4, 0.8] {
            let o = orbit_from_k(k, x).unwrap();
            let phi = o.period_function().unwrap();
            let h = 1e-5;
            for i in 0..100 {
                let t = 0.005 + 0.99 * i as f64 / 100.0;
                let y = o.profile(phi, t);
                let dy = (o.profile(phi, t + h) - o.profile(phi, t - h)) / (2.0 * h);
                let r = phi * phi * dy * dy - cubic(o.a, x, y);
                assert!(r.abs() < 1e-6, "x={x} t={t}: {r}");
            }
        }
    }

    #[test]
    fn x0_limits_and_zero() {
        assert!(boundary_offset_x0(k0()).unwrap().abs() < 1e-7);
        assert!(boundary_offset_x0(k0() * 0.99).is_err());
        let k = 5.0;
        let x0 = boundary_offset_x0(k).unwrap();
        assert!(x0 > 0.0 && x0 < 0.5);
        assert!(profile_y(x0, 1.0, k).unwrap().abs() < 1e-9);
        assert!(profile_y(1.0 - x0, 1.0, k).unwrap().abs() < 1e-9);
        // elliptic closed form: X0 = F(psi | m) / (2 K(m)), sin^2 psi = (Y2 - Y0)(-Y1) / ((Y2 - Y1)(-Y0))
        let o = orbit_from_k(k, 1.0).unwrap();
        let m = o.width / (o.y2 - o.y0);
        let s2 = (o.y2 - o.y0) * (-o.y1) / (o.width * (-o.y0));
        let psi = s2.sqrt().asin();
        let expected = ellip_f(psi, m) / (2.0 * ellip_k(m));
        assert!((x0 - expected).abs() < 1e-9, "{x0} vs {expected}");
        let near = boundary_offset_x0(k1() - 1e-6).unwrap();
        assert!(near > 0.4 && near < 0.5);
    }

    #[test]
    fn turning_point_defining_equation() {
        assert!(turning_point(k1() - 1e-3).is_none());
        assert!(turning_point(5.0).is_none());
        let tp = turning_point(10.0).unwrap();
        assert!(tp.x_star > 0.0 && tp.x_star < 1.0);
        assert!((envelope_action(tp.x_star) - 10.0).abs() < 1e-9);
        let edge = turning_point(k1() * (1.0 + 1e-12)).unwrap();
        assert!((edge.x_star - 1.0).abs() < 1e-6);
        assert!((k_max() - envelope_action(0.0)).abs() < 1e-15);
    }

    #[test]
    fn envelope_action_is_monotone() {
        let mut prev = envelope_action(0.0);
        for i in 1..=2000 {
            let v = envelope_action(i as f64 / 2000.0);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn frequency_vanishes_logarithmically_at_turning_point() {
        let k = 10.0;
        let xs = turning_point(k).unwrap().x_star;
        let r: Vec<f64> =
            [1e-3, 1e-4, 1e-5].iter().map(|d: &f64| slow_frequency(k, xs - d).unwrap() * d.ln()).collect();
        assert!(r.iter().all(|v| *v != 0.0));
        assert!(((r[2] - r[1]) / r[1]).abs() < 0.15, "{r:?}");
    }

    #[test]
    fn tabulated_branch_is_consistent() {
        let nodes: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let b = KuzmakBranch::tabulate(5.0, &nodes).unwrap();
        assert_eq!(b.nodes.len(), 21);
        assert!((b.phase[20] - phase(5.0, 1.0).unwrap()).abs() < 1e-12);
        let t = KuzmakBranch::tabulate(10.0, &nodes).unwrap();
        assert!(t.nodes.len() < 21);
        for (x, a) in t.nodes.iter().zip(&t.amplitude) {
            assert!((amplitude_from_k(10.0, -x).unwrap() - a).abs() < 1e-10);
        }
    }

    #[test]
    fn x0_slope_at_k0_matches_closed_form() {
        // X0^2 ~ 2 Phi(0,1)^3 (k - k0) near k0
        let p = period_function(0.0, 1.0).unwrap();
        let a = x0_squared_slope_at_k0().unwrap();
        assert!((a - 2.0 * p.powi(3)).abs() < 1e-4 * a, "{a} vs {}", 2.0 * p.powi(3));
    }

    #[test]
    fn profile_matches_rk4_integration() {
        // Phi^2 Y'' = 1 - 2(1 - x^2) Y - Y^2 from the minimum Y(0) = Y1, Y'(0) = 0
        let (k, x) = (5.0, 0.0);
        let orbit = orbit_from_k(k, x).unwrap();
        let phi = orbit.period_function().unwrap();
        let f = |y: f64| (1.0 - 2.0 * (1.0 - x * x) * y - y * y) / (phi * phi);
        let steps = 20_000;
        let h = 0.25 / steps as f64;
        let (mut y, mut v) = (orbit.y1, 0.0);
        for _ in 0..steps {
            let (k1y, k1v) = (v, f(y));
            let (k2y, k2v) = (v + 0.5 * h * k1v, f(y + 0.5 * h * k1y));
            let (k3y, k3v) = (v + 0.5 * h * k2v, f(y + 0.5 * h * k2y));
            let (k4y, k4v) = (v + h * k3v, f(y + h * k3y));
            y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
            v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        }
        let p = profile_y(0.25, x, k).unwrap();
        assert!((p - y).abs() < 1e-9, "{p} vs {y}");
    }
}
