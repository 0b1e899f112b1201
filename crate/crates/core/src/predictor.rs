//! Fold and pitchfork predictions from the slowly modulated oscillation:
//! exact tangency and nose conditions plus their large-`n` closed forms.

use serde::{Deserialize, Serialize};

use crate::continuation::EventKind;
use crate::error::{CarrierError, Result};
use crate::kuzmak::{
    boundary_offset_x0, k0, k1, period_function, phase_edge_derivative, phase_integral, x0_derivative,
    x0_squared_slope_at_k0,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedBifurcation {
    pub kind: EventKind,
    pub n: u32,
    /// From the nonlinear conditions; `None` where no tangency exists.
    pub eps_exact: Option<f64>,
    pub eps_asym: f64,
    pub k_at_bif: f64,
}

/// Constants of the large-`n` expansions, all recomputed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticConstants {
    /// `2 phi(1)` at `k0`.
    pub pitchfork_numerator: f64,
    /// `dphi(1)/dk` at `k0`.
    pub phase_slope: f64,
    /// `dX0^2/dk` at `k0`.
    pub x0_squared_slope: f64,
    /// `c` in `eps_fold ~ 2 phi(1) / (n - c / n)`.
    pub fold_coefficient: f64,
}

impl AsymptoticConstants {
    /// Fold-to-pitchfork separation `gap_coefficient / n^3` as `n` grows.
    pub fn gap_coefficient(&self) -> f64 {
        self.pitchfork_numerator * self.fold_coefficient
    }

    /// Relative separation `gap / eps` behaves as `proportion_coefficient * eps^2`.
    pub fn proportion_coefficient(&self) -> f64 {
        self.fold_coefficient / (self.pitchfork_numerator * self.pitchfork_numerator)
    }
}

pub fn constants() -> Result<AsymptoticConstants> {
    let k0 = k0();
    let phi = phase_integral(k0, 0.0, 1.0)?;
    let slope = phase_edge_derivative(k0)?;
    let a = x0_squared_slope_at_k0()?;
    Ok(AsymptoticConstants {
        pitchfork_numerator: 2.0 * phi,
        phase_slope: slope,
        x0_squared_slope: a,
        fold_coefficient: -a * phi / slope,
    })
}

/// `dX0^2/dk` at `k0` in closed form, `2 Phi(0, 1)^3`.
pub fn x0_squared_slope_closed_form() -> Result<f64> {
    Ok(2.0 * period_function(0.0, 1.0)?.powi(3))
}

/// Nose condition `X0 = 0`, `2 phi(1) / eps = n`, which holds at `k = k0`.
pub fn predict_pitchfork(n: u32) -> Result<PredictedBifurcation> {
    if n < 1 {
        return Err(CarrierError::InvalidArgument("pitchfork index starts at 1".into()));
    }
    let eps = 2.0 * phase_integral(k0(), 0.0, 1.0)? / f64::from(n);
    Ok(PredictedBifurcation { kind: EventKind::Pitchfork, n, eps_exact: Some(eps), eps_asym: eps, k_at_bif: k0() })
}

/// `2 phi(1) / (n - c / n)`.
pub fn fold_asymptotic(n: u32) -> Result<f64> {
    let c = constants()?;
    let n = f64::from(n);
    Ok(c.pitchfork_numerator / (n - c.fold_coefficient / n))
}

/// Tangency of `2 phi(1) / eps` with `n - 2 X0` in `k`. Eliminating `eps`
/// leaves `G(k) = phi1'(k) (n - 2 X0) + 2 phi1 X0'(k) = 0`, solved by bracketing
/// from `k0`, where `X0'` is unbounded and `G > 0`.
pub fn predict_fold(n: u32) -> Result<PredictedBifurcation> {
    if n < 2 {
        return Err(CarrierError::InvalidArgument("fold index starts at 2".into()));
    }
    let eps_asym = fold_asymptotic(n)?;
    let nf = f64::from(n);
    let g = |k: f64| -> Result<f64> {
        let phi = phase_integral(k, 0.0, 1.0)?;
        Ok(phase_edge_derivative(k)? * (nf - 2.0 * boundary_offset_x0(k)?) + 2.0 * phi * x0_derivative(k)?)
    };
    let (k0, k1) = (k0(), k1());
    let span = k1 - k0;
    let mut prev = (k0 + 1e-4 * span, g(k0 + 1e-4 * span)?);
    let mut bracket = None;
    for i in 1..=80 {
        // geometric in k - k0 up to 0.9 of the interval
        let k = k0 + span * 1e-4 * (0.9f64 / 1e-4).powf(f64::from(i) / 80.0);
        let v = g(k)?;
        if v.signum() != prev.1.signum() {
            bracket = Some((prev, (k, v)));
            break;
        }
        prev = (k, v);
    }
    let mut out = PredictedBifurcation { kind: EventKind::Fold, n, eps_exact: None, eps_asym, k_at_bif: f64::NAN };
    let Some(((mut a, fa), (mut b, _))) = bracket else {
        return Err(CarrierError::NoConvergence(format!("no tangency for n = {n}; asymptotic estimate {eps_asym}")));
    };
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        if g(m)?.signum() == fa.signum() {
            a = m;
        } else {
            b = m;
        }
        if b - a < 1e-12 * k0 {
            break;
        }
    }
    let k = 0.5 * (a + b);
    out.k_at_bif = k;
    out.eps_exact = Some(2.0 * phase_integral(k, 0.0, 1.0)? / (nf - 2.0 * boundary_offset_x0(k)?));
    Ok(out)
}

/// Fold-to-pitchfork separation at `n` and the recomputed relative-gap coefficient.
/// Uses the exact fold where a tangency exists, else its closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub n: u32,
    pub gap: f64,
    /// `gap_coefficient / n^3`.
    pub gap_asym: f64,
    /// `gap / eps_pitchfork^3` at this `n`.
    pub proportion: f64,
    pub proportion_coefficient: f64,
}

pub fn gap_and_proportion(n: u32) -> Result<GapReport> {
    let c = constants()?;
    let pitch = predict_pitchfork(n)?.eps_asym;
    let fold = match predict_fold(n) {
        Ok(p) => p.eps_exact.unwrap_or(p.eps_asym),
        Err(CarrierError::NoConvergence(_)) => fold_asymptotic(n)?,
        Err(e) => return Err(e),
    };
    let gap = fold - pitch;
    Ok(GapReport {
        n,
        gap,
        gap_asym: c.gap_coefficient() / f64::from(n).powi(3),
        proportion: gap / pitch.powi(3),
        proportion_coefficient: c.proportion_coefficient(),
    })
}

/// `1 - (2 phi(1)|k1) / (2 phi(1)|k0)`: the share of spike counts that only occur with turning points.
pub fn turning_point_share() -> Result<f64> {
    Ok(1.0 - phase_integral(k1(), 0.0, 1.0)? / phase_integral(k0(), 0.0, 1.0)?)
}
