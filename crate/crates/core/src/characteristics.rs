//! Eigenstructure of the transformed system, Riemann-variable algebra,
//! and backward characteristic-foot tracing.

use thiserror::Error;

use crate::gas::{euler_from_char, CharState, EulerState, GasConstants, GasError};

#[derive(Debug, Error)]
pub enum CharError {
    #[error("sonic degeneracy: u = {u}, c = {c} (Mach {mach})")]
    SonicDegeneracy { u: f64, c: f64, mach: f64 },
    #[error("pressure coupling weight must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("characteristic foot {foot} outside region [{lo}, {hi}]")]
    FootOutsideRegion { foot: f64, lo: f64, hi: f64 },
    #[error(transparent)]
    Gas(#[from] GasError),
}

/// Local characteristic data at one node: acoustic slopes, the pressure
/// coupling weight, transport sources, and the streamline right-hand sides.
#[derive(Debug, Clone, Copy)]
pub struct CharCoeffs {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub big_lambda: f64,
    pub source_plus: f64,
    pub source_minus: f64,
    pub b_rhs: f64,
    pub s_rhs: f64,
    pub y_rhs: f64,
    /// Temperature the rate was evaluated at fell below the clamp floor.
    pub t_clamped: bool,
}

impl CharCoeffs {
    pub fn lambda(&self, family: Family) -> f64 {
        match family {
            Family::Plus => self.lambda_plus,
            Family::Minus => self.lambda_minus,
        }
    }

    pub fn source(&self, family: Family) -> f64 {
        match family {
            Family::Plus => self.source_plus,
            Family::Minus => self.source_minus,
        }
    }

    pub fn max_abs_lambda(&self) -> f64 {
        self.lambda_plus.abs().max(self.lambda_minus.abs())
    }
}

/// Acoustic characteristic family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Plus,
    Minus,
}

/// Characteristic coefficients from an already-recovered primitive state.
/// Requires strictly supersonic axial flow (`u > c`).
pub fn char_coeffs_from_euler(
    cs: &CharState,
    euler: &EulerState,
    g: &GasConstants,
) -> Result<CharCoeffs, CharError> {
    let c2 = g.gamma * euler.p / euler.rho;
    let c = c2.sqrt();
    let u = euler.u;
    let v = euler.v;
    let q2 = u * u + v * v;
    if u <= c {
        return Err(CharError::SonicDegeneracy { u, c, mach: (q2 / c2).sqrt() });
    }
    let disc = q2 - c2;
    let sqrt_disc = disc.sqrt();
    let base = euler.rho * c2 * u / (u * u - c2);
    let slope = v / u;
    let acoustic = sqrt_disc / c;
    let lambda_plus = base * (slope + acoustic);
    let lambda_minus = base * (slope - acoustic);
    let big_lambda = sqrt_disc / (euler.rho * c * u * u);

    let t = euler.p / (g.r * euler.rho);
    let t_clamped = g.rate_clamped(t);
    let phi = g.reaction_rate(t);
    let src_scale = (g.gamma - 1.0) * g.q0 * phi * cs.y / (euler.rho * c2 * u * u);
    // entropy rises with heat release: T dS = dB along a streamline, the
    // direction the conservation form of the energy balance fixes
    Ok(CharCoeffs {
        lambda_plus,
        lambda_minus,
        big_lambda,
        source_plus: src_scale * lambda_plus,
        source_minus: src_scale * lambda_minus,
        b_rhs: g.q0 * phi * cs.y / u,
        s_rhs: g.gamma * g.r * g.q0 * phi * cs.y / (c2 * u),
        y_rhs: -phi * cs.y / u,
        t_clamped,
    })
}

/// Characteristic coefficients of a working-variable state.
pub fn char_coeffs(cs: &CharState, g: &GasConstants) -> Result<CharCoeffs, CharError> {
    let euler = euler_from_char(cs, g)?;
    char_coeffs_from_euler(cs, &euler, g)
}

/// Riemann pair `z± = omega ± Lambda p` at a frozen coupling weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiemannPair {
    pub z_plus: f64,
    pub z_minus: f64,
}

pub fn riemann_encode(omega: f64, p: f64, big_lambda: f64) -> Result<RiemannPair, CharError> {
    if big_lambda <= 0.0 {
        return Err(CharError::NonPositiveLambda(big_lambda));
    }
    Ok(RiemannPair { z_plus: omega + big_lambda * p, z_minus: omega - big_lambda * p })
}

pub fn riemann_decode(pair: &RiemannPair, big_lambda: f64) -> Result<(f64, f64), CharError> {
    if big_lambda <= 0.0 {
        return Err(CharError::NonPositiveLambda(big_lambda));
    }
    Ok((
        0.5 * (pair.z_plus + pair.z_minus),
        (pair.z_plus - pair.z_minus) / (2.0 * big_lambda),
    ))
}

/// Quadratic interpolation of a sampled quantity on a uniform grid,
/// using the three nearest nodes. Written in increment form so constant
/// data is reproduced bit-exactly.
pub fn interp_quadratic(eta: &[f64], values: &[f64], at: f64) -> f64 {
    let n = eta.len();
    debug_assert!(n >= 3);
    let d_eta = (eta[n - 1] - eta[0]) / (n - 1) as f64;
    let raw = ((at - eta[0]) / d_eta).round() as isize;
    let c = raw.clamp(1, (n - 2) as isize) as usize;
    let r = (at - eta[c]) / d_eta;
    let w_lo = 0.5 * r * (r - 1.0);
    let w_hi = 0.5 * r * (r + 1.0);
    values[c] + w_lo * (values[c - 1] - values[c]) + w_hi * (values[c + 1] - values[c])
}

/// Quadratic interpolation of every working-variable component.
pub fn interp_state(eta: &[f64], states: &[CharState], at: f64) -> CharState {
    let pick = |f: fn(&CharState) -> f64| {
        let vals: Vec<f64> = states.iter().map(f).collect();
        interp_quadratic(eta, &vals, at)
    };
    CharState {
        omega: pick(|s| s.omega),
        p: pick(|s| s.p),
        b: pick(|s| s.b),
        s: pick(|s| s.s),
        y: pick(|s| s.y),
    }
}

/// Backward characteristic foot from node `j` with slope `lambda` over a
/// streamwise step `d_xi`. The foot is clipped to the region; leaving it
/// by more than a round-off allowance is a CFL violation.
pub fn trace_foot(
    eta: &[f64],
    states: &[CharState],
    j: usize,
    lambda: f64,
    d_xi: f64,
) -> Result<(f64, CharState), CharError> {
    let lo = eta[0];
    let hi = eta[eta.len() - 1];
    let d_eta = (hi - lo) / (eta.len() - 1) as f64;
    let mut foot = eta[j] - d_xi * lambda;
    let allowance = 1e-9 * d_eta;
    if foot < lo - allowance || foot > hi + allowance {
        return Err(CharError::FootOutsideRegion { foot, lo, hi });
    }
    foot = foot.clamp(lo, hi);
    Ok((foot, interp_state(eta, states, foot)))
}
