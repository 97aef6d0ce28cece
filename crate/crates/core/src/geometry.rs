//! Nozzle wall descriptions, inflow profiles, and the corner
//! compatibility residuals the solver checks before starting.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gas::{thermo, EulerState, GasConstants, GasError};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("x = {x} outside the nozzle [0, {length}]")]
    OutOfRange { x: f64, length: f64 },
    #[error("channel width not positive at x = {x}: g+ = {upper}, g- = {lower}")]
    ChannelCollapse { x: f64, upper: f64, lower: f64 },
    #[error("inflow state invalid at y = {y}: {source}")]
    InvalidInflowState { y: f64, source: GasError },
}

/// Which side of the contact interface a quantity belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Upper,
    Lower,
}

impl Side {
    pub fn label(self) -> &'static str {
        match self {
            Side::Upper => "U",
            Side::Lower => "L",
        }
    }
}

/// Compactly supported C-infinity profile
/// `a * exp(1 - 1/(1 - t^2))` with `t = (x - center)/width`, zero for |t| >= 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
}

impl Bump {
    /// Value and first two derivatives at `x`.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let t = (x - self.center) / self.width;
        let t2 = t * t;
        if t2 >= 1.0 {
            return (0.0, 0.0, 0.0);
        }
        let s = 1.0 / (1.0 - t2);
        if s > 1e3 {
            // exp(1 - s) underflows far below f64 resolution
            return (0.0, 0.0, 0.0);
        }
        let f = self.amplitude * (1.0 - s).exp();
        let ft = -2.0 * t * s * s * f;
        let ftt = f * (-2.0 * s * s - 8.0 * t2 * s * s * s + 4.0 * t2 * s * s * s * s);
        (f, ft / self.width, ftt / (self.width * self.width))
    }

    fn scaled(&self, factor: f64) -> Bump {
        Bump { amplitude: self.amplitude * factor, ..*self }
    }
}

fn eval_bumps(bumps: &[Bump], x: f64) -> (f64, f64, f64) {
    let mut v = (0.0, 0.0, 0.0);
    for b in bumps {
        let (f, fx, fxx) = b.eval(x);
        v.0 += f;
        v.1 += fx;
        v.2 += fxx;
    }
    v
}

/// One wall: a straight reference level plus bumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallProfile {
    pub base: f64,
    pub bumps: Vec<Bump>,
}

impl WallProfile {
    pub fn straight(base: f64) -> Self {
        WallProfile { base, bumps: Vec::new() }
    }

    /// `(g, g', g'')` at `x`.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let (f, fx, fxx) = eval_bumps(&self.bumps, x);
        (self.base + f, fx, fxx)
    }

    pub fn scaled(&self, factor: f64) -> WallProfile {
        WallProfile {
            base: self.base,
            bumps: self.bumps.iter().map(|b| b.scaled(factor)).collect(),
        }
    }
}

/// Both nozzle walls over `[0, length]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallSpec {
    pub upper: WallProfile,
    pub lower: WallProfile,
    pub length: f64,
}

impl WallSpec {
    pub fn straight(length: f64) -> Self {
        WallSpec {
            upper: WallProfile::straight(1.0),
            lower: WallProfile::straight(-1.0),
            length,
        }
    }

    pub fn eval_wall(&self, side: Side, x: f64) -> Result<(f64, f64, f64), GeometryError> {
        if !(0.0..=self.length).contains(&x) {
            return Err(GeometryError::OutOfRange { x, length: self.length });
        }
        Ok(match side {
            Side::Upper => self.upper.eval(x),
            Side::Lower => self.lower.eval(x),
        })
    }

    /// Multiply every bump amplitude on both walls by `factor`.
    pub fn scaled(&self, factor: f64) -> WallSpec {
        WallSpec {
            upper: self.upper.scaled(factor),
            lower: self.lower.scaled(factor),
            length: self.length,
        }
    }

    pub fn has_bumps(&self) -> bool {
        self.upper.bumps.iter().chain(&self.lower.bumps).any(|b| b.amplitude != 0.0)
    }

    /// Check `g+ > g-` on a uniform grid of `n + 1` stations.
    pub fn check_channel_width(&self, n: usize) -> Result<f64, GeometryError> {
        let mut min_width = f64::INFINITY;
        for i in 0..=n {
            let x = self.length * i as f64 / n as f64;
            let up = self.upper.eval(x).0;
            let lo = self.lower.eval(x).0;
            if up <= lo {
                return Err(GeometryError::ChannelCollapse { x, upper: up, lower: lo });
            }
            min_width = min_width.min(up - lo);
        }
        Ok(min_width)
    }
}

/// Perturbation profile for one flow component: a sum of bumps in `y`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub bumps: Vec<Bump>,
}

impl Profile {
    fn eval(&self, y: f64) -> (f64, f64) {
        let (f, fy, _) = eval_bumps(&self.bumps, y);
        (f, fy)
    }

    fn is_empty(&self) -> bool {
        self.bumps.iter().all(|b| b.amplitude == 0.0)
    }
}

/// Incoming data on one inlet segment: a constant background (with v = 0)
/// plus compactly supported perturbation profiles per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InflowSide {
    pub background: EulerState,
    #[serde(default)]
    pub u: Profile,
    #[serde(default)]
    pub v: Profile,
    #[serde(default)]
    pub p: Profile,
    #[serde(default)]
    pub rho: Profile,
    #[serde(default)]
    pub y_frac: Profile,
}

impl InflowSide {
    pub fn constant(background: EulerState) -> Self {
        InflowSide {
            background,
            u: Profile::default(),
            v: Profile::default(),
            p: Profile::default(),
            rho: Profile::default(),
            y_frac: Profile::default(),
        }
    }

    pub fn state_at(&self, y: f64, eps: f64) -> EulerState {
        EulerState {
            u: self.background.u + eps * self.u.eval(y).0,
            v: self.background.v + eps * self.v.eval(y).0,
            p: self.background.p + eps * self.p.eval(y).0,
            rho: self.background.rho + eps * self.rho.eval(y).0,
            y: self.background.y + eps * self.y_frac.eval(y).0,
        }
    }

    /// `d/dy` of `(u, v, p, rho, Y)` at `y`.
    pub fn derivative_at(&self, y: f64, eps: f64) -> [f64; 5] {
        [
            eps * self.u.eval(y).1,
            eps * self.v.eval(y).1,
            eps * self.p.eval(y).1,
            eps * self.rho.eval(y).1,
            eps * self.y_frac.eval(y).1,
        ]
    }

    pub fn has_perturbations(&self) -> bool {
        !(self.u.is_empty()
            && self.v.is_empty()
            && self.p.is_empty()
            && self.rho.is_empty()
            && self.y_frac.is_empty())
    }
}

/// Full inflow description. `epsilon` scales every perturbation profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InflowSpec {
    pub upper: InflowSide,
    pub lower: InflowSide,
    pub epsilon: f64,
}

impl InflowSpec {
    pub fn constant(upper: EulerState, lower: EulerState) -> Self {
        InflowSpec {
            upper: InflowSide::constant(upper),
            lower: InflowSide::constant(lower),
            epsilon: 0.0,
        }
    }

    pub fn side(&self, side: Side) -> &InflowSide {
        match side {
            Side::Upper => &self.upper,
            Side::Lower => &self.lower,
        }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> InflowSpec {
        InflowSpec { epsilon, ..self.clone() }
    }

    /// Effectively constant data: either no profiles or a zero scale.
    pub fn is_constant(&self) -> bool {
        self.epsilon == 0.0
            || (!self.upper.has_perturbations() && !self.lower.has_perturbations())
    }
}

/// One signed corner-condition mismatch.
#[derive(Debug, Clone, Serialize)]
pub struct Residual {
    pub name: &'static str,
    pub value: f64,
}

/// Corner-compatibility residuals at the inlet corners: interface
/// continuity and forced first derivatives at the contact corner, and
/// slope/curvature matching at the two wall corners.
#[derive(Debug, Clone, Serialize)]
pub struct CompatibilityReport {
    pub residuals: Vec<Residual>,
    pub max_abs: f64,
}

/// Directional corner quantity shared by the interface and wall conditions:
/// the streamwise derivative of the flow slope forced by the inflow data,
/// expressed with mass-flux transverse derivatives.
fn omega_xi_forcing(st: &EulerState, dy: &[f64; 5], g: &GasConstants) -> Result<f64, GasError> {
    let tv = thermo(st, g)?;
    let c2 = tv.c * tv.c;
    let q2 = st.u * st.u + st.v * st.v;
    let denom = st.u * st.u - c2;
    let rho_u = st.rho * st.u;
    // transverse derivatives in mass-flux coordinates
    let omega_eta = (dy[1] * st.u - st.v * dy[0]) / (st.u * st.u) / rho_u;
    let p_eta = dy[2] / rho_u;
    let phi = g.reaction_rate(tv.t);
    Ok(st.rho * c2 * st.v / denom * omega_eta + (q2 - c2) / (st.u * denom) * p_eta
        - (g.gamma - 1.0) * g.q0 * phi * st.v * st.y / (st.u * st.u * denom))
}

/// Streamwise pressure-derivative forcing at a corner, companion to
/// [`omega_xi_forcing`].
fn pressure_xi_forcing(st: &EulerState, dy: &[f64; 5], g: &GasConstants) -> Result<f64, GasError> {
    let tv = thermo(st, g)?;
    let c2 = tv.c * tv.c;
    let denom = st.u * st.u - c2;
    let rho_u = st.rho * st.u;
    let omega_eta = (dy[1] * st.u - st.v * dy[0]) / (st.u * st.u) / rho_u;
    let p_eta = dy[2] / rho_u;
    let phi = g.reaction_rate(tv.t);
    Ok(st.rho * st.rho * c2 * st.u.powi(3) / denom * omega_eta
        + st.rho * c2 * st.v / denom * p_eta
        - (g.gamma - 1.0) * g.q0 * phi * st.rho * st.u * st.y / denom)
}

/// Evaluate every corner condition as a signed `LHS - RHS` mismatch.
pub fn check_corner_compatibility(
    inflow: &InflowSpec,
    walls: &WallSpec,
    g: &GasConstants,
) -> Result<CompatibilityReport, GeometryError> {
    let eps = inflow.epsilon;
    let corner = |side: &InflowSide, y: f64| -> Result<(EulerState, [f64; 5]), GeometryError> {
        let st = side.state_at(y, eps);
        st.validate()
            .map_err(|source| GeometryError::InvalidInflowState { y, source })?;
        Ok((st, side.derivative_at(y, eps)))
    };

    let (up0, dup0) = corner(&inflow.upper, 0.0)?;
    let (lo0, dlo0) = corner(&inflow.lower, 0.0)?;
    let g_up0 = walls.upper.eval(0.0);
    let g_lo0 = walls.lower.eval(0.0);
    let (up_w, dup_w) = corner(&inflow.upper, g_up0.0)?;
    let (lo_w, dlo_w) = corner(&inflow.lower, g_lo0.0)?;

    let fw = |st: &EulerState, dy: &[f64; 5]| {
        omega_xi_forcing(st, dy, g)
            .map_err(|source| GeometryError::InvalidInflowState { y: 0.0, source })
    };
    let fp = |st: &EulerState, dy: &[f64; 5]| {
        pressure_xi_forcing(st, dy, g)
            .map_err(|source| GeometryError::InvalidInflowState { y: 0.0, source })
    };

    let residuals = vec![
        Residual { name: "cd_flow_slope", value: up0.v / up0.u - lo0.v / lo0.u },
        Residual { name: "cd_pressure", value: up0.p - lo0.p },
        Residual { name: "cd_flow_slope_xi", value: fw(&up0, &dup0)? - fw(&lo0, &dlo0)? },
        Residual { name: "cd_pressure_xi", value: fp(&up0, &dup0)? - fp(&lo0, &dlo0)? },
        Residual { name: "wall_slope_upper", value: g_up0.1 - up_w.v / up_w.u },
        Residual { name: "wall_slope_lower", value: g_lo0.1 - lo_w.v / lo_w.u },
        Residual { name: "wall_curvature_upper", value: g_up0.2 + fw(&up_w, &dup_w)? },
        Residual { name: "wall_curvature_lower", value: g_lo0.2 + fw(&lo_w, &dlo_w)? },
    ];
    let max_abs = residuals.iter().map(|r| r.value.abs()).fold(0.0, f64::max);
    Ok(CompatibilityReport { residuals, max_abs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::integrate_uniform;

    fn gas() -> GasConstants {
        GasConstants::new(1.4, 1.0, 0.0, 0.5, 2.0, 1.0).unwrap()
    }

    fn backgrounds() -> InflowSpec {
        InflowSpec::constant(
            EulerState { u: 2.0, v: 0.0, p: 1.0, rho: 1.4, y: 0.0 },
            EulerState { u: 3.0, v: 0.0, p: 1.0, rho: 0.7, y: 0.0 },
        )
    }

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn straight_walls() {
        let walls = WallSpec::straight(4.0);
        assert_eq!(walls.eval_wall(Side::Upper, 1.7).unwrap(), (1.0, 0.0, 0.0));
        assert_eq!(walls.eval_wall(Side::Lower, 0.0).unwrap(), (-1.0, 0.0, 0.0));
        assert!(walls.eval_wall(Side::Upper, 4.5).is_err());
        assert!(walls.eval_wall(Side::Upper, -0.1).is_err());
    }

    #[test]
    fn bump_extremum_and_curvature() {
        let b = Bump { center: 1.0, width: 0.5, amplitude: 0.01 };
        let (f, fx, fxx) = b.eval(1.0);
        assert_close(f, 0.01, 1e-17);
        assert_eq!(fx, 0.0);
        assert_close(fxx, -2.0 * 0.01 / 0.25, 1e-12);
        let mut walls = WallSpec::straight(4.0);
        walls.upper.bumps.push(b);
        let (g, gx, _) = walls.eval_wall(Side::Upper, 1.0).unwrap();
        assert_close(g, 1.01, 1e-15);
        assert_eq!(gx, 0.0);
    }

    #[test]
    fn bump_derivatives_match_finite_differences() {
        let b = Bump { center: 1.0, width: 0.5, amplitude: 0.01 };
        let h = 1e-5;
        for x in [0.62, 0.8, 1.0, 1.21, 1.4, 1.49, 1.5, 1.55] {
            let (_, fx, fxx) = b.eval(x);
            let fd1 = (b.eval(x + h).0 - b.eval(x - h).0) / (2.0 * h);
            let fd2 = (b.eval(x + h).0 - 2.0 * b.eval(x).0 + b.eval(x - h).0) / (h * h);
            assert_close(fx, fd1, 1e-6);
            assert_close(fxx, fd2, 1e-3);
        }
    }

    #[test]
    fn curvature_integrates_to_slope_difference() {
        let mut walls = WallSpec::straight(4.0);
        walls.upper.bumps.push(Bump { center: 0.4, width: 0.7, amplitude: 0.02 });
        walls.upper.bumps.push(Bump { center: 2.4, width: 0.9, amplitude: -0.05 });
        let n = 4001;
        let h = 4.0 / (n - 1) as f64;
        let gpp: Vec<f64> = (0..n).map(|i| walls.upper.eval(i as f64 * h).2).collect();
        let integral = integrate_uniform(&gpp, h);
        let expected = walls.upper.eval(4.0).1 - walls.upper.eval(0.0).1;
        assert_close(integral, expected, 1e-8);
    }

    #[test]
    fn channel_width_guard() {
        let mut walls = WallSpec::straight(4.0);
        assert_close(walls.check_channel_width(64).unwrap(), 2.0, 1e-15);
        walls.lower.bumps.push(Bump { center: 2.0, width: 1.0, amplitude: 2.5 });
        assert!(walls.check_channel_width(64).is_err());
    }

    #[test]
    fn compatibility_background_straight_is_exact_zero() {
        let report =
            check_corner_compatibility(&backgrounds(), &WallSpec::straight(4.0), &gas()).unwrap();
        assert_eq!(report.max_abs, 0.0);
        assert_eq!(report.residuals.len(), 8);
    }

    #[test]
    fn compatibility_compact_perturbations_vanish() {
        let mut inflow = backgrounds().with_epsilon(0.05);
        inflow.upper.u.bumps.push(Bump { center: 0.5, width: 0.3, amplitude: 2.0 });
        inflow.upper.p.bumps.push(Bump { center: 0.45, width: 0.3, amplitude: 0.8 });
        inflow.lower.rho.bumps.push(Bump { center: -0.5, width: 0.25, amplitude: 0.6 });
        inflow.lower.y_frac.bumps.push(Bump { center: -0.5, width: 0.3, amplitude: 0.5 });
        let report =
            check_corner_compatibility(&inflow, &WallSpec::straight(4.0), &gas()).unwrap();
        assert_eq!(report.max_abs, 0.0, "supports clear of the corners leave every term zero");
    }

    #[test]
    fn wall_slope_residual_matches_direct_evaluation() {
        // bump support covering x = 0 so the wall enters with a slope
        let mut walls = WallSpec::straight(4.0);
        walls.upper.bumps.push(Bump { center: 0.25, width: 0.5, amplitude: 0.01 });
        let expected = walls.upper.eval(0.0).1;
        assert!(expected != 0.0);
        let report = check_corner_compatibility(&backgrounds(), &walls, &gas()).unwrap();
        let r = report
            .residuals
            .iter()
            .find(|r| r.name == "wall_slope_upper")
            .unwrap();
        assert_close(r.value, expected, 1e-15);

        // background flow terms vanish, so residuals are linear in the amplitude
        let doubled = walls.scaled(2.0);
        let report2 = check_corner_compatibility(&backgrounds(), &doubled, &gas()).unwrap();
        for (a, b) in report.residuals.iter().zip(&report2.residuals) {
            assert_close(2.0 * a.value, b.value, 1e-12 * a.value.abs().max(1e-12));
        }
    }
}
