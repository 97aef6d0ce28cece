//! Marching solver: advances the flow-slope/pressure pair along the two
//! acoustic characteristic families and the tangential quantities along
//! streamlines, with wall reflection and interface coupling each step.

use serde::Serialize;
use thiserror::Error;

use crate::characteristics::{char_coeffs, interp_quadratic, CharCoeffs, CharError, Family};
use crate::gas::{euler_from_char, thermo, CharState, GasConstants};
use crate::geometry::{
    check_corner_compatibility, CompatibilityReport, GeometryError, InflowSpec, Side, WallSpec,
};
use crate::lagrangian::{
    inflow_to_lagrangian, inverse_transform, verify_mass_conservation, LagrangianError,
    LagrangianGrid, MassConservationReport, PhysicalTrace,
};

/// Corner-compatibility gate: runs refuse to start above this residual
/// unless explicitly overridden.
pub const COMPAT_GATE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SchemeOrder {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SolverConfig {
    /// Transverse intervals per region (nodes per region = `n_eta + 1`).
    pub n_eta: usize,
    pub cfl: f64,
    pub max_corrector_iters: usize,
    pub corrector_tol: f64,
    pub order: SchemeOrder,
    /// Cap on retained stations; the marching stride is derived from it.
    pub max_stored_slices: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            n_eta: 200,
            cfl: 0.8,
            max_corrector_iters: 4,
            corrector_tol: 1e-12,
            order: SchemeOrder::Second,
            max_stored_slices: 400,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_eta < 8 {
            return Err(format!("n_eta must be >= 8, got {}", self.n_eta));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(format!("cfl must be in (0, 1], got {}", self.cfl));
        }
        if self.corrector_tol <= 0.0 {
            return Err(format!("corrector_tol must be > 0, got {}", self.corrector_tol));
        }
        if self.max_stored_slices < 2 {
            return Err("max_stored_slices must be >= 2".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("corner compatibility residual {max_abs:e} exceeds the {gate:e} gate")]
    Incompatible { max_abs: f64, gate: f64 },
    #[error("supersonic inflow required: Mach {mach} at y = {y} on the {side:?} inlet")]
    SubsonicInlet { side: Side, y: f64, mach: f64 },
    #[error("sonic degeneracy at xi = {xi}, {side:?} node {index}: {source}")]
    SonicDegeneracy { xi: f64, side: Side, index: usize, source: CharError },
    #[error("state recovery failed at xi = {xi}, {side:?} node {index}: {source}")]
    StateRecovery { xi: f64, side: Side, index: usize, source: CharError },
    #[error("CFL violation at xi = {xi}, {side:?} node {index}: characteristic foot left the region")]
    CflViolation { xi: f64, side: Side, index: usize },
    #[error("interface impedance sum not positive at xi = {xi}")]
    NonPositiveImpedance { xi: f64 },
    #[error("marching step collapsed at xi = {xi}")]
    StepCollapse { xi: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Lagrangian(#[from] LagrangianError),
}

/// Failure classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureClass {
    /// Validation-gate refusal (compatibility gate).
    Gate,
    /// Physical abort (sonic, CFL, subsonic inlet, degenerate transform).
    Physical,
}

impl SolveError {
    pub fn class(&self) -> FailureClass {
        match self {
            SolveError::Incompatible { .. } | SolveError::InvalidConfig(_) => FailureClass::Gate,
            _ => FailureClass::Physical,
        }
    }
}

/// A solve that aborted mid-march still hands back the stored stations.
#[derive(Debug)]
pub struct SolveFailure {
    pub error: SolveError,
    pub partial: Option<Box<FlowField>>,
}

impl std::fmt::Display for SolveFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    pub steps: usize,
    pub max_abs_lambda: f64,
    pub y_clamp_events: u64,
    pub t_clamp_events: u64,
    pub corrector_iters_total: u64,
    pub corrector_iters_max: usize,
}

/// Solved field: working-variable slices over the stored stations.
#[derive(Debug, Clone)]
pub struct FlowField {
    pub grid: LagrangianGrid,
    pub stations: Vec<f64>,
    pub upper: Vec<Vec<CharState>>,
    pub lower: Vec<Vec<CharState>>,
    /// `(omega, p)` at the interface per stored station.
    pub cd_trace: Vec<(f64, f64)>,
    pub diagnostics: Diagnostics,
}

impl FlowField {
    pub fn states(&self, side: Side) -> &[Vec<CharState>] {
        match side {
            Side::Upper => &self.upper,
            Side::Lower => &self.lower,
        }
    }

    /// Largest interface mismatch of `(omega, p)` over the stored stations.
    pub fn max_cd_mismatch(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (up, lo) in self.upper.iter().zip(&self.lower) {
            let cd_up = &up[0];
            let cd_lo = &lo[lo.len() - 1];
            worst = worst
                .max((cd_up.omega - cd_lo.omega).abs())
                .max((cd_up.p - cd_lo.p).abs());
        }
        worst
    }
}

/// Everything a completed solve produces.
#[derive(Debug)]
pub struct SolveOutput {
    pub field: FlowField,
    pub trace: PhysicalTrace,
    pub mass: MassConservationReport,
    pub compat: CompatibilityReport,
}

/// Reflection at a solid wall: the flow slope is pinned to the wall slope
/// and the outgoing invariant mirrors the incoming one.
/// Returns `(omega, p, reflected_z)`.
pub fn wall_reflect(
    incoming_z: f64,
    g_prime: f64,
    big_lambda: f64,
    side: Side,
) -> Result<(f64, f64, f64), SolveError> {
    if big_lambda <= 0.0 {
        return Err(SolveError::NonPositiveImpedance { xi: f64::NAN });
    }
    let omega = g_prime;
    let reflected = 2.0 * g_prime - incoming_z;
    let p = match side {
        Side::Upper => (incoming_z - omega) / big_lambda,
        Side::Lower => (omega - incoming_z) / big_lambda,
    };
    Ok((omega, p, reflected))
}

/// Joint interface state from the two incoming invariants.
#[derive(Debug, Clone, Copy)]
pub struct CdResolution {
    pub omega: f64,
    pub p: f64,
    pub z_plus_upper: f64,
    pub z_minus_lower: f64,
}

/// Solve `omega - L+ p = z-_up`, `omega + L- p = z+_low` and emit the
/// outgoing invariants on both sides.
pub fn cd_interface_solve(
    big_upper: f64,
    big_lower: f64,
    z_minus_upper: f64,
    z_plus_lower: f64,
) -> Result<CdResolution, SolveError> {
    let sum = big_upper + big_lower;
    if sum <= 0.0 {
        return Err(SolveError::NonPositiveImpedance { xi: f64::NAN });
    }
    let p = (z_plus_lower - z_minus_upper) / sum;
    let omega = (big_lower * z_minus_upper + big_upper * z_plus_lower) / sum;
    Ok(CdResolution {
        omega,
        p,
        z_plus_upper: omega + big_upper * p,
        z_minus_lower: omega - big_lower * p,
    })
}

#[derive(Clone)]
struct SlicePair {
    upper: Vec<CharState>,
    lower: Vec<CharState>,
}

impl SlicePair {
    fn side(&self, side: Side) -> &Vec<CharState> {
        match side {
            Side::Upper => &self.upper,
            Side::Lower => &self.lower,
        }
    }

    fn max_delta(&self, other: &SlicePair) -> f64 {
        let mut d: f64 = 0.0;
        for (a, b) in self
            .upper
            .iter()
            .chain(&self.lower)
            .zip(other.upper.iter().chain(&other.lower))
        {
            d = d
                .max((a.omega - b.omega).abs())
                .max((a.p - b.p).abs())
                .max((a.b - b.b).abs())
                .max((a.s - b.s).abs())
                .max((a.y - b.y).abs());
        }
        d
    }
}

struct RegionEval {
    omega: Vec<f64>,
    p: Vec<f64>,
    lambda_p: Vec<f64>,
    lambda_m: Vec<f64>,
    big: Vec<f64>,
    src_p: Vec<f64>,
    src_m: Vec<f64>,
    b_rhs: Vec<f64>,
    s_rhs: Vec<f64>,
    y_rhs: Vec<f64>,
    max_abs_lambda: f64,
    t_clamps: u64,
}

impl RegionEval {
    fn lambda(&self, family: Family) -> &[f64] {
        match family {
            Family::Plus => &self.lambda_p,
            Family::Minus => &self.lambda_m,
        }
    }

    fn src(&self, family: Family) -> &[f64] {
        match family {
            Family::Plus => &self.src_p,
            Family::Minus => &self.src_m,
        }
    }
}

struct EvalPair {
    upper: RegionEval,
    lower: RegionEval,
}

impl EvalPair {
    fn side(&self, side: Side) -> &RegionEval {
        match side {
            Side::Upper => &self.upper,
            Side::Lower => &self.lower,
        }
    }
}

fn eval_region(
    states: &[CharState],
    gas: &GasConstants,
    xi: f64,
    side: Side,
) -> Result<RegionEval, SolveError> {
    let n = states.len();
    let mut ev = RegionEval {
        omega: Vec::with_capacity(n),
        p: Vec::with_capacity(n),
        lambda_p: Vec::with_capacity(n),
        lambda_m: Vec::with_capacity(n),
        big: Vec::with_capacity(n),
        src_p: Vec::with_capacity(n),
        src_m: Vec::with_capacity(n),
        b_rhs: Vec::with_capacity(n),
        s_rhs: Vec::with_capacity(n),
        y_rhs: Vec::with_capacity(n),
        max_abs_lambda: 0.0,
        t_clamps: 0,
    };
    for (index, cs) in states.iter().enumerate() {
        let co: CharCoeffs = char_coeffs(cs, gas).map_err(|source| match source {
            CharError::SonicDegeneracy { .. } => {
                SolveError::SonicDegeneracy { xi, side, index, source }
            }
            other => SolveError::StateRecovery { xi, side, index, source: other },
        })?;
        ev.max_abs_lambda = ev.max_abs_lambda.max(co.max_abs_lambda());
        if co.t_clamped {
            ev.t_clamps += 1;
        }
        ev.omega.push(cs.omega);
        ev.p.push(cs.p);
        ev.lambda_p.push(co.lambda_plus);
        ev.lambda_m.push(co.lambda_minus);
        ev.big.push(co.big_lambda);
        ev.src_p.push(co.source_plus);
        ev.src_m.push(co.source_minus);
        ev.b_rhs.push(co.b_rhs);
        ev.s_rhs.push(co.s_rhs);
        ev.y_rhs.push(co.y_rhs);
    }
    Ok(ev)
}

fn eval_pair(slices: &SlicePair, gas: &GasConstants, xi: f64) -> Result<EvalPair, SolveError> {
    Ok(EvalPair {
        upper: eval_region(&slices.upper, gas, xi, Side::Upper)?,
        lower: eval_region(&slices.lower, gas, xi, Side::Lower)?,
    })
}

/// Transported invariant arriving at node `j` along the given family, and
/// the coupling weight frozen along that characteristic segment.
struct Incoming {
    z: f64,
    big: f64,
}

struct StepContext<'a> {
    grid: &'a LagrangianGrid,
    gas: &'a GasConstants,
    walls: &'a WallSpec,
    cfg: &'a SolverConfig,
    xi: f64,
    d_xi: f64,
}

impl StepContext<'_> {
    fn clipped_foot(&self, eta: &[f64], j: usize, lambda: f64, side: Side) -> Result<f64, SolveError> {
        let lo = eta[0];
        let hi = eta[eta.len() - 1];
        let d_eta = (hi - lo) / (eta.len() - 1) as f64;
        let foot = eta[j] - self.d_xi * lambda;
        if foot < lo - 1e-9 * d_eta || foot > hi + 1e-9 * d_eta {
            return Err(SolveError::CflViolation { xi: self.xi, side, index: j });
        }
        Ok(foot.clamp(lo, hi))
    }

    /// Predictor freezes the coefficients at the departure node of the
    /// previous slice; the corrector averages the previous-slice foot
    /// values with the current iterate at the arrival node.
    fn incoming(
        &self,
        side: Side,
        family: Family,
        j: usize,
        prev_eval: &EvalPair,
        cur_eval: Option<&EvalPair>,
        sign: f64,
    ) -> Result<Incoming, SolveError> {
        let eta = self.grid.eta(side);
        let ev = prev_eval.side(side);
        let lam_prev_node = ev.lambda(family)[j];

        let (foot, big_eff, src_eff) = match cur_eval {
            None => {
                let foot = self.clipped_foot(eta, j, lam_prev_node, side)?;
                (foot, ev.big[j], ev.src(family)[j])
            }
            Some(cur) => {
                let cur_ev = cur.side(side);
                let lam_cur = cur_ev.lambda(family)[j];
                let guess = self.clipped_foot(eta, j, 0.5 * (lam_prev_node + lam_cur), side)?;
                let lam_foot = interp_quadratic(eta, ev.lambda(family), guess);
                let foot = self.clipped_foot(eta, j, 0.5 * (lam_foot + lam_cur), side)?;
                let big = 0.5 * (interp_quadratic(eta, &ev.big, foot) + cur_ev.big[j]);
                let src = 0.5 * (interp_quadratic(eta, ev.src(family), foot) + cur_ev.src(family)[j]);
                (foot, big, src)
            }
        };

        let omega_f = interp_quadratic(eta, &ev.omega, foot);
        let p_f = interp_quadratic(eta, &ev.p, foot);
        Ok(Incoming { z: omega_f + sign * big_eff * p_f + self.d_xi * src_eff, big: big_eff })
    }

    /// Tangential quantities advance along `eta = const`.
    fn streamline(
        &self,
        prev: &CharState,
        prev_rhs: (f64, f64, f64),
        cur_rhs: Option<(f64, f64, f64)>,
        clamps: &mut u64,
    ) -> (f64, f64, f64) {
        let (b, s, y_raw) = match cur_rhs {
            None => (
                prev.b + self.d_xi * prev_rhs.0,
                prev.s + self.d_xi * prev_rhs.1,
                prev.y + self.d_xi * prev_rhs.2,
            ),
            Some(cur) => (
                prev.b + 0.5 * self.d_xi * (prev_rhs.0 + cur.0),
                prev.s + 0.5 * self.d_xi * (prev_rhs.1 + cur.1),
                prev.y + 0.5 * self.d_xi * (prev_rhs.2 + cur.2),
            ),
        };
        let y = y_raw.clamp(0.0, 1.0);
        if y != y_raw {
            *clamps += 1;
        }
        (b, s, y)
    }

    fn build_slice(
        &self,
        prev: &SlicePair,
        prev_eval: &EvalPair,
        cur_eval: Option<&EvalPair>,
        clamps: &mut u64,
    ) -> Result<SlicePair, SolveError> {
        let xi_next = self.xi + self.d_xi;
        let mut out = prev.clone();

        for side in [Side::Upper, Side::Lower] {
            let n = prev.side(side).len();
            let cd = self.grid.cd_index(side);
            let wall = self.grid.wall_index(side);
            let ev = prev_eval.side(side);

            for j in 0..n {
                let prev_state = &prev.side(side)[j];
                let prev_rhs = (ev.b_rhs[j], ev.s_rhs[j], ev.y_rhs[j]);
                let cur_rhs = cur_eval.map(|c| {
                    let ce = c.side(side);
                    (ce.b_rhs[j], ce.s_rhs[j], ce.y_rhs[j])
                });
                let (b, s, y) = self.streamline(prev_state, prev_rhs, cur_rhs, clamps);

                let (omega, p) = if j == cd {
                    // handled jointly below
                    (prev_state.omega, prev_state.p)
                } else if j == wall {
                    let g_prime = match side {
                        Side::Upper => self.walls.upper.eval(xi_next).1,
                        Side::Lower => self.walls.lower.eval(xi_next).1,
                    };
                    let family = match side {
                        Side::Upper => Family::Plus,
                        Side::Lower => Family::Minus,
                    };
                    let sign = if family == Family::Plus { 1.0 } else { -1.0 };
                    let inc = self.incoming(side, family, j, prev_eval, cur_eval, sign)?;
                    let (omega, p, _) = wall_reflect(inc.z, g_prime, inc.big, side)
                        .map_err(|_| SolveError::NonPositiveImpedance { xi: xi_next })?;
                    (omega, p)
                } else {
                    let plus = self.incoming(side, Family::Plus, j, prev_eval, cur_eval, 1.0)?;
                    let minus =
                        self.incoming(side, Family::Minus, j, prev_eval, cur_eval, -1.0)?;
                    let denom = plus.big + minus.big;
                    if denom <= 0.0 {
                        return Err(SolveError::NonPositiveImpedance { xi: xi_next });
                    }
                    let p = (plus.z - minus.z) / denom;
                    (plus.z - plus.big * p, p)
                };

                let slot = match side {
                    Side::Upper => &mut out.upper[j],
                    Side::Lower => &mut out.lower[j],
                };
                *slot = CharState { omega, p, b, s, y };
            }
        }

        // joint interface update from the two one-sided incoming invariants
        let cd_up = self.grid.cd_index(Side::Upper);
        let cd_lo = self.grid.cd_index(Side::Lower);
        let from_upper =
            self.incoming(Side::Upper, Family::Minus, cd_up, prev_eval, cur_eval, -1.0)?;
        let from_lower =
            self.incoming(Side::Lower, Family::Plus, cd_lo, prev_eval, cur_eval, 1.0)?;
        let res = cd_interface_solve(from_upper.big, from_lower.big, from_upper.z, from_lower.z)
            .map_err(|_| SolveError::NonPositiveImpedance { xi: xi_next })?;
        out.upper[cd_up].omega = res.omega;
        out.upper[cd_up].p = res.p;
        out.lower[cd_lo].omega = res.omega;
        out.lower[cd_lo].p = res.p;

        Ok(out)
    }

    /// One marching step from `xi` to `xi + d_xi`.
    fn advance(
        &self,
        prev: &SlicePair,
        prev_eval: &EvalPair,
        diag: &mut Diagnostics,
    ) -> Result<SlicePair, SolveError> {
        let mut clamps = 0u64;
        match self.cfg.order {
            SchemeOrder::First => {
                let next = self.build_slice(prev, prev_eval, None, &mut clamps)?;
                diag.y_clamp_events += clamps;
                Ok(next)
            }
            SchemeOrder::Second => {
                // predictor pass reuses the previous-slice evaluation
                let mut cur = self.build_slice(prev, prev_eval, Some(prev_eval), &mut clamps)?;
                let mut iters = 0usize;
                while iters < self.cfg.max_corrector_iters {
                    let cur_eval = eval_pair(&cur, self.gas, self.xi + self.d_xi)?;
                    diag.t_clamp_events += cur_eval.upper.t_clamps + cur_eval.lower.t_clamps;
                    let mut pass_clamps = 0u64;
                    let next = self.build_slice(prev, prev_eval, Some(&cur_eval), &mut pass_clamps)?;
                    iters += 1;
                    clamps = pass_clamps;
                    let delta = next.max_delta(&cur);
                    cur = next;
                    if delta < self.cfg.corrector_tol {
                        break;
                    }
                }
                diag.corrector_iters_total += iters as u64;
                diag.corrector_iters_max = diag.corrector_iters_max.max(iters);
                diag.y_clamp_events += clamps;
                Ok(cur)
            }
        }
    }
}

/// Validate and map the inflow onto the mass-flux grid.
pub fn initialize(
    inflow: &InflowSpec,
    walls: &WallSpec,
    gas: &GasConstants,
    cfg: &SolverConfig,
) -> Result<crate::lagrangian::InletSlices, SolveError> {
    let slices = inflow_to_lagrangian(inflow, walls, gas, cfg.n_eta)?;
    for (side, states, ys) in [
        (Side::Upper, &slices.upper, &slices.y_upper),
        (Side::Lower, &slices.lower, &slices.y_lower),
    ] {
        for (cs, &y) in states.iter().zip(ys) {
            let eu = euler_from_char(cs, gas).map_err(|source| {
                SolveError::Lagrangian(LagrangianError::InletState { y, source })
            })?;
            let tv = thermo(&eu, gas).map_err(|source| {
                SolveError::Lagrangian(LagrangianError::InletState { y, source })
            })?;
            if tv.mach <= 1.0 {
                return Err(SolveError::SubsonicInlet { side, y, mach: tv.mach });
            }
        }
    }
    Ok(slices)
}

/// Full solve from the inlet to `x = length`: compatibility gate, inlet
/// mapping, adaptive-step march, inverse transform, and the mass check.
pub fn solve(
    inflow: &InflowSpec,
    walls: &WallSpec,
    gas: &GasConstants,
    cfg: &SolverConfig,
    allow_incompatible: bool,
) -> Result<SolveOutput, SolveFailure> {
    let fail = |error: SolveError| SolveFailure { error, partial: None };

    if let Err(msg) = cfg.validate() {
        return Err(fail(SolveError::InvalidConfig(msg)));
    }
    let compat = check_corner_compatibility(inflow, walls, gas)
        .map_err(|e| fail(SolveError::Geometry(e)))?;
    if compat.max_abs > COMPAT_GATE && !allow_incompatible {
        return Err(fail(SolveError::Incompatible { max_abs: compat.max_abs, gate: COMPAT_GATE }));
    }

    let inlet = initialize(inflow, walls, gas, cfg).map_err(fail)?;
    let grid = inlet.grid.clone();
    let length = walls.length;

    let mut field = FlowField {
        grid: grid.clone(),
        stations: Vec::new(),
        upper: Vec::new(),
        lower: Vec::new(),
        cd_trace: Vec::new(),
        diagnostics: Diagnostics::default(),
    };

    let mut cur = SlicePair { upper: inlet.upper, lower: inlet.lower };
    let mut xi = 0.0;

    let store = |field: &mut FlowField, xi: f64, slice: &SlicePair| {
        field.stations.push(xi);
        field.upper.push(slice.upper.clone());
        field.lower.push(slice.lower.clone());
        field.cd_trace.push((slice.upper[0].omega, slice.upper[0].p));
    };
    store(&mut field, xi, &cur);

    let d_eta_up = grid.d_eta(Side::Upper);
    let d_eta_lo = grid.d_eta(Side::Lower).abs();

    let mut store_stride = 1usize;
    let mut steps_since_store = 0usize;

    loop {
        let eval = match eval_pair(&cur, gas, xi) {
            Ok(e) => e,
            Err(error) => return Err(SolveFailure { error, partial: Some(Box::new(field)) }),
        };
        field.diagnostics.max_abs_lambda = field
            .diagnostics
            .max_abs_lambda
            .max(eval.upper.max_abs_lambda)
            .max(eval.lower.max_abs_lambda);
        field.diagnostics.t_clamp_events += eval.upper.t_clamps + eval.lower.t_clamps;

        let d_xi_cfl = (cfg.cfl * d_eta_up / eval.upper.max_abs_lambda)
            .min(cfg.cfl * d_eta_lo / eval.lower.max_abs_lambda);
        if !d_xi_cfl.is_finite() || d_xi_cfl < 1e-14 * length {
            return Err(SolveFailure {
                error: SolveError::StepCollapse { xi },
                partial: Some(Box::new(field)),
            });
        }
        if field.diagnostics.steps == 0 {
            let est_steps = (length / d_xi_cfl).ceil().max(1.0) as usize;
            store_stride = est_steps.div_ceil(cfg.max_stored_slices).max(1);
        }

        let remaining = length - xi;
        let (d_xi, xi_next, last) = if d_xi_cfl >= remaining {
            (remaining, length, true)
        } else {
            (d_xi_cfl, xi + d_xi_cfl, false)
        };

        let ctx = StepContext { grid: &grid, gas, walls, cfg, xi, d_xi };
        let next = match ctx.advance(&cur, &eval, &mut field.diagnostics) {
            Ok(n) => n,
            Err(error) => return Err(SolveFailure { error, partial: Some(Box::new(field)) }),
        };

        cur = next;
        xi = xi_next;
        field.diagnostics.steps += 1;
        steps_since_store += 1;

        if last {
            store(&mut field, xi, &cur);
            break;
        }
        if steps_since_store >= store_stride {
            store(&mut field, xi, &cur);
            steps_since_store = 0;
        }
    }

    let trace = match inverse_transform(&field, walls, gas) {
        Ok(t) => t,
        Err(error) => {
            return Err(SolveFailure { error: error.into(), partial: Some(Box::new(field)) });
        }
    };
    let mass = match verify_mass_conservation(&field, &trace, gas) {
        Ok(m) => m,
        Err(error) => {
            return Err(SolveFailure { error: error.into(), partial: Some(Box::new(field)) });
        }
    };
    Ok(SolveOutput { field, trace, mass, compat })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gas::{char_from_euler, EulerState};

    fn gas(q0: f64) -> GasConstants {
        GasConstants::new(1.4, 1.0, 0.0, q0, 2.0, 1.0).unwrap()
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
    fn wall_reflect_straight() {
        let (omega, p, z) = wall_reflect(0.3323882, 0.0, 0.3092952, Side::Upper).unwrap();
        assert_eq!(omega, 0.0);
        assert_close(z, -0.3323882, 1e-15);
        assert_close(p, 0.3323882 / 0.3092952, 1e-12);
    }

    #[test]
    fn wall_reflect_sloped() {
        let (omega, _, z) = wall_reflect(0.3323882, 0.01, 0.3092952, Side::Upper).unwrap();
        assert_eq!(omega, 0.01);
        assert_close(z, -0.3123882, 1e-15);
    }

    #[test]
    fn cd_solve_symmetric_input() {
        let r = cd_interface_solve(0.31, 0.42, 0.05, 0.05).unwrap();
        assert_close(r.omega, 0.05, 1e-15);
        assert_eq!(r.p, 0.0);
    }

    #[test]
    fn cd_solve_reference_values() {
        let r = cd_interface_solve(0.3092952, 0.2969568, -0.01, 0.02).unwrap();
        assert_close(r.p, 0.0494844, 1e-7);
        assert_close(r.omega, 0.0053053, 1e-7);
        assert_close(r.z_plus_upper, 0.0206106, 1e-7);
    }

    #[test]
    fn cd_solve_equal_impedance_transmits() {
        let r = cd_interface_solve(0.4, 0.4, -0.03, 0.07).unwrap();
        assert_close(r.z_plus_upper, 0.07, 1e-15);
        assert_close(r.z_minus_lower, -0.03, 1e-15);
    }

    fn solve_background(n_eta: usize, length: f64) -> SolveOutput {
        let cfg = SolverConfig { n_eta, ..Default::default() };
        solve(&backgrounds(), &WallSpec::straight(length), &gas(0.0), &cfg, false)
            .map_err(|e| e.error.to_string())
            .unwrap()
    }

    #[test]
    fn background_march_stays_constant() {
        let g = gas(0.0);
        let out = solve_background(16, 1.0);
        let bg_up = char_from_euler(&backgrounds().upper.background, &g).unwrap();
        let bg_lo = char_from_euler(&backgrounds().lower.background, &g).unwrap();
        let mut dev: f64 = 0.0;
        for s in 0..out.field.stations.len() {
            for cs in &out.field.upper[s] {
                dev = dev
                    .max((cs.omega - bg_up.omega).abs())
                    .max((cs.p - bg_up.p).abs())
                    .max((cs.b - bg_up.b).abs())
                    .max((cs.s - bg_up.s).abs())
                    .max(cs.y.abs());
            }
            for cs in &out.field.lower[s] {
                dev = dev
                    .max((cs.omega - bg_lo.omega).abs())
                    .max((cs.p - bg_lo.p).abs())
                    .max((cs.b - bg_lo.b).abs())
                    .max((cs.s - bg_lo.s).abs())
                    .max(cs.y.abs());
            }
        }
        assert!(dev <= 1e-13, "background drifted by {dev}");
        assert_eq!(out.field.max_cd_mismatch(), 0.0);
        assert_eq!(out.field.diagnostics.y_clamp_events, 0);
    }

    #[test]
    fn solve_is_deterministic() {
        let a = solve_background(12, 0.5);
        let b = solve_background(12, 0.5);
        assert_eq!(a.field.stations, b.field.stations);
        for s in 0..a.field.stations.len() {
            for (x, y) in a.field.upper[s].iter().zip(&b.field.upper[s]) {
                assert!(x == y, "nondeterministic slice state");
            }
        }
    }

    fn uniform_pair(grid: &LagrangianGrid, up: CharState, lo: CharState) -> SlicePair {
        SlicePair {
            upper: vec![up; grid.eta_upper.len()],
            lower: vec![lo; grid.eta_lower.len()],
        }
    }

    fn reacting_inlet(g: &GasConstants, y0: f64) -> (LagrangianGrid, SlicePair) {
        let mut inflow = backgrounds();
        inflow.upper.background.y = y0;
        inflow.lower.background.y = y0;
        let slices = inflow_to_lagrangian(&inflow, &WallSpec::straight(4.0), g, 16).unwrap();
        let up = slices.upper[0];
        let lo = slices.lower[0];
        let grid = slices.grid;
        (grid.clone(), uniform_pair(&grid, up, lo))
    }

    #[test]
    fn streamline_decay_single_step() {
        // inert energy release (q0 = 0) leaves only the depletion equation
        let g = gas(0.0);
        let (grid, slice) = reacting_inlet(&g, 0.1);
        let walls = WallSpec::straight(4.0);
        let cfg = SolverConfig { n_eta: 16, ..Default::default() };
        let ctx = StepContext { grid: &grid, gas: &g, walls: &walls, cfg: &cfg, xi: 0.0, d_xi: 1e-2 };
        let eval = eval_pair(&slice, &g, 0.0).unwrap();
        let mut diag = Diagnostics::default();
        let next = ctx.advance(&slice, &eval, &mut diag).unwrap();

        let phi = g.reaction_rate(5.0 / 7.0);
        let z = phi * 1e-2 / (2.0 * 2.0);
        let expected = 0.1 * (1.0 - z) / (1.0 + z);
        let y_mid = next.upper[8].y;
        assert_close(y_mid, expected, 1e-14);
        assert_close(y_mid, 0.0999783, 5e-8);
        // B and S untouched when q0 = 0
        assert_eq!(next.upper[8].b, slice.upper[8].b);
        assert_eq!(next.upper[8].s, slice.upper[8].s);
    }

    #[test]
    fn heat_release_single_step() {
        let g = gas(0.5);
        let (grid, slice) = reacting_inlet(&g, 0.1);
        let walls = WallSpec::straight(4.0);
        let cfg = SolverConfig { n_eta: 16, ..Default::default() };
        let ctx = StepContext { grid: &grid, gas: &g, walls: &walls, cfg: &cfg, xi: 0.0, d_xi: 1e-2 };
        let eval = eval_pair(&slice, &g, 0.0).unwrap();
        let mut diag = Diagnostics::default();
        let next = ctx.advance(&slice, &eval, &mut diag).unwrap();
        let delta_b = next.upper[8].b - slice.upper[8].b;
        assert_close(delta_b, 1.0859e-5, 2e-9);
        // T dS = dB along the streamline
        let delta_s = next.upper[8].s - slice.upper[8].s;
        assert!(delta_s > 0.0, "entropy must rise with heat release");
        assert_close(delta_s, delta_b / (5.0 / 7.0), 1e-9);
    }

    #[test]
    fn subsonic_inlet_rejected() {
        let mut inflow = backgrounds();
        inflow.upper.background.u = 0.9; // below the background sound speed of 1
        let err = solve(
            &inflow,
            &WallSpec::straight(1.0),
            &gas(0.0),
            &SolverConfig { n_eta: 8, ..Default::default() },
            false,
        )
        .unwrap_err();
        assert!(matches!(err.error, SolveError::SubsonicInlet { .. }), "{}", err.error);
        assert_eq!(err.error.class(), FailureClass::Physical);
    }

    #[test]
    fn incompatible_walls_gated() {
        let mut walls = WallSpec::straight(1.0);
        walls.upper.bumps.push(crate::geometry::Bump {
            center: 0.25,
            width: 0.5,
            amplitude: 0.01,
        });
        let cfg = SolverConfig { n_eta: 8, ..Default::default() };
        let err = solve(&backgrounds(), &walls, &gas(0.0), &cfg, false).unwrap_err();
        assert!(matches!(err.error, SolveError::Incompatible { .. }));
        assert_eq!(err.error.class(), FailureClass::Gate);
        // override lets the run proceed
        assert!(solve(&backgrounds(), &walls, &gas(0.0), &cfg, true).is_ok());
    }

    #[test]
    fn first_order_scheme_also_preserves_background() {
        let cfg = SolverConfig { n_eta: 12, order: SchemeOrder::First, ..Default::default() };
        let out = solve(&backgrounds(), &WallSpec::straight(1.0), &gas(0.0), &cfg, false)
            .map_err(|e| e.error.to_string())
            .unwrap();
        let g = gas(0.0);
        let bg = char_from_euler(&backgrounds().upper.background, &g).unwrap();
        for slice in &out.field.upper {
            for cs in slice {
                assert!((cs.p - bg.p).abs() <= 1e-13 && (cs.omega).abs() <= 1e-13);
            }
        }
        assert_eq!(out.field.diagnostics.corrector_iters_total, 0);
    }

    #[test]
    fn tiny_grid_is_rejected() {
        let cfg = SolverConfig { n_eta: 4, ..Default::default() };
        let err = solve(&backgrounds(), &WallSpec::straight(1.0), &gas(0.0), &cfg, false)
            .unwrap_err();
        assert!(matches!(err.error, SolveError::InvalidConfig(_)));
    }

    #[test]
    fn zero_epsilon_matches_background_init() {
        let g = gas(0.0);
        let mut inflow = backgrounds().with_epsilon(0.0);
        inflow.upper.u.bumps.push(crate::geometry::Bump {
            center: 0.5,
            width: 0.3,
            amplitude: 2.0,
        });
        let cfg = SolverConfig { n_eta: 8, ..Default::default() };
        let a = initialize(&inflow, &WallSpec::straight(1.0), &g, &cfg).unwrap();
        let b = initialize(&backgrounds(), &WallSpec::straight(1.0), &g, &cfg).unwrap();
        for (x, y) in a.upper.iter().zip(&b.upper) {
            assert!(x == y);
        }
    }

    #[test]
    fn interface_pair_equal_by_construction() {
        let mut walls = WallSpec::straight(2.0);
        walls.upper.bumps.push(crate::geometry::Bump {
            center: 1.0,
            width: 0.6,
            amplitude: 0.02,
        });
        let cfg = SolverConfig { n_eta: 24, ..Default::default() };
        let out = solve(&backgrounds(), &walls, &gas(0.0), &cfg, false).unwrap();
        assert_eq!(out.field.max_cd_mismatch(), 0.0);
        // and the interface actually moves
        let max_gcd = out.trace.g_cd.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        assert!(max_gcd > 1e-6, "wall bump should deflect the interface, got {max_gcd}");
    }

}
