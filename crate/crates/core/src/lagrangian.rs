//! Mass-flux coordinate transform: inlet mass fluxes, the map between
//! physical inlet ordinates and transverse mass-flux levels, the inverse
//! transform back to physical space, and the interface-curve
//! reconstruction with its mass-conservation self-check.

use thiserror::Error;

use crate::gas::{char_from_euler, euler_from_char, CharState, GasConstants, GasError};
use crate::geometry::{InflowSpec, Side, WallSpec};
use crate::numerics::integrate_nonuniform;
use crate::solver::FlowField;

/// Number of cells in each inlet cumulative-flux table.
const INLET_TABLE_CELLS: usize = 8192;

#[derive(Debug, Error)]
pub enum LagrangianError {
    #[error("inlet mass flux density not positive at y = {y}: rho*u = {value}")]
    NonPositiveFluxDensity { y: f64, value: f64 },
    #[error("non-finite inlet integrand at y = {y}")]
    NonFiniteIntegrand { y: f64 },
    #[error("transform degenerate at station {xi}, {side:?} node {index}: rho*u = {value}")]
    DegenerateTransform { xi: f64, side: Side, index: usize, value: f64 },
    #[error("state recovery failed at station {xi}, {side:?} node {index}: {source}")]
    StateRecovery { xi: f64, side: Side, index: usize, source: GasError },
    #[error("inlet state conversion failed at y = {y}: {source}")]
    InletState { y: f64, source: GasError },
}

/// Total mass flux through each inlet sub-segment.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MassFlux {
    pub m_plus: f64,
    pub m_minus: f64,
}

/// Cumulative inlet mass flux on one segment, tabulated on a fine uniform
/// grid with a piecewise-quadratic rule. The monotone solve inverts the
/// same piecewise polynomial the table was built from, so the map and its
/// inverse agree to round-off.
pub struct InletTransform {
    y_lo: f64,
    h: f64,
    integrand: Vec<f64>,
    cumulative: Vec<f64>,
}

impl InletTransform {
    pub fn build(
        inflow: &InflowSpec,
        side: Side,
        y_lo: f64,
        y_hi: f64,
    ) -> Result<Self, LagrangianError> {
        let n = INLET_TABLE_CELLS;
        let h = (y_hi - y_lo) / n as f64;
        let data = inflow.side(side);
        let mut integrand = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let y = y_lo + h * i as f64;
            let st = data.state_at(y, inflow.epsilon);
            let v = st.rho * st.u;
            if !v.is_finite() {
                return Err(LagrangianError::NonFiniteIntegrand { y });
            }
            if v <= 0.0 {
                return Err(LagrangianError::NonPositiveFluxDensity { y, value: v });
            }
            integrand.push(v);
        }
        let cumulative = crate::numerics::cumulative_uniform(&integrand, h);
        Ok(InletTransform { y_lo, h, integrand, cumulative })
    }

    /// Total flux through the segment.
    pub fn total(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Quadratic integrand model on cell `k`, as `(c0, c1, c2)` in the
    /// local coordinate `t = y - y_k`. Matches the table construction.
    fn cell_poly(&self, k: usize) -> (f64, f64, f64) {
        let v = &self.integrand;
        let h = self.h;
        if k == 0 {
            let c1 = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
            let c2 = (v[0] - 2.0 * v[1] + v[2]) / (2.0 * h * h);
            (v[0], c1, c2)
        } else {
            let c1 = (v[k + 1] - v[k - 1]) / (2.0 * h);
            let c2 = (v[k + 1] - 2.0 * v[k] + v[k - 1]) / (2.0 * h * h);
            (v[k], c1, c2)
        }
    }

    fn cell_increment(&self, k: usize, t: f64) -> f64 {
        let (c0, c1, c2) = self.cell_poly(k);
        t * (c0 + t * (c1 / 2.0 + t * c2 / 3.0))
    }

    /// Cumulative flux from the segment start to `y`.
    pub fn cumulative_of_y(&self, y: f64) -> f64 {
        let n = self.cumulative.len() - 1;
        let pos = (y - self.y_lo) / self.h;
        if pos <= 0.0 {
            return 0.0;
        }
        if pos >= n as f64 {
            return self.total();
        }
        let k = (pos.floor() as usize).min(n - 1);
        self.cumulative[k] + self.cell_increment(k, y - (self.y_lo + self.h * k as f64))
    }

    /// Physical ordinate at a cumulative-flux level, by a monotone solve
    /// within the bracketing table cell.
    pub fn y_of_cumulative(&self, target: f64) -> f64 {
        let n = self.cumulative.len() - 1;
        if target <= 0.0 {
            return self.y_lo;
        }
        let total = self.total();
        if target >= total {
            return self.y_lo + self.h * n as f64;
        }
        let k = match self
            .cumulative
            .binary_search_by(|v| v.partial_cmp(&target).unwrap())
        {
            Ok(i) => return self.y_lo + self.h * i as f64,
            Err(i) => i - 1,
        };
        let want = target - self.cumulative[k];
        let mut lo = 0.0;
        let mut hi = self.h;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.cell_increment(k, mid) < want {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-16 * self.h {
                break;
            }
        }
        self.y_lo + self.h * k as f64 + 0.5 * (lo + hi)
    }
}

/// Inlet mass fluxes through both sub-segments.
pub fn mass_flux(inflow: &InflowSpec, walls: &WallSpec) -> Result<MassFlux, LagrangianError> {
    let g_up = walls.upper.eval(0.0).0;
    let g_lo = walls.lower.eval(0.0).0;
    let upper = InletTransform::build(inflow, Side::Upper, 0.0, g_up)?;
    let lower = InletTransform::build(inflow, Side::Lower, g_lo, 0.0)?;
    Ok(MassFlux { m_plus: upper.total(), m_minus: lower.total() })
}

/// Transverse grids of both regions. The interface carries a node in each
/// region (`eta_upper[0]` and the last entry of `eta_lower`).
#[derive(Debug, Clone)]
pub struct LagrangianGrid {
    pub mass_flux: MassFlux,
    /// `0 = interface` up to `m_plus = upper wall`, `n_eta + 1` nodes.
    pub eta_upper: Vec<f64>,
    /// `-m_minus = lower wall` up to `0 = interface`, `n_eta + 1` nodes.
    pub eta_lower: Vec<f64>,
}

impl LagrangianGrid {
    pub fn eta(&self, side: Side) -> &[f64] {
        match side {
            Side::Upper => &self.eta_upper,
            Side::Lower => &self.eta_lower,
        }
    }

    pub fn d_eta(&self, side: Side) -> f64 {
        let e = self.eta(side);
        (e[e.len() - 1] - e[0]) / (e.len() - 1) as f64
    }

    /// Node index carrying the interface trace for `side`.
    pub fn cd_index(&self, side: Side) -> usize {
        match side {
            Side::Upper => 0,
            Side::Lower => self.eta_lower.len() - 1,
        }
    }

    /// Node index on the solid wall for `side`.
    pub fn wall_index(&self, side: Side) -> usize {
        match side {
            Side::Upper => self.eta_upper.len() - 1,
            Side::Lower => 0,
        }
    }
}

/// Inlet data mapped onto the mass-flux grid.
pub struct InletSlices {
    pub grid: LagrangianGrid,
    pub upper: Vec<CharState>,
    pub lower: Vec<CharState>,
    pub y_upper: Vec<f64>,
    pub y_lower: Vec<f64>,
}

/// Map the physical inlet data onto `n_eta + 1` uniform mass-flux nodes
/// per region and convert to working variables.
pub fn inflow_to_lagrangian(
    inflow: &InflowSpec,
    walls: &WallSpec,
    gas: &GasConstants,
    n_eta: usize,
) -> Result<InletSlices, LagrangianError> {
    let g_up = walls.upper.eval(0.0).0;
    let g_lo = walls.lower.eval(0.0).0;
    let up = InletTransform::build(inflow, Side::Upper, 0.0, g_up)?;
    let lo = InletTransform::build(inflow, Side::Lower, g_lo, 0.0)?;
    let m_plus = up.total();
    let m_minus = lo.total();

    let eta_upper: Vec<f64> = (0..=n_eta).map(|j| m_plus * j as f64 / n_eta as f64).collect();
    let eta_lower: Vec<f64> = (0..=n_eta)
        .map(|j| -m_minus * (n_eta - j) as f64 / n_eta as f64)
        .collect();

    let gas_side = |transform: &InletTransform,
                    side: Side,
                    targets: &[f64]|
     -> Result<(Vec<CharState>, Vec<f64>), LagrangianError> {
        let mut states = Vec::with_capacity(targets.len());
        let mut ys = Vec::with_capacity(targets.len());
        for &target in targets {
            let y = transform.y_of_cumulative(target);
            let st = inflow.side(side).state_at(y, inflow.epsilon);
            let cs = char_from_euler(&st, gas)
                .map_err(|source| LagrangianError::InletState { y, source })?;
            states.push(cs);
            ys.push(y);
        }
        Ok((states, ys))
    };

    // upper targets: cumulative flux from y = 0; lower: from y = g_-(0)
    let upper_targets = eta_upper.clone();
    let lower_targets: Vec<f64> = eta_lower.iter().map(|e| e + m_minus).collect();
    let (upper, y_upper) = gas_side(&up, Side::Upper, &upper_targets)?;
    let (lower, y_lower) = gas_side(&lo, Side::Lower, &lower_targets)?;

    Ok(InletSlices {
        grid: LagrangianGrid {
            mass_flux: MassFlux { m_plus, m_minus },
            eta_upper,
            eta_lower,
        },
        upper,
        lower,
        y_upper,
        y_lower,
    })
}

/// Physical-space reconstruction of a solved field: node ordinates,
/// interface curve, and region widths per stored station.
#[derive(Debug, Clone)]
pub struct PhysicalTrace {
    pub stations: Vec<f64>,
    pub y_upper: Vec<Vec<f64>>,
    pub y_lower: Vec<Vec<f64>>,
    pub g_cd: Vec<f64>,
    pub g_cd_prime: Vec<f64>,
    pub width_upper: Vec<f64>,
    pub width_lower: Vec<f64>,
    /// `y` at the upper wall minus `g_+`, a consistency diagnostic.
    pub upper_wall_mismatch: Vec<f64>,
}

/// Invert the mass-flux transform on every stored station.
pub fn inverse_transform(
    field: &FlowField,
    walls: &WallSpec,
    gas: &GasConstants,
) -> Result<PhysicalTrace, LagrangianError> {
    let n_stations = field.stations.len();
    let mut trace = PhysicalTrace {
        stations: field.stations.clone(),
        y_upper: Vec::with_capacity(n_stations),
        y_lower: Vec::with_capacity(n_stations),
        g_cd: Vec::with_capacity(n_stations),
        g_cd_prime: Vec::with_capacity(n_stations),
        width_upper: Vec::with_capacity(n_stations),
        width_lower: Vec::with_capacity(n_stations),
        upper_wall_mismatch: Vec::with_capacity(n_stations),
    };

    let inv_flux = |states: &[CharState], xi: f64, side: Side| -> Result<Vec<f64>, LagrangianError> {
        states
            .iter()
            .enumerate()
            .map(|(index, cs)| {
                let eu = euler_from_char(cs, gas).map_err(|source| {
                    LagrangianError::StateRecovery { xi, side, index, source }
                })?;
                let flux = eu.rho * eu.u;
                if flux <= 0.0 || !flux.is_finite() {
                    return Err(LagrangianError::DegenerateTransform {
                        xi,
                        side,
                        index,
                        value: flux,
                    });
                }
                Ok(1.0 / flux)
            })
            .collect()
    };

    for (s, &xi) in field.stations.iter().enumerate() {
        let w_lower = inv_flux(&field.lower[s], xi, Side::Lower)?;
        let w_upper = inv_flux(&field.upper[s], xi, Side::Upper)?;
        let g_minus = walls.lower.eval(xi).0;
        let g_plus = walls.upper.eval(xi).0;

        let cum_lo = crate::numerics::cumulative_uniform(&w_lower, field.grid.d_eta(Side::Lower));
        let y_lower: Vec<f64> = cum_lo.iter().map(|c| g_minus + c).collect();
        let g_cd = *y_lower.last().unwrap();
        let cum_up = crate::numerics::cumulative_uniform(&w_upper, field.grid.d_eta(Side::Upper));
        let y_upper: Vec<f64> = cum_up.iter().map(|c| g_cd + c).collect();

        let y_wall = *y_upper.last().unwrap();
        trace.width_lower.push(g_cd - g_minus);
        trace.width_upper.push(y_wall - g_cd);
        trace.upper_wall_mismatch.push(y_wall - g_plus);
        trace.g_cd.push(g_cd);
        trace.g_cd_prime.push(field.cd_trace[s].0);
        trace.y_lower.push(y_lower);
        trace.y_upper.push(y_upper);
    }
    Ok(trace)
}

/// Per-station mass-flux drift of the reconstructed physical field.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MassConservationReport {
    pub rel_drift_upper: Vec<f64>,
    pub rel_drift_lower: Vec<f64>,
    pub max_rel_drift: f64,
}

/// Integrate `rho u` over each region in physical space and compare with
/// the inlet mass fluxes.
pub fn verify_mass_conservation(
    field: &FlowField,
    trace: &PhysicalTrace,
    gas: &GasConstants,
) -> Result<MassConservationReport, LagrangianError> {
    let mut report = MassConservationReport {
        rel_drift_upper: Vec::with_capacity(field.stations.len()),
        rel_drift_lower: Vec::with_capacity(field.stations.len()),
        max_rel_drift: 0.0,
    };
    for (s, &xi) in field.stations.iter().enumerate() {
        for (side, states, ys, m_ref) in [
            (
                Side::Upper,
                &field.upper[s],
                &trace.y_upper[s],
                field.grid.mass_flux.m_plus,
            ),
            (
                Side::Lower,
                &field.lower[s],
                &trace.y_lower[s],
                field.grid.mass_flux.m_minus,
            ),
        ] {
            let flux: Result<Vec<f64>, _> = states
                .iter()
                .enumerate()
                .map(|(index, cs)| {
                    euler_from_char(cs, gas)
                        .map(|eu| eu.rho * eu.u)
                        .map_err(|source| LagrangianError::StateRecovery { xi, side, index, source })
                })
                .collect();
            let flux = flux?;
            let m = integrate_nonuniform(ys, &flux);
            let drift = ((m - m_ref) / m_ref).abs();
            match side {
                Side::Upper => report.rel_drift_upper.push(drift),
                Side::Lower => report.rel_drift_lower.push(drift),
            }
            report.max_rel_drift = report.max_rel_drift.max(drift);
        }
    }
    Ok(report)
}
