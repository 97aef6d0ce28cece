//! Validation harness: transverse integral averages of the solved field,
//! error norms against the reduced model, the perturbation-size
//! convergence study, and the constant-data uniqueness regression.

use serde::Serialize;
use thiserror::Error;

use crate::config::{AreaMode, RunSetup};
use crate::gas::{char_from_euler, euler_from_char, CharState, EulerState, GasConstants};
use crate::lagrangian::{LagrangianError, PhysicalTrace};
use crate::numerics::{fit_line, integrate_uniform, linear_interp, CubicSpline};
use crate::quasi1d::{
    area_from_geometry, averaged_inflow, integrate, CdCurve, Quasi1DError, Quasi1DRun,
    Quasi1DState,
};
use crate::solver::{solve, FlowField, SolveFailure, SolveOutput};

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("station grids differ; the reduced model must be sampled at the field's stations")]
    GridMismatch,
    #[error(transparent)]
    Lagrangian(#[from] LagrangianError),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Solve(SolveFailure),
    #[error(transparent)]
    Quasi1D(#[from] Quasi1DError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("study needs at least 3 strictly decreasing epsilons, got {0:?}")]
    BadEpsilons(Vec<f64>),
    #[error("study run at epsilon = {epsilon} failed: {message}")]
    StudyRunFailed { epsilon: f64, message: String },
    #[error("not a background run: {0}")]
    NotBackground(String),
}

impl From<SolveFailure> for PipelineError {
    fn from(f: SolveFailure) -> Self {
        PipelineError::Solve(f)
    }
}

/// Per-station transverse averages of `(u, p, rho, Y)` for each region.
#[derive(Debug, Clone)]
pub struct AverageProfile {
    pub stations: Vec<f64>,
    pub upper: Vec<Quasi1DState>,
    pub lower: Vec<Quasi1DState>,
}

/// Average an arbitrary node quantity over one region at one station,
/// weighting with the inverse mass-flux density (the change of variables
/// back to physical width). Returns `(average, width)`.
pub fn region_average(
    eta: &[f64],
    states: &[CharState],
    gas: &GasConstants,
    quantity: impl Fn(&EulerState, &CharState) -> f64,
) -> Result<(f64, f64), LagrangianError> {
    let d_eta = (eta[eta.len() - 1] - eta[0]) / (eta.len() - 1) as f64;
    // the lower region's mass-flux levels are negative
    let side = if eta[0] < 0.0 {
        crate::geometry::Side::Lower
    } else {
        crate::geometry::Side::Upper
    };
    let mut w = Vec::with_capacity(states.len());
    let mut vw = Vec::with_capacity(states.len());
    for (index, cs) in states.iter().enumerate() {
        let eu = euler_from_char(cs, gas).map_err(|source| LagrangianError::StateRecovery {
            xi: f64::NAN,
            side,
            index,
            source,
        })?;
        let weight = 1.0 / (eu.rho * eu.u);
        w.push(weight);
        vw.push(quantity(&eu, cs) * weight);
    }
    let width = integrate_uniform(&w, d_eta);
    Ok((integrate_uniform(&vw, d_eta) / width, width))
}

/// Transverse integral averages of the solved field at every stored station.
pub fn integral_average(
    field: &FlowField,
    _trace: &PhysicalTrace,
    gas: &GasConstants,
) -> Result<AverageProfile, LagrangianError> {
    let mut profile = AverageProfile {
        stations: field.stations.clone(),
        upper: Vec::with_capacity(field.stations.len()),
        lower: Vec::with_capacity(field.stations.len()),
    };
    for s in 0..field.stations.len() {
        for (side, states, out) in [
            (crate::geometry::Side::Upper, &field.upper[s], &mut profile.upper),
            (crate::geometry::Side::Lower, &field.lower[s], &mut profile.lower),
        ] {
            let eta = field.grid.eta(side);
            let (u, _) = region_average(eta, states, gas, |eu, _| eu.u)?;
            let (p, _) = region_average(eta, states, gas, |eu, _| eu.p)?;
            let (rho, _) = region_average(eta, states, gas, |eu, _| eu.rho)?;
            let (y, _) = region_average(eta, states, gas, |_, cs| cs.y)?;
            out.push(Quasi1DState { u, p, rho, y });
        }
    }
    Ok(profile)
}

/// Per-component nondimensionalization used by every error norm.
#[derive(Debug, Clone, Copy)]
pub struct ErrorScales {
    pub upper: [f64; 4],
    pub lower: [f64; 4],
}

impl ErrorScales {
    /// Background magnitudes per component; the fuel fraction uses 1.
    pub fn from_backgrounds(upper: &EulerState, lower: &EulerState) -> Self {
        ErrorScales {
            upper: [upper.u.abs(), upper.p.abs(), upper.rho.abs(), 1.0],
            lower: [lower.u.abs(), lower.p.abs(), lower.rho.abs(), 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct ComponentNorms {
    pub u: f64,
    pub p: f64,
    pub rho: f64,
    pub y: f64,
}

impl ComponentNorms {
    pub fn total(&self) -> f64 {
        self.u.max(self.p).max(self.rho).max(self.y)
    }

    fn absorb(&mut self, diff: [f64; 4]) {
        self.u = self.u.max(diff[0]);
        self.p = self.p.max(diff[1]);
        self.rho = self.rho.max(diff[2]);
        self.y = self.y.max(diff[3]);
    }
}

/// Sup-norm mismatch between the field averages and the reduced model,
/// with a finite-difference derivative seminorm as a diagnostic.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub sup: ComponentNorms,
    pub sup_total: f64,
    pub deriv_sup: ComponentNorms,
    pub deriv_sup_total: f64,
}

fn state_diff(a: &Quasi1DState, b: &Quasi1DState, scales: &[f64; 4]) -> [f64; 4] {
    [
        (a.u - b.u).abs() / scales[0],
        (a.p - b.p).abs() / scales[1],
        (a.rho - b.rho).abs() / scales[2],
        (a.y - b.y).abs() / scales[3],
    ]
}

/// Compare averaged profiles with reduced-model runs on the same stations.
pub fn compare(
    avg: &AverageProfile,
    upper_run: &Quasi1DRun,
    lower_run: &Quasi1DRun,
    scales: &ErrorScales,
) -> Result<ErrorReport, ValidationError> {
    for run in [upper_run, lower_run] {
        if run.x.len() != avg.stations.len()
            || run.x.iter().zip(&avg.stations).any(|(a, b)| a != b)
        {
            return Err(ValidationError::GridMismatch);
        }
    }
    let mut sup = ComponentNorms::default();
    let mut deriv = ComponentNorms::default();
    for (side_avg, run, scale) in [
        (&avg.upper, upper_run, &scales.upper),
        (&avg.lower, lower_run, &scales.lower),
    ] {
        let n = side_avg.len();
        let diffs: Vec<[f64; 4]> = side_avg
            .iter()
            .zip(&run.states)
            .map(|(a, b)| {
                [
                    (a.u - b.u) / scale[0],
                    (a.p - b.p) / scale[1],
                    (a.rho - b.rho) / scale[2],
                    (a.y - b.y) / scale[3],
                ]
            })
            .collect();
        for d in &diffs {
            sup.absorb([d[0].abs(), d[1].abs(), d[2].abs(), d[3].abs()]);
        }
        for i in 1..n.saturating_sub(1) {
            let dx = avg.stations[i + 1] - avg.stations[i - 1];
            let fd: Vec<f64> = (0..4)
                .map(|k| ((diffs[i + 1][k] - diffs[i - 1][k]) / dx).abs())
                .collect();
            deriv.absorb([fd[0], fd[1], fd[2], fd[3]]);
        }
    }
    Ok(ErrorReport {
        sup,
        sup_total: sup.total(),
        deriv_sup: deriv,
        deriv_sup_total: deriv.total(),
    })
}

/// Everything one validation run produces.
pub struct PipelineOutput {
    pub solve: SolveOutput,
    pub averages: AverageProfile,
    pub q1d_upper: Quasi1DRun,
    pub q1d_lower: Quasi1DRun,
    pub report: ErrorReport,
}

/// Solve, average, integrate the reduced model on the same stations, and
/// compare. The reduced model's area functions use the reconstructed
/// interface (spline over the stored stations) unless the straight-
/// interface mode is requested.
pub fn run_pipeline(setup: &RunSetup) -> Result<PipelineOutput, PipelineError> {
    let out = solve(
        &setup.inflow,
        &setup.walls,
        &setup.gas,
        &setup.solver,
        setup.allow_incompatible,
    )?;
    let averages = integral_average(&out.field, &out.trace, &setup.gas)
        .map_err(ValidationError::Lagrangian)?;

    let cd = match setup.quasi1d.area_mode {
        AreaMode::Straight => CdCurve::Straight,
        AreaMode::Coupled => {
            CdCurve::Spline(CubicSpline::fit(&out.field.stations, &out.trace.g_cd))
        }
    };
    let (area_up, area_lo) = area_from_geometry(&setup.walls, cd)?;
    let (init_up, init_lo) = averaged_inflow(&setup.inflow, &setup.walls);
    let h_target = setup.walls.length / setup.quasi1d.n_steps as f64;
    let q1d_upper = integrate(&init_up, &area_up, &setup.gas, &out.field.stations, h_target)?;
    let q1d_lower = integrate(&init_lo, &area_lo, &setup.gas, &out.field.stations, h_target)?;

    let scales = ErrorScales::from_backgrounds(
        &setup.inflow.upper.background,
        &setup.inflow.lower.background,
    );
    let report = compare(&averages, &q1d_upper, &q1d_lower, &scales)?;
    Ok(PipelineOutput { solve: out, averages, q1d_upper, q1d_lower, report })
}

/// Sup difference between two averaged profiles, interpolating the finer
/// profile onto the coarser stations (the declared resampling rule for
/// cross-resolution comparisons).
pub fn sup_profile_difference(
    coarse: &AverageProfile,
    fine: &AverageProfile,
    scales: &ErrorScales,
) -> f64 {
    let mut worst: f64 = 0.0;
    for (side_coarse, side_fine, scale) in [
        (&coarse.upper, &fine.upper, &scales.upper),
        (&coarse.lower, &fine.lower, &scales.lower),
    ] {
        let fu: Vec<f64> = side_fine.iter().map(|s| s.u).collect();
        let fp: Vec<f64> = side_fine.iter().map(|s| s.p).collect();
        let fr: Vec<f64> = side_fine.iter().map(|s| s.rho).collect();
        let fy: Vec<f64> = side_fine.iter().map(|s| s.y).collect();
        for (x, s) in coarse.stations.iter().zip(side_coarse) {
            let interp = Quasi1DState {
                u: linear_interp(&fine.stations, &fu, *x),
                p: linear_interp(&fine.stations, &fp, *x),
                rho: linear_interp(&fine.stations, &fr, *x),
                y: linear_interp(&fine.stations, &fy, *x),
            };
            for d in state_diff(s, &interp, scale) {
                worst = worst.max(d);
            }
        }
    }
    worst
}

/// Solve-and-average at the configured resolution.
fn averaged_at(setup: &RunSetup, n_eta: usize) -> Result<AverageProfile, PipelineError> {
    let mut s = setup.clone();
    s.solver.n_eta = n_eta;
    let out = solve(&s.inflow, &s.walls, &s.gas, &s.solver, s.allow_incompatible)?;
    integral_average(&out.field, &out.trace, &s.gas)
        .map_err(|e| PipelineError::Validation(ValidationError::Lagrangian(e)))
}

/// Grid-resolution certificate for a study: the averaged-profile self-
/// refinement difference between `n_eta` and `2 n_eta` at the smallest
/// perturbation size.
pub fn self_refinement_certificate(setup: &RunSetup, eps: f64) -> Result<f64, PipelineError> {
    let scaled = setup.scaled_for_epsilon(eps);
    let coarse = averaged_at(&scaled, scaled.solver.n_eta)?;
    let fine = averaged_at(&scaled, 2 * scaled.solver.n_eta)?;
    let scales = ErrorScales::from_backgrounds(
        &setup.inflow.upper.background,
        &setup.inflow.lower.background,
    );
    Ok(sup_profile_difference(&coarse, &fine, &scales))
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyPoint {
    pub epsilon: f64,
    pub sup: ComponentNorms,
    pub sup_total: f64,
}

/// Outcome of the perturbation-size convergence study.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceStudy {
    pub points: Vec<StudyPoint>,
    pub certificate: f64,
    pub certificate_bound: f64,
    pub certified: bool,
    pub slope: Option<f64>,
    pub r_squared: Option<f64>,
    pub slope_without_largest: Option<f64>,
    pub n_eta: usize,
    pub passed: bool,
    pub verdict: String,
}

/// Run the full pipeline once per perturbation size (wall and inflow
/// shapes scaled together), fit the log-log error slope, and gate the fit
/// behind the resolution certificate.
pub fn convergence_study(
    setup: &RunSetup,
    epsilons: &[f64],
    threads: usize,
) -> Result<ConvergenceStudy, PipelineError> {
    if epsilons.len() < 3 || epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(PipelineError::BadEpsilons(epsilons.to_vec()));
    }
    let eps_min = *epsilons.last().unwrap();
    let certificate = self_refinement_certificate(setup, eps_min)?;
    let certificate_bound = eps_min * eps_min / 10.0;
    let certified = certificate < certificate_bound;

    if !certified {
        return Ok(ConvergenceStudy {
            points: Vec::new(),
            certificate,
            certificate_bound,
            certified,
            slope: None,
            r_squared: None,
            slope_without_largest: None,
            n_eta: setup.solver.n_eta,
            passed: false,
            verdict: "discretization-dominated: certificate failed, no slope reported".into(),
        });
    }

    // independent runs per perturbation size, assembled in input order
    let mut results: Vec<Option<Result<StudyPoint, String>>> = vec![None; epsilons.len()];
    let workers = threads.clamp(1, epsilons.len());
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots = std::sync::Mutex::new(&mut results);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= epsilons.len() {
                    break;
                }
                let eps = epsilons[i];
                let point = run_pipeline(&setup.scaled_for_epsilon(eps))
                    .map(|out| StudyPoint {
                        epsilon: eps,
                        sup: out.report.sup,
                        sup_total: out.report.sup_total,
                    })
                    .map_err(|e| e.to_string());
                slots.lock().unwrap()[i] = Some(point);
            });
        }
    });

    let mut points = Vec::with_capacity(epsilons.len());
    for (i, slot) in results.into_iter().enumerate() {
        match slot.expect("worker must fill every slot") {
            Ok(p) => points.push(p),
            Err(message) => {
                return Err(PipelineError::StudyRunFailed { epsilon: epsilons[i], message });
            }
        }
    }

    let ln_eps: Vec<f64> = points.iter().map(|p| p.epsilon.ln()).collect();
    let ln_err: Vec<f64> = points.iter().map(|p| p.sup_total.ln()).collect();
    let (slope, _, r2) = fit_line(&ln_eps, &ln_err);
    let (slope_wo, _, _) = fit_line(&ln_eps[1..], &ln_err[1..]);
    let passed = slope >= 1.8 && r2 >= 0.98;
    Ok(ConvergenceStudy {
        points,
        certificate,
        certificate_bound,
        certified,
        slope: Some(slope),
        r_squared: Some(r2),
        slope_without_largest: Some(slope_wo),
        n_eta: setup.solver.n_eta,
        passed,
        verdict: if passed {
            format!("slope {slope:.3} with r^2 {r2:.4}")
        } else {
            format!("fit failed the gate: slope {slope:.3}, r^2 {r2:.4}")
        },
    })
}

/// Result of the constant-data uniqueness regression.
#[derive(Debug, Clone, Serialize)]
pub struct BackgroundCheck {
    pub max_state_deviation: f64,
    pub max_abs_g_cd: f64,
    pub passed: bool,
}

/// Constant supersonic inflow through a straight nozzle must reproduce the
/// piecewise-constant state with a flat interface to round-off.
pub fn background_uniqueness_check(setup: &RunSetup) -> Result<BackgroundCheck, PipelineError> {
    if !setup.inflow.is_constant() {
        return Err(PipelineError::NotBackground(
            "inflow carries perturbation profiles with a nonzero scale".into(),
        ));
    }
    if setup.walls.has_bumps() {
        return Err(PipelineError::NotBackground("walls are not straight".into()));
    }
    for (side, st) in [
        ("upper", &setup.inflow.upper.background),
        ("lower", &setup.inflow.lower.background),
    ] {
        if st.y != 0.0 {
            return Err(PipelineError::NotBackground(format!(
                "{side} background carries unburned fuel Y = {}",
                st.y
            )));
        }
        if st.v != 0.0 {
            return Err(PipelineError::NotBackground(format!(
                "{side} background has transverse velocity v = {}",
                st.v
            )));
        }
    }

    let out = solve(
        &setup.inflow,
        &setup.walls,
        &setup.gas,
        &setup.solver,
        setup.allow_incompatible,
    )?;
    let bg_up = char_from_euler(&setup.inflow.upper.background, &setup.gas)
        .map_err(|e| PipelineError::NotBackground(e.to_string()))?;
    let bg_lo = char_from_euler(&setup.inflow.lower.background, &setup.gas)
        .map_err(|e| PipelineError::NotBackground(e.to_string()))?;

    let mut dev: f64 = 0.0;
    for s in 0..out.field.stations.len() {
        for (states, bg, bg_euler) in [
            (&out.field.upper[s], &bg_up, &setup.inflow.upper.background),
            (&out.field.lower[s], &bg_lo, &setup.inflow.lower.background),
        ] {
            for cs in states.iter() {
                dev = dev
                    .max((cs.omega - bg.omega).abs())
                    .max((cs.p - bg.p).abs())
                    .max((cs.b - bg.b).abs())
                    .max((cs.s - bg.s).abs())
                    .max((cs.y - bg.y).abs());
                if let Ok(eu) = euler_from_char(cs, &setup.gas) {
                    dev = dev
                        .max((eu.u - bg_euler.u).abs())
                        .max((eu.v - bg_euler.v).abs())
                        .max((eu.rho - bg_euler.rho).abs());
                }
            }
        }
    }
    let max_abs_g_cd = out.trace.g_cd.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    Ok(BackgroundCheck {
        max_state_deviation: dev,
        max_abs_g_cd,
        passed: dev <= 1e-12 && max_abs_g_cd <= 1e-12,
    })
}
