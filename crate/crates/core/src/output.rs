//! Deterministic artifact writers. Data files carry no timestamps; run
//! summaries identify their inputs by a content hash of the config text.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::gas::{euler_from_char, thermo, GasConstants};
use crate::geometry::Side;
use crate::lagrangian::PhysicalTrace;
use crate::quasi1d::Quasi1DRun;
use crate::solver::{FlowField, SolveOutput};
use crate::validation::{AverageProfile, BackgroundCheck, ConvergenceStudy, ErrorReport};

/// FNV-1a content hash of the configuration text.
pub fn config_hash(text: &str) -> String {
    let mut hash: u64 = 0xcbf29ce484222325;
    for byte in text.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("{hash:016x}")
}

fn writer(path: &Path) -> io::Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// One row per node per exported station:
/// `xi, eta, region, omega, p, B, S, Y, u, v, rho, mach`.
pub fn write_field_csv(
    path: &Path,
    field: &FlowField,
    gas: &GasConstants,
    stride: usize,
) -> io::Result<()> {
    let mut w = writer(path)?;
    writeln!(w, "xi,eta,region,omega,p,B,S,Y,u,v,rho,mach")?;
    let stride = stride.max(1);
    let last = field.stations.len() - 1;
    for s in 0..field.stations.len() {
        if s % stride != 0 && s != last {
            continue;
        }
        let xi = field.stations[s];
        for side in [Side::Upper, Side::Lower] {
            let eta = field.grid.eta(side);
            for (j, cs) in field.states(side)[s].iter().enumerate() {
                let (u, v, rho, mach) = match euler_from_char(cs, gas) {
                    Ok(eu) => {
                        let mach = thermo(&eu, gas).map(|t| t.mach).unwrap_or(f64::NAN);
                        (eu.u, eu.v, eu.rho, mach)
                    }
                    Err(_) => (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
                };
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{},{},{},{}",
                    xi,
                    eta[j],
                    side.label(),
                    cs.omega,
                    cs.p,
                    cs.b,
                    cs.s,
                    cs.y,
                    u,
                    v,
                    rho,
                    mach
                )?;
            }
        }
    }
    w.flush()
}

/// Interface-curve export: `x, g_cd, g_cd_prime, width_upper, width_lower`.
pub fn write_trace_csv(path: &Path, trace: &PhysicalTrace, stride: usize) -> io::Result<()> {
    let mut w = writer(path)?;
    writeln!(w, "x,g_cd,g_cd_prime,width_upper,width_lower")?;
    let stride = stride.max(1);
    let last = trace.stations.len() - 1;
    for s in 0..trace.stations.len() {
        if s % stride != 0 && s != last {
            continue;
        }
        writeln!(
            w,
            "{},{},{},{},{}",
            trace.stations[s],
            trace.g_cd[s],
            trace.g_cd_prime[s],
            trace.width_upper[s],
            trace.width_lower[s]
        )?;
    }
    w.flush()
}

/// Reduced-model export: `x, side, u, p, rho, Y, rhoUA, mach`.
pub fn write_q1d_csv(
    path: &Path,
    upper: &Quasi1DRun,
    lower: &Quasi1DRun,
    gas: &GasConstants,
) -> io::Result<()> {
    let mut w = writer(path)?;
    writeln!(w, "x,side,u,p,rho,Y,rhoUA,mach")?;
    for (side, run) in [("U", upper), ("L", lower)] {
        for (i, st) in run.states.iter().enumerate() {
            let mach = st.u / (gas.gamma * st.p / st.rho).sqrt();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                run.x[i], side, st.u, st.p, st.rho, st.y, run.rho_u_a[i], mach
            )?;
        }
    }
    w.flush()
}

/// Averaged-profile export: `x, side, u_bar, p_bar, rho_bar, y_bar`.
pub fn write_avg_csv(path: &Path, avg: &AverageProfile) -> io::Result<()> {
    let mut w = writer(path)?;
    writeln!(w, "x,side,u_bar,p_bar,rho_bar,y_bar")?;
    for (side, states) in [("U", &avg.upper), ("L", &avg.lower)] {
        for (x, st) in avg.stations.iter().zip(states) {
            writeln!(w, "{},{},{},{},{},{}", x, side, st.u, st.p, st.rho, st.y)?;
        }
    }
    w.flush()
}

/// Study export: one row per perturbation size.
pub fn write_study_csv(path: &Path, study: &ConvergenceStudy) -> io::Result<()> {
    let mut w = writer(path)?;
    writeln!(w, "epsilon,err_sup_u,err_sup_p,err_sup_rho,err_sup_Y,err_sup_total")?;
    for p in &study.points {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            p.epsilon, p.sup.u, p.sup.p, p.sup.rho, p.sup.y, p.sup_total
        )?;
    }
    w.flush()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut w = writer(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()
}

/// Summary block shared by the solve-like commands.
#[derive(Serialize)]
pub struct SolveSummary {
    pub config_hash: String,
    pub m_plus: f64,
    pub m_minus: f64,
    pub stations_stored: usize,
    pub steps: usize,
    pub max_abs_lambda: f64,
    pub max_rel_mass_drift: f64,
    pub max_cd_mismatch: f64,
    pub max_compat_residual: f64,
    pub y_clamp_events: u64,
    pub t_clamp_events: u64,
}

impl SolveSummary {
    pub fn new(out: &SolveOutput, config_hash: String) -> Self {
        SolveSummary {
            config_hash,
            m_plus: out.field.grid.mass_flux.m_plus,
            m_minus: out.field.grid.mass_flux.m_minus,
            stations_stored: out.field.stations.len(),
            steps: out.field.diagnostics.steps,
            max_abs_lambda: out.field.diagnostics.max_abs_lambda,
            max_rel_mass_drift: out.mass.max_rel_drift,
            max_cd_mismatch: out.field.max_cd_mismatch(),
            max_compat_residual: out.compat.max_abs,
            y_clamp_events: out.field.diagnostics.y_clamp_events,
            t_clamp_events: out.field.diagnostics.t_clamp_events,
        }
    }
}

#[derive(Serialize)]
pub struct ValidateSummary {
    pub config_hash: String,
    pub error_report: ErrorReport,
    pub q1d_mass_drift_upper: f64,
    pub q1d_mass_drift_lower: f64,
}

#[derive(Serialize)]
pub struct StudySummary {
    pub config_hash: String,
    pub slope: Option<f64>,
    pub r2: Option<f64>,
    pub certified: bool,
    pub n_eta: usize,
    pub certificate: f64,
    pub certificate_bound: f64,
    pub slope_without_largest: Option<f64>,
    pub passed: bool,
    pub verdict: String,
}

impl StudySummary {
    pub fn new(study: &ConvergenceStudy, config_hash: String) -> Self {
        StudySummary {
            config_hash,
            slope: study.slope,
            r2: study.r_squared,
            certified: study.certified,
            n_eta: study.n_eta,
            certificate: study.certificate,
            certificate_bound: study.certificate_bound,
            slope_without_largest: study.slope_without_largest,
            passed: study.passed,
            verdict: study.verdict.clone(),
        }
    }
}

#[derive(Serialize)]
pub struct BackgroundSummary {
    pub config_hash: String,
    pub max_state_deviation: f64,
    pub max_abs_g_cd: f64,
    pub passed: bool,
}

impl BackgroundSummary {
    pub fn new(check: &BackgroundCheck, config_hash: String) -> Self {
        BackgroundSummary {
            config_hash,
            max_state_deviation: check.max_state_deviation,
            max_abs_g_cd: check.max_abs_g_cd,
            passed: check.passed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_content_sensitive() {
        let a = config_hash("gamma = 1.4");
        let b = config_hash("gamma = 1.4");
        let c = config_hash("gamma = 1.5");
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 16);
    }
}
