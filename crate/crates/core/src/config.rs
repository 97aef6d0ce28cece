//! Run configuration: a strict TOML schema, exhaustive validation that
//! reports every violation with its key path, and the assembled domain
//! objects a run needs.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::gas::{EulerState, GasConstants};
use crate::geometry::{Bump, InflowSide, InflowSpec, Profile, WallProfile, WallSpec};
use crate::solver::{SchemeOrder, SolverConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("configuration rejected:\n{}", .0.join("\n"))]
    Violations(Vec<String>),
}

/// Reduced-model options.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AreaMode {
    /// Area functions built from the solver-reconstructed interface.
    Coupled,
    /// Cheaper approximation with the unperturbed interface at y = 0.
    Straight,
}

#[derive(Debug, Clone, Copy)]
pub struct Quasi1DOptions {
    pub n_steps: usize,
    pub area_mode: AreaMode,
}

impl Default for Quasi1DOptions {
    fn default() -> Self {
        Quasi1DOptions { n_steps: 2000, area_mode: AreaMode::Coupled }
    }
}

#[derive(Debug, Clone)]
pub struct OutputOptions {
    pub dir: PathBuf,
    pub stride: usize,
}

impl Default for OutputOptions {
    fn default() -> Self {
        OutputOptions { dir: PathBuf::from("out"), stride: 1 }
    }
}

/// Fully validated inputs for any command.
#[derive(Debug, Clone)]
pub struct RunSetup {
    pub gas: GasConstants,
    pub walls: WallSpec,
    pub inflow: InflowSpec,
    pub solver: SolverConfig,
    pub quasi1d: Quasi1DOptions,
    pub outputs: OutputOptions,
    pub study_epsilons: Option<Vec<f64>>,
    pub allow_incompatible: bool,
}

impl RunSetup {
    /// Scale every perturbation shape (inflow profiles and wall bumps)
    /// by `eps`, treating the configured amplitudes as the unit reference.
    pub fn scaled_for_epsilon(&self, eps: f64) -> RunSetup {
        RunSetup {
            inflow: self.inflow.with_epsilon(eps),
            walls: self.walls.scaled(eps),
            ..self.clone()
        }
    }
}

// ---------------------------------------------------------------------------
// raw schema

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub gas: GasSection,
    pub nozzle: NozzleSection,
    pub inflow: InflowSection,
    pub solver: SolverSection,
    #[serde(default)]
    pub quasi1d: Quasi1DSection,
    #[serde(default)]
    pub outputs: OutputsSection,
    #[serde(default)]
    pub study: Option<StudySection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasSection {
    pub gamma: f64,
    pub r: f64,
    #[serde(default)]
    pub s0: f64,
    #[serde(default)]
    pub q0: f64,
    pub arrhenius_e: f64,
    pub arrhenius_theta: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NozzleSection {
    pub length: f64,
    #[serde(default)]
    pub upper_bumps: Vec<Bump>,
    #[serde(default)]
    pub lower_bumps: Vec<Bump>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InflowSection {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub upper: InflowSideSection,
    pub lower: InflowSideSection,
}

fn default_epsilon() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InflowSideSection {
    pub u: f64,
    pub p: f64,
    pub rho: f64,
    #[serde(default)]
    pub y: f64,
    #[serde(default)]
    pub perturbations: Vec<PerturbationSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSection {
    pub component: String,
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub n_eta: usize,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_corrector_iters")]
    pub max_corrector_iters: usize,
    #[serde(default = "default_corrector_tol")]
    pub corrector_tol: f64,
    #[serde(default = "default_order")]
    pub order: u32,
    #[serde(default = "default_max_stored")]
    pub max_stored_slices: usize,
}

fn default_cfl() -> f64 {
    0.8
}
fn default_corrector_iters() -> usize {
    4
}
fn default_corrector_tol() -> f64 {
    1e-12
}
fn default_order() -> u32 {
    2
}
fn default_max_stored() -> usize {
    400
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quasi1DSection {
    #[serde(default = "default_q1d_steps")]
    pub n_steps: usize,
    #[serde(default = "default_area_mode")]
    pub area_mode: String,
}

impl Default for Quasi1DSection {
    fn default() -> Self {
        Quasi1DSection { n_steps: default_q1d_steps(), area_mode: default_area_mode() }
    }
}

fn default_q1d_steps() -> usize {
    2000
}
fn default_area_mode() -> String {
    "coupled".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsSection {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default = "default_stride")]
    pub stride: usize,
}

impl Default for OutputsSection {
    fn default() -> Self {
        OutputsSection { dir: default_dir(), stride: default_stride() }
    }
}

fn default_dir() -> String {
    "out".into()
}
fn default_stride() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub epsilons: Vec<f64>,
}

// ---------------------------------------------------------------------------
// schema walk: collect every unknown and missing key with its path

enum Schema {
    Table(&'static [(&'static str, bool, Schema)]),
    Array(&'static Schema),
    Value,
}

const BUMP_SCHEMA: Schema = Schema::Table(&[
    ("center", true, Schema::Value),
    ("width", true, Schema::Value),
    ("amplitude", true, Schema::Value),
]);

const PERTURBATION_SCHEMA: Schema = Schema::Table(&[
    ("component", true, Schema::Value),
    ("center", true, Schema::Value),
    ("width", true, Schema::Value),
    ("amplitude", true, Schema::Value),
]);

const INFLOW_SIDE_SCHEMA: Schema = Schema::Table(&[
    ("u", true, Schema::Value),
    ("p", true, Schema::Value),
    ("rho", true, Schema::Value),
    ("y", false, Schema::Value),
    ("perturbations", false, Schema::Array(&PERTURBATION_SCHEMA)),
]);

const ROOT_SCHEMA: Schema = Schema::Table(&[
    (
        "gas",
        true,
        Schema::Table(&[
            ("gamma", true, Schema::Value),
            ("r", true, Schema::Value),
            ("s0", false, Schema::Value),
            ("q0", false, Schema::Value),
            ("arrhenius_e", true, Schema::Value),
            ("arrhenius_theta", true, Schema::Value),
        ]),
    ),
    (
        "nozzle",
        true,
        Schema::Table(&[
            ("length", true, Schema::Value),
            ("upper_bumps", false, Schema::Array(&BUMP_SCHEMA)),
            ("lower_bumps", false, Schema::Array(&BUMP_SCHEMA)),
        ]),
    ),
    (
        "inflow",
        true,
        Schema::Table(&[
            ("epsilon", false, Schema::Value),
            ("upper", true, INFLOW_SIDE_SCHEMA),
            ("lower", true, INFLOW_SIDE_SCHEMA),
        ]),
    ),
    (
        "solver",
        true,
        Schema::Table(&[
            ("n_eta", true, Schema::Value),
            ("cfl", false, Schema::Value),
            ("max_corrector_iters", false, Schema::Value),
            ("corrector_tol", false, Schema::Value),
            ("order", false, Schema::Value),
            ("max_stored_slices", false, Schema::Value),
        ]),
    ),
    (
        "quasi1d",
        false,
        Schema::Table(&[("n_steps", false, Schema::Value), ("area_mode", false, Schema::Value)]),
    ),
    (
        "outputs",
        false,
        Schema::Table(&[("dir", false, Schema::Value), ("stride", false, Schema::Value)]),
    ),
    ("study", false, Schema::Table(&[("epsilons", true, Schema::Value)])),
]);

fn walk_schema(value: &toml::Value, schema: &Schema, path: &str, violations: &mut Vec<String>) {
    match schema {
        Schema::Value => {}
        Schema::Array(inner) => {
            if let toml::Value::Array(items) = value {
                for (i, item) in items.iter().enumerate() {
                    walk_schema(item, inner, &format!("{path}[{i}]"), violations);
                }
            }
        }
        Schema::Table(entries) => {
            let Some(table) = value.as_table() else {
                return;
            };
            for (key, val) in table {
                match entries.iter().find(|(name, _, _)| name == key) {
                    Some((_, _, sub)) => {
                        let sub_path =
                            if path.is_empty() { key.clone() } else { format!("{path}.{key}") };
                        walk_schema(val, sub, &sub_path, violations);
                    }
                    None => {
                        let sub_path =
                            if path.is_empty() { key.clone() } else { format!("{path}.{key}") };
                        violations.push(format!("{sub_path}: unknown key"));
                    }
                }
            }
            for (name, required, _) in entries.iter() {
                if *required && !table.contains_key(*name) {
                    let sub_path =
                        if path.is_empty() { name.to_string() } else { format!("{path}.{name}") };
                    violations.push(format!("{sub_path}: missing required key"));
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// validation and assembly

fn perturbation_profiles(
    side: &InflowSideSection,
    path: &str,
    violations: &mut Vec<String>,
) -> InflowSide {
    let mut out = InflowSide::constant(EulerState {
        u: side.u,
        v: 0.0,
        p: side.p,
        rho: side.rho,
        y: side.y,
    });
    for (i, pert) in side.perturbations.iter().enumerate() {
        let bump = Bump { center: pert.center, width: pert.width, amplitude: pert.amplitude };
        if !pert.width.is_finite() || pert.width <= 0.0 {
            violations.push(format!(
                "{path}.perturbations[{i}].width: must be > 0 (got {})",
                pert.width
            ));
            continue;
        }
        let target: &mut Profile = match pert.component.as_str() {
            "u" => &mut out.u,
            "v" => &mut out.v,
            "p" => &mut out.p,
            "rho" => &mut out.rho,
            "y" => &mut out.y_frac,
            other => {
                violations.push(format!(
                    "{path}.perturbations[{i}].component: must be one of u|v|p|rho|y (got {other:?})"
                ));
                continue;
            }
        };
        target.bumps.push(bump);
    }
    out
}

impl RunConfig {
    /// Validate every physical precondition, collecting all violations.
    pub fn into_setup(self) -> Result<RunSetup, Vec<String>> {
        let mut violations = Vec::new();

        let gas = match GasConstants::new(
            self.gas.gamma,
            self.gas.r,
            self.gas.s0,
            self.gas.q0,
            self.gas.arrhenius_e,
            self.gas.arrhenius_theta,
        ) {
            Ok(g) => Some(g),
            Err(e) => {
                if self.gas.gamma <= 1.0 {
                    violations.push(format!(
                        "gas.gamma: must be > 1 (got {})",
                        self.gas.gamma
                    ));
                } else {
                    violations.push(format!("gas: {e}"));
                }
                None
            }
        };

        if !self.nozzle.length.is_finite() || self.nozzle.length <= 0.0 {
            violations.push(format!("nozzle.length: must be > 0 (got {})", self.nozzle.length));
        }
        for (name, bumps) in [
            ("nozzle.upper_bumps", &self.nozzle.upper_bumps),
            ("nozzle.lower_bumps", &self.nozzle.lower_bumps),
        ] {
            for (i, b) in bumps.iter().enumerate() {
                if !b.width.is_finite() || b.width <= 0.0 {
                    violations.push(format!("{name}[{i}].width: must be > 0 (got {})", b.width));
                }
            }
        }

        let walls = WallSpec {
            upper: WallProfile { base: 1.0, bumps: self.nozzle.upper_bumps.clone() },
            lower: WallProfile { base: -1.0, bumps: self.nozzle.lower_bumps.clone() },
            length: self.nozzle.length.max(f64::MIN_POSITIVE),
        };
        if self.nozzle.length > 0.0 {
            if let Err(e) = walls.check_channel_width(512) {
                violations.push(format!("nozzle: {e}"));
            }
        }

        for (path, side) in [("inflow.upper", &self.inflow.upper), ("inflow.lower", &self.inflow.lower)]
        {
            if !side.p.is_finite() || side.p <= 0.0 {
                violations.push(format!("{path}.p: must be > 0 (got {})", side.p));
            }
            if !side.rho.is_finite() || side.rho <= 0.0 {
                violations.push(format!("{path}.rho: must be > 0 (got {})", side.rho));
            }
            if !(0.0..=1.0).contains(&side.y) {
                violations.push(format!("{path}.y: must be in [0, 1] (got {})", side.y));
            }
            if !side.u.is_finite() || side.u <= 0.0 {
                violations.push(format!("{path}.u: must be > 0 (got {})", side.u));
            }
            // supersonic admissibility is the solver's precondition: a
            // subsonic inlet is a physical abort, not a schema violation
        }
        let dp = (self.inflow.upper.p - self.inflow.lower.p).abs();
        if dp > 1e-14 * self.inflow.upper.p.abs().max(1.0) {
            violations.push(format!(
                "inflow: background pressures must match across the interface \
                 (upper {} vs lower {})",
                self.inflow.upper.p, self.inflow.lower.p
            ));
        }
        if !self.inflow.epsilon.is_finite() {
            violations.push("inflow.epsilon: must be finite".into());
        }

        let upper = perturbation_profiles(&self.inflow.upper, "inflow.upper", &mut violations);
        let lower = perturbation_profiles(&self.inflow.lower, "inflow.lower", &mut violations);

        let order = match self.solver.order {
            1 => SchemeOrder::First,
            2 => SchemeOrder::Second,
            other => {
                violations.push(format!("solver.order: must be 1 or 2 (got {other})"));
                SchemeOrder::Second
            }
        };
        let solver = SolverConfig {
            n_eta: self.solver.n_eta,
            cfl: self.solver.cfl,
            max_corrector_iters: self.solver.max_corrector_iters,
            corrector_tol: self.solver.corrector_tol,
            order,
            max_stored_slices: self.solver.max_stored_slices,
        };
        if let Err(e) = solver.validate() {
            violations.push(format!("solver: {e}"));
        }

        let area_mode = match self.quasi1d.area_mode.as_str() {
            "coupled" => AreaMode::Coupled,
            "straight" => AreaMode::Straight,
            other => {
                violations.push(format!(
                    "quasi1d.area_mode: must be \"coupled\" or \"straight\" (got {other:?})"
                ));
                AreaMode::Coupled
            }
        };
        if self.quasi1d.n_steps < 10 {
            violations.push(format!(
                "quasi1d.n_steps: must be >= 10 (got {})",
                self.quasi1d.n_steps
            ));
        }
        if self.outputs.stride == 0 {
            violations.push("outputs.stride: must be >= 1".into());
        }

        let study_epsilons = match &self.study {
            None => None,
            Some(study) => {
                for (i, e) in study.epsilons.iter().enumerate() {
                    if !e.is_finite() || *e <= 0.0 {
                        violations.push(format!("study.epsilons[{i}]: must be > 0 (got {e})"));
                    }
                }
                if study.epsilons.windows(2).any(|w| w[1] >= w[0]) {
                    violations.push("study.epsilons: must be strictly decreasing".into());
                }
                Some(study.epsilons.clone())
            }
        };

        if !violations.is_empty() {
            return Err(violations);
        }
        Ok(RunSetup {
            gas: gas.expect("validated"),
            walls,
            inflow: InflowSpec { upper, lower, epsilon: self.inflow.epsilon },
            solver,
            quasi1d: Quasi1DOptions { n_steps: self.quasi1d.n_steps, area_mode },
            outputs: OutputOptions {
                dir: PathBuf::from(&self.outputs.dir),
                stride: self.outputs.stride,
            },
            study_epsilons,
            allow_incompatible: false,
        })
    }
}

/// Parsed configuration plus the raw bytes (for content hashing).
pub struct LoadedConfig {
    pub setup: RunSetup,
    pub raw_text: String,
}

/// Parse and fully validate a configuration file. Schema violations are
/// collected exhaustively: unknown keys, missing keys, and every failed
/// physical precondition are all reported together.
pub fn parse_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let raw_text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config_str(&raw_text).map(|setup| LoadedConfig { setup, raw_text })
}

/// Parse and validate configuration text.
pub fn parse_config_str(text: &str) -> Result<RunSetup, ConfigError> {
    let table: toml::Table = text
        .parse()
        .map_err(|e| ConfigError::Violations(vec![format!("toml syntax: {e}")]))?;
    let value = toml::Value::Table(table);
    let mut violations = Vec::new();
    walk_schema(&value, &ROOT_SCHEMA, "", &mut violations);
    if !violations.is_empty() {
        violations.sort();
        return Err(ConfigError::Violations(violations));
    }
    let raw: RunConfig = toml::from_str(text)
        .map_err(|e| ConfigError::Violations(vec![format!("schema: {e}")]))?;
    raw.into_setup().map_err(|mut v| {
        v.sort();
        ConfigError::Violations(v)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
[gas]
gamma = 1.4
r = 1.0
q0 = 0.0
arrhenius_e = 2.0
arrhenius_theta = 1.0

[nozzle]
length = 4.0

[inflow]
epsilon = 0.0

[inflow.upper]
u = 2.0
p = 1.0
rho = 1.4

[inflow.lower]
u = 3.0
p = 1.0
rho = 0.7

[solver]
n_eta = 32
"#;

    #[test]
    fn good_config_parses() {
        let setup = parse_config_str(GOOD).unwrap();
        assert_eq!(setup.solver.n_eta, 32);
        assert_eq!(setup.quasi1d.n_steps, 2000);
        assert!(setup.inflow.is_constant());
        assert_eq!(setup.gas.cv, setup.gas.r / (setup.gas.gamma - 1.0));
    }

    #[test]
    fn unknown_key_rejected_with_path() {
        let text = GOOD.replace("[solver]", "viscosity = 0.1\n\n[solver]");
        let err = parse_config_str(&text).unwrap_err().to_string();
        assert!(err.contains("viscosity: unknown key"), "{err}");
    }

    #[test]
    fn nested_unknown_key_rejected() {
        let text = GOOD.replace("n_eta = 32", "n_eta = 32\nturbulence = true");
        let err = parse_config_str(&text).unwrap_err().to_string();
        assert!(err.contains("solver.turbulence: unknown key"), "{err}");
    }

    #[test]
    fn gamma_gate() {
        let text = GOOD.replace("gamma = 1.4", "gamma = 0.9");
        let err = parse_config_str(&text).unwrap_err().to_string();
        assert!(err.contains("gas.gamma: must be > 1"), "{err}");
    }

    #[test]
    fn all_violations_collected() {
        let text = GOOD
            .replace("gamma = 1.4", "gamma = 0.9")
            .replace("rho = 1.4", "rho = -1.0")
            .replace("n_eta = 32", "n_eta = 4");
        let err = parse_config_str(&text).unwrap_err();
        let ConfigError::Violations(v) = err else { panic!("expected violations") };
        assert!(v.len() >= 3, "{v:?}");
        assert!(v.iter().any(|m| m.contains("gas.gamma")));
        assert!(v.iter().any(|m| m.contains("inflow.upper.rho")));
        assert!(v.iter().any(|m| m.contains("solver")));
    }

    #[test]
    fn missing_required_key_reported() {
        let text = GOOD.replace("length = 4.0", "");
        let err = parse_config_str(&text).unwrap_err().to_string();
        assert!(err.contains("nozzle.length: missing required key"), "{err}");
    }

    #[test]
    fn pressure_mismatch_rejected() {
        let text = GOOD.replace("p = 1.0\nrho = 0.7", "p = 1.1\nrho = 0.7");
        let err = parse_config_str(&text).unwrap_err().to_string();
        assert!(err.contains("pressures must match"), "{err}");
    }

    #[test]
    fn subsonic_background_parses_but_is_a_solver_matter() {
        // the schema admits it; the solver rejects it as a physical abort
        let text = GOOD.replace("u = 2.0", "u = 0.9");
        assert!(parse_config_str(&text).is_ok());
    }

    #[test]
    fn study_epsilons_checked() {
        let text = format!("{GOOD}\n[study]\nepsilons = [0.02, 0.04]\n");
        let err = parse_config_str(&text).unwrap_err().to_string();
        assert!(err.contains("strictly decreasing"), "{err}");
    }

    #[test]
    fn perturbation_components_checked() {
        let text = GOOD.replace(
            "[inflow.lower]",
            "[[inflow.upper.perturbations]]\ncomponent = \"w\"\ncenter = 0.5\nwidth = 0.2\namplitude = 1.0\n\n[inflow.lower]",
        );
        let err = parse_config_str(&text).unwrap_err().to_string();
        assert!(err.contains("component: must be one of"), "{err}");
    }

    #[test]
    fn epsilon_scaling_scales_walls_and_profiles() {
        let mut setup = parse_config_str(GOOD).unwrap();
        setup.walls.upper.bumps.push(Bump { center: 2.0, width: 1.0, amplitude: 0.5 });
        setup.inflow.upper.u.bumps.push(Bump { center: 0.5, width: 0.3, amplitude: 2.0 });
        let scaled = setup.scaled_for_epsilon(0.04);
        assert_eq!(scaled.inflow.epsilon, 0.04);
        assert_eq!(scaled.walls.upper.bumps[0].amplitude, 0.5 * 0.04);
        // inflow profile amplitudes are applied through epsilon, not mutated
        assert_eq!(scaled.inflow.upper.u.bumps[0].amplitude, 2.0);
    }
}
