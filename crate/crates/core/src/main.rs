//! Command-line driver: config-driven, deterministic runs with exit codes
//! 0 (success), 1 (usage), 2 (physical abort), 3 (validation-gate failure).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use reacting_nozzle::config::{parse_config, ConfigError, LoadedConfig, RunSetup};
use reacting_nozzle::output::{
    config_hash, write_avg_csv, write_field_csv, write_json, write_q1d_csv, write_study_csv,
    write_trace_csv, BackgroundSummary, SolveSummary, StudySummary, ValidateSummary,
};
use reacting_nozzle::quasi1d::{area_from_geometry, averaged_inflow, integrate, CdCurve};
use reacting_nozzle::solver::{solve, FailureClass, SolveFailure};
use reacting_nozzle::validation::{
    background_uniqueness_check, convergence_study, run_pipeline, PipelineError,
};

const USAGE: &str = "\
reacting-nozzle - supersonic two-region reacting nozzle flow solver

USAGE:
  reacting-nozzle <COMMAND> --config PATH [OPTIONS]

COMMANDS:
  solve2d           March the two-region field through the nozzle
  quasi1d           Integrate the reduced model alone (straight interface)
  validate          Solve, average, and compare against the reduced model
  study             Perturbation-size convergence study (needs [study] epsilons)
  background-check  Constant-data uniqueness regression

OPTIONS:
  --config PATH          Run configuration (required)
  --out DIR              Output directory (overrides [outputs] dir)
  --stride N             Export row stride (overrides [outputs] stride)
  --threads N            Concurrent study runs (or REACTING_NOZZLE_THREADS)
  --allow-incompatible   Run despite corner-compatibility residuals

EXIT CODES:
  0 success, 1 usage error, 2 physical abort, 3 validation-gate failure
";

const EXIT_USAGE: u8 = 1;
const EXIT_PHYSICAL: u8 = 2;
const EXIT_GATE: u8 = 3;

struct Cli {
    command: String,
    config: PathBuf,
    out: Option<PathBuf>,
    stride: Option<usize>,
    threads: usize,
    allow_incompatible: bool,
}

fn parse_args(args: &[String]) -> Result<Cli, String> {
    if args.is_empty() {
        return Err("missing command".into());
    }
    let command = args[0].clone();
    if !["solve2d", "quasi1d", "validate", "study", "background-check"]
        .contains(&command.as_str())
    {
        return Err(format!("unknown command {command:?}"));
    }
    let mut config = None;
    let mut out = None;
    let mut stride = None;
    let mut threads = None;
    let mut allow_incompatible = false;
    let mut it = args[1..].iter();
    while let Some(arg) = it.next() {
        match arg.as_str() {
            "--config" => {
                config = Some(PathBuf::from(
                    it.next().ok_or("--config needs a path")?,
                ));
            }
            "--out" => out = Some(PathBuf::from(it.next().ok_or("--out needs a path")?)),
            "--stride" => {
                let v = it.next().ok_or("--stride needs a count")?;
                stride = Some(v.parse::<usize>().map_err(|_| format!("bad --stride {v:?}"))?);
            }
            "--threads" => {
                let v = it.next().ok_or("--threads needs a count")?;
                threads = Some(v.parse::<usize>().map_err(|_| format!("bad --threads {v:?}"))?);
            }
            "--allow-incompatible" => allow_incompatible = true,
            other => return Err(format!("unknown flag {other:?}")),
        }
    }
    let threads = threads
        .or_else(|| {
            std::env::var("REACTING_NOZZLE_THREADS")
                .ok()
                .and_then(|v| v.parse::<usize>().ok())
        })
        .unwrap_or(1)
        .max(1);
    Ok(Cli {
        command,
        config: config.ok_or("--config is required")?,
        out,
        stride,
        threads,
        allow_incompatible,
    })
}

fn fail_usage(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    eprintln!();
    eprint!("{USAGE}");
    ExitCode::from(EXIT_USAGE)
}

fn solve_exit(f: &SolveFailure) -> u8 {
    match f.error.class() {
        FailureClass::Gate => EXIT_GATE,
        FailureClass::Physical => EXIT_PHYSICAL,
    }
}

fn pipeline_exit(e: &PipelineError) -> u8 {
    match e {
        PipelineError::Solve(f) => solve_exit(f),
        PipelineError::Quasi1D(_) => EXIT_PHYSICAL,
        PipelineError::Validation(_) => EXIT_PHYSICAL,
        PipelineError::StudyRunFailed { .. } => EXIT_PHYSICAL,
        PipelineError::BadEpsilons(_) | PipelineError::NotBackground(_) => EXIT_USAGE,
    }
}

fn write_partial_field(dir: &Path, failure: &SolveFailure, setup: &RunSetup, stride: usize) {
    if let Some(partial) = failure.partial.as_deref() {
        let _ = write_field_csv(&dir.join("field.csv"), partial, &setup.gas, stride);
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = match parse_args(&args) {
        Ok(c) => c,
        Err(msg) => return fail_usage(&msg),
    };

    let LoadedConfig { mut setup, raw_text } = match parse_config(&cli.config) {
        Ok(l) => l,
        Err(ConfigError::Io { path, source }) => {
            return fail_usage(&format!("cannot read {}: {source}", path.display()));
        }
        Err(e @ ConfigError::Violations(_)) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    setup.allow_incompatible = cli.allow_incompatible;
    if let Some(out) = &cli.out {
        setup.outputs.dir = out.clone();
    }
    if let Some(stride) = cli.stride {
        if stride == 0 {
            return fail_usage("--stride must be >= 1");
        }
        setup.outputs.stride = stride;
    }
    let hash = config_hash(&raw_text);
    let dir = setup.outputs.dir.clone();
    let stride = setup.outputs.stride;

    let io_fail = |e: std::io::Error| {
        eprintln!("error: cannot write artifacts: {e}");
        ExitCode::from(EXIT_USAGE)
    };

    match cli.command.as_str() {
        "solve2d" => {
            let out = match solve(&setup.inflow, &setup.walls, &setup.gas, &setup.solver, setup.allow_incompatible) {
                Ok(o) => o,
                Err(failure) => {
                    eprintln!("error: {failure}");
                    write_partial_field(&dir, &failure, &setup, stride);
                    return ExitCode::from(solve_exit(&failure));
                }
            };
            let result: std::io::Result<()> = (|| {
                write_field_csv(&dir.join("field.csv"), &out.field, &setup.gas, stride)?;
                write_trace_csv(&dir.join("trace.csv"), &out.trace, stride)?;
                write_json(&dir.join("solve_summary.json"), &SolveSummary::new(&out, hash))
            })();
            if let Err(e) = result {
                return io_fail(e);
            }
            println!(
                "solve2d: {} stations, {} steps, mass drift {:.3e}",
                out.field.stations.len(),
                out.field.diagnostics.steps,
                out.mass.max_rel_drift
            );
            ExitCode::SUCCESS
        }
        "quasi1d" => {
            let (area_up, area_lo) = match area_from_geometry(&setup.walls, CdCurve::Straight) {
                Ok(a) => a,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_PHYSICAL);
                }
            };
            let (init_up, init_lo) = averaged_inflow(&setup.inflow, &setup.walls);
            let n = setup.quasi1d.n_steps;
            let stations: Vec<f64> =
                (0..=n).map(|i| setup.walls.length * i as f64 / n as f64).collect();
            let h = setup.walls.length / n as f64;
            let runs = integrate(&init_up, &area_up, &setup.gas, &stations, h).and_then(|up| {
                integrate(&init_lo, &area_lo, &setup.gas, &stations, h).map(|lo| (up, lo))
            });
            let (up, lo) = match runs {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_PHYSICAL);
                }
            };
            if let Err(e) = write_q1d_csv(&dir.join("quasi1d.csv"), &up, &lo, &setup.gas) {
                return io_fail(e);
            }
            println!(
                "quasi1d: {} stations, mass drift {:.3e} (U) / {:.3e} (L)",
                up.x.len(),
                up.max_rel_mass_drift,
                lo.max_rel_mass_drift
            );
            ExitCode::SUCCESS
        }
        "validate" => {
            let out = match run_pipeline(&setup) {
                Ok(o) => o,
                Err(e) => {
                    eprintln!("error: {e}");
                    if let PipelineError::Solve(failure) = &e {
                        write_partial_field(&dir, failure, &setup, stride);
                    }
                    return ExitCode::from(pipeline_exit(&e));
                }
            };
            let result: std::io::Result<()> = (|| {
                write_field_csv(&dir.join("field.csv"), &out.solve.field, &setup.gas, stride)?;
                write_trace_csv(&dir.join("trace.csv"), &out.solve.trace, stride)?;
                write_avg_csv(&dir.join("avg_profiles.csv"), &out.averages)?;
                write_q1d_csv(&dir.join("quasi1d.csv"), &out.q1d_upper, &out.q1d_lower, &setup.gas)?;
                write_json(
                    &dir.join("validate_summary.json"),
                    &ValidateSummary {
                        config_hash: hash,
                        error_report: out.report.clone(),
                        q1d_mass_drift_upper: out.q1d_upper.max_rel_mass_drift,
                        q1d_mass_drift_lower: out.q1d_lower.max_rel_mass_drift,
                    },
                )
            })();
            if let Err(e) = result {
                return io_fail(e);
            }
            println!(
                "validate: sup error {:.6e}, derivative sup {:.6e}",
                out.report.sup_total, out.report.deriv_sup_total
            );
            ExitCode::SUCCESS
        }
        "study" => {
            let epsilons = match &setup.study_epsilons {
                Some(e) if e.len() >= 3 => e.clone(),
                Some(e) => {
                    return fail_usage(&format!(
                        "study needs at least 3 epsilons, config has {}",
                        e.len()
                    ));
                }
                None => return fail_usage("study needs a [study] section with epsilons"),
            };
            let study = match convergence_study(&setup, &epsilons, cli.threads) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(pipeline_exit(&e));
                }
            };
            let result: std::io::Result<()> = (|| {
                write_study_csv(&dir.join("study.csv"), &study)?;
                write_json(&dir.join("study_summary.json"), &StudySummary::new(&study, hash))
            })();
            if let Err(e) = result {
                return io_fail(e);
            }
            println!("study: {}", study.verdict);
            if study.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_GATE)
            }
        }
        "background-check" => {
            let check = match background_uniqueness_check(&setup) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(pipeline_exit(&e));
                }
            };
            if let Err(e) =
                write_json(&dir.join("background_check.json"), &BackgroundSummary::new(&check, hash))
            {
                return io_fail(e);
            }
            println!(
                "background-check: max deviation {:.3e}, max |g_cd| {:.3e} -> {}",
                check.max_state_deviation,
                check.max_abs_g_cd,
                if check.passed { "pass" } else { "FAIL" }
            );
            if check.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_GATE)
            }
        }
        _ => unreachable!("command validated in parse_args"),
    }
}
