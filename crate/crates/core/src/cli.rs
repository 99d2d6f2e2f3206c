//! Command-line front end.
//!
//! Exit codes: 0 success, 1 certificate does not hold (`certify`),
//! 2 input error, 3 numerical failure. Errors go to stderr as JSON.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::certificate::{certify, certify_dvijotham, certify_wang, voltage_bounds};
use crate::error::{Error, Result};
use crate::fixed_point::{solve_fixed_point, FixedPointOptions, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::limits::{angle_grid, bound_profile, direction_pairs, lambda_all, lambda_proposed, direction_sweep, SweepSpec};
use crate::net_model::CaseFormat;
use crate::oracle::actual_limit;
use crate::stress::compute_stress;
use crate::study::{GenPhasorSource, Study};

#[derive(Parser, Debug)]
#[command(name = "pfcert", version, about = "Solvability certificates, voltage bounds and loading limits for AC power flow")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check the certificate at the scaled load; exit 1 when it fails.
    Certify(CommonArgs),
    /// Iterate the fixed-point map to the load-bus voltages.
    Solve(CommonArgs),
    /// Certified loading limits along the load direction.
    Limits(CommonArgs),
    /// Limits over a grid of power-factor angles at two load buses.
    Sweep(SweepArgs),
    /// Per-bus voltage bounds, or a bound profile for one bus with `--bus`.
    Bounds(BoundsArgs),
    /// Loading limit from Newton bisection.
    OracleLimit(OracleArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Matpower,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum PhasorArg {
    Case,
    Solved,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum OutFormat {
    Json,
    Csv,
}

#[derive(Args, Debug)]
pub struct CommonArgs {
    /// Case file (MATPOWER `.m` or canonical `.json`).
    #[arg(value_name = "CASE")]
    pub case_path: Option<PathBuf>,
    #[arg(long = "case", value_name = "PATH", conflicts_with = "case_path")]
    pub case: Option<PathBuf>,
    /// Input format; guessed from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Build the certificate around the Newton solution at base load.
    #[arg(long)]
    pub known_solution: bool,
    #[arg(long, value_enum, default_value = "case")]
    pub gen_phasors: PhasorArg,
    /// Multiplier applied to the load direction.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Load direction (`bus,p_mw,q_mvar` CSV or JSON list); defaults to the
    /// case demand.
    #[arg(long, value_name = "PATH")]
    pub direction_file: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub out_format: OutFormat,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Add Newton reference values to the output.
    #[arg(long)]
    pub with_oracle: bool,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub bus_a: Option<usize>,
    #[arg(long)]
    pub bus_b: Option<usize>,
    /// Degrees.
    #[arg(long, default_value_t = -90.0, allow_negative_numbers = true)]
    pub angle_min: f64,
    /// Degrees.
    #[arg(long, default_value_t = 90.0, allow_negative_numbers = true)]
    pub angle_max: f64,
    /// Points per angle; the grid is steps × steps.
    #[arg(long, default_value_t = 6)]
    pub steps: usize,
    /// Keep the varied loads' magnitudes instead of equalizing them.
    #[arg(long)]
    pub no_rescale: bool,
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Produce a profile for this load bus over the λ grid.
    #[arg(long)]
    pub bus: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub lambda_from: f64,
    #[arg(long, default_value_t = 3.0)]
    pub lambda_to: f64,
    #[arg(long, default_value_t = 0.01)]
    pub lambda_step: f64,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 0.0)]
    pub bracket_lo: f64,
    /// Defaults to the certified limit.
    #[arg(long)]
    pub bracket_hi: Option<f64>,
}

/// Parse, run, report; returns the process exit code.
pub fn main_entry() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            let code = if e.is_input_error() { 2 } else { 3 };
            let report = json!({ "error": e.kind(), "message": e.to_string(), "exit_code": code });
            eprintln!("{report}");
            code
        }
    }
}

struct Outcome {
    value: Value,
    code: i32,
}

pub fn dispatch(command: &Command) -> Result<i32> {
    let (common, outcome) = match command {
        Command::Certify(a) => (a, run_certify(a)?),
        Command::Solve(a) => (a, run_solve(a)?),
        Command::Limits(a) => (a, run_limits(a)?),
        Command::Sweep(a) => (&a.common, run_sweep(a)?),
        Command::Bounds(a) => (&a.common, run_bounds(a)?),
        Command::OracleLimit(a) => (&a.common, run_oracle(a)?),
    };
    let text = match common.out_format {
        OutFormat::Json => {
            let mut s = serde_json::to_string_pretty(&round_floats(outcome.value))?;
            s.push('\n');
            s
        }
        OutFormat::Csv => to_csv(&round_floats(outcome.value)),
    };
    match &common.out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(outcome.code)
}

fn open_study(a: &CommonArgs) -> Result<Study> {
    let path = a
        .case
        .as_ref()
        .or(a.case_path.as_ref())
        .ok_or_else(|| Error::Invalid("no case file given".into()))?;
    let format = a.format.map(|f| match f {
        FormatArg::Matpower => CaseFormat::Matpower,
        FormatArg::Json => CaseFormat::Json,
    });
    let source = match a.gen_phasors {
        PhasorArg::Case => GenPhasorSource::Case,
        PhasorArg::Solved => GenPhasorSource::Solved,
    };
    if !(a.scale.is_finite() && a.scale >= 0.0) {
        return Err(Error::Invalid(format!("scale must be a non-negative number, got {}", a.scale)));
    }
    let mut study = Study::from_path(path, format, source)?;
    if let Some(dir) = &a.direction_file {
        if a.known_solution {
            return Err(Error::Invalid("--known-solution works along the base load direction only".into()));
        }
        study.base_load = read_direction(&study, dir)?;
    }
    if a.known_solution {
        study = study.with_known_solution()?;
    }
    Ok(study)
}

#[derive(Deserialize)]
struct DirectionEntry {
    bus: usize,
    p_mw: f64,
    q_mvar: f64,
}

/// Per-bus load direction in MW / MVAr; unlisted load buses get zero.
fn read_direction(study: &Study, path: &Path) -> Result<Vec<Complex64>> {
    let text = std::fs::read_to_string(path)?;
    let entries: Vec<DirectionEntry> = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        serde_json::from_str(&text)?
    } else {
        text.lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#') && !l.starts_with("bus"))
            .map(|(line, l)| {
                let f: Vec<&str> = l.split(',').map(str::trim).collect();
                let bad = || Error::Syntax { line, message: format!("expected `bus,p_mw,q_mvar`, got `{l}`") };
                if f.len() != 3 {
                    return Err(bad());
                }
                Ok(DirectionEntry {
                    bus: f[0].parse().map_err(|_| bad())?,
                    p_mw: f[1].parse().map_err(|_| bad())?,
                    q_mvar: f[2].parse().map_err(|_| bad())?,
                })
            })
            .collect::<Result<_>>()?
    };
    let mut s = vec![Complex64::new(0.0, 0.0); study.num_loads()];
    for e in entries {
        let pos = study.load_position(e.bus)?;
        s[pos] = Complex64::new(e.p_mw, e.q_mvar) / study.case.base_mva;
    }
    Ok(s)
}

fn mode_name(study: &Study) -> &'static str {
    if study.reduction.has_known_solution() {
        "from_known_solution"
    } else {
        "from_zero"
    }
}

/// Total load and increment for the requested scale.
fn loads(study: &Study, scale: f64) -> (Vec<Complex64>, Vec<Complex64>) {
    let s = study.scaled_load(scale);
    if study.reduction.has_known_solution() {
        (s, study.scaled_load(scale - 1.0))
    } else {
        (s.clone(), s)
    }
}

fn run_certify(a: &CommonArgs) -> Result<Outcome> {
    let study = open_study(a)?;
    let z = study.reduction.ztilde();
    let (s, sigma) = loads(&study, a.scale);
    let m = compute_stress(z, &s, &sigma)?;
    let base = if study.reduction.has_known_solution() {
        compute_stress(z, &study.reduction.s0, &study.reduction.s0)?
    } else {
        m.scaled(0.0)
    };
    let cert = certify(&m);
    let wang = certify_wang(&base, &compute_stress(z, &sigma, &sigma)?).ok();
    let value = json!({
        "case": study.case.name,
        "mode": mode_name(&study),
        "scale": a.scale,
        "holds": cert.holds,
        "reason": cert.reason,
        "quadratic_condition": cert.quadratic_condition,
        "gap_condition": cert.gap_condition,
        "xi": m.xi_max,
        "eta": m.eta_max,
        "gamma": m.gamma_max,
        "delta": m.delta,
        "r_lo": cert.radii.map(|r| r.r_lo),
        "r_hi": cert.radii.map(|r| r.r_hi),
        "mu": cert.mu_bound,
        "wang": wang,
        "dvijotham": certify_dvijotham(&m),
    });
    Ok(Outcome { value, code: if cert.holds { 0 } else { 1 } })
}

fn polar(v: Complex64) -> (f64, f64) {
    (v.norm(), v.arg().to_degrees())
}

fn run_solve(a: &CommonArgs) -> Result<Outcome> {
    let study = open_study(a)?;
    let (s, sigma) = loads(&study, a.scale);
    let m = compute_stress(study.reduction.ztilde(), &s, &sigma)?;
    let cert = certify(&m);
    let opts = FixedPointOptions {
        tol: a.tol.unwrap_or(DEFAULT_TOL),
        max_iter: a.max_iter.unwrap_or(DEFAULT_MAX_ITER),
        record: false,
        certificate: Some(&cert),
    };
    let res = solve_fixed_point(&study.reduction, &s, &sigma, None, &opts)?;
    let newton = if a.with_oracle { Some(study.newton(&s, None)?.v_l) } else { None };
    let buses: Vec<Value> = res
        .v_l
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let (vm, va) = polar(*v);
            let mut row = json!({ "bus": study.reduction.load_ids[i], "vm": vm, "va_deg": va });
            if let Some(nv) = &newton {
                let (nm, na) = polar(nv[i]);
                row["vm_newton"] = json!(nm);
                row["va_newton_deg"] = json!(na);
            }
            row
        })
        .collect();
    let deviation = newton
        .as_ref()
        .map(|nv| nv.iter().zip(&res.v_l).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max));
    let value = json!({
        "case": study.case.name,
        "mode": mode_name(&study),
        "scale": a.scale,
        "certified": cert.holds,
        "iterations": res.iterations,
        "residual": res.residual,
        "max_newton_deviation": deviation,
        "buses": buses,
    });
    Ok(Outcome { value, code: 0 })
}

fn oracle_limit(study: &Study, hi: f64, tol: f64) -> Result<f64> {
    actual_limit(&study.admittance, &study.generator_phasors, &study.base_load, &study.reduction.e, (0.0, hi.max(0.1)), tol)
}

fn run_limits(a: &CommonArgs) -> Result<Outcome> {
    let study = open_study(a)?;
    let l = lambda_all(&study)?;
    let mut value = json!({
        "case": study.case.name,
        "mode": l.mode,
        "gen_phasors": match a.gen_phasors { PhasorArg::Case => "case", PhasorArg::Solved => "solved" },
        "lambda_p": l.lambda_p,
        "lambda_w": l.lambda_w,
        "lambda_d": l.lambda_d,
        "critical_bus": l.critical_bus,
        "kappa": l.kappa,
    });
    if a.with_oracle {
        let actual = oracle_limit(&study, l.lambda_p, a.tol.unwrap_or(1e-4))?;
        value["lambda_actual"] = json!(actual);
        for (key, v) in [("rel_error_p", l.lambda_p), ("rel_error_w", l.lambda_w), ("rel_error_d", l.lambda_d)] {
            value[key] = json!((actual - v) / actual);
        }
    }
    Ok(Outcome { value, code: 0 })
}

fn run_sweep(a: &SweepArgs) -> Result<Outcome> {
    if a.common.known_solution {
        return Err(Error::Invalid("sweep runs from zero load only".into()));
    }
    let study = open_study(&a.common)?;
    let buses = match (a.bus_a, a.bus_b) {
        (Some(x), Some(y)) => Some((x, y)),
        (None, None) => None,
        _ => return Err(Error::Invalid("give both --bus-a and --bus-b or neither".into())),
    };
    let grid = angle_grid(a.angle_min.to_radians(), a.angle_max.to_radians(), a.steps);
    let spec = SweepSpec { buses, angles: direction_pairs(&grid, &grid), rescale: !a.no_rescale, with_oracle: a.common.with_oracle };
    let res = direction_sweep(&study, &spec)?;
    let points: Vec<Value> = res
        .points
        .iter()
        .map(|p| {
            json!({
                "angle_a_deg": p.angle_a.to_degrees(),
                "angle_b_deg": p.angle_b.to_degrees(),
                "p_a": p.load_a.re, "q_a": p.load_a.im,
                "p_b": p.load_b.re, "q_b": p.load_b.im,
                "lambda_p": p.limits.lambda_p,
                "lambda_w": p.limits.lambda_w,
                "lambda_d": p.limits.lambda_d,
                "lambda_actual": p.lambda_actual,
            })
        })
        .collect();
    let value = json!({ "case": study.case.name, "bus_a": res.bus_a, "bus_b": res.bus_b, "points": points });
    Ok(Outcome { value, code: 0 })
}

fn run_bounds(a: &BoundsArgs) -> Result<Outcome> {
    let study = open_study(&a.common)?;
    if let Some(bus) = a.bus {
        if !(a.lambda_step > 0.0) || a.lambda_to < a.lambda_from {
            return Err(Error::Invalid("need lambda_step > 0 and lambda_to >= lambda_from".into()));
        }
        let count = ((a.lambda_to - a.lambda_from) / a.lambda_step + 1e-9).floor() as usize;
        let grid: Vec<f64> = (0..=count).map(|k| a.lambda_from + k as f64 * a.lambda_step).collect();
        let profile = bound_profile(&study, bus, &grid)?;
        let value = json!({ "case": study.case.name, "bus": bus, "points": profile });
        return Ok(Outcome { value, code: 0 });
    }
    let (s, sigma) = loads(&study, a.common.scale);
    let cert = certify(&compute_stress(study.reduction.ztilde(), &s, &sigma)?);
    if !cert.holds {
        let value = json!({ "case": study.case.name, "scale": a.common.scale, "holds": false, "reason": cert.reason });
        return Ok(Outcome { value, code: 1 });
    }
    let bounds = voltage_bounds(&cert, &study.reduction)?;
    let truth = if a.common.with_oracle { Some(study.newton(&s, None)?.v_l) } else { None };
    let buses: Vec<Value> = bounds
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let (vm, va) = polar(b.approximate);
            let mut row = json!({
                "bus": b.bus,
                "vm_lo": b.magnitude_lo, "vm_hi": b.magnitude_hi, "vm_approx": vm,
                "va_lo_deg": b.angle_lo.to_degrees(), "va_hi_deg": b.angle_hi.to_degrees(), "va_approx_deg": va,
            });
            if let Some(t) = &truth {
                let (tm, ta) = polar(t[i]);
                row["vm_true"] = json!(tm);
                row["va_true_deg"] = json!(ta);
            }
            row
        })
        .collect();
    let value = json!({ "case": study.case.name, "mode": mode_name(&study), "scale": a.common.scale, "holds": true, "buses": buses });
    Ok(Outcome { value, code: 0 })
}

fn run_oracle(a: &OracleArgs) -> Result<Outcome> {
    let study = open_study(&a.common)?;
    let hi = match a.bracket_hi {
        Some(h) => h,
        None => lambda_proposed(&study.reduction, &study.base_load)?.lambda_p,
    };
    let tol = a.common.tol.unwrap_or(1e-4);
    let lambda = actual_limit(
        &study.admittance,
        &study.generator_phasors,
        &study.base_load,
        &study.reduction.e,
        (a.bracket_lo, hi.max(a.bracket_lo + tol)),
        tol,
    )?;
    let value = json!({ "case": study.case.name, "lambda_actual": lambda, "bracket": [a.bracket_lo, hi], "tol": tol });
    Ok(Outcome { value, code: 0 })
}

/// Round every float to 9 significant digits so output is stable across
/// platforms and runs.
pub fn round_floats(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            let r: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
            serde_json::Number::from_f64(r).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_floats).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_floats(v))).collect()),
        other => other,
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(o) => {
            for (k, x) in o {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}_{k}") };
                flatten(&key, x, out);
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten(&format!("{prefix}_{i}"), x, out);
            }
        }
        Value::Null => out.push((prefix.to_string(), String::new())),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// One row per entry of the first list of records, else a single row of
/// the flattened document.
pub fn to_csv(v: &Value) -> String {
    let records: Vec<&Value> = match v {
        Value::Object(o) => o
            .values()
            .find_map(|x| x.as_array().filter(|a| a.first().is_some_and(Value::is_object)))
            .map_or_else(|| vec![v], |a| a.iter().collect()),
        _ => vec![v],
    };
    let mut header: Vec<String> = Vec::new();
    let mut rows: Vec<BTreeMap<String, String>> = Vec::new();
    for r in records {
        let mut cells = Vec::new();
        flatten("", r, &mut cells);
        for (k, _) in &cells {
            if !header.contains(k) {
                header.push(k.clone());
            }
        }
        rows.push(cells.into_iter().collect());
    }
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        let line: Vec<&str> = header.iter().map(|h| r.get(h).map_or("", String::as_str)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}
