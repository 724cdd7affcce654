//! Batch front-end: runs one command on a validated config and writes a JSON
//! report plus CSV traces into an output directory.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use arcbound::extremal::{
    classify_regime, covector_from_switching, detect_pattern, integrate_extremal, normalize_initial,
    switching_derivative_check, Covector, ExtremalOptions, ExtremalState,
};
use arcbound::flows::FlowOptions;
use arcbound::geometry::{frame_hypotheses, CoordBox, PolyField, SmoothField, SystemPair};
use arcbound::ode::Dopri5;
use arcbound::oracle::{
    bound_verification, reachable_targets, sharpness_search, CandidateFamily, OracleOptions,
};
use arcbound::second_order::{limit_matrix_comparison, six_arc_rejection, CandidateOptions, SecondOrderOptions, Verdict};
use nalgebra::{Point3, Vector3};
use serde::Serialize;
use serde_json::{json, Value};

pub use config::{validate_config, ConfigError, ConfigIssue, RunConfig, SystemSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Frames,
    Simulate,
    SecondOrder,
    Oracle,
    Sharpness,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Frames => "frames",
            Command::Simulate => "simulate",
            Command::SecondOrder => "second-order",
            Command::Oracle => "oracle",
            Command::Sharpness => "sharpness",
        }
    }
}

/// What a command produced.
#[derive(Debug)]
pub struct Outcome {
    pub report: PathBuf,
    pub files: Vec<PathBuf>,
    /// Checked properties that failed; nonzero maps to exit status 2.
    pub violations: usize,
}

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let raw: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    Ok(validate_config(&raw)?)
}

pub fn build_system(spec: &SystemSpec) -> Result<SystemPair<f64>> {
    match spec {
        SystemSpec::Fixture(name) => Ok(arcbound::fixtures::by_name(name)?),
        SystemSpec::Polynomial { name, x1, x2 } => {
            let f1 = PolyField::from_table(x1).context("system.x1")?;
            let f2 = PolyField::from_table(x2).context("system.x2")?;
            Ok(SystemPair::new(
                name.clone(),
                SmoothField::polynomial("X1", f1),
                SmoothField::polynomial("X2", f2),
            ))
        }
    }
}

/// Runs `cmd` and writes `<cmd>.json` and its CSV files into `out`.
pub fn run(cmd: Command, cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))?;
    let system = build_system(&cfg.system)?;
    let (result, csvs, violations) = match cmd {
        Command::Frames => frames(&system, cfg)?,
        Command::Simulate => simulate(&system, cfg)?,
        Command::SecondOrder => second_order(&system, cfg)?,
        Command::Oracle => oracle(&system, cfg, false)?,
        Command::Sharpness => oracle(&system, cfg, true)?,
    };
    let report = json!({
        "schema": SCHEMA_VERSION,
        "command": cmd.name(),
        "system": system.name,
        "config": cfg,
        "violations": violations,
        "result": result,
    });
    let stem = cmd.name().replace('-', "_");
    let report_path = out.join(format!("{stem}.json"));
    fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| format!("writing {}", report_path.display()))?;
    let mut files = Vec::new();
    for (name, body) in csvs {
        let p = out.join(name);
        fs::write(&p, body).with_context(|| format!("writing {}", p.display()))?;
        files.push(p);
    }
    Ok(Outcome { report: report_path, files, violations })
}

type CommandOutput = (Value, Vec<(String, String)>, usize);

fn to_value(v: impl Serialize) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn frames(system: &SystemPair<f64>, cfg: &RunConfig) -> Result<CommandOutput> {
    let f = &cfg.frames;
    let region = CoordBox::new(Point3::from(f.lo), Point3::from(f.hi));
    let reports = frame_hypotheses(system, &region, f.samples, f.threshold)?;
    let mut csv = String::from("frame,min_abs_det,pass\n");
    for r in &reports {
        csv.push_str(&format!("\"{}\",{},{}\n", r.labels.join(";"), r.min_abs_det, r.pass));
    }
    let passed = reports.iter().filter(|r| r.pass).count();
    Ok((json!({ "frames": to_value(&reports)?, "passed": passed }), vec![("frames.csv".into(), csv)], 0))
}

fn extremal_options(cfg: &RunConfig) -> ExtremalOptions<f64> {
    let mut o = ExtremalOptions::default();
    o.integrator = Dopri5 { h_max: o.integrator.h_max, ..Dopri5::with_tolerance(cfg.tolerances.integrator) };
    o.eps_zero = cfg.tolerances.eps_zero;
    o.singular_exit = cfg.simulate.singular_exit;
    o
}

fn simulate(system: &SystemPair<f64>, cfg: &RunConfig) -> Result<CommandOutput> {
    let s = &cfg.simulate;
    let q0 = Point3::from(s.q0);
    let mut lambda = match s.initial {
        config::Initial::Switching(phi) => covector_from_switching(system, &q0, Vector3::from(phi))?,
        config::Initial::Covector(l) => Covector::new(Vector3::from(l))?,
    };
    if s.normalize {
        lambda = normalize_initial(&lambda, &q0, system)?;
    }
    let opts = extremal_options(cfg);
    let run = integrate_extremal(system, ExtremalState { q: q0, lambda }, s.horizon, &opts)?;
    let regime = classify_regime(&run.traces, cfg.tolerances.eps_zero);
    let pattern = detect_pattern(&run.arcs);
    let derivative_residual = [&system.x1, &system.x2, &system.x12]
        .iter()
        .map(|y| switching_derivative_check(&run, system, y))
        .fold(0.0, f64::max);
    let fin = run.final_state();
    let violations = usize::from(!regime.assertion_holds);
    let result = json!({
        "initial_lambda": lambda.0.as_slice(),
        "final_q": fin.q.coords.as_slice(),
        "final_lambda": fin.lambda.0.as_slice(),
        "arcs": to_value(&run.arcs)?,
        "arc_count": run.arcs.len(),
        "switch_counts": run.arcs.switch_counts(),
        "pattern": to_value(pattern)?,
        "regime": to_value(&regime)?,
        "switching_zeros": to_value(&run.traces.zeros)?,
        "derivative_identity_residual": derivative_residual,
    });
    Ok((result, vec![("extremal.csv".into(), run.to_csv()), ("trajectory.csv".into(), run.trajectory().to_csv())], violations))
}

fn second_order(system: &SystemPair<f64>, cfg: &RunConfig) -> Result<CommandOutput> {
    let mut opts = CandidateOptions::<f64> {
        second: SecondOrderOptions { rank_tol: cfg.tolerances.rank, ..SecondOrderOptions::default() },
        mode: cfg.second_order.mode,
        ..CandidateOptions::default()
    };
    opts.flow = FlowOptions::with_tolerance(cfg.tolerances.integrator);
    opts.t_max = cfg.second_order.t1.iter().copied().fold(opts.t_max, f64::max);
    let mut rows = Vec::new();
    let mut csv = String::from("t1,verdict,dim_h,lift_rank,positive,negative,max_eigenvalue,limit_deviation,limit_det\n");
    let mut violations = 0;
    for &t1 in &cfg.second_order.t1 {
        let rej = six_arc_rejection(system, t1, &opts).with_context(|| format!("six-arc candidate with t1 = {t1}"))?;
        let lim = limit_matrix_comparison(system, t1, &opts)?;
        let extremal = rej.lift.switching_residuals.iter().all(|r| *r <= 1e-6);
        if extremal && rej.verdict != Verdict::RejectedNotOptimal {
            violations += 1;
        }
        let r = &rej.report;
        csv.push_str(&format!(
            "{t1},{:?},{},{},{},{},{},{},{}\n",
            r.verdict,
            r.dim_h,
            r.lift_uniqueness.rank,
            r.signature.positive,
            r.signature.negative,
            r.max_eigenvalue(),
            lim.deviation,
            lim.det
        ));
        rows.push(json!({
            "t1": t1,
            "candidate_is_extremal": extremal,
            "rejection": to_value(&rej)?,
            "limit_matrix": {
                "q": lim.q_reduced,
                "deviation": lim.deviation,
                "det": lim.det,
                "eigenvalues": lim.eigenvalues,
            },
        }));
    }
    Ok((json!({ "candidates": rows }), vec![("second_order.csv".into(), csv)], violations))
}

fn oracle(system: &SystemPair<f64>, cfg: &RunConfig, sharpness: bool) -> Result<CommandOutput> {
    let o = &cfg.oracle;
    let mut opts = OracleOptions { eps_hit: cfg.tolerances.eps_hit, starts: o.starts, seed: cfg.seed, ..OracleOptions::default() };
    opts.refine = opts.refine.min(o.starts);
    let q0 = Point3::from(o.q0);
    let mut targets: Vec<Point3<f64>> = o.targets.iter().map(|t| Point3::from(*t)).collect();
    if let Some(r) = &o.random_targets {
        targets.extend(reachable_targets(system, q0, r.count, r.arcs, r.horizon, cfg.seed, &opts.flow)?);
    }
    let family = CandidateFamily { max_arcs: o.max_arcs, singular: o.singular, t_max: o.t_max };
    if sharpness {
        let summary = sharpness_search(system, q0, &targets, &family, &opts, o.margin)?;
        let mut csv = String::from("x,y,z,best4,best5,gap_rel,sharp\n");
        let cell = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for r in &summary.rows {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.target[0],
                r.target[1],
                r.target[2],
                cell(r.best4),
                cell(r.best5),
                cell(r.gap_rel),
                r.sharp
            ));
        }
        let violations = usize::from(!summary.found);
        Ok((to_value(&summary)?, vec![("sharpness.csv".into(), csv)], violations))
    } else {
        let summary = bound_verification(system, q0, &targets, &family, &opts, o.tol_rel)?;
        let csv = summary.to_csv();
        let violations = summary.violations;
        Ok((to_value(&summary)?, vec![("oracle.csv".into(), csv)], violations))
    }
}
