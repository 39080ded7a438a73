use std::fs;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use ibc_core::analysis::{compare, density_field, eps_surface, optimize, AnalysisReport, RunOptions, DEFAULT_MASK_TOL};
use ibc_core::ctm::{simulate, SharingPlan};
use ibc_core::export;
use ibc_core::projection::{bottleneck_flags, project_demands, supply_demand_margins};
use ibc_core::scenario::{builtin, load_scenario_file, BUILTIN_NAMES};
use ibc_core::{build_qp, Scenario, ScenarioError};
use serde_json::{json, Map, Value};

use crate::rundir::RunDir;
use crate::{Command, DropArg, MethodArg, OutArgs, SolverArgs};

/// Exit status for invalid scenarios, plans and other bad input.
const EXIT_INPUT: u8 = 1;
/// Exit status for solver failures and I/O errors.
const EXIT_RUNTIME: u8 = 2;
/// Exit status for violated report invariants in strict mode.
const EXIT_STRICT: u8 = 3;

/// Bad command-line input that is not a scenario or plan error.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct InputError(String);

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ScenarioError>() || cause.is::<InputError>() {
            return EXIT_INPUT;
        }
        if let Some(e) = cause.downcast_ref::<ibc_core::Error>() {
            use ibc_core::Error::*;
            return match e {
                Scenario(_) | Dimension(_) | Format(_) => EXIT_INPUT,
                _ => EXIT_RUNTIME,
            };
        }
    }
    EXIT_RUNTIME
}

pub fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Check { scenario, emit } => check(&scenario.scenario, emit),
        Command::Simulate {
            scenario,
            variant,
            plan,
            out,
        } => {
            let s = load(&scenario.scenario)?;
            simulate_cmd(&s, &scenario.scenario, variant.capacity_drop, plan.as_deref(), &out)
        }
        Command::Project { scenario, out } => {
            let s = load(&scenario.scenario)?;
            project_cmd(&s, &scenario.scenario, &out)
        }
        Command::Optimize {
            scenario,
            variant,
            solver,
            out,
            strict,
            timing,
        } => {
            let s = load(&scenario.scenario)?;
            optimize_cmd(&s, &scenario.scenario, variant.capacity_drop, &solver, &out, strict, timing)
        }
        Command::Report {
            scenario,
            capacity_drop,
            solver,
            out,
            strict,
        } => report_cmd(&scenario, capacity_drop, &solver, &out, strict),
        Command::Dump {
            scenario,
            variant,
            solve,
            solver,
            out,
        } => {
            let s = load(&scenario.scenario)?;
            dump_cmd(&s, &scenario.scenario, variant.capacity_drop, solve, &solver, &out)
        }
    }
}

/// Resolves a scenario argument: an existing file, else a builtin name.
fn load(arg: &str) -> Result<Scenario> {
    let path = Path::new(arg);
    if path.exists() || path.extension().is_some_and(|e| e == "toml") {
        return load_scenario_file(path).with_context(|| format!("scenario `{arg}`"));
    }
    if BUILTIN_NAMES.contains(&arg) {
        return Ok(builtin(arg)?);
    }
    Err(InputError(format!(
        "no scenario file or builtin named `{arg}` (builtins: {})",
        BUILTIN_NAMES.join(", ")
    ))
    .into())
}

fn variants(arg: Option<DropArg>, scenario: &Scenario) -> Vec<Scenario> {
    match arg {
        None => vec![scenario.clone()],
        Some(DropArg::On) => vec![scenario.with_capacity_drop(true)],
        Some(DropArg::Off) => vec![scenario.with_capacity_drop(false)],
        Some(DropArg::Both) => vec![scenario.with_capacity_drop(true), scenario.with_capacity_drop(false)],
    }
}

fn drop_bools(arg: DropArg) -> Vec<bool> {
    match arg {
        DropArg::On => vec![true],
        DropArg::Off => vec![false],
        DropArg::Both => vec![true, false],
    }
}

fn on_off(on: bool) -> &'static str {
    if on {
        "on"
    } else {
        "off"
    }
}

fn tag(s: &Scenario) -> String {
    format!("drop-{}", on_off(s.capacity_drop()))
}

fn run_dir(out: &OutArgs, parts: &[&str]) -> Result<RunDir> {
    let path = match &out.out {
        Some(p) => p.clone(),
        None => parts.iter().fold(out.out_root.clone(), |p, s| p.join(s)),
    };
    RunDir::create(&path)
}

fn run_options(args: &SolverArgs) -> Result<RunOptions> {
    let mut opts = RunOptions {
        holding_back_tol: args.holding_back_tol,
        ..Default::default()
    };
    let st = &mut opts.solver;
    st.method = match args.method {
        MethodArg::Ipm => ibc_qp::Method::InteriorPoint,
        MethodArg::Admm => ibc_qp::Method::Admm,
    };
    if let Some(v) = args.eps_abs {
        st.eps_abs = v;
    }
    if let Some(v) = args.eps_rel {
        st.eps_rel = v;
    }
    if let Some(v) = args.max_iter {
        match args.method {
            MethodArg::Ipm => st.ipm_max_iter = v,
            MethodArg::Admm => st.max_iter = v,
        }
    }
    st.verbose = args.verbose;
    st.validate().map_err(|e| InputError(e.to_string()))?;
    Ok(opts)
}

fn solver_json(opts: &RunOptions) -> Value {
    let s = &opts.solver;
    json!({
        "method": s.method.as_str(),
        "eps_abs": s.eps_abs,
        "eps_rel": s.eps_rel,
        "max_iter": match s.method {
            ibc_qp::Method::InteriorPoint => s.ipm_max_iter,
            ibc_qp::Method::Admm => s.max_iter,
        },
        "holding_back_tol": opts.holding_back_tol,
    })
}

fn check(arg: &str, emit: bool) -> Result<ExitCode> {
    let s = load(arg)?;
    if emit {
        print!("{}", ibc_core::scenario::emit(&s));
        return Ok(ExitCode::SUCCESS);
    }
    let c = &s.control;
    let range = |v: &[f64]| {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if lo == hi {
            format!("{lo}")
        } else {
            format!("{lo}..{hi}")
        }
    };
    println!("scenario `{}`: valid", s.label);
    println!("  sections        {}", s.n());
    println!("  steps           T = {} s, T_c = {} s", c.t * 3600.0, c.t_c * 3600.0);
    println!("  horizon         K = {}, K_c = {}", c.k, c.k_c);
    println!(
        "  capacity drop   {} (lambda_d {}, lambda_r {})",
        on_off(s.capacity_drop()),
        c.lambda_d,
        c.lambda_r
    );
    println!("  eps bounds      [{}, {}]", range(&c.eps_min), range(&c.eps_max));
    println!("  fd              rho_cr {}, rho_max {}", s.fd.rho_cr, s.fd.rho_max);
    Ok(ExitCode::SUCCESS)
}

fn simulate_cmd(
    scenario: &Scenario,
    source: &str,
    drop: Option<DropArg>,
    plan_path: Option<&Path>,
    out: &OutArgs,
) -> Result<ExitCode> {
    let plan_text = match plan_path {
        Some(p) => Some(fs::read_to_string(p).with_context(|| format!("cannot read plan {}", p.display()))?),
        None => None,
    };
    let mut dir = run_dir(out, &[&scenario.label, "simulate"])?;
    let mut results = Map::new();
    for s in variants(drop, scenario) {
        let plan = match &plan_text {
            Some(text) => export::plan_from_csv(text, &s).context("plan file")?,
            None => SharingPlan::no_control(&s),
        };
        let traj = simulate(&s, &plan)?;
        let t = tag(&s);
        dir.write(&format!("trajectory_{t}.csv"), &export::trajectory_to_csv(&s, &plan, &traj)?)?;
        dir.write(
            &format!("density_{t}.csv"),
            &export::density_field_to_csv(&density_field(&traj, DEFAULT_MASK_TOL))?,
        )?;
        dir.write(&format!("sections_{t}.csv"), &export::sections_to_csv(&s, &plan, &traj)?)?;
        let kind = if plan_text.is_some() { "controlled" } else { "no-control" };
        println!(
            "{} (capacity drop {}): {kind} TTS {:.4} veh·h",
            s.label,
            on_off(s.capacity_drop()),
            traj.tts
        );
        for w in &traj.warnings {
            eprintln!("warning: {w}");
        }
        let field = density_field(&traj, DEFAULT_MASK_TOL);
        results.insert(
            t,
            json!({
                "tts": traj.tts,
                "congested_cells": field.congested_cells(),
                "warnings": traj.warnings.len(),
            }),
        );
    }
    let path = dir.finish(json!({
        "command": "simulate",
        "scenario": scenario.label,
        "source": source,
        "plan": plan_path.map(|p| p.display().to_string()),
        "results": results,
    }))?;
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn project_cmd(scenario: &Scenario, source: &str, out: &OutArgs) -> Result<ExitCode> {
    let projected = project_demands(scenario);
    let margins = supply_demand_margins(scenario, &projected, None);
    let flags = bottleneck_flags(scenario, &projected);
    let mut dir = run_dir(out, &[&scenario.label, "project"])?;
    dir.write("projected.csv", &export::projected_to_csv(&projected)?)?;
    dir.write("margins.csv", &export::margins_to_csv(&margins)?)?;
    let summary = ibc_core::analysis::bottleneck_summary(&flags);
    println!(
        "{}: {} bottleneck cells (section:first-last control step): {summary}",
        scenario.label,
        flags.len()
    );
    let path = dir.finish(json!({
        "command": "project",
        "scenario": scenario.label,
        "source": source,
        "results": { "bottleneck_cells": flags.len(), "bottlenecks": summary },
    }))?;
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn print_rows(report: &AnalysisReport) {
    println!(
        "{:<14} {:>4} {:>12} {:>12} {:>12} {:>8} {:>8}  holding back",
        "scenario", "drop", "no-control", "qp", "sim", "qp %", "sim %"
    );
    for r in &report.rows {
        println!(
            "{:<14} {:>4} {:>12.4} {:>12.4} {:>12.4} {:>8.2} {:>8.2}  {}",
            r.scenario,
            r.capacity_drop,
            r.no_control_tts,
            r.qp_tts,
            r.sim_tts,
            r.improvement_qp_pct,
            r.improvement_sim_pct,
            r.holding_back
        );
    }
}

/// Prints violated invariants; the exit status strict mode calls for.
fn invariants(report: &AnalysisReport, strict: bool) -> (ExitCode, Vec<String>) {
    let violated = report.check_invariants();
    for v in &violated {
        eprintln!("invariant violated: {v}");
    }
    let code = if strict && !violated.is_empty() {
        ExitCode::from(EXIT_STRICT)
    } else {
        ExitCode::SUCCESS
    };
    (code, violated)
}

fn optimize_cmd(
    scenario: &Scenario,
    source: &str,
    drop: Option<DropArg>,
    solver: &SolverArgs,
    out: &OutArgs,
    strict: bool,
    timing: bool,
) -> Result<ExitCode> {
    let opts = run_options(solver)?;
    let mut dir = run_dir(out, &[&scenario.label, "optimize"])?;
    let mut report = AnalysisReport::default();
    let mut results = Map::new();
    let mut times = Map::new();
    for s in variants(drop, scenario) {
        let run = optimize(&s, &opts).with_context(|| format!("optimizing {} ({})", s.label, tag(&s)))?;
        let t = tag(&s);
        let plan = run.plan();
        dir.write(&format!("plan_{t}.csv"), &export::plan_to_csv(plan)?)?;
        dir.write(
            &format!("qp_trajectory_{t}.csv"),
            &export::trajectory_to_csv(&s, plan, &run.extracted.trajectory)?,
        )?;
        dir.write(
            &format!("trajectory_{t}.csv"),
            &export::trajectory_to_csv(&s, plan, &run.controlled)?,
        )?;
        dir.write(
            &format!("density_{t}.csv"),
            &export::density_field_to_csv(&density_field(&run.controlled, DEFAULT_MASK_TOL))?,
        )?;
        dir.write(&format!("eps_{t}.csv"), &export::eps_surface_to_csv(plan)?)?;
        dir.write(&format!("sections_{t}.csv"), &export::sections_to_csv(&s, plan, &run.controlled)?)?;
        dir.write(
            &format!("holding_back_{t}.csv"),
            &export::holding_back_to_csv(&run.holding_back)?,
        )?;
        let dump = export::SolutionDump::from_solution(&run.solution, run.problem.objective_constant);
        dir.write(&format!("solution_{t}.json"), &dump.to_json()?)?;
        let surface = eps_surface(plan);
        results.insert(
            t.clone(),
            json!({
                "status": run.solution.status.as_str(),
                "iterations": run.solution.iterations,
                "objective": run.objective(),
                "max_violation": run.problem.max_violation(&run.solution.x),
                "qp_tts": run.extracted.qp_tts,
                "sim_tts": run.controlled.tts,
                "no_control_tts": run.no_control.tts,
                "holding_back_flows": run.holding_back.flags.len(),
                "max_temporal_step": surface.max_temporal_step,
                "max_spatial_step": surface.max_spatial_step,
                "temporal_sq_sum": surface.temporal_sq_sum,
                "spatial_sq_sum": surface.spatial_sq_sum,
            }),
        );
        times.insert(t, json!({ "assemble_s": run.assemble_s, "solve_s": run.solve_s }));
        eprintln!(
            "{} ({}): {} after {} iterations, assembly {:.3} s, solve {:.3} s",
            s.label,
            on_off(s.capacity_drop()),
            run.solution.status,
            run.solution.iterations,
            run.assemble_s,
            run.solve_s
        );
        report.push(&run);
    }
    dir.write("report.csv", &export::report_to_csv(&report.rows)?)?;
    if timing {
        dir.write("timing.json", &(serde_json::to_string_pretty(&times)? + "\n"))?;
    }
    print_rows(&report);
    let (code, violated) = invariants(&report, strict);
    let path = dir.finish(json!({
        "command": "optimize",
        "scenario": scenario.label,
        "source": source,
        "solver": solver_json(&opts),
        "results": results,
        "invariant_violations": violated,
    }))?;
    println!("wrote {}", path.display());
    Ok(code)
}

fn report_cmd(
    sources: &[String],
    drop: DropArg,
    solver: &SolverArgs,
    out: &OutArgs,
    strict: bool,
) -> Result<ExitCode> {
    let opts = run_options(solver)?;
    let scenarios = sources.iter().map(|s| load(s)).collect::<Result<Vec<_>>>()?;
    let mut report = AnalysisReport::default();
    for s in &scenarios {
        let (part, _) = compare(s, &drop_bools(drop), &opts).with_context(|| format!("comparing {}", s.label))?;
        report.rows.extend(part.rows);
        report.objectives.extend(part.objectives);
    }
    let mut dir = match scenarios.as_slice() {
        [one] => run_dir(out, &[&one.label, "report"])?,
        _ => run_dir(out, &["report"])?,
    };
    dir.write("report.csv", &export::report_to_csv(&report.rows)?)?;
    print_rows(&report);
    let (code, violated) = invariants(&report, strict);
    let path = dir.finish(json!({
        "command": "report",
        "scenarios": scenarios.iter().map(|s| s.label.clone()).collect::<Vec<_>>(),
        "sources": sources,
        "solver": solver_json(&opts),
        "invariant_violations": violated,
    }))?;
    println!("wrote {}", path.display());
    Ok(code)
}

fn dump_cmd(
    scenario: &Scenario,
    source: &str,
    drop: Option<DropArg>,
    solve: bool,
    solver: &SolverArgs,
    out: &OutArgs,
) -> Result<ExitCode> {
    let opts = run_options(solver)?;
    let mut dir = run_dir(out, &[&scenario.label, "dump"])?;
    let mut results = Map::new();
    let mut failed = Vec::new();
    for s in variants(drop, scenario) {
        let t = tag(&s);
        let qp = build_qp(&s);
        dir.write(&format!("problem_{t}.json"), &export::ProblemDump::from_qp(&qp).to_json()?)?;
        let mut entry = json!({
            "variables": qp.index_map.total_vars,
            "equalities": qp.b_e.len(),
            "inequalities": qp.b_i.len(),
        });
        println!(
            "{} ({}): {} variables, {} equalities, {} inequalities",
            s.label,
            on_off(s.capacity_drop()),
            qp.index_map.total_vars,
            qp.b_e.len(),
            qp.b_i.len()
        );
        if solve {
            let sol = ibc_qp::solve(&qp.to_solver_problem(), &opts.solver)?;
            let dump = export::SolutionDump::from_solution(&sol, qp.objective_constant);
            dir.write(&format!("solution_{t}.json"), &dump.to_json()?)?;
            println!("  {} after {} iterations, objective {:.6}", sol.status, sol.iterations, dump.objective);
            entry["status"] = json!(sol.status.as_str());
            entry["objective"] = json!(dump.objective);
            if sol.status != ibc_qp::Status::Optimal {
                failed.push(format!("{t}: {}", sol.status));
            }
        }
        results.insert(t, entry);
    }
    let path = dir.finish(json!({
        "command": "dump",
        "scenario": scenario.label,
        "source": source,
        "solver": solver_json(&opts),
        "results": results,
    }))?;
    println!("wrote {}", path.display());
    if !failed.is_empty() {
        bail!("solver did not reach optimality ({})", failed.join(", "));
    }
    Ok(ExitCode::SUCCESS)
}
