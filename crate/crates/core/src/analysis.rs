//! No-control versus optimized runs: TTS reports, relative-density fields,
//! sharing-factor surfaces and report invariants.

use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::ctm::{simulate, simulate_no_control, SharingPlan, TrafficTrajectory};
use crate::error::{Error, Result};
use crate::holding_back::{detect_holding_back, HoldingBackReport, DEFAULT_TOL};
use crate::projection::{bottleneck_flags, project_demands, BottleneckFlag, ProjectedDemands};
use crate::qp_build::{build_qp_with, evaluate_objective, extract_solution, ExtractedSolution, QpProblem};
use crate::scenario::{Direction, Scenario};

/// Tolerance on `ρ̃ > 1` when marking congested cells.
pub const DEFAULT_MASK_TOL: f64 = 1e-6;
/// Relative tolerance of the TTS ordering invariants.
pub const INVARIANT_RTOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub solver: ibc_qp::Settings,
    pub holding_back_tol: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            solver: ibc_qp::Settings::default(),
            holding_back_tol: DEFAULT_TOL,
        }
    }
}

/// Everything produced by optimizing one scenario variant.
#[derive(Clone, Debug)]
pub struct VariantRun {
    pub scenario: Scenario,
    pub projected: ProjectedDemands,
    pub bottlenecks: Vec<BottleneckFlag>,
    pub no_control: TrafficTrajectory,
    /// Objective of the no-control plan and its trajectory.
    pub no_control_objective: f64,
    pub problem: QpProblem,
    pub solution: ibc_qp::Solution,
    pub extracted: ExtractedSolution,
    /// Model rollout under the optimized plan.
    pub controlled: TrafficTrajectory,
    pub holding_back: HoldingBackReport,
    pub assemble_s: f64,
    pub solve_s: f64,
}

impl VariantRun {
    pub fn plan(&self) -> &SharingPlan {
        &self.extracted.plan
    }

    /// Optimal objective including the constant term.
    pub fn objective(&self) -> f64 {
        self.solution.objective + self.problem.objective_constant
    }

    pub fn row(&self) -> ReportRow {
        ReportRow::new(
            &self.scenario.label,
            self.scenario.capacity_drop(),
            self.no_control.tts,
            self.extracted.qp_tts,
            self.controlled.tts,
            &self.holding_back,
            &self.bottlenecks,
            &self.solution,
            self.objective(),
        )
    }
}

/// Assembles and solves the QP of `scenario` as given, then re-simulates the
/// model under the optimized plan. Fails unless the solver reports optimal.
pub fn optimize(scenario: &Scenario, opts: &RunOptions) -> Result<VariantRun> {
    let projected = project_demands(scenario);
    let bottlenecks = bottleneck_flags(scenario, &projected);
    let no_control = simulate_no_control(scenario);
    let no_control_plan = SharingPlan::no_control(scenario);
    let no_control_objective = evaluate_objective(scenario, &projected, &no_control_plan, &no_control).total;

    let t0 = Instant::now();
    let problem = build_qp_with(scenario, &projected);
    let assemble_s = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let solution = ibc_qp::solve(&problem.to_solver_problem(), &opts.solver)?;
    let solve_s = t1.elapsed().as_secs_f64();
    if solution.status != ibc_qp::Status::Optimal {
        return Err(Error::SolverStatus(solution.status));
    }
    let extracted = extract_solution(&solution.x, &problem.index_map, scenario)?;
    let controlled = simulate(scenario, &extracted.plan)?;
    let holding_back = detect_holding_back(&problem, &solution.x, opts.holding_back_tol);
    Ok(VariantRun {
        scenario: scenario.clone(),
        projected,
        bottlenecks,
        no_control,
        no_control_objective,
        problem,
        solution,
        extracted,
        controlled,
        holding_back,
        assemble_s,
        solve_s,
    })
}

/// Optimizes the scenario with the capacity drop switched on or off.
pub fn run_variant(scenario: &Scenario, capacity_drop: bool, opts: &RunOptions) -> Result<VariantRun> {
    optimize(&scenario.with_capacity_drop(capacity_drop), opts)
}

pub fn improvement_pct(no_control: f64, controlled: f64) -> f64 {
    100.0 * (no_control - controlled) / no_control
}

/// One row of the TTS report. Column order is the CSV schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: String,
    /// `on` or `off`.
    pub capacity_drop: String,
    pub no_control_tts: f64,
    pub qp_tts: f64,
    pub sim_tts: f64,
    pub improvement_qp_pct: f64,
    pub improvement_sim_pct: f64,
    pub holding_back_flows: usize,
    pub holding_back: String,
    pub bottleneck_cells: usize,
    pub bottlenecks: String,
    pub solver_status: String,
    pub solver_iterations: usize,
    pub objective: f64,
}

impl ReportRow {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        scenario: &str,
        capacity_drop: bool,
        no_control_tts: f64,
        qp_tts: f64,
        sim_tts: f64,
        holding_back: &HoldingBackReport,
        bottlenecks: &[BottleneckFlag],
        solution: &ibc_qp::Solution,
        objective: f64,
    ) -> Self {
        Self {
            scenario: scenario.to_string(),
            capacity_drop: if capacity_drop { "on" } else { "off" }.to_string(),
            no_control_tts,
            qp_tts,
            sim_tts,
            improvement_qp_pct: improvement_pct(no_control_tts, qp_tts),
            improvement_sim_pct: improvement_pct(no_control_tts, sim_tts),
            holding_back_flows: holding_back.flags.len(),
            holding_back: holding_back.summary(),
            bottleneck_cells: bottlenecks.len(),
            bottlenecks: bottleneck_summary(bottlenecks),
            solver_status: solution.status.to_string(),
            solver_iterations: solution.iterations,
            objective,
        }
    }
}

/// Compact bottleneck listing: `section:first_kc-last_kc` per section
/// (1-based sections, control steps).
pub fn bottleneck_summary(flags: &[BottleneckFlag]) -> String {
    if flags.is_empty() {
        return "none".to_string();
    }
    let mut sorted = flags.to_vec();
    sorted.sort();
    let mut parts = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].section;
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1].section == s {
            j += 1;
        }
        parts.push(format!("{}:{}-{}", s + 1, sorted[i].k_c, sorted[j].k_c));
        i = j + 1;
    }
    parts.join(" ")
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnalysisReport {
    pub rows: Vec<ReportRow>,
    /// Per row: optimal and no-control objective.
    pub objectives: Vec<(f64, f64)>,
}

impl AnalysisReport {
    pub fn push(&mut self, run: &VariantRun) {
        self.rows.push(run.row());
        self.objectives.push((run.objective(), run.no_control_objective));
    }

    /// Violated report invariants, as messages.
    pub fn check_invariants(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (row, &(opt, nc_obj)) in self.rows.iter().zip(&self.objectives) {
            let who = format!("{} (capacity drop {})", row.scenario, row.capacity_drop);
            let tol = INVARIANT_RTOL * row.no_control_tts.abs().max(1.0);
            if row.sim_tts < row.qp_tts - tol {
                out.push(format!("{who}: simulated TTS {:.6} below QP TTS {:.6}", row.sim_tts, row.qp_tts));
            }
            if opt > nc_obj + INVARIANT_RTOL * nc_obj.abs().max(1.0) {
                out.push(format!("{who}: optimal objective {opt:.6} above no-control objective {nc_obj:.6}"));
            }
            if row.qp_tts > row.no_control_tts + tol {
                out.push(format!(
                    "{who}: controlled TTS {:.6} above no-control TTS {:.6}",
                    row.qp_tts, row.no_control_tts
                ));
            }
        }
        for on in self.rows.iter().filter(|r| r.capacity_drop == "on") {
            for off in self.rows.iter().filter(|r| r.capacity_drop == "off" && r.scenario == on.scenario) {
                if on.no_control_tts < off.no_control_tts {
                    out.push(format!(
                        "{}: no-control TTS with capacity drop {:.6} below the value without {:.6}",
                        on.scenario, on.no_control_tts, off.no_control_tts
                    ));
                }
            }
        }
        out
    }
}

/// Runs each requested capacity-drop variant of the scenario.
pub fn compare(scenario: &Scenario, variants: &[bool], opts: &RunOptions) -> Result<(AnalysisReport, Vec<VariantRun>)> {
    let mut report = AnalysisReport::default();
    let mut runs = Vec::with_capacity(variants.len());
    for &drop in variants {
        let run = run_variant(scenario, drop, opts)?;
        report.push(&run);
        runs.push(run);
    }
    Ok((report, runs))
}

/// Relative densities of both directions, `n × K`, and the congested mask.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityField {
    pub rel_a: Array2<f64>,
    pub rel_b: Array2<f64>,
    /// A cell is congested when `ρ̃ > 1 + tol`.
    pub tol: f64,
}

pub fn density_field(traj: &TrafficTrajectory, tol: f64) -> DensityField {
    DensityField {
        rel_a: traj.rel_a.clone(),
        rel_b: traj.rel_b.clone(),
        tol,
    }
}

impl DensityField {
    pub fn relative(&self, dir: Direction) -> &Array2<f64> {
        match dir {
            Direction::A => &self.rel_a,
            Direction::B => &self.rel_b,
        }
    }

    pub fn mask(&self, dir: Direction) -> Array2<bool> {
        self.relative(dir).mapv(|r| r > 1.0 + self.tol)
    }

    pub fn congested_cells(&self) -> usize {
        [Direction::A, Direction::B]
            .iter()
            .map(|&d| self.mask(d).iter().filter(|&&c| c).count())
            .sum()
    }

    pub fn is_uncongested(&self) -> bool {
        self.congested_cells() == 0
    }

    pub fn max_relative(&self) -> f64 {
        self.rel_a.iter().chain(self.rel_b.iter()).fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    /// First and last model step at which section `i` is congested.
    pub fn window(&self, dir: Direction, i: usize) -> Option<(usize, usize)> {
        let row = self.relative(dir).row(i);
        let hot = |r: &f64| *r > 1.0 + self.tol;
        let first = row.iter().position(hot)?;
        let last = row.iter().rposition(hot)?;
        Some((first, last))
    }
}

/// Sharing factors over space and time with smoothness diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct EpsSurface {
    pub eps: Array2<f64>,
    /// `max |ε_i(k_c) − ε_i(k_c − 1)|`.
    pub max_temporal_step: f64,
    /// `max |ε_i(k_c) − ε_{i−1}(k_c)|`.
    pub max_spatial_step: f64,
    /// `Σ (ε_i(k_c) − ε_i(k_c − 1))²`, the quantity the `w2` term penalizes.
    pub temporal_sq_sum: f64,
    /// `Σ (ε_i(k_c) − ε_{i−1}(k_c))²`, the quantity the `w3` term penalizes.
    pub spatial_sq_sum: f64,
    /// Per section: mean ε over the first and second half of the horizon.
    pub half_means: Vec<(f64, f64)>,
}

pub fn eps_surface(plan: &SharingPlan) -> EpsSurface {
    let eps = plan.eps.clone();
    let (n, k_c) = eps.dim();
    let mut max_t: f64 = 0.0;
    let mut max_s: f64 = 0.0;
    let mut sq_t = 0.0;
    let mut sq_s = 0.0;
    for i in 0..n {
        for kc in 0..k_c {
            if kc > 0 {
                let d = eps[[i, kc]] - eps[[i, kc - 1]];
                max_t = max_t.max(d.abs());
                sq_t += d * d;
            }
            if i > 0 {
                let d = eps[[i, kc]] - eps[[i - 1, kc]];
                max_s = max_s.max(d.abs());
                sq_s += d * d;
            }
        }
    }
    let half = k_c / 2;
    let mean = |i: usize, r: std::ops::Range<usize>| {
        let len = r.len().max(1) as f64;
        r.map(|kc| eps[[i, kc]]).sum::<f64>() / len
    };
    let half_means = (0..n).map(|i| (mean(i, 0..half), mean(i, half..k_c))).collect();
    EpsSurface {
        eps,
        max_temporal_step: max_t,
        max_spatial_step: max_s,
        temporal_sq_sum: sq_t,
        spatial_sq_sum: sq_s,
        half_means,
    }
}

/// Total flow through section `i` in both directions, per model step.
pub fn total_flow(traj: &TrafficTrajectory, i: usize) -> Vec<f64> {
    (0..traj.k()).map(|k| traj.out_a[[i, k]] + traj.out_b[[i, k]]).collect()
}

/// Model-step span `[first, last]` of the bottleneck flags at section `i`.
pub fn critical_period(scenario: &Scenario, flags: &[BottleneckFlag], i: usize) -> Option<(usize, usize)> {
    let spc = scenario.control.steps_per_control;
    let kcs: Vec<usize> = flags.iter().filter(|f| f.section == i).map(|f| f.k_c).collect();
    let first = *kcs.iter().min()?;
    let last = *kcs.iter().max()?;
    Some((first * spc, (last + 1) * spc - 1))
}
