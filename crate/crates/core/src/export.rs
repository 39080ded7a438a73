//! CSV exports and the JSON problem/solution interchange format.
//!
//! Sections are 1-based in every file. Floats are written in shortest
//! round-trip form, so reading a file back reproduces the values exactly.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::analysis::{DensityField, ReportRow};
use crate::ctm::{SharingPlan, TrafficTrajectory};
use crate::error::{Error, Result};
use crate::holding_back::HoldingBackReport;
use crate::projection::{MarginRow, ProjectedDemands};
use crate::qp_build::QpProblem;
use crate::scenario::{Direction, Scenario};

fn csv_error(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

/// Serializes records to CSV text with a header row.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

fn from_csv<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(csv_error)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub section: usize,
    pub k_c: usize,
    pub eps: f64,
}

/// Plan file: `section,k_c,eps`, one row per section and control step.
pub fn plan_to_csv(plan: &SharingPlan) -> Result<String> {
    let (n, k_c) = plan.eps.dim();
    let rows: Vec<PlanRecord> = (0..n)
        .flat_map(|i| {
            (0..k_c).map(move |kc| PlanRecord {
                section: i + 1,
                k_c: kc,
                eps: plan.eps[[i, kc]],
            })
        })
        .collect();
    to_csv(&rows)
}

/// Reads a plan file for `scenario`. Every `(section, k_c)` cell must
/// appear exactly once and every ε must lie within the section's bounds.
pub fn plan_from_csv(text: &str, scenario: &Scenario) -> Result<SharingPlan> {
    let rows: Vec<PlanRecord> = from_csv(text)?;
    let n = scenario.n();
    let k_c = scenario.control.k_c;
    let c = &scenario.control;
    let mut eps = Array2::from_elem((n, k_c), f64::NAN);
    for r in &rows {
        if r.section == 0 || r.section > n || r.k_c >= k_c {
            return Err(Error::Dimension(format!(
                "plan cell (section {}, k_c {}) outside the scenario's {n} sections × {k_c} control steps",
                r.section, r.k_c
            )));
        }
        let i = r.section - 1;
        if !eps[[i, r.k_c]].is_nan() {
            return Err(Error::Format(format!("plan cell (section {}, k_c {}) given twice", r.section, r.k_c)));
        }
        let tol = 1e-9;
        if !(r.eps >= c.eps_min[i] - tol && r.eps <= c.eps_max[i] + tol) {
            return Err(Error::Format(format!(
                "plan cell (section {}, k_c {}): ε = {} outside [{}, {}]",
                r.section, r.k_c, r.eps, c.eps_min[i], c.eps_max[i]
            )));
        }
        eps[[i, r.k_c]] = r.eps;
    }
    if rows.len() != n * k_c {
        return Err(Error::Dimension(format!(
            "plan has {} cells, scenario needs {} ({n} sections × {k_c} control steps)",
            rows.len(),
            n * k_c
        )));
    }
    Ok(SharingPlan::from_eps(eps, &c.eps_init))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub k: usize,
    pub section: usize,
    pub direction: Direction,
    /// Density at the start of step `k` (veh/km).
    pub density: f64,
    pub relative_density: f64,
    /// Outflow during step `k` (veh/h).
    pub outflow: f64,
    pub applied_eps: f64,
}

/// Long-format trajectory: one row per step, section and direction for
/// `k = 0..K−1`.
pub fn trajectory_to_csv(scenario: &Scenario, plan: &SharingPlan, traj: &TrafficTrajectory) -> Result<String> {
    let mut rows = Vec::with_capacity(2 * scenario.n() * traj.k());
    for k in 0..traj.k() {
        let kc = scenario.control.control_step(k);
        for i in 0..scenario.n() {
            for dir in [Direction::A, Direction::B] {
                rows.push(TrajectoryRecord {
                    k,
                    section: i + 1,
                    direction: dir,
                    density: traj.density(dir)[[i, k]],
                    relative_density: traj.relative(dir)[[i, k]],
                    outflow: traj.outflow(dir)[[i, k]],
                    applied_eps: plan.applied(dir, i, kc),
                });
            }
        }
    }
    to_csv(&rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityRecord {
    pub section: usize,
    pub k: usize,
    pub rel_a: f64,
    pub rel_b: f64,
    pub congested_a: bool,
    pub congested_b: bool,
}

/// Relative-density grid in gnuplot `splot` layout: sections outer, steps
/// inner.
pub fn density_field_to_csv(field: &DensityField) -> Result<String> {
    let (n, k) = field.rel_a.dim();
    let mask_a = field.mask(Direction::A);
    let mask_b = field.mask(Direction::B);
    let rows: Vec<DensityRecord> = (0..n)
        .flat_map(|i| {
            let (ma, mb) = (&mask_a, &mask_b);
            (0..k).map(move |t| DensityRecord {
                section: i + 1,
                k: t,
                rel_a: field.rel_a[[i, t]],
                rel_b: field.rel_b[[i, t]],
                congested_a: ma[[i, t]],
                congested_b: mb[[i, t]],
            })
        })
        .collect();
    to_csv(&rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsRecord {
    pub section: usize,
    pub k_c: usize,
    pub eps: f64,
    pub eps_a: f64,
    pub eps_b: f64,
}

/// Decided and applied sharing factors over space and control time.
pub fn eps_surface_to_csv(plan: &SharingPlan) -> Result<String> {
    let (n, k_c) = plan.eps.dim();
    let rows: Vec<EpsRecord> = (0..n)
        .flat_map(|i| {
            (0..k_c).map(move |kc| EpsRecord {
                section: i + 1,
                k_c: kc,
                eps: plan.eps[[i, kc]],
                eps_a: plan.eps_a[[i, kc]],
                eps_b: plan.eps_b[[i, kc]],
            })
        })
        .collect();
    to_csv(&rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginRecord {
    pub section: usize,
    pub k_c: usize,
    pub d_a: f64,
    pub d_b: f64,
    pub d_total: f64,
    pub q_cap: f64,
    pub cap_a: Option<f64>,
    pub cap_b: Option<f64>,
    pub bottleneck: bool,
}

/// Projected demands against assigned capacities per section.
pub fn margins_to_csv(rows: &[MarginRow]) -> Result<String> {
    let recs: Vec<MarginRecord> = rows
        .iter()
        .map(|r| MarginRecord {
            section: r.section + 1,
            k_c: r.k_c,
            d_a: r.d_a,
            d_b: r.d_b,
            d_total: r.d_total,
            q_cap: r.q_cap,
            cap_a: r.cap_a,
            cap_b: r.cap_b,
            bottleneck: r.bottleneck,
        })
        .collect();
    to_csv(&recs)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionRecord {
    pub section: usize,
    pub k: usize,
    pub rho_a: f64,
    pub rho_b: f64,
    pub rho_cr_a: f64,
    pub rho_cr_b: f64,
    pub q_a: f64,
    pub q_b: f64,
    pub q_total: f64,
    pub cap_a: f64,
    pub cap_b: f64,
    pub q_cap: f64,
    pub eps: f64,
}

/// Per-section time series: densities against critical densities, flows
/// against assigned capacities, and the total flow.
pub fn sections_to_csv(scenario: &Scenario, plan: &SharingPlan, traj: &TrafficTrajectory) -> Result<String> {
    let fd = &scenario.fd;
    let mut rows = Vec::with_capacity(scenario.n() * traj.k());
    for i in 0..scenario.n() {
        for k in 0..traj.k() {
            let kc = scenario.control.control_step(k);
            let (ea, eb) = (plan.eps_a[[i, kc]], plan.eps_b[[i, kc]]);
            rows.push(SectionRecord {
                section: i + 1,
                k,
                rho_a: traj.rho_a[[i, k]],
                rho_b: traj.rho_b[[i, k]],
                rho_cr_a: ea * fd.rho_cr,
                rho_cr_b: eb * fd.rho_cr,
                q_a: traj.out_a[[i, k]],
                q_b: traj.out_b[[i, k]],
                q_total: traj.out_a[[i, k]] + traj.out_b[[i, k]],
                cap_a: ea * fd.q_cap,
                cap_b: eb * fd.q_cap,
                q_cap: fd.q_cap,
                eps: plan.eps[[i, kc]],
            });
        }
    }
    to_csv(&rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectedRecord {
    pub section: usize,
    pub k: usize,
    pub d_a: f64,
    pub d_b: f64,
    pub d_total: f64,
}

/// Projected demands per section and model step (veh/h).
pub fn projected_to_csv(projected: &ProjectedDemands) -> Result<String> {
    let (n, k) = projected.d_a.dim();
    let rows: Vec<ProjectedRecord> = (0..n)
        .flat_map(|i| {
            (0..k).map(move |t| ProjectedRecord {
                section: i + 1,
                k: t,
                d_a: projected.d_a[[i, t]],
                d_b: projected.d_b[[i, t]],
                d_total: projected.d_a[[i, t]] + projected.d_b[[i, t]],
            })
        })
        .collect();
    to_csv(&rows)
}

pub fn report_to_csv(rows: &[ReportRow]) -> Result<String> {
    to_csv(rows)
}

pub fn report_from_csv(text: &str) -> Result<Vec<ReportRow>> {
    from_csv(text)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoldingBackRecord {
    pub direction: Direction,
    pub section: usize,
    pub k: usize,
    pub slack: f64,
}

pub fn holding_back_to_csv(report: &HoldingBackReport) -> Result<String> {
    let rows: Vec<HoldingBackRecord> = report
        .flags
        .iter()
        .map(|f| HoldingBackRecord {
            direction: f.direction,
            section: f.section + 1,
            k: f.k,
            slack: f.slack,
        })
        .collect();
    to_csv(&rows)
}

/// Sparse matrix as coordinate lists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseDump {
    pub nrows: usize,
    pub ncols: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseDump {
    pub fn from_csc(m: &ibc_qp::CscMatrix) -> Self {
        let (mut rows, mut cols, mut values) = (Vec::new(), Vec::new(), Vec::new());
        for (i, j, v) in m.triplets() {
            rows.push(i);
            cols.push(j);
            values.push(v);
        }
        Self {
            nrows: m.nrows,
            ncols: m.ncols,
            rows,
            cols,
            values,
        }
    }

    pub fn to_csc(&self) -> Result<ibc_qp::CscMatrix> {
        let ok = self.rows.len() == self.values.len()
            && self.cols.len() == self.values.len()
            && self.rows.iter().all(|&r| r < self.nrows)
            && self.cols.iter().all(|&c| c < self.ncols);
        if !ok {
            return Err(Error::Format("sparse matrix dump has inconsistent coordinates".into()));
        }
        Ok(ibc_qp::CscMatrix::from_triplets(
            self.nrows,
            self.ncols,
            &self.rows,
            &self.cols,
            &self.values,
        ))
    }
}

fn bound_out(v: &[f64]) -> Vec<Option<f64>> {
    v.iter().map(|x| x.is_finite().then_some(*x)).collect()
}

fn bound_in(v: &[Option<f64>], missing: f64) -> Vec<f64> {
    v.iter().map(|x| x.unwrap_or(missing)).collect()
}

/// `min ½xᵀPx + qᵀx + constant  s.t.  A_eq x = b_eq, A_ineq x ≤ b_ineq,
/// lb ≤ x ≤ ub`; infinite bounds are `null`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemDump {
    pub p: SparseDump,
    pub q: Vec<f64>,
    #[serde(default)]
    pub constant: f64,
    pub a_eq: SparseDump,
    pub b_eq: Vec<f64>,
    pub a_ineq: SparseDump,
    pub b_ineq: Vec<f64>,
    pub lb: Vec<Option<f64>>,
    pub ub: Vec<Option<f64>>,
    /// Optional labels, e.g. `rho_a[2,15]` (1-based section, time index).
    #[serde(default)]
    pub variables: Vec<String>,
    #[serde(default)]
    pub eq_rows: Vec<String>,
    #[serde(default)]
    pub ineq_rows: Vec<String>,
}

impl ProblemDump {
    pub fn from_qp(qp: &QpProblem) -> Self {
        let map = &qp.index_map;
        let variables = (0..map.total_vars)
            .map(|j| {
                let (f, i, t) = map.decode(j);
                format!("{}[{},{}]", f.name(), i + 1, t)
            })
            .collect();
        let label = |tags: &[crate::qp_build::RowTag]| {
            tags.iter()
                .map(|t| format!("{}[{},{}]", t.family.name(), t.i + 1, t.t))
                .collect()
        };
        Self {
            p: SparseDump::from_csc(&qp.h),
            q: qp.c.clone(),
            constant: qp.objective_constant,
            a_eq: SparseDump::from_csc(&qp.a_e),
            b_eq: qp.b_e.clone(),
            a_ineq: SparseDump::from_csc(&qp.a_i),
            b_ineq: qp.b_i.clone(),
            lb: bound_out(&qp.lb),
            ub: bound_out(&qp.ub),
            variables,
            eq_rows: label(&qp.eq_tags),
            ineq_rows: label(&qp.ineq_tags),
        }
    }

    pub fn to_problem(&self) -> Result<ibc_qp::Problem> {
        let p = ibc_qp::Problem {
            p: self.p.to_csc()?,
            q: self.q.clone(),
            a_eq: self.a_eq.to_csc()?,
            b_eq: self.b_eq.clone(),
            a_ineq: self.a_ineq.to_csc()?,
            b_ineq: self.b_ineq.clone(),
            lb: bound_in(&self.lb, f64::NEG_INFINITY),
            ub: bound_in(&self.ub, f64::INFINITY),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("problem dump: {e}")))
    }
}

/// Solver output in the same interchange format. Duals are ordered
/// `[eq; ineq; bounds]`. Timing is left out so dumps are reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionDump {
    pub status: String,
    pub objective: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub primal_res: f64,
    pub dual_res: f64,
    pub iterations: usize,
}

impl SolutionDump {
    pub fn from_solution(s: &ibc_qp::Solution, constant: f64) -> Self {
        Self {
            status: s.status.to_string(),
            objective: s.objective + constant,
            x: s.x.clone(),
            y: s.y.clone(),
            primal_res: s.primal_res,
            dual_res: s.dual_res,
            iterations: s.iterations,
        }
    }

    pub fn status(&self) -> Result<ibc_qp::Status> {
        self.status.parse().map_err(Error::Format)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("solution dump: {e}")))
    }
}
