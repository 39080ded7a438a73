//! Flow holding-back: QP flows that sit strictly below every branch of the
//! min-operator that defines them in the cell transmission model.

use crate::qp_build::{QpProblem, RowFamily};
use crate::scenario::Direction;

/// Default tolerance (veh/h).
pub const DEFAULT_TOL: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HoldingBackFlag {
    pub direction: Direction,
    /// 0-based section whose outflow is held back.
    pub section: usize,
    /// Model step of the flow.
    pub k: usize,
    /// Distance to the tightest bound (veh/h).
    pub slack: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct HoldingBackReport {
    pub tol: f64,
    pub flags: Vec<HoldingBackFlag>,
    /// Largest distance of any flow to its tightest bound (veh/h).
    pub max_slack: f64,
}

impl HoldingBackReport {
    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    /// Distinct 0-based sections with at least one flag.
    pub fn sections(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.flags.iter().map(|f| f.section).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// One-line summary, e.g. `3 flows; sections 4,5; max slack 12.3 veh/h`.
    pub fn summary(&self) -> String {
        if self.flags.is_empty() {
            return "none".to_string();
        }
        let sections: Vec<String> = self.sections().iter().map(|s| (s + 1).to_string()).collect();
        format!(
            "{} flows; sections {}; max slack {:.1} veh/h",
            self.flags.len(),
            sections.join(","),
            self.max_slack
        )
    }
}

fn flow_family(f: RowFamily) -> Option<Direction> {
    use RowFamily::*;
    match f {
        FreeFlowA | DemandA | SupplyJamA | SupplyCapA => Some(Direction::A),
        FreeFlowB | DemandB | SupplyJamB | SupplyCapB => Some(Direction::B),
        _ => None,
    }
}

/// Flags every section outflow whose slack to each of its upper-bound rows
/// (free flow, demand and, where a downstream section exists, both supply
/// branches) exceeds `tol`. All these rows carry the flow with coefficient
/// one, so row slack is the distance in veh/h.
pub fn detect_holding_back(problem: &QpProblem, x: &[f64], tol: f64) -> HoldingBackReport {
    let map = &problem.index_map;
    let (n, k) = (map.n, map.k);
    let mut tightest = vec![f64::INFINITY; 2 * n * k];
    let slot = |dir: Direction, i: usize, t: usize| (dir as usize * k + t) * n + i;
    let ax = problem.a_i.mul(x);
    for (r, tag) in problem.ineq_tags.iter().enumerate() {
        if let Some(dir) = flow_family(tag.family) {
            let s = slot(dir, tag.i, tag.t);
            tightest[s] = tightest[s].min(problem.b_i[r] - ax[r]);
        }
    }
    let mut report = HoldingBackReport {
        tol,
        ..Default::default()
    };
    for dir in [Direction::A, Direction::B] {
        for t in 0..k {
            for i in 0..n {
                let slack = tightest[slot(dir, i, t)];
                report.max_slack = report.max_slack.max(slack);
                if slack > tol {
                    report.flags.push(HoldingBackFlag {
                        direction: dir,
                        section: i,
                        k: t,
                        slack,
                    });
                }
            }
        }
    }
    report
}
