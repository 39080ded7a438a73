//! Exhaustive grid search over sharing-factor trajectories for tiny
//! instances. Each candidate is rolled out with the cell transmission model
//! and scored with the full objective, so it never holds flow back.
//! Rollouts with origin queues or jam warnings fall outside the QP's
//! feasible set and are skipped.

use ndarray::Array2;

use crate::ctm::{simulate, SharingPlan};
use crate::error::{Error, Result};
use crate::projection::project_demands;
use crate::qp_build::evaluate_objective;
use crate::scenario::Scenario;

pub const MAX_SECTIONS: usize = 2;
pub const MAX_CONTROL_STEPS: usize = 3;
/// Cap on the number of simulated candidates.
pub const DEFAULT_MAX_POINTS: usize = 2_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult {
    pub step: f64,
    /// Best sharing factors, `n × K_c`.
    pub eps: Array2<f64>,
    pub objective: f64,
    /// Every grid point whose objective ties the best within `1e-9` relative.
    pub minimizers: Vec<Array2<f64>>,
    pub points: usize,
    /// Candidates skipped for origin-queue or jam warnings.
    pub skipped: usize,
}

impl GridResult {
    /// Largest componentwise distance from `eps` to the nearest minimizer.
    pub fn distance_to_minimizers(&self, eps: &Array2<f64>) -> f64 {
        self.minimizers
            .iter()
            .map(|m| m.iter().zip(eps.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Grid values of one section's bounds: `eps_min, eps_min + step, …` up to
/// and including `eps_max`.
fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    let mut v: Vec<f64> = (0..count).map(|j| lo + j as f64 * step).collect();
    if hi - v[count - 1] > 1e-9 {
        v.push(hi);
    }
    v
}

pub fn grid_oracle(scenario: &Scenario, step: f64) -> Result<GridResult> {
    grid_oracle_capped(scenario, step, DEFAULT_MAX_POINTS)
}

pub fn grid_oracle_capped(scenario: &Scenario, step: f64, max_points: usize) -> Result<GridResult> {
    let n = scenario.n();
    let k_c = scenario.control.k_c;
    if n > MAX_SECTIONS || k_c > MAX_CONTROL_STEPS {
        return Err(Error::Oracle(format!(
            "instance has {n} sections and {k_c} control steps; the grid oracle takes at most {MAX_SECTIONS} and {MAX_CONTROL_STEPS}"
        )));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Oracle(format!("grid step must be positive, got {step}")));
    }
    let c = &scenario.control;
    let axes: Vec<Vec<f64>> = (0..n).map(|i| axis(c.eps_min[i], c.eps_max[i], step)).collect();
    // Dimension d = i·K_c + kc, matching the row-major layout of `eps`.
    let dims: Vec<&Vec<f64>> = (0..n * k_c).map(|d| &axes[d / k_c]).collect();
    let points = dims
        .iter()
        .try_fold(1usize, |acc, a| acc.checked_mul(a.len()))
        .filter(|&p| p <= max_points)
        .ok_or_else(|| Error::Oracle(format!("grid exceeds {max_points} points; use a coarser step")))?;

    let projected = project_demands(scenario);
    let mut idx = vec![0usize; dims.len()];
    let mut best_obj = f64::INFINITY;
    let mut scored: Vec<(f64, Vec<usize>)> = Vec::new();
    let mut skipped = 0;
    for _ in 0..points {
        let eps = Array2::from_shape_fn((n, k_c), |(i, kc)| dims[i * k_c + kc][idx[i * k_c + kc]]);
        let plan = SharingPlan::from_eps(eps, &c.eps_init);
        let traj = simulate(scenario, &plan)?;
        if traj.has_jam_or_queue_warnings() {
            skipped += 1;
        } else {
            let obj = evaluate_objective(scenario, &projected, &plan, &traj).total;
            let tie = 1e-9 * (1.0 + best_obj.abs().min(obj.abs()));
            if obj < best_obj + tie {
                best_obj = best_obj.min(obj);
                scored.push((obj, idx.clone()));
            }
        }
        // Odometer increment, last dimension fastest.
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            if idx[d] < dims[d].len() {
                break;
            }
            idx[d] = 0;
        }
    }
    if scored.is_empty() {
        return Err(Error::Oracle(format!("all {points} grid points produce origin queues or jam warnings")));
    }
    let tie = 1e-9 * (1.0 + best_obj.abs());
    let to_eps = |ix: &[usize]| Array2::from_shape_fn((n, k_c), |(i, kc)| dims[i * k_c + kc][ix[i * k_c + kc]]);
    let minimizers: Vec<Array2<f64>> = scored
        .iter()
        .filter(|(o, _)| *o <= best_obj + tie)
        .map(|(_, ix)| to_eps(ix))
        .collect();
    Ok(GridResult {
        step,
        eps: minimizers[0].clone(),
        objective: best_obj,
        minimizers,
        points,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_covers_bounds() {
        let a = axis(0.16, 0.84, 0.01);
        assert_eq!(a.len(), 69);
        assert!((a[68] - 0.84).abs() < 1e-12);
        let b = axis(0.2, 0.5, 0.25);
        assert_eq!(b, vec![0.2, 0.45, 0.5]);
    }
}
