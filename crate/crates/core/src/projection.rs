//! Projected demands: external demands propagated at free speed with
//! unlimited capacity, per section and direction.

use ndarray::Array2;

use crate::ctm::SharingPlan;
use crate::scenario::Scenario;

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedDemands {
    /// Flow seeking to traverse each section per model step, `n × K` (veh/h).
    pub d_a: Array2<f64>,
    pub d_b: Array2<f64>,
    /// Control-step means, `n × K_c`.
    pub d_a_ctrl: Array2<f64>,
    pub d_b_ctrl: Array2<f64>,
    /// Control-step means floored at `d_floor`.
    pub d_a_floor: Array2<f64>,
    pub d_b_floor: Array2<f64>,
}

/// Free-flow projection. The road starts empty unless the scenario asks for
/// the initial densities to be included.
pub fn project_demands(scenario: &Scenario) -> ProjectedDemands {
    let n = scenario.n();
    let c = &scenario.control;
    let h = &scenario.highway;
    let dem = &scenario.demands;
    let v_f = scenario.fd.v_f;
    let kk = c.k;
    let mut d_a = Array2::zeros((n, kk));
    let mut d_b = Array2::zeros((n, kk));
    let (mut ra, mut rb) = if c.projection_includes_initial {
        (scenario.rho0_a.clone(), scenario.rho0_b.clone())
    } else {
        (vec![0.0; n], vec![0.0; n])
    };
    for k in 0..kk {
        let qa: Vec<f64> = ra.iter().map(|r| v_f * r).collect();
        let qb: Vec<f64> = rb.iter().map(|r| v_f * r).collect();
        for i in 0..n {
            let in_a = if i == 0 { dem.entry_a[k] } else { qa[i - 1] };
            let in_b = if i == n - 1 { dem.entry_b[k] } else { qb[i + 1] };
            let da = (1.0 - h.exit_rate_a[i]) * in_a + dem.ramp_a[i][k];
            let db = (1.0 - h.exit_rate_b[i]) * in_b + dem.ramp_b[i][k];
            d_a[[i, k]] = da;
            d_b[[i, k]] = db;
            ra[i] += c.t / h.lengths[i] * (da - qa[i]);
            rb[i] += c.t / h.lengths[i] * (db - qb[i]);
        }
    }
    let aggregate = |d: &Array2<f64>| {
        Array2::from_shape_fn((n, c.k_c), |(i, kc)| {
            let s = kc * c.steps_per_control;
            (s..s + c.steps_per_control).map(|k| d[[i, k]]).sum::<f64>() / c.steps_per_control as f64
        })
    };
    let d_a_ctrl = aggregate(&d_a);
    let d_b_ctrl = aggregate(&d_b);
    let d_a_floor = d_a_ctrl.mapv(|v| v.max(c.d_floor));
    let d_b_floor = d_b_ctrl.mapv(|v| v.max(c.d_floor));
    ProjectedDemands {
        d_a,
        d_b,
        d_a_ctrl,
        d_b_ctrl,
        d_a_floor,
        d_b_floor,
    }
}

/// Sharing factor that balances the relative capacity reserves of the two
/// directions, `ε/d_a = (1−ε)/d_b`, clipped to the bounds.
pub fn reserve_balanced_eps(d_a: f64, d_b: f64, eps_min: f64, eps_max: f64) -> f64 {
    (d_a / (d_a + d_b)).clamp(eps_min, eps_max)
}

/// One row of the demand-supply margin series.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginRow {
    pub section: usize,
    pub k_c: usize,
    pub d_a: f64,
    pub d_b: f64,
    pub d_total: f64,
    pub q_cap: f64,
    /// Capacities assigned by the applied factors, when a plan is given.
    pub cap_a: Option<f64>,
    pub cap_b: Option<f64>,
    pub bottleneck: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct BottleneckFlag {
    pub section: usize,
    pub k_c: usize,
}

/// Margin series for every section and control step, flagging structural
/// bottlenecks where the total projected demand exceeds the carriageway
/// capacity.
pub fn supply_demand_margins(
    scenario: &Scenario,
    projected: &ProjectedDemands,
    plan: Option<&SharingPlan>,
) -> Vec<MarginRow> {
    let q_cap = scenario.fd.q_cap;
    let mut rows = Vec::with_capacity(scenario.n() * scenario.control.k_c);
    for i in 0..scenario.n() {
        for kc in 0..scenario.control.k_c {
            let d_a = projected.d_a_ctrl[[i, kc]];
            let d_b = projected.d_b_ctrl[[i, kc]];
            rows.push(MarginRow {
                section: i,
                k_c: kc,
                d_a,
                d_b,
                d_total: d_a + d_b,
                q_cap,
                cap_a: plan.map(|p| p.eps_a[[i, kc]] * q_cap),
                cap_b: plan.map(|p| p.eps_b[[i, kc]] * q_cap),
                bottleneck: d_a + d_b > q_cap,
            });
        }
    }
    rows
}

pub fn bottleneck_flags(scenario: &Scenario, projected: &ProjectedDemands) -> Vec<BottleneckFlag> {
    supply_demand_margins(scenario, projected, None)
        .into_iter()
        .filter(|r| r.bottleneck)
        .map(|r| BottleneckFlag {
            section: r.section,
            k_c: r.k_c,
        })
        .collect()
}
