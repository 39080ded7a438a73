//! Bidirectional cell transmission model under a time-varying sharing plan.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scenario::{Direction, FdParams, Scenario};

/// Decided sharing factors and the factors actually applied, all `n × K_c`.
#[derive(Clone, Debug, PartialEq)]
pub struct SharingPlan {
    pub eps: Array2<f64>,
    pub eps_a: Array2<f64>,
    pub eps_b: Array2<f64>,
}

impl SharingPlan {
    /// Derives the applied factors with the min-rule, using `eps_init` as the
    /// boundary in force before the first control step.
    pub fn from_eps(eps: Array2<f64>, eps_init: &[f64]) -> Self {
        let (n, k_c) = eps.dim();
        assert_eq!(eps_init.len(), n);
        let mut eps_a = Array2::zeros((n, k_c));
        let mut eps_b = Array2::zeros((n, k_c));
        for kc in 0..k_c {
            for i in 0..n {
                let prev = if kc == 0 { eps_init[i] } else { eps[[i, kc - 1]] };
                let (a, b) = applied_pair(eps[[i, kc]], prev);
                eps_a[[i, kc]] = a;
                eps_b[[i, kc]] = b;
            }
        }
        Self { eps, eps_a, eps_b }
    }

    pub fn constant(scenario: &Scenario, value: f64) -> Self {
        let eps = Array2::from_elem((scenario.n(), scenario.control.k_c), value);
        Self::from_eps(eps, &scenario.control.eps_init)
    }

    /// Fixed boundary at the middle of the carriageway.
    pub fn no_control(scenario: &Scenario) -> Self {
        Self::constant(scenario, 0.5)
    }

    pub fn n(&self) -> usize {
        self.eps.nrows()
    }

    pub fn k_c(&self) -> usize {
        self.eps.ncols()
    }

    pub fn check_dims(&self, scenario: &Scenario) -> Result<()> {
        let want = (scenario.n(), scenario.control.k_c);
        if self.eps.dim() != want || self.eps_a.dim() != want || self.eps_b.dim() != want {
            return Err(Error::Dimension(format!(
                "sharing plan is {:?}, scenario needs {want:?} (sections × control steps)",
                self.eps.dim()
            )));
        }
        Ok(())
    }

    /// Applied factor of a direction at section `i`, control step `kc`.
    pub fn applied(&self, dir: Direction, i: usize, kc: usize) -> f64 {
        match dir {
            Direction::A => self.eps_a[[i, kc]],
            Direction::B => self.eps_b[[i, kc]],
        }
    }
}

fn applied_pair(now: f64, prev: f64) -> (f64, f64) {
    (now.min(prev), (1.0 - now).min(1.0 - prev))
}

/// Applied sharing factors: `ε^a = min(ε, ε_prev)`, `ε^b = min(1−ε, 1−ε_prev)`.
pub fn applied_sharing(eps_now: &[f64], eps_prev: &[f64]) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(eps_now.len(), eps_prev.len());
    eps_now
        .iter()
        .zip(eps_prev)
        .map(|(&e, &p)| applied_pair(e, p))
        .unzip()
}

/// Demand of a direction holding share `eps`, with the capacity-drop droop
/// `lambda_d` beyond the critical density. Clamped at zero.
pub fn demand_fn(rho: f64, eps: f64, fd: &FdParams, lambda_d: f64) -> f64 {
    let congested = eps * fd.q_cap + lambda_d * fd.q_cap * (rho - eps * fd.rho_cr) / (fd.rho_cr - fd.rho_max);
    congested.min(fd.v_f * rho).max(0.0)
}

/// Supply of a direction holding share `eps`. Clamped at zero.
pub fn supply_fn(rho: f64, eps: f64, fd: &FdParams) -> f64 {
    (eps * fd.q_cap).min(fd.w_s * (eps * fd.rho_max - rho)).max(0.0)
}

/// External flows of one model step (veh/h).
#[derive(Clone, Copy, Debug)]
pub struct Externals<'a> {
    pub entry_a: f64,
    pub entry_b: f64,
    pub ramp_a: &'a [f64],
    pub ramp_b: &'a [f64],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WarningKind {
    /// Density above the direction's jam density after the step.
    Jam { direction: Direction, section: usize },
    /// Entry flow throttled by the first section's supply; the excess waits
    /// in an origin queue.
    OriginQueue { direction: Direction },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimWarning {
    /// Model step whose update produced the condition.
    pub k: usize,
    pub kind: WarningKind,
}

impl std::fmt::Display for SimWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            WarningKind::Jam { direction, section } => write!(
                f,
                "k={}: density of section {} direction {} exceeds its jam density",
                self.k,
                section + 1,
                direction
            ),
            WarningKind::OriginQueue { direction } => {
                write!(f, "k={}: entry of direction {} throttled, origin queue forms", self.k, direction)
            }
        }
    }
}

/// Result of one model step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub rho_a: Vec<f64>,
    pub rho_b: Vec<f64>,
    /// Outflow of each section (veh/h).
    pub out_a: Vec<f64>,
    pub out_b: Vec<f64>,
    /// Admitted entry flows (veh/h).
    pub entry_a: f64,
    pub entry_b: f64,
    /// Origin queues after the step (veh).
    pub queue_a: f64,
    pub queue_b: f64,
    pub warnings: Vec<WarningKind>,
}

/// Per-direction view of the geometry so one routine serves both directions.
/// Index `j` runs along the direction of travel.
struct Lane<'a> {
    rho: &'a [f64],
    eps: &'a [f64],
    beta: &'a [f64],
    ramp: &'a [f64],
    lengths: &'a [f64],
    order: Vec<usize>,
}

struct LaneStep {
    rho: Vec<f64>,
    out: Vec<f64>,
    entry: f64,
    queue: f64,
    throttled: bool,
    jam: Vec<usize>,
}

fn lane_step(l: &Lane, fd: &FdParams, t: f64, lambda_d: f64, lambda_r: f64, entry: f64, queue: f64) -> LaneStep {
    let n = l.order.len();
    let mut out = vec![0.0; n];
    for j in 0..n {
        let i = l.order[j];
        let d = demand_fn(l.rho[i], l.eps[i], fd, lambda_d);
        out[i] = if j + 1 < n {
            let nx = l.order[j + 1];
            let s = supply_fn(l.rho[nx], l.eps[nx], fd) / (1.0 - l.beta[nx]) - lambda_r * l.ramp[nx];
            d.min(s).max(0.0)
        } else {
            d
        };
    }

    // Entry: demand plus queued vehicles, throttled only if the first section
    // would pass its jam density.
    let first = l.order[0];
    let wanted = entry + queue / t;
    let update = |i: usize, inflow: f64| -> f64 {
        l.rho[i] + t / l.lengths[i] * ((1.0 - l.beta[i]) * inflow - out[i] + l.ramp[i])
    };
    let jam_first = l.eps[first] * fd.rho_max;
    let mut admitted = wanted;
    let mut throttled = false;
    if update(first, wanted) > jam_first {
        let s = supply_fn(l.rho[first], l.eps[first], fd) / (1.0 - l.beta[first]) - lambda_r * l.ramp[first];
        let cap = s.max(0.0);
        if cap < wanted {
            admitted = cap;
            throttled = true;
        }
    }
    let new_queue = if throttled { (queue + t * (entry - admitted)).max(0.0) } else { 0.0 };

    let mut rho = vec![0.0; n];
    let mut jam = Vec::new();
    for j in 0..n {
        let i = l.order[j];
        let inflow = if j == 0 { admitted } else { out[l.order[j - 1]] };
        rho[i] = update(i, inflow);
        if rho[i] > l.eps[i] * fd.rho_max + 1e-9 {
            jam.push(i);
        }
    }
    LaneStep {
        rho,
        out,
        entry: admitted,
        queue: new_queue,
        throttled,
        jam,
    }
}

/// Advances both directions by one model step.
#[allow(clippy::too_many_arguments)]
pub fn step(
    scenario: &Scenario,
    rho_a: &[f64],
    rho_b: &[f64],
    eps_a: &[f64],
    eps_b: &[f64],
    ext: &Externals,
    queue_a: f64,
    queue_b: f64,
) -> StepOutput {
    let n = scenario.n();
    let h = &scenario.highway;
    let c = &scenario.control;
    let a = lane_step(
        &Lane {
            rho: rho_a,
            eps: eps_a,
            beta: &h.exit_rate_a,
            ramp: ext.ramp_a,
            lengths: &h.lengths,
            order: (0..n).collect(),
        },
        &scenario.fd,
        c.t,
        c.lambda_d,
        c.lambda_r,
        ext.entry_a,
        queue_a,
    );
    let b = lane_step(
        &Lane {
            rho: rho_b,
            eps: eps_b,
            beta: &h.exit_rate_b,
            ramp: ext.ramp_b,
            lengths: &h.lengths,
            order: (0..n).rev().collect(),
        },
        &scenario.fd,
        c.t,
        c.lambda_d,
        c.lambda_r,
        ext.entry_b,
        queue_b,
    );
    let mut warnings = Vec::new();
    for (dir, lane) in [(Direction::A, &a), (Direction::B, &b)] {
        if lane.throttled {
            warnings.push(WarningKind::OriginQueue { direction: dir });
        }
        for &section in &lane.jam {
            warnings.push(WarningKind::Jam { direction: dir, section });
        }
    }
    StepOutput {
        rho_a: a.rho,
        rho_b: b.rho,
        out_a: a.out,
        out_b: b.out,
        entry_a: a.entry,
        entry_b: b.entry,
        queue_a: a.queue,
        queue_b: b.queue,
        warnings,
    }
}

/// Densities, flows and derived quantities of a rollout.
#[derive(Clone, Debug, PartialEq)]
pub struct TrafficTrajectory {
    /// Densities, `n × (K+1)`; column 0 is the initial state.
    pub rho_a: Array2<f64>,
    pub rho_b: Array2<f64>,
    /// Section outflows `q_i(k)`, `n × K`.
    pub out_a: Array2<f64>,
    pub out_b: Array2<f64>,
    /// Admitted entry flows `q_0^a(k)` and `q_{n+1}^b(k)`.
    pub entry_a: Vec<f64>,
    pub entry_b: Vec<f64>,
    /// Relative densities `ρ(k) / (ε^{a,b}(k_c(k))·ρ_cr)`, `n × K`.
    pub rel_a: Array2<f64>,
    pub rel_b: Array2<f64>,
    /// Origin queues (veh), length K+1. Not part of TTS.
    pub queue_a: Vec<f64>,
    pub queue_b: Vec<f64>,
    pub tts: f64,
    pub warnings: Vec<SimWarning>,
}

impl TrafficTrajectory {
    pub fn k(&self) -> usize {
        self.out_a.ncols()
    }

    pub fn density(&self, dir: Direction) -> &Array2<f64> {
        match dir {
            Direction::A => &self.rho_a,
            Direction::B => &self.rho_b,
        }
    }

    pub fn outflow(&self, dir: Direction) -> &Array2<f64> {
        match dir {
            Direction::A => &self.out_a,
            Direction::B => &self.out_b,
        }
    }

    pub fn relative(&self, dir: Direction) -> &Array2<f64> {
        match dir {
            Direction::A => &self.rel_a,
            Direction::B => &self.rel_b,
        }
    }

    /// Inflow to section `i` at step `k` from upstream (before off-ramp split).
    pub fn inflow(&self, dir: Direction, i: usize, k: usize) -> f64 {
        let n = self.out_a.nrows();
        match dir {
            Direction::A if i == 0 => self.entry_a[k],
            Direction::A => self.out_a[[i - 1, k]],
            Direction::B if i == n - 1 => self.entry_b[k],
            Direction::B => self.out_b[[i + 1, k]],
        }
    }

    pub fn has_jam_or_queue_warnings(&self) -> bool {
        !self.warnings.is_empty()
    }
}

/// `T · Σ_{k=1..K} Σ_i L_i (ρ^a_i(k) + ρ^b_i(k))` in veh·h.
pub fn tts_of(rho_a: &Array2<f64>, rho_b: &Array2<f64>, lengths: &[f64], t: f64) -> f64 {
    let mut total = 0.0;
    for k in 1..rho_a.ncols() {
        for (i, l) in lengths.iter().enumerate() {
            total += l * (rho_a[[i, k]] + rho_b[[i, k]]);
        }
    }
    t * total
}

pub fn tts(trajectory: &TrafficTrajectory, scenario: &Scenario) -> f64 {
    tts_of(&trajectory.rho_a, &trajectory.rho_b, &scenario.highway.lengths, scenario.control.t)
}

/// Relative densities of a density field under a plan, `n × K`.
pub fn relative_densities(scenario: &Scenario, plan: &SharingPlan, rho: &Array2<f64>, dir: Direction) -> Array2<f64> {
    let n = scenario.n();
    let k_total = scenario.control.k;
    let rho_cr = scenario.fd.rho_cr;
    Array2::from_shape_fn((n, k_total), |(i, k)| {
        let kc = scenario.control.control_step(k);
        rho[[i, k]] / (plan.applied(dir, i, kc) * rho_cr)
    })
}

/// Rolls the model forward over the whole horizon.
pub fn simulate(scenario: &Scenario, plan: &SharingPlan) -> Result<TrafficTrajectory> {
    plan.check_dims(scenario)?;
    let n = scenario.n();
    let kk = scenario.control.k;
    let d = &scenario.demands;
    let mut rho_a = Array2::zeros((n, kk + 1));
    let mut rho_b = Array2::zeros((n, kk + 1));
    let mut out_a = Array2::zeros((n, kk));
    let mut out_b = Array2::zeros((n, kk));
    let mut entry_a = vec![0.0; kk];
    let mut entry_b = vec![0.0; kk];
    let mut queue_a = vec![0.0; kk + 1];
    let mut queue_b = vec![0.0; kk + 1];
    let mut warnings = Vec::new();
    for i in 0..n {
        rho_a[[i, 0]] = scenario.rho0_a[i];
        rho_b[[i, 0]] = scenario.rho0_b[i];
    }
    let mut cur_a = scenario.rho0_a.clone();
    let mut cur_b = scenario.rho0_b.clone();
    let mut ramp_a = vec![0.0; n];
    let mut ramp_b = vec![0.0; n];
    for k in 0..kk {
        let kc = scenario.control.control_step(k);
        let ea: Vec<f64> = plan.eps_a.column(kc).to_vec();
        let eb: Vec<f64> = plan.eps_b.column(kc).to_vec();
        for i in 0..n {
            ramp_a[i] = d.ramp_a[i][k];
            ramp_b[i] = d.ramp_b[i][k];
        }
        let ext = Externals {
            entry_a: d.entry_a[k],
            entry_b: d.entry_b[k],
            ramp_a: &ramp_a,
            ramp_b: &ramp_b,
        };
        let s = step(scenario, &cur_a, &cur_b, &ea, &eb, &ext, queue_a[k], queue_b[k]);
        for i in 0..n {
            rho_a[[i, k + 1]] = s.rho_a[i];
            rho_b[[i, k + 1]] = s.rho_b[i];
            out_a[[i, k]] = s.out_a[i];
            out_b[[i, k]] = s.out_b[i];
        }
        entry_a[k] = s.entry_a;
        entry_b[k] = s.entry_b;
        queue_a[k + 1] = s.queue_a;
        queue_b[k + 1] = s.queue_b;
        warnings.extend(s.warnings.into_iter().map(|kind| SimWarning { k, kind }));
        cur_a = s.rho_a;
        cur_b = s.rho_b;
    }
    let rel_a = relative_densities(scenario, plan, &rho_a, Direction::A);
    let rel_b = relative_densities(scenario, plan, &rho_b, Direction::B);
    let tts = tts_of(&rho_a, &rho_b, &scenario.highway.lengths, scenario.control.t);
    Ok(TrafficTrajectory {
        rho_a,
        rho_b,
        out_a,
        out_b,
        entry_a,
        entry_b,
        rel_a,
        rel_b,
        queue_a,
        queue_b,
        tts,
        warnings,
    })
}

/// Simulation with the boundary fixed at 0.5.
pub fn simulate_no_control(scenario: &Scenario) -> TrafficTrajectory {
    simulate(scenario, &SharingPlan::no_control(scenario)).expect("no-control plan matches its scenario")
}

/// Vehicle balance of one direction over the horizon.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Balance {
    pub initial: f64,
    pub entered: f64,
    pub exited: f64,
    pub final_: f64,
}

impl Balance {
    /// `|initial + entered − exited − final| / max(initial + entered, 1)`.
    pub fn relative_error(&self) -> f64 {
        (self.initial + self.entered - self.exited - self.final_).abs() / (self.initial + self.entered).max(1.0)
    }
}

/// Counts vehicles in, out and stored per direction. Entering flows are the
/// admitted mainstream entry plus on-ramps; exits are the mainstream exit
/// plus off-ramp flows.
pub fn vehicle_balance(scenario: &Scenario, traj: &TrafficTrajectory, dir: Direction) -> Balance {
    let n = scenario.n();
    let h = &scenario.highway;
    let t = scenario.control.t;
    let kk = traj.k();
    let (rho, beta, ramp, entry, last) = match dir {
        Direction::A => (&traj.rho_a, &h.exit_rate_a, &scenario.demands.ramp_a, &traj.entry_a, n - 1),
        Direction::B => (&traj.rho_b, &h.exit_rate_b, &scenario.demands.ramp_b, &traj.entry_b, 0),
    };
    let stored = |k: usize| (0..n).map(|i| h.lengths[i] * rho[[i, k]]).sum::<f64>();
    let mut entered = 0.0;
    let mut exited = 0.0;
    for k in 0..kk {
        entered += t * entry[k];
        for i in 0..n {
            entered += t * ramp[i][k];
            exited += t * beta[i] * traj.inflow(dir, i, k);
        }
        exited += t * traj.outflow(dir)[[last, k]];
    }
    Balance {
        initial: stored(0),
        entered,
        exited,
        final_: stored(kk),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::builtin;

    fn fd() -> FdParams {
        FdParams::new(100.0, 12.0, 12000.0).unwrap()
    }

    #[test]
    fn applied_sharing_examples() {
        assert_eq!(applied_sharing(&[0.6], &[0.5]), (vec![0.5], vec![0.4]));
        assert_eq!(applied_sharing(&[0.5], &[0.5]), (vec![0.5], vec![0.5]));
        let (a, b) = applied_sharing(&[0.4], &[0.7]);
        assert_eq!(a, vec![0.4]);
        assert!((b[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn demand_examples() {
        let fd = fd();
        assert_eq!(demand_fn(60.0, 0.5, &fd, 0.0), 6000.0);
        assert!((demand_fn(360.0, 0.5, &fd, 0.4) - 4560.0).abs() < 1e-9);
        for ld in [0.0, 0.4, 1.0] {
            assert!((demand_fn(0.3 * fd.rho_cr, 0.3, &fd, ld) - 0.3 * fd.q_cap).abs() < 1e-9);
        }
    }

    #[test]
    fn supply_examples() {
        let fd = fd();
        assert_eq!(supply_fn(0.0, 0.5, &fd), 6000.0);
        assert_eq!(supply_fn(0.5 * fd.rho_max, 0.5, &fd), 0.0);
        assert_eq!(supply_fn(0.5 * fd.rho_max + 10.0, 0.5, &fd), 0.0);
    }

    #[test]
    fn no_control_builtin_has_no_warnings_and_positive_tts() {
        let s = builtin("uncongested").unwrap();
        let tr = simulate_no_control(&s);
        assert!(tr.warnings.is_empty(), "{:?}", tr.warnings.first());
        assert!(tr.tts > 100.0);
        for dir in [Direction::A, Direction::B] {
            assert!(vehicle_balance(&s, &tr, dir).relative_error() < 1e-12);
        }
    }
}
