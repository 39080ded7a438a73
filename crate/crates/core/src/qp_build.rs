//! Assembly of the capacity-sharing QP.
//!
//! Decision vector, family by family (time-major inside a family):
//!
//! | family | indices            | meaning                                  |
//! |--------|--------------------|------------------------------------------|
//! | RhoA   | i, k = 1..K        | density of direction a                   |
//! | RhoB   | i, k = 1..K        | density of direction b                   |
//! | QA     | i, k = 0..K−1      | outflow of section i, direction a        |
//! | QB     | i, k = 0..K−1      | outflow of section i, direction b        |
//! | Eps    | i, k_c = 0..K_c−1  | decided sharing factor                   |
//! | EpsA   | i, k_c             | applied factor of direction a            |
//! | EpsB   | i, k_c             | applied factor of direction b            |
//!
//! Entry flows and initial densities are data, not variables.

use ibc_qp::{CscMatrix, Problem};
use ndarray::Array2;

use crate::ctm::{relative_densities, tts_of, SharingPlan, TrafficTrajectory};
use crate::error::{Error, Result};
use crate::projection::{project_demands, ProjectedDemands};
use crate::scenario::{Direction, Scenario};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarFamily {
    RhoA,
    RhoB,
    QA,
    QB,
    Eps,
    EpsA,
    EpsB,
}

impl VarFamily {
    pub const ALL: [VarFamily; 7] = [
        VarFamily::RhoA,
        VarFamily::RhoB,
        VarFamily::QA,
        VarFamily::QB,
        VarFamily::Eps,
        VarFamily::EpsA,
        VarFamily::EpsB,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            VarFamily::RhoA => "rho_a",
            VarFamily::RhoB => "rho_b",
            VarFamily::QA => "q_a",
            VarFamily::QB => "q_b",
            VarFamily::Eps => "eps",
            VarFamily::EpsA => "eps_a",
            VarFamily::EpsB => "eps_b",
        }
    }

    /// Time index of the first variable of the family (densities start at 1).
    fn first_t(&self) -> usize {
        match self {
            VarFamily::RhoA | VarFamily::RhoB => 1,
            _ => 0,
        }
    }
}

/// Bijection between `(family, section, time)` and positions in the decision
/// vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarIndexMap {
    pub n: usize,
    pub k: usize,
    pub k_c: usize,
    offsets: [usize; 7],
    pub total_vars: usize,
}

impl VarIndexMap {
    pub fn new(n: usize, k: usize, k_c: usize) -> Self {
        let mut offsets = [0; 7];
        let mut next = 0;
        for (slot, fam) in offsets.iter_mut().zip(VarFamily::ALL) {
            *slot = next;
            next += n * Self::steps(k, k_c, fam);
        }
        Self {
            n,
            k,
            k_c,
            offsets,
            total_vars: next,
        }
    }

    pub fn for_scenario(scenario: &Scenario) -> Self {
        Self::new(scenario.n(), scenario.control.k, scenario.control.k_c)
    }

    fn steps(k: usize, k_c: usize, fam: VarFamily) -> usize {
        match fam {
            VarFamily::Eps | VarFamily::EpsA | VarFamily::EpsB => k_c,
            _ => k,
        }
    }

    pub fn family_len(&self, fam: VarFamily) -> usize {
        self.n * Self::steps(self.k, self.k_c, fam)
    }

    pub fn offset(&self, fam: VarFamily) -> usize {
        self.offsets[fam as usize]
    }

    /// Index of variable `(fam, i, t)`; `t` is the model step `k` for
    /// densities (1..=K) and flows (0..K) and the control step for sharing
    /// factors.
    pub fn index(&self, fam: VarFamily, i: usize, t: usize) -> usize {
        let first = fam.first_t();
        debug_assert!(i < self.n);
        debug_assert!(t >= first && t - first < Self::steps(self.k, self.k_c, fam));
        self.offsets[fam as usize] + (t - first) * self.n + i
    }

    pub fn decode(&self, idx: usize) -> (VarFamily, usize, usize) {
        assert!(idx < self.total_vars, "index {idx} out of range");
        let f = VarFamily::ALL
            .iter()
            .rposition(|&fam| self.offset(fam) <= idx)
            .expect("offset of the first family is zero");
        let fam = VarFamily::ALL[f];
        let rel = idx - self.offset(fam);
        (fam, rel % self.n, rel / self.n + fam.first_t())
    }

    pub fn rho(&self, dir: Direction, i: usize, k: usize) -> usize {
        match dir {
            Direction::A => self.index(VarFamily::RhoA, i, k),
            Direction::B => self.index(VarFamily::RhoB, i, k),
        }
    }

    pub fn q(&self, dir: Direction, i: usize, k: usize) -> usize {
        match dir {
            Direction::A => self.index(VarFamily::QA, i, k),
            Direction::B => self.index(VarFamily::QB, i, k),
        }
    }

    pub fn eps(&self, i: usize, kc: usize) -> usize {
        self.index(VarFamily::Eps, i, kc)
    }

    pub fn eps_dir(&self, dir: Direction, i: usize, kc: usize) -> usize {
        match dir {
            Direction::A => self.index(VarFamily::EpsA, i, kc),
            Direction::B => self.index(VarFamily::EpsB, i, kc),
        }
    }
}

/// Constraint families in assembly order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RowFamily {
    ConservationA,
    ConservationB,
    FreeFlowA,
    DemandA,
    SupplyJamA,
    SupplyCapA,
    FreeFlowB,
    DemandB,
    SupplyJamB,
    SupplyCapB,
    AppliedNowA,
    AppliedPrevA,
    AppliedNowB,
    AppliedPrevB,
    JamDensityA,
    JamDensityB,
}

impl RowFamily {
    pub fn name(&self) -> &'static str {
        match self {
            RowFamily::ConservationA => "conservation_a",
            RowFamily::ConservationB => "conservation_b",
            RowFamily::FreeFlowA => "free_flow_a",
            RowFamily::DemandA => "demand_a",
            RowFamily::SupplyJamA => "supply_jam_a",
            RowFamily::SupplyCapA => "supply_cap_a",
            RowFamily::FreeFlowB => "free_flow_b",
            RowFamily::DemandB => "demand_b",
            RowFamily::SupplyJamB => "supply_jam_b",
            RowFamily::SupplyCapB => "supply_cap_b",
            RowFamily::AppliedNowA => "applied_now_a",
            RowFamily::AppliedPrevA => "applied_prev_a",
            RowFamily::AppliedNowB => "applied_now_b",
            RowFamily::AppliedPrevB => "applied_prev_b",
            RowFamily::JamDensityA => "jam_density_a",
            RowFamily::JamDensityB => "jam_density_b",
        }
    }
}

/// Identifies a constraint row: family, section and time index (model step,
/// or control step for the applied-factor families).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RowTag {
    pub family: RowFamily,
    pub i: usize,
    pub t: usize,
}

#[derive(Default)]
struct RowBuilder {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    rhs: Vec<f64>,
    tags: Vec<RowTag>,
}

impl RowBuilder {
    fn push(&mut self, tag: RowTag, entries: &[(usize, f64)], rhs: f64) {
        let r = self.rhs.len();
        for &(c, v) in entries {
            self.rows.push(r);
            self.cols.push(c);
            self.vals.push(v);
        }
        self.rhs.push(rhs);
        self.tags.push(tag);
    }

    fn finish(self, ncols: usize) -> (CscMatrix, Vec<f64>, Vec<RowTag>) {
        let m = CscMatrix::from_triplets(self.rhs.len(), ncols, &self.rows, &self.cols, &self.vals);
        (m, self.rhs, self.tags)
    }
}

/// Sparse constraint system.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraints {
    pub a_e: CscMatrix,
    pub b_e: Vec<f64>,
    pub a_i: CscMatrix,
    pub b_i: Vec<f64>,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
    pub eq_tags: Vec<RowTag>,
    pub ineq_tags: Vec<RowTag>,
}

/// The assembled QP: `min ½xᵀHx + cᵀx (+ objective_constant)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QpProblem {
    pub h: CscMatrix,
    pub c: Vec<f64>,
    pub a_i: CscMatrix,
    pub b_i: Vec<f64>,
    pub a_e: CscMatrix,
    pub b_e: Vec<f64>,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
    pub index_map: VarIndexMap,
    /// Constant of the reserve-balancing term, not carried by `H` or `c`.
    pub objective_constant: f64,
    pub eq_tags: Vec<RowTag>,
    pub ineq_tags: Vec<RowTag>,
}

impl QpProblem {
    /// Solver view of the problem.
    pub fn to_solver_problem(&self) -> Problem {
        Problem {
            p: self.h.clone(),
            q: self.c.clone(),
            a_eq: self.a_e.clone(),
            b_eq: self.b_e.clone(),
            a_ineq: self.a_i.clone(),
            b_ineq: self.b_i.clone(),
            lb: self.lb.clone(),
            ub: self.ub.clone(),
        }
    }

    /// Full objective value including the constant.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let hx = self.h.mul(x);
        0.5 * x.iter().zip(&hx).map(|(a, b)| a * b).sum::<f64>()
            + x.iter().zip(&self.c).map(|(a, b)| a * b).sum::<f64>()
            + self.objective_constant
    }

    /// Largest violation of any constraint or bound, in natural units.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.to_solver_problem().max_violation(x)
    }

    /// Violation per constraint row, tagged, for diagnostics.
    pub fn violations(&self, x: &[f64], tol: f64) -> Vec<(RowTag, f64)> {
        let mut out = Vec::new();
        for (r, (v, b)) in self.a_e.mul(x).iter().zip(&self.b_e).enumerate() {
            if (v - b).abs() > tol {
                out.push((self.eq_tags[r], (v - b).abs()));
            }
        }
        for (r, (v, b)) in self.a_i.mul(x).iter().zip(&self.b_i).enumerate() {
            if v - b > tol {
                out.push((self.ineq_tags[r], v - b));
            }
        }
        out
    }
}

/// Objective `(H, c, constant)`.
pub fn build_objective(scenario: &Scenario, projected: &ProjectedDemands) -> (CscMatrix, Vec<f64>, f64) {
    let map = VarIndexMap::for_scenario(scenario);
    let c = &scenario.control;
    let n = scenario.n();
    let mut lin = vec![0.0; map.total_vars];
    let mut hr = Vec::new();
    let mut hc = Vec::new();
    let mut hv = Vec::new();
    let mut add = |i: usize, j: usize, v: f64| {
        hr.push(i);
        hc.push(j);
        hv.push(v);
    };
    let mut constant = 0.0;

    for k in 1..=c.k {
        for i in 0..n {
            lin[map.rho(Direction::A, i, k)] += c.t * scenario.highway.lengths[i];
            lin[map.rho(Direction::B, i, k)] += c.t * scenario.highway.lengths[i];
        }
    }
    if c.w_flow > 0.0 {
        for k in 0..c.k {
            for i in 0..n {
                lin[map.q(Direction::A, i, k)] -= c.w_flow * c.t;
                lin[map.q(Direction::B, i, k)] -= c.w_flow * c.t;
            }
        }
    }
    for kc in 0..c.k_c {
        for i in 0..n {
            lin[map.eps_dir(Direction::A, i, kc)] -= c.w1;
            lin[map.eps_dir(Direction::B, i, kc)] -= c.w1;
        }
    }
    let mut square_diff = |a: usize, b: usize, w: f64| {
        add(a, a, 2.0 * w);
        add(b, b, 2.0 * w);
        add(a, b, -2.0 * w);
        add(b, a, -2.0 * w);
    };
    if c.w2 > 0.0 {
        for kc in 1..c.k_c {
            for i in 0..n {
                square_diff(map.eps(i, kc), map.eps(i, kc - 1), c.w2);
            }
        }
    }
    if c.w3 > 0.0 {
        for kc in 0..c.k_c {
            for i in 1..n {
                square_diff(map.eps(i, kc), map.eps(i - 1, kc), c.w3);
            }
        }
    }
    if c.w4 > 0.0 {
        for kc in 0..c.k_c {
            for i in 0..n {
                let da = projected.d_a_floor[[i, kc]];
                let db = projected.d_b_floor[[i, kc]];
                let e = map.eps(i, kc);
                add(e, e, 2.0 * c.w4 * (1.0 / da + 1.0 / db));
                lin[e] -= 2.0 * c.w4 / db;
                constant += c.w4 / db;
            }
        }
    }
    let h = CscMatrix::from_triplets(map.total_vars, map.total_vars, &hr, &hc, &hv);
    (h, lin, constant)
}

/// Equalities, inequalities and bounds.
pub fn build_constraints(scenario: &Scenario) -> Constraints {
    let map = VarIndexMap::for_scenario(scenario);
    let n = scenario.n();
    let c = &scenario.control;
    let fd = &scenario.fd;
    let h = &scenario.highway;
    let dem = &scenario.demands;
    let t = c.t;
    let (ld, lr) = (c.lambda_d, c.lambda_r);
    let span = fd.rho_cr - fd.rho_max;
    let kappa_eps = fd.q_cap * (1.0 - ld * fd.rho_cr / span);
    let kappa_rho = ld * fd.q_cap / span;
    let tag = |family, i, t| RowTag { family, i, t };

    let rho0 = |dir: Direction, i: usize| match dir {
        Direction::A => scenario.rho0_a[i],
        Direction::B => scenario.rho0_b[i],
    };
    let beta = |dir: Direction, i: usize| match dir {
        Direction::A => h.exit_rate_a[i],
        Direction::B => h.exit_rate_b[i],
    };
    let ramp = |dir: Direction, i: usize, k: usize| match dir {
        Direction::A => dem.ramp_a[i][k],
        Direction::B => dem.ramp_b[i][k],
    };
    // Upstream and downstream neighbours along the direction of travel.
    let upstream = |dir: Direction, i: usize| match dir {
        Direction::A => i.checked_sub(1),
        Direction::B => (i + 1 < n).then_some(i + 1),
    };
    let downstream = |dir: Direction, i: usize| match dir {
        Direction::A => (i + 1 < n).then_some(i + 1),
        Direction::B => i.checked_sub(1),
    };
    let entry = |dir: Direction, k: usize| match dir {
        Direction::A => dem.entry_a[k],
        Direction::B => dem.entry_b[k],
    };

    // A density at step k is either a variable (k ≥ 1) or known data.
    let density = |dir: Direction, i: usize, k: usize| -> (Option<usize>, f64) {
        if k == 0 {
            (None, rho0(dir, i))
        } else {
            (Some(map.rho(dir, i, k)), 0.0)
        }
    };

    let mut eq = RowBuilder::default();
    for (dir, fam) in [(Direction::A, RowFamily::ConservationA), (Direction::B, RowFamily::ConservationB)] {
        for k in 0..c.k {
            for i in 0..n {
                let g = t / h.lengths[i];
                let mut e = vec![(map.rho(dir, i, k + 1), 1.0), (map.q(dir, i, k), g)];
                let mut rhs = g * ramp(dir, i, k);
                let (var, val) = density(dir, i, k);
                match var {
                    Some(v) => e.push((v, -1.0)),
                    None => rhs += val,
                }
                match upstream(dir, i) {
                    Some(u) => e.push((map.q(dir, u, k), -g * (1.0 - beta(dir, i)))),
                    None => rhs += g * (1.0 - beta(dir, i)) * entry(dir, k),
                }
                eq.push(tag(fam, i, k), &e, rhs);
            }
        }
    }

    let mut ineq = RowBuilder::default();
    for dir in [Direction::A, Direction::B] {
        let fams = match dir {
            Direction::A => [RowFamily::FreeFlowA, RowFamily::DemandA, RowFamily::SupplyJamA, RowFamily::SupplyCapA],
            Direction::B => [RowFamily::FreeFlowB, RowFamily::DemandB, RowFamily::SupplyJamB, RowFamily::SupplyCapB],
        };
        // q ≤ v_f ρ
        for k in 0..c.k {
            for i in 0..n {
                let (var, val) = density(dir, i, k);
                let mut e = vec![(map.q(dir, i, k), 1.0)];
                let mut rhs = 0.0;
                match var {
                    Some(v) => e.push((v, -fd.v_f)),
                    None => rhs += fd.v_f * val,
                }
                ineq.push(tag(fams[0], i, k), &e, rhs);
            }
        }
        // q ≤ ε q_cap + λ_d q_cap (ρ − ε ρ_cr)/(ρ_cr − ρ_max)
        for k in 0..c.k {
            let kc = c.control_step(k);
            for i in 0..n {
                let (var, val) = density(dir, i, k);
                let mut e = vec![(map.q(dir, i, k), 1.0), (map.eps_dir(dir, i, kc), -kappa_eps)];
                let mut rhs = 0.0;
                match var {
                    Some(v) if kappa_rho != 0.0 => e.push((v, -kappa_rho)),
                    Some(_) => {}
                    None => rhs += kappa_rho * val,
                }
                ineq.push(tag(fams[1], i, k), &e, rhs);
            }
        }
        // q_i ≤ w_s/(1−β_j) (ε_j ρ_max − ρ_j) − λ_r r_j, j downstream of i
        for k in 0..c.k {
            let kc = c.control_step(k);
            for i in 0..n {
                let Some(j) = downstream(dir, i) else { continue };
                let s = 1.0 / (1.0 - beta(dir, j));
                let (var, val) = density(dir, j, k);
                let mut e = vec![(map.q(dir, i, k), 1.0), (map.eps_dir(dir, j, kc), -fd.w_s * fd.rho_max * s)];
                let mut rhs = -lr * ramp(dir, j, k);
                match var {
                    Some(v) => e.push((v, fd.w_s * s)),
                    None => rhs -= fd.w_s * s * val,
                }
                ineq.push(tag(fams[2], i, k), &e, rhs);
            }
        }
        // q_i ≤ ε_j q_cap/(1−β_j) − λ_r r_j
        for k in 0..c.k {
            let kc = c.control_step(k);
            for i in 0..n {
                let Some(j) = downstream(dir, i) else { continue };
                let s = 1.0 / (1.0 - beta(dir, j));
                let e = [(map.q(dir, i, k), 1.0), (map.eps_dir(dir, j, kc), -fd.q_cap * s)];
                ineq.push(tag(fams[3], i, k), &e, -lr * ramp(dir, j, k));
            }
        }
    }
    // Applied factors against the decided ones.
    for kc in 0..c.k_c {
        for i in 0..n {
            let e = [(map.eps_dir(Direction::A, i, kc), 1.0), (map.eps(i, kc), -1.0)];
            ineq.push(tag(RowFamily::AppliedNowA, i, kc), &e, 0.0);
        }
    }
    for kc in 0..c.k_c {
        for i in 0..n {
            let ea = map.eps_dir(Direction::A, i, kc);
            if kc == 0 {
                ineq.push(tag(RowFamily::AppliedPrevA, i, kc), &[(ea, 1.0)], c.eps_init[i]);
            } else {
                ineq.push(tag(RowFamily::AppliedPrevA, i, kc), &[(ea, 1.0), (map.eps(i, kc - 1), -1.0)], 0.0);
            }
        }
    }
    for kc in 0..c.k_c {
        for i in 0..n {
            let e = [(map.eps_dir(Direction::B, i, kc), 1.0), (map.eps(i, kc), 1.0)];
            ineq.push(tag(RowFamily::AppliedNowB, i, kc), &e, 1.0);
        }
    }
    for kc in 0..c.k_c {
        for i in 0..n {
            let eb = map.eps_dir(Direction::B, i, kc);
            if kc == 0 {
                ineq.push(tag(RowFamily::AppliedPrevB, i, kc), &[(eb, 1.0)], 1.0 - c.eps_init[i]);
            } else {
                ineq.push(tag(RowFamily::AppliedPrevB, i, kc), &[(eb, 1.0), (map.eps(i, kc - 1), 1.0)], 1.0);
            }
        }
    }
    for (dir, fam) in [(Direction::A, RowFamily::JamDensityA), (Direction::B, RowFamily::JamDensityB)] {
        for k in 0..c.k {
            let kc = c.control_step(k);
            for i in 0..n {
                let e = [(map.rho(dir, i, k + 1), 1.0), (map.eps_dir(dir, i, kc), -fd.rho_max)];
                ineq.push(tag(fam, i, k), &e, 0.0);
            }
        }
    }

    let mut lb = vec![0.0; map.total_vars];
    let mut ub = vec![0.0; map.total_vars];
    for idx in 0..map.total_vars {
        let (fam, i, _) = map.decode(idx);
        let (lo, hi) = match fam {
            VarFamily::RhoA | VarFamily::RhoB => (0.0, fd.rho_max),
            VarFamily::QA | VarFamily::QB => (0.0, fd.q_cap),
            VarFamily::Eps => (c.eps_min[i], c.eps_max[i]),
            VarFamily::EpsA | VarFamily::EpsB => (0.0, 1.0),
        };
        lb[idx] = lo;
        ub[idx] = hi;
    }

    let (a_e, b_e, eq_tags) = eq.finish(map.total_vars);
    let (a_i, b_i, ineq_tags) = ineq.finish(map.total_vars);
    Constraints {
        a_e,
        b_e,
        a_i,
        b_i,
        lb,
        ub,
        eq_tags,
        ineq_tags,
    }
}

/// Assembles the whole QP, projecting demands on the way.
pub fn build_qp(scenario: &Scenario) -> QpProblem {
    let projected = project_demands(scenario);
    build_qp_with(scenario, &projected)
}

pub fn build_qp_with(scenario: &Scenario, projected: &ProjectedDemands) -> QpProblem {
    let (h, c, objective_constant) = build_objective(scenario, projected);
    let cons = build_constraints(scenario);
    QpProblem {
        h,
        c,
        a_i: cons.a_i,
        b_i: cons.b_i,
        a_e: cons.a_e,
        b_e: cons.b_e,
        lb: cons.lb,
        ub: cons.ub,
        index_map: VarIndexMap::for_scenario(scenario),
        objective_constant,
        eq_tags: cons.eq_tags,
        ineq_tags: cons.ineq_tags,
    }
}

/// Decision vector read back into model quantities.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtractedSolution {
    /// Plan re-derived from ε with the min-rule (ε clipped to its bounds).
    pub plan: SharingPlan,
    /// Densities and flows as given by the QP; entry flows equal demand.
    pub trajectory: TrafficTrajectory,
    /// TTS term of the objective evaluated on `x`.
    pub qp_tts: f64,
    /// Applied factors exactly as they appear in `x`.
    pub eps_a_x: Array2<f64>,
    pub eps_b_x: Array2<f64>,
}

pub fn extract_solution(x: &[f64], map: &VarIndexMap, scenario: &Scenario) -> Result<ExtractedSolution> {
    if x.len() != map.total_vars || *map != VarIndexMap::for_scenario(scenario) {
        return Err(Error::Dimension(format!(
            "decision vector has {} entries, scenario layout needs {}",
            x.len(),
            VarIndexMap::for_scenario(scenario).total_vars
        )));
    }
    let n = map.n;
    let c = &scenario.control;
    let eps = Array2::from_shape_fn((n, map.k_c), |(i, kc)| x[map.eps(i, kc)].clamp(c.eps_min[i], c.eps_max[i]));
    let plan = SharingPlan::from_eps(eps, &c.eps_init);
    let eps_a_x = Array2::from_shape_fn((n, map.k_c), |(i, kc)| x[map.eps_dir(Direction::A, i, kc)]);
    let eps_b_x = Array2::from_shape_fn((n, map.k_c), |(i, kc)| x[map.eps_dir(Direction::B, i, kc)]);
    let rho = |dir: Direction| {
        Array2::from_shape_fn((n, map.k + 1), |(i, k)| {
            if k == 0 {
                match dir {
                    Direction::A => scenario.rho0_a[i],
                    Direction::B => scenario.rho0_b[i],
                }
            } else {
                x[map.rho(dir, i, k)]
            }
        })
    };
    let rho_a = rho(Direction::A);
    let rho_b = rho(Direction::B);
    let out_a = Array2::from_shape_fn((n, map.k), |(i, k)| x[map.q(Direction::A, i, k)]);
    let out_b = Array2::from_shape_fn((n, map.k), |(i, k)| x[map.q(Direction::B, i, k)]);
    let rel_a = relative_densities(scenario, &plan, &rho_a, Direction::A);
    let rel_b = relative_densities(scenario, &plan, &rho_b, Direction::B);
    let qp_tts = tts_of(&rho_a, &rho_b, &scenario.highway.lengths, c.t);
    let trajectory = TrafficTrajectory {
        rho_a,
        rho_b,
        out_a,
        out_b,
        entry_a: scenario.demands.entry_a.clone(),
        entry_b: scenario.demands.entry_b.clone(),
        rel_a,
        rel_b,
        queue_a: vec![0.0; map.k + 1],
        queue_b: vec![0.0; map.k + 1],
        tts: qp_tts,
        warnings: Vec::new(),
    };
    Ok(ExtractedSolution {
        plan,
        trajectory,
        qp_tts,
        eps_a_x,
        eps_b_x,
    })
}

/// Decision vector of a simulated trajectory under a plan.
pub fn point_from_trajectory(scenario: &Scenario, plan: &SharingPlan, traj: &TrafficTrajectory) -> Vec<f64> {
    let map = VarIndexMap::for_scenario(scenario);
    let mut x = vec![0.0; map.total_vars];
    for i in 0..map.n {
        for k in 0..map.k {
            x[map.rho(Direction::A, i, k + 1)] = traj.rho_a[[i, k + 1]];
            x[map.rho(Direction::B, i, k + 1)] = traj.rho_b[[i, k + 1]];
            x[map.q(Direction::A, i, k)] = traj.out_a[[i, k]];
            x[map.q(Direction::B, i, k)] = traj.out_b[[i, k]];
        }
        for kc in 0..map.k_c {
            x[map.eps(i, kc)] = plan.eps[[i, kc]];
            x[map.eps_dir(Direction::A, i, kc)] = plan.eps_a[[i, kc]];
            x[map.eps_dir(Direction::B, i, kc)] = plan.eps_b[[i, kc]];
        }
    }
    x
}

/// Objective terms evaluated directly from a plan and a trajectory.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ObjectiveBreakdown {
    pub tts: f64,
    pub flow_reward: f64,
    pub applied_reward: f64,
    pub temporal: f64,
    pub spatial: f64,
    pub reserve_balance: f64,
    pub total: f64,
}

/// Evaluates every objective term from its defining sum, independently of
/// the matrix assembly. Uses the applied factors stored in `plan`.
pub fn evaluate_objective(
    scenario: &Scenario,
    projected: &ProjectedDemands,
    plan: &SharingPlan,
    traj: &TrafficTrajectory,
) -> ObjectiveBreakdown {
    let c = &scenario.control;
    let n = scenario.n();
    let mut b = ObjectiveBreakdown {
        tts: tts_of(&traj.rho_a, &traj.rho_b, &scenario.highway.lengths, c.t),
        ..Default::default()
    };
    b.flow_reward = -c.w_flow * c.t * (traj.out_a.sum() + traj.out_b.sum());
    b.applied_reward = -c.w1 * (plan.eps_a.sum() + plan.eps_b.sum());
    for i in 0..n {
        for kc in 0..c.k_c {
            let e = plan.eps[[i, kc]];
            if kc >= 1 {
                b.temporal += c.w2 * (e - plan.eps[[i, kc - 1]]).powi(2);
            }
            if i >= 1 {
                b.spatial += c.w3 * (e - plan.eps[[i - 1, kc]]).powi(2);
            }
            b.reserve_balance +=
                c.w4 * (e * e / projected.d_a_floor[[i, kc]] + (1.0 - e).powi(2) / projected.d_b_floor[[i, kc]]);
        }
    }
    b.total = b.tts + b.flow_reward + b.applied_reward + b.temporal + b.spatial + b.reserve_balance;
    b
}
