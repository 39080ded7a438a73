//! Problem data, settings and solution types shared by both solvers.

use thiserror::Error;

use crate::csc::{dot, inf_norm, CscMatrix};

#[derive(Debug, Error)]
pub enum QpError {
    #[error("invalid problem data: {0}")]
    InvalidProblem(String),
    #[error("invalid solver settings: {0}")]
    InvalidSettings(String),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("problem has {n} variables; the dense reference solver accepts at most {cap}")]
    TooLarge { n: usize, cap: usize },
}

/// `min ½xᵀPx + qᵀx  s.t.  A_eq x = b_eq,  A_ineq x ≤ b_ineq,  lb ≤ x ≤ ub`.
///
/// `p` holds both triangles. Infinite bounds are allowed.
#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    pub p: CscMatrix,
    pub q: Vec<f64>,
    pub a_eq: CscMatrix,
    pub b_eq: Vec<f64>,
    pub a_ineq: CscMatrix,
    pub b_ineq: Vec<f64>,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
}

impl Problem {
    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.n();
        let bad = |m: &str| Err(QpError::InvalidProblem(m.to_string()));
        if self.p.nrows != n || self.p.ncols != n {
            return bad("P must be n × n");
        }
        if self.a_eq.ncols != n || self.a_eq.nrows != self.b_eq.len() {
            return bad("A_eq / b_eq dimensions");
        }
        if self.a_ineq.ncols != n || self.a_ineq.nrows != self.b_ineq.len() {
            return bad("A_ineq / b_ineq dimensions");
        }
        if self.lb.len() != n || self.ub.len() != n {
            return bad("bound vectors must have length n");
        }
        if !self.p.is_symmetric(1e-12) {
            return bad("P is not symmetric");
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.p.values)
            || !finite(&self.q)
            || !finite(&self.a_eq.values)
            || !finite(&self.b_eq)
            || !finite(&self.a_ineq.values)
        {
            return bad("non-finite entries in P, q, A_eq, b_eq or A_ineq");
        }
        if self.b_ineq.iter().any(|v| v.is_nan()) || self.lb.iter().chain(&self.ub).any(|v| v.is_nan()) {
            return bad("NaN in right-hand sides or bounds");
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        0.5 * dot(x, &self.p.mul(x)) + dot(&self.q, x)
    }

    /// Largest constraint violation of `x`, in the units of each row.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let eq = self
            .a_eq
            .mul(x)
            .iter()
            .zip(&self.b_eq)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let ineq = self
            .a_ineq
            .mul(x)
            .iter()
            .zip(&self.b_ineq)
            .fold(0.0f64, |m, (a, b)| m.max(a - b));
        let bounds = x
            .iter()
            .zip(self.lb.iter().zip(&self.ub))
            .fold(0.0f64, |m, (v, (l, u))| m.max(l - v).max(v - u));
        eq.max(ineq).max(bounds)
    }

    /// Stacked constraint matrix `[A_eq; A_ineq; I]` with its bounds.
    pub(crate) fn stacked(&self) -> (CscMatrix, Vec<f64>, Vec<f64>) {
        let n = self.n();
        let a = CscMatrix::vstack(&[&self.a_eq, &self.a_ineq, &CscMatrix::identity(n)]);
        let mut l = self.b_eq.clone();
        let mut u = self.b_eq.clone();
        l.extend(std::iter::repeat_n(f64::NEG_INFINITY, self.b_ineq.len()));
        u.extend(&self.b_ineq);
        l.extend(&self.lb);
        u.extend(&self.ub);
        (a, l, u)
    }

    /// Unscaled primal and dual residuals of a primal-dual pair, with `y`
    /// ordered `[eq; ineq; bounds]` and positive entries on upper bounds.
    pub fn residuals(&self, x: &[f64], y: &[f64]) -> Residuals {
        let (a, l, u) = self.stacked();
        let ax = a.mul(x);
        let z: Vec<f64> = ax.iter().zip(l.iter().zip(&u)).map(|(v, (lo, hi))| v.clamp(*lo, *hi)).collect();
        let prim: Vec<f64> = ax.iter().zip(&z).map(|(a, b)| a - b).collect();
        let px = self.p.mul(x);
        let aty = a.tmul(y);
        let dual: Vec<f64> = px.iter().zip(&aty).zip(&self.q).map(|((a, b), c)| a + b + c).collect();
        Residuals {
            primal: inf_norm(&prim),
            dual: inf_norm(&dual),
            primal_scale: inf_norm(&ax).max(inf_norm(&z)),
            dual_scale: inf_norm(&px).max(inf_norm(&aty)).max(inf_norm(&self.q)),
        }
    }
}

/// Residual norms (∞-norm) and the magnitudes used for relative tolerances.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub primal_scale: f64,
    pub dual_scale: f64,
}

impl Residuals {
    /// `r_prim ≤ eps_abs + eps_rel·max(‖Ax‖, ‖z‖)` and
    /// `r_dual ≤ eps_abs + eps_rel·max(‖Px‖, ‖Aᵀy‖, ‖q‖)`.
    pub fn converged(&self, eps_abs: f64, eps_rel: f64) -> bool {
        self.primal <= eps_abs + eps_rel * self.primal_scale && self.dual <= eps_abs + eps_rel * self.dual_scale
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Optimal,
    MaxIter,
    PrimalInfeasible,
    DualInfeasible,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::MaxIter => "max_iter",
            Status::PrimalInfeasible => "primal_infeasible",
            Status::DualInfeasible => "dual_infeasible",
        }
    }
}

impl std::str::FromStr for Status {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Status::Optimal, Status::MaxIter, Status::PrimalInfeasible, Status::DualInfeasible]
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown solver status `{s}`"))
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Solution algorithm.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Method {
    /// Primal-dual interior point; falls back to ADMM for infeasibility
    /// certificates when it does not converge.
    #[default]
    InteriorPoint,
    /// Operator splitting with active-set polish.
    Admm,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::InteriorPoint => "ipm",
            Method::Admm => "admm",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = QpError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ipm" => Ok(Method::InteriorPoint),
            "admm" => Ok(Method::Admm),
            other => Err(QpError::InvalidSettings(format!("unknown method `{other}` (expected ipm or admm)"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub method: Method,
    /// Absolute residual tolerance (unscaled problem).
    pub eps_abs: f64,
    /// Relative residual tolerance (unscaled problem).
    pub eps_rel: f64,
    pub eps_prim_inf: f64,
    pub eps_dual_inf: f64,
    /// ADMM iteration cap.
    pub max_iter: usize,
    /// Interior-point iteration cap.
    pub ipm_max_iter: usize,
    /// Initial ADMM penalty.
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation parameter in (0, 2).
    pub alpha: f64,
    pub adaptive_rho: bool,
    /// Iterations between penalty updates.
    pub adaptive_rho_interval: usize,
    /// Iterations between residual checks.
    pub check_interval: usize,
    pub scaling_iters: usize,
    pub polish: bool,
    /// Iterations between polish attempts once residuals are small.
    pub polish_interval: usize,
    /// Polish is tried once residuals fall below this multiple of the
    /// convergence threshold.
    pub polish_trigger: f64,
    pub polish_delta: f64,
    pub polish_refine_iters: usize,
    pub polish_max_passes: usize,
    /// Print progress to stderr.
    pub verbose: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            method: Method::InteriorPoint,
            eps_abs: 1e-8,
            eps_rel: 1e-8,
            eps_prim_inf: 1e-6,
            eps_dual_inf: 1e-6,
            max_iter: 20_000,
            ipm_max_iter: 200,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            adaptive_rho: true,
            adaptive_rho_interval: 50,
            check_interval: 10,
            scaling_iters: 10,
            polish: true,
            polish_interval: 100,
            polish_trigger: 1e3,
            polish_delta: 1e-7,
            polish_refine_iters: 10,
            polish_max_passes: 30,
            verbose: false,
        }
    }
}

impl Settings {
    pub fn validate(&self) -> Result<(), QpError> {
        let bad = |m: &str| Err(QpError::InvalidSettings(m.to_string()));
        if !(self.eps_abs > 0.0 && self.eps_rel >= 0.0) {
            return bad("eps_abs must be > 0 and eps_rel ≥ 0");
        }
        if !(self.eps_prim_inf > 0.0 && self.eps_dual_inf > 0.0) {
            return bad("infeasibility tolerances must be > 0");
        }
        if self.max_iter == 0 || self.ipm_max_iter == 0 {
            return bad("iteration caps must be > 0");
        }
        if !(self.rho > 0.0 && self.sigma > 0.0) {
            return bad("rho and sigma must be > 0");
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return bad("alpha must lie in (0, 2)");
        }
        if self.check_interval == 0 || self.adaptive_rho_interval == 0 || self.polish_interval == 0 {
            return bad("intervals must be > 0");
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.polish_delta > 0.0) {
            return bad("polish_delta must be > 0");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    /// Duals ordered `[eq; ineq; bounds]`; positive on active upper bounds,
    /// negative on active lower bounds.
    pub y: Vec<f64>,
    /// `½xᵀPx + qᵀx` on the unscaled problem.
    pub objective: f64,
    pub status: Status,
    pub primal_res: f64,
    pub dual_res: f64,
    pub iterations: usize,
    pub polished: bool,
    pub solve_time: f64,
}

impl Solution {
    pub fn y_eq<'a>(&'a self, p: &Problem) -> &'a [f64] {
        &self.y[..p.b_eq.len()]
    }

    pub fn y_ineq<'a>(&'a self, p: &Problem) -> &'a [f64] {
        let m = p.b_eq.len();
        &self.y[m..m + p.b_ineq.len()]
    }

    pub fn y_bounds<'a>(&'a self, p: &Problem) -> &'a [f64] {
        &self.y[p.b_eq.len() + p.b_ineq.len()..]
    }
}
