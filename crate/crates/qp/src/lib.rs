//! Convex QP solvers for problems of the form
//!
//! ```text
//! minimize    ½ xᵀPx + qᵀx
//! subject to  A_eq x = b_eq,  A_ineq x ≤ b_ineq,  lb ≤ x ≤ ub
//! ```
//!
//! [`solve`] dispatches on [`Settings::method`]:
//!
//! * a sparse primal-dual interior-point method (default), and
//! * an operator-splitting (ADMM) method with adaptive penalty and an
//!   active-set polish step.
//!
//! Both share Ruiz equilibration and a sparse LDLᵀ factorization of
//! quasi-definite KKT matrices, and both are fully deterministic: no timing
//! information feeds back into the iteration.
//! [`solve_dense_reference`] solves the standard-form problem with dense
//! linear algebra, for cross-checking on small instances.

// Dense and sparse kernels read most clearly with explicit indices.
#![allow(clippy::needless_range_loop)]

pub mod admm;
pub mod csc;
pub mod dense;
pub mod ipm;
pub mod ldl;
pub mod ordering;
mod polish;
pub mod problem;

pub use admm::solve_admm;
pub use csc::CscMatrix;
pub use dense::{solve_dense_reference, DENSE_MAX_VARS};
pub use ipm::solve_ipm;
pub use problem::{Method, Problem, QpError, Residuals, Settings, Solution, Status};

/// Solves the QP with the configured method.
pub fn solve(problem: &Problem, settings: &Settings) -> Result<Solution, QpError> {
    match settings.method {
        Method::Admm => solve_admm(problem, settings),
        Method::InteriorPoint => {
            let sol = solve_ipm(problem, settings)?;
            if sol.status == Status::Optimal {
                return Ok(sol);
            }
            // Only ADMM carries infeasibility certificates.
            let fallback = solve_admm(problem, settings)?;
            Ok(if fallback.status == Status::MaxIter { sol } else { fallback })
        }
    }
}
