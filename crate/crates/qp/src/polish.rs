//! Active-set polish of an ADMM iterate.
//!
//! Guesses the active constraints from the ADMM primal-dual pair and solves
//! the equality-constrained QP on that set,
//!
//! ```text
//! min ½xᵀPx + qᵀx + ½δ‖x − x₀‖²   s.t.  A_act x = b_act
//! ```
//!
//! where `x₀` is the ADMM point. The proximal term fixes directions that
//! the active set leaves undetermined (common for nearly linear problems)
//! and biases the objective by `O(δ‖x − x₀‖²)`. The KKT system is factored
//! with an extra `−δI` block on the multipliers, and that factor
//! preconditions an iterative refinement of the unregularized constraint
//! block. Violated constraints are added and active constraints with
//! wrong-sign multipliers are dropped until the set is stable.

use crate::admm::{RowKind, Scaled};
use crate::csc::CscMatrix;
use crate::ldl::LdlFactor;
use crate::problem::Settings;
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Act {
    Inactive,
    Lower,
    Upper,
    Equal,
}

const TOL: f64 = 1e-9;

pub(crate) fn polish(
    s: &Scaled,
    x: &[f64],
    z: &[f64],
    y: &[f64],
    settings: &Settings,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = s.n;
    let m = s.m();
    let a_full = CscMatrix::vstack(&[
        &s.g,
        &CscMatrix::from_triplets(n, n, &(0..n).collect::<Vec<_>>(), &(0..n).collect::<Vec<_>>(), &s.b),
    ]);

    let mut state: Vec<Act> = (0..m)
        .map(|i| match s.kind[i] {
            RowKind::Equality => Act::Equal,
            RowKind::Free => Act::Inactive,
            RowKind::Inequality => {
                if z[i] - s.l[i] < -y[i] {
                    Act::Lower
                } else if s.u[i] - z[i] < y[i] {
                    Act::Upper
                } else {
                    Act::Inactive
                }
            }
        })
        .collect();

    let mut x_cur = x.to_vec();
    let mut y_cur = y.to_vec();
    let delta = settings.polish_delta;

    let x0 = x.to_vec();
    for pass in 0..settings.polish_max_passes {
        let t0 = Instant::now();
        let active: Vec<usize> = (0..m).filter(|&i| state[i] != Act::Inactive).collect();
        let na = active.len();
        let a_act = a_full.select_rows(&active);
        let target: Vec<f64> = active
            .iter()
            .map(|&i| match state[i] {
                Act::Lower => s.l[i],
                _ => s.u[i],
            })
            .collect();

        // Upper triangle of the regularized KKT matrix.
        let mut r = Vec::new();
        let mut c = Vec::new();
        let mut v = Vec::new();
        for (i, j, val) in s.p.triplets() {
            if i <= j {
                r.push(i);
                c.push(j);
                v.push(val);
            }
        }
        for j in 0..n {
            r.push(j);
            c.push(j);
            v.push(delta);
        }
        for (i, j, val) in a_act.triplets() {
            r.push(j);
            c.push(n + i);
            v.push(val);
        }
        for i in 0..na {
            r.push(n + i);
            c.push(n + i);
            v.push(-delta);
        }
        let kkt = CscMatrix::from_triplets(n + na, n + na, &r, &c, &v);
        let factor = LdlFactor::new(&kkt).ok()?;

        let mut sol: Vec<f64> = x_cur.iter().copied().chain(active.iter().map(|&i| y_cur[i])).collect();
        for _ in 0..=settings.polish_refine_iters {
            // residual of the unregularized system
            let xs = &sol[..n];
            let ys = &sol[n..];
            let px = s.p.mul(xs);
            let aty = a_act.tmul(ys);
            let ax = a_act.mul(xs);
            let mut res: Vec<f64> = (0..n)
                .map(|j| -s.q[j] - px[j] - aty[j] - delta * (xs[j] - x0[j]))
                .collect();
            res.extend((0..na).map(|k| target[k] - ax[k]));
            factor.solve(&mut res);
            for (a, d) in sol.iter_mut().zip(&res) {
                *a += d;
            }
        }
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }

        x_cur = sol[..n].to_vec();
        y_cur = vec![0.0; m];
        for (k, &i) in active.iter().enumerate() {
            y_cur[i] = sol[n + k];
        }

        let ax = s.a_mul(&x_cur);
        let mut added = 0;
        let mut dropped = 0;
        let mut worst_viol: f64 = 0.0;
        let mut worst_sign: f64 = 0.0;
        for i in 0..m {
            if s.kind[i] != RowKind::Inequality {
                continue;
            }
            let tol_p = TOL * (1.0 + s.l[i].abs().min(s.u[i].abs()));
            if settings.verbose {
                match state[i] {
                    Act::Inactive => worst_viol = worst_viol.max(ax[i] - s.u[i]).max(s.l[i] - ax[i]),
                    Act::Upper => worst_sign = worst_sign.max(-y_cur[i]),
                    Act::Lower => worst_sign = worst_sign.max(y_cur[i]),
                    Act::Equal => {}
                }
            }
            match state[i] {
                Act::Inactive => {
                    if ax[i] > s.u[i] + tol_p {
                        state[i] = Act::Upper;
                        added += 1;
                    } else if ax[i] < s.l[i] - tol_p {
                        state[i] = Act::Lower;
                        added += 1;
                    }
                }
                Act::Upper if y_cur[i] < -TOL => {
                    state[i] = Act::Inactive;
                    dropped += 1;
                }
                Act::Lower if y_cur[i] > TOL => {
                    state[i] = Act::Inactive;
                    dropped += 1;
                }
                _ => {}
            }
        }
        if settings.verbose {
            eprintln!(
                "  polish pass {pass}: active {na}  added {added}  dropped {dropped}  viol {worst_viol:.2e}  sign {worst_sign:.2e}  {:.2}s",
                t0.elapsed().as_secs_f64()
            );
        }
        if added + dropped == 0 {
            break;
        }
    }

    // Multipliers must carry the sign of their active side; tiny wrong-sign
    // values left by degeneracy are zeroed and the residual test decides.
    for i in 0..m {
        match state[i] {
            Act::Upper => y_cur[i] = y_cur[i].max(0.0),
            Act::Lower => y_cur[i] = y_cur[i].min(0.0),
            _ => {}
        }
    }
    Some((x_cur, y_cur))
}
