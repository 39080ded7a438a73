//! Operator-splitting (ADMM) solver.
//!
//! The problem is rewritten as `min ½xᵀPx + qᵀx  s.t.  l ≤ Ax ≤ u` with
//! `A = [A_eq; A_ineq; I]`, equilibrated with modified Ruiz scaling, and
//! iterated with the splitting of Stellato et al. (OSQP). The linear system
//! of each iteration is the quasi-definite KKT matrix
//!
//! ```text
//! [ P + σI + diag(b²R_b)   Gᵀ     ]
//! [ G                      -R_g⁻¹ ]
//! ```
//!
//! where `G` holds the general rows and the bound rows (a scaled identity
//! with diagonal `b`) are folded into the upper-left block. It is factored
//! once and refactored only when the penalty changes.

use std::time::Instant;

use crate::csc::{inf_norm, CscMatrix};
use crate::ldl::LdlFactor;
use crate::polish::polish;
use crate::problem::{Problem, QpError, Residuals, Settings, Solution, Status};

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_FACTOR: f64 = 1e3;
const SCALING_MIN: f64 = 1e-4;
const SCALING_MAX: f64 = 1e4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum RowKind {
    Equality,
    Inequality,
    Free,
}

/// Equilibrated problem data. Unscaled quantities relate to scaled ones by
/// `x = D x̄`, `Ax = E⁻¹ Āx̄`, `y = E ȳ / c`.
pub(crate) struct Scaled {
    pub n: usize,
    pub p: CscMatrix,
    pub q: Vec<f64>,
    /// General rows (equalities, then inequalities).
    pub g: CscMatrix,
    /// Diagonal of the scaled bound rows.
    pub b: Vec<f64>,
    /// Bounds for all rows `[general; bounds]`.
    pub l: Vec<f64>,
    pub u: Vec<f64>,
    pub kind: Vec<RowKind>,
    pub d: Vec<f64>,
    pub e: Vec<f64>,
    pub c: f64,
}

impl Scaled {
    pub fn m_g(&self) -> usize {
        self.g.nrows
    }

    pub fn m(&self) -> usize {
        self.g.nrows + self.n
    }

    /// `Āx̄` for all rows.
    pub fn a_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.g.mul(x);
        out.extend(x.iter().zip(&self.b).map(|(v, b)| v * b));
        out
    }

    /// `Āᵀȳ`
    pub fn at_mul(&self, y: &[f64]) -> Vec<f64> {
        let mg = self.m_g();
        let mut out = self.g.tmul(&y[..mg]);
        for (j, o) in out.iter_mut().enumerate() {
            *o += self.b[j] * y[mg + j];
        }
        out
    }

    /// Unscaled residuals, plus the scaled relative residuals used by the
    /// penalty update.
    pub fn residuals(&self, x: &[f64], z: &[f64], y: &[f64]) -> (Residuals, f64, f64) {
        let ax = self.a_mul(x);
        let px = self.p.mul(x);
        let aty = self.at_mul(y);
        let mut prim = 0.0f64;
        let mut ax_n = 0.0f64;
        let mut z_n = 0.0f64;
        let mut prim_s = 0.0f64;
        let mut ax_s = 0.0f64;
        let mut z_s = 0.0f64;
        for i in 0..self.m() {
            let inv = 1.0 / self.e[i];
            prim = prim.max(((ax[i] - z[i]) * inv).abs());
            ax_n = ax_n.max((ax[i] * inv).abs());
            z_n = z_n.max((z[i] * inv).abs());
            prim_s = prim_s.max((ax[i] - z[i]).abs());
            ax_s = ax_s.max(ax[i].abs());
            z_s = z_s.max(z[i].abs());
        }
        let mut dual = 0.0f64;
        let mut px_n = 0.0f64;
        let mut aty_n = 0.0f64;
        let mut q_n = 0.0f64;
        let mut dual_s = 0.0f64;
        let mut px_s = 0.0f64;
        let mut aty_s = 0.0f64;
        let mut q_s = 0.0f64;
        for j in 0..self.n {
            let inv = 1.0 / (self.d[j] * self.c);
            let r = px[j] + self.q[j] + aty[j];
            dual = dual.max((r * inv).abs());
            px_n = px_n.max((px[j] * inv).abs());
            aty_n = aty_n.max((aty[j] * inv).abs());
            q_n = q_n.max((self.q[j] * inv).abs());
            dual_s = dual_s.max(r.abs());
            px_s = px_s.max(px[j].abs());
            aty_s = aty_s.max(aty[j].abs());
            q_s = q_s.max(self.q[j].abs());
        }
        let res = Residuals {
            primal: prim,
            dual,
            primal_scale: ax_n.max(z_n),
            dual_scale: px_n.max(aty_n).max(q_n),
        };
        let rel_prim = prim_s / (ax_s.max(z_s) + 1e-10);
        let rel_dual = dual_s / (px_s.max(aty_s).max(q_s) + 1e-10);
        (res, rel_prim, rel_dual)
    }

    pub fn unscale_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.d).map(|(v, d)| v * d).collect()
    }

    pub fn unscale_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.e).map(|(v, e)| v * e / self.c).collect()
    }
}

fn limit_scaling(v: f64) -> f64 {
    if v < SCALING_MIN {
        1.0
    } else {
        v.min(SCALING_MAX)
    }
}

pub(crate) fn scale_problem(problem: &Problem, iters: usize) -> Scaled {
    let n = problem.n();
    let mut p = problem.p.clone();
    let mut q = problem.q.clone();
    let mut g = CscMatrix::vstack(&[&problem.a_eq, &problem.a_ineq]);
    let mg = g.nrows;
    let mut b = vec![1.0f64; n];
    let mut d = vec![1.0; n];
    let mut e = vec![1.0; mg + n];
    let mut c = 1.0;

    for _ in 0..iters {
        let pn = p.col_inf_norms();
        let gn = g.col_inf_norms();
        let d_tmp: Vec<f64> = (0..n)
            .map(|j| 1.0 / limit_scaling(pn[j].max(gn[j]).max(b[j].abs())).sqrt())
            .collect();
        let gr = g.row_inf_norms();
        let e_tmp: Vec<f64> = gr
            .iter()
            .map(|&v| 1.0 / limit_scaling(v).sqrt())
            .chain((0..n).map(|j| 1.0 / limit_scaling(b[j].abs()).sqrt()))
            .collect();
        p.scale(&d_tmp, &d_tmp);
        g.scale(&e_tmp[..mg], &d_tmp);
        for j in 0..n {
            b[j] *= e_tmp[mg + j] * d_tmp[j];
            q[j] *= d_tmp[j];
            d[j] *= d_tmp[j];
        }
        for (ei, et) in e.iter_mut().zip(&e_tmp) {
            *ei *= et;
        }
        let pn = p.col_inf_norms();
        let mean = if n > 0 { pn.iter().sum::<f64>() / n as f64 } else { 0.0 };
        let c_tmp = 1.0 / limit_scaling(mean.max(inf_norm(&q)));
        p.values.iter_mut().for_each(|v| *v *= c_tmp);
        q.iter_mut().for_each(|v| *v *= c_tmp);
        c *= c_tmp;
    }

    let (_, l0, u0) = problem.stacked();
    let l: Vec<f64> = l0.iter().zip(&e).map(|(v, s)| v * s).collect();
    let u: Vec<f64> = u0.iter().zip(&e).map(|(v, s)| v * s).collect();
    let kind = l0
        .iter()
        .zip(&u0)
        .map(|(lo, hi)| {
            if lo == hi {
                RowKind::Equality
            } else if lo.is_infinite() && hi.is_infinite() {
                RowKind::Free
            } else {
                RowKind::Inequality
            }
        })
        .collect();
    Scaled {
        n,
        p,
        q,
        g,
        b,
        l,
        u,
        kind,
        d,
        e,
        c,
    }
}

fn penalties(kind: &[RowKind], rho: f64) -> Vec<f64> {
    kind.iter()
        .map(|k| match k {
            RowKind::Equality => RHO_EQ_FACTOR * rho,
            RowKind::Inequality => rho,
            RowKind::Free => RHO_MIN,
        })
        .collect()
}

fn build_kkt(s: &Scaled, r: &[f64], sigma: f64) -> CscMatrix {
    let n = s.n;
    let mg = s.m_g();
    let mut rows = Vec::with_capacity(s.p.nnz() / 2 + s.g.nnz() + n + mg);
    let mut cols = Vec::with_capacity(rows.capacity());
    let mut vals = Vec::with_capacity(rows.capacity());
    for (i, j, v) in s.p.triplets() {
        if i <= j {
            rows.push(i);
            cols.push(j);
            vals.push(v);
        }
    }
    for j in 0..n {
        rows.push(j);
        cols.push(j);
        vals.push(sigma + s.b[j] * s.b[j] * r[mg + j]);
    }
    for (i, j, v) in s.g.triplets() {
        rows.push(j);
        cols.push(n + i);
        vals.push(v);
    }
    for i in 0..mg {
        rows.push(n + i);
        cols.push(n + i);
        vals.push(-1.0 / r[i]);
    }
    CscMatrix::from_triplets(n + mg, n + mg, &rows, &cols, &vals)
}

/// Solves the QP with ADMM and optional active-set polish.
pub fn solve_admm(problem: &Problem, settings: &Settings) -> Result<Solution, QpError> {
    problem.validate()?;
    settings.validate()?;
    let start = Instant::now();
    let s = scale_problem(problem, settings.scaling_iters);
    let n = s.n;
    let mg = s.m_g();
    let m = s.m();

    let mut rho = settings.rho;
    let mut r = penalties(&s.kind, rho);
    let mut factor = LdlFactor::new(&build_kkt(&s, &r, settings.sigma))?;
    if settings.verbose {
        eprintln!(
            "n {n}  m {m}  nnz(L) {}  d [{:.1e}, {:.1e}]  e [{:.1e}, {:.1e}]  c {:.1e}  setup {:.2}s",
            factor.nnz_l(),
            s.d.iter().cloned().fold(f64::INFINITY, f64::min),
            s.d.iter().cloned().fold(0.0, f64::max),
            s.e.iter().cloned().fold(f64::INFINITY, f64::min),
            s.e.iter().cloned().fold(0.0, f64::max),
            s.c,
            start.elapsed().as_secs_f64()
        );
    }

    let mut x = vec![0.0; n];
    let mut z = vec![0.0; m];
    let mut y = vec![0.0; m];
    let mut x_prev = vec![0.0; n];
    let mut y_prev = vec![0.0; m];
    let mut rhs = vec![0.0; n + mg];
    let mut zt = vec![0.0; m];
    let alpha = settings.alpha;
    let sigma = settings.sigma;

    let mut status = Status::MaxIter;
    let mut iterations = settings.max_iter;
    let mut result: Option<(Vec<f64>, Vec<f64>, Residuals, bool)> = None;

    for iter in 1..=settings.max_iter {
        x_prev.copy_from_slice(&x);
        y_prev.copy_from_slice(&y);

        for j in 0..n {
            rhs[j] = sigma * x[j] - s.q[j] + s.b[j] * (r[mg + j] * z[mg + j] - y[mg + j]);
        }
        for i in 0..mg {
            rhs[n + i] = z[i] - y[i] / r[i];
        }
        factor.solve(&mut rhs);
        for i in 0..mg {
            zt[i] = z[i] + (rhs[n + i] - y[i]) / r[i];
        }
        for j in 0..n {
            zt[mg + j] = s.b[j] * rhs[j];
            x[j] = alpha * rhs[j] + (1.0 - alpha) * x[j];
        }
        for i in 0..m {
            let zr = alpha * zt[i] + (1.0 - alpha) * z[i];
            let zn = (zr + y[i] / r[i]).max(s.l[i]).min(s.u[i]);
            y[i] += r[i] * (zr - zn);
            z[i] = zn;
        }

        let check = iter % settings.check_interval == 0 || iter == settings.max_iter;
        let adapt = settings.adaptive_rho && iter % settings.adaptive_rho_interval == 0;
        if !(check || adapt) {
            continue;
        }
        let (res, rel_prim, rel_dual) = s.residuals(&x, &z, &y);
        if settings.verbose && iter % (10 * settings.check_interval) == 0 {
            eprintln!(
                "iter {iter:6}  prim {:.3e}  dual {:.3e}  rho {rho:.2e}  t {:.2}s",
                res.primal,
                res.dual,
                start.elapsed().as_secs_f64()
            );
        }
        if check {
            if res.converged(settings.eps_abs, settings.eps_rel) {
                status = Status::Optimal;
                iterations = iter;
                result = Some((x.clone(), y.clone(), res, false));
                break;
            }
            if primal_infeasible(&s, &y, &y_prev, settings.eps_prim_inf) {
                status = Status::PrimalInfeasible;
                iterations = iter;
                let dy: Vec<f64> = y.iter().zip(&y_prev).map(|(a, b)| a - b).collect();
                result = Some((vec![f64::NAN; n], dy, res, false));
                break;
            }
            if dual_infeasible(&s, &x, &x_prev, settings.eps_dual_inf) {
                status = Status::DualInfeasible;
                iterations = iter;
                let dx: Vec<f64> = x.iter().zip(&x_prev).map(|(a, b)| a - b).collect();
                result = Some((dx, vec![f64::NAN; m], res, false));
                break;
            }
            let thr_p = settings.eps_abs + settings.eps_rel * res.primal_scale;
            let thr_d = settings.eps_abs + settings.eps_rel * res.dual_scale;
            if settings.polish
                && iter % settings.polish_interval == 0
                && res.primal <= settings.polish_trigger * thr_p
                && res.dual <= settings.polish_trigger * thr_d
            {
                if let Some((xp, yp, rp)) = try_polish(&s, &x, &z, &y, settings) {
                    status = Status::Optimal;
                    iterations = iter;
                    result = Some((xp, yp, rp, true));
                    break;
                }
            }
        }
        if adapt {
            let new_rho = (rho * (rel_prim / (rel_dual + 1e-10)).sqrt()).clamp(RHO_MIN, RHO_MAX);
            if new_rho > 5.0 * rho || new_rho < 0.2 * rho {
                rho = new_rho;
                r = penalties(&s.kind, rho);
                factor.refactor(&build_kkt(&s, &r, sigma))?;
            }
        }
    }

    let (xs, ys, res, polished) = match result {
        Some((xs, ys, res, polished)) if status == Status::Optimal && !polished && settings.polish => {
            match try_polish(&s, &xs, &s.a_mul(&xs), &ys, settings) {
                Some((xp, yp, rp)) => (xp, yp, rp, true),
                None => (xs, ys, res, false),
            }
        }
        Some(r) => r,
        None => {
            let (res, _, _) = s.residuals(&x, &z, &y);
            (x, y, res, false)
        }
    };

    let (x_out, y_out) = match status {
        Status::PrimalInfeasible => (xs, s.unscale_y(&ys)),
        Status::DualInfeasible => (s.unscale_x(&xs), ys),
        _ => (s.unscale_x(&xs), s.unscale_y(&ys)),
    };
    let objective = match status {
        Status::Optimal | Status::MaxIter => problem.objective(&x_out),
        Status::PrimalInfeasible => f64::INFINITY,
        Status::DualInfeasible => f64::NEG_INFINITY,
    };
    Ok(Solution {
        x: x_out,
        y: y_out,
        objective,
        status,
        primal_res: res.primal,
        dual_res: res.dual,
        iterations,
        polished,
        solve_time: start.elapsed().as_secs_f64(),
    })
}

/// Polishes and accepts the result only if it meets the convergence test.
fn try_polish(
    s: &Scaled,
    x: &[f64],
    z: &[f64],
    y: &[f64],
    settings: &Settings,
) -> Option<(Vec<f64>, Vec<f64>, Residuals)> {
    let t0 = Instant::now();
    let polished = polish(s, x, z, y, settings);
    if settings.verbose {
        eprintln!("polish: {} in {:.2}s", if polished.is_some() { "solved" } else { "failed" }, t0.elapsed().as_secs_f64());
    }
    let (xp, yp) = polished?;
    let zp: Vec<f64> = s
        .a_mul(&xp)
        .iter()
        .zip(s.l.iter().zip(&s.u))
        .map(|(v, (lo, hi))| v.max(*lo).min(*hi))
        .collect();
    let (res, _, _) = s.residuals(&xp, &zp, &yp);
    if settings.verbose {
        eprintln!("polish residuals: prim {:.3e}  dual {:.3e}", res.primal, res.dual);
    }
    res.converged(settings.eps_abs, settings.eps_rel).then_some((xp, yp, res))
}

/// Certificate test on `δy`: `‖Aᵀδy‖ ≈ 0` and `uᵀδy⁺ + lᵀδy⁻ < 0`.
fn primal_infeasible(s: &Scaled, y: &[f64], y_prev: &[f64], eps: f64) -> bool {
    let dy: Vec<f64> = y.iter().zip(y_prev).map(|(a, b)| a - b).collect();
    let dy_u: Vec<f64> = dy.iter().zip(&s.e).map(|(v, e)| v * e).collect();
    let norm = inf_norm(&dy_u);
    if norm < 1e-30 {
        return false;
    }
    let mut support = 0.0;
    for i in 0..s.m() {
        let v = dy_u[i];
        let lo = s.l[i] / s.e[i];
        let hi = s.u[i] / s.e[i];
        if v > 0.0 {
            if hi.is_infinite() {
                if v > eps * norm {
                    return false;
                }
            } else {
                support += hi * v;
            }
        } else if v < 0.0 {
            if lo.is_infinite() {
                if -v > eps * norm {
                    return false;
                }
            } else {
                support += lo * v;
            }
        }
    }
    if support >= -eps * norm {
        return false;
    }
    let aty = s.at_mul(&dy);
    let aty_u = aty.iter().zip(&s.d).map(|(v, d)| (v / d).abs()).fold(0.0f64, f64::max);
    aty_u <= eps * norm
}

/// Certificate test on `δx`: `Pδx ≈ 0`, `qᵀδx < 0` and `Aδx` in the recession
/// cone of the constraint set.
fn dual_infeasible(s: &Scaled, x: &[f64], x_prev: &[f64], eps: f64) -> bool {
    let dx: Vec<f64> = x.iter().zip(x_prev).map(|(a, b)| a - b).collect();
    let dx_u: Vec<f64> = dx.iter().zip(&s.d).map(|(v, d)| v * d).collect();
    let norm = inf_norm(&dx_u);
    if norm < 1e-30 {
        return false;
    }
    let qdx: f64 = s.q.iter().zip(&dx).map(|(a, b)| a * b).sum::<f64>() / s.c;
    if qdx >= -eps * norm {
        return false;
    }
    let pdx = s.p.mul(&dx);
    if pdx.iter().zip(&s.d).any(|(v, d)| (v / (d * s.c)).abs() > eps * norm) {
        return false;
    }
    let adx = s.a_mul(&dx);
    for i in 0..s.m() {
        let v = adx[i] / s.e[i];
        if s.u[i].is_finite() && v > eps * norm {
            return false;
        }
        if s.l[i].is_finite() && v < -eps * norm {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_problem(lb: f64, ub: f64) -> Problem {
        Problem {
            p: CscMatrix::from_triplets(1, 1, &[0], &[0], &[1.0]),
            q: vec![0.0],
            a_eq: CscMatrix::zeros(0, 1),
            b_eq: vec![],
            a_ineq: CscMatrix::zeros(0, 1),
            b_ineq: vec![],
            lb: vec![lb],
            ub: vec![ub],
        }
    }

    fn random_problem(seed: u64, n: usize, me: usize, mi: usize) -> Problem {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let trip = |m: usize, dens: f64, rng: &mut rand_chacha::ChaCha8Rng| {
            let (mut r, mut c, mut v) = (vec![], vec![], vec![]);
            for i in 0..m {
                for j in 0..n {
                    if rng.random::<f64>() < dens {
                        r.push(i);
                        c.push(j);
                        v.push(rng.random_range(-3.0..3.0));
                    }
                }
            }
            CscMatrix::from_triplets(m, n, &r, &c, &v)
        };
        let m = trip(n, 0.3, &mut rng);
        let md = m.to_dense();
        let (mut pr, mut pc, mut pv) = (vec![], vec![], vec![]);
        for i in 0..n {
            for j in 0..n {
                let v: f64 = (0..n).map(|k| md[k][i] * md[k][j]).sum();
                if v != 0.0 {
                    pr.push(i);
                    pc.push(j);
                    pv.push(v);
                }
            }
        }
        let p = CscMatrix::from_triplets(n, n, &pr, &pc, &pv);
        let a_eq = trip(me, 0.4, &mut rng);
        let a_ineq = trip(mi, 0.4, &mut rng);
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b_eq = a_eq.mul(&x0);
        let b_ineq = a_ineq.mul(&x0).iter().map(|v| v + rng.random_range(0.0..1.0)).collect();
        Problem {
            p,
            q: (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
            a_eq,
            b_eq,
            a_ineq,
            b_ineq,
            lb: vec![-2.0; n],
            ub: vec![2.0; n],
        }
    }

    #[test]
    fn kkt_solve_is_accurate() {
        for seed in 0..5 {
            let prob = random_problem(seed, 30, 5, 20);
            let s = scale_problem(&prob, 10);
            let r = penalties(&s.kind, 0.1);
            let kkt = build_kkt(&s, &r, 1e-6);
            let full = {
                let t = kkt.triplets();
                let (mut a, mut b, mut v) = (vec![], vec![], vec![]);
                for (i, j, x) in t {
                    a.push(i);
                    b.push(j);
                    v.push(x);
                    if i != j {
                        a.push(j);
                        b.push(i);
                        v.push(x);
                    }
                }
                CscMatrix::from_triplets(kkt.nrows, kkt.ncols, &a, &b, &v)
            };
            let rhs: Vec<f64> = (0..kkt.nrows).map(|i| (i as f64 * 0.37).sin()).collect();
            let mut sol = rhs.clone();
            LdlFactor::new(&kkt).unwrap().solve(&mut sol);
            let back = full.mul(&sol);
            let err = back.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-8, "seed {seed}: residual {err}");
        }
    }

    #[test]
    fn textbook_lower_bound() {
        let sol = solve_admm(&scalar_problem(1.0, f64::INFINITY), &Settings::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-9);
        assert!((sol.objective - 0.5).abs() < 1e-9);
    }

    #[test]
    fn infeasible_bounds_detected() {
        // x ≤ 0 written as an inequality row, x ≥ 1 as a bound.
        let mut p = scalar_problem(1.0, f64::INFINITY);
        p.a_ineq = CscMatrix::from_triplets(1, 1, &[0], &[0], &[1.0]);
        p.b_ineq = vec![0.0];
        let sol = solve_admm(&p, &Settings::default()).unwrap();
        assert_eq!(sol.status, Status::PrimalInfeasible);
    }

    #[test]
    fn unbounded_linear_objective_detected() {
        let p = Problem {
            p: CscMatrix::zeros(1, 1),
            q: vec![1.0],
            a_eq: CscMatrix::zeros(0, 1),
            b_eq: vec![],
            a_ineq: CscMatrix::zeros(0, 1),
            b_ineq: vec![],
            lb: vec![f64::NEG_INFINITY],
            ub: vec![f64::INFINITY],
        };
        let sol = solve_admm(&p, &Settings::default()).unwrap();
        assert_eq!(sol.status, Status::DualInfeasible);
    }
}
