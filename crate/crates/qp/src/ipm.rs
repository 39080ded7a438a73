//! Sparse primal-dual interior-point method (Mehrotra predictor-corrector).
//!
//! Works on the equilibrated problem of [`crate::admm`] with general rows
//! split into equalities `A_e x = b_e` and one-sided inequalities
//! `A_i x + s = b_i, s ≥ 0`, and variable bounds kept as bounds. Each
//! iteration factors the quasi-definite reduced KKT matrix
//!
//! ```text
//! [ P + Σ + δI   A_eᵀ   A_iᵀ        ]
//! [ A_e          −δI    0           ]
//! [ A_i          0      −S Z⁻¹ − δI ]
//! ```
//!
//! with `Σ` the barrier terms of the bounds, once with the shared sparse
//! LDLᵀ kernel, and solves it twice (predictor and corrector) with
//! iterative refinement against the unregularized matrix.

use std::time::Instant;

use crate::admm::{scale_problem, RowKind, Scaled};
use crate::csc::{dot, CscMatrix};
use crate::ldl::LdlFactor;
use crate::problem::{Problem, QpError, Residuals, Settings, Solution, Status};

const STEP_FRACTION: f64 = 0.99;
/// Static regularization of the KKT matrix, raised when a solve goes bad.
const REG_START: f64 = 1e-8;
const REG_MAX: f64 = 1e-4;
const REFINE_STEPS: usize = 20;
/// Relative refinement residual above which a direction is rejected.
const REFINE_TOL: f64 = 1e-6;
const DIVERGENCE: f64 = 1e13;
const DYN_REG_EPS: f64 = 1e-13;
const DYN_REG_DELTA: f64 = 1e-7;

/// Problem in interior-point form, scaled.
struct Form {
    n: usize,
    p: CscMatrix,
    q: Vec<f64>,
    a_e: CscMatrix,
    b_e: Vec<f64>,
    a_i: CscMatrix,
    b_i: Vec<f64>,
    /// `(variable, bound)` for finite lower and upper bounds.
    lower: Vec<(usize, f64)>,
    upper: Vec<(usize, f64)>,
    /// Origin of each row: general row index and sign, for unscaling duals.
    eq_rows: Vec<usize>,
    ineq_rows: Vec<(usize, f64)>,
}

fn to_form(s: &Scaled) -> Form {
    let n = s.n;
    let mg = s.m_g();
    let mut eq_rows = Vec::new();
    let mut ineq_rows = Vec::new();
    for i in 0..mg {
        match s.kind[i] {
            RowKind::Equality => eq_rows.push(i),
            RowKind::Inequality => {
                if s.u[i].is_finite() {
                    ineq_rows.push((i, 1.0));
                }
                if s.l[i].is_finite() {
                    ineq_rows.push((i, -1.0));
                }
            }
            RowKind::Free => {}
        }
    }
    let a_e = s.g.select_rows(&eq_rows);
    let b_e = eq_rows.iter().map(|&i| s.l[i]).collect();
    // Rows of G grouped by general row index, then emitted per inequality.
    let mut by_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); mg];
    for (i, j, v) in s.g.triplets() {
        by_row[i].push((j, v));
    }
    let (mut r, mut c, mut v) = (Vec::new(), Vec::new(), Vec::new());
    let mut b_i = Vec::with_capacity(ineq_rows.len());
    for (k, &(i, sign)) in ineq_rows.iter().enumerate() {
        for &(j, val) in &by_row[i] {
            r.push(k);
            c.push(j);
            v.push(sign * val);
        }
        b_i.push(if sign > 0.0 { s.u[i] } else { -s.l[i] });
    }
    let a_i = CscMatrix::from_triplets(ineq_rows.len(), n, &r, &c, &v);
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for j in 0..n {
        let (lo, hi) = (s.l[mg + j], s.u[mg + j]);
        if lo.is_finite() {
            lower.push((j, lo / s.b[j]));
        }
        if hi.is_finite() {
            upper.push((j, hi / s.b[j]));
        }
    }
    Form {
        n,
        p: s.p.clone(),
        q: s.q.clone(),
        a_e,
        b_e,
        a_i,
        b_i,
        lower,
        upper,
        eq_rows,
        ineq_rows,
    }
}

/// Primal-dual iterate.
#[derive(Clone)]
struct Point {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
    /// Lower-bound slack and dual.
    t: Vec<f64>,
    u: Vec<f64>,
    /// Upper-bound slack and dual.
    w: Vec<f64>,
    v: Vec<f64>,
}

struct Kkt {
    factor: LdlFactor,
    /// Diagonal of `P + Σ` without regularization.
    sigma: Vec<f64>,
    /// `S Z⁻¹` without regularization.
    sz: Vec<f64>,
}

impl Form {
    fn me(&self) -> usize {
        self.b_e.len()
    }

    fn mi(&self) -> usize {
        self.b_i.len()
    }

    fn kkt_signs(&self) -> Vec<f64> {
        let mut s = vec![1.0; self.n];
        s.resize(self.n + self.me() + self.mi(), -1.0);
        s
    }

    fn kkt_matrix(&self, sigma: &[f64], sz: &[f64], reg: f64) -> CscMatrix {
        let n = self.n;
        let me = self.me();
        let mi = self.mi();
        let cap = self.p.nnz() + self.a_e.nnz() + self.a_i.nnz() + n + me + mi;
        let (mut r, mut c, mut v) = (Vec::with_capacity(cap), Vec::with_capacity(cap), Vec::with_capacity(cap));
        for (i, j, x) in self.p.triplets() {
            if i <= j {
                r.push(i);
                c.push(j);
                v.push(x);
            }
        }
        for j in 0..n {
            r.push(j);
            c.push(j);
            v.push(sigma[j] + reg);
        }
        for (i, j, x) in self.a_e.triplets() {
            r.push(j);
            c.push(n + i);
            v.push(x);
        }
        for i in 0..me {
            r.push(n + i);
            c.push(n + i);
            v.push(-reg);
        }
        for (i, j, x) in self.a_i.triplets() {
            r.push(j);
            c.push(n + me + i);
            v.push(x);
        }
        for i in 0..mi {
            r.push(n + me + i);
            c.push(n + me + i);
            v.push(-sz[i] - reg);
        }
        CscMatrix::from_triplets(n + me + mi, n + me + mi, &r, &c, &v)
    }

    /// Product with the unregularized KKT matrix.
    fn kkt_mul(&self, kkt: &Kkt, sol: &[f64]) -> Vec<f64> {
        let n = self.n;
        let me = self.me();
        let (dx, rest) = sol.split_at(n);
        let (dy, dz) = rest.split_at(me);
        let mut top = self.p.mul(dx);
        for j in 0..n {
            top[j] += kkt.sigma[j] * dx[j];
        }
        let aty = self.a_e.tmul(dy);
        let atz = self.a_i.tmul(dz);
        for j in 0..n {
            top[j] += aty[j] + atz[j];
        }
        let mut out = top;
        out.extend(self.a_e.mul(dx));
        let aix = self.a_i.mul(dx);
        out.extend(aix.iter().zip(dz).zip(&kkt.sz).map(|((a, z), d)| a - d * z));
        out
    }

    /// Solves against the unregularized matrix by refinement. Returns the
    /// solution and its relative residual.
    fn solve_refined(&self, kkt: &Kkt, rhs: &[f64]) -> (Vec<f64>, f64) {
        let scale = 1.0 + inf_norm(rhs);
        let mut sol = rhs.to_vec();
        kkt.factor.solve(&mut sol);
        let mut best = f64::INFINITY;
        for _ in 0..=REFINE_STEPS {
            let k = self.kkt_mul(kkt, &sol);
            let mut res: Vec<f64> = rhs.iter().zip(&k).map(|(a, b)| a - b).collect();
            let norm = inf_norm(&res) / scale;
            if !norm.is_finite() {
                return (sol, f64::INFINITY);
            }
            // Stop once refinement no longer pays off.
            if norm < 1e-14 || norm >= best {
                best = best.min(norm);
                break;
            }
            best = norm;
            kkt.factor.solve(&mut res);
            for (a, d) in sol.iter_mut().zip(&res) {
                *a += d;
            }
        }
        (sol, best)
    }
}

struct Residual {
    d: Vec<f64>,
    e: Vec<f64>,
    i: Vec<f64>,
    l: Vec<f64>,
    u: Vec<f64>,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn residual(f: &Form, pt: &Point) -> Residual {
    let mut d = f.p.mul(&pt.x);
    let aty = f.a_e.tmul(&pt.y);
    let atz = f.a_i.tmul(&pt.z);
    for j in 0..f.n {
        d[j] += f.q[j] + aty[j] + atz[j];
    }
    for (k, &(j, _)) in f.lower.iter().enumerate() {
        d[j] -= pt.u[k];
    }
    for (k, &(j, _)) in f.upper.iter().enumerate() {
        d[j] += pt.v[k];
    }
    let e = f.a_e.mul(&pt.x).iter().zip(&f.b_e).map(|(a, b)| a - b).collect();
    let i = f
        .a_i
        .mul(&pt.x)
        .iter()
        .zip(&pt.s)
        .zip(&f.b_i)
        .map(|((a, s), b)| a + s - b)
        .collect();
    let l = f.lower.iter().zip(&pt.t).map(|(&(j, lo), t)| pt.x[j] - lo - t).collect();
    let u = f.upper.iter().zip(&pt.w).map(|(&(j, hi), w)| pt.x[j] + w - hi).collect();
    Residual { d, e, i, l, u }
}

struct Direction {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
    t: Vec<f64>,
    u: Vec<f64>,
    w: Vec<f64>,
    v: Vec<f64>,
}

/// Newton direction for complementarity targets `c_s, c_t, c_w`
/// (`Z ds + S dz = c_s` and likewise for the bounds).
fn direction(
    f: &Form,
    kkt: &Kkt,
    pt: &Point,
    r: &Residual,
    c_s: &[f64],
    c_t: &[f64],
    c_w: &[f64],
) -> Option<Direction> {
    let n = f.n;
    let me = f.me();
    let mut rhs = vec![0.0; n + me + f.mi()];
    for j in 0..n {
        rhs[j] = -r.d[j];
    }
    for (k, &(j, _)) in f.lower.iter().enumerate() {
        rhs[j] += (c_t[k] - pt.u[k] * r.l[k]) / pt.t[k];
    }
    for (k, &(j, _)) in f.upper.iter().enumerate() {
        rhs[j] -= (c_w[k] + pt.v[k] * r.u[k]) / pt.w[k];
    }
    for i in 0..me {
        rhs[n + i] = -r.e[i];
    }
    for i in 0..f.mi() {
        rhs[n + me + i] = -r.i[i] - c_s[i] / pt.z[i];
    }
    let (sol, err) = f.solve_refined(kkt, &rhs);
    // Negated so that a NaN error also rejects the step.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    let rejected = !(err <= REFINE_TOL);
    if rejected || sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let dx = sol[..n].to_vec();
    let dy = sol[n..n + me].to_vec();
    let dz = sol[n + me..].to_vec();
    // From `Z ds + S dz = c_s`, which keeps relative accuracy as `s → 0`.
    let ds: Vec<f64> = (0..f.mi()).map(|i| (c_s[i] - pt.s[i] * dz[i]) / pt.z[i]).collect();
    let dt: Vec<f64> = f.lower.iter().enumerate().map(|(k, &(j, _))| dx[j] + r.l[k]).collect();
    let du: Vec<f64> = (0..f.lower.len()).map(|k| (c_t[k] - pt.u[k] * dt[k]) / pt.t[k]).collect();
    let dw: Vec<f64> = f.upper.iter().enumerate().map(|(k, &(j, _))| -r.u[k] - dx[j]).collect();
    let dv: Vec<f64> = (0..f.upper.len()).map(|k| (c_w[k] - pt.v[k] * dw[k]) / pt.w[k]).collect();
    let d = Direction {
        x: dx,
        y: dy,
        z: dz,
        s: ds,
        t: dt,
        u: du,
        w: dw,
        v: dv,
    };
    let finite = [&d.s, &d.t, &d.u, &d.w, &d.v].iter().all(|v| v.iter().all(|x| x.is_finite()));
    finite.then_some(d)
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, d)| **d < 0.0)
        .map(|(a, d)| -a / d)
        .fold(1.0, f64::min)
}

fn step_lengths(pt: &Point, d: &Direction) -> (f64, f64) {
    let ap = max_step(&pt.s, &d.s).min(max_step(&pt.t, &d.t)).min(max_step(&pt.w, &d.w));
    let ad = max_step(&pt.z, &d.z).min(max_step(&pt.u, &d.u)).min(max_step(&pt.v, &d.v));
    (ap, ad)
}

fn complementarity(pt: &Point) -> f64 {
    dot(&pt.s, &pt.z) + dot(&pt.t, &pt.u) + dot(&pt.w, &pt.v)
}

fn axpy(a: &mut [f64], alpha: f64, d: &[f64]) {
    for (x, dx) in a.iter_mut().zip(d) {
        *x += alpha * dx;
    }
}

fn initial_point(f: &Form) -> Result<Point, QpError> {
    let n = f.n;
    let me = f.me();
    let mi = f.mi();
    // Regularized least-squares start: [P+I Aᵀ; A −I] [x; y] = [−q; b].
    let kkt = Kkt {
        factor: LdlFactor::with_signs(
            &f.kkt_matrix(&vec![1.0; n], &vec![1.0; mi], REG_START),
            &f.kkt_signs(),
            DYN_REG_EPS,
            DYN_REG_DELTA,
        )?,
        sigma: vec![1.0; n],
        sz: vec![1.0; mi],
    };
    let mut rhs: Vec<f64> = f.q.iter().map(|v| -v).collect();
    rhs.extend(&f.b_e);
    rhs.extend(&f.b_i);
    let mut sol = rhs;
    kkt.factor.solve(&mut sol);
    let x = sol[..n].to_vec();
    let aix = f.a_i.mul(&x);
    let lift = |v: f64| v.max(1.0);
    let s = (0..mi).map(|i| lift(f.b_i[i] - aix[i])).collect();
    let t = f.lower.iter().map(|&(j, lo)| lift(x[j] - lo)).collect();
    let w = f.upper.iter().map(|&(j, hi)| lift(hi - x[j])).collect();
    Ok(Point {
        x,
        y: vec![0.0; me],
        z: vec![1.0; mi],
        s,
        t,
        u: vec![1.0; f.lower.len()],
        w,
        v: vec![1.0; f.upper.len()],
    })
}

/// Mehrotra predictor-corrector step: direction and step length.
fn newton_step(f: &Form, kkt: &Kkt, pt: &Point, r: &Residual, mu: f64, ncomp: f64) -> Option<(Direction, f64)> {
    let c_s: Vec<f64> = pt.s.iter().zip(&pt.z).map(|(s, z)| -s * z).collect();
    let c_t: Vec<f64> = pt.t.iter().zip(&pt.u).map(|(t, u)| -t * u).collect();
    let c_w: Vec<f64> = pt.w.iter().zip(&pt.v).map(|(w, v)| -w * v).collect();
    let aff = direction(f, kkt, pt, r, &c_s, &c_t, &c_w)?;
    let (ap, ad) = step_lengths(pt, &aff);
    let a = ap.min(ad);
    let prod = |v: &[f64], dv: &[f64], w: &[f64], dw: &[f64]| {
        v.iter()
            .zip(dv)
            .zip(w.iter().zip(dw))
            .map(|((p, dp), (q, dq))| (p + a * dp) * (q + a * dq))
            .sum::<f64>()
    };
    let mu_aff =
        (prod(&pt.s, &aff.s, &pt.z, &aff.z) + prod(&pt.t, &aff.t, &pt.u, &aff.u) + prod(&pt.w, &aff.w, &pt.v, &aff.v)) / ncomp;
    let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
    if !sigma.is_finite() {
        return None;
    }
    let target = sigma * mu;
    let corr = |v: &[f64], w: &[f64], dv: &[f64], dw: &[f64]| -> Vec<f64> {
        (0..v.len()).map(|i| -v[i] * w[i] + target - dv[i] * dw[i]).collect()
    };
    let c_s = corr(&pt.s, &pt.z, &aff.s, &aff.z);
    let c_t = corr(&pt.t, &pt.u, &aff.t, &aff.u);
    let c_w = corr(&pt.w, &pt.v, &aff.w, &aff.v);
    let d = direction(f, kkt, pt, r, &c_s, &c_t, &c_w)?;
    let (ap, ad) = step_lengths(pt, &d);
    let a = (STEP_FRACTION * ap.min(ad)).min(1.0);
    (a > 0.0).then_some((d, a))
}

/// Unscaled primal and the dual vector in `[eq; ineq; bounds]` order.
fn unscale(s: &Scaled, f: &Form, pt: &Point) -> (Vec<f64>, Vec<f64>) {
    let mg = s.m_g();
    let mut yb = vec![0.0; mg + s.n];
    for (k, &i) in f.eq_rows.iter().enumerate() {
        yb[i] = pt.y[k];
    }
    for (k, &(i, sign)) in f.ineq_rows.iter().enumerate() {
        yb[i] += sign * pt.z[k];
    }
    // A bound on x̄ has row coefficient 1 here and b_j in the stacked form.
    for (k, &(j, _)) in f.lower.iter().enumerate() {
        yb[mg + j] -= pt.u[k] / s.b[j];
    }
    for (k, &(j, _)) in f.upper.iter().enumerate() {
        yb[mg + j] += pt.v[k] / s.b[j];
    }
    (s.unscale_x(&pt.x), s.unscale_y(&yb))
}

/// Solves the QP with the interior-point method. Returns `MaxIter` when it
/// neither converges nor stays numerically sound.
pub fn solve_ipm(problem: &Problem, settings: &Settings) -> Result<Solution, QpError> {
    problem.validate()?;
    settings.validate()?;
    let start = Instant::now();
    let sc = scale_problem(problem, settings.scaling_iters);
    let f = to_form(&sc);
    let n = f.n;
    let mi = f.mi();
    let ncomp = (mi + f.lower.len() + f.upper.len()).max(1) as f64;

    let mut pt = initial_point(&f)?;
    let mut factor: Option<LdlFactor> = None;
    let mut reg = REG_START;
    let mut status = Status::MaxIter;
    let mut iterations = settings.ipm_max_iter;
    let mut best: Option<(Point, Residuals)> = None;

    for iter in 0..settings.ipm_max_iter {
        let r = residual(&f, &pt);
        let mu = complementarity(&pt) / ncomp;

        let (x_u, y_u) = unscale(&sc, &f, &pt);
        let res = problem.residuals(&x_u, &y_u);
        let obj = problem.objective(&x_u);
        let gap = complementarity(&pt) / sc.c;
        if settings.verbose {
            eprintln!(
                "ipm {iter:3}  obj {obj:.10e}  prim {:.2e}  dual {:.2e}  gap {gap:.2e} t {:.2}s",
                res.primal,
                res.dual,
                start.elapsed().as_secs_f64()
            );
        }
        if res.converged(settings.eps_abs, settings.eps_rel) && gap <= settings.eps_abs + settings.eps_rel * obj.abs() {
            status = Status::Optimal;
            iterations = iter;
            best = Some((pt.clone(), res));
            break;
        }
        let norm = pt.x.iter().chain(&pt.z).chain(&pt.y).fold(0.0f64, |m, v| m.max(v.abs()));
        if !norm.is_finite() || norm > DIVERGENCE {
            iterations = iter;
            break;
        }
        best = Some((pt.clone(), res));

        let sigma = {
            let mut d = vec![0.0; n];
            for (k, &(j, _)) in f.lower.iter().enumerate() {
                d[j] += pt.u[k] / pt.t[k];
            }
            for (k, &(j, _)) in f.upper.iter().enumerate() {
                d[j] += pt.v[k] / pt.w[k];
            }
            d
        };
        let sz: Vec<f64> = pt.s.iter().zip(&pt.z).map(|(s, z)| s / z).collect();
        let mut kkt = Kkt {
            factor: match factor.take() {
                Some(f) => f,
                None => LdlFactor::with_signs(
                    &f.kkt_matrix(&sigma, &sz, reg),
                    &f.kkt_signs(),
                    DYN_REG_EPS,
                    DYN_REG_DELTA,
                )?,
            },
            sigma,
            sz,
        };
        let step = loop {
            let mat = f.kkt_matrix(&kkt.sigma, &kkt.sz, reg);
            let fresh = kkt.factor.refactor(&mat).is_ok();
            if let Some(step) = fresh.then(|| newton_step(&f, &kkt, &pt, &r, mu, ncomp)).flatten() {
                break Some(step);
            }
            if reg >= REG_MAX {
                break None;
            }
            reg = (reg * 100.0).min(REG_MAX);
            if settings.verbose {
                eprintln!("    raising regularization to {reg:.0e}");
            }
        };
        factor = Some(kkt.factor);
        let Some((d, a)) = step else {
            iterations = iter;
            break;
        };
        if settings.verbose {
            eprintln!("    step {a:.2e} reg {reg:.0e}");
        }
        axpy(&mut pt.x, a, &d.x);
        axpy(&mut pt.y, a, &d.y);
        axpy(&mut pt.z, a, &d.z);
        axpy(&mut pt.s, a, &d.s);
        axpy(&mut pt.t, a, &d.t);
        axpy(&mut pt.u, a, &d.u);
        axpy(&mut pt.w, a, &d.w);
        axpy(&mut pt.v, a, &d.v);
    }

    let (pt, res) = best.unwrap_or_else(|| {
        let (x_u, y_u) = unscale(&sc, &f, &pt);
        let res = problem.residuals(&x_u, &y_u);
        (pt, res)
    });
    let (x, y) = unscale(&sc, &f, &pt);
    Ok(Solution {
        objective: problem.objective(&x),
        x,
        y,
        status,
        primal_res: res.primal,
        dual_res: res.dual,
        iterations,
        polished: false,
        solve_time: start.elapsed().as_secs_f64(),
    })
}
