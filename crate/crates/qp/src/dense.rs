//! Dense Mehrotra predictor-corrector interior-point method.
//!
//! Used only as an independent cross-check of the ADMM solver on small
//! problems. All inequalities and finite bounds are collected into
//! `Gx + s = h, s ≥ 0`; each Newton step solves the reduced system
//!
//! ```text
//! [ H + GᵀWG   A_eqᵀ ] [Δx]
//! [ A_eq       0     ] [Δy]
//! ```
//!
//! with `W = Z S⁻¹` by dense LU. When the method fails to converge, a
//! phase-1 elastic LP decides whether the problem is primal infeasible.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::problem::{Problem, QpError, Solution, Status};

/// Size cap of the dense reference solver.
pub const DENSE_MAX_VARS: usize = 2000;

const MAX_ITER: usize = 200;
const TOL: f64 = 1e-10;
/// Accepted for the best iterate when `TOL` is out of numerical reach.
const LOOSE_TOL: f64 = 1e-8;
const DIVERGENCE: f64 = 1e12;

struct Ineq {
    g: DMatrix<f64>,
    h: DVector<f64>,
    /// Row of the stacked `[eq; ineq; bounds]` dual vector and its sign.
    origin: Vec<(usize, f64)>,
}

fn collect_inequalities(p: &Problem) -> Ineq {
    let n = p.n();
    let m_eq = p.b_eq.len();
    let m_in = p.b_ineq.len();
    let dense_in = p.a_ineq.to_dense();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut h = Vec::new();
    let mut origin = Vec::new();
    for (i, row) in dense_in.into_iter().enumerate() {
        if p.b_ineq[i].is_finite() {
            rows.push(row);
            h.push(p.b_ineq[i]);
            origin.push((m_eq + i, 1.0));
        }
    }
    for j in 0..n {
        if p.ub[j].is_finite() {
            let mut row = vec![0.0; n];
            row[j] = 1.0;
            rows.push(row);
            h.push(p.ub[j]);
            origin.push((m_eq + m_in + j, 1.0));
        }
        if p.lb[j].is_finite() {
            let mut row = vec![0.0; n];
            row[j] = -1.0;
            rows.push(row);
            h.push(-p.lb[j]);
            origin.push((m_eq + m_in + j, -1.0));
        }
    }
    let g = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
    Ineq {
        g,
        h: DVector::from_vec(h),
        origin,
    }
}

struct IpmResult {
    x: DVector<f64>,
    y: DVector<f64>,
    z: DVector<f64>,
    converged: bool,
    diverged: bool,
    iterations: usize,
}

/// Core IPM on `min ½xᵀHx + cᵀx  s.t.  Ax = b,  Gx ≤ h`.
fn ipm(
    hm: &DMatrix<f64>,
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    g: &DMatrix<f64>,
    h: &DVector<f64>,
) -> IpmResult {
    let n = c.len();
    let me = b.len();
    let mi = h.len();
    let reg = 1e-12;

    let solve_kkt = |w: &DVector<f64>, r1: &DVector<f64>, r2: &DVector<f64>| -> Option<(DVector<f64>, DVector<f64>)> {
        let mut k = DMatrix::<f64>::zeros(n + me, n + me);
        let mut top = hm.clone();
        let gw = DMatrix::from_fn(mi, n, |i, j| g[(i, j)] * w[i]);
        top += g.transpose() * gw;
        for j in 0..n {
            top[(j, j)] += reg;
        }
        k.view_mut((0, 0), (n, n)).copy_from(&top);
        k.view_mut((n, 0), (me, n)).copy_from(a);
        k.view_mut((0, n), (n, me)).copy_from(&a.transpose());
        for i in 0..me {
            k[(n + i, n + i)] = -reg;
        }
        let mut rhs = DVector::zeros(n + me);
        rhs.rows_mut(0, n).copy_from(r1);
        rhs.rows_mut(n, me).copy_from(r2);
        let sol = k.lu().solve(&rhs)?;
        Some((sol.rows(0, n).into_owned(), sol.rows(n, me).into_owned()))
    };

    // Starting point from the regularized equality-constrained problem.
    let ones = DVector::from_element(mi, 1.0);
    let (mut x, mut y) = solve_kkt(&ones, &(-c + g.transpose() * h), b)
        .unwrap_or((DVector::zeros(n), DVector::zeros(me)));
    let mut s = h - g * &x;
    let shift = s.iter().fold(0.0f64, |m, v| m.max(-v));
    s.iter_mut().for_each(|v| *v += shift + 1.0);
    let mut z = DVector::from_element(mi, 1.0);

    let scale_d = 1.0 + c.amax();
    let scale_e = 1.0 + b.amax();
    let scale_g = 1.0 + h.amax();
    let mut best = (f64::INFINITY, x.clone(), y.clone(), z.clone(), 0);

    for it in 0..MAX_ITER {
        let rd = hm * &x + c + a.transpose() * &y + g.transpose() * &z;
        let re = a * &x - b;
        let rg = g * &x + &s - h;
        let mu = if mi > 0 { s.dot(&z) / mi as f64 } else { 0.0 };
        let obj = 0.5 * x.dot(&(hm * &x)) + c.dot(&x);
        let merit = (rd.amax() / scale_d)
            .max(re.amax() / scale_e)
            .max(rg.amax() / scale_g)
            .max(mu / (1.0 + obj.abs()));
        if merit <= TOL {
            return IpmResult {
                x,
                y,
                z,
                converged: true,
                diverged: false,
                iterations: it,
            };
        }
        if merit < best.0 {
            best = (merit, x.clone(), y.clone(), z.clone(), it);
        }
        if x.amax() > DIVERGENCE || z.amax() > DIVERGENCE {
            return IpmResult {
                x,
                y,
                z,
                converged: false,
                diverged: true,
                iterations: it,
            };
        }
        let w = z.component_div(&s);

        // Direction for complementarity target r_c (S Δz + Z Δs = -r_c).
        type Step = (DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>);
        let direction = |rc: &DVector<f64>| -> Option<Step> {
            // Δz = S⁻¹(-r_c + Z r_g) + W G Δx
            let t = (-rc + z.component_mul(&rg)).component_div(&s);
            let r1 = -&rd - g.transpose() * &t;
            let r2 = -&re;
            let (dx, dy) = solve_kkt(&w, &r1, &r2)?;
            let dz = &t + w.component_mul(&(g * &dx));
            // From the complementarity row, accurate as `s → 0`.
            let ds = (-rc - s.component_mul(&dz)).component_div(&z);
            Some((dx, dy, dz, ds))
        };
        let step = |v: &DVector<f64>, dv: &DVector<f64>| -> f64 {
            v.iter()
                .zip(dv.iter())
                .filter(|(_, d)| **d < 0.0)
                .fold(1.0f64, |m, (a, d)| m.min(-a / d))
        };

        let rc_aff = s.component_mul(&z);
        let Some((dx_a, _, dz_a, ds_a)) = direction(&rc_aff) else {
            break;
        };
        let ap = step(&s, &ds_a);
        let ad = step(&z, &dz_a);
        let mu_aff = if mi > 0 {
            (&s + ap * &ds_a).dot(&(&z + ad * &dz_a)) / mi as f64
        } else {
            0.0
        };
        let sigma = if mu > 0.0 { (mu_aff / mu).powi(3).clamp(0.0, 1.0) } else { 0.0 };
        let rc = &rc_aff + ds_a.component_mul(&dz_a) - DVector::from_element(mi, sigma * mu);
        let Some((dx, dy, dz, ds)) = direction(&rc) else {
            break;
        };
        let _ = dx_a;
        let alpha = (0.99 * step(&s, &ds).min(step(&z, &dz))).min(1.0);
        x += alpha * &dx;
        y += alpha * &dy;
        z += alpha * &dz;
        s += alpha * &ds;
    }
    let (merit, x, y, z, iterations) = best;
    IpmResult {
        x,
        y,
        z,
        converged: merit <= LOOSE_TOL,
        diverged: false,
        iterations,
    }
}

/// Optimal value of the elastic phase-1 LP; zero iff the constraints are
/// consistent.
fn phase_one(a: &DMatrix<f64>, b: &DVector<f64>, g: &DMatrix<f64>, h: &DVector<f64>) -> f64 {
    let n = a.ncols().max(g.ncols());
    let me = b.len();
    let mi = h.len();
    // Variables: x (n), t (1), p (me), m (me).
    let nv = n + 1 + 2 * me;
    let mut c = DVector::zeros(nv);
    for j in n..nv {
        c[j] = 1.0;
    }
    let mut ae = DMatrix::zeros(me, nv);
    for i in 0..me {
        for j in 0..n {
            ae[(i, j)] = a[(i, j)];
        }
        ae[(i, n + 1 + i)] = 1.0;
        ae[(i, n + 1 + me + i)] = -1.0;
    }
    let mut gi = DMatrix::zeros(mi + 1 + 2 * me, nv);
    let mut hi = DVector::zeros(mi + 1 + 2 * me);
    for i in 0..mi {
        for j in 0..n {
            gi[(i, j)] = g[(i, j)];
        }
        gi[(i, n)] = -1.0;
        hi[i] = h[i];
    }
    for k in 0..(1 + 2 * me) {
        gi[(mi + k, n + k)] = -1.0;
    }
    let hm = DMatrix::zeros(nv, nv);
    let r = ipm(&hm, &c, &ae, b, &gi, &hi);
    c.dot(&r.x)
}

/// Dense interior-point reference solve.
pub fn solve_dense_reference(problem: &Problem) -> Result<Solution, QpError> {
    problem.validate()?;
    let n = problem.n();
    if n > DENSE_MAX_VARS {
        return Err(QpError::TooLarge {
            n,
            cap: DENSE_MAX_VARS,
        });
    }
    let start = Instant::now();
    let pd = problem.p.to_dense();
    let hm = DMatrix::from_fn(n, n, |i, j| pd[i][j]);
    let c = DVector::from_column_slice(&problem.q);
    let ad = problem.a_eq.to_dense();
    let a = DMatrix::from_fn(problem.b_eq.len(), n, |i, j| ad[i][j]);
    let b = DVector::from_column_slice(&problem.b_eq);
    let ineq = collect_inequalities(problem);

    let r = ipm(&hm, &c, &a, &b, &ineq.g, &ineq.h);
    let m_total = problem.b_eq.len() + problem.b_ineq.len() + n;
    let mut y = vec![0.0; m_total];
    y[..problem.b_eq.len()].copy_from_slice(r.y.as_slice());
    for (k, &(row, sign)) in ineq.origin.iter().enumerate() {
        y[row] += sign * r.z[k];
    }
    let x: Vec<f64> = r.x.iter().copied().collect();

    let status = if r.converged {
        Status::Optimal
    } else {
        let infeas = phase_one(&a, &b, &ineq.g, &ineq.h);
        let scale = 1.0 + b.amax().max(ineq.h.amax());
        if infeas > 1e-7 * scale {
            Status::PrimalInfeasible
        } else if r.diverged {
            Status::DualInfeasible
        } else {
            Status::MaxIter
        }
    };
    let res = problem.residuals(&x, &y);
    let objective = match status {
        Status::PrimalInfeasible => f64::INFINITY,
        Status::DualInfeasible => f64::NEG_INFINITY,
        _ => problem.objective(&x),
    };
    Ok(Solution {
        x,
        y,
        objective,
        status,
        primal_res: res.primal,
        dual_res: res.dual,
        iterations: r.iterations,
        polished: false,
        solve_time: start.elapsed().as_secs_f64(),
    })
}
