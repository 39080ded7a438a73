use ibc_qp::{solve, solve_admm, solve_dense_reference, solve_ipm, CscMatrix, Method, Problem, Settings, Status};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sparse(m: usize, n: usize, density: f64, rng: &mut ChaCha8Rng) -> CscMatrix {
    let (mut r, mut c, mut v) = (vec![], vec![], vec![]);
    for i in 0..m {
        for j in 0..n {
            if rng.random::<f64>() < density {
                r.push(i);
                c.push(j);
                v.push(rng.random_range(-3.0..3.0));
            }
        }
    }
    CscMatrix::from_triplets(m, n, &r, &c, &v)
}

/// Feasible random QP with box bounds. `rank` columns of the factor give a
/// semidefinite Hessian; zero gives an LP.
fn random_problem(seed: u64, n: usize, rank: usize, me: usize, mi: usize) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = sparse(rank, n, 0.4, &mut rng).to_dense();
    let (mut pr, mut pc, mut pv) = (vec![], vec![], vec![]);
    for i in 0..n {
        for j in 0..n {
            let v: f64 = (0..rank).map(|k| m[k][i] * m[k][j]).sum();
            if v != 0.0 {
                pr.push(i);
                pc.push(j);
                pv.push(v);
            }
        }
    }
    let a_eq = sparse(me, n, 0.4, &mut rng);
    let a_ineq = sparse(mi, n, 0.4, &mut rng);
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b_eq = a_eq.mul(&x0);
    let b_ineq = a_ineq.mul(&x0).iter().map(|v| v + rng.random_range(0.0..1.0)).collect();
    Problem {
        p: CscMatrix::from_triplets(n, n, &pr, &pc, &pv),
        q: (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
        a_eq,
        b_eq,
        a_ineq,
        b_ineq,
        lb: vec![-2.0; n],
        ub: vec![2.0; n],
    }
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

#[test]
fn interior_point_matches_dense_reference() {
    for seed in 0..20 {
        let rank = [0, 5, 30][seed as usize % 3];
        let prob = random_problem(seed, 30, rank, 5, 20);
        let d = solve_dense_reference(&prob).unwrap();
        let s = solve_ipm(&prob, &Settings::default()).unwrap();
        assert_eq!(d.status, Status::Optimal, "dense, seed {seed}");
        assert_eq!(s.status, Status::Optimal, "ipm, seed {seed}");
        assert!(rel_gap(s.objective, d.objective) < 1e-7, "seed {seed}: {} vs {}", s.objective, d.objective);
        assert!(prob.max_violation(&s.x) < 1e-6, "seed {seed}");
    }
}

#[test]
fn admm_matches_dense_reference() {
    for seed in 0..10 {
        let prob = random_problem(seed, 30, 30, 5, 20);
        let d = solve_dense_reference(&prob).unwrap();
        let settings = Settings {
            method: Method::Admm,
            ..Settings::default()
        };
        let a = solve_admm(&prob, &settings).unwrap();
        assert_eq!(a.status, Status::Optimal, "seed {seed}");
        assert!(rel_gap(a.objective, d.objective) < 1e-6, "seed {seed}: {} vs {}", a.objective, d.objective);
    }
}

#[test]
fn dispatch_reports_infeasibility() {
    // x ≤ 0 as a row, x ≥ 1 as a bound.
    let p = Problem {
        p: CscMatrix::from_triplets(1, 1, &[0], &[0], &[1.0]),
        q: vec![0.0],
        a_eq: CscMatrix::zeros(0, 1),
        b_eq: vec![],
        a_ineq: CscMatrix::from_triplets(1, 1, &[0], &[0], &[1.0]),
        b_ineq: vec![0.0],
        lb: vec![1.0],
        ub: vec![f64::INFINITY],
    };
    let sol = solve(&p, &Settings::default()).unwrap();
    assert_eq!(sol.status, Status::PrimalInfeasible);
}

#[test]
fn solves_are_bitwise_repeatable() {
    let prob = random_problem(7, 40, 10, 6, 25);
    for method in [Method::InteriorPoint, Method::Admm] {
        let settings = Settings {
            method,
            ..Settings::default()
        };
        let a = solve(&prob, &settings).unwrap();
        let b = solve(&prob, &settings).unwrap();
        let bits = |x: &[f64]| x.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.x), bits(&b.x), "{method}");
        assert_eq!(bits(&a.y), bits(&b.y), "{method}");
    }
}
