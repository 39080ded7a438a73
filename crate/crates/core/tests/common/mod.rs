#![allow(dead_code)]

use ibc_core::scenario::{builtin, Breakpoint, Direction, PerSection, RampDemand, Scenario};
use ibc_core::SharingPlan;
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

pub fn bp(v: &[(f64, f64)]) -> Vec<Breakpoint> {
    v.iter().map(|&(t, q)| Breakpoint::new(t, q)).collect()
}

/// One or two 0.5 km sections without ramps, 6 model steps per control
/// step and piecewise-linear entry demands.
pub fn tiny(n: usize, k_c: usize, da: &[(f64, f64)], db: &[(f64, f64)], drop: bool) -> Scenario {
    builtin("uncongested")
        .unwrap()
        .modified(|c| {
            c.label = "tiny".into();
            c.highway.n = n;
            c.highway.lengths = PerSection::Uniform(0.5);
            c.highway.exit_rate_a = PerSection::Uniform(0.0);
            c.highway.exit_rate_b = PerSection::Uniform(0.0);
            c.highway.onramps_a = vec![];
            c.highway.onramps_b = vec![];
            c.control.k = 6 * k_c;
            c.control.capacity_drop = drop;
            c.demands.ramps = vec![];
            c.demands.entry_a = bp(da);
            c.demands.entry_b = bp(db);
            c.initial.rho_a = PerSection::Uniform(10.0);
            c.initial.rho_b = PerSection::Uniform(10.0);
        })
        .expect("tiny scenario is valid")
}

pub fn zero_demand() -> Scenario {
    builtin("uncongested")
        .unwrap()
        .modified(|c| {
            c.label = "zero-demand".into();
            c.highway.onramps_a = vec![];
            c.highway.onramps_b = vec![];
            c.demands.ramps = vec![];
            c.demands.entry_a = bp(&[(0.0, 0.0)]);
            c.demands.entry_b = bp(&[(0.0, 0.0)]);
        })
        .unwrap()
}

pub fn random_plan(s: &Scenario, rng: &mut ChaCha8Rng) -> SharingPlan {
    let c = &s.control;
    let eps = Array2::from_shape_fn((s.n(), c.k_c), |(i, _)| rng.random_range(c.eps_min[i]..=c.eps_max[i]));
    SharingPlan::from_eps(eps, &c.eps_init)
}

/// Random stretch with random lengths, exits, one on-ramp per direction,
/// demands and initial densities.
pub fn random_scenario(rng: &mut ChaCha8Rng, max_n: usize, max_kc: usize) -> Scenario {
    let n = rng.random_range(1..=max_n);
    let k_c = rng.random_range(1..=max_kc);
    let spc = if rng.random_bool(0.5) { 3 } else { 6 };
    let horizon_s = (k_c * spc) as f64 * 10.0;
    let profile = |rng: &mut ChaCha8Rng, hi: f64| -> Vec<Breakpoint> {
        let mut t = 0.0;
        let mut v = Vec::new();
        while t <= horizon_s {
            v.push(Breakpoint::new(t, rng.random_range(0.0..hi)));
            t += rng.random_range(60.0..600.0);
        }
        v
    };
    let entry_a = profile(rng, 9000.0);
    let entry_b = profile(rng, 9000.0);
    let ramp_a = rng.random_range(1..=n);
    let ramp_b = rng.random_range(1..=n);
    let ramp_profile_a = profile(rng, 1500.0);
    let ramp_profile_b = profile(rng, 1500.0);
    let list = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| PerSection::List((0..n).map(|_| rng.random_range(lo..hi)).collect());
    let lengths = list(rng, 0.3, 0.8);
    let exit_a = list(rng, 0.0, 0.2);
    let exit_b = list(rng, 0.0, 0.2);
    let rho_a = list(rng, 0.0, 250.0);
    let rho_b = list(rng, 0.0, 250.0);
    let drop = rng.random_bool(0.5);
    builtin("uncongested")
        .unwrap()
        .modified(|c| {
            c.label = "random".into();
            c.highway.n = n;
            c.highway.lengths = lengths;
            c.highway.exit_rate_a = exit_a;
            c.highway.exit_rate_b = exit_b;
            c.highway.onramps_a = vec![ramp_a];
            c.highway.onramps_b = vec![ramp_b];
            c.control.t_c_s = spc as f64 * 10.0;
            c.control.k = k_c * spc;
            c.control.capacity_drop = drop;
            c.demands.entry_a = entry_a;
            c.demands.entry_b = entry_b;
            c.demands.ramps = vec![
                RampDemand {
                    direction: Direction::A,
                    section: ramp_a,
                    profile: ramp_profile_a,
                },
                RampDemand {
                    direction: Direction::B,
                    section: ramp_b,
                    profile: ramp_profile_b,
                },
            ];
            c.initial.rho_a = rho_a;
            c.initial.rho_b = rho_b;
        })
        .expect("random scenario is valid")
}
