mod common;

use common::tiny;
use ibc_core::analysis::{optimize, RunOptions};
use ibc_core::error::Error;
use ibc_core::oracle::{grid_oracle, grid_oracle_capped};

#[test]
fn symmetric_single_section_shares_evenly() {
    let s = tiny(1, 1, &[(0.0, 3000.0)], &[(0.0, 3000.0)], false);
    let grid = grid_oracle(&s, 0.01).unwrap();
    assert_eq!(grid.points, 69);
    assert!((grid.eps[[0, 0]] - 0.5).abs() <= 0.01 + 1e-12, "eps {}", grid.eps[[0, 0]]);

    let run = optimize(&s, &RunOptions::default()).unwrap();
    assert!((run.plan().eps[[0, 0]] - 0.5).abs() < 1e-3);
    assert!(run.objective() <= grid.objective + 1e-6);
}

#[test]
fn throttled_candidates_are_skipped() {
    // Direction a's first-step capacity is min(eps, 0.5) of the total, so
    // small shares queue its entry demand.
    let s = tiny(1, 2, &[(0.0, 0.45 * 12000.0)], &[(0.0, 0.1 * 12000.0)], false);
    let grid = grid_oracle(&s, 0.02).unwrap();
    assert!(grid.skipped > 0 && grid.skipped < grid.points);
    // Half the capacity carries the heavier direction, and the applied
    // factors are largest at an even split.
    assert_eq!(grid.minimizers.len(), 1);
    assert!((grid.eps[[0, 0]] - 0.5).abs() < 1e-9 && (grid.eps[[0, 1]] - 0.5).abs() < 1e-9);
}

#[test]
fn qp_never_does_worse_than_the_grid_under_asymmetric_demand() {
    let s = tiny(1, 2, &[(0.0, 0.7 * 12000.0)], &[(0.0, 0.1 * 12000.0)], false).modified(|c| {
        c.control.w2 = 0.0;
        c.control.w3 = 0.0;
        c.control.w4 = 0.0;
    });
    let s = s.unwrap();
    let grid = grid_oracle(&s, 0.02).unwrap();
    // The heavier direction gets the larger share.
    assert!(grid.minimizers.iter().all(|m| m[[0, 1]] > 0.5));
    let run = optimize(&s, &RunOptions::default()).unwrap();
    assert!(run.objective() <= grid.objective + 1e-6, "qp {} grid {}", run.objective(), grid.objective);
    assert!(run.plan().eps[[0, 1]] > 0.5);
}

#[test]
fn oversized_instances_are_rejected() {
    let big = tiny(3, 1, &[(0.0, 1000.0)], &[(0.0, 1000.0)], false);
    assert!(matches!(grid_oracle(&big, 0.1), Err(Error::Oracle(_))));
    let long = tiny(1, 4, &[(0.0, 1000.0)], &[(0.0, 1000.0)], false);
    assert!(matches!(grid_oracle(&long, 0.1), Err(Error::Oracle(_))));
    let dense = tiny(2, 3, &[(0.0, 1000.0)], &[(0.0, 1000.0)], false);
    assert!(matches!(grid_oracle_capped(&dense, 0.01, 1000), Err(Error::Oracle(_))));
    let s = tiny(1, 1, &[(0.0, 1000.0)], &[(0.0, 1000.0)], false);
    assert!(matches!(grid_oracle(&s, 0.0), Err(Error::Oracle(_))));
}
