//! Fill-reducing ordering for sparse symmetric factorization.

use std::collections::BTreeSet;

use crate::csc::CscMatrix;

/// Minimum-degree ordering of the symmetric pattern whose upper triangle is
/// `a`. Works on the explicit elimination graph; ties are broken by the
/// lowest node index, so the result is deterministic.
///
/// Returns `perm` with `perm[new] = old`.
pub fn minimum_degree(a: &CscMatrix) -> Vec<usize> {
    let n = a.ncols;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j, _) in a.triplets() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }

    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|v| (adj[v].len(), v)).collect();
    let mut perm = Vec::with_capacity(n);
    let mut merged = Vec::new();
    while let Some((_, v)) = queue.pop_first() {
        perm.push(v);
        let nbrs = std::mem::take(&mut adj[v]);
        for &u in &nbrs {
            let old = &adj[u];
            let old_deg = old.len();
            merged.clear();
            merged.reserve(old.len() + nbrs.len());
            let (mut p, mut q) = (0, 0);
            while p < old.len() || q < nbrs.len() {
                let next = match (old.get(p), nbrs.get(q)) {
                    (Some(&x), Some(&y)) if x == y => {
                        p += 1;
                        q += 1;
                        x
                    }
                    (Some(&x), Some(&y)) if x < y => {
                        p += 1;
                        x
                    }
                    (Some(_), Some(&y)) => {
                        q += 1;
                        y
                    }
                    (Some(&x), None) => {
                        p += 1;
                        x
                    }
                    (None, Some(&y)) => {
                        q += 1;
                        y
                    }
                    (None, None) => unreachable!(),
                };
                if next != v && next != u {
                    merged.push(next);
                }
            }
            std::mem::swap(&mut adj[u], &mut merged);
            let new_deg = adj[u].len();
            if new_deg != old_deg {
                queue.remove(&(old_deg, u));
                queue.insert((new_deg, u));
            }
        }
    }
    perm
}

/// `iperm[old] = new` from `perm[new] = old`.
pub fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    inv
}
