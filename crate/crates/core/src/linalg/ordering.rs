//! Bandwidth-reducing symmetric orderings.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use super::{Scalar, SparseMatrix};

/// Lower and upper bandwidth of `A` after relabelling rows and columns by
/// `perm` (`perm[new] = old`).
pub fn bandwidth<T: Scalar>(a: &SparseMatrix<T>, perm: &[usize]) -> (usize, usize) {
    let inv = invert(perm);
    let (mut kl, mut ku) = (0usize, 0usize);
    for r in 0..a.dim() {
        let nr = inv[r];
        for (c, _) in a.row(r) {
            let nc = inv[c];
            if nr > nc {
                kl = kl.max(nr - nc);
            } else {
                ku = ku.max(nc - nr);
            }
        }
    }
    (kl, ku)
}

pub fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    inv
}

/// Reverse Cuthill–McKee on the symmetrized pattern of `A`.
pub fn reverse_cuthill_mckee<T: Scalar>(a: &SparseMatrix<T>) -> Vec<usize> {
    let n = a.dim();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for r in 0..n {
        for (c, _) in a.row(r) {
            if c != r {
                adj[r].push(c);
                adj[c].push(r);
            }
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();

    let mut order = Vec::with_capacity(n);
    let mut visited = vec![false; n];
    let mut level = vec![usize::MAX; n];
    while order.len() < n {
        let seed = (0..n)
            .filter(|&v| !visited[v])
            .min_by_key(|&v| degree[v])
            .unwrap();
        let start = peripheral_node(seed, &adj, &degree, &mut level);
        let mut queue = VecDeque::new();
        queue.push_back(start);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            next.sort_by_key(|&u| (degree[u], u));
            for u in next {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

// George–Liu pseudo-peripheral node search.
fn peripheral_node(seed: usize, adj: &[Vec<usize>], degree: &[usize], level: &mut [usize]) -> usize {
    let mut root = seed;
    let mut ecc = bfs_levels(root, adj, level).0;
    for _ in 0..8 {
        let (e, last) = bfs_levels(root, adj, level);
        ecc = ecc.max(e);
        let candidate = last.into_iter().min_by_key(|&v| (degree[v], v)).unwrap();
        let (e2, _) = bfs_levels(candidate, adj, level);
        if e2 > ecc {
            root = candidate;
            ecc = e2;
        } else {
            break;
        }
    }
    root
}

fn bfs_levels(root: usize, adj: &[Vec<usize>], level: &mut [usize]) -> (usize, Vec<usize>) {
    let mut touched = vec![root];
    level[root] = 0;
    let mut queue = VecDeque::new();
    queue.push_back(root);
    let mut depth = 0;
    while let Some(v) = queue.pop_front() {
        depth = depth.max(level[v]);
        for &u in &adj[v] {
            if level[u] == usize::MAX {
                level[u] = level[v] + 1;
                touched.push(u);
                queue.push_back(u);
            }
        }
    }
    let last = touched.iter().copied().filter(|&v| level[v] == depth).collect();
    for v in touched {
        level[v] = usize::MAX;
    }
    (depth, last)
}
