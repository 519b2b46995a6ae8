//! Banded LU with partial pivoting after reverse Cuthill–McKee reordering.

use super::sparse::SparseMatrix;
use std::collections::VecDeque;

/// Reverse Cuthill–McKee order of the symmetrised pattern; `perm[new] = old`.
pub fn rcm_order(m: &SparseMatrix) -> Vec<usize> {
    let n = m.dim();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j, _) in m.iter() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(seed, &adj, &degree);
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(start: usize, adj: &[Vec<usize>]) -> (Vec<usize>, usize) {
    let mut level = vec![usize::MAX; adj.len()];
    level[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut reached = vec![start];
    let mut depth = 0;
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if level[w] == usize::MAX {
                level[w] = level[v] + 1;
                depth = depth.max(level[w]);
                queue.push_back(w);
                reached.push(w);
            }
        }
    }
    let last: Vec<usize> = reached.into_iter().filter(|&v| level[v] == depth).collect();
    (last, depth)
}

fn pseudo_peripheral(seed: usize, adj: &[Vec<usize>], degree: &[usize]) -> usize {
    let mut v = seed;
    let (mut last, mut depth) = bfs_levels(v, adj);
    for _ in 0..8 {
        let cand = *last.iter().min_by_key(|&&w| (degree[w], w)).unwrap();
        let (l2, d2) = bfs_levels(cand, adj);
        if d2 <= depth {
            break;
        }
        v = cand;
        last = l2;
        depth = d2;
    }
    v
}

/// LU factors of P A Pᵀ stored by rows with `kl` sub- and `kl + ku` super-diagonals.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    width: usize,
    data: Vec<f64>,
    pivots: Vec<usize>,
    perm: Vec<usize>,
}

impl BandedLu {
    pub fn factor(m: &SparseMatrix) -> Result<Self, String> {
        let n = m.dim();
        let perm = rcm_order(m);
        let a = m.permuted(&perm);
        let (mut kl, mut ku) = (0usize, 0usize);
        for (i, j, _) in a.iter() {
            if i > j {
                kl = kl.max(i - j);
            } else {
                ku = ku.max(j - i);
            }
        }
        let width = 2 * kl + ku + 1;
        let mut lu = BandedLu {
            n,
            kl,
            width,
            data: vec![0.0; n * width],
            pivots: vec![0; n],
            perm,
        };
        for (i, j, v) in a.iter() {
            *lu.at(i, j) = v;
        }
        let upper = kl + ku;
        let scale = a.iter().map(|(_, _, v)| v.abs()).fold(0.0, f64::max);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.get(k, k).abs();
            for r in k + 1..=last_row {
                let v = lu.get(r, k).abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if !(best > scale * 1e-300) || !best.is_finite() {
                return Err(format!("singular matrix (zero pivot in column {k})"));
            }
            lu.pivots[k] = p;
            let last_col = (k + upper).min(n - 1);
            if p != k {
                for c in k..=last_col {
                    let tmp = lu.get(k, c);
                    *lu.at(k, c) = lu.get(p, c);
                    *lu.at(p, c) = tmp;
                }
            }
            let piv = lu.get(k, k);
            for r in k + 1..=last_row {
                let l = lu.get(r, k) / piv;
                *lu.at(r, k) = l;
                if l != 0.0 {
                    for c in k + 1..=last_col {
                        let u = lu.get(k, c);
                        *lu.at(r, c) -= l * u;
                    }
                }
            }
        }
        Ok(lu)
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.offset(i, j)]
    }

    #[inline]
    fn at(&mut self, i: usize, j: usize) -> &mut f64 {
        let o = self.offset(i, j);
        &mut self.data[o]
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for k in 0..n {
            y.swap(k, self.pivots[k]);
            let yk = y[k];
            if yk != 0.0 {
                for r in k + 1..=(k + self.kl).min(n.saturating_sub(1)) {
                    y[r] -= self.get(r, k) * yk;
                }
            }
        }
        let upper = self.width - self.kl - 1;
        for k in (0..n).rev() {
            let mut s = y[k];
            for c in k + 1..=(k + upper).min(n - 1) {
                s -= self.get(k, c) * y[c];
            }
            y[k] = s / self.get(k, k);
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}
