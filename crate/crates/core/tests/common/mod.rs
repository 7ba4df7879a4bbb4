//! Brute-force references shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_distr::StandardNormal;

pub fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Calls `f` on every permutation of `0..m` (Heap's algorithm).
pub fn for_each_permutation(m: usize, mut f: impl FnMut(&[usize])) {
    let mut p: Vec<usize> = (0..m).collect();
    let mut c = vec![0usize; m];
    f(&p);
    let mut i = 0;
    while i < m {
        if c[i] < i {
            if i % 2 == 0 {
                p.swap(0, i);
            } else {
                p.swap(c[i], i);
            }
            f(&p);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Minimum of `sum_i |x_i - y_perm(i)|^2 / m` over all permutations.
pub fn brute_force_assignment(xs: &[f64], ys: &[f64], dim: usize) -> f64 {
    let m = xs.len() / dim;
    let cost: Vec<f64> = (0..m * m)
        .map(|k| sq_dist(&xs[(k / m) * dim..(k / m + 1) * dim], &ys[(k % m) * dim..(k % m + 1) * dim]))
        .collect();
    let mut best = f64::INFINITY;
    for_each_permutation(m, |p| {
        let c: f64 = p.iter().enumerate().map(|(i, &j)| cost[i * m + j]).sum();
        best = best.min(c);
    });
    best / m as f64
}

/// Minimum of the transport LP over all basic feasible solutions: every
/// spanning tree of the complete bipartite graph is tried, its flows found
/// by leaf elimination, and infeasible (negative) trees discarded.
pub fn vertex_enumeration(a: &[f64], b: &[f64], cost: &[f64]) -> f64 {
    let (m, n) = (a.len(), b.len());
    let arcs = m * n;
    let need = m + n - 1;
    let mut best = f64::INFINITY;
    let mut chosen = Vec::with_capacity(need);
    let mut uf = UnionFind::new(m + n);
    enumerate(0, arcs, need, n, &mut chosen, &mut uf, &mut |tree| {
        if let Some(c) = tree_cost(tree, a, b, cost, n) {
            best = best.min(c);
        }
    });
    best
}

fn enumerate(
    start: usize,
    arcs: usize,
    need: usize,
    n: usize,
    chosen: &mut Vec<usize>,
    uf: &mut UnionFind,
    visit: &mut impl FnMut(&[usize]),
) {
    if chosen.len() == need {
        visit(chosen);
        return;
    }
    let remaining = need - chosen.len();
    for e in start..arcs {
        if arcs - e < remaining {
            break;
        }
        let (i, j) = (e / n, e % n);
        let mark = uf.history.len();
        if uf.union(i, uf_target(j, uf, n)) {
            chosen.push(e);
            enumerate(e + 1, arcs, need, n, chosen, uf, visit);
            chosen.pop();
            uf.rollback(mark);
        }
    }
}

fn uf_target(j: usize, uf: &UnionFind, n: usize) -> usize {
    uf.parent.len() - n + j
}

fn tree_cost(tree: &[usize], a: &[f64], b: &[f64], cost: &[f64], n: usize) -> Option<f64> {
    let m = a.len();
    let nodes = m + n;
    let mut residual: Vec<f64> = a.iter().copied().chain(b.iter().map(|x| -x)).collect();
    let mut degree = vec![0usize; nodes];
    let mut alive = vec![true; tree.len()];
    for &e in tree {
        degree[e / n] += 1;
        degree[m + e % n] += 1;
    }
    let mut total = 0.0;
    for _ in 0..tree.len() {
        let (k, leaf) = tree.iter().enumerate().find_map(|(k, &e)| {
            if !alive[k] {
                return None;
            }
            let (u, v) = (e / n, m + e % n);
            if degree[u] == 1 {
                Some((k, u))
            } else if degree[v] == 1 {
                Some((k, v))
            } else {
                None
            }
        })?;
        let e = tree[k];
        let (u, v) = (e / n, m + e % n);
        // Flow from source u to target v.
        let flow = if leaf == u { residual[u] } else { -residual[v] };
        if flow < -1e-12 {
            return None;
        }
        residual[u] -= flow;
        residual[v] += flow;
        degree[u] -= 1;
        degree[v] -= 1;
        alive[k] = false;
        total += flow * cost[e];
    }
    Some(total)
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
    history: Vec<(usize, usize)>,
}

impl UnionFind {
    fn new(k: usize) -> Self {
        Self {
            parent: (0..k).collect(),
            size: vec![1; k],
            history: Vec::new(),
        }
    }

    fn find(&self, mut x: usize) -> usize {
        while self.parent[x] != x {
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        self.history.push((ra, rb));
        true
    }

    fn rollback(&mut self, mark: usize) {
        while self.history.len() > mark {
            let (ra, rb) = self.history.pop().unwrap();
            self.parent[rb] = rb;
            self.size[ra] -= self.size[rb];
        }
    }
}

pub fn gaussian_points<R: Rng>(rng: &mut R, m: usize, dim: usize, scale: f64) -> Vec<f64> {
    (0..m * dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Points on a small integer lattice, so that distances tie often.
pub fn lattice_points<R: Rng>(rng: &mut R, m: usize, dim: usize) -> Vec<f64> {
    (0..m * dim).map(|_| rng.random_range(-2..=2) as f64).collect()
}

/// Random probability vector with entries bounded away from zero.
pub fn random_weights<R: Rng>(rng: &mut R, m: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|x| x / s).collect();
    let fix: f64 = 1.0 - w.iter().sum::<f64>();
    w[0] += fix;
    w
}
