//! Primal network simplex for the balanced transportation problem.
//!
//! Follows the spanning-tree data layout of LEMON's `NetworkSimplex`
//! (thread/successor lists, block-search pivoting, strongly feasible bases)
//! specialised to uncapacitated bipartite graphs with `f64` supplies, in the
//! spirit of the EMD solver shipped with POT.

use crate::error::{LandauError, Result};

const STATE_TREE: i8 = 0;
const STATE_LOWER: i8 = 1;
const DIR_UP: i8 = 1;
const DIR_DOWN: i8 = -1;
const INVALID: usize = usize::MAX;

#[derive(Debug, Clone)]
pub(crate) struct FlowSolution {
    /// `(source, target, flow)` with `flow > 0`.
    pub flows: Vec<(usize, usize, f64)>,
    /// Dual potentials `f_i + g_j <= c_ij`, tight on the support.
    pub source_potential: Vec<f64>,
    pub target_potential: Vec<f64>,
}

struct Simplex {
    node_num: usize,
    arc_num: usize,
    m: usize,
    n: usize,

    source: Vec<u32>,
    target: Vec<u32>,
    cost: Vec<f64>,
    flow: Vec<f64>,
    state: Vec<i8>,
    pi: Vec<f64>,

    parent: Vec<usize>,
    pred: Vec<usize>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    pred_dir: Vec<i8>,
    dirty_revs: Vec<usize>,

    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: f64,

    next_arc: usize,
    block_size: usize,
    eps: f64,
}

impl Simplex {
    fn new(supply: &[f64], demand: &[f64], cost: Vec<f64>) -> Self {
        let (m, n) = (supply.len(), demand.len());
        let node_num = m + n;
        let arc_num = m * n;
        let all_arc = arc_num + node_num;
        let all_node = node_num + 1;
        let root = node_num;

        let mut source = Vec::with_capacity(all_arc);
        let mut target = Vec::with_capacity(all_arc);
        for i in 0..m {
            for j in 0..n {
                source.push(i as u32);
                target.push((m + j) as u32);
            }
        }
        source.resize(all_arc, 0);
        target.resize(all_arc, 0);

        let max_cost = cost.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
        let art_cost = (max_cost + 1.0) * node_num as f64;
        let mut cost = cost;
        cost.resize(all_arc, 0.0);

        let mut s = Simplex {
            node_num,
            arc_num,
            m,
            n,
            source,
            target,
            cost,
            flow: vec![0.0; all_arc],
            state: vec![STATE_LOWER; all_arc],
            pi: vec![0.0; all_node],
            parent: vec![INVALID; all_node],
            pred: vec![INVALID; all_node],
            thread: vec![0; all_node],
            rev_thread: vec![0; all_node],
            succ_num: vec![0; all_node],
            last_succ: vec![0; all_node],
            pred_dir: vec![DIR_UP; all_node],
            dirty_revs: Vec::new(),
            in_arc: 0,
            join: 0,
            u_in: 0,
            v_in: 0,
            u_out: 0,
            delta: 0.0,
            next_arc: 0,
            block_size: ((arc_num as f64).sqrt().ceil() as usize).max(10),
            eps: (64.0 * f64::EPSILON * art_cost).max(1e-14),
        };

        s.pi[root] = 0.0;
        s.parent[root] = INVALID;
        s.pred[root] = INVALID;
        s.thread[root] = 0;
        s.rev_thread[0] = root;
        s.succ_num[root] = all_node;
        s.last_succ[root] = root - 1;

        for u in 0..node_num {
            let e = arc_num + u;
            let sup = if u < m { supply[u] } else { -demand[u - m] };
            s.parent[u] = root;
            s.pred[u] = e;
            s.thread[u] = u + 1;
            s.rev_thread[u + 1] = u;
            s.succ_num[u] = 1;
            s.last_succ[u] = u;
            s.state[e] = STATE_TREE;
            if sup >= 0.0 {
                s.pred_dir[u] = DIR_UP;
                s.pi[u] = 0.0;
                s.source[e] = u as u32;
                s.target[e] = root as u32;
                s.flow[e] = sup;
                s.cost[e] = 0.0;
            } else {
                s.pred_dir[u] = DIR_DOWN;
                s.pi[u] = art_cost;
                s.source[e] = root as u32;
                s.target[e] = u as u32;
                s.flow[e] = -sup;
                s.cost[e] = art_cost;
            }
        }
        s
    }

    #[inline]
    fn reduced(&self, e: usize) -> f64 {
        f64::from(self.state[e])
            * (self.cost[e] + self.pi[self.source[e] as usize] - self.pi[self.target[e] as usize])
    }

    fn find_entering_arc(&mut self) -> bool {
        let total = self.arc_num;
        let mut min = 0.0;
        let mut min_arc = INVALID;
        let mut cnt = self.block_size;
        let mut e = self.next_arc;
        for _ in 0..total {
            let c = self.reduced(e);
            if c < min {
                min = c;
                min_arc = e;
            }
            e += 1;
            if e == total {
                e = 0;
            }
            cnt -= 1;
            if cnt == 0 {
                if min < -self.eps {
                    self.in_arc = min_arc;
                    self.next_arc = e;
                    return true;
                }
                cnt = self.block_size;
            }
        }
        if min < -self.eps {
            self.in_arc = min_arc;
            self.next_arc = e;
            return true;
        }
        false
    }

    fn find_join_node(&mut self) {
        let mut u = self.source[self.in_arc] as usize;
        let mut v = self.target[self.in_arc] as usize;
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        self.join = u;
    }

    /// Returns false when the cycle has no bottleneck (unbounded problem).
    fn find_leaving_arc(&mut self) -> bool {
        let (first, second) = if self.state[self.in_arc] == STATE_LOWER {
            (self.source[self.in_arc] as usize, self.target[self.in_arc] as usize)
        } else {
            (self.target[self.in_arc] as usize, self.source[self.in_arc] as usize)
        };
        self.delta = f64::INFINITY;
        let mut result = 0;
        let mut u = first;
        while u != self.join {
            let e = self.pred[u];
            let d = if self.pred_dir[u] == DIR_DOWN {
                f64::INFINITY
            } else {
                self.flow[e]
            };
            if d < self.delta {
                self.delta = d;
                self.u_out = u;
                result = 1;
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != self.join {
            let e = self.pred[u];
            let d = if self.pred_dir[u] == DIR_UP {
                f64::INFINITY
            } else {
                self.flow[e]
            };
            if d <= self.delta {
                self.delta = d;
                self.u_out = u;
                result = 2;
            }
            u = self.parent[u];
        }
        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        result != 0 && self.delta.is_finite()
    }

    fn change_flow(&mut self) {
        if self.delta > 0.0 {
            let val = f64::from(self.state[self.in_arc]) * self.delta;
            self.flow[self.in_arc] += val;
            let mut u = self.source[self.in_arc] as usize;
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] -= f64::from(self.pred_dir[u]) * val;
                u = self.parent[u];
            }
            let mut u = self.target[self.in_arc] as usize;
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] += f64::from(self.pred_dir[u]) * val;
                u = self.parent[u];
            }
        }
        self.state[self.in_arc] = STATE_TREE;
        let out = self.pred[self.u_out];
        // Uncapacitated: the leaving arc always drops to its lower bound.
        self.flow[out] = 0.0;
        self.state[out] = STATE_LOWER;
    }

    fn update_tree_structure(&mut self) {
        let u_in = self.u_in;
        let v_in = self.v_in;
        let u_out = self.u_out;
        let join = self.join;
        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = if u_in == self.source[self.in_arc] as usize {
                DIR_UP
            } else {
                DIR_DOWN
            };
            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue = if old_rev_thread == v_in {
                self.thread[old_last_succ]
            } else {
                self.thread[v_in]
            };

            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty_revs.clear();
            self.dirty_revs.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty_revs.push(last);

                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;

                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;

                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;

            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }

            for k in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[k];
                let t = self.thread[u];
                self.rev_thread[t] = u;
            }

            let mut tmp_sc = 0usize;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u];
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                tmp_sc = tmp_sc + self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = if u_in == self.source[self.in_arc] as usize {
                DIR_UP
            } else {
                DIR_DOWN
            };
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] == v_in { join } else { INVALID };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != INVALID && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }

        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }

        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }

    fn update_potential(&mut self) {
        let u_in = self.u_in;
        let sigma = self.pi[self.v_in] - self.pi[u_in] - f64::from(self.pred_dir[u_in]) * self.cost[self.in_arc];
        let end = self.thread[self.last_succ[u_in]];
        let mut u = u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }

    fn run(&mut self, max_pivots: u64) -> Result<()> {
        let mut pivots = 0u64;
        while self.find_entering_arc() {
            self.find_join_node();
            if !self.find_leaving_arc() {
                return Err(LandauError::Solver("unbounded transport problem".into()));
            }
            self.change_flow();
            self.update_tree_structure();
            self.update_potential();
            pivots += 1;
            if pivots > max_pivots {
                return Err(LandauError::Solver(format!(
                    "no convergence after {max_pivots} pivots"
                )));
            }
        }
        Ok(())
    }
}

/// Solves `min sum c_ij x_ij` subject to row sums `supply`, column sums
/// `demand`, `x >= 0`. `cost` is row-major `m x n`. The totals of `supply`
/// and `demand` must agree up to rounding.
pub(crate) fn solve(supply: &[f64], demand: &[f64], cost: Vec<f64>) -> Result<FlowSolution> {
    let (m, n) = (supply.len(), demand.len());
    if m == 0 || n == 0 {
        return Err(LandauError::Solver("empty marginal".into()));
    }
    debug_assert_eq!(cost.len(), m * n);
    let total: f64 = supply.iter().sum();
    let mut sx = Simplex::new(supply, demand, cost);
    let max_pivots = 50 * (sx.arc_num as u64 + 1000) + 1_000_000;
    sx.run(max_pivots)?;

    let artificial: f64 = (sx.arc_num..sx.arc_num + sx.node_num)
        .map(|e| sx.flow[e])
        .sum();
    if artificial > 1e-9 * total.max(1.0) {
        return Err(LandauError::Solver(format!(
            "infeasible: {artificial:e} mass left on artificial arcs"
        )));
    }

    let floor = 1e-15 * total.max(f64::MIN_POSITIVE);
    let mut flows = Vec::new();
    for e in 0..sx.arc_num {
        let f = sx.flow[e];
        if f > floor {
            let i = sx.source[e] as usize;
            let j = sx.target[e] as usize - sx.m;
            flows.push((i, j, f));
        }
    }
    let source_potential = (0..sx.m).map(|i| -sx.pi[i]).collect();
    let target_potential = (0..sx.n).map(|j| sx.pi[sx.m + j]).collect();
    Ok(FlowSolution {
        flows,
        source_potential,
        target_potential,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn forced_split() {
        let sol = solve(&[1.0], &[0.5, 0.5], vec![1.0, 1.0]).unwrap();
        let cost: f64 = sol.flows.iter().map(|f| f.2).sum();
        assert_abs_diff_eq!(cost, 1.0, epsilon = 1e-14);
        assert_eq!(sol.flows.len(), 2);
    }

    #[test]
    fn small_textbook_instance() {
        let cost = vec![2.0, 3.0, 1.0, 5.0, 4.0, 8.0, 5.0, 6.0, 8.0];
        let sol = solve(&[20.0, 30.0, 25.0], &[10.0, 25.0, 40.0], cost.clone()).unwrap();
        let mut row = [0.0; 3];
        let mut col = [0.0; 3];
        for &(i, j, f) in &sol.flows {
            row[i] += f;
            col[j] += f;
        }
        assert_eq!(row, [20.0, 30.0, 25.0]);
        assert_eq!(col, [10.0, 25.0, 40.0]);
        // Dual feasibility plus a zero duality gap certify optimality.
        for i in 0..3 {
            for j in 0..3 {
                assert!(sol.source_potential[i] + sol.target_potential[j] <= cost[i * 3 + j] + 1e-9);
            }
        }
        let dual: f64 = [20.0, 30.0, 25.0]
            .iter()
            .zip(&sol.source_potential)
            .map(|(a, f)| a * f)
            .sum::<f64>()
            + [10.0, 25.0, 40.0]
                .iter()
                .zip(&sol.target_potential)
                .map(|(b, g)| b * g)
                .sum::<f64>();
        let primal: f64 = sol.flows.iter().map(|&(i, j, f)| f * cost[i * 3 + j]).sum();
        assert_abs_diff_eq!(dual, primal, epsilon = 1e-9);
        assert!(sol.flows.len() <= 5);
    }
}
