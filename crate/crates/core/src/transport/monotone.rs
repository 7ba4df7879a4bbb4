//! Cyclical monotonicity of a plan's support under quadratic cost.
//!
//! A cycle through support pairs `(x_a, y_a)` is improving when
//! `sum_l <y_{a_l}, x_{a_l} - x_{a_{l+1}}> < 0`, i.e. when shifting each
//! `y_{a_l}` onto the next source lowers the cost. Optimal plans have none.

use super::{EmpiricalMeasure, TransportPlan};
use crate::error::{LandauError, Result};

/// How a monotone verdict was reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckMethod {
    /// Negative-cycle search over the whole support graph; complete.
    NegativeCycle,
    /// Enumeration of all cycles up to a length; complete only when the
    /// support is no longer than that length.
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MonotonicityVerdict {
    Monotone { method: CheckMethod },
    /// `cycle` lists the support pairs `(src, dst)` in cycle order and `gain`
    /// is the (negative) cycle sum.
    Violated { cycle: Vec<(usize, usize)>, gain: f64 },
    /// No violation found among cycles of length `<= max_len`, but longer
    /// cycles were not examined.
    Undecided { max_len: usize, support: usize },
}

impl MonotonicityVerdict {
    pub fn is_monotone(&self) -> bool {
        matches!(self, Self::Monotone { .. })
    }

    pub fn is_violated(&self) -> bool {
        matches!(self, Self::Violated { .. })
    }
}

#[derive(Debug, Clone)]
pub struct MonotonicityOptions {
    /// Longest cycle enumerated when the complete search is out of reach.
    pub max_cycle_len: usize,
    /// Largest support handled by the complete search (`O(s^3)` worst case).
    pub exact_support_cap: usize,
    /// Budget of cycles the enumeration may visit.
    pub enumeration_budget: u64,
    /// Cycle sums above `-tol * scale` count as non-negative, where `scale`
    /// is the largest edge weight magnitude.
    pub tol: f64,
}

impl Default for MonotonicityOptions {
    fn default() -> Self {
        Self {
            max_cycle_len: 4,
            exact_support_cap: 1024,
            enumeration_budget: 200_000_000,
            tol: 1e-11,
        }
    }
}

pub fn is_cyclically_monotone(
    plan: &TransportPlan,
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
) -> Result<MonotonicityVerdict> {
    check_with(plan, mu, nu, &MonotonicityOptions::default())
}

pub fn check_with(
    plan: &TransportPlan,
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    opts: &MonotonicityOptions,
) -> Result<MonotonicityVerdict> {
    let graph = SupportGraph::new(plan, mu, nu)?;
    let s = graph.len();
    if s <= 1 {
        return Ok(MonotonicityVerdict::Monotone {
            method: CheckMethod::NegativeCycle,
        });
    }
    let tol = opts.tol * graph.scale();
    if s <= opts.exact_support_cap {
        return Ok(match graph.negative_cycle(tol) {
            Some(cycle) => graph.violation(cycle),
            None => MonotonicityVerdict::Monotone {
                method: CheckMethod::NegativeCycle,
            },
        });
    }
    // Longest length whose enumeration fits the budget.
    let mut len = 1;
    let mut count: u64 = s as u64;
    while len < opts.max_cycle_len {
        let next = count.saturating_mul((s - len) as u64);
        if next > opts.enumeration_budget {
            break;
        }
        count = next;
        len += 1;
    }
    if len < 2 {
        return Ok(MonotonicityVerdict::Undecided { max_len: 1, support: s });
    }
    Ok(match graph.short_cycle(len, tol) {
        Some(cycle) => graph.violation(cycle),
        None if len >= s => MonotonicityVerdict::Monotone {
            method: CheckMethod::Exhaustive,
        },
        None => MonotonicityVerdict::Undecided { max_len: len, support: s },
    })
}

/// Enumerates every cycle of at most `max_len` distinct support pairs and
/// returns the first improving one.
pub fn find_short_violation(
    plan: &TransportPlan,
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    max_len: usize,
    tol: f64,
) -> Result<Option<(Vec<(usize, usize)>, f64)>> {
    let graph = SupportGraph::new(plan, mu, nu)?;
    let tol = tol * graph.scale();
    Ok(graph.short_cycle(max_len, tol).map(|c| {
        let gain = graph.cycle_sum(&c);
        (c.iter().map(|&a| graph.pairs[a]).collect(), gain)
    }))
}

struct SupportGraph {
    pairs: Vec<(usize, usize)>,
    /// `w[a * s + b] = 2 <y_a, x_a - x_b>`.
    w: Vec<f64>,
}

impl SupportGraph {
    fn new(plan: &TransportPlan, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<Self> {
        if mu.dim() != nu.dim() {
            return Err(LandauError::Measure("measures live in different dimensions".into()));
        }
        let mut pairs = Vec::with_capacity(plan.pairs.len());
        for t in &plan.pairs {
            if t.src >= mu.len() || t.dst >= nu.len() {
                return Err(LandauError::Measure(format!(
                    "plan pair ({}, {}) out of range",
                    t.src, t.dst
                )));
            }
            if t.mass > 0.0 {
                pairs.push((t.src, t.dst));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        let s = pairs.len();
        let mut w = vec![0.0; s * s];
        for (a, &(ia, ja)) in pairs.iter().enumerate() {
            let xa = mu.point(ia);
            let ya = nu.point(ja);
            for (b, &(ib, _)) in pairs.iter().enumerate() {
                let xb = mu.point(ib);
                w[a * s + b] = 2.0 * ya.iter().zip(xa.iter().zip(xb)).map(|(y, (p, q))| y * (p - q)).sum::<f64>();
            }
        }
        Ok(Self { pairs, w })
    }

    fn len(&self) -> usize {
        self.pairs.len()
    }

    fn scale(&self) -> f64 {
        self.w.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE)
    }

    fn cycle_sum(&self, cycle: &[usize]) -> f64 {
        let s = self.len();
        (0..cycle.len())
            .map(|l| self.w[cycle[l] * s + cycle[(l + 1) % cycle.len()]])
            .sum()
    }

    fn violation(&self, cycle: Vec<usize>) -> MonotonicityVerdict {
        MonotonicityVerdict::Violated {
            gain: self.cycle_sum(&cycle),
            cycle: cycle.iter().map(|&a| self.pairs[a]).collect(),
        }
    }

    /// Bellman-Ford from a virtual source joined to every node by a zero arc.
    fn negative_cycle(&self, tol: f64) -> Option<Vec<usize>> {
        let s = self.len();
        let mut dist = vec![0.0f64; s];
        let mut pred = vec![usize::MAX; s];
        for round in 0..=s {
            let mut last = None;
            for a in 0..s {
                let da = dist[a];
                let row = &self.w[a * s..(a + 1) * s];
                for b in 0..s {
                    if a != b && da + row[b] < dist[b] - tol {
                        dist[b] = da + row[b];
                        pred[b] = a;
                        last = Some(b);
                    }
                }
            }
            let last = last?;
            if round == s {
                return self.extract_cycle(&pred, last, tol);
            }
            if let Some(c) = self.pred_cycle(&pred, last) {
                if self.cycle_sum(&c) < -tol {
                    return Some(c);
                }
            }
        }
        None
    }

    /// Cycle in the predecessor graph reachable backwards from `start`.
    fn pred_cycle(&self, pred: &[usize], start: usize) -> Option<Vec<usize>> {
        let s = self.len();
        let mut seen = vec![usize::MAX; s];
        let mut v = start;
        let mut k = 0;
        while v != usize::MAX {
            if seen[v] != usize::MAX {
                let mut cycle = vec![v];
                let mut u = pred[v];
                while u != v {
                    cycle.push(u);
                    u = pred[u];
                }
                // pred points backwards along arcs.
                cycle.reverse();
                return Some(cycle);
            }
            seen[v] = k;
            k += 1;
            v = pred[v];
        }
        None
    }

    fn extract_cycle(&self, pred: &[usize], start: usize, tol: f64) -> Option<Vec<usize>> {
        self.pred_cycle(pred, start).filter(|c| self.cycle_sum(c) < -tol)
    }

    /// Depth-first enumeration of cycles whose smallest node comes first.
    fn short_cycle(&self, max_len: usize, tol: f64) -> Option<Vec<usize>> {
        let s = self.len();
        let mut path = Vec::with_capacity(max_len);
        let mut on_path = vec![false; s];
        for start in 0..s {
            path.clear();
            path.push(start);
            on_path[start] = true;
            let found = self.extend(&mut path, &mut on_path, 0.0, max_len, tol);
            on_path[start] = false;
            if found {
                return Some(path);
            }
        }
        None
    }

    fn extend(&self, path: &mut Vec<usize>, on_path: &mut [bool], acc: f64, max_len: usize, tol: f64) -> bool {
        let s = self.len();
        let start = path[0];
        let last = *path.last().expect("path starts non-empty");
        if path.len() >= 2 && acc + self.w[last * s + start] < -tol {
            return true;
        }
        if path.len() == max_len {
            return false;
        }
        for next in start + 1..s {
            if on_path[next] {
                continue;
            }
            path.push(next);
            on_path[next] = true;
            if self.extend(path, on_path, acc + self.w[last * s + next], max_len, tol) {
                return true;
            }
            on_path[next] = false;
            path.pop();
        }
        false
    }
}
