//! Exact quadratic-cost optimal transport between discrete measures.
//!
//! Solvers return *an* optimal plan; for discrete measures optimizers need
//! not be unique. Cyclical monotonicity of a plan's support certifies
//! optimality (see [`is_cyclically_monotone`]).

mod assignment;
mod monotone;
mod network_simplex;
mod one_d;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LandauError, Result};
use crate::particles::{read_snapshots_from, ParticleState};

pub use monotone::{
    check_with as check_cyclical_monotonicity, find_short_violation, is_cyclically_monotone,
    CheckMethod, MonotonicityOptions, MonotonicityVerdict,
};
pub use one_d::{
    brenier_map_1d, w2_1d_empirical, w2_1d_exact, w2_1d_exact_with, GaussLegendre,
    QuadratureOptions,
};

/// Largest dense cost matrix the solvers will build by default.
pub const DEFAULT_MAX_COST_ENTRIES: usize = 200_000_000;
const WEIGHT_SUM_TOL: f64 = 1e-12;
const MARGINAL_TOL: f64 = 1e-10;

/// Weighted point cloud in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    uniform: bool,
}

impl EmpiricalMeasure {
    /// Uniform weights `1/m` on the `m = points.len() / dim` rows.
    pub fn uniform(points: Vec<f64>, dim: usize) -> Result<Self> {
        let m = Self::check_points(&points, dim)?;
        Ok(Self {
            dim,
            points,
            weights: vec![1.0 / m as f64; m],
            uniform: true,
        })
    }

    pub fn weighted(points: Vec<f64>, dim: usize, weights: Vec<f64>) -> Result<Self> {
        let m = Self::check_points(&points, dim)?;
        if weights.len() != m {
            return Err(LandauError::Measure(format!(
                "{} weights for {m} points",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(LandauError::Measure("weights must be finite and nonnegative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(LandauError::Measure(format!("weights sum to {sum}, not 1")));
        }
        let uniform = weights.iter().all(|&w| w == weights[0]);
        Ok(Self {
            dim,
            points,
            weights,
            uniform,
        })
    }

    /// Points given one row per atom.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(LandauError::Measure("rows of unequal length".into()));
        }
        Self::uniform(rows.concat(), dim)
    }

    /// Empirical measure of the particles, `(1/n) sum_i delta_{X^i}`.
    pub fn from_state(state: &ParticleState) -> Self {
        Self {
            dim: state.dim(),
            points: state.positions().to_vec(),
            weights: vec![1.0 / state.n() as f64; state.n()],
            uniform: true,
        }
    }

    fn check_points(points: &[f64], dim: usize) -> Result<usize> {
        if dim == 0 {
            return Err(LandauError::Measure("dimension must be positive".into()));
        }
        if points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(LandauError::Measure(format!(
                "{} coordinates do not form a non-empty {dim}-d cloud",
                points.len()
            )));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(LandauError::Measure("points must be finite".into()));
        }
        Ok(points.len() / dim)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// Pushforward under `x -> s * x`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let mut out = self.clone();
        out.points.iter_mut().for_each(|x| *x *= s);
        Self::check_points(&out.points, out.dim)?;
        Ok(out)
    }

    /// Pushforward under `x -> x + c`.
    pub fn translated(&self, c: &[f64]) -> Result<Self> {
        if c.len() != self.dim {
            return Err(LandauError::Measure("shift has the wrong dimension".into()));
        }
        let mut out = self.clone();
        for row in out.points.chunks_exact_mut(self.dim) {
            row.iter_mut().zip(c).for_each(|(x, s)| *x += s);
        }
        Self::check_points(&out.points, out.dim)?;
        Ok(out)
    }

    /// Reads either a particle snapshot file (`t,particle,x0,...`; the last
    /// time present is used) or a plain cloud with columns `x0,...` and an
    /// optional trailing `weight` column.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read(path).map_err(|e| LandauError::io(path, e))?;
        Self::parse_csv(&text)
    }

    pub fn parse_csv(bytes: &[u8]) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(bytes);
        let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if header.first().map(String::as_str) == Some("t") {
            let snaps = read_snapshots_from(bytes)?;
            let last = snaps
                .last()
                .ok_or_else(|| LandauError::Measure("snapshot file holds no rows".into()))?;
            return Ok(Self::from_state(last));
        }
        let has_weight = header.last().map(String::as_str) == Some("weight");
        let dim = header.len() - usize::from(has_weight);
        if dim == 0 || (0..dim).any(|c| header[c] != format!("x{c}")) {
            return Err(LandauError::Measure(
                "expected header x0,...[,weight] or t,particle,x0,...".into(),
            ));
        }
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            for c in 0..header.len() {
                let v: f64 = rec
                    .get(c)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| LandauError::Measure(format!("row {}: bad field {c}", line + 2)))?;
                if c < dim {
                    points.push(v);
                } else {
                    weights.push(v);
                }
            }
        }
        if has_weight {
            Self::weighted(points, dim, weights)
        } else {
            Self::uniform(points, dim)
        }
    }
}

/// One atom of a coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transfer {
    pub src: usize,
    pub dst: usize,
    pub mass: f64,
}

/// Sparse coupling with its quadratic cost `sum mass * |x_src - y_dst|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub pairs: Vec<Transfer>,
    pub cost: f64,
}

impl TransportPlan {
    /// Plan pairing source `i` with target `perm[i]`, mass `1/m` each.
    pub fn from_permutation(
        perm: &[usize],
        mu: &EmpiricalMeasure,
        nu: &EmpiricalMeasure,
    ) -> Result<Self> {
        let m = perm.len();
        if m != mu.len() || m != nu.len() {
            return Err(LandauError::NotAssignment("permutation length differs from measure sizes".into()));
        }
        let mut seen = vec![false; m];
        for &j in perm {
            if j >= m || std::mem::replace(&mut seen[j], true) {
                return Err(LandauError::NotAssignment("not a permutation".into()));
            }
        }
        let mass = 1.0 / m as f64;
        let pairs = perm
            .iter()
            .enumerate()
            .map(|(src, &dst)| Transfer { src, dst, mass })
            .collect();
        let mut plan = Self { pairs, cost: 0.0 };
        plan.cost = plan.evaluate(mu, nu);
        Ok(plan)
    }

    /// Recomputes `sum mass * |x_src - y_dst|^2` from the measures.
    pub fn evaluate(&self, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> f64 {
        self.pairs
            .iter()
            .map(|t| t.mass * sq_dist(mu.point(t.src), nu.point(t.dst)))
            .sum()
    }

    pub fn support_len(&self) -> usize {
        self.pairs.len()
    }

    /// The permutation behind a one-to-one uniform plan, if it is one.
    pub fn as_permutation(&self, m: usize) -> Option<Vec<usize>> {
        if self.pairs.len() != m {
            return None;
        }
        let mut perm = vec![usize::MAX; m];
        for t in &self.pairs {
            if t.src >= m || t.dst >= m || perm[t.src] != usize::MAX {
                return None;
            }
            perm[t.src] = t.dst;
        }
        let mut seen = vec![false; m];
        perm.iter()
            .all(|&j| !std::mem::replace(&mut seen[j], true))
            .then_some(perm)
    }

    /// Largest deviation of row and column sums from the marginal weights.
    pub fn marginal_error(&self, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> f64 {
        let mut rows = vec![0.0; mu.len()];
        let mut cols = vec![0.0; nu.len()];
        for t in &self.pairs {
            rows[t.src] += t.mass;
            cols[t.dst] += t.mass;
        }
        let r = rows.iter().zip(mu.weights()).map(|(a, b)| (a - b).abs());
        let c = cols.iter().zip(nu.weights()).map(|(a, b)| (a - b).abs());
        r.chain(c).fold(0.0, f64::max)
    }

    /// Checks positivity, marginals and the recorded cost.
    pub fn validate(&self, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<()> {
        for t in &self.pairs {
            if t.src >= mu.len() || t.dst >= nu.len() {
                return Err(LandauError::Measure(format!("pair ({}, {}) out of range", t.src, t.dst)));
            }
            if !(t.mass > 0.0) {
                return Err(LandauError::Measure(format!("pair ({}, {}) has mass {}", t.src, t.dst, t.mass)));
            }
        }
        let err = self.marginal_error(mu, nu);
        if err > MARGINAL_TOL {
            return Err(LandauError::Measure(format!("marginals off by {err:e}")));
        }
        let cost = self.evaluate(mu, nu);
        if (cost - self.cost).abs() > MARGINAL_TOL * cost.max(1.0) {
            return Err(LandauError::Measure(format!("recorded cost {} but pairs give {cost}", self.cost)));
        }
        Ok(())
    }

    /// Writes `src,dst,mass` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| LandauError::io(path, e))?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
        for t in &self.pairs {
            w.serialize(t)?;
        }
        if self.pairs.is_empty() {
            w.write_record(["src", "dst", "mass"])?;
        }
        w.flush().map_err(|e| LandauError::io(path, e))
    }
}

/// Dual potentials with `f_i + g_j <= |x_i - y_j|^2`, tight on the plan's
/// support. Entries for zero-weight atoms are the best feasible values.
#[derive(Debug, Clone, PartialEq)]
pub struct KantorovichDuals {
    pub source: Vec<f64>,
    pub target: Vec<f64>,
}

impl KantorovichDuals {
    /// `sum_i a_i f_i + sum_j b_j g_j`.
    pub fn objective(&self, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> f64 {
        let f: f64 = self.source.iter().zip(mu.weights()).map(|(f, a)| f * a).sum();
        let g: f64 = self.target.iter().zip(nu.weights()).map(|(g, b)| g * b).sum();
        f + g
    }

    /// Largest violation of `f_i + g_j <= c_ij`.
    pub fn max_violation(&self, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for i in 0..mu.len() {
            for j in 0..nu.len() {
                let v = self.source[i] + self.target[j] - sq_dist(mu.point(i), nu.point(j));
                worst = worst.max(v);
            }
        }
        worst
    }
}

#[derive(Debug, Clone)]
pub struct TransportOptions {
    pub max_cost_entries: usize,
}

impl Default for TransportOptions {
    fn default() -> Self {
        Self {
            max_cost_entries: DEFAULT_MAX_COST_ENTRIES,
        }
    }
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn cost_matrix(
    mu: &EmpiricalMeasure,
    rows: &[usize],
    nu: &EmpiricalMeasure,
    cols: &[usize],
    cap: usize,
) -> Result<Vec<f64>> {
    let entries = rows.len().saturating_mul(cols.len());
    if entries > cap {
        return Err(LandauError::CostMatrixTooLarge { entries, cap });
    }
    let mut c = Vec::with_capacity(entries);
    for &i in rows {
        let x = mu.point(i);
        c.extend(cols.iter().map(|&j| sq_dist(x, nu.point(j))));
    }
    Ok(c)
}

fn check_dims(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<()> {
    if mu.dim() != nu.dim() {
        return Err(LandauError::Measure(format!(
            "dimension mismatch: {} vs {}",
            mu.dim(),
            nu.dim()
        )));
    }
    Ok(())
}

/// Optimal permutation coupling between equal-size uniform measures; the
/// plan's cost is `W2^2`.
pub fn w2_assignment(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<TransportPlan> {
    w2_assignment_with(mu, nu, &TransportOptions::default())
}

pub fn w2_assignment_with(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    opts: &TransportOptions,
) -> Result<TransportPlan> {
    check_dims(mu, nu)?;
    if mu.len() != nu.len() {
        return Err(LandauError::NotAssignment(format!(
            "sizes {} and {} differ",
            mu.len(),
            nu.len()
        )));
    }
    if !mu.is_uniform() || !nu.is_uniform() {
        return Err(LandauError::NotAssignment(
            "non-uniform weights".into(),
        ));
    }
    let m = mu.len();
    let idx: Vec<usize> = (0..m).collect();
    let cost = cost_matrix(mu, &idx, nu, &idx, opts.max_cost_entries)?;
    let perm = assignment::solve(&cost, m);
    TransportPlan::from_permutation(&perm, mu, nu)
}

/// Optimal coupling for arbitrary weights (zero-weight atoms are pruned);
/// the support has at most `m1 + m2 - 1` pairs.
pub fn w2_general(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<TransportPlan> {
    w2_general_certified(mu, nu, &TransportOptions::default()).map(|(plan, _)| plan)
}

/// Like [`w2_general`], also returning dual potentials that certify the
/// plan's optimality.
pub fn w2_general_certified(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    opts: &TransportOptions,
) -> Result<(TransportPlan, KantorovichDuals)> {
    check_dims(mu, nu)?;
    let rows: Vec<usize> = (0..mu.len()).filter(|&i| mu.weights()[i] > 0.0).collect();
    let cols: Vec<usize> = (0..nu.len()).filter(|&j| nu.weights()[j] > 0.0).collect();
    let cost = cost_matrix(mu, &rows, nu, &cols, opts.max_cost_entries)?;
    let supply: Vec<f64> = rows.iter().map(|&i| mu.weights()[i]).collect();
    let demand: Vec<f64> = cols.iter().map(|&j| nu.weights()[j]).collect();
    let sol = network_simplex::solve(&supply, &demand, cost)?;

    let pairs: Vec<Transfer> = sol
        .flows
        .iter()
        .map(|&(i, j, f)| Transfer {
            src: rows[i],
            dst: cols[j],
            mass: f,
        })
        .collect();
    let mut plan = TransportPlan { pairs, cost: 0.0 };
    plan.cost = plan.evaluate(mu, nu);

    // Extend the potentials to pruned atoms by c-transforms.
    let mut source = vec![f64::NAN; mu.len()];
    let mut target = vec![f64::NAN; nu.len()];
    for (k, &i) in rows.iter().enumerate() {
        source[i] = sol.source_potential[k];
    }
    for (k, &j) in cols.iter().enumerate() {
        target[j] = sol.target_potential[k];
    }
    for i in 0..mu.len() {
        if source[i].is_nan() {
            source[i] = cols
                .iter()
                .map(|&j| sq_dist(mu.point(i), nu.point(j)) - target[j])
                .fold(f64::INFINITY, f64::min);
        }
    }
    for j in 0..nu.len() {
        if target[j].is_nan() {
            target[j] = (0..mu.len())
                .map(|i| sq_dist(mu.point(i), nu.point(j)) - source[i])
                .fold(f64::INFINITY, f64::min);
        }
    }
    Ok((plan, KantorovichDuals { source, target }))
}
