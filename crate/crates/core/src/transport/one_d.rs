//! One-dimensional W2: quantile quadrature against a continuous law, and
//! sort-based couplings between point clouds.

use crate::error::{LandauError, Result};

/// Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes by Newton iteration on the Legendre recurrence.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let n = order as f64;
        for k in 0..order.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(order, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(order, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[k] = -x;
            nodes[order - 1 - k] = x;
            weights[k] = w;
            weights[order - 1 - k] = w;
        }
        if order % 2 == 1 {
            nodes[order / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integral of `f` over `[a, b]`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

/// `(P_n(x), P_n'(x))`.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Controls for [`w2_1d_exact_with`].
#[derive(Debug, Clone)]
pub struct QuadratureOptions {
    /// Gauss-Legendre nodes per panel.
    pub order: usize,
    /// Maximum bisection depth inside one cell.
    pub max_depth: u32,
    /// Accepted error per unit of `u`.
    pub abs_tol: f64,
    /// Accepted error relative to the panel value.
    pub rel_tol: f64,
    /// Panels below this error relative to the whole cell are accepted at
    /// any width, which lets integrable endpoint singularities settle.
    pub cell_floor: f64,
    /// Bisections allowed per cell before giving up.
    pub max_panels: usize,
    /// A panel too narrow to bisect in floating point (near `u = 0` or
    /// `u = 1`) is kept at its current estimate if that estimate is below
    /// this fraction of the cell magnitude `int (x^2 + Q(u)^2) du`;
    /// otherwise the cell fails. This is what separates light tails from
    /// heavy ones.
    pub truncation_tol: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            order: 16,
            max_depth: 60,
            abs_tol: 1e-13,
            rel_tol: 1e-12,
            cell_floor: 1e-15,
            max_panels: 20_000,
            truncation_tol: 1e-6,
        }
    }
}

/// Squared W2 between the uniform empirical measure on `samples` (sorted
/// ascending) and the law with quantile function `quantile`.
pub fn w2_1d_exact<F: Fn(f64) -> f64>(samples: &[f64], quantile: F) -> Result<f64> {
    w2_1d_exact_with(samples, quantile, &QuadratureOptions::default())
}

pub fn w2_1d_exact_with<F: Fn(f64) -> f64>(
    samples: &[f64],
    quantile: F,
    opts: &QuadratureOptions,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(LandauError::Measure("no samples".into()));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(LandauError::Measure("non-finite sample".into()));
    }
    if samples.windows(2).any(|w| w[1] < w[0]) {
        return Err(LandauError::Measure("samples must be sorted ascending".into()));
    }
    let rule = GaussLegendre::new(opts.order);
    let n = samples.len() as f64;
    let mut total = 0.0;
    for (cell, &x) in samples.iter().enumerate() {
        let a = cell as f64 / n;
        let b = (cell + 1) as f64 / n;
        let f = |u: f64| {
            let r = x - quantile(u);
            r * r
        };
        let whole = rule.integrate(f, a, b);
        let magnitude = rule.integrate(|u| x * x + quantile(u).powi(2), a, b);
        let mut ctx = Panels {
            rule: &rule,
            opts,
            cell,
            floor: opts.cell_floor * whole.abs(),
            truncation: opts.truncation_tol * magnitude,
            budget: opts.max_panels,
        };
        total += ctx.refine(&f, a, b, whole, opts.max_depth)?;
    }
    Ok(total)
}

struct Panels<'a> {
    rule: &'a GaussLegendre,
    opts: &'a QuadratureOptions,
    cell: usize,
    floor: f64,
    truncation: f64,
    budget: usize,
}

impl Panels<'_> {
    fn refine<F: Fn(f64) -> f64>(&mut self, f: &F, a: f64, b: f64, whole: f64, depth: u32) -> Result<f64> {
        let fail = LandauError::Quadrature { cell: self.cell };
        if self.budget == 0 {
            return Err(fail);
        }
        self.budget -= 1;
        let mid = 0.5 * (a + b);
        let left = self.rule.integrate(f, a, mid);
        let right = self.rule.integrate(f, mid, b);
        let both = left + right;
        if both.is_finite() {
            let tol = (self.opts.abs_tol * (b - a))
                .max(self.opts.rel_tol * both.abs())
                .max(self.floor);
            if (both - whole).abs() <= tol {
                return Ok(both);
            }
        }
        let unresolvable = b - a <= 1e4 * f64::EPSILON * a.abs().max(b.abs());
        if unresolvable {
            return if whole.is_finite() && whole.abs() <= self.truncation {
                Ok(whole)
            } else {
                Err(fail)
            };
        }
        if !both.is_finite() || depth == 0 {
            return Err(fail);
        }
        Ok(self.refine(f, a, mid, left, depth - 1)? + self.refine(f, mid, b, right, depth - 1)?)
    }
}

/// Monotone rearrangement between two equal-size clouds: `perm[i]` is the
/// target paired with source `i`. Ties keep input order (stable sort).
pub fn brenier_map_1d(mu_samples: &[f64], nu_samples: &[f64]) -> Result<Vec<usize>> {
    if mu_samples.len() != nu_samples.len() {
        return Err(LandauError::Measure(format!(
            "monotone pairing needs equal sizes, got {} and {}",
            mu_samples.len(),
            nu_samples.len()
        )));
    }
    if mu_samples.iter().chain(nu_samples).any(|x| !x.is_finite()) {
        return Err(LandauError::Measure("non-finite sample".into()));
    }
    let src = argsort(mu_samples);
    let dst = argsort(nu_samples);
    let mut perm = vec![0; mu_samples.len()];
    for (s, d) in src.into_iter().zip(dst) {
        perm[s] = d;
    }
    Ok(perm)
}

fn argsort(xs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    idx
}

/// Squared W2 between the uniform measures on two clouds of possibly
/// different sizes, by merging their quantile functions.
pub fn w2_1d_empirical(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(LandauError::Measure("empty sample".into()));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(LandauError::Measure("non-finite sample".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (m, n) = (a.len() as u128, b.len() as u128);
    // Breakpoints i/m and j/n compared on the common grid of step 1/(m n).
    let (mut i, mut j) = (0usize, 0usize);
    let mut pos: u128 = 0;
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let next_a = (i as u128 + 1) * n;
        let next_b = (j as u128 + 1) * m;
        let next = next_a.min(next_b);
        let r = a[i] - b[j];
        total += (next - pos) as f64 * r * r;
        pos = next;
        if next_a == next {
            i += 1;
        }
        if next_b == next {
            j += 1;
        }
    }
    Ok(total / (m * n) as f64)
}
