//! Replica experiments: empirical-measure rates, particle self-convergence
//! and sigma-variant invariance.
//!
//! Replica `r` uses seed `base.seed + r`. Results are collected in replica
//! order, so reports do not depend on thread scheduling.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::coefficients::{ModelConfig, ModelName, SigmaVariant};
use crate::diagnostics::{mean_and_se, MomentReport};
use crate::error::{LandauError, Result};
use crate::noise::{aux_rng, stream_key};
use crate::particles::{sample_initial, simulate, InitialLaw, ParticleState, SimConfig, TrajectoryRecorder};
use crate::transport::{w2_1d_exact, w2_assignment, w2_general, EmpiricalMeasure};

pub const MIN_REPLICAS: usize = 10;
pub const MIN_RATE_POINTS: usize = 4;
/// Reference systems must be at least this many times larger than any `n`.
pub const REFERENCE_FACTOR: usize = 8;
const DOMAIN_REFERENCE: u64 = 0x5EF;
const DEFAULT_SUBSAMPLE: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    EmpiricalRate,
    SelfConvergence,
    SigmaInvariance,
}

fn default_replicas() -> usize {
    20
}

fn default_arms() -> [SigmaVariant; 2] {
    [SigmaVariant::Projection, SigmaVariant::Cross3]
}

/// Experiment description. `base` supplies dimension, law, model, time grid
/// and base seed; `base.n` is only used by sigma invariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub base: SimConfig,
    #[serde(default)]
    pub ns: Vec<usize>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    /// Size `N` of the reference system (self-convergence).
    #[serde(default)]
    pub reference_size: Option<usize>,
    /// Run the reference system on the replica seed itself instead of an
    /// independent one. With `n = N` this reproduces the n-system exactly.
    #[serde(default)]
    pub shared_reference_seed: bool,
    /// Sigma variants of the two invariance arms.
    #[serde(default = "default_arms")]
    pub arms: [SigmaVariant; 2],
    /// Points per cloud for the terminal W2 comparison (invariance).
    #[serde(default)]
    pub w2_subsample: Option<usize>,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind, base: SimConfig, ns: Vec<usize>, replicas: usize) -> Self {
        Self {
            kind,
            base,
            ns,
            replicas,
            reference_size: None,
            shared_reference_seed: false,
            arms: default_arms(),
            w2_subsample: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicas < MIN_REPLICAS {
            return Err(LandauError::config(
                "replicas",
                format!("need at least {MIN_REPLICAS}, got {}", self.replicas),
            ));
        }
        if self.kind != ExperimentKind::SigmaInvariance {
            if self.ns.len() < MIN_RATE_POINTS {
                return Err(LandauError::config(
                    "ns",
                    format!("need at least {MIN_RATE_POINTS} sizes, got {}", self.ns.len()),
                ));
            }
            if self.ns.windows(2).any(|w| w[1] <= w[0]) || self.ns[0] == 0 {
                return Err(LandauError::config("ns", "must be positive and strictly increasing"));
            }
        }
        if self.kind == ExperimentKind::SelfConvergence {
            let big = self
                .reference_size
                .ok_or_else(|| LandauError::config("reference_size", "required for self_convergence"))?;
            let max_n = *self.ns.last().expect("ns validated non-empty");
            if big < REFERENCE_FACTOR * max_n {
                return Err(LandauError::config(
                    "reference_size",
                    format!("must be at least {REFERENCE_FACTOR} * max(ns) = {}", REFERENCE_FACTOR * max_n),
                ));
            }
        }
        if self.kind == ExperimentKind::SigmaInvariance
            && (self.base.dim != 3 || self.base.model.model != ModelName::Maxwell)
        {
            return Err(LandauError::config("base", "sigma invariance needs the 3-d Maxwell model"));
        }
        if self.base.init.dim() != self.base.dim {
            return Err(LandauError::config("base.init", "law dimension differs from dim"));
        }
        Ok(())
    }

    pub fn seed(&self, replica: usize) -> u64 {
        self.base.seed.wrapping_add(replica as u64)
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.replicas).map(|r| self.seed(r)).collect()
    }
}

/// Weighted log-log fit `log y = intercept + slope * log x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    /// Reduced chi-square of the weighted residuals (NaN with fewer than
    /// three points).
    pub reduced_chi2: f64,
}

/// Weighted least squares on `(log x, log y)` with weights `(y / se)^2`.
/// The slope error is the known-variance error inflated by
/// `sqrt(reduced chi-square)` when the scatter exceeds the quoted errors.
/// Without positive `se` values the fit is unweighted and the error comes
/// from the residuals alone.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64], se: &[f64]) -> Result<SlopeFit> {
    let k = xs.len();
    if k < MIN_RATE_POINTS {
        return Err(LandauError::FitDomain(format!(
            "need at least {MIN_RATE_POINTS} points, got {k}"
        )));
    }
    if ys.len() != k || se.len() != k {
        return Err(LandauError::FitDomain("xs, ys and se differ in length".into()));
    }
    if xs.iter().chain(ys).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(LandauError::FitDomain("xs and ys must be finite and positive".into()));
    }
    if se.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(LandauError::FitDomain("standard errors must be finite and nonnegative".into()));
    }
    let weighted = se.iter().all(|&s| s > 0.0);
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let w: Vec<f64> = if weighted {
        ys.iter().zip(se).map(|(y, s)| (y / s).powi(2)).collect()
    } else {
        vec![1.0; k]
    };
    let sw: f64 = w.iter().sum();
    let mx = lx.iter().zip(&w).map(|(x, w)| w * x).sum::<f64>() / sw;
    let my = ly.iter().zip(&w).map(|(y, w)| w * y).sum::<f64>() / sw;
    let sxx: f64 = lx.iter().zip(&w).map(|(x, w)| w * (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(LandauError::FitDomain("xs are all equal".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).zip(&w).map(|((x, y), w)| w * (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx
        .iter()
        .zip(&ly)
        .zip(&w)
        .map(|((x, y), w)| w * (y - intercept - slope * x).powi(2))
        .sum();
    let dof = k as f64 - 2.0;
    let reduced_chi2 = rss / dof;
    let stderr = if weighted {
        (1.0 / sxx).sqrt() * reduced_chi2.max(1.0).sqrt()
    } else {
        (reduced_chi2 / sxx).sqrt()
    };
    Ok(SlopeFit {
        slope,
        stderr,
        intercept,
        reduced_chi2,
    })
}

/// Exponent of the empirical-measure bound `n^(-2/(d+4))`.
pub fn bound_exponent(dim: usize) -> f64 {
    -2.0 / (dim as f64 + 4.0)
}

/// The pass rule, stated once: `slope <= bound + 2 * stderr`.
pub fn passes_bound(slope: f64, stderr: f64, bound: f64) -> bool {
    slope <= bound + 2.0 * stderr
}

pub const DECISION_RULE: &str = "passed_bound = slope <= bound_exponent + 2 * slope_stderr";

/// Versions and inputs needed to rerun a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportManifest {
    pub tool: String,
    pub version: String,
    pub solvers: Vec<String>,
    pub seeds: Vec<u64>,
    pub spec: ExperimentSpec,
}

impl ReportManifest {
    fn new(spec: &ExperimentSpec, solvers: &[&str]) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            solvers: solvers.iter().map(|s| s.to_string()).collect(),
            seeds: spec.seeds(),
            spec: spec.clone(),
        }
    }
}

/// Rate study outcome. Means are bound or monotonicity checks, not
/// predictions of finite-n values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub kind: ExperimentKind,
    pub dim: usize,
    pub ns: Vec<usize>,
    pub mean_w2sq: Vec<f64>,
    pub se: Vec<f64>,
    pub slope: f64,
    pub slope_stderr: f64,
    pub bound_exponent: f64,
    pub passed_bound: bool,
    pub decision_rule: String,
    /// How each W2 value was obtained.
    pub estimator: String,
    pub reference_size: Option<usize>,
    /// Each consecutive mean drops by more than one combined standard error.
    pub strictly_decreasing: bool,
    /// Mean trapezoid estimate of `int_0^T W2^2 dt` per `n` (self-convergence).
    pub time_integral: Option<Vec<f64>>,
    /// Some relative standard error exceeds 25%.
    pub unstable: bool,
    pub flags: Vec<String>,
    pub note: String,
    /// `per_replica[i][r]` is the value for `ns[i]`, replica `r`.
    pub per_replica: Vec<Vec<f64>>,
    pub manifest: ReportManifest,
}

impl RateReport {
    #[allow(clippy::too_many_arguments)]
    fn build(
        spec: &ExperimentSpec,
        estimator: &str,
        reference_size: Option<usize>,
        per_replica: Vec<Vec<f64>>,
        time_integral: Option<Vec<f64>>,
        solvers: &[&str],
        note: &str,
    ) -> Result<Self> {
        let (mean, se): (Vec<f64>, Vec<f64>) = per_replica.iter().map(|v| mean_and_se(v)).unzip();
        let xs: Vec<f64> = spec.ns.iter().map(|&n| n as f64).collect();
        let fit = fit_loglog_slope(&xs, &mean, &se)?;
        let bound = bound_exponent(spec.base.dim);
        let mut flags = Vec::new();
        let mut strictly_decreasing = true;
        for i in 1..mean.len() {
            let gap = mean[i - 1] - mean[i];
            let combined = (se[i - 1].powi(2) + se[i].powi(2)).sqrt();
            if gap <= combined {
                strictly_decreasing = false;
            }
            if -gap > 2.0 * combined {
                flags.push(format!(
                    "mean increases from n={} to n={} by more than 2 SE",
                    spec.ns[i - 1],
                    spec.ns[i]
                ));
            }
        }
        let unstable = mean.iter().zip(&se).any(|(m, s)| *s > 0.25 * m);
        if unstable {
            flags.push("relative standard error above 25%".into());
        }
        Ok(Self {
            kind: spec.kind,
            dim: spec.base.dim,
            ns: spec.ns.clone(),
            mean_w2sq: mean,
            se,
            slope: fit.slope,
            slope_stderr: fit.stderr,
            bound_exponent: bound,
            passed_bound: passes_bound(fit.slope, fit.stderr, bound),
            decision_rule: DECISION_RULE.into(),
            estimator: estimator.into(),
            reference_size,
            strictly_decreasing,
            time_integral,
            unstable,
            flags,
            note: note.into(),
            per_replica,
            manifest: ReportManifest::new(spec, solvers),
        })
    }

    /// Writes `n,replica,seed,w2sq` rows.
    pub fn write_replica_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["n", "replica", "seed", "w2sq"])?;
        for (i, n) in self.ns.iter().enumerate() {
            for (r, v) in self.per_replica[i].iter().enumerate() {
                w.write_record([
                    n.to_string(),
                    r.to_string(),
                    self.manifest.seeds[r].to_string(),
                    v.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| LandauError::io("replica csv", e))
    }
}

/// Per-replica `W2^2(mu_n, mu)` for every `n` in `spec.ns`. In d = 1 the
/// value is exact against the law's quantile function; in higher
/// dimensions it is the two-sample proxy against an independent sample of
/// the same size.
pub fn empirical_rate_values(spec: &ExperimentSpec) -> Result<Vec<Vec<f64>>> {
    let law = &spec.base.init;
    let dim = spec.base.dim;
    spec.ns
        .iter()
        .map(|&n| {
            (0..spec.replicas)
                .into_par_iter()
                .map(|r| {
                    let seed = spec.seed(r);
                    let sample = sample_initial(law, n, dim, seed)?;
                    if dim == 1 {
                        let mut xs = sample.positions().to_vec();
                        xs.sort_by(f64::total_cmp);
                        let q = quantile_1d(law)?;
                        w2_1d_exact(&xs, q)
                    } else {
                        let reference = sample_initial(law, n, dim, reference_seed(seed))?;
                        let plan = w2_assignment(
                            &EmpiricalMeasure::from_state(&sample),
                            &EmpiricalMeasure::from_state(&reference),
                        )?;
                        Ok(plan.cost)
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect()
}

pub fn empirical_rate(spec: &ExperimentSpec) -> Result<RateReport> {
    spec.validate()?;
    let values = empirical_rate_values(spec)?;
    let (estimator, reference, solvers, note) = if spec.base.dim == 1 {
        (
            "exact_quantile_1d",
            None,
            vec!["gauss_legendre_16_adaptive"],
            "W2^2 against the exact law; the slope is checked against the bound exponent, not predicted",
        )
    } else {
        (
            "two_sample_assignment",
            None,
            vec!["hungarian"],
            "two-sample proxy W2^2(mu_n, mu'_n) with an independent sample of equal size; checked against the bound exponent only",
        )
    };
    RateReport::build(spec, estimator, reference, values, None, &solvers, note)
}

fn quantile_1d(law: &InitialLaw) -> Result<impl Fn(f64) -> f64> {
    let (mean, sd) = match law {
        InitialLaw::Gaussian { mean, cov } => (mean[0], cov[0][0].sqrt()),
        InitialLaw::PointMass { at } => (at[0], 0.0),
    };
    let normal = Normal::standard();
    if !(sd.is_finite() && mean.is_finite()) {
        return Err(LandauError::config("base.init", "law parameters must be finite"));
    }
    // The upper half goes through `1 - u`, which is exact there; feeding `u`
    // itself loses relative precision in the tail argument.
    Ok(move |u: f64| {
        if sd == 0.0 {
            mean
        } else if u > 0.5 {
            mean - sd * normal.inverse_cdf(1.0 - u)
        } else {
            mean + sd * normal.inverse_cdf(u)
        }
    })
}

fn reference_seed(seed: u64) -> u64 {
    stream_key(DOMAIN_REFERENCE, seed, 0, 0)
}

fn run_snapshots(base: &SimConfig, n: usize, seed: u64) -> Result<Vec<ParticleState>> {
    let cfg = SimConfig {
        n,
        seed,
        ..base.clone()
    };
    let mut rec = TrajectoryRecorder::default();
    simulate(&cfg, &mut [&mut rec])?;
    Ok(rec.snapshots)
}

fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// Terminal `W2^2(nu^n_T, nu^N_T)` and its trapezoid time integral over the
/// shared snapshot times, for one replica.
pub fn self_convergence_pair(base: &SimConfig, n: usize, big_n: usize, seed: u64, shared_seed: bool) -> Result<(f64, f64)> {
    let reference = run_snapshots(base, big_n, if shared_seed { seed } else { reference_seed(seed) })?;
    let small = run_snapshots(base, n, seed)?;
    compare_runs(&small, &reference)
}

fn compare_runs(small: &[ParticleState], reference: &[ParticleState]) -> Result<(f64, f64)> {
    if small.len() != reference.len() {
        return Err(LandauError::Solver("runs recorded different snapshot counts".into()));
    }
    let values = small
        .iter()
        .zip(reference)
        .map(|(a, b)| Ok(w2_general(&EmpiricalMeasure::from_state(a), &EmpiricalMeasure::from_state(b))?.cost))
        .collect::<Result<Vec<f64>>>()?;
    let times: Vec<f64> = small.iter().map(|s| s.time).collect();
    Ok((*values.last().expect("at least one snapshot"), trapezoid(&times, &values)))
}

/// Runs each `n`-system against an `N`-particle reference (one reference
/// per replica, shared across `n`) and reports terminal `W2^2`.
pub fn self_convergence(spec: &ExperimentSpec) -> Result<RateReport> {
    spec.validate()?;
    let big_n = spec.reference_size.expect("validated");
    let mut terminal = vec![Vec::with_capacity(spec.replicas); spec.ns.len()];
    let mut integral = vec![Vec::with_capacity(spec.replicas); spec.ns.len()];
    for r in 0..spec.replicas {
        let seed = spec.seed(r);
        let ref_seed = if spec.shared_reference_seed { seed } else { reference_seed(seed) };
        let reference = run_snapshots(&spec.base, big_n, ref_seed)?;
        for (i, &n) in spec.ns.iter().enumerate() {
            let small = run_snapshots(&spec.base, n, seed)?;
            let (w, integ) = compare_runs(&small, &reference)?;
            terminal[i].push(w);
            integral[i].push(integ);
        }
    }
    let integral_means = integral.iter().map(|v| mean_and_se(v).0).collect();
    RateReport::build(
        spec,
        "particle_vs_reference_network_simplex",
        Some(big_n),
        terminal,
        Some(integral_means),
        &["network_simplex"],
        "reference system of size N stands in for the limit law; expect monotone decrease in n, no finite-n value is predicted",
    )
}

/// Ensemble statistics of one arm at each snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub variant: SigmaVariant,
    pub seeds: Vec<u64>,
    pub times: Vec<f64>,
    pub energy_mean: Vec<f64>,
    pub energy_se: Vec<f64>,
    /// Upper-triangle covariance entries `(0,0), (0,1), ..., (d-1,d-1)`.
    pub cov_mean: Vec<Vec<f64>>,
    pub cov_se: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub arms: [ArmSummary; 2],
    /// Largest `|mean_a - mean_b| / sqrt(se_a^2 + se_b^2)` over snapshots.
    pub max_energy_z: f64,
    pub max_covariance_z: f64,
    /// Every compared quantity agrees within three combined SE.
    pub agree: bool,
    /// Mean `W2^2` between terminal clouds of arm 0 and arm 1, replica by
    /// replica, and between consecutive replicas within arm 0.
    pub cross_w2sq: (f64, f64),
    pub within_w2sq: (f64, f64),
    pub w2_subsample: usize,
    pub manifest: ReportManifest,
}

fn z_score(a: f64, sa: f64, b: f64, sb: f64) -> f64 {
    let s = (sa * sa + sb * sb).sqrt();
    let diff = (a - b).abs();
    if diff == 0.0 {
        0.0
    } else if s == 0.0 {
        f64::INFINITY
    } else {
        diff / s
    }
}

/// Two matched ensembles that differ only in the sigma factorization.
/// Arm 0 uses seeds `base.seed + r`, arm 1 uses `base.seed + R + r`.
pub fn sigma_invariance(spec: &ExperimentSpec) -> Result<InvarianceReport> {
    spec.validate()?;
    let r_count = spec.replicas;
    let d = spec.base.dim;
    let mut summaries = Vec::new();
    let mut terminals: Vec<Vec<ParticleState>> = Vec::new();
    for (arm, &variant) in spec.arms.iter().enumerate() {
        let cfg = SimConfig {
            model: ModelConfig::maxwell(variant),
            ..spec.base.clone()
        };
        let mut reports = Vec::with_capacity(r_count);
        let mut finals = Vec::with_capacity(r_count);
        let mut seeds = Vec::with_capacity(r_count);
        for r in 0..r_count {
            let seed = spec.seed(r + arm * r_count);
            let mut rep = MomentReport::new(d);
            let out = simulate(&SimConfig { seed, ..cfg.clone() }, &mut [&mut rep])?;
            reports.push(rep);
            finals.push(out.final_state);
            seeds.push(seed);
        }
        summaries.push(summarize(variant, seeds, &reports)?);
        terminals.push(finals);
    }
    let (a, b) = (&summaries[0], &summaries[1]);
    if a.times != b.times {
        return Err(LandauError::Solver("arms recorded different snapshot times".into()));
    }
    let mut max_energy_z = 0.0f64;
    let mut max_covariance_z = 0.0f64;
    for t in 0..a.times.len() {
        max_energy_z = max_energy_z.max(z_score(a.energy_mean[t], a.energy_se[t], b.energy_mean[t], b.energy_se[t]));
        for e in 0..a.cov_mean[t].len() {
            max_covariance_z = max_covariance_z.max(z_score(
                a.cov_mean[t][e],
                a.cov_se[t][e],
                b.cov_mean[t][e],
                b.cov_se[t][e],
            ));
        }
    }

    let m = spec.w2_subsample.unwrap_or(DEFAULT_SUBSAMPLE).min(spec.base.n).max(1);
    let sub = |s: &ParticleState, label: u64| subsample(s, m, spec.base.seed, label);
    let cross: Vec<f64> = (0..r_count)
        .map(|r| {
            let x = sub(&terminals[0][r], r as u64)?;
            let y = sub(&terminals[1][r], (r + r_count) as u64)?;
            Ok(w2_assignment(&x, &y)?.cost)
        })
        .collect::<Result<_>>()?;
    let within: Vec<f64> = (0..r_count)
        .map(|r| {
            let x = sub(&terminals[0][r], r as u64)?;
            let y = sub(&terminals[0][(r + 1) % r_count], (r + 2 * r_count) as u64)?;
            Ok(w2_assignment(&x, &y)?.cost)
        })
        .collect::<Result<_>>()?;

    let [a, b]: [ArmSummary; 2] = summaries.try_into().expect("two arms");
    Ok(InvarianceReport {
        arms: [a, b],
        max_energy_z,
        max_covariance_z,
        agree: max_energy_z <= 3.0 && max_covariance_z <= 3.0,
        cross_w2sq: mean_and_se(&cross),
        within_w2sq: mean_and_se(&within),
        w2_subsample: m,
        manifest: ReportManifest::new(spec, &["hungarian"]),
    })
}

fn summarize(variant: SigmaVariant, seeds: Vec<u64>, reports: &[MomentReport]) -> Result<ArmSummary> {
    let first = &reports[0];
    if reports.iter().any(|r| r.times != first.times) {
        return Err(LandauError::Solver("replicas recorded different snapshot times".into()));
    }
    let d = first.dim;
    let upper: Vec<(usize, usize)> = (0..d).flat_map(|a| (a..d).map(move |b| (a, b))).collect();
    let mut energy_mean = Vec::new();
    let mut energy_se = Vec::new();
    let mut cov_mean = Vec::new();
    let mut cov_se = Vec::new();
    for t in 0..first.len() {
        let e: Vec<f64> = reports.iter().map(|r| r.energy[t]).collect();
        let (m, s) = mean_and_se(&e);
        energy_mean.push(m);
        energy_se.push(s);
        let (cm, cs): (Vec<f64>, Vec<f64>) = upper
            .iter()
            .map(|&(a, b)| {
                let v: Vec<f64> = reports.iter().map(|r| r.covariance[t][a * d + b]).collect();
                mean_and_se(&v)
            })
            .unzip();
        cov_mean.push(cm);
        cov_se.push(cs);
    }
    Ok(ArmSummary {
        variant,
        seeds,
        times: first.times.clone(),
        energy_mean,
        energy_se,
        cov_mean,
        cov_se,
    })
}

/// `m` particles drawn without replacement, keyed by `(seed, label)`.
fn subsample(state: &ParticleState, m: usize, seed: u64, label: u64) -> Result<EmpiricalMeasure> {
    let mut rng = aux_rng(seed, label, m as u64);
    let idx = rand::seq::index::sample(&mut rng, state.n(), m.min(state.n()));
    let mut picked: Vec<usize> = idx.into_vec();
    picked.sort_unstable();
    let pts: Vec<f64> = picked.iter().flat_map(|&i| state.particle(i).iter().copied()).collect();
    EmpiricalMeasure::uniform(pts, state.dim())
}
