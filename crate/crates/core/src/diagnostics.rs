//! Moment functionals of particle ensembles and the conservation and
//! relaxation laws they obey under Maxwell-molecule dynamics.
//!
//! Covariances are normalized by `n`, matching the empirical measure of the
//! ensemble.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::coefficients::{CoefficientModel, ModelKind};
use crate::error::{LandauError, Result};
use crate::particles::{mean_field_drift, Observer, ParticleState};

/// Relaxation constants of the Maxwell model.
///
/// Taking expectations of Ito's formula for `X X^T` with
/// `b(z) = -(d - 1) z` and `a(z) = |z|^2 I - z z^T`, for two independent
/// copies `X, Y` of the limit law,
///
/// ```text
/// dC/dt = E[a(X - Y)] - 2 (d - 1) C = 2 tr(C) I - 2 d C.
/// ```
///
/// The trace is conserved and the traceless part `C - tr(C)/d I` decays like
/// `exp(-2 d t)`. For the `n`-particle system the empirical covariance obeys
/// `dC/dt = (1 - 1/n) 2 tr(C) I - (2 d - 2/n) C` in expectation.
pub mod relaxation {
    use nalgebra::DMatrix;

    /// Exponential rate of `||C - tr(C)/d I||_F`: `-2 d`.
    pub fn anisotropy_rate(dim: usize) -> f64 {
        -2.0 * dim as f64
    }

    /// Same rate for an `n`-particle empirical covariance: `-(2 d - 2/n)`.
    pub fn anisotropy_rate_finite(dim: usize, n: usize) -> f64 {
        -(2.0 * dim as f64 - 2.0 / n as f64)
    }

    /// Right-hand side of the covariance equation; `n = None` for the limit law.
    pub fn covariance_rhs(cov: &DMatrix<f64>, n: Option<usize>) -> DMatrix<f64> {
        let d = cov.nrows();
        let inv_n = n.map_or(0.0, |n| 1.0 / n as f64);
        let tr = cov.trace();
        DMatrix::identity(d, d) * (2.0 * tr * (1.0 - inv_n)) - cov * (2.0 * d as f64 - 2.0 * inv_n)
    }

    /// `(d, rate)` rows for the dimensions used by the experiments.
    pub const TABLE: [(usize, f64); 4] = [(2, -4.0), (3, -6.0), (4, -8.0), (5, -10.0)];
}

#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean: Vec<f64>,
    /// Mean of `|x|^2` over particles.
    pub energy: f64,
    pub covariance: DMatrix<f64>,
}

pub fn moments(state: &ParticleState) -> Moments {
    let (n, d) = (state.n() as f64, state.dim());
    let mut mean = vec![0.0f64; d];
    let mut energy = 0.0;
    for p in state.iter() {
        for a in 0..d {
            mean[a] += p[a];
            energy += p[a] * p[a];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    energy /= n;
    // Centered second pass.
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for p in state.iter() {
        for a in 0..d {
            let da = p[a] - mean[a];
            for b in a..d {
                cov[(a, b)] += da * (p[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let c = cov[(a, b)] / n;
            cov[(a, b)] = c;
            cov[(b, a)] = c;
        }
    }
    Moments {
        mean,
        energy,
        covariance: cov,
    }
}

/// `||C - tr(C)/d I||_F`.
pub fn anisotropy_norm(cov: &DMatrix<f64>) -> f64 {
    let d = cov.nrows();
    let iso = cov.trace() / d as f64;
    let mut dev = cov.clone();
    for i in 0..d {
        dev[(i, i)] -= iso;
    }
    dev.norm()
}

/// Moment trajectories, one entry per snapshot.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub dim: usize,
    pub times: Vec<f64>,
    pub mean: Vec<Vec<f64>>,
    pub energy: Vec<f64>,
    /// Row-major `d x d` covariance per snapshot.
    pub covariance: Vec<Vec<f64>>,
    pub anisotropy_norm: Vec<f64>,
}

impl MomentReport {
    pub fn new(dim: usize) -> Self {
        MomentReport {
            dim,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn push(&mut self, time: f64, m: &Moments) {
        self.times.push(time);
        self.mean.push(m.mean.clone());
        self.energy.push(m.energy);
        self.covariance.push(m.covariance.transpose().iter().copied().collect());
        self.anisotropy_norm.push(anisotropy_norm(&m.covariance));
    }

    pub fn record(&mut self, state: &ParticleState) {
        if self.dim == 0 {
            self.dim = state.dim();
        }
        self.push(state.time, &moments(state));
    }

    pub fn covariance_at(&self, idx: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.covariance[idx])
    }

    /// Snapshot-wise average over replica reports sharing the same times.
    /// The anisotropy norm is recomputed from the averaged covariance.
    pub fn ensemble_mean(reports: &[MomentReport]) -> Result<MomentReport> {
        let first = reports
            .first()
            .ok_or_else(|| LandauError::FitDomain("no reports to average".into()))?;
        if reports.iter().any(|r| r.times != first.times || r.dim != first.dim) {
            return Err(LandauError::FitDomain("reports have different snapshot times".into()));
        }
        let r = reports.len() as f64;
        let mut out = MomentReport::new(first.dim);
        for t in 0..first.len() {
            let mean: Vec<f64> = (0..first.dim)
                .map(|c| reports.iter().map(|rep| rep.mean[t][c]).sum::<f64>() / r)
                .collect();
            let energy = reports.iter().map(|rep| rep.energy[t]).sum::<f64>() / r;
            let mut cov = DMatrix::zeros(first.dim, first.dim);
            for rep in reports {
                cov += rep.covariance_at(t);
            }
            cov /= r;
            out.push(
                first.times[t],
                &Moments {
                    mean,
                    energy,
                    covariance: cov,
                },
            );
        }
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let d = self.dim;
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((0..d).map(|c| format!("mean_{c}")));
        header.push("energy".into());
        for a in 0..d {
            for b in 0..d {
                header.push(format!("c_{a}{b}"));
            }
        }
        header.push("aniso".into());
        w.write_record(&header)?;
        for t in 0..self.len() {
            let mut row = vec![self.times[t]];
            row.extend_from_slice(&self.mean[t]);
            row.push(self.energy[t]);
            row.extend_from_slice(&self.covariance[t]);
            row.push(self.anisotropy_norm[t]);
            w.serialize(row)?;
        }
        w.flush().map_err(|e| LandauError::io("moment csv", e))?;
        Ok(())
    }
}

impl Observer for MomentReport {
    fn observe(&mut self, state: &ParticleState) -> std::result::Result<(), String> {
        self.record(state);
        Ok(())
    }
}

/// Least-squares fit of `log y = intercept + rate * t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

pub const MIN_FIT_SAMPLES: usize = 5;

/// Exponential fit of `values` against `times` restricted to `window`
/// (inclusive).
pub fn fit_log_decay(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<DecayFit> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(LandauError::FitDomain(format!("empty window [{lo}, {hi}]")));
    }
    let mut pts = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if t < lo || t > hi {
            continue;
        }
        if !(v > 0.0) || !v.is_finite() {
            return Err(LandauError::FitDomain(format!(
                "value {v} at t = {t} is not positive"
            )));
        }
        pts.push((t, v.ln()));
    }
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(LandauError::FitDomain(format!(
            "{} samples in window, need at least {MIN_FIT_SAMPLES}",
            pts.len()
        )));
    }
    let m = pts.len() as f64;
    let tx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ty = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - tx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - tx) * (p.1 - ty)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - ty).powi(2)).sum();
    let rate = sxy / sxx;
    let intercept = ty - rate * tx;
    let sse: f64 = pts.iter().map(|p| (p.1 - intercept - rate * p.0).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(DecayFit {
        rate,
        intercept,
        r_squared,
        window,
        samples: pts.len(),
    })
}

pub fn fit_anisotropy_decay(report: &MomentReport, window: (f64, f64)) -> Result<DecayFit> {
    fit_log_decay(&report.times, &report.anisotropy_norm, window)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservationDrift {
    /// `max_t |mean(t) - mean(0)|`.
    pub mean_drift: f64,
    /// `max_t |energy(t) - energy(0)| / energy(0)`, or the absolute value when
    /// `energy(0) = 0`.
    pub energy_drift: f64,
    pub energy_drift_relative: bool,
}

pub fn conservation_drift(report: &MomentReport) -> Result<ConservationDrift> {
    if report.is_empty() {
        return Err(LandauError::FitDomain("empty moment report".into()));
    }
    let m0 = &report.mean[0];
    let e0 = report.energy[0];
    let mean_drift = report
        .mean
        .iter()
        .map(|m| m.iter().zip(m0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let abs_drift = report
        .energy
        .iter()
        .map(|e| (e - e0).abs())
        .fold(0.0, f64::max);
    let relative = e0 > 0.0;
    Ok(ConservationDrift {
        mean_drift,
        energy_drift: if relative { abs_drift / e0 } else { abs_drift },
        energy_drift_relative: relative,
    })
}

/// Conditional expectation of the change of `(1/n) sum_i |x_i|^2` over one
/// Euler-Maruyama step of length `dt` from `state`:
///
/// ```text
/// (1/n) sum_i [ 2 dt <x_i, beta_i> + dt^2 |beta_i|^2 + (dt/n) sum_k tr a(x_i - x_k) ]
/// ```
///
/// with `beta_i = (1/n) sum_k b(x_i - x_k)`. For the Maxwell model the
/// order-`dt` terms cancel and only `dt^2 |beta|^2` remains.
pub fn expected_energy_increment(state: &ParticleState, model: &CoefficientModel, dt: f64) -> f64 {
    if let ModelKind::Maxwell { .. } = model.kind() {
        return maxwell_energy_increment(state, dt);
    }
    let (n, d) = (state.n(), state.dim());
    let beta = mean_field_drift(state, model);
    let mut diff = vec![0.0; d];
    let mut first_order = 0.0;
    let mut second_order = 0.0;
    for i in 0..n {
        let xi = state.particle(i);
        let bi = &beta[i * d..(i + 1) * d];
        let mut tr = 0.0;
        for xk in state.iter() {
            for c in 0..d {
                diff[c] = xi[c] - xk[c];
            }
            tr += model.diffusion_trace(&diff);
        }
        let inner: f64 = xi.iter().zip(bi).map(|(a, b)| a * b).sum();
        first_order += 2.0 * inner + tr / n as f64;
        second_order += bi.iter().map(|b| b * b).sum::<f64>();
    }
    (dt * first_order + dt * dt * second_order) / n as f64
}

/// Closed form for Maxwell: with `y_i = x_i - mean` and `s = mean |y|^2`,
/// `beta_i = -(d - 1) y_i` and `(1/n) sum_k tr a(x_i - x_k) = (d - 1)(|y_i|^2 + s)`.
fn maxwell_energy_increment(state: &ParticleState, dt: f64) -> f64 {
    let (n, d) = (state.n(), state.dim());
    let nf = n as f64;
    let c = d as f64 - 1.0;
    let mut mean = vec![0.0f64; d];
    for x in state.iter() {
        mean.iter_mut().zip(x).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let spread = state
        .iter()
        .map(|x| x.iter().zip(&mean).map(|(v, m)| (v - m).powi(2)).sum::<f64>())
        .sum::<f64>()
        / nf;
    let mut first_order = 0.0;
    let mut second_order = 0.0;
    for x in state.iter() {
        let mut inner = 0.0;
        let mut yy = 0.0;
        for (v, m) in x.iter().zip(&mean) {
            let y = v - m;
            inner += v * y;
            yy += y * y;
        }
        first_order += -2.0 * c * inner + c * (yy + spread);
        second_order += c * c * yy;
    }
    (dt * first_order + dt * dt * second_order) / nf
}

/// Mean and standard error of a sample.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}
