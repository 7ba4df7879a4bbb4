//! Euler-Maruyama integration of the n-particle Landau-type system
//!
//! ```text
//! X^i <- X^i + sqrt(dt / n) * sum_k sigma(X^i - X^k) xi^{ik} + (dt / n) * sum_k b(X^i - X^k)
//! ```
//!
//! with `xi^{ik}` standard Gaussian d-vectors drawn from a [`NoiseSource`]
//! keyed by `(step, i, k, coordinate)`. The `k = i` term is kept.

use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{CoefficientModel, ModelConfig};
use crate::error::{LandauError, Result};
use crate::noise::{init_rng, NoiseSource, NoiseStream};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_SNAPSHOT_STRIDE: usize = 100;
/// Cap on `n * dim * snapshots` values a config may ask observers to see.
pub const DEFAULT_SNAPSHOT_BUDGET: u64 = 2_000_000_000;

/// Initial law `P_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialLaw {
    Gaussian { mean: Vec<f64>, cov: Vec<Vec<f64>> },
    PointMass { at: Vec<f64> },
}

impl InitialLaw {
    pub fn standard_gaussian(dim: usize) -> Self {
        InitialLaw::Gaussian {
            mean: vec![0.0; dim],
            cov: (0..dim)
                .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
        }
    }

    pub fn diagonal_gaussian(variances: &[f64]) -> Self {
        let d = variances.len();
        InitialLaw::Gaussian {
            mean: vec![0.0; d],
            cov: (0..d)
                .map(|i| (0..d).map(|j| if i == j { variances[i] } else { 0.0 }).collect())
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            InitialLaw::Gaussian { mean, .. } => mean.len(),
            InitialLaw::PointMass { at } => at.len(),
        }
    }

    /// Returns the Cholesky factor for Gaussian laws after checking shapes.
    fn cholesky(&self, dim: usize) -> Result<Option<DMatrix<f64>>> {
        if self.dim() != dim {
            return Err(LandauError::config(
                "init",
                format!("initial law has dimension {}, expected {dim}", self.dim()),
            ));
        }
        match self {
            InitialLaw::PointMass { at } => {
                if at.iter().any(|x| !x.is_finite()) {
                    return Err(LandauError::config("init.at", "non-finite coordinate"));
                }
                Ok(None)
            }
            InitialLaw::Gaussian { mean, cov } => {
                if mean.iter().any(|x| !x.is_finite()) {
                    return Err(LandauError::config("init.mean", "non-finite coordinate"));
                }
                if cov.len() != dim || cov.iter().any(|r| r.len() != dim) {
                    return Err(LandauError::config("init.cov", format!("must be {dim}x{dim}")));
                }
                let m = DMatrix::from_fn(dim, dim, |i, j| cov[i][j]);
                if (&m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
                    return Err(LandauError::config("init.cov", "not symmetric"));
                }
                // Allow PSD covariances (zero variance in some direction).
                let eig = m.clone().symmetric_eigen();
                if eig.eigenvalues.iter().any(|&l| l < -1e-12 * m.amax().max(1.0)) {
                    return Err(LandauError::config("init.cov", "not positive semi-definite"));
                }
                let sqrt_vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
                let root = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals);
                Ok(Some(root))
            }
        }
    }

    /// Draws `n` i.i.d. points (row-major `n x dim`) from the law.
    pub fn sample_into<R: Rng>(&self, n: usize, dim: usize, rng: &mut R) -> Result<Vec<f64>> {
        let root = self.cholesky(dim)?;
        let mut out = Vec::with_capacity(n * dim);
        match (self, root) {
            (InitialLaw::PointMass { at }, _) => {
                for _ in 0..n {
                    out.extend_from_slice(at);
                }
            }
            (InitialLaw::Gaussian { mean, .. }, Some(root)) => {
                let mut z = DVector::zeros(dim);
                for _ in 0..n {
                    for c in 0..dim {
                        z[c] = rng.sample(StandardNormal);
                    }
                    let x = &root * &z;
                    out.extend(mean.iter().zip(x.iter()).map(|(m, v)| m + v));
                }
            }
            (InitialLaw::Gaussian { .. }, None) => unreachable!("gaussian law always has a root"),
        }
        Ok(out)
    }
}

/// Positions of `n` particles in `R^dim` at `time`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    n: usize,
    dim: usize,
    positions: Vec<f64>,
    pub time: f64,
    pub step_index: u64,
}

impl ParticleState {
    pub fn new(n: usize, dim: usize, positions: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(LandauError::config("n", "need at least one particle"));
        }
        if dim == 0 {
            return Err(LandauError::config("dim", "dimension must be at least 1"));
        }
        if positions.len() != n * dim {
            return Err(LandauError::config(
                "positions",
                format!("expected {} values, got {}", n * dim, positions.len()),
            ));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(LandauError::config("positions", "non-finite entry"));
        }
        Ok(ParticleState {
            n,
            dim,
            positions,
            time: 0.0,
            step_index: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.positions.chunks_exact(self.dim)
    }
}

fn default_stride() -> usize {
    DEFAULT_SNAPSHOT_STRIDE
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_budget() -> u64 {
    DEFAULT_SNAPSHOT_BUDGET
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub dim: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub model: ModelConfig,
    pub init: InitialLaw,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    #[serde(default = "default_budget")]
    pub snapshot_budget: u64,
}

/// Step schedule: `full` steps of `dt` followed by an optional shorter step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub full: u64,
    pub partial: Option<f64>,
}

impl Schedule {
    pub fn steps(&self) -> u64 {
        self.full + u64::from(self.partial.is_some())
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(LandauError::config("n", "need at least one particle"));
        }
        if self.dim == 0 {
            return Err(LandauError::config("dim", "dimension must be at least 1"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(LandauError::config("dt", format!("must be > 0, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(LandauError::config("t_end", format!("must be >= 0, got {}", self.t_end)));
        }
        if self.t_end > 0.0 && self.dt > self.t_end {
            return Err(LandauError::config(
                "dt",
                format!("dt = {} exceeds t_end = {}", self.dt, self.t_end),
            ));
        }
        if self.snapshot_stride == 0 {
            return Err(LandauError::config("snapshot_stride", "must be >= 1"));
        }
        let snapshots = self.schedule().steps() / self.snapshot_stride as u64 + 2;
        let values = (self.n as u64)
            .saturating_mul(self.dim as u64)
            .saturating_mul(snapshots);
        if values > self.snapshot_budget {
            return Err(LandauError::config(
                "snapshot_stride",
                format!(
                    "{values} snapshot values exceed the budget of {}",
                    self.snapshot_budget
                ),
            ));
        }
        self.init.cholesky(self.dim)?;
        Ok(())
    }

    pub fn schedule(&self) -> Schedule {
        if self.t_end <= 0.0 {
            return Schedule {
                full: 0,
                partial: None,
            };
        }
        let ratio = self.t_end / self.dt;
        let mut full = (ratio + 1e-9).floor() as u64;
        let mut rest = self.t_end - full as f64 * self.dt;
        if rest < 0.0 {
            // ratio rounded up to the next integer
            rest = 0.0;
            full = full.max(1);
        }
        let partial = (rest > 1e-9 * self.dt).then_some(rest);
        Schedule { full, partial }
    }

    pub fn build_model(&self) -> Result<CoefficientModel> {
        self.model.build(self.dim)
    }
}

/// Draws the initial ensemble for `seed`.
pub fn sample_initial(init: &InitialLaw, n: usize, dim: usize, seed: u64) -> Result<ParticleState> {
    if n == 0 {
        return Err(LandauError::config("n", "need at least one particle"));
    }
    let mut rng = init_rng(seed, n);
    let positions = init.sample_into(n, dim, &mut rng)?;
    ParticleState::new(n, dim, positions)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

/// Particles handed to one rayon task.
const PARALLEL_CHUNK: usize = 16;

fn update_particle(
    i: usize,
    state: &ParticleState,
    model: &CoefficientModel,
    noise: &dyn NoiseSource,
    step: u64,
    scales: (f64, f64),
    scratch: &mut Scratch,
    out: &mut [f64],
) {
    let d = state.dim;
    let Scratch { row, noise_acc, drift_acc } = scratch;
    noise.fill_row(step, i, row);
    noise_acc.iter_mut().for_each(|x| *x = 0.0);
    drift_acc.iter_mut().for_each(|x| *x = 0.0);
    let xi = state.particle(i);
    model.interact_row(xi, &state.positions, row, noise_acc, drift_acc);
    let (noise_scale, drift_scale) = scales;
    for c in 0..d {
        out[c] = xi[c] + noise_scale * noise_acc[c] + drift_scale * drift_acc[c];
    }
}

struct Scratch {
    row: Vec<f64>,
    noise_acc: Vec<f64>,
    drift_acc: Vec<f64>,
}

impl Scratch {
    fn new(n: usize, d: usize) -> Self {
        Scratch {
            row: vec![0.0; n * d],
            noise_acc: vec![0.0; d],
            drift_acc: vec![0.0; d],
        }
    }
}

/// One Euler-Maruyama step of length `dt`, using the noise rows of step
/// `state.step_index`. Serial and parallel execution give identical bits.
pub fn step(
    state: &ParticleState,
    model: &CoefficientModel,
    dt: f64,
    noise: &dyn NoiseSource,
    exec: Execution,
) -> Result<ParticleState> {
    let (n, d) = (state.n, state.dim);
    if model.dim() != d {
        return Err(LandauError::config(
            "model",
            format!("model dimension {} does not match state dimension {d}", model.dim()),
        ));
    }
    let nf = n as f64;
    let scales = ((dt / nf).sqrt(), dt / nf);
    let step_idx = state.step_index;
    let mut next = vec![0.0; n * d];
    match exec {
        Execution::Serial => {
            let mut scratch = Scratch::new(n, d);
            for (i, out) in next.chunks_exact_mut(d).enumerate() {
                update_particle(i, state, model, noise, step_idx, scales, &mut scratch, out);
            }
        }
        Execution::Parallel => {
            next.par_chunks_mut(d * PARALLEL_CHUNK)
                .enumerate()
                .for_each_init(
                    || Scratch::new(n, d),
                    |scratch, (chunk, outs)| {
                        for (j, out) in outs.chunks_exact_mut(d).enumerate() {
                            let i = chunk * PARALLEL_CHUNK + j;
                            update_particle(i, state, model, noise, step_idx, scales, scratch, out);
                        }
                    },
                );
        }
    }
    if let Some(pos) = next.iter().position(|x| !x.is_finite()) {
        return Err(LandauError::IntegratorBlowup {
            step: step_idx,
            particle: pos / d,
        });
    }
    Ok(ParticleState {
        n,
        dim: d,
        positions: next,
        time: state.time + dt,
        step_index: step_idx + 1,
    })
}

/// Receives a view of the state at every snapshot.
pub trait Observer {
    fn observe(&mut self, state: &ParticleState) -> std::result::Result<(), String>;
}

impl<F> Observer for F
where
    F: FnMut(&ParticleState) -> std::result::Result<(), String>,
{
    fn observe(&mut self, state: &ParticleState) -> std::result::Result<(), String> {
        self(state)
    }
}

/// Opt-in storage of every observed state.
#[derive(Debug, Default, Clone)]
pub struct TrajectoryRecorder {
    pub snapshots: Vec<ParticleState>,
}

impl Observer for TrajectoryRecorder {
    fn observe(&mut self, state: &ParticleState) -> std::result::Result<(), String> {
        self.snapshots.push(state.clone());
        Ok(())
    }
}

/// Streams observed states to CSV with header `t,particle,x0,...`.
pub struct SnapshotWriter<W: std::io::Write> {
    writer: csv::Writer<W>,
    dim: usize,
    header_written: bool,
}

impl SnapshotWriter<std::io::BufWriter<std::fs::File>> {
    pub fn create(path: &Path, dim: usize) -> Result<Self> {
        let file = std::fs::File::create(path).map_err(|e| LandauError::io(path, e))?;
        Ok(Self::new(std::io::BufWriter::new(file), dim))
    }
}

impl<W: std::io::Write> SnapshotWriter<W> {
    pub fn new(inner: W, dim: usize) -> Self {
        Self {
            writer: csv::Writer::from_writer(inner),
            dim,
            header_written: false,
        }
    }

    pub fn write(&mut self, state: &ParticleState) -> Result<()> {
        if state.dim != self.dim {
            return Err(LandauError::Measure(format!(
                "snapshot of dimension {} written to a {}-d file",
                state.dim, self.dim
            )));
        }
        if !self.header_written {
            let mut header = vec!["t".to_string(), "particle".to_string()];
            header.extend((0..self.dim).map(|c| format!("x{c}")));
            self.writer.write_record(&header)?;
            self.header_written = true;
        }
        let t = state.time.to_string();
        let mut record = Vec::with_capacity(self.dim + 2);
        for (i, x) in state.iter().enumerate() {
            record.clear();
            record.push(t.clone());
            record.push(i.to_string());
            record.extend(x.iter().map(f64::to_string));
            self.writer.write_record(&record)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.writer.flush().map_err(|e| LandauError::io(Path::new("<snapshot>"), e))?;
        self.writer
            .into_inner()
            .map_err(|e| LandauError::Measure(format!("flushing snapshots: {e}")))
    }
}

impl<W: std::io::Write> Observer for SnapshotWriter<W> {
    fn observe(&mut self, state: &ParticleState) -> std::result::Result<(), String> {
        self.write(state).map_err(|e| e.to_string())
    }
}

/// Reads a snapshot CSV back into `(time, state)` pairs in file order.
/// Particle indices must run `0..n` within each time.
pub fn read_snapshots(path: &Path) -> Result<Vec<ParticleState>> {
    let file = std::fs::File::open(path).map_err(|e| LandauError::io(path, e))?;
    read_snapshots_from(file)
}

pub fn read_snapshots_from<R: std::io::Read>(reader: R) -> Result<Vec<ParticleState>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    let dim = header.len().saturating_sub(2);
    let valid = header.get(0) == Some("t")
        && header.get(1) == Some("particle")
        && dim >= 1
        && (0..dim).all(|c| header.get(c + 2) == Some(format!("x{c}").as_str()));
    if !valid {
        return Err(LandauError::Measure(
            "snapshot header must be t,particle,x0,...".into(),
        ));
    }
    let mut out = Vec::new();
    let mut current: Option<(f64, Vec<f64>)> = None;
    let flush = |cur: Option<(f64, Vec<f64>)>, out: &mut Vec<ParticleState>| -> Result<()> {
        if let Some((t, pos)) = cur {
            let n = pos.len() / dim;
            let mut st = ParticleState::new(n, dim, pos)?;
            st.time = t;
            st.step_index = out.len() as u64;
            out.push(st);
        }
        Ok(())
    };
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| LandauError::Measure(format!("row {}: bad field {k}", line + 2)))
        };
        let t = parse(0)?;
        let particle: usize = rec
            .get(1)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| LandauError::Measure(format!("row {}: bad particle index", line + 2)))?;
        if current.as_ref().is_some_and(|(ct, _)| *ct != t) {
            flush(current.take(), &mut out)?;
        }
        let entry = current.get_or_insert_with(|| (t, Vec::new()));
        if particle != entry.1.len() / dim {
            return Err(LandauError::Measure(format!(
                "row {}: particle index {particle} out of order",
                line + 2
            )));
        }
        for c in 0..dim {
            entry.1.push(parse(c + 2)?);
        }
    }
    flush(current.take(), &mut out)?;
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub final_state: ParticleState,
    pub steps: u64,
    pub observations: usize,
    pub gaussian_draws: u64,
    pub wall_time: Duration,
}

/// Runs `cfg` with its own model, the seed's [`NoiseStream`] and parallel
/// execution, starting from `sample_initial(cfg.init, ..., cfg.seed)`.
pub fn simulate(cfg: &SimConfig, observers: &mut [&mut dyn Observer]) -> Result<SimOutcome> {
    cfg.validate()?;
    let model = cfg.build_model()?;
    let noise = NoiseStream::new(cfg.seed);
    let initial = sample_initial(&cfg.init, cfg.n, cfg.dim, cfg.seed)?;
    simulate_from(cfg, initial, &model, &noise, Execution::Parallel, observers)
}

/// Integrates from `initial` to `cfg.t_end`. Observers see the state at
/// step 0, every `cfg.snapshot_stride` steps, and at the final step.
pub fn simulate_from(
    cfg: &SimConfig,
    initial: ParticleState,
    model: &CoefficientModel,
    noise: &dyn NoiseSource,
    exec: Execution,
    observers: &mut [&mut dyn Observer],
) -> Result<SimOutcome> {
    cfg.validate()?;
    if initial.n != cfg.n || initial.dim != cfg.dim {
        return Err(LandauError::config("init", "initial state shape does not match n/dim"));
    }
    let started = Instant::now();
    let schedule = cfg.schedule();
    let total = schedule.steps();
    let stride = cfg.snapshot_stride as u64;
    let mut observations = 0usize;
    let mut notify = |state: &ParticleState, observers: &mut [&mut dyn Observer]| -> Result<()> {
        for obs in observers.iter_mut() {
            obs.observe(state).map_err(|message| LandauError::Observer {
                step: state.step_index,
                message,
            })?;
        }
        observations += 1;
        Ok(())
    };

    let mut state = initial;
    state.time = 0.0;
    state.step_index = 0;
    notify(&state, observers)?;
    for s in 0..total {
        let dt = if s < schedule.full {
            cfg.dt
        } else {
            schedule.partial.expect("partial step scheduled")
        };
        let mut next = step(&state, model, dt, noise, exec)?;
        // Avoid accumulating rounding in the clock.
        next.time = if s + 1 == total {
            cfg.t_end
        } else {
            (s + 1) as f64 * cfg.dt
        };
        state = next;
        let idx = state.step_index;
        if idx.is_multiple_of(stride) || idx == total {
            notify(&state, observers)?;
        }
    }
    let n = cfg.n as u64;
    Ok(SimOutcome {
        final_state: state,
        steps: total,
        observations,
        gaussian_draws: n * n * cfg.dim as u64 * total,
        wall_time: started.elapsed(),
    })
}

/// Mean over particles of the drift `(1/n) sum_k b(x_i - x_k)`, per particle.
pub fn mean_field_drift(state: &ParticleState, model: &CoefficientModel) -> Vec<f64> {
    let (n, d) = (state.n, state.dim);
    let mut out = vec![0.0; n * d];
    let mut diff = vec![0.0; d];
    for (i, o) in out.chunks_exact_mut(d).enumerate() {
        let xi = state.particle(i);
        for xk in state.iter() {
            for c in 0..d {
                diff[c] = xi[c] - xk[c];
            }
            model.add_drift(&diff, o);
        }
        o.iter_mut().for_each(|x| *x /= n as f64);
    }
    out
}

/// `sum_i [ (1/n) sum_k tr a(x_i - x_k) + 2 <x_i, (1/n) sum_k b(x_i - x_k)> ]`,
/// the generator of `sum_i |x_i|^2` applied to the state. Returned together
/// with the sum of absolute values of its terms, the natural scale for a
/// relative zero test.
pub fn energy_generator(state: &ParticleState, model: &CoefficientModel) -> (f64, f64) {
    let (n, d) = (state.n, state.dim);
    let drift = mean_field_drift(state, model);
    let mut diff = vec![0.0; d];
    let (mut total, mut scale) = (0.0, 0.0);
    for i in 0..n {
        let xi = state.particle(i);
        let mut tr = 0.0;
        for xk in state.iter() {
            for c in 0..d {
                diff[c] = xi[c] - xk[c];
            }
            tr += model.diffusion_trace(&diff);
        }
        tr /= n as f64;
        let inner: f64 = xi.iter().zip(&drift[i * d..(i + 1) * d]).map(|(a, b)| a * b).sum();
        total += tr + 2.0 * inner;
        scale += tr.abs() + 2.0 * inner.abs();
    }
    (total, scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{make_model, ModelKind, SigmaVariant};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn maxwell(d: usize) -> CoefficientModel {
        make_model(
            ModelKind::Maxwell {
                variant: SigmaVariant::Projection,
            },
            d,
        )
        .unwrap()
    }

    fn config(n: usize, dim: usize, t_end: f64, dt: f64) -> SimConfig {
        SimConfig {
            n,
            dim,
            dt,
            t_end,
            seed: 17,
            model: ModelConfig::maxwell(SigmaVariant::Projection),
            init: InitialLaw::standard_gaussian(dim),
            snapshot_stride: 10,
            snapshot_budget: DEFAULT_SNAPSHOT_BUDGET,
        }
    }

    fn random_state(n: usize, d: usize, seed: u64) -> ParticleState {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let pos = (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal) * 2.0 + 0.5).collect();
        ParticleState::new(n, d, pos).unwrap()
    }

    #[test]
    fn sample_initial_shapes_and_point_mass() {
        let s = sample_initial(&InitialLaw::standard_gaussian(3), 4, 3, 1).unwrap();
        assert_eq!(s.positions().len(), 12);
        assert!(s.positions().iter().all(|x| x.is_finite()));

        let at = vec![1.5, -2.0];
        let s = sample_initial(&InitialLaw::PointMass { at: at.clone() }, 6, 2, 1).unwrap();
        assert!(s.iter().all(|p| p == at.as_slice()));

        let bad = sample_initial(&InitialLaw::standard_gaussian(2), 4, 3, 1);
        assert!(bad.is_err());
    }

    #[test]
    fn sample_initial_covariance_within_error_bars() {
        let n = 100_000;
        let s = sample_initial(&InitialLaw::diagonal_gaussian(&[2.0, 1.0, 1.0]), n, 3, 5).unwrap();
        let target: [[f64; 3]; 3] = [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        for a in 0..3 {
            for b in 0..3 {
                let mean_ab: f64 = s.iter().map(|p| p[a] * p[b]).sum::<f64>() / n as f64;
                // Var(X_a X_b) = C_aa C_bb + C_ab^2 for a centred gaussian.
                let se = ((target[a][a] * target[b][b] + target[a][b].powi(2)) / n as f64).sqrt();
                assert!(
                    (mean_ab - target[a][b]).abs() < 3.0 * se,
                    "entry ({a},{b}) = {mean_ab}"
                );
            }
        }
    }

    #[test]
    fn single_maxwell_particle_is_frozen() {
        let cfg = config(1, 3, 0.05, 1e-3);
        let out = simulate(&cfg, &mut []).unwrap();
        let init = sample_initial(&cfg.init, 1, 3, cfg.seed).unwrap();
        assert_eq!(out.final_state.positions(), init.positions());
        assert_eq!(out.steps, 50);
    }

    #[test]
    fn ou_step_matches_direct_summation() {
        let (n, d, dt) = (5, 2, 0.01);
        let model = make_model(ModelKind::IsotropicOu, d).unwrap();
        let noise = NoiseStream::new(3);
        let mut state = random_state(n, d, 8);
        state.step_index = 4;
        let next = step(&state, &model, dt, &noise, Execution::Serial).unwrap();
        let center: Vec<f64> = (0..d)
            .map(|c| state.iter().map(|p| p[c]).sum::<f64>() / n as f64)
            .collect();
        for i in 0..n {
            for c in 0..d {
                let noise_sum: f64 = (0..n).map(|k| noise.deviate(4, i, k, c, d)).sum();
                let expect = state.particle(i)[c] + (dt / n as f64).sqrt() * noise_sum
                    - dt * (state.particle(i)[c] - center[c]);
                assert_abs_diff_eq!(next.particle(i)[c], expect, epsilon = 1e-12);
            }
        }
        assert_eq!(next.step_index, 5);
    }

    #[test]
    fn maxwell_step_matches_matrix_form() {
        let (n, d, dt) = (4, 3, 0.02);
        for variant in [SigmaVariant::Projection, SigmaVariant::Cross3] {
            let model = make_model(ModelKind::Maxwell { variant }, d).unwrap();
            let noise = NoiseStream::new(99);
            let state = random_state(n, d, 2);
            let next = step(&state, &model, dt, &noise, Execution::Serial).unwrap();
            for i in 0..n {
                let mut expect = DVector::from_column_slice(state.particle(i));
                for k in 0..n {
                    let z: Vec<f64> = (0..d).map(|c| state.particle(i)[c] - state.particle(k)[c]).collect();
                    let h = DVector::from_fn(d, |c, _| noise.deviate(0, i, k, c, d));
                    expect += model.sigma(&z) * h * (dt / n as f64).sqrt();
                    expect += DVector::from_vec(model.drift(&z)) * (dt / n as f64);
                }
                for c in 0..d {
                    assert_abs_diff_eq!(next.particle(i)[c], expect[c], epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn equal_seeds_replay_bit_identically() {
        let cfg = config(30, 3, 0.02, 1e-3);
        let a = simulate(&cfg, &mut []).unwrap();
        let b = simulate(&cfg, &mut []).unwrap();
        assert_eq!(a.final_state.positions(), b.final_state.positions());

        let model = cfg.build_model().unwrap();
        let noise = NoiseStream::new(cfg.seed);
        let init = sample_initial(&cfg.init, cfg.n, cfg.dim, cfg.seed).unwrap();
        let serial = simulate_from(&cfg, init, &model, &noise, Execution::Serial, &mut []).unwrap();
        assert_eq!(serial.final_state.positions(), a.final_state.positions());
    }

    #[test]
    fn empty_horizon_returns_initial_state() {
        let cfg = config(8, 2, 0.0, 1e-3);
        let out = simulate(&cfg, &mut []).unwrap();
        assert_eq!(out.steps, 0);
        assert_eq!(out.observations, 1);
        let init = sample_initial(&cfg.init, 8, 2, cfg.seed).unwrap();
        assert_eq!(out.final_state.positions(), init.positions());
    }

    #[test]
    fn observation_count_with_stride() {
        let cfg = config(3, 2, 0.1, 1e-3);
        let mut times = Vec::new();
        let mut obs = |s: &ParticleState| {
            times.push(s.time);
            Ok(())
        };
        let out = simulate(&cfg, &mut [&mut obs]).unwrap();
        assert_eq!(out.steps, 100);
        assert_eq!(out.observations, 11);
        assert_eq!(times.len(), 11);
        assert_eq!(*times.last().unwrap(), 0.1);
        assert_eq!(out.gaussian_draws, 3 * 3 * 2 * 100);
    }

    #[test]
    fn partial_final_step_reaches_horizon() {
        let cfg = config(3, 2, 0.0105, 1e-3);
        let sched = cfg.schedule();
        assert_eq!(sched.full, 10);
        assert_abs_diff_eq!(sched.partial.unwrap(), 0.0005, epsilon = 1e-12);
        let out = simulate(&cfg, &mut []).unwrap();
        assert_eq!(out.steps, 11);
        assert_eq!(out.final_state.time, 0.0105);
    }

    #[test]
    fn observer_failure_aborts() {
        let cfg = config(3, 2, 0.1, 1e-3);
        let mut obs = |s: &ParticleState| {
            if s.step_index >= 20 {
                Err("disk full".to_string())
            } else {
                Ok(())
            }
        };
        match simulate(&cfg, &mut [&mut obs]) {
            Err(LandauError::Observer { step, message }) => {
                assert_eq!(step, 20);
                assert_eq!(message, "disk full");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = config(3, 2, 1.0, 0.0);
        assert!(matches!(cfg.validate(), Err(LandauError::Config { field, .. }) if field == "dt"));
        cfg.dt = 2.0;
        assert!(cfg.validate().is_err());
        cfg.dt = 1e-3;
        cfg.snapshot_budget = 10;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn blowup_is_reported_with_step() {
        let mut cfg = config(20, 3, 1000.0, 1.0);
        cfg.init = InitialLaw::diagonal_gaussian(&[1e300, 1e300, 1e300]);
        match simulate(&cfg, &mut []) {
            Err(LandauError::IntegratorBlowup { step, .. }) => assert!(step < 1000),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn maxwell_total_drift_vanishes() {
        for seed in 0..20 {
            let state = random_state(40, 3, seed);
            let drift = mean_field_drift(&state, &maxwell(3));
            for c in 0..3 {
                let total: f64 = drift.chunks_exact(3).map(|b| b[c]).sum::<f64>() * 40.0;
                assert!(total.abs() <= 1e-10, "total drift {total}");
            }
        }
    }

    #[test]
    fn maxwell_energy_generator_vanishes() {
        for seed in 0..100 {
            let state = random_state(50, 3, 1000 + seed);
            let (total, scale) = energy_generator(&state, &maxwell(3));
            assert!(total.abs() <= 1e-8 * scale, "{total} vs scale {scale}");
        }
    }

    /// Relabels particles: particle `i` of the permuted system uses the noise
    /// of pair `(perm[i], perm[k])` of the base system.
    struct Relabeled<'a> {
        base: &'a NoiseStream,
        perm: Vec<usize>,
        dim: usize,
    }

    impl NoiseSource for Relabeled<'_> {
        fn fill_row(&self, step: u64, particle: usize, out: &mut [f64]) {
            let d = self.dim;
            let mut base_row = vec![0.0; out.len()];
            self.base.fill_row(step, self.perm[particle], &mut base_row);
            for (k, chunk) in out.chunks_exact_mut(d).enumerate() {
                let pk = self.perm[k];
                chunk.copy_from_slice(&base_row[pk * d..(pk + 1) * d]);
            }
        }
    }

    #[test]
    fn exchangeability_under_relabeling() {
        let (n, d, dt) = (3, 3, 0.05);
        let model = maxwell(d);
        let base = NoiseStream::new(12);
        let x0 = random_state(n, d, 4);
        let perm = vec![2, 0, 1];
        let permuted_pos: Vec<f64> = perm.iter().flat_map(|&p| x0.particle(p).to_vec()).collect();
        let y0 = ParticleState::new(n, d, permuted_pos).unwrap();
        let relabeled = Relabeled {
            base: &base,
            perm: perm.clone(),
            dim: d,
        };
        let (mut x, mut y) = (x0, y0);
        for _ in 0..2 {
            x = step(&x, &model, dt, &base, Execution::Serial).unwrap();
            y = step(&y, &model, dt, &relabeled, Execution::Serial).unwrap();
        }
        for (i, &p) in perm.iter().enumerate() {
            for c in 0..d {
                assert_abs_diff_eq!(y.particle(i)[c], x.particle(p)[c], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn snapshot_csv_round_trip() {
        let mut st = random_state(5, 3, 4);
        let mut w = SnapshotWriter::new(Vec::new(), 3);
        w.write(&st).unwrap();
        st.time = 0.25;
        w.write(&st).unwrap();
        let bytes = w.finish().unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("t,particle,x0,x1,x2\n"));
        let back = read_snapshots_from(bytes.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].time, 0.25);
        assert_eq!(back[1].positions(), st.positions());
    }

    #[test]
    fn snapshot_reader_rejects_bad_header() {
        assert!(read_snapshots_from("a,b,c\n1,2,3\n".as_bytes()).is_err());
        assert!(read_snapshots_from("t,particle,x0\n0,1,3\n".as_bytes()).is_err());
    }
}
