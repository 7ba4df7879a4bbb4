//! Diffusion and drift coefficients `(sigma, b)` for the interaction kernel.
//!
//! The Maxwell-molecule Landau model uses `a(v) = |v|^2 I - v v^T` and
//! `b = div a = -(d - 1) v`. The square root `sigma` with `sigma sigma^T = a`
//! is not unique; two constructions are offered:
//!
//! * `Projection`: `|v| (I - v_hat v_hat^T)`, available in every dimension,
//!   defined as zero at `v = 0` by continuity.
//! * `Cross3`: the cross-product matrix `K h = v x h`, only in `d = 3`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{LandauError, Result};

/// Tolerance on the smallest eigenvalue of `sigma sigma^T`, relative to its scale.
pub const PSD_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaVariant {
    #[default]
    Projection,
    Cross3,
}

/// Symmetric positive semi-definite `d x d` matrix `a = sigma sigma^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionMatrix(DMatrix<f64>);

impl DiffusionMatrix {
    /// Wraps `m` after symmetrizing away rounding noise. Returns `None` when `m`
    /// is not square or is visibly asymmetric.
    pub fn new(m: DMatrix<f64>) -> Option<Self> {
        if !m.is_square() {
            return None;
        }
        let scale = m.amax().max(1.0);
        let asym = (&m - m.transpose()).amax();
        if asym > 1e-10 * scale {
            return None;
        }
        let sym = (&m + m.transpose()) * 0.5;
        Some(DiffusionMatrix(sym))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        self.0
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_psd(&self) -> bool {
        let scale = self.0.amax().max(1.0);
        self.min_eigenvalue() >= -PSD_TOLERANCE * scale
    }
}

/// `a(v) = |v|^2 I - v v^T`.
pub fn maxwell_a(v: &[f64]) -> DiffusionMatrix {
    let d = v.len();
    let norm2: f64 = v.iter().map(|x| x * x).sum();
    let m = DMatrix::from_fn(d, d, |i, j| {
        let diag = if i == j { norm2 } else { 0.0 };
        diag - v[i] * v[j]
    });
    DiffusionMatrix(m)
}

/// Row divergence of `maxwell_a`: `b(v) = -(d - 1) v`.
pub fn maxwell_b(v: &[f64]) -> Vec<f64> {
    let c = -((v.len() as f64) - 1.0);
    v.iter().map(|x| c * x).collect()
}

/// A square root of `maxwell_a(v)`.
pub fn maxwell_sigma(v: &[f64], variant: SigmaVariant) -> Result<DMatrix<f64>> {
    let d = v.len();
    match variant {
        SigmaVariant::Projection => {
            let norm2: f64 = v.iter().map(|x| x * x).sum();
            if norm2 == 0.0 {
                return Ok(DMatrix::zeros(d, d));
            }
            let norm = norm2.sqrt();
            Ok(DMatrix::from_fn(d, d, |i, j| {
                let diag = if i == j { norm } else { 0.0 };
                diag - v[i] * v[j] / norm
            }))
        }
        SigmaVariant::Cross3 => {
            if d != 3 {
                return Err(LandauError::config(
                    "sigma_variant",
                    format!("cross3 requires dim = 3, got {d}"),
                ));
            }
            Ok(DMatrix::from_row_slice(
                3,
                3,
                &[0.0, -v[2], v[1], v[2], 0.0, -v[0], -v[1], v[0], 0.0],
            ))
        }
    }
}

pub type SigmaFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
pub type DriftFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Constructor input for [`make_model`].
#[derive(Clone)]
pub enum ModelKind {
    Maxwell { variant: SigmaVariant },
    /// `sigma = I`, `b(v) = -v`.
    IsotropicOu,
    Custom {
        name: String,
        sigma: SigmaFn,
        drift: DriftFn,
    },
}

impl fmt::Debug for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Maxwell { variant } => {
                f.debug_struct("Maxwell").field("variant", variant).finish()
            }
            ModelKind::IsotropicOu => f.write_str("IsotropicOu"),
            ModelKind::Custom { name, .. } => f.debug_struct("Custom").field("name", name).finish(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CoefficientModel {
    dim: usize,
    name: String,
    kind: ModelKind,
    degenerate: Option<String>,
}

impl CoefficientModel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    /// Explanation when the model produces no dynamics at all (Maxwell in `d = 1`).
    pub fn degeneracy(&self) -> Option<&str> {
        self.degenerate.as_deref()
    }

    pub fn sigma(&self, v: &[f64]) -> DMatrix<f64> {
        match &self.kind {
            ModelKind::Maxwell { variant } => {
                maxwell_sigma(v, *variant).expect("variant checked at construction")
            }
            ModelKind::IsotropicOu => DMatrix::identity(self.dim, self.dim),
            ModelKind::Custom { sigma, .. } => sigma(v),
        }
    }

    pub fn drift(&self, v: &[f64]) -> Vec<f64> {
        match &self.kind {
            ModelKind::Maxwell { .. } => maxwell_b(v),
            ModelKind::IsotropicOu => v.iter().map(|x| -x).collect(),
            ModelKind::Custom { drift, .. } => drift(v),
        }
    }

    /// `sigma(v) sigma(v)^T`.
    pub fn diffusion(&self, v: &[f64]) -> DiffusionMatrix {
        match &self.kind {
            ModelKind::Maxwell { .. } => maxwell_a(v),
            _ => {
                let s = self.sigma(v);
                let a = &s * s.transpose();
                let sym = (&a + a.transpose()) * 0.5;
                DiffusionMatrix(sym)
            }
        }
    }

    /// `out += sigma(z) h`, without building the matrix for the built-in models.
    #[inline]
    pub(crate) fn add_sigma_apply(&self, z: &[f64], h: &[f64], out: &mut [f64]) {
        match &self.kind {
            ModelKind::Maxwell {
                variant: SigmaVariant::Projection,
            } => {
                let mut zz = 0.0;
                let mut zh = 0.0;
                for (a, b) in z.iter().zip(h) {
                    zz += a * a;
                    zh += a * b;
                }
                if zz == 0.0 {
                    return;
                }
                let inv = 1.0 / zz.sqrt();
                for ((o, a), b) in out.iter_mut().zip(z).zip(h) {
                    *o += (zz * b - zh * a) * inv;
                }
            }
            ModelKind::Maxwell {
                variant: SigmaVariant::Cross3,
            } => {
                out[0] += z[1] * h[2] - z[2] * h[1];
                out[1] += z[2] * h[0] - z[0] * h[2];
                out[2] += z[0] * h[1] - z[1] * h[0];
            }
            ModelKind::IsotropicOu => {
                for (o, b) in out.iter_mut().zip(h) {
                    *o += b;
                }
            }
            ModelKind::Custom { sigma, .. } => {
                let s = sigma(z);
                for (r, o) in out.iter_mut().enumerate() {
                    *o += (0..self.dim).map(|c| s[(r, c)] * h[c]).sum::<f64>();
                }
            }
        }
    }

    /// `out += b(z)`.
    #[inline]
    pub(crate) fn add_drift(&self, z: &[f64], out: &mut [f64]) {
        match &self.kind {
            ModelKind::Maxwell { .. } => {
                let c = -((self.dim as f64) - 1.0);
                for (o, a) in out.iter_mut().zip(z) {
                    *o += c * a;
                }
            }
            ModelKind::IsotropicOu => {
                for (o, a) in out.iter_mut().zip(z) {
                    *o -= a;
                }
            }
            ModelKind::Custom { drift, .. } => {
                for (o, a) in out.iter_mut().zip(drift(z)) {
                    *o += a;
                }
            }
        }
    }

    /// Sums over partners `k` for one particle:
    /// `noise_acc += sum_k sigma(x_i - x_k) h_k` and
    /// `drift_acc += sum_k b(x_i - x_k)`, with `h_k = row[k*d..(k+1)*d]`.
    pub(crate) fn interact_row(
        &self,
        xi: &[f64],
        positions: &[f64],
        row: &[f64],
        noise_acc: &mut [f64],
        drift_acc: &mut [f64],
    ) {
        match (&self.kind, self.dim) {
            (
                ModelKind::Maxwell {
                    variant: SigmaVariant::Projection,
                },
                3,
            ) => projection_row::<3>(xi, positions, row, noise_acc, drift_acc),
            (
                ModelKind::Maxwell {
                    variant: SigmaVariant::Projection,
                },
                2,
            ) => projection_row::<2>(xi, positions, row, noise_acc, drift_acc),
            (
                ModelKind::Maxwell {
                    variant: SigmaVariant::Cross3,
                },
                3,
            ) => cross3_row(xi, positions, row, noise_acc, drift_acc),
            _ => {
                let d = self.dim;
                let mut z = vec![0.0; d];
                for (xk, h) in positions.chunks_exact(d).zip(row.chunks_exact(d)) {
                    for c in 0..d {
                        z[c] = xi[c] - xk[c];
                    }
                    self.add_sigma_apply(&z, h, noise_acc);
                    self.add_drift(&z, drift_acc);
                }
            }
        }
    }

    /// `tr a(z)`.
    #[inline]
    pub(crate) fn diffusion_trace(&self, z: &[f64]) -> f64 {
        match &self.kind {
            ModelKind::Maxwell { .. } => {
                (self.dim as f64 - 1.0) * z.iter().map(|x| x * x).sum::<f64>()
            }
            ModelKind::IsotropicOu => self.dim as f64,
            ModelKind::Custom { sigma, .. } => sigma(z).iter().map(|x| x * x).sum(),
        }
    }
}

fn projection_row<const D: usize>(
    xi: &[f64],
    positions: &[f64],
    row: &[f64],
    noise_acc: &mut [f64],
    drift_acc: &mut [f64],
) {
    let xi: [f64; D] = xi.try_into().expect("particle has model dimension");
    let mut acc = [0.0; D];
    let mut zsum = [0.0; D];
    for (xk, h) in positions.chunks_exact(D).zip(row.chunks_exact(D)) {
        let mut z = [0.0; D];
        let mut zz = 0.0;
        let mut zh = 0.0;
        for c in 0..D {
            z[c] = xi[c] - xk[c];
            zz += z[c] * z[c];
            zh += z[c] * h[c];
            zsum[c] += z[c];
        }
        if zz > 0.0 {
            let r = zz.sqrt();
            let t = zh / r;
            for c in 0..D {
                acc[c] += r * h[c] - t * z[c];
            }
        }
    }
    let coef = -((D as f64) - 1.0);
    for c in 0..D {
        noise_acc[c] += acc[c];
        drift_acc[c] += coef * zsum[c];
    }
}

fn cross3_row(xi: &[f64], positions: &[f64], row: &[f64], noise_acc: &mut [f64], drift_acc: &mut [f64]) {
    let xi: [f64; 3] = xi.try_into().expect("particle has model dimension");
    let mut acc = [0.0; 3];
    let mut zsum = [0.0; 3];
    for (xk, h) in positions.chunks_exact(3).zip(row.chunks_exact(3)) {
        let z = [xi[0] - xk[0], xi[1] - xk[1], xi[2] - xk[2]];
        acc[0] += z[1] * h[2] - z[2] * h[1];
        acc[1] += z[2] * h[0] - z[0] * h[2];
        acc[2] += z[0] * h[1] - z[1] * h[0];
        for c in 0..3 {
            zsum[c] += z[c];
        }
    }
    for c in 0..3 {
        noise_acc[c] += acc[c];
        drift_acc[c] -= 2.0 * zsum[c];
    }
}

/// Deterministic probe points used to validate a model: the origin, signed
/// basis vectors and random points at three radii.
fn probe_points(d: usize) -> Vec<Vec<f64>> {
    let mut probes = vec![vec![0.0; d]];
    for i in 0..d {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; d];
            e[i] = s;
            probes.push(e);
        }
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(0x5eed_c0ef);
    for radius in [0.1, 1.0, 10.0] {
        for _ in 0..32 {
            probes.push((0..d).map(|_| radius * rng.sample::<f64, _>(StandardNormal)).collect());
        }
    }
    probes
}

/// Builds and validates a coefficient model. Validation checks that `sigma`
/// and `b` have the right shape and are finite, and that `sigma sigma^T` is
/// symmetric PSD on a fixed probe set.
pub fn make_model(kind: ModelKind, dim: usize) -> Result<CoefficientModel> {
    if dim == 0 {
        return Err(LandauError::config("dim", "dimension must be at least 1"));
    }
    let name = match &kind {
        ModelKind::Maxwell {
            variant: SigmaVariant::Projection,
        } => "maxwell".to_string(),
        ModelKind::Maxwell {
            variant: SigmaVariant::Cross3,
        } => {
            if dim != 3 {
                return Err(LandauError::config(
                    "sigma_variant",
                    format!("cross3 requires dim = 3, got {dim}"),
                ));
            }
            "maxwell_cross3".to_string()
        }
        ModelKind::IsotropicOu => "isotropic_ou".to_string(),
        ModelKind::Custom { name, .. } => name.clone(),
    };
    let degenerate = match kind {
        ModelKind::Maxwell { .. } if dim == 1 => {
            Some("degenerate: zero dynamics (a(v) = 0 and b(v) = 0 in one dimension)".to_string())
        }
        _ => None,
    };
    let model = CoefficientModel {
        dim,
        name,
        kind,
        degenerate,
    };

    for v in probe_points(dim) {
        let invalid = |reason: String| LandauError::ModelInvalid {
            model: model.name.clone(),
            at: v.clone(),
            reason,
        };
        let s = model.sigma(&v);
        if s.nrows() != dim || s.ncols() != dim {
            return Err(invalid(format!(
                "sigma has shape {}x{}, expected {dim}x{dim}",
                s.nrows(),
                s.ncols()
            )));
        }
        if s.iter().any(|x| !x.is_finite()) {
            return Err(invalid("sigma is not finite".into()));
        }
        let b = model.drift(&v);
        if b.len() != dim || b.iter().any(|x| !x.is_finite()) {
            return Err(invalid("drift has wrong length or is not finite".into()));
        }
        let a = &s * s.transpose();
        let a = DiffusionMatrix::new(a).ok_or_else(|| invalid("sigma sigma^T is not symmetric".into()))?;
        if !a.is_psd() {
            return Err(invalid(format!(
                "sigma sigma^T has eigenvalue {:e}",
                a.min_eigenvalue()
            )));
        }
    }
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    Maxwell,
    IsotropicOu,
}

/// Model selection as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub model: ModelName,
    /// Optional; when present it must agree with the simulation dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default)]
    pub sigma_variant: SigmaVariant,
}

impl ModelConfig {
    pub fn maxwell(variant: SigmaVariant) -> Self {
        ModelConfig {
            model: ModelName::Maxwell,
            dim: None,
            sigma_variant: variant,
        }
    }

    pub fn isotropic_ou() -> Self {
        ModelConfig {
            model: ModelName::IsotropicOu,
            dim: None,
            sigma_variant: SigmaVariant::Projection,
        }
    }

    pub fn build(&self, dim: usize) -> Result<CoefficientModel> {
        if let Some(d) = self.dim {
            if d != dim {
                return Err(LandauError::config(
                    "model.dim",
                    format!("model dim {d} disagrees with simulation dim {dim}"),
                ));
            }
        }
        let kind = match self.model {
            ModelName::Maxwell => ModelKind::Maxwell {
                variant: self.sigma_variant,
            },
            ModelName::IsotropicOu => {
                if self.sigma_variant != SigmaVariant::Projection {
                    return Err(LandauError::config(
                        "model.sigma_variant",
                        "sigma_variant only applies to the maxwell model",
                    ));
                }
                ModelKind::IsotropicOu
            }
        };
        make_model(kind, dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn random_vectors(d: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        (0..count)
            .map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect()
    }

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.amax()
    }

    #[test]
    fn maxwell_a_examples() {
        let a = maxwell_a(&[1.0, 0.0, 0.0]);
        assert_eq!(a.matrix(), &DMatrix::from_diagonal(&nalgebra::dvector![0.0, 1.0, 1.0]));
        let a = maxwell_a(&[0.0, 0.0]);
        assert_eq!(a.matrix(), &DMatrix::zeros(2, 2));
        let a = maxwell_a(&[1.0, 1.0]);
        assert_eq!(a.matrix(), &DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn maxwell_b_examples() {
        assert_eq!(maxwell_b(&[1.0, 2.0, 3.0]), vec![-2.0, -4.0, -6.0]);
        assert_eq!(maxwell_b(&[0.0, 0.0, 0.0]), vec![0.0; 3]);
        assert_eq!(maxwell_b(&[3.7]), vec![-0.0]);
    }

    #[test]
    fn maxwell_b_is_odd() {
        for v in random_vectors(4, 100, 3) {
            let neg: Vec<f64> = v.iter().map(|x| -x).collect();
            let lhs = maxwell_b(&neg);
            let rhs: Vec<f64> = maxwell_b(&v).iter().map(|x| -x).collect();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn sigma_examples() {
        let s = maxwell_sigma(&[2.0, 0.0, 0.0], SigmaVariant::Projection).unwrap();
        assert_eq!(s, DMatrix::from_diagonal(&nalgebra::dvector![0.0, 2.0, 2.0]));
        let s = maxwell_sigma(&[1.0, 0.0, 0.0], SigmaVariant::Cross3).unwrap();
        assert_eq!(
            s,
            DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0])
        );
        assert_eq!(
            maxwell_sigma(&[0.0; 4], SigmaVariant::Projection).unwrap(),
            DMatrix::zeros(4, 4)
        );
        assert!(maxwell_sigma(&[1.0, 2.0], SigmaVariant::Cross3).is_err());
    }

    #[test]
    fn sigma_squares_to_a() {
        for d in [2usize, 3, 5] {
            for v in random_vectors(d, 1000, d as u64) {
                let a = maxwell_a(&v);
                let mut variants = vec![SigmaVariant::Projection];
                if d == 3 {
                    variants.push(SigmaVariant::Cross3);
                }
                for variant in variants {
                    let s = maxwell_sigma(&v, variant).unwrap();
                    let diff = &s * s.transpose() - a.matrix();
                    assert!(max_abs(&diff) <= 1e-12, "d={d} {variant:?} {v:?}");
                }
            }
        }
    }

    #[test]
    fn trace_and_kernel_identities() {
        for d in [2usize, 3, 5] {
            for v in random_vectors(d, 200, 10 + d as u64) {
                let a = maxwell_a(&v);
                let n2: f64 = v.iter().map(|x| x * x).sum();
                assert_abs_diff_eq!(a.trace(), (d as f64 - 1.0) * n2, epsilon = 1e-12);
                let av = a.matrix() * nalgebra::DVector::from_column_slice(&v);
                assert!(av.amax() <= 1e-12);
            }
        }
    }

    #[test]
    fn fast_apply_matches_matrix() {
        for (variant, d) in [
            (SigmaVariant::Projection, 2),
            (SigmaVariant::Projection, 5),
            (SigmaVariant::Cross3, 3),
        ] {
            let model = make_model(ModelKind::Maxwell { variant }, d).unwrap();
            let zs = random_vectors(d, 50, 77);
            let hs = random_vectors(d, 50, 78);
            for (z, h) in zs.iter().zip(&hs) {
                let mut out = vec![0.0; d];
                model.add_sigma_apply(z, h, &mut out);
                let expect = model.sigma(z) * nalgebra::DVector::from_column_slice(h);
                for (o, e) in out.iter().zip(expect.iter()) {
                    assert_abs_diff_eq!(*o, *e, epsilon = 1e-12);
                }
                assert_abs_diff_eq!(
                    model.diffusion_trace(z),
                    model.diffusion(z).trace(),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn projection_sigma_lipschitz_probe() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(91);
        for d in 1..=5usize {
            let sample_ball = |rng: &mut Xoshiro256PlusPlus| loop {
                let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                if v.iter().map(|x| x * x).sum::<f64>() <= 1.0 {
                    break v;
                }
            };
            let mut k_fit: f64 = 0.0;
            for _ in 0..10_000 {
                let u = sample_ball(&mut rng);
                let v = sample_ball(&mut rng);
                let su = maxwell_sigma(&u, SigmaVariant::Projection).unwrap();
                let sv = maxwell_sigma(&v, SigmaVariant::Projection).unwrap();
                let dist: f64 = u.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                if dist > 1e-9 {
                    k_fit = k_fit.max((su - sv).norm() / dist);
                }
            }
            assert!(k_fit <= 3.0, "d={d} fitted Lipschitz constant {k_fit}");
        }
    }

    #[test]
    fn make_model_variants() {
        let m = make_model(
            ModelKind::Maxwell {
                variant: SigmaVariant::Projection,
            },
            3,
        )
        .unwrap();
        assert_eq!(m.dim(), 3);
        assert!(m.degeneracy().is_none());
        assert_eq!(m.sigma(&[2.0, 0.0, 0.0]), maxwell_sigma(&[2.0, 0.0, 0.0], SigmaVariant::Projection).unwrap());

        let ou = make_model(ModelKind::IsotropicOu, 2).unwrap();
        assert_eq!(ou.sigma(&[3.0, -1.0]), DMatrix::identity(2, 2));
        assert_eq!(ou.drift(&[3.0, -1.0]), vec![-3.0, 1.0]);

        let flat = make_model(
            ModelKind::Maxwell {
                variant: SigmaVariant::Projection,
            },
            1,
        )
        .unwrap();
        assert!(flat.degeneracy().unwrap().starts_with("degenerate: zero dynamics"));
        assert_eq!(flat.diffusion(&[2.5]).matrix(), &DMatrix::zeros(1, 1));

        assert!(make_model(ModelKind::IsotropicOu, 0).is_err());
        assert!(make_model(
            ModelKind::Maxwell {
                variant: SigmaVariant::Cross3
            },
            2
        )
        .is_err());
    }

    #[test]
    fn custom_model_probe_failure_names_point() {
        let sigma: SigmaFn = Arc::new(|v: &[f64]| {
            let mut m = DMatrix::identity(v.len(), v.len());
            if v[0] > 5.0 {
                m[(0, 0)] = f64::NAN;
            }
            m
        });
        let drift: DriftFn = Arc::new(|v: &[f64]| v.to_vec());
        let err = make_model(
            ModelKind::Custom {
                name: "bad".into(),
                sigma,
                drift,
            },
            2,
        )
        .unwrap_err();
        match err {
            LandauError::ModelInvalid { at, .. } => assert!(at[0] > 5.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_roundtrip_and_build() {
        let cfg: ModelConfig =
            serde_json::from_str(r#"{"model":"maxwell","dim":3,"sigma_variant":"cross3"}"#).unwrap();
        let model = cfg.build(3).unwrap();
        assert_eq!(model.name(), "maxwell_cross3");
        assert!(cfg.build(2).is_err());
        let ou: ModelConfig = serde_json::from_str(r#"{"model":"isotropic_ou"}"#).unwrap();
        assert_eq!(ou.build(4).unwrap().name(), "isotropic_ou");
    }
}
