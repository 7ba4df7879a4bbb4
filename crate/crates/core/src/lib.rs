//! Landau-type interacting particle systems and exact Wasserstein-2 tooling.
//!
//! * [`coefficients`]: Maxwell-molecule `(sigma, b)` and test models.
//! * [`particles`]: Euler-Maruyama simulation of the n-particle system with
//!   counter-keyed noise ([`noise`]).
//! * [`diagnostics`]: moment tracking, conservation and relaxation fits.
//! * [`transport`]: exact discrete optimal transport and optimality certificates.
//! * [`experiments`]: seeded replica harnesses for rate and invariance studies.
//! * [`cli`]: the `landau` command-line front end.

pub mod cli;
pub mod coefficients;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod noise;
pub mod particles;
pub mod transport;

pub use error::{LandauError, Result};
