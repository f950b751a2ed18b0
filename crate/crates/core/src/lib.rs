//! Simulation of one-dimensional diffusions and their Euler schemes, Wasserstein
//! distances between their laws, and a constructive bridge-based coupling of
//! the diffusion path with an Euler path.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: coefficient bundles, hypothesis checks, Lamperti reduction.
//! * [`simulate`]: refinable Brownian paths, Euler and exact paths, bridge maxima.
//! * [`density`]: Fokker–Planck and Euler marginal laws, quantiles, `W_p`.
//! * [`bridge`]: transition scores, diffusion bridges, bridge Brownian motions.
//! * [`coupling`]: 1-D optimal transport and the coarse/fill/bridge path coupling.
//! * [`experiments`]: configuration, rate sweeps, reports (used by the CLI).

pub mod bridge;
pub mod coupling;
pub mod density;
pub mod error;
pub mod experiments;
pub mod model;
pub mod numeric;
pub mod rng;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
pub use model::{DiffusionModel, builtin};
pub use simulate::GridSpec;

/// Version string embedded in reports.
pub fn version() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}
