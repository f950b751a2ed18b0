//! Marginal laws of the diffusion and of the Euler scheme, quantile-based
//! Wasserstein distances, and the inverse-CDF PDE residual.

mod euler_law;
mod fokker_planck;
mod law;
mod residual;
mod wasserstein;

#[allow(unused_imports)]
pub(crate) use euler_law::EulerKernel;
pub use euler_law::{EulerLaws, euler_marginal_evolve};
pub use fokker_planck::{FpOptions, fokker_planck_evolve, fp_start_time};
pub use law::{MarginalLaw, MeshSpec};
pub use residual::{ResidualOptions, ResidualReport, fp_inverse_cdf_residual, inverse_cdf_pde_residual};
pub use wasserstein::{TAIL_DELTA, WpEstimate, wasserstein_quantile, wasserstein_quantile_fn};
