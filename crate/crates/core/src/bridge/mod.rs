//! Diffusion bridges: transition scores, the Lamperti-space correction `g`,
//! bridge paths, bridge Brownian motions and the reconstruction check.

mod extract;
mod g;
mod path;
mod reconstruct;
mod score;

pub use extract::{extract_bridge_bm, extract_into};
pub use g::{AlphaBundle, AlphaFn, AlphaTable, GCache, GEstimate, GNodeSource, GQuadrature, g_estimate};
pub use path::{bridge_path, bridge_values_into};
pub use reconstruct::{ReconstructReport, reconstruct_check};
pub use score::{BridgeScore, ScoreMode, ScoreOptions, ScoreValue, score};
