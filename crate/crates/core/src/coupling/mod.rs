//! One-dimensional optimal transport and the constructive path coupling:
//! coarse conditional-quantile coupling, Euler bridge fill, and the bridge
//! reconstruction `χ̃` of the diffusion from the Euler path's noise.

mod assemble;
mod beta;
mod fill;
mod ot;
mod tables;

pub use assemble::{
    COUPLING_CSV_HEADER, CoupledPaths, CouplingContext, CouplingRow, assemble_coupled_paths, write_coupling_csv,
};
pub use beta::{reconstruct_beta, refine_beta};
pub use fill::{FillEngine, euler_bridge_fill};
pub use ot::{BRUTE_FORCE_MAX, DiscreteMeasure, empirical_w1d, ot_bruteforce};
pub use tables::{START_SPACING, TransitionKind, TransitionMap, Z_MAX, Z_NODES, Z_STEP, z_clip};
