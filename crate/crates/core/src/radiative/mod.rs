//! Monte Carlo radiative exchange between model faces.

mod analytic;
mod exchange;
mod rng;
mod scene;

pub use analytic::analytic_view_factor_coaxial_discs;
pub use exchange::{
    compute_exchange_factors, compute_raw_exchange_factors, symmetrize, RadCouplingMatrix, RayBudget, DEFAULT_RAYS,
    DEFAULT_SEED, HIGH_ACCURACY_RAYS,
};
pub use rng::Substreams;
pub use scene::{cosine_direction, sample_emission, trace_ray, Ray, Scene, SceneFace, SceneSurface, Termination, MAX_BOUNCES};
