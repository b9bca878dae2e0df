//! Calibration of the idiosyncratic volatilities to single-stock smiles by
//! an interacting particle system, and the surfaces derived from it.
//!
//! The simplified model is calibrated to a stock local volatility `v_loc`
//! when `eta^2(t, x) = v_loc(t, x) - beta^2 E[sigma^2(t, I_t) | S_t = x]`.
//! The conditional expectation depends on the law of the solution itself,
//! so it is estimated across a cloud of particles simulated together.

mod extraction;
mod kernel;
mod particles;
mod regression;

pub use extraction::{
    default_extraction_bandwidth, default_moneyness_grid, extract_eta_surface, reconstruct_market_vloc,
    CoverageReport,
};
pub use kernel::{
    accelerated_nw_all, estimate_at_samples, gaussian_kernel, nadaraya_watson, naive_nw_all, KernelConfig,
    KernelMode, SortedEstimates, DENOMINATOR_FLOOR,
};
pub use particles::{
    select_beta, simulate_original_calibrated, simulate_particle_system, CostGuard, Estimation, OriginalCloud,
    ParticleCloud, ParticleSystem, StepReport,
};
pub use regression::{fit_parametric, BasisFunction, BasisSpec};
