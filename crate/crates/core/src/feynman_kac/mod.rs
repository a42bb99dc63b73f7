//! Feynman–Kac Monte Carlo for the backward equation
//! `-du = L u dt + Γ_k u d𝐖^k` and weighted particles for the forward
//! (Zakai-type) equation `dρ = L*ρ dt + Γ*_k ρ d𝐖^k`.
mod backward;
mod coefficients;
mod density;
mod estimate;
mod forward;

pub use backward::{
    backward_field, backward_value, driver_id, exp_weight, log_weight, BackwardField, Provenance, SpaceGrid,
};
pub use coefficients::{CoefficientSmoothness, CompiledCoefficients, OperatorCoefficients};
pub use density::{exp_tail, fit_decay_constant, forward_density, ExpDecayFunction, DECAY_RADII};
pub use estimate::{weighted_mean, Estimate, McParams};
pub use forward::{forward_measure, InitialMeasure, MeasureSlice, ParticleMeasure};
pub(crate) use estimate::{map_chunks, pairwise_merge, LogAccumulator};
