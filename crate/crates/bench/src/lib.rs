//! Shared fixtures for the benchmarks.

use roadfield_core::model::{make_model, ModelParams, ModelSpec};

/// Constant-coefficient model with `d = mu = nu = f'(0) = 1`.
pub fn baseline(road_diffusion: f64) -> ModelParams {
    make_model(&ModelSpec::constant(road_diffusion, 1.0, 1.0, 1.0, 1.0)).expect("baseline model is valid")
}

/// Model with `mu(x) = 1 + cos(2 pi x)`.
pub fn periodic(road_diffusion: f64) -> ModelParams {
    let mut spec = ModelSpec::constant(road_diffusion, 1.0, 1.0, 1.0, 1.0);
    spec.mu = "cosine:1,1".into();
    make_model(&spec).expect("periodic model is valid")
}
