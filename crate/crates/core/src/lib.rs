//! Principal eigenvalues, spreading speeds and direct simulation for the
//! spatially periodic road-field KPP system
//!
//! ```text
//! u_t - D u_xx = nu(x) v(t,x,0) - mu(x) u          on the road y = 0
//! v_t - d Lap v = f(v)                             in the field y > 0
//! -d v_y(t,x,0) = mu(x) u - nu(x) v(t,x,0)
//! ```
//!
//! [`eigensolver`] computes the generalized principal eigenvalue `Lambda(alpha)`
//! of the linearization through truncated periodic cells, [`speeds`] turns
//! the dispersion relation into spreading speeds, and [`simulator`] integrates
//! the nonlinear system directly so the two can be compared.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::too_many_arguments
)]

pub mod banded;
pub mod eigensolver;
pub mod error;
pub mod grids;
pub mod model;
pub mod simulator;
pub mod speeds;

pub use error::{Error, Result};
pub use grids::{CellGrid, DiscreteOperator, StripGrid, TopBoundary};
pub use model::{
    critical_alpha, kpp_speed, make_model, shift_constant_m, ExchangeProfile, ModelParams, ModelSpec, Nonlinearity,
};
