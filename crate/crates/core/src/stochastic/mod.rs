//! Monte Carlo layer: horizontal Brownian motion, damped one-form
//! transport along paths, and the statistical checks built on them.

mod checks;
mod expm;
mod paths;

pub use checks::{
    check_equilibrium, check_feynman_kac, check_gradient_bound, check_li_yau,
    check_theta_isometry,
};
pub use expm::expm;
pub use paths::{heat_semigroup, DiffusionParams, Estimate};
