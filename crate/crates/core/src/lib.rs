//! Numerical workbench for totally geodesic Riemannian foliations.
//!
//! The crate works on foliated charts carrying an adapted orthonormal frame
//! (`n` horizontal fields, `m` vertical fields) and provides, in frame
//! components:
//!
//! * exact derivatives of everything through truncated Taylor jets
//!   ([`jet`]), so no finite differencing enters the deterministic side;
//! * per-point differential geometry ([`diffgeo`]): brackets, the
//!   Levi-Civita and Bott connections, torsion, the skew maps `J_z`,
//!   horizontal Ricci, and the torsion divergences;
//! * the one-parameter family of sub-Riemannian-to-Riemannian operators on
//!   functions and one-forms ([`gamma`]): horizontal Laplacian,
//!   carre-du-champ operators and their iterations, the one-form
//!   Laplacians, and the epsilon-weighted norms;
//! * identity and inequality checkers with machine-precision tolerances
//!   ([`verify`]), including curvature-dimension constants extraction and
//!   the diameter / spectral-gap bounds they imply;
//! * horizontal Brownian motion with damped parallel transport
//!   ([`stochastic`]): semigroup estimation, a dual-path derivative-of-
//!   semigroup identity check, gradient bounds, and a parabolic Harnack
//!   (Li-Yau type) inequality check.
//!
//! Models come from a built-in catalog or JSON configs ([`models`]);
//! scalar and one-form fields are jet-valued closures ([`fields`]);
//! check outcomes serialize through [`report`].

pub mod diffgeo;
pub mod expr;
pub mod fields;
pub mod gamma;
pub mod jet;
pub mod models;
pub mod report;
pub mod stochastic;
pub mod verify;

pub use models::{CdConstants, FoliationModel};

/// Errors from pointwise geometric operations.
#[derive(Debug, thiserror::Error)]
pub enum OpError {
    #[error("point {point:?} lies outside the chart domain of model `{model}`")]
    OutsideDomain { model: String, point: Vec<f64> },
    #[error("frame matrix is numerically singular at {point:?} (pivot {pivot:e})")]
    SingularFrame { point: Vec<f64>, pivot: f64 },
    #[error("invalid parameter {param}: {message}")]
    InvalidParameter { param: &'static str, message: String },
    #[error(transparent)]
    Expr(#[from] expr::ExprError),
    #[error(transparent)]
    Jet(#[from] jet::JetError),
}
