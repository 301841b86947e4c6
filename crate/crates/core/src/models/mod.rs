//! Foliation models: the built-in catalog, config-loaded models, and
//! validation of the standing geometric hypotheses.
//!
//! A [`FoliationModel`] is a coordinate chart together with an adapted frame:
//! `n` horizontal fields `X_1..X_n` and `m` vertical fields `Z_1..Z_m`, each
//! given by its coordinate components as functions on the chart. The metric
//! is *defined* by declaring this frame orthonormal, so every downstream
//! computation works in frame components and only ever needs the component
//! functions and their derivatives (supplied as jets).

pub mod catalog;
pub mod config;
mod validate;

pub use catalog::{heisenberg_model, product_model, su2_model};
pub use config::{load_model, ConfigError, ModelConfig};
pub use validate::{validate_model, CheckStatus, ValidationCheck, ValidationReport};

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::expr::Expr;
use crate::jet::Jet;
use crate::OpError;

/// Default shrink factor for interior sampling: points are drawn uniformly
/// from the domain box scaled by this factor about its center.
pub(crate) const SAMPLE_SHRINK: f64 = 0.8;

/// Errors from model construction.
#[derive(Debug, Clone, thiserror::Error)]
pub enum ModelError {
    #[error("invalid {param}: {message}")]
    InvalidParameter { param: &'static str, message: String },
}

/// Constants of the generalized curvature-dimension inequality
/// CD(rho1, rho2, kappa, n): `rho1` bounds the horizontal Ricci curvature
/// from below, `kappa` bounds `-J^2` from above, `rho2` bounds the
/// vertical quadratic form `-1/4 Tr_H(J_eta^2)` from below, `n` is the
/// horizontal rank, and `big_k = max(-rho1, 0)` enters the gradient bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdConstants {
    pub rho1: f64,
    pub rho2: f64,
    pub kappa: f64,
    pub n: usize,
    #[serde(rename = "K")]
    pub big_k: f64,
}

impl CdConstants {
    /// Assemble constants from curvature extrema, deriving `big_k`.
    pub fn from_curvature(rho1: f64, rho2: f64, kappa: f64, n: usize) -> CdConstants {
        CdConstants {
            rho1,
            rho2,
            kappa,
            n,
            big_k: (-rho1).max(0.0),
        }
    }

    /// The standing assumptions: `rho2 > 0` (uniform bracket generation)
    /// and `kappa >= 0`.
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.rho2 > 0.0) {
            return Err(ModelError::InvalidParameter {
                param: "rho2",
                message: format!("must be positive, got {}", self.rho2),
            });
        }
        if !(self.kappa >= 0.0) {
            return Err(ModelError::InvalidParameter {
                param: "kappa",
                message: format!("must be nonnegative, got {}", self.kappa),
            });
        }
        Ok(())
    }
}

impl fmt::Display for CdConstants {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "rho1 = {}, kappa = {}, rho2 = {}, n = {}, K = {}",
            self.rho1, self.kappa, self.rho2, self.n, self.big_k
        )
    }
}

/// How the frame component functions are realized.
pub(crate) enum FrameSpec {
    /// Each field's components as parsed expressions (config files and most
    /// catalog models); row `a`, column `mu` gives the `d/dx_mu` component
    /// of frame field `a`.
    Expressions(Vec<Vec<Expr>>),
    /// Closed-form evaluators (used where expression trees would be
    /// unreadable, e.g. series-defined frames).
    Analytic(AnalyticFrame),
}

pub(crate) struct AnalyticFrame {
    pub jets: Box<dyn Fn(&[f64], u8) -> Vec<Vec<Jet>> + Send + Sync>,
    pub values: Box<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>,
}

/// A foliated chart: adapted orthonormal frame plus metadata.
///
/// Rows `0..n` of the frame are horizontal (`X_i`), rows `n..n+m` vertical
/// (`Z_l`). The chart metric is the one making this frame orthonormal.
pub struct FoliationModel {
    pub(crate) name: String,
    pub(crate) n: usize,
    pub(crate) m: usize,
    pub(crate) domain: Vec<[f64; 2]>,
    pub(crate) frame: FrameSpec,
    pub(crate) known_constants: Option<CdConstants>,
    pub(crate) compact_type: bool,
    pub(crate) sample_shrink: f64,
    pub(crate) notes: BTreeMap<String, String>,
}

impl fmt::Debug for FoliationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FoliationModel")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

impl FoliationModel {
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Horizontal rank `n`.
    pub fn horizontal_rank(&self) -> usize {
        self.n
    }

    /// Vertical rank `m` (leaf dimension).
    pub fn vertical_rank(&self) -> usize {
        self.m
    }

    /// Chart dimension `n + m`.
    pub fn dim(&self) -> usize {
        self.n + self.m
    }

    /// Axis-aligned chart domain, one `[lo, hi]` per coordinate.
    pub fn domain(&self) -> &[[f64; 2]] {
        &self.domain
    }

    /// Constants supplied by the model's construction, for cross-checking
    /// against extraction.
    pub fn known_constants(&self) -> Option<&CdConstants> {
        self.known_constants.as_ref()
    }

    /// Whether the model is a chart of a compact manifold (equilibrium
    /// checks only make sense there).
    pub fn is_compact_type(&self) -> bool {
        self.compact_type
    }

    /// Free-form provenance notes (e.g. series truncation error bounds).
    pub fn notes(&self) -> &BTreeMap<String, String> {
        &self.notes
    }

    /// Center of the chart domain.
    pub fn center(&self) -> Vec<f64> {
        self.domain.iter().map(|[lo, hi]| 0.5 * (lo + hi)).collect()
    }

    /// Strict-interior membership test.
    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(&self.domain)
                .all(|(x, [lo, hi])| *x > *lo && *x < *hi)
    }

    /// Reject points outside the strict interior of the chart.
    pub fn check_point(&self, p: &[f64]) -> Result<(), OpError> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(OpError::OutsideDomain {
                model: self.name.clone(),
                point: p.to_vec(),
            })
        }
    }

    /// Frame component functions evaluated as jets at `p`: row `a` holds the
    /// coordinate components of frame field `a`, valid to order `ord`.
    ///
    /// The domain is deliberately not checked here — component functions are
    /// total, and integrators probe predictor points that may graze the
    /// boundary. Use [`FoliationModel::check_point`] at operation entry.
    pub fn frame_jets(&self, p: &[f64], ord: u8) -> Result<Vec<Vec<Jet>>, OpError> {
        match &self.frame {
            FrameSpec::Expressions(rows) => {
                let vars = Jet::variables(p, ord);
                rows.iter()
                    .map(|row| row.iter().map(|e| e.eval(&vars)).collect())
                    .collect::<Result<_, _>>()
                    .map_err(OpError::from)
            }
            FrameSpec::Analytic(a) => Ok((a.jets)(p, ord)),
        }
    }

    /// Frame component values at `p`: row `a`, column `mu`.
    pub fn frame_values(&self, p: &[f64]) -> Result<DMatrix<f64>, OpError> {
        match &self.frame {
            FrameSpec::Expressions(rows) => {
                let d = self.dim();
                let mut out = DMatrix::zeros(d, d);
                for (a, row) in rows.iter().enumerate() {
                    for (mu, e) in row.iter().enumerate() {
                        out[(a, mu)] = e.eval_value(p)?;
                    }
                }
                Ok(out)
            }
            FrameSpec::Analytic(a) => Ok((a.values)(p)),
        }
    }

    /// Interior sample points: uniform over the domain box shrunk toward its
    /// center by the model's shrink factor. Deterministic in `seed`.
    pub fn sample_points(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                self.domain
                    .iter()
                    .map(|[lo, hi]| {
                        let c = 0.5 * (lo + hi);
                        let half = 0.5 * (hi - lo) * self.sample_shrink;
                        c + (rng.random::<f64>() * 2.0 - 1.0) * half
                    })
                    .collect()
            })
            .collect()
    }

    /// Convenience for sharing a model across parallel workers.
    pub fn into_shared(self) -> Arc<FoliationModel> {
        Arc::new(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampler_is_deterministic_and_interior() {
        let model = heisenberg_model(1).unwrap();
        let a = model.sample_points(50, 7);
        let b = model.sample_points(50, 7);
        assert_eq!(a, b);
        for p in &a {
            assert!(model.contains(p), "sample {p:?} escaped the domain");
        }
        let c = model.sample_points(50, 8);
        assert_ne!(a, c);
    }

    #[test]
    fn constants_validation_enforces_signs() {
        assert!(CdConstants::from_curvature(0.0, 0.5, 1.0, 2).validate().is_ok());
        assert!(CdConstants::from_curvature(0.0, 0.0, 1.0, 2).validate().is_err());
        assert!(CdConstants::from_curvature(0.0, 0.5, -1.0, 2).validate().is_err());
        assert_eq!(CdConstants::from_curvature(-2.0, 0.5, 1.0, 2).big_k, 2.0);
        assert_eq!(CdConstants::from_curvature(1.0, 0.5, 1.0, 2).big_k, 0.0);
    }

    #[test]
    fn point_membership_is_strict() {
        let model = product_model(2, 1).unwrap();
        assert!(model.contains(&[0.0, 0.0, 0.0]));
        assert!(!model.contains(&[3.0, 0.0, 0.0])); // boundary excluded
        assert!(!model.contains(&[0.0, 0.0])); // wrong dimension
        assert!(model.check_point(&[9.0, 0.0, 0.0]).is_err());
    }
}
