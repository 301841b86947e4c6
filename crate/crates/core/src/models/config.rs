//! Model definitions loaded from JSON config text.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CdConstants, FoliationModel, FrameSpec};
use crate::expr::{Expr, ExprError};

/// Serialized form of a model definition.
///
/// Frame components are expression strings in the coordinates `x1..xD`
/// (`D = n + m`); `horizontal_frame` lists the `n` horizontal fields,
/// `vertical_frame` the `m` vertical ones, each as its `D` coordinate
/// components.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub domain: Vec<[f64; 2]>,
    pub horizontal_frame: Vec<Vec<String>>,
    pub vertical_frame: Vec<Vec<String>>,
    /// Optional externally-known curvature-dimension constants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<CdConstants>,
    /// Free-form annotations copied onto the model.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, String>,
}

/// Errors from parsing or validating a model config.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("model `{name}` must have positive ranks, got n = {n}, m = {m}")]
    EmptyRank { name: String, n: usize, m: usize },
    #[error(
        "model `{name}`: domain lists {got} coordinate ranges but the chart \
         dimension is n + m = {expect}"
    )]
    DomainLength { name: String, got: usize, expect: usize },
    #[error("model `{name}`: domain range {index} is empty ({lo} >= {hi})")]
    EmptyRange { name: String, index: usize, lo: f64, hi: f64 },
    #[error(
        "model `{name}`: {frame} frame lists {got} fields, expected {expect}"
    )]
    FieldCount { name: String, frame: &'static str, got: usize, expect: usize },
    #[error(
        "model `{name}`: {frame} field {field} has {got} components but the \
         chart dimension is n + m = {expect}"
    )]
    ComponentCount {
        name: String,
        frame: &'static str,
        field: usize,
        got: usize,
        expect: usize,
    },
    #[error("model `{name}`: {frame} field {field}, component {component}: {source}")]
    BadExpression {
        name: String,
        frame: &'static str,
        field: usize,
        component: usize,
        source: ExprError,
    },
    #[error(
        "model `{name}`: {frame} field {field}, component {component} uses \
         coordinate x{used} but the chart has only {expect} coordinates"
    )]
    CoordinateOutOfRange {
        name: String,
        frame: &'static str,
        field: usize,
        component: usize,
        used: usize,
        expect: usize,
    },
}

fn parse_frame(
    cfg: &ModelConfig,
    frame: &'static str,
    rows: &[Vec<String>],
    expect_fields: usize,
    dim: usize,
) -> Result<Vec<Vec<Expr>>, ConfigError> {
    if rows.len() != expect_fields {
        return Err(ConfigError::FieldCount {
            name: cfg.name.clone(),
            frame,
            got: rows.len(),
            expect: expect_fields,
        });
    }
    let mut out = Vec::with_capacity(rows.len());
    for (field, row) in rows.iter().enumerate() {
        if row.len() != dim {
            return Err(ConfigError::ComponentCount {
                name: cfg.name.clone(),
                frame,
                field,
                got: row.len(),
                expect: dim,
            });
        }
        let mut exprs = Vec::with_capacity(dim);
        for (component, src) in row.iter().enumerate() {
            let e = Expr::parse(src).map_err(|source| ConfigError::BadExpression {
                name: cfg.name.clone(),
                frame,
                field,
                component,
                source,
            })?;
            if let Some(used) = e.max_var() {
                if used >= dim {
                    return Err(ConfigError::CoordinateOutOfRange {
                        name: cfg.name.clone(),
                        frame,
                        field,
                        component,
                        used: used + 1,
                        expect: dim,
                    });
                }
            }
            exprs.push(e);
        }
        out.push(exprs);
    }
    Ok(out)
}

impl ModelConfig {
    /// Validate the config and build the model.
    pub fn build(&self) -> Result<FoliationModel, ConfigError> {
        let dim = self.n + self.m;
        if self.n == 0 || self.m == 0 {
            return Err(ConfigError::EmptyRank {
                name: self.name.clone(),
                n: self.n,
                m: self.m,
            });
        }
        if self.domain.len() != dim {
            return Err(ConfigError::DomainLength {
                name: self.name.clone(),
                got: self.domain.len(),
                expect: dim,
            });
        }
        for (index, [lo, hi]) in self.domain.iter().enumerate() {
            if !(lo < hi) {
                return Err(ConfigError::EmptyRange {
                    name: self.name.clone(),
                    index,
                    lo: *lo,
                    hi: *hi,
                });
            }
        }
        let mut rows = parse_frame(self, "horizontal", &self.horizontal_frame, self.n, dim)?;
        rows.extend(parse_frame(self, "vertical", &self.vertical_frame, self.m, dim)?);
        Ok(FoliationModel {
            name: self.name.clone(),
            n: self.n,
            m: self.m,
            domain: self.domain.clone(),
            frame: FrameSpec::Expressions(rows),
            known_constants: self.constants,
            compact_type: false,
            sample_shrink: super::SAMPLE_SHRINK,
            notes: self.notes.clone(),
        })
    }
}

/// Parse JSON config text and build the model it describes.
pub fn load_model(text: &str) -> Result<FoliationModel, ConfigError> {
    let cfg: ModelConfig = serde_json::from_str(text)?;
    cfg.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn twisted() -> String {
        serde_json::json!({
            "name": "twisted",
            "n": 2,
            "m": 1,
            "domain": [[-2.0, 2.0], [-2.0, 2.0], [-2.0, 2.0]],
            "horizontal_frame": [
                ["1", "0", "0"],
                ["0", "1", "sin(x1)"]
            ],
            "vertical_frame": [
                ["0", "0", "1"]
            ]
        })
        .to_string()
    }

    #[test]
    fn loads_a_valid_config() {
        let model = load_model(&twisted()).unwrap();
        assert_eq!(model.name(), "twisted");
        assert_eq!(model.dim(), 3);
        let e = model.frame_values(&[0.5, 0.0, 0.0]).unwrap();
        assert!((e[(1, 2)] - 0.5f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mut cfg: ModelConfig = serde_json::from_str(&twisted()).unwrap();
        cfg.domain.pop();
        let err = cfg.build().unwrap_err();
        assert!(matches!(err, ConfigError::DomainLength { expect: 3, got: 2, .. }));

        let mut cfg: ModelConfig = serde_json::from_str(&twisted()).unwrap();
        cfg.horizontal_frame[0].push("0".into());
        let err = cfg.build().unwrap_err();
        assert!(matches!(err, ConfigError::ComponentCount { got: 4, .. }));

        let mut cfg: ModelConfig = serde_json::from_str(&twisted()).unwrap();
        cfg.vertical_frame.clear();
        let err = cfg.build().unwrap_err();
        assert!(matches!(
            err,
            ConfigError::FieldCount { frame: "vertical", got: 0, expect: 1, .. }
        ));
    }

    #[test]
    fn unknown_symbols_are_named() {
        let bad = twisted().replace("sin(x1)", "foo(x1)");
        let err = load_model(&bad).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("foo"), "error should name the symbol: {msg}");
        assert!(msg.contains("horizontal field 1"), "location missing: {msg}");
    }

    #[test]
    fn out_of_range_coordinates_are_rejected() {
        let bad = twisted().replace("sin(x1)", "x4");
        let err = load_model(&bad).unwrap_err();
        assert!(matches!(err, ConfigError::CoordinateOutOfRange { used: 4, .. }));
    }

    #[test]
    fn empty_domain_ranges_are_rejected() {
        let mut cfg: ModelConfig = serde_json::from_str(&twisted()).unwrap();
        cfg.domain[1] = [1.0, 1.0];
        assert!(matches!(
            cfg.build().unwrap_err(),
            ConfigError::EmptyRange { index: 1, .. }
        ));
        cfg.domain[1] = [2.0, -2.0];
        assert!(matches!(
            cfg.build().unwrap_err(),
            ConfigError::EmptyRange { index: 1, .. }
        ));
    }

    #[test]
    fn config_round_trips_through_serde() {
        let cfg: ModelConfig = serde_json::from_str(&twisted()).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let again: ModelConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(again.horizontal_frame, cfg.horizontal_frame);
    }
}
