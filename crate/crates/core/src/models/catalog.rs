//! Built-in model catalog.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::{AnalyticFrame, CdConstants, FoliationModel, FrameSpec, ModelError, SAMPLE_SHRINK};
use crate::expr::Expr;
use crate::jet::Jet;

fn parse_rows(rows: &[Vec<String>]) -> Vec<Vec<Expr>> {
    rows.iter()
        .map(|row| {
            row.iter()
                .map(|s| Expr::parse(s).expect("catalog expression"))
                .collect()
        })
        .collect()
}

/// Heisenberg group of horizontal rank `2d`: chart coordinates
/// `(x_1..x_d, y_1..y_d, z)` with frame
///
/// ```text
/// X_i = d/dx_i - (y_i/2) d/dz,   Y_i = d/dy_i + (x_i/2) d/dz,   Z = d/dz.
/// ```
///
/// All brackets vanish except `[X_i, Y_i] = Z`. Flat horizontal Ricci,
/// `J_Z^2 = -I` on the horizontal space, so the curvature-dimension
/// constants are `(rho1, kappa, rho2) = (0, 1, d/2)`.
pub fn heisenberg_model(d: usize) -> Result<FoliationModel, ModelError> {
    if d == 0 {
        return Err(ModelError::InvalidParameter {
            param: "d",
            message: "the Heisenberg group needs at least one horizontal pair".into(),
        });
    }
    let dim = 2 * d + 1;
    let z = dim; // 1-based coordinate index of the center direction
    let mut rows: Vec<Vec<String>> = Vec::with_capacity(dim);
    // X_i rows, then Y_i rows, then Z.
    for i in 1..=d {
        let mut row = vec!["0".to_string(); dim];
        row[i - 1] = "1".into();
        row[z - 1] = format!("0 - x{} / 2", d + i);
        rows.push(row);
    }
    for i in 1..=d {
        let mut row = vec!["0".to_string(); dim];
        row[d + i - 1] = "1".into();
        row[z - 1] = format!("x{} / 2", i);
        rows.push(row);
    }
    let mut zrow = vec!["0".to_string(); dim];
    zrow[z - 1] = "1".into();
    rows.push(zrow);

    Ok(FoliationModel {
        name: format!("heisenberg:{d}"),
        n: 2 * d,
        m: 1,
        domain: vec![[-3.0, 3.0]; dim],
        frame: FrameSpec::Expressions(parse_rows(&rows)),
        known_constants: Some(CdConstants::from_curvature(0.0, 0.5 * d as f64, 1.0, 2 * d)),
        compact_type: false,
        sample_shrink: SAMPLE_SHRINK,
        notes: BTreeMap::new(),
    })
}

/// Trivial product `R^n x R^m` with coordinate frame. The vertical
/// distribution is integrable *and* the torsion vanishes, so the horizontal
/// distribution is not bracket generating: validation flags it and constant
/// extraction reports `rho2 = 0`.
pub fn product_model(n: usize, m: usize) -> Result<FoliationModel, ModelError> {
    if n == 0 || m == 0 {
        return Err(ModelError::InvalidParameter {
            param: if n == 0 { "n" } else { "m" },
            message: "both factors need positive dimension".into(),
        });
    }
    let dim = n + m;
    let rows: Vec<Vec<String>> = (0..dim)
        .map(|a| {
            (0..dim)
                .map(|mu| if a == mu { "1".into() } else { "0".into() })
                .collect()
        })
        .collect();
    Ok(FoliationModel {
        name: format!("product:{n},{m}"),
        n,
        m,
        domain: vec![[-3.0, 3.0]; dim],
        frame: FrameSpec::Expressions(parse_rows(&rows)),
        known_constants: None,
        compact_type: false,
        sample_shrink: SAMPLE_SHRINK,
        notes: BTreeMap::new(),
    })
}

/// Taylor coefficients of `c(u) = (1 - (r/2) cot(r/2)) / r^2` in `u = r^2`;
/// term `j` is `|B_{2j+2}| / (2j+2)!` (Bernoulli numbers). The series has
/// radius of convergence `(2 pi)^2` in `u`, and the coefficients behave
/// like `2 (2 pi)^{-2j}`, so 32 terms leave a remainder below
/// `2 q^{33} / (1 - q)` with `q = (r / 2 pi)^2`: under `6e-12` at the
/// corner of the chart box below (r = 4.16) and under `2e-18` on the
/// sampling region (r <= 3.33).
const COT_SERIES: [f64; 32] = [
    8.3333333333333333e-2,
    1.3888888888888889e-3,
    3.3068783068783069e-5,
    8.2671957671957672e-7,
    2.0876756987868099e-8,
    5.2841901386874932e-10,
    1.3382536530684679e-11,
    3.3896802963225829e-13,
    8.5860620562778446e-15,
    2.1748686985580619e-16,
    5.5090028283602295e-18,
    1.3954464685812523e-19,
    3.5347070396294675e-21,
    8.9535174270375469e-23,
    2.2679524523376831e-24,
    5.7447906688722024e-26,
    1.4551724756148649e-27,
    3.6859949406653102e-29,
    9.3367342570950447e-31,
    2.3650224157006299e-32,
    5.9906717624821343e-34,
    1.5174548844682903e-35,
    3.8437581254541882e-37,
    9.7363530726466910e-39,
    2.4662470442006810e-40,
    6.2470767418207437e-42,
    1.5824030244644914e-43,
    4.0082736859489360e-45,
    1.0153075855569556e-46,
    2.5718041582418717e-48,
    6.5144560352338149e-50,
    1.6501309906896525e-51,
];

/// Minimal ring interface letting the SU(2) frame formula be written once
/// and evaluated on plain values and on jets alike.
trait Coeff: Clone {
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn scale(&self, s: f64) -> Self;
    /// A constant with the same shape as `self`.
    fn lift(&self, c: f64) -> Self;
}

impl Coeff for f64 {
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn scale(&self, s: f64) -> Self {
        self * s
    }
    fn lift(&self, c: f64) -> Self {
        c
    }
}

impl Coeff for Jet {
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn scale(&self, s: f64) -> Self {
        Jet::scale(self, s)
    }
    fn lift(&self, c: f64) -> Self {
        Jet::constant(self.dim(), self.order(), c)
    }
}

/// Components of the left-invariant frame `e_1, e_2, e_3` of SU(2) in
/// exponential coordinates `xi = (x, y, z)`: column `i` of
///
/// ```text
/// A(xi) = I + (1/2) cross(xi) + c(r^2) (xi xi^T - r^2 I),
/// ```
///
/// where `cross(xi) v = xi x v` and `c` is the cotangent series above.
/// These satisfy `[e_i, e_j] = eps_ijk e_k`; the chart is valid for
/// `r < 2 pi`.
fn su2_columns<T: Coeff>(x: &T, y: &T, z: &T) -> [[T; 3]; 3] {
    let r2 = x.mul(x).add(&y.mul(y)).add(&z.mul(z));
    // Horner evaluation of c(r^2).
    let mut c = r2.lift(COT_SERIES[31]);
    for a in COT_SERIES[..31].iter().rev() {
        c = c.mul(&r2).add(&r2.lift(*a));
    }
    let cr2 = c.mul(&r2);
    let xi = [x.clone(), y.clone(), z.clone()];
    let mut a: [[T; 3]; 3] = [
        [x.lift(0.0), x.lift(0.0), x.lift(0.0)],
        [x.lift(0.0), x.lift(0.0), x.lift(0.0)],
        [x.lift(0.0), x.lift(0.0), x.lift(0.0)],
    ];
    for row in 0..3 {
        for col in 0..3 {
            // c(r^2) (xi xi^T - r^2 I)
            let mut v = c.mul(&xi[row]).mul(&xi[col]);
            if row == col {
                v = v.sub(&cr2).add(&x.lift(1.0));
            }
            a[row][col] = v;
        }
    }
    // (1/2) cross(xi): antisymmetric part with (0,1) entry -z/2 etc.
    let half = |t: &T| t.scale(0.5);
    a[0][1] = a[0][1].sub(&half(z));
    a[1][0] = a[1][0].add(&half(z));
    a[0][2] = a[0][2].add(&half(y));
    a[2][0] = a[2][0].sub(&half(y));
    a[1][2] = a[1][2].sub(&half(x));
    a[2][1] = a[2][1].add(&half(x));
    a
}

/// SU(2) with the Berger-type metric scaled along the vertical circle:
/// horizontal frame `X_1 = e_1`, `X_2 = e_2` and vertical frame
/// `Z = e_3 / lambda` in exponential coordinates, so
///
/// ```text
/// [X_1, X_2] = lambda Z,  [X_2, Z] = X_1 / lambda,  [Z, X_1] = X_2 / lambda.
/// ```
///
/// Horizontal Ricci is the identity for every `lambda`, giving constants
/// `(rho1, kappa, rho2) = (1, lambda^2, lambda^2 / 2)`. The chart box
/// keeps `r = |xi|` well inside the `r < 2 pi` validity of the
/// exponential chart. Orientation fixed by this frame:
/// `pi_H [X_1, Z]` has `X_2`-component `-1/lambda` at the origin.
pub fn su2_model(lambda: f64) -> Result<FoliationModel, ModelError> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(ModelError::InvalidParameter {
            param: "lambda",
            message: format!("vertical scale must be a positive real, got {lambda}"),
        });
    }
    let jets = move |p: &[f64], ord: u8| -> Vec<Vec<Jet>> {
        let v = Jet::variables(p, ord);
        let a = su2_columns(&v[0], &v[1], &v[2]);
        let mut rows = Vec::with_capacity(3);
        for col in 0..3 {
            let mut row: Vec<Jet> = (0..3).map(|r| a[r][col].clone()).collect();
            if col == 2 {
                for e in &mut row {
                    *e = e.scale(1.0 / lambda);
                }
            }
            rows.push(row);
        }
        rows
    };
    let values = move |p: &[f64]| -> DMatrix<f64> {
        let a = su2_columns(&p[0], &p[1], &p[2]);
        let mut out = DMatrix::zeros(3, 3);
        for col in 0..3 {
            let s = if col == 2 { 1.0 / lambda } else { 1.0 };
            for r in 0..3 {
                out[(col, r)] = a[r][col] * s;
            }
        }
        out
    };
    let mut notes = BTreeMap::new();
    notes.insert(
        "frame-series".into(),
        "32-term cotangent series; remainder < 6e-12 at the box corner (r = 4.16), \
         < 2e-18 on the sampling region (r <= 3.33)"
            .into(),
    );
    let k2 = lambda * lambda;
    Ok(FoliationModel {
        name: format!("su2:{lambda}"),
        n: 2,
        m: 1,
        domain: vec![[-2.4, 2.4]; 3],
        frame: FrameSpec::Analytic(AnalyticFrame {
            jets: Box::new(jets),
            values: Box::new(values),
        }),
        known_constants: Some(CdConstants::from_curvature(1.0, 0.5 * k2, k2, 2)),
        compact_type: true,
        sample_shrink: SAMPLE_SHRINK,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn heisenberg_frame_at_a_point() {
        let model = heisenberg_model(1).unwrap();
        let e = model.frame_values(&[0.4, -1.2, 0.7]).unwrap();
        // X = dx - (y/2) dz
        assert_abs_diff_eq!(e[(0, 0)], 1.0);
        assert_abs_diff_eq!(e[(0, 2)], 0.6);
        // Y = dy + (x/2) dz
        assert_abs_diff_eq!(e[(1, 1)], 1.0);
        assert_abs_diff_eq!(e[(1, 2)], 0.2);
        // Z = dz
        assert_abs_diff_eq!(e[(2, 2)], 1.0);
        assert_abs_diff_eq!(e[(2, 0)], 0.0);
    }

    #[test]
    fn heisenberg_two_block_layout() {
        let model = heisenberg_model(2).unwrap();
        assert_eq!(model.horizontal_rank(), 4);
        assert_eq!(model.vertical_rank(), 1);
        let e = model.frame_values(&[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        // Row 1 is X_2 = dx_2 - (y_2/2) dz with y_2 the 4th coordinate.
        assert_abs_diff_eq!(e[(1, 1)], 1.0);
        assert_abs_diff_eq!(e[(1, 4)], -0.2);
        // Row 2 is Y_1 = dy_1 + (x_1/2) dz.
        assert_abs_diff_eq!(e[(2, 2)], 1.0);
        assert_abs_diff_eq!(e[(2, 4)], 0.05);
    }

    #[test]
    fn su2_frame_is_identity_like_at_origin() {
        let model = su2_model(2.0).unwrap();
        let e = model.frame_values(&[0.0, 0.0, 0.0]).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                let expect = if r != c {
                    0.0
                } else if r == 2 {
                    0.5
                } else {
                    1.0
                };
                assert_abs_diff_eq!(e[(r, c)], expect, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn su2_series_matches_closed_form() {
        // c(r^2) = (1 - (r/2) cot(r/2)) / r^2, checked through the frame:
        // at xi = (t, 0, 0) the (1,1) entry of A is 1 - c(t^2) t^2
        //                                        = (t/2) cot(t/2).
        for &t in &[0.3f64, 1.1, 2.9, 4.1] {
            let model = su2_model(1.0).unwrap();
            let e = model.frame_values(&[t, 0.0, 0.0]).unwrap();
            let closed = (t / 2.0) / (t / 2.0).tan();
            // Documented tail estimate for the truncated series, with
            // headroom: the estimate is asymptotically sharp, not an
            // upper bound.
            let q = (t / std::f64::consts::TAU).powi(2);
            let tail = 3.0 * q.powi(33) / (1.0 - q) + 1e-15;
            assert_abs_diff_eq!(e[(1, 1)], closed, epsilon = tail.max(1e-14));
            // Along its own axis the field reduces to the coordinate one.
            assert_abs_diff_eq!(e[(0, 0)], 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn su2_jets_agree_with_values() {
        let model = su2_model(1.7).unwrap();
        let p = [0.8, -0.3, 1.1];
        let vals = model.frame_values(&p).unwrap();
        let jets = model.frame_jets(&p, 2).unwrap();
        for a in 0..3 {
            for mu in 0..3 {
                assert_abs_diff_eq!(jets[a][mu].value(), vals[(a, mu)], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn catalog_rejects_bad_parameters() {
        assert!(heisenberg_model(0).is_err());
        assert!(su2_model(0.0).is_err());
        assert!(su2_model(-1.0).is_err());
        assert!(su2_model(f64::NAN).is_err());
        assert!(product_model(0, 1).is_err());
        assert!(product_model(2, 0).is_err());
    }

    #[test]
    fn catalog_constants_are_frozen() {
        let h2 = heisenberg_model(2).unwrap();
        let c = h2.known_constants().unwrap();
        assert_eq!((c.rho1, c.kappa, c.rho2, c.n), (0.0, 1.0, 1.0, 4));
        let s = su2_model(3.0).unwrap();
        let c = s.known_constants().unwrap();
        assert_eq!((c.rho1, c.kappa, c.rho2, c.n), (1.0, 9.0, 4.5, 2));
        assert!(product_model(2, 1).unwrap().known_constants().is_none());
    }
}
