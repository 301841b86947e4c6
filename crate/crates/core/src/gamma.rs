//! Operators on functions and one-forms: the horizontal Laplacian, the
//! carre-du-champ operators and their iterations, and the one-parameter
//! family of one-form Laplacians interpolating between the sub-Riemannian
//! and taming-metric pictures.
//!
//! All operators are assembled at a point from a [`Geometry`] plus jets of
//! the fields involved; derivative orders propagate through the jets, so a
//! scalar entering a second-order identity is typically evaluated to order
//! 4 and a one-form to order 2, with frame jets of order 2 throughout.

use nalgebra::{DMatrix, DVector};

use crate::diffgeo::{cal_t_map_at, fraktur_j_at, Geometry};
use crate::fields::{OneFormField, ScalarField};
use crate::jet::Jet;
use crate::models::FoliationModel;
use crate::OpError;

/// Deliberate corruptions for negative-control tests. Default is none.
#[derive(Debug, Clone, Copy, Default)]
pub struct BoxOptions {
    /// Flip the sign of the horizontal Ricci zeroth-order term.
    pub flip_ricci: bool,
}

fn ric_sign(opts: BoxOptions) -> f64 {
    if opts.flip_ricci {
        -1.0
    } else {
        1.0
    }
}

// ---------------------------------------------------------------------------
// Scalar operators (geometry + jets).
// ---------------------------------------------------------------------------

/// The horizontal Laplacian `L f = sum_i (X_i(X_i f) - (grad_{X_i} X_i) f)`
/// as a jet (order limited by the frame jets).
pub fn l_jet(g: &Geometry, f: &Jet) -> Jet {
    let n = g.horizontal_rank();
    let d = g.dim();
    let mut acc = Jet::constant(d, f.order().saturating_sub(2), 0.0);
    for i in 0..n {
        let df = g.e_dir(i, f);
        acc = &acc + &g.e_dir(i, &df);
        for c in 0..d {
            acc = &acc - &(g.bott_jet(i, i, c) * &g.e_dir(c, f));
        }
    }
    acc
}

/// Horizontal carre du champ `Gamma(f, h) = sum_i (X_i f)(X_i h)` as a jet.
pub fn gamma_h_jet(g: &Geometry, f: &Jet, h: &Jet) -> Jet {
    let mut acc = &g.e_dir(0, f) * &g.e_dir(0, h);
    for i in 1..g.horizontal_rank() {
        acc = &acc + &(&g.e_dir(i, f) * &g.e_dir(i, h));
    }
    acc
}

/// Vertical carre du champ `Gamma^V(f, h) = sum_l (Z_l f)(Z_l h)` as a jet.
pub fn gamma_v_jet(g: &Geometry, f: &Jet, h: &Jet) -> Jet {
    let n = g.horizontal_rank();
    let mut acc = &g.e_dir(n, f) * &g.e_dir(n, h);
    for l in 1..g.vertical_rank() {
        acc = &acc + &(&g.e_dir(n + l, f) * &g.e_dir(n + l, h));
    }
    acc
}

/// Iterated horizontal form
/// `Gamma_2(f) = (L Gamma(f, f)) / 2 - Gamma(f, L f)`. Needs `f` to order 4.
pub fn gamma2_h(g: &Geometry, f: &Jet) -> f64 {
    let gam = gamma_h_jet(g, f, f);
    let lf = l_jet(g, f);
    0.5 * l_jet(g, &gam).value() - gamma_h_jet(g, f, &lf).value()
}

/// Iterated vertical form
/// `Gamma_2^V(f) = (L Gamma^V(f, f)) / 2 - Gamma^V(f, L f)`; the outer
/// operator is still the horizontal Laplacian. Needs `f` to order 4.
pub fn gamma2_v(g: &Geometry, f: &Jet) -> f64 {
    let gam = gamma_v_jet(g, f, f);
    let lf = l_jet(g, f);
    0.5 * l_jet(g, &gam).value() - gamma_v_jet(g, f, &lf).value()
}

// ---------------------------------------------------------------------------
// Scalar operators (model-level conveniences).
// ---------------------------------------------------------------------------

/// `L f` at `p`.
pub fn apply_l(model: &FoliationModel, f: &ScalarField, p: &[f64]) -> Result<f64, OpError> {
    let g = Geometry::new(model, p, 2)?;
    Ok(l_jet(&g, &f.eval(p, 2)?).value())
}

/// `Gamma(f, h)` at `p`.
pub fn gamma_h(
    model: &FoliationModel,
    f: &ScalarField,
    h: &ScalarField,
    p: &[f64],
) -> Result<f64, OpError> {
    let g = Geometry::new(model, p, 2)?;
    Ok(gamma_h_jet(&g, &f.eval(p, 1)?, &h.eval(p, 1)?).value())
}

/// `Gamma^V(f, h)` at `p`.
pub fn gamma_v(
    model: &FoliationModel,
    f: &ScalarField,
    h: &ScalarField,
    p: &[f64],
) -> Result<f64, OpError> {
    let g = Geometry::new(model, p, 2)?;
    Ok(gamma_v_jet(&g, &f.eval(p, 1)?, &h.eval(p, 1)?).value())
}

/// `Gamma_2(f)` at `p`.
pub fn gamma2_h_at(model: &FoliationModel, f: &ScalarField, p: &[f64]) -> Result<f64, OpError> {
    let g = Geometry::new(model, p, 2)?;
    Ok(gamma2_h(&g, &f.eval(p, 4)?))
}

/// `Gamma_2^V(f)` at `p`.
pub fn gamma2_v_at(model: &FoliationModel, f: &ScalarField, p: &[f64]) -> Result<f64, OpError> {
    let g = Geometry::new(model, p, 2)?;
    Ok(gamma2_v(&g, &f.eval(p, 4)?))
}

// ---------------------------------------------------------------------------
// One-form machinery.
// ---------------------------------------------------------------------------

/// The differential of a scalar as a one-form field:
/// components `(df)_a = X_a f` (horizontal) and `Z_l f` (vertical).
pub fn exterior_d(model: &std::sync::Arc<FoliationModel>, f: &ScalarField) -> OneFormField {
    let name = format!("d({})", f.name());
    let model = std::sync::Arc::clone(model);
    let f = f.clone();
    let dim = model.dim();
    OneFormField::new(name, dim, move |p, ord| {
        let frame = model.frame_jets(p, ord)?;
        let fj = f.eval(p, ord + 1)?;
        let comps = (0..dim)
            .map(|a| {
                let mut acc = &frame[a][0] * &fj.derivative(0);
                for mu in 1..dim {
                    acc = &acc + &(&frame[a][mu] * &fj.derivative(mu));
                }
                acc
            })
            .collect();
        Ok(comps)
    })
}

/// Frame components of the exterior derivative of a one-form:
/// `(d eta)(e_a, e_b) = e_a(eta_b) - e_b(eta_a) - sum_c c_ab^c eta_c`,
/// returned as the antisymmetric matrix `F_ab`. Needs component jets of
/// order >= 1.
pub fn exterior_d_form(g: &Geometry, eta: &[Jet]) -> DMatrix<f64> {
    let d = g.dim();
    let mut f2 = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in (a + 1)..d {
            let mut v = g.e_dir_value(a, &eta[b]) - g.e_dir_value(b, &eta[a]);
            for c in 0..d {
                v -= g.c_val(a, b, c) * eta[c].value();
            }
            f2[(a, b)] = v;
            f2[(b, a)] = -v;
        }
    }
    f2
}

/// Horizontal covariant gradient of a one-form under the Bott connection.
#[derive(Debug, Clone)]
pub struct FormGradient {
    /// `A_{ib} = ((grad_{X_i} eta))(e_b)`, horizontal rows only (`n x d`).
    pub grad: DMatrix<f64>,
    /// Symmetrization over the two horizontal slots (`n x n`).
    pub sym: DMatrix<f64>,
    /// Horizontal trace `sum_i A_{ii}`.
    pub trace: f64,
}

/// `(grad_{X_i} eta)(e_b) = X_i(eta_b) - sum_c G^c_{ib} eta_c` for all
/// horizontal `i`, plus its horizontal symmetrization and trace. Needs
/// component jets of order >= 1.
pub fn covariant_grad_form(g: &Geometry, eta: &[Jet]) -> FormGradient {
    let n = g.horizontal_rank();
    let d = g.dim();
    let mut grad = DMatrix::zeros(n, d);
    for i in 0..n {
        for b in 0..d {
            let mut v = g.e_dir_value(i, &eta[b]);
            for c in 0..d {
                v -= g.bott_val(i, b, c) * eta[c].value();
            }
            grad[(i, b)] = v;
        }
    }
    let mut sym = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            sym[(i, j)] = 0.5 * (grad[(i, j)] + grad[(j, i)]);
        }
    }
    let trace = (0..n).map(|i| grad[(i, i)]).sum();
    FormGradient { grad, sym, trace }
}

/// Damping matrix `M^i = T^eps_{X_i}` entries as jets, assembled from the
/// torsion: row `b`, column `c`.
fn t_eps_entry_jet(g: &Geometry, i: usize, b: usize, c: usize, eps: f64) -> Option<Jet> {
    let n = g.horizontal_rank();
    if b < n && c >= n {
        // -T^{n+l}_{ib} against vertical components
        Some(-g.torsion_jet(i, b, c))
    } else if b >= n && c < n {
        // +(1/eps) T^{b}_{ic} against horizontal components
        Some(g.torsion_jet(i, c, b).scale(1.0 / eps))
    } else {
        None
    }
}

/// Rough horizontal Laplacian on one-forms,
/// `L eta = sum_i grad_{X_i} grad_{X_i} eta - grad_{grad_{X_i} X_i} eta`,
/// in frame components. Needs component jets of order >= 2.
pub fn l_form(g: &Geometry, eta: &[Jet]) -> DVector<f64> {
    let n = g.horizontal_rank();
    let d = g.dim();
    let mut out = DVector::zeros(d);
    // Accumulated drift vector V = sum_i grad_{X_i} X_i.
    let mut drift = vec![0.0; d];
    for i in 0..n {
        // zeta_b = (grad_{X_i} eta)(e_b) as jets of order >= 1.
        let zeta: Vec<Jet> = (0..d)
            .map(|b| {
                let mut z = g.e_dir(i, &eta[b]);
                for c in 0..d {
                    z = &z - &(g.bott_jet(i, b, c) * &eta[c]);
                }
                z
            })
            .collect();
        for b in 0..d {
            let mut v = g.e_dir_value(i, &zeta[b]);
            for c in 0..d {
                v -= g.bott_val(i, b, c) * zeta[c].value();
            }
            out[b] += v;
        }
        for c in 0..d {
            drift[c] += g.bott_val(i, i, c);
        }
    }
    for b in 0..d {
        let mut v = 0.0;
        for (c, &vc) in drift.iter().enumerate() {
            if vc != 0.0 {
                let mut t = g.e_dir_value(c, &eta[b]);
                for cc in 0..d {
                    t -= g.bott_val(c, b, cc) * eta[cc].value();
                }
                v += vc * t;
            }
        }
        out[b] -= v;
    }
    out
}

/// The damped one-form Laplacian
///
/// ```text
/// box_eps eta = sum_i (grad_{X_i} - T^eps_{X_i})^2 eta
///             - (grad_V - T^eps_V) eta            with V = sum_i grad_{X_i} X_i
///             - (1/eps) J^2 eta + (1/eps) delta_H T eta - Ric_H eta,
/// ```
///
/// in frame components. Needs component jets of order >= 2.
pub fn box_epsilon(
    g: &Geometry,
    eta: &[Jet],
    eps: f64,
    opts: BoxOptions,
) -> Result<DVector<f64>, OpError> {
    if !(eps > 0.0) {
        return Err(OpError::InvalidParameter {
            param: "eps",
            message: format!("must be positive, got {eps}"),
        });
    }
    let n = g.horizontal_rank();
    let d = g.dim();
    let mut out = DVector::zeros(d);
    let mut drift = vec![0.0; d];
    for i in 0..n {
        // zeta_b = ((grad_{X_i} - T^eps_{X_i}) eta)(e_b) as jets.
        let zeta: Vec<Jet> = (0..d)
            .map(|b| {
                let mut z = g.e_dir(i, &eta[b]);
                for c in 0..d {
                    z = &z - &(g.bott_jet(i, b, c) * &eta[c]);
                    if let Some(m) = t_eps_entry_jet(g, i, b, c, eps) {
                        z = &z - &(&m * &eta[c]);
                    }
                }
                z
            })
            .collect();
        for b in 0..d {
            let mut v = g.e_dir_value(i, &zeta[b]);
            for c in 0..d {
                v -= g.bott_val(i, b, c) * zeta[c].value();
                if let Some(m) = t_eps_entry_jet(g, i, b, c, eps) {
                    v -= m.value() * zeta[c].value();
                }
            }
            out[b] += v;
        }
        for c in 0..d {
            drift[c] += g.bott_val(i, i, c);
        }
    }
    // -(grad_V - T^eps_V) eta; V is horizontal because the (H,H) Bott
    // connection is horizontal-projected.
    let t_v = g.t_eps_matrix(&drift, eps);
    for b in 0..d {
        let mut v = 0.0;
        for (c, &vc) in drift.iter().enumerate() {
            if vc != 0.0 {
                let mut t = g.e_dir_value(c, &eta[b]);
                for cc in 0..d {
                    t -= g.bott_val(c, b, cc) * eta[cc].value();
                }
                v += vc * t;
            }
        }
        for c in 0..d {
            v -= t_v[(b, c)] * eta[c].value();
        }
        out[b] -= v;
    }
    // Zeroth-order terms.
    let vals = DVector::from_iterator(d, eta.iter().map(Jet::value));
    out -= (g.j_squared() * &vals).scale(1.0 / eps);
    out += (g.delta_ht() * &vals).scale(1.0 / eps);
    out -= (g.ricci_h() * &vals).scale(ric_sign(opts));
    Ok(out)
}

/// The limiting one-form operator
///
/// ```text
/// box_inf eta = L eta + 2 J(eta) - Ric_H eta + delta_H^* T eta,
/// ```
///
/// in frame components. Needs component jets of order >= 2.
pub fn box_infinity(g: &Geometry, eta: &[Jet], opts: BoxOptions) -> DVector<f64> {
    let d = g.dim();
    let vals = DVector::from_iterator(d, eta.iter().map(Jet::value));
    let mut out = l_form(g, eta);
    out += fraktur_j_at(g, eta).scale(2.0);
    out -= (g.ricci_h() * &vals).scale(ric_sign(opts));
    out += g.delta_ht_star() * &vals;
    out
}

/// `box_inf - (2/eps) T(d eta)`: the exact-relation route to `box_eps`,
/// used by dual-path identity checks.
pub fn box_epsilon_via_relation(
    g: &Geometry,
    eta: &[Jet],
    eps: f64,
    opts: BoxOptions,
) -> Result<DVector<f64>, OpError> {
    if !(eps > 0.0) {
        return Err(OpError::InvalidParameter {
            param: "eps",
            message: format!("must be positive, got {eps}"),
        });
    }
    let f2 = exterior_d_form(g, eta);
    let mut out = box_infinity(g, eta, opts);
    out -= cal_t_map_at(g, &f2).scale(2.0 / eps);
    Ok(out)
}

/// Squared eps-norm of the damped horizontal gradient,
/// `|grad_H eta - T^eps_H eta|_eps^2 = sum_{i,b} w_b A_{ib}^2` with
/// `A_{ib} = ((grad_{X_i} - T^eps_{X_i}) eta)(e_b)` and `w_b` = 1 on
/// horizontal, `eps` on vertical components.
pub fn damped_grad_sq(g: &Geometry, eta: &[Jet], eps: f64) -> f64 {
    let n = g.horizontal_rank();
    let d = g.dim();
    let mut acc = 0.0;
    for i in 0..n {
        for b in 0..d {
            let mut a = g.e_dir_value(i, &eta[b]);
            for c in 0..d {
                a -= g.bott_val(i, b, c) * eta[c].value();
                if let Some(m) = t_eps_entry_jet(g, i, b, c, eps) {
                    a -= m.value() * eta[c].value();
                }
            }
            acc += if b < n { a * a } else { eps * a * a };
        }
    }
    acc
}

/// Weighted inner product of frame components: horizontal at weight 1,
/// vertical at weight `eps`.
pub fn eps_inner(a: &[f64], b: &[f64], n: usize, eps: f64) -> f64 {
    let h: f64 = a[..n].iter().zip(&b[..n]).map(|(x, y)| x * y).sum();
    let v: f64 = a[n..].iter().zip(&b[n..]).map(|(x, y)| x * y).sum();
    h + eps * v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::eps_norm_sq;
    use crate::models::{heisenberg_model, product_model, su2_model};
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    #[test]
    fn heisenberg_laplacian_values() {
        let model = heisenberg_model(1).unwrap();
        let p = [0.7, -0.3, 0.5];
        let f = ScalarField::parse("x1^2 + x2^2").unwrap();
        assert_abs_diff_eq!(apply_l(&model, &f, &p).unwrap(), 4.0, epsilon = 1e-13);
        let z = ScalarField::coordinate(2);
        assert_abs_diff_eq!(apply_l(&model, &z, &p).unwrap(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn heisenberg_carre_du_champ() {
        let model = heisenberg_model(1).unwrap();
        let p = [0.8, -0.6, 0.1];
        let z = ScalarField::coordinate(2);
        // X z = -y/2, Y z = x/2, Z z = 1.
        let expect = 0.25 * (p[0] * p[0] + p[1] * p[1]);
        assert_abs_diff_eq!(gamma_h(&model, &z, &z, &p).unwrap(), expect, epsilon = 1e-13);
        assert_abs_diff_eq!(gamma_v(&model, &z, &z, &p).unwrap(), 1.0, epsilon = 1e-13);
    }

    #[test]
    fn heisenberg_gamma2_of_the_vertical_coordinate() {
        let model = heisenberg_model(1).unwrap();
        let z = ScalarField::coordinate(2);
        for p in [[0.0, 0.0, 0.0], [0.9, 0.4, -1.1]] {
            // Gamma(z) = (x^2 + y^2)/4 has L Gamma = 1 and L z = 0.
            assert_abs_diff_eq!(gamma2_h_at(&model, &z, &p).unwrap(), 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(gamma2_v_at(&model, &z, &p).unwrap(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn differential_components_are_frame_derivatives() {
        let model = Arc::new(heisenberg_model(1).unwrap());
        let f = ScalarField::parse("x1 * x3").unwrap();
        let df = exterior_d(&model, &f);
        let p = [1.2, -0.5, 0.3];
        let v = df.values(&p).unwrap();
        // X f = x3 + x1 (-y/2), Y f = x1 (x/2), Z f = x1.
        assert_abs_diff_eq!(v[0], 0.3 + 1.2 * 0.25, epsilon = 1e-13);
        assert_abs_diff_eq!(v[1], 1.2 * 0.6, epsilon = 1e-13);
        assert_abs_diff_eq!(v[2], 1.2, epsilon = 1e-13);
    }

    #[test]
    fn d_of_df_vanishes() {
        let model = Arc::new(su2_model(1.0).unwrap());
        let f = ScalarField::parse("x1^2 * x2 + x3").unwrap();
        let df = exterior_d(&model, &f);
        let p = [0.4, 0.8, -0.2];
        let g = Geometry::new(&model, &p, 2).unwrap();
        let jets = df.eval(&p, 1).unwrap();
        let f2 = exterior_d_form(&g, &jets);
        assert!(f2.amax() < 1e-10, "d^2 f = {:.3e}", f2.amax());
    }

    #[test]
    fn box_relation_on_a_generic_form() {
        // box_eps eta = box_inf eta - (2/eps) T(d eta) must hold for forms
        // that are not differentials.
        let model = Arc::new(heisenberg_model(1).unwrap());
        let eta = OneFormField::from_components(
            "eta",
            vec![
                ScalarField::parse("x2^2").unwrap(),
                ScalarField::parse("x1 * x3").unwrap(),
                ScalarField::parse("x1 + x2").unwrap(),
            ],
        );
        let p = [0.6, -0.2, 0.9];
        let g = Geometry::new(&model, &p, 2).unwrap();
        let jets = eta.eval(&p, 2).unwrap();
        for eps in [0.25, 1.0, 4.0] {
            let direct = box_epsilon(&g, &jets, eps, BoxOptions::default()).unwrap();
            let via = box_epsilon_via_relation(&g, &jets, eps, BoxOptions::default()).unwrap();
            let resid = (&direct - &via).amax();
            assert!(resid < 1e-11, "relation residual {resid:.3e} at eps {eps}");
        }
    }

    #[test]
    fn laplacian_commutes_with_d_on_su2() {
        // d(L f) = box_eps(d f): the core intertwining identity.
        let model = Arc::new(su2_model(1.0).unwrap());
        let f = ScalarField::parse("x1^2 + x2 * x3").unwrap();
        let df = exterior_d(&model, &f);
        let p = [0.5, -0.4, 0.7];
        let g = Geometry::new(&model, &p, 2).unwrap();
        let fj = f.eval(&p, 4).unwrap();
        let lf = l_jet(&g, &fj);
        let dlf: Vec<f64> = (0..3).map(|a| g.e_dir_value(a, &lf)).collect();
        let jets = df.eval(&p, 2).unwrap();
        for eps in [0.25, 1.0, 4.0] {
            let lhs = box_epsilon(&g, &jets, eps, BoxOptions::default()).unwrap();
            for a in 0..3 {
                assert_abs_diff_eq!(lhs[a], dlf[a], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn box_infinity_reduces_to_l_form_on_products() {
        let model = Arc::new(product_model(2, 1).unwrap());
        let eta = OneFormField::from_components(
            "eta",
            vec![
                ScalarField::parse("x2 * x3").unwrap(),
                ScalarField::parse("x1^2").unwrap(),
                ScalarField::parse("x1 * x2 * x3").unwrap(),
            ],
        );
        let p = [0.3, 0.8, -0.4];
        let g = Geometry::new(&model, &p, 2).unwrap();
        let jets = eta.eval(&p, 2).unwrap();
        let a = box_infinity(&g, &jets, BoxOptions::default());
        let b = l_form(&g, &jets);
        assert!((a - b).amax() < 1e-13);
    }

    #[test]
    fn damped_gradient_matches_componentwise_assembly() {
        let model = Arc::new(su2_model(1.3).unwrap());
        let f = ScalarField::parse("x1 * x2 + x3^2").unwrap();
        let eta = exterior_d(&model, &f);
        let p = [0.2, 0.6, -0.5];
        let g = Geometry::new(&model, &p, 2).unwrap();
        let jets = eta.eval(&p, 1).unwrap();
        let eps = 0.7;
        // Independent assembly through explicit matrices.
        let grad = covariant_grad_form(&g, &jets);
        let vals: Vec<f64> = jets.iter().map(Jet::value).collect();
        let mut expect = 0.0;
        for i in 0..2 {
            let mut unit = vec![0.0, 0.0];
            unit[i] = 1.0;
            let m = g.t_eps_matrix(&unit, eps);
            for b in 0..3 {
                let damped: f64 = (0..3).map(|c| m[(b, c)] * vals[c]).sum();
                let a = grad.grad[(i, b)] - damped;
                expect += if b < 2 { a * a } else { eps * a * a };
            }
        }
        assert_abs_diff_eq!(damped_grad_sq(&g, &jets, eps), expect, epsilon = 1e-12);
    }

    #[test]
    fn eps_inner_and_norm_are_consistent() {
        let a = [1.0, -2.0, 3.0];
        assert_abs_diff_eq!(eps_inner(&a, &a, 2, 0.5), eps_norm_sq(&a, 2, 0.5));
    }

    #[test]
    fn box_epsilon_rejects_nonpositive_eps() {
        let model = Arc::new(heisenberg_model(1).unwrap());
        let p = [0.0, 0.0, 0.0];
        let g = Geometry::new(&model, &p, 2).unwrap();
        let eta = OneFormField::from_components(
            "eta",
            vec![
                ScalarField::constant(1.0),
                ScalarField::constant(0.0),
                ScalarField::constant(0.0),
            ],
        );
        let jets = eta.eval(&p, 2).unwrap();
        assert!(box_epsilon(&g, &jets, 0.0, BoxOptions::default()).is_err());
        assert!(box_epsilon(&g, &jets, -1.0, BoxOptions::default()).is_err());
    }
}
