//! Identity and inequality checks swept over sampled chart points and
//! random polynomial fields: operator intertwining, the dual assembly
//! routes for the damped one-form Laplacian, the pointwise energy identity
//! and its closed-form lower bound, the curvature-dimension inequality,
//! structure-constant formulas for frames whose horizontal brackets are
//! purely vertical, curvature-constant extraction, and the spectral-gap /
//! diameter consequences.
//!
//! Every check returns a [`CheckReport`] graded against a tolerance; the
//! checks are deterministic given the seed in [`SuiteParams`].

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::diffgeo::{fraktur_j_at, Geometry, DEFAULT_ORDER};
use crate::fields::{random_polynomials, ScalarField};
use crate::gamma::{
    box_epsilon, box_epsilon_via_relation, damped_grad_sq, eps_inner, gamma2_h, gamma2_v,
    gamma_h_jet, gamma_v_jet, l_jet, BoxOptions,
};
use crate::jet::Jet;
use crate::models::{CdConstants, FoliationModel};
use crate::report::{CheckReport, Verdict};
use crate::OpError;

/// Sampling plan and grading tolerance shared by the deterministic checks.
#[derive(Debug, Clone)]
pub struct SuiteParams {
    /// Metric parameters swept by the eps-dependent checks.
    pub eps: Vec<f64>,
    /// Number of random polynomial fields (or one-forms) per check.
    pub field_count: usize,
    /// Number of sampled chart points.
    pub point_count: usize,
    /// Maximum total degree of the random polynomials.
    pub max_degree: u8,
    /// Seed for points and fields; same seed, same sweep.
    pub seed: u64,
    /// Residual tolerance the verdicts are graded against.
    pub tol: f64,
}

impl Default for SuiteParams {
    fn default() -> Self {
        SuiteParams {
            eps: vec![0.25, 1.0, 4.0],
            field_count: 20,
            point_count: 20,
            max_degree: 3,
            seed: 0x0BC5_EED5,
            tol: 1e-8,
        }
    }
}

/// Sampled points with one geometry per point.
fn geometries(
    model: &FoliationModel,
    params: &SuiteParams,
) -> Result<(Vec<Vec<f64>>, Vec<Geometry>), OpError> {
    let points = model.sample_points(params.point_count, params.seed);
    let geoms = points
        .iter()
        .map(|p| Geometry::new(model, p, DEFAULT_ORDER))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((points, geoms))
}

/// `|eta|_eps^2` as a jet from component jets.
fn eps_norm_jet(jets: &[Jet], n: usize, eps: f64) -> Jet {
    let mut acc = &jets[0] * &jets[0];
    for (b, j) in jets.iter().enumerate().skip(1) {
        let sq = j * j;
        acc = &acc + &(if b < n { sq } else { sq.scale(eps) });
    }
    acc
}

// ---------------------------------------------------------------------------
// Intertwining and assembly-route checks.
// ---------------------------------------------------------------------------

/// `d(L f) = box_eps(d f)` over random polynomials, points, and eps.
pub fn check_intertwining(
    model: &FoliationModel,
    params: &SuiteParams,
) -> Result<CheckReport, OpError> {
    check_intertwining_with(model, params, BoxOptions::default())
}

/// Same sweep with explicit [`BoxOptions`]; corrupted options are expected
/// to break the identity (negative control).
pub fn check_intertwining_with(
    model: &FoliationModel,
    params: &SuiteParams,
    opts: BoxOptions,
) -> Result<CheckReport, OpError> {
    let d = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let fields = random_polynomials(d, params.max_degree, params.field_count, &mut rng);
    let (points, geoms) = geometries(model, params)?;
    let mut per_eps = vec![0.0f64; params.eps.len()];
    for (p, g) in points.iter().zip(&geoms) {
        for f in &fields {
            let fj = f.eval(p, 4)?;
            let lf = l_jet(g, &fj);
            let dlf: Vec<f64> = (0..d).map(|a| g.e_dir_value(a, &lf)).collect();
            let df: Vec<Jet> = (0..d).map(|a| g.e_dir(a, &fj)).collect();
            for (k, &eps) in params.eps.iter().enumerate() {
                let bx = box_epsilon(g, &df, eps, opts)?;
                let r = (0..d).map(|a| (bx[a] - dlf[a]).abs()).fold(0.0, f64::max);
                per_eps[k] = per_eps[k].max(r);
            }
        }
    }
    let worst = per_eps.iter().copied().fold(0.0, f64::max);
    let mut rep = CheckReport::graded(
        "intertwining",
        model.name(),
        "d(L f) vs box_eps(d f)",
        params.tol,
        worst,
    )
    .with_eps(&params.eps)
    .with_samples(points.len() * fields.len(), params.seed);
    rep.residuals = per_eps;
    Ok(rep)
}

/// Direct assembly of `box_eps` against the `box_inf - (2/eps) T(d .)`
/// route, on generic (non-closed) one-forms and on exact differentials.
pub fn check_box_relation(
    model: &FoliationModel,
    params: &SuiteParams,
) -> Result<CheckReport, OpError> {
    let d = model.dim();
    let opts = BoxOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0xB0);
    let comps = random_polynomials(d, params.max_degree, params.field_count * d, &mut rng);
    let scalars = random_polynomials(d, params.max_degree, params.field_count.min(5), &mut rng);
    let (points, geoms) = geometries(model, params)?;
    let mut per_eps = vec![0.0f64; params.eps.len()];
    let mut jets_list: Vec<Vec<Jet>> = Vec::new();
    for (p, g) in points.iter().zip(&geoms) {
        jets_list.clear();
        for chunk in comps.chunks(d) {
            jets_list.push(
                chunk
                    .iter()
                    .map(|c| c.eval(p, 2))
                    .collect::<Result<Vec<_>, _>>()?,
            );
        }
        for f in &scalars {
            let fj = f.eval(p, 3)?;
            jets_list.push((0..d).map(|a| g.e_dir(a, &fj)).collect());
        }
        for jets in &jets_list {
            for (k, &eps) in params.eps.iter().enumerate() {
                let direct = box_epsilon(g, jets, eps, opts)?;
                let routed = box_epsilon_via_relation(g, jets, eps, opts)?;
                per_eps[k] = per_eps[k].max((direct - routed).amax());
            }
        }
    }
    let worst = per_eps.iter().copied().fold(0.0, f64::max);
    let mut rep = CheckReport::graded(
        "box-relation",
        model.name(),
        "box_eps vs box_inf - (2/eps) T(d .)",
        params.tol,
        worst,
    )
    .with_eps(&params.eps)
    .with_samples(
        points.len() * (params.field_count + scalars.len()),
        params.seed,
    );
    rep.residuals = per_eps;
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Pointwise energy identity and its closed-form lower bound.
// ---------------------------------------------------------------------------

/// The pointwise identity, for arbitrary one-forms `eta`:
///
/// ```text
/// (1/2) L |eta|_eps^2 - <box_eps eta, eta>_eps
///   = |grad_H eta - T^eps_H eta|_eps^2 + <Ric_H eta, eta>_H
///     - <delta_H T eta, eta>_V + (1/eps) <J^2 eta, eta>_H.
/// ```
pub fn check_bochner_equality(
    model: &FoliationModel,
    params: &SuiteParams,
) -> Result<CheckReport, OpError> {
    let d = model.dim();
    let n = model.horizontal_rank();
    let opts = BoxOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0xE9);
    let comps = random_polynomials(d, params.max_degree, params.field_count * d, &mut rng);
    let (points, geoms) = geometries(model, params)?;
    let mut per_eps = vec![0.0f64; params.eps.len()];
    for (p, g) in points.iter().zip(&geoms) {
        for chunk in comps.chunks(d) {
            let jets = chunk
                .iter()
                .map(|c| c.eval(p, 2))
                .collect::<Result<Vec<Jet>, _>>()?;
            let vals = DVector::from_iterator(d, jets.iter().map(Jet::value));
            let ric_term = (g.ricci_h() * &vals).dot(&vals);
            let dht_term = (g.delta_ht() * &vals).dot(&vals);
            let j2_term = (g.j_squared() * &vals).dot(&vals);
            for (k, &eps) in params.eps.iter().enumerate() {
                let phi = eps_norm_jet(&jets, n, eps);
                let bx = box_epsilon(g, &jets, eps, opts)?;
                let lhs = 0.5 * l_jet(g, &phi).value()
                    - eps_inner(bx.as_slice(), vals.as_slice(), n, eps);
                let rhs =
                    damped_grad_sq(g, &jets, eps) + ric_term - dht_term + j2_term / eps;
                per_eps[k] = per_eps[k].max((lhs - rhs).abs());
            }
        }
    }
    let worst = per_eps.iter().copied().fold(0.0, f64::max);
    let mut rep = CheckReport::graded(
        "bochner-equality",
        model.name(),
        "energy identity on random one-forms",
        params.tol,
        worst,
    )
    .with_eps(&params.eps)
    .with_samples(points.len() * params.field_count, params.seed);
    rep.residuals = per_eps;
    Ok(rep)
}

/// The lower bound obtained from the identity for `eta = d f`: the damped
/// gradient square dominates `(L f)^2 / n` plus the square norm of the
/// antisymmetric vertical contribution, so
///
/// ```text
/// (1/2) L |df|_eps^2 - <box_eps df, df>_eps
///   >= (1/n) (L f)^2 - (1/4) Tr_H(J_eta^2) + <Ric_H df, df>_H
///      - <delta_H T df, df>_V + (1/eps) <J^2 df, df>_H
/// ```
///
/// with `J_eta` built from the vertical components of `df`. The report
/// grades the most negative slack.
pub fn check_bochner_inequality(
    model: &FoliationModel,
    params: &SuiteParams,
) -> Result<CheckReport, OpError> {
    let d = model.dim();
    let n = model.horizontal_rank();
    let opts = BoxOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0xE1);
    let mut fields = random_polynomials(d, params.max_degree, params.field_count, &mut rng);
    fields.extend((0..d).map(ScalarField::coordinate));
    let (points, geoms) = geometries(model, params)?;
    let mut per_eps = vec![f64::INFINITY; params.eps.len()];
    for (p, g) in points.iter().zip(&geoms) {
        for f in &fields {
            let fj = f.eval(p, 3)?;
            let jets: Vec<Jet> = (0..d).map(|a| g.e_dir(a, &fj)).collect();
            let vals = DVector::from_iterator(d, jets.iter().map(Jet::value));
            let lf = l_jet(g, &fj).value();
            let jm = g.j_map(&vals.as_slice()[n..]);
            let tr_j_eta_sq = (&jm * &jm).trace();
            let ric_term = (g.ricci_h() * &vals).dot(&vals);
            let dht_term = (g.delta_ht() * &vals).dot(&vals);
            let j2_term = (g.j_squared() * &vals).dot(&vals);
            for (k, &eps) in params.eps.iter().enumerate() {
                let phi = eps_norm_jet(&jets, n, eps);
                let bx = box_epsilon(g, &jets, eps, opts)?;
                let lhs = 0.5 * l_jet(g, &phi).value()
                    - eps_inner(bx.as_slice(), vals.as_slice(), n, eps);
                let rhs = lf * lf / n as f64 - 0.25 * tr_j_eta_sq + ric_term - dht_term
                    + j2_term / eps;
                per_eps[k] = per_eps[k].min(lhs - rhs);
            }
        }
    }
    let min_slack = per_eps.iter().copied().fold(f64::INFINITY, f64::min);
    let mut rep = CheckReport::graded(
        "bochner-inequality",
        model.name(),
        "energy lower bound on exact one-forms",
        params.tol,
        -min_slack,
    )
    .with_eps(&params.eps)
    .with_samples(
        points.len() * (params.field_count + d),
        params.seed,
    )
    .with_detail("min_slack", format!("{min_slack:.3e}"));
    rep.residuals = per_eps.iter().map(|s| -s).collect();
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Curvature-dimension inequality.
// ---------------------------------------------------------------------------

/// Curvature constants for the model: declared ones when present,
/// otherwise the extracted pointwise extrema.
fn resolve_constants(
    model: &FoliationModel,
    params: &SuiteParams,
) -> Result<CdConstants, OpError> {
    if let Some(c) = model.known_constants() {
        return Ok(*c);
    }
    Ok(extract_constants(model, params)?.1)
}

/// The curvature-dimension inequality
///
/// ```text
/// Gamma_2(f) + eps Gamma_2^V(f)
///   >= (1/n) (L f)^2 + (rho1 - kappa/eps) Gamma(f) + rho2 Gamma^V(f)
/// ```
///
/// over random polynomials plus every coordinate function, grading the most
/// negative slack.
pub fn check_cd(model: &FoliationModel, params: &SuiteParams) -> Result<CheckReport, OpError> {
    check_cd_scaled(model, params, 1.0)
}

/// Same sweep with `rho2` scaled by `rho2_factor`; factors above 1 overdraw
/// the vertical term and are expected to fail (negative control).
pub fn check_cd_scaled(
    model: &FoliationModel,
    params: &SuiteParams,
    rho2_factor: f64,
) -> Result<CheckReport, OpError> {
    let c = resolve_constants(model, params)?;
    let d = model.dim();
    let n = model.horizontal_rank() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0xCD);
    let mut fields = random_polynomials(d, params.max_degree, params.field_count, &mut rng);
    fields.extend((0..d).map(ScalarField::coordinate));
    let (points, geoms) = geometries(model, params)?;
    let mut per_eps = vec![f64::INFINITY; params.eps.len()];
    for (p, g) in points.iter().zip(&geoms) {
        for f in &fields {
            let fj = f.eval(p, 4)?;
            let lf = l_jet(g, &fj).value();
            let gam = gamma_h_jet(g, &fj, &fj).value();
            let gamv = gamma_v_jet(g, &fj, &fj).value();
            let g2 = gamma2_h(g, &fj);
            let g2v = gamma2_v(g, &fj);
            for (k, &eps) in params.eps.iter().enumerate() {
                let slack = g2 + eps * g2v
                    - lf * lf / n
                    - (c.rho1 - c.kappa / eps) * gam
                    - rho2_factor * c.rho2 * gamv;
                per_eps[k] = per_eps[k].min(slack);
            }
        }
    }
    let min_slack = per_eps.iter().copied().fold(f64::INFINITY, f64::min);
    let control = (rho2_factor - 1.0).abs() > 1e-15;
    let mut rep = CheckReport::graded(
        if control {
            "curvature-dimension-control"
        } else {
            "curvature-dimension"
        },
        model.name(),
        format!(
            "Gamma_2 + eps Gamma_2^V vs (L f)^2/n + (rho1 - kappa/eps) Gamma + {} rho2 Gamma^V",
            rho2_factor
        ),
        params.tol,
        -min_slack,
    )
    .with_eps(&params.eps)
    .with_samples(points.len() * (params.field_count + d), params.seed)
    .with_detail("constants", c)
    .with_detail("min_slack", format!("{min_slack:.3e}"));
    if control {
        rep = rep.with_detail("rho2_factor", rho2_factor);
    }
    rep.residuals = per_eps.iter().map(|s| -s).collect();
    Ok(rep)
}

/// Commutation of the two carre-du-champ forms,
/// `Gamma(f, Gamma^V(f)) = Gamma^V(f, Gamma(f))`.
pub fn check_gamma_intertwining(
    model: &FoliationModel,
    params: &SuiteParams,
) -> Result<CheckReport, OpError> {
    let d = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x6A);
    let mut fields = random_polynomials(d, params.max_degree, params.field_count, &mut rng);
    fields.extend((0..d).map(ScalarField::coordinate));
    let (points, geoms) = geometries(model, params)?;
    let mut worst = 0.0f64;
    for (p, g) in points.iter().zip(&geoms) {
        for f in &fields {
            let fj = f.eval(p, 3)?;
            let gh = gamma_h_jet(g, &fj, &fj);
            let gv = gamma_v_jet(g, &fj, &fj);
            let a = gamma_h_jet(g, &fj, &gv).value();
            let b = gamma_v_jet(g, &fj, &gh).value();
            worst = worst.max((a - b).abs());
        }
    }
    Ok(CheckReport::graded(
        "gamma-commutation",
        model.name(),
        "Gamma(f, Gamma^V f) vs Gamma^V(f, Gamma f)",
        params.tol,
        worst,
    )
    .with_samples(points.len() * (params.field_count + d), params.seed))
}

// ---------------------------------------------------------------------------
// Closed-form structure-constant formulas.
// ---------------------------------------------------------------------------

/// On frames whose horizontal brackets are purely vertical
/// (`[X_i, X_j]` has no horizontal part) and whose mixed brackets have no
/// vertical part, the curvature and torsion operators reduce to closed
/// forms in the structure constants. This check gates on those two
/// conditions and then compares seven operators against their closed
/// forms; on other frames it reports `NotApplicable`.
pub fn local_formula_oracle(
    model: &FoliationModel,
    params: &SuiteParams,
) -> Result<CheckReport, OpError> {
    const GATE_TOL: f64 = 1e-12;
    let n = model.horizontal_rank();
    let m = model.vertical_rank();
    let d = model.dim();
    let (points, geoms) = geometries(model, params)?;

    // Gate: omega = horizontal part of horizontal brackets, a = vertical
    // part of mixed brackets.
    let mut omega = 0.0f64;
    let mut amix = 0.0f64;
    for g in &geoms {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    omega = omega.max(g.c_val(i, j, k).abs());
                }
            }
            for k in 0..m {
                for l in 0..m {
                    amix = amix.max(g.c_val(i, n + k, n + l).abs());
                }
            }
        }
    }
    if omega > GATE_TOL || amix > GATE_TOL {
        let mut rep = CheckReport::graded(
            "local-formulas",
            model.name(),
            "closed-form structure-constant identities",
            params.tol,
            omega.max(amix),
        )
        .with_samples(points.len(), params.seed)
        .with_detail("gate_horizontal_bracket", format!("{omega:.3e}"))
        .with_detail("gate_mixed_bracket", format!("{amix:.3e}"));
        rep.verdict = Verdict::NotApplicable;
        rep.details.insert(
            "reason".into(),
            "frame brackets outside the closed-form regime".into(),
        );
        return Ok(rep);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x70);
    let comps = random_polynomials(d, params.max_degree, d, &mut rng);
    let mut r = [0.0f64; 7];
    for (p, g) in points.iter().zip(&geoms) {
        // Closed-form horizontal Ricci from the structure constants.
        let raw = |i: usize, k: usize| -> f64 {
            let mut acc = 0.0;
            for j in 0..n {
                for l in 0..m {
                    acc += g.c_val(j, i, n + l) * g.c_val(k, n + l, j);
                }
            }
            acc
        };
        for i in 0..n {
            for k in 0..n {
                let manual = 0.5 * (raw(i, k) + raw(k, i));
                r[0] = r[0].max((g.ricci_h()[(i, k)] - manual).abs());
            }
        }
        // Mixed horizontal-vertical Ricci components vanish.
        for b in 0..n {
            for l in 0..m {
                let fwd: f64 = (0..n).map(|i| g.bott_curvature(i, b, n + l, i)).sum();
                let bwd: f64 = (0..n).map(|i| g.bott_curvature(i, n + l, b, i)).sum();
                r[1] = r[1].max(fwd.abs()).max(bwd.abs());
            }
        }
        // Vertical-curl map, torsion divergence, and its adjoint.
        let jets = comps
            .iter()
            .map(|c| c.eval(p, 1))
            .collect::<Result<Vec<Jet>, _>>()?;
        let frak = fraktur_j_at(g, &jets);
        for i in 0..n {
            let mut manual = 0.0;
            for j in 0..n {
                for l in 0..m {
                    manual += g.c_val(i, j, n + l) * g.e_dir_value(j, &jets[n + l]);
                }
            }
            r[2] = r[2].max((frak[i] - manual).abs());
        }
        let dht = g.delta_ht();
        let dhts = g.delta_ht_star();
        for l in 0..m {
            for j in 0..n {
                let manual: f64 = -(0..n)
                    .map(|i| g.e_dir_value(i, g.c_jet(i, j, n + l)))
                    .sum::<f64>();
                r[3] = r[3].max((dht[(n + l, j)] - manual).abs());
                let manual_star: f64 = (0..n)
                    .map(|i| g.e_dir_value(i, g.c_jet(i, j, n + l)))
                    .sum::<f64>();
                r[4] = r[4].max((dhts[(j, n + l)] + manual_star).abs());
            }
        }
        // Damping matrix columns and the horizontal quadratic form of J^2.
        let vals: Vec<f64> = jets.iter().map(Jet::value).collect();
        for &eps in &params.eps {
            for i in 0..n {
                let mut unit = vec![0.0; d];
                unit[i] = 1.0;
                let mat = g.t_eps_matrix(&unit, eps);
                let mut out = vec![0.0; d];
                for (row, o) in out.iter_mut().enumerate() {
                    *o = (0..d).map(|col| mat[(row, col)] * vals[col]).sum();
                }
                for j in 0..n {
                    let manual: f64 = (0..m)
                        .map(|l| g.c_val(i, j, n + l) * vals[n + l])
                        .sum();
                    r[5] = r[5].max((out[j] - manual).abs());
                }
                for l in 0..m {
                    let manual: f64 = -(0..n)
                        .map(|j| g.c_val(i, j, n + l) * vals[j])
                        .sum::<f64>()
                        / eps;
                    r[5] = r[5].max((out[n + l] - manual).abs());
                }
            }
        }
        let v = DVector::from_column_slice(&vals);
        let lhs = (g.j_squared() * &v).dot(&v);
        let mut manual = 0.0;
        for l in 0..m {
            for i in 0..n {
                let row: f64 = (0..n).map(|j| g.c_val(i, j, n + l) * vals[j]).sum();
                manual -= row * row;
            }
        }
        r[6] = r[6].max((lhs - manual).abs());
    }

    let worst = r.iter().copied().fold(0.0, f64::max);
    let names = [
        "ricci_closed_form",
        "ricci_mixed_components",
        "vertical_curl_map",
        "torsion_divergence",
        "torsion_divergence_adjoint",
        "damping_matrix",
        "j_squared_quadratic",
    ];
    let mut rep = CheckReport::graded(
        "local-formulas",
        model.name(),
        "closed-form structure-constant identities",
        params.tol,
        worst,
    )
    .with_eps(&params.eps)
    .with_samples(points.len(), params.seed);
    rep.residuals = r.to_vec();
    for (name, ri) in names.iter().zip(&r) {
        rep = rep.with_detail(*name, format!("{ri:.3e}"));
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Curvature constants and their consequences.
// ---------------------------------------------------------------------------

fn eig_range(mat: DMatrix<f64>) -> (f64, f64) {
    let eigs = SymmetricEigen::new(mat).eigenvalues;
    let min = eigs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eigs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Extract the curvature constants by an eigenvalue sweep over sampled
/// points: `rho1` = least horizontal Ricci eigenvalue, `kappa` = largest
/// eigenvalue of `-J^2`, `rho2` = least eigenvalue of the vertical
/// quadratic form `Q_kl = -(1/4) Tr_H(J_k J_l)`. Against declared
/// constants the report grades the mismatch; otherwise it grades the
/// spread of the pointwise extrema across the sample (constant-curvature
/// diagnostic) and reports the envelope, downgrading to `Inconclusive`
/// rather than failing when the extrema genuinely vary.
pub fn extract_constants(
    model: &FoliationModel,
    params: &SuiteParams,
) -> Result<(CheckReport, CdConstants), OpError> {
    let n = model.horizontal_rank();
    let m = model.vertical_rank();
    let (points, geoms) = geometries(model, params)?;
    let mut rho1 = (f64::INFINITY, f64::NEG_INFINITY);
    let mut kappa = (f64::INFINITY, f64::NEG_INFINITY);
    let mut rho2 = (f64::INFINITY, f64::NEG_INFINITY);
    for g in &geoms {
        let ric = g.ricci_h().view((0, 0), (n, n)).into_owned();
        let (lo, _) = eig_range(ric);
        rho1 = (rho1.0.min(lo), rho1.1.max(lo));
        let mj2 = g.j_squared().view((0, 0), (n, n)).scale(-1.0);
        let (_, hi) = eig_range(mj2);
        kappa = (kappa.0.min(hi), kappa.1.max(hi));
        let q = DMatrix::from_fn(m, m, |k, l| {
            -0.25 * (g.j_matrix(k) * g.j_matrix(l)).trace()
        });
        let (lo, _) = eig_range(q);
        rho2 = (rho2.0.min(lo), rho2.1.max(lo));
    }
    // `+ 0.0` flushes negative zeros from eigensolves of zero matrices.
    let c = CdConstants::from_curvature(rho1.0 + 0.0, rho2.0 + 0.0, kappa.1 + 0.0, n);
    let spread = (rho1.1 - rho1.0)
        .max(kappa.1 - kappa.0)
        .max(rho2.1 - rho2.0);

    let (worst, against) = match model.known_constants() {
        Some(k) => (
            (c.rho1 - k.rho1)
                .abs()
                .max((c.kappa - k.kappa).abs())
                .max((c.rho2 - k.rho2).abs()),
            "declared constants",
        ),
        None => (spread, "constancy across samples"),
    };
    let mut rep = CheckReport::graded(
        "constants",
        model.name(),
        format!("pointwise curvature extrema vs {against}"),
        params.tol,
        worst,
    )
    .with_samples(points.len(), params.seed)
    .with_detail("extracted", c)
    .with_detail("spread", format!("{spread:.3e}"));
    if model.known_constants().is_none() && rep.verdict == Verdict::Fail {
        // Varying curvature is not an error; the envelope is still valid.
        rep.verdict = Verdict::Inconclusive;
        rep.details.insert(
            "reason".into(),
            "extrema vary across samples; constants reported as envelope".into(),
        );
    }
    if c.rho2 <= 0.0 {
        rep = rep.with_detail(
            "rho2_degenerate",
            "vertical quadratic form is not positive definite",
        );
    }
    match diameter_bound(&c) {
        Some(v) => rep = rep.with_detail("diameter_bound", v),
        None => rep = rep.with_detail("diameter_bound", "n/a"),
    }
    match lambda1_bound(&c) {
        Some(v) => rep = rep.with_detail("lambda1_bound", v),
        None => rep = rep.with_detail("lambda1_bound", "n/a"),
    }
    Ok((rep, c))
}

/// Diameter bound
/// `2 sqrt(3) pi sqrt(((kappa + rho2) / (rho1 rho2)) (1 + 3 kappa / (2 rho2)) n)`,
/// defined when `rho1 > 0` and `rho2 > 0`.
pub fn diameter_bound(c: &CdConstants) -> Option<f64> {
    if c.rho1 > 0.0 && c.rho2 > 0.0 {
        let v = (c.kappa + c.rho2) / (c.rho1 * c.rho2)
            * (1.0 + 1.5 * c.kappa / c.rho2)
            * c.n as f64;
        Some(2.0 * 3.0f64.sqrt() * std::f64::consts::PI * v.sqrt())
    } else {
        None
    }
}

/// Spectral-gap bound `lambda_1 >= rho1 / (1 - 1/n + 3 kappa / (4 rho2))`,
/// defined when `rho1 > 0`, `rho2 > 0`, and the denominator is positive.
pub fn lambda1_bound(c: &CdConstants) -> Option<f64> {
    if !(c.rho1 > 0.0 && c.rho2 > 0.0) {
        return None;
    }
    let denom = 1.0 - 1.0 / c.n as f64 + 0.75 * c.kappa / c.rho2;
    if denom > 0.0 {
        Some(c.rho1 / denom)
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// Structural invariants of the frame and connections.
// ---------------------------------------------------------------------------

/// Frame-level invariants: the torsion block pattern, weighted-metric
/// compatibility of the Bott connection for each eps, skewness of the `J`
/// maps, invariance of `J^2` under vertical rotations, and the defining
/// properties of the Levi-Civita coefficients.
pub fn check_structural(
    model: &FoliationModel,
    params: &SuiteParams,
) -> Result<CheckReport, OpError> {
    let n = model.horizontal_rank();
    let m = model.vertical_rank();
    let d = model.dim();
    let (points, geoms) = geometries(model, params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x57);
    let mut r = [0.0f64; 6];
    for g in &geoms {
        let weight = |b: usize, eps: f64| if b < n { 1.0 } else { eps };
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    // Torsion is supported on horizontal pairs with
                    // vertical output.
                    if !(a < n && b < n && c >= n) {
                        r[0] = r[0].max(g.torsion_val(a, b, c).abs());
                    }
                    for &eps in &params.eps {
                        r[1] = r[1].max(
                            (weight(c, eps) * g.bott_val(a, b, c)
                                + weight(b, eps) * g.bott_val(a, c, b))
                            .abs(),
                        );
                    }
                    r[4] = r[4].max(
                        (g.lc_val(a, b, c) - g.lc_val(b, a, c) - g.c_val(a, b, c)).abs(),
                    );
                    r[5] = r[5].max((g.lc_val(a, b, c) + g.lc_val(a, c, b)).abs());
                }
            }
        }
        for l in 0..m {
            let j = g.j_matrix(l);
            r[2] = r[2].max((j + j.transpose()).amax());
        }
        // J^2 is invariant under orthogonal changes of the vertical frame.
        let rot = if m >= 2 {
            let gauss = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
            gauss.qr().q()
        } else {
            DMatrix::identity(m, m)
        };
        let mut rotated = DMatrix::zeros(d, d);
        for l in 0..m {
            let z: Vec<f64> = (0..m).map(|k| rot[(k, l)]).collect();
            let jl = g.j_map(&z);
            rotated += &jl * &jl;
        }
        r[3] = r[3].max((rotated - g.j_squared()).amax());
    }
    let worst = r.iter().copied().fold(0.0, f64::max);
    let names = [
        "torsion_block_pattern",
        "bott_weighted_compat",
        "j_skew",
        "j_squared_rotation_invariance",
        "lc_torsion_free",
        "lc_metric_compat",
    ];
    let mut rep = CheckReport::graded(
        "structural",
        model.name(),
        "frame and connection invariants",
        params.tol,
        worst,
    )
    .with_eps(&params.eps)
    .with_samples(points.len(), params.seed);
    rep.residuals = r.to_vec();
    for (name, ri) in names.iter().zip(&r) {
        rep = rep.with_detail(*name, format!("{ri:.3e}"));
    }
    Ok(rep)
}

/// Every deterministic check, in a fixed order.
pub fn run_suite(
    model: &Arc<FoliationModel>,
    params: &SuiteParams,
) -> Result<Vec<CheckReport>, OpError> {
    let mut out = vec![
        check_intertwining(model, params)?,
        check_box_relation(model, params)?,
        check_bochner_equality(model, params)?,
        check_bochner_inequality(model, params)?,
        check_cd(model, params)?,
        check_gamma_intertwining(model, params)?,
        local_formula_oracle(model, params)?,
    ];
    let (rep, _) = extract_constants(model, params)?;
    out.push(rep);
    out.push(check_structural(model, params)?);
    Ok(out)
}
