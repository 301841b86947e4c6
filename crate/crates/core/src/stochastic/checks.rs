//! Statistical verification built on the path sampler: the dual (transport)
//! representation of the semigroup gradient, the transport gradient bound,
//! the parabolic gradient inequality, isometry of the undamped transport
//! factor, and equilibrium behavior on compact-type models.
//!
//! Common-random-number design: every comparison that subtracts two Monte
//! Carlo quantities advances all of its starting points in lock-step with
//! the same Brownian increments and censors jointly, so differences are
//! estimated path by path (or batch by batch) rather than from independent
//! runs. Finite-difference derivatives of the semigroup carry an `O(h^2)`
//! bias and the integrator an `O(dt)` weak bias; both are recorded in the
//! report details and sized to stay well below the statistical resolution.

use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

use super::paths::{run_paths, DiffusionParams, Estimate, RunSpec};
use crate::diffgeo::Geometry;
use crate::fields::{eps_norm_sq, ScalarField};
use crate::gamma::exterior_d;
use crate::models::FoliationModel;
use crate::report::{CheckReport, Verdict};
use crate::OpError;

/// Center plus `+h e_mu`, `-h e_mu` per coordinate: the first-order stencil.
/// Index of `+h e_mu` is `1 + 2 mu`; of `-h e_mu` is `2 + 2 mu`.
fn axis_stencil(x0: &[f64], h: f64) -> Vec<Vec<f64>> {
    let mut out = vec![x0.to_vec()];
    for mu in 0..x0.len() {
        for sgn in [1.0, -1.0] {
            let mut p = x0.to_vec();
            p[mu] += sgn * h;
            out.push(p);
        }
    }
    out
}

/// Axis stencil plus the four diagonal points per coordinate pair, enough
/// for all first and second coordinate derivatives.
fn full_stencil(x0: &[f64], h: f64) -> Vec<Vec<f64>> {
    let d = x0.len();
    let mut out = axis_stencil(x0, h);
    for mu in 0..d {
        for nu in (mu + 1)..d {
            for (s1, s2) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut p = x0.to_vec();
                p[mu] += s1 * h;
                p[nu] += s2 * h;
                out.push(p);
            }
        }
    }
    out
}

/// Position of the `(mu, nu, s1, s2)` diagonal point inside `full_stencil`.
fn pair_index(d: usize, mu: usize, nu: usize, corner: usize) -> usize {
    // Pairs are enumerated in lexicographic (mu, nu) order.
    let pair = mu * d - mu * (mu + 1) / 2 + (nu - mu - 1);
    1 + 2 * d + 4 * pair + corner
}

fn require_constants(model: &FoliationModel) -> Result<crate::models::CdConstants, OpError> {
    model
        .known_constants()
        .copied()
        .ok_or_else(|| OpError::InvalidParameter {
            param: "model",
            message: format!("`{}` has no curvature constants attached", model.name()),
        })
}

fn floor_se(se: f64) -> f64 {
    se.max(1e-13)
}

/// Dual representations of the semigroup gradient: the damped-transport
/// estimator `E[tau_t (df)(X_t)]` against a centered finite difference of
/// `P_t f` around `x0`, both from the same paths. Reports the worst
/// per-component z-score; tolerance is the z-level (3).
pub fn check_feynman_kac(
    model: &Arc<FoliationModel>,
    params: &DiffusionParams,
    t: f64,
    x0: &[f64],
    f: &ScalarField,
    h: f64,
) -> Result<CheckReport, OpError> {
    let d = model.dim();
    let df = exterior_d(model, f);
    let starts = axis_stencil(x0, h);
    let spec = RunSpec {
        starts: &starts,
        t,
        transport: true,
    };
    let outcomes = run_paths(model, params, &spec)?;
    let e0 = model.frame_values(x0)?;

    let mut per_comp: Vec<Vec<f64>> = vec![Vec::new(); d];
    for o in &outcomes {
        if !o.retained {
            continue;
        }
        let u = o.tau.as_ref().expect("transport requested");
        let dfv = DVector::from_vec(df.values(&o.finals[0])?);
        let udf = u * dfv;
        let mut grad = vec![0.0; d];
        for (mu, g) in grad.iter_mut().enumerate() {
            let fp = f.value(&o.finals[1 + 2 * mu])?;
            let fm = f.value(&o.finals[2 + 2 * mu])?;
            *g = (fp - fm) / (2.0 * h);
        }
        for a in 0..d {
            let fd: f64 = (0..d).map(|mu| e0[(a, mu)] * grad[mu]).sum();
            per_comp[a].push(udf[a] - fd);
        }
    }

    let n_total = outcomes.len();
    let n_retained = per_comp[0].len();
    let mut worst = 0.0f64;
    let mut residuals = Vec::with_capacity(d);
    for comp in &per_comp {
        let est = Estimate::from_values(comp, n_total);
        let z = est.value.abs() / floor_se(est.std_error);
        residuals.push(z);
        worst = worst.max(z);
    }
    let mut report = CheckReport::graded(
        "feynman_kac",
        model.name(),
        "transport estimator of d(P_t f) vs finite difference",
        3.0,
        worst,
    )
    .with_eps(&[params.eps])
    .with_samples(n_total, params.seed)
    .with_detail("t", t)
    .with_detail("dt", params.dt)
    .with_detail("fd_step", h)
    .with_detail("fd_bias", format!("O(h^2) = O({:.1e})", h * h))
    .with_detail("n_retained", n_retained)
    .with_detail(
        "exit_fraction",
        (n_total - n_retained) as f64 / n_total.max(1) as f64,
    );
    report.residuals = residuals;
    if n_retained < 100.max(n_total / 2) {
        report.verdict = Verdict::Inconclusive;
    }
    Ok(report)
}

/// Transport gradient bound
/// `|d P_t f|_eps (x0) <= exp((K + kappa/eps) t) P_t |df|_eps (x0)`:
/// batch-mean slack must sit above `-3` standard errors. Reports
/// `worst = -z`; tolerance 3.
pub fn check_gradient_bound(
    model: &Arc<FoliationModel>,
    params: &DiffusionParams,
    t: f64,
    x0: &[f64],
    f: &ScalarField,
    h: f64,
    batches: usize,
) -> Result<CheckReport, OpError> {
    let consts = require_constants(model)?;
    let rate = consts.big_k + consts.kappa / params.eps;
    let d = model.dim();
    let n = model.horizontal_rank();
    let df = exterior_d(model, f);
    let starts = axis_stencil(x0, h);
    let spec = RunSpec {
        starts: &starts,
        t,
        transport: false,
    };
    let outcomes = run_paths(model, params, &spec)?;
    let e0 = model.frame_values(x0)?;

    // Per batch: stencil means of f and the mean of |df|_eps at the center
    // endpoint, combined into one slack value.
    let b = batches.max(2);
    let s = starts.len();
    let mut sums = vec![vec![0.0f64; s + 1]; b];
    let mut counts = vec![0usize; b];
    for (j, o) in outcomes.iter().enumerate() {
        if !o.retained {
            continue;
        }
        let bi = j % b;
        for (k, fin) in o.finals.iter().enumerate() {
            sums[bi][k] += f.value(fin)?;
        }
        let dfv = df.values(&o.finals[0])?;
        sums[bi][s] += eps_norm_sq(&dfv, n, params.eps).sqrt();
        counts[bi] += 1;
    }
    let mut slacks = Vec::with_capacity(b);
    for (bi, cnt) in counts.iter().enumerate() {
        if *cnt < 10 {
            continue;
        }
        let mean = |k: usize| sums[bi][k] / *cnt as f64;
        let mut frame_grad = vec![0.0; d];
        for (a, fg) in frame_grad.iter_mut().enumerate() {
            let mut acc = 0.0;
            for mu in 0..d {
                let du = (mean(1 + 2 * mu) - mean(2 + 2 * mu)) / (2.0 * h);
                acc += e0[(a, mu)] * du;
            }
            *fg = acc;
        }
        let lhs = eps_norm_sq(&frame_grad, n, params.eps).sqrt();
        let rhs = (rate * t).exp() * mean(s);
        slacks.push(rhs - lhs);
    }
    let n_total = outcomes.len();
    let n_retained: usize = counts.iter().sum();
    let est = Estimate::from_values(&slacks, slacks.len());
    let z = est.value / floor_se(est.std_error);
    let mut report = CheckReport::graded(
        "gradient_bound",
        model.name(),
        "|dP_t f|_eps vs exp((K + kappa/eps) t) P_t |df|_eps",
        3.0,
        -z,
    )
    .with_eps(&[params.eps])
    .with_samples(n_total, params.seed)
    .with_detail("t", t)
    .with_detail("rate", rate)
    .with_detail("batches", slacks.len())
    .with_detail("mean_slack", est.value)
    .with_detail("slack_se", est.std_error)
    .with_detail("fd_step", h)
    .with_detail(
        "exit_fraction",
        (n_total - n_retained) as f64 / n_total.max(1) as f64,
    );
    if slacks.len() < b / 2 || n_retained < 100 {
        report.verdict = Verdict::Inconclusive;
    }
    Ok(report)
}

/// Parabolic gradient inequality for positive `f`:
///
/// ```text
/// Gamma(ln P_t f) + (2 rho2 / 3) t Gamma^V(ln P_t f)
///   <= (1 + 3 kappa/(2 rho2) - (2 rho1/3) t) L P_t f / P_t f
///      + n rho1^2 t / 6 - (n rho1 / 2)(1 + 3 kappa/(2 rho2))
///      + n (1 + 3 kappa/(2 rho2))^2 / (2 t),
/// ```
///
/// evaluated at `x0` through a full second-order stencil; the batch-mean
/// slack must sit above `-3` standard errors. Reports `worst = -z`.
pub fn check_li_yau(
    model: &Arc<FoliationModel>,
    params: &DiffusionParams,
    t: f64,
    x0: &[f64],
    f: &ScalarField,
    h: f64,
    batches: usize,
) -> Result<CheckReport, OpError> {
    let consts = require_constants(model)?;
    let (rho1, rho2, kappa) = (consts.rho1, consts.rho2, consts.kappa);
    let nh = model.horizontal_rank();
    let m = model.vertical_rank();
    let d = model.dim();
    let nf = nh as f64;
    let starts = full_stencil(x0, h);
    let spec = RunSpec {
        starts: &starts,
        t,
        transport: false,
    };
    let outcomes = run_paths(model, params, &spec)?;

    // Exact frame data at the base point.
    let g0 = Geometry::new(model, x0, 2)?;
    let jets = model.frame_jets(x0, 1)?;
    let ev = model.frame_values(x0)?;
    let mut beta = vec![0.0; d];
    for (c, bc) in beta.iter_mut().enumerate() {
        for i in 0..nh {
            *bc -= g0.bott_val(i, i, c);
        }
    }

    let b = batches.max(2);
    let s = starts.len();
    let mut sums = vec![vec![0.0f64; s]; b];
    let mut counts = vec![0usize; b];
    for (j, o) in outcomes.iter().enumerate() {
        if !o.retained {
            continue;
        }
        let bi = j % b;
        for (k, fin) in o.finals.iter().enumerate() {
            sums[bi][k] += f.value(fin)?;
        }
        counts[bi] += 1;
    }

    let mut slacks = Vec::with_capacity(b);
    for (bi, cnt) in counts.iter().enumerate() {
        if *cnt < 10 {
            continue;
        }
        let mean = |k: usize| sums[bi][k] / *cnt as f64;
        let u0 = mean(0);
        if !(u0 > 0.0) {
            continue;
        }
        // Coordinate derivatives of u = P_t f at x0 by central differences.
        let mut du = vec![0.0; d];
        let mut d2 = DMatrix::zeros(d, d);
        for mu in 0..d {
            let up = mean(1 + 2 * mu);
            let um = mean(2 + 2 * mu);
            du[mu] = (up - um) / (2.0 * h);
            d2[(mu, mu)] = (up - 2.0 * u0 + um) / (h * h);
        }
        for mu in 0..d {
            for nu in (mu + 1)..d {
                let upp = mean(pair_index(d, mu, nu, 0));
                let upm = mean(pair_index(d, mu, nu, 1));
                let ump = mean(pair_index(d, mu, nu, 2));
                let umm = mean(pair_index(d, mu, nu, 3));
                let v = (upp - upm - ump + umm) / (4.0 * h * h);
                d2[(mu, nu)] = v;
                d2[(nu, mu)] = v;
            }
        }
        // Frame derivatives: X_a u and X_i X_i u.
        let xu: Vec<f64> = (0..d)
            .map(|a| (0..d).map(|mu| ev[(a, mu)] * du[mu]).sum())
            .collect();
        let mut lu = 0.0;
        for i in 0..nh {
            let mut xxi = 0.0;
            for mu in 0..d {
                for nu in 0..d {
                    xxi += ev[(i, mu)] * ev[(i, nu)] * d2[(mu, nu)];
                }
                // X_i acting on the frame coefficients of X_i.
                let xi_e: f64 = (0..d).map(|lam| ev[(i, lam)] * jets[i][mu].partial(lam)).sum();
                xxi += xi_e * du[mu];
            }
            lu += xxi;
        }
        for c in 0..d {
            lu += beta[c] * xu[c];
        }
        let gam: f64 = (0..nh).map(|i| xu[i] * xu[i]).sum::<f64>() / (u0 * u0);
        let gamv: f64 = (0..m).map(|l| xu[nh + l] * xu[nh + l]).sum::<f64>() / (u0 * u0);
        let c_kappa = 1.0 + 3.0 * kappa / (2.0 * rho2);
        let lhs = gam + (2.0 * rho2 / 3.0) * t * gamv;
        let rhs = (c_kappa - (2.0 * rho1 / 3.0) * t) * lu / u0 + nf * rho1 * rho1 * t / 6.0
            - (nf * rho1 / 2.0) * c_kappa
            + nf * c_kappa * c_kappa / (2.0 * t);
        slacks.push(rhs - lhs);
    }

    let n_total = outcomes.len();
    let n_retained: usize = counts.iter().sum();
    let est = Estimate::from_values(&slacks, slacks.len());
    let z = est.value / floor_se(est.std_error);
    let mut report = CheckReport::graded(
        "li_yau",
        model.name(),
        "parabolic gradient inequality for ln P_t f",
        3.0,
        -z,
    )
    .with_eps(&[params.eps])
    .with_samples(n_total, params.seed)
    .with_detail("t", t)
    .with_detail("batches", slacks.len())
    .with_detail("mean_slack", est.value)
    .with_detail("slack_se", est.std_error)
    .with_detail("stencil", s)
    .with_detail("fd_step", h)
    .with_detail("fd_bias", format!("O(h^2) = O({:.1e})", h * h))
    .with_detail(
        "exit_fraction",
        (n_total - n_retained) as f64 / n_total.max(1) as f64,
    );
    if slacks.len() < b / 2 || n_retained < 100 {
        report.verdict = Verdict::Inconclusive;
    }
    Ok(report)
}

/// The undamped transport factor must stay a `G_eps`-isometry at any step
/// size; worst `|Theta^T G_eps Theta - G_eps|` over retained paths.
pub fn check_theta_isometry(
    model: &Arc<FoliationModel>,
    params: &DiffusionParams,
    t: f64,
    x0: &[f64],
    tol: f64,
) -> Result<CheckReport, OpError> {
    let d = model.dim();
    let n = model.horizontal_rank();
    let mut wd = DVector::from_element(d, params.eps);
    for a in 0..n {
        wd[a] = 1.0;
    }
    let w = DMatrix::from_diagonal(&wd);
    let starts = [x0.to_vec()];
    let spec = RunSpec {
        starts: &starts,
        t,
        transport: true,
    };
    let outcomes = run_paths(model, params, &spec)?;
    let mut worst = 0.0f64;
    let mut gronwall = 0.0f64;
    let mut n_retained = 0usize;
    for o in &outcomes {
        if !o.retained {
            continue;
        }
        n_retained += 1;
        let th = o.theta.as_ref().expect("transport requested");
        worst = worst.max((th.transpose() * &w * th - &w).amax());
        // Damping magnitude diagnostic: |tau|, weighted operator norm.
        let tau = o.tau.as_ref().expect("transport requested");
        let half = DMatrix::from_diagonal(&wd.map(f64::sqrt));
        let half_inv = DMatrix::from_diagonal(&wd.map(|x| 1.0 / x.sqrt()));
        let sv = (&half * tau * &half_inv).svd(false, false);
        gronwall = gronwall.max(sv.singular_values.max());
    }
    let n_total = outcomes.len();
    let mut report = CheckReport::graded(
        "theta_isometry",
        model.name(),
        "G_eps-orthogonality of the undamped transport factor",
        tol,
        worst,
    )
    .with_eps(&[params.eps])
    .with_samples(n_total, params.seed)
    .with_detail("t", t)
    .with_detail("dt", params.dt)
    .with_detail("tau_opnorm_max", gronwall);
    if let Some(c) = model.known_constants() {
        let bound = ((c.big_k + c.kappa / params.eps) * t).exp();
        report = report
            .with_detail("gronwall_bound", bound)
            .with_detail("gronwall_margin", bound - gronwall);
    }
    if n_retained == 0 {
        report.verdict = Verdict::Inconclusive;
    }
    Ok(report)
}

/// Equilibrium behavior on compact-type models: `P_t 1 = 1` must hold
/// exactly over retained paths, and the deviation of `P_t x_1` from its
/// symmetric limit 0 must decay between two horizons (batch z-test with
/// common driving noise). Exit fractions at the late horizon may exceed
/// the usual cap and are reported rather than graded.
pub fn check_equilibrium(
    model: &Arc<FoliationModel>,
    params: &DiffusionParams,
    t_early: f64,
    t_late: f64,
    x0: &[f64],
    batches: usize,
) -> Result<CheckReport, OpError> {
    if !model.is_compact_type() {
        let mut r = CheckReport::graded(
            "equilibrium",
            model.name(),
            "mixing toward the symmetric state",
            0.0,
            0.0,
        );
        r.verdict = Verdict::NotApplicable;
        return Ok(r);
    }
    if !(t_early > 0.0 && t_late > t_early) {
        return Err(OpError::InvalidParameter {
            param: "t",
            message: format!("need 0 < t_early < t_late, got {t_early}, {t_late}"),
        });
    }
    let f = ScalarField::coordinate(0);
    let one = ScalarField::constant(1.0);

    // Same seed and step size: the late run replays the early run's
    // increments, so batch differences are strongly correlated.
    let starts = [x0.to_vec()];
    let early = run_paths(
        model,
        params,
        &RunSpec {
            starts: &starts,
            t: t_early,
            transport: false,
        },
    )?;
    let late = run_paths(
        model,
        params,
        &RunSpec {
            starts: &starts,
            t: t_late,
            transport: false,
        },
    )?;

    let b = batches.max(2);
    let mut acc = vec![(0.0f64, 0usize, 0.0f64, 0usize); b];
    let mut ones_exact = true;
    for (j, (oe, ol)) in early.iter().zip(&late).enumerate() {
        let bi = j % b;
        if oe.retained {
            acc[bi].0 += f.value(&oe.finals[0])?;
            acc[bi].1 += 1;
            ones_exact &= one.value(&oe.finals[0])? == 1.0;
        }
        if ol.retained {
            acc[bi].2 += f.value(&ol.finals[0])?;
            acc[bi].3 += 1;
        }
    }
    let mut decays = Vec::with_capacity(b);
    for (se, ce, sl, cl) in &acc {
        if *ce >= 10 && *cl >= 10 {
            decays.push((se / *ce as f64).abs() - (sl / *cl as f64).abs());
        }
    }
    let est = Estimate::from_values(&decays, decays.len());
    let z = est.value / floor_se(est.std_error);
    let exit_late =
        late.iter().filter(|o| !o.retained).count() as f64 / late.len().max(1) as f64;
    // Pass needs positive decay at 3 sigma: worst = -z against tolerance -3.
    let mut report = CheckReport::graded(
        "equilibrium",
        model.name(),
        "deviation of P_t x1 from the symmetric limit decays",
        -3.0,
        -z,
    )
    .with_eps(&[params.eps])
    .with_samples(late.len(), params.seed)
    .with_detail("t_early", t_early)
    .with_detail("t_late", t_late)
    .with_detail("decay_mean", est.value)
    .with_detail("decay_se", est.std_error)
    .with_detail("p_t_one_exact", ones_exact)
    .with_detail("exit_fraction_late", exit_late)
    .with_detail("note", "late-horizon exit cap relaxed; fraction reported");
    if !ones_exact {
        report.verdict = Verdict::Fail;
    }
    if decays.len() < b / 2 {
        report.verdict = Verdict::Inconclusive;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{heisenberg_model, product_model, su2_model};

    fn quick(n_paths: usize, eps: f64, seed: u64) -> DiffusionParams {
        DiffusionParams {
            eps,
            n_paths,
            seed,
            ..DiffusionParams::default()
        }
    }

    #[test]
    fn stencil_indices_are_consistent() {
        let x0 = [0.0; 3];
        let s = full_stencil(&x0, 0.1);
        assert_eq!(s.len(), 1 + 6 + 12);
        // +x1: index 1; -x2 index 4.
        assert_eq!(s[1][0], 0.1);
        assert_eq!(s[4][1], -0.1);
        // pair (0, 2), corner (+, -): x1 + h, x3 - h.
        let k = pair_index(3, 0, 2, 1);
        assert_eq!(s[k][0], 0.1);
        assert_eq!(s[k][2], -0.1);
        assert_eq!(s[k][1], 0.0);
        assert_eq!(
            pair_index(3, 1, 2, 3),
            s.len() - 1,
            "last pair corner is the last stencil point"
        );
    }

    #[test]
    fn feynman_kac_smoke_on_the_heisenberg_group() {
        let model = heisenberg_model(1).unwrap().into_shared();
        let f = ScalarField::parse("x1 * x3 + x2^2").unwrap();
        let params = quick(4000, 1.0, 2024);
        let report =
            check_feynman_kac(&model, &params, 0.05, &[0.1, -0.2, 0.0], &f, 1e-3).unwrap();
        assert_eq!(report.verdict, Verdict::Pass, "{:#?}", report);
    }

    #[test]
    fn theta_isometry_is_machine_tight() {
        let model = su2_model(1.0).unwrap().into_shared();
        let params = quick(50, 0.5, 9);
        let report =
            check_theta_isometry(&model, &params, 0.05, &[0.2, 0.1, -0.1], 1e-10).unwrap();
        assert_eq!(report.verdict, Verdict::Pass, "{:#?}", report);
    }

    #[test]
    fn equilibrium_needs_a_compact_model() {
        let model = product_model(2, 1).unwrap().into_shared();
        let params = quick(50, 1.0, 5);
        let report =
            check_equilibrium(&model, &params, 0.05, 0.1, &[0.0; 3], 10).unwrap();
        assert_eq!(report.verdict, Verdict::NotApplicable);
    }

    #[test]
    fn gradient_bound_smoke() {
        let model = heisenberg_model(1).unwrap().into_shared();
        let f = ScalarField::parse("x1 + 0.5 * x3").unwrap();
        let params = quick(4000, 1.0, 77);
        let report =
            check_gradient_bound(&model, &params, 0.05, &[0.0; 3], &f, 1e-3, 20).unwrap();
        assert_eq!(report.verdict, Verdict::Pass, "{:#?}", report);
    }
}
