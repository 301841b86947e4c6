//! Horizontal Brownian motion and damped one-form transport.
//!
//! Sample paths solve the Stratonovich equation
//!
//! ```text
//! dX = sqrt(2) sum_i X_i(X) o dB^i - sum_i (grad_{X_i} X_i)(X) dt
//! ```
//!
//! whose generator is exactly the horizontal Laplacian `L`, integrated by
//! the Heun (midpoint-averaged) scheme. Paths are censored the first time
//! a stage leaves the chart box; estimators average over retained paths
//! and report the exit fraction.
//!
//! Along a path, the damped transport accumulates
//!
//! ```text
//! U_{k+1} = U_k exp(Gbar),   G = -[ sum_a dchi_a (C^a + M^a) + R dt ],
//! ```
//!
//! with `dchi_a = sqrt(2) dB_a + beta_a dt` the horizontal frame increments,
//! `C^a` the Bott connection matrices, `M^a = T^eps_{X_a}` the torsion
//! damping, and `R = (1/eps) J^2 + Ric_H`; `Gbar` averages the endpoint and
//! midpoint generators (in lock-step with Heun). The isometric factor
//! `Theta` accumulates the same recursion without `R`; its generator is
//! `G_eps`-skew, so `Theta` stays a `G_eps`-isometry to machine precision
//! at any step size.
//!
//! Frame structure is probed once per run: when the structure coefficients
//! are point-independent (every catalog model), the generator matrices are
//! frozen up front and each step costs one frame evaluation per stage plus
//! a small matrix exponential; otherwise the geometry is rebuilt each step.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use std::sync::Arc;

use super::expm::expm;
use crate::diffgeo::Geometry;
use crate::fields::ScalarField;
use crate::models::FoliationModel;
use crate::OpError;

/// Monte Carlo run parameters.
#[derive(Debug, Clone)]
pub struct DiffusionParams {
    /// Vertical metric weight for the transport damping.
    pub eps: f64,
    /// Nominal step size (the actual step divides the horizon exactly).
    pub dt: f64,
    /// Number of independent paths.
    pub n_paths: usize,
    /// Base seed; path `j` draws from stream `j + 1` of this seed.
    pub seed: u64,
}

impl Default for DiffusionParams {
    fn default() -> Self {
        DiffusionParams {
            eps: 1.0,
            dt: 1e-3,
            n_paths: 20_000,
            seed: 0x5EED_CAFE,
        }
    }
}

impl DiffusionParams {
    fn validate(&self) -> Result<(), OpError> {
        if !(self.eps > 0.0) {
            return Err(OpError::InvalidParameter {
                param: "eps",
                message: format!("must be positive, got {}", self.eps),
            });
        }
        if !(self.dt > 0.0) {
            return Err(OpError::InvalidParameter {
                param: "dt",
                message: format!("must be positive, got {}", self.dt),
            });
        }
        if self.n_paths == 0 {
            return Err(OpError::InvalidParameter {
                param: "n_paths",
                message: "must be at least 1".to_string(),
            });
        }
        Ok(())
    }
}

/// Sample mean with its standard error over retained paths.
#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub n_total: usize,
    pub n_retained: usize,
}

impl Estimate {
    /// Mean and standard error of `values`, which came from
    /// `n_total` attempted paths.
    pub fn from_values(values: &[f64], n_total: usize) -> Estimate {
        let k = values.len();
        if k == 0 {
            return Estimate {
                value: f64::NAN,
                std_error: f64::INFINITY,
                n_total,
                n_retained: 0,
            };
        }
        let mean = values.iter().sum::<f64>() / k as f64;
        let var = if k > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1) as f64
        } else {
            f64::INFINITY
        };
        Estimate {
            value: mean,
            std_error: (var / k as f64).sqrt(),
            n_total,
            n_retained: k,
        }
    }

    /// Fraction of attempted paths that were censored.
    pub fn exit_fraction(&self) -> f64 {
        if self.n_total == 0 {
            0.0
        } else {
            (self.n_total - self.n_retained) as f64 / self.n_total as f64
        }
    }
}

/// Frozen frame-constant data for models with point-independent structure.
struct Frozen {
    /// Frame components of the drift, `beta_c = -sum_i G^c_{ii}`.
    beta: Vec<f64>,
    /// `C^a + M^a` per horizontal direction (rows: evolving component).
    cm: Vec<DMatrix<f64>>,
    /// `(1/eps) J^2 + Ric_H`.
    rmat: DMatrix<f64>,
}

enum Structure {
    Constant(Box<Frozen>),
    Varying,
}

/// Per-point generator data in the varying case.
fn local_frozen(g: &Geometry, eps: f64) -> Frozen {
    let n = g.horizontal_rank();
    let d = g.dim();
    let mut beta = vec![0.0; d];
    for c in 0..d {
        for i in 0..n {
            beta[c] -= g.bott_val(i, i, c);
        }
    }
    let mut cm = Vec::with_capacity(n);
    for a in 0..n {
        let mut unit = vec![0.0; d];
        unit[a] = 1.0;
        let mut m = g.t_eps_matrix(&unit, eps);
        for b in 0..d {
            for c in 0..d {
                m[(b, c)] += g.bott_val(a, b, c);
            }
        }
        cm.push(m);
    }
    let rmat = g.j_squared().scale(1.0 / eps) + g.ricci_h();
    Frozen { beta, cm, rmat }
}

/// Decide whether the structure coefficients are point-independent by
/// sampling a handful of interior points.
fn probe_structure(
    model: &FoliationModel,
    eps: f64,
) -> Result<(Structure, Frozen), OpError> {
    let points = model.sample_points(5, 0x51de_ca8e);
    let d = model.dim();
    let mut geoms = Vec::with_capacity(points.len());
    for p in &points {
        geoms.push(Geometry::new(model, p, 2)?);
    }
    let mut constant = true;
    'outer: for g in &geoms {
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    let jet = g.c_jet(a, b, c);
                    for mu in 0..d {
                        if jet.partial(mu).abs() > 1e-12 {
                            constant = false;
                            break 'outer;
                        }
                    }
                    if (jet.value() - geoms[0].c_jet(a, b, c).value()).abs() > 1e-12 {
                        constant = false;
                        break 'outer;
                    }
                }
            }
        }
    }
    let frozen = local_frozen(&geoms[0], eps);
    let structure = if constant {
        Structure::Constant(Box::new(local_frozen(&geoms[0], eps)))
    } else {
        Structure::Varying
    };
    Ok((structure, frozen))
}

/// One lock-step bundle of starts advanced with common noise.
pub(crate) struct RunSpec<'a> {
    /// Stage starting points; index 0 is the center when transport is on.
    pub starts: &'a [Vec<f64>],
    /// Time horizon.
    pub t: f64,
    /// Accumulate the damped transport and its isometric factor along the
    /// trajectory of `starts[0]`.
    pub transport: bool,
}

pub(crate) struct PathOutcome {
    /// Final positions per stage (last retained state when censored).
    pub finals: Vec<Vec<f64>>,
    pub retained: bool,
    pub tau: Option<DMatrix<f64>>,
    pub theta: Option<DMatrix<f64>>,
}

struct Stepper<'a> {
    model: &'a FoliationModel,
    structure: &'a Structure,
    eps: f64,
    n: usize,
    d: usize,
}

impl Stepper<'_> {
    /// Stage increment `sqrt(2) sum_i db_i X_i(x) + b(x) dt` in coordinates.
    fn increment(&self, x: &[f64], db: &[f64], dt: f64) -> Result<Vec<f64>, OpError> {
        let ev = self.model.frame_values(x)?;
        let beta_local;
        let beta: &[f64] = match self.structure {
            Structure::Constant(f) => &f.beta,
            Structure::Varying => {
                let g = Geometry::new(self.model, x, 2)?;
                beta_local = local_frozen(&g, self.eps).beta;
                &beta_local
            }
        };
        let mut out = vec![0.0; self.d];
        for (mu, o) in out.iter_mut().enumerate() {
            let mut v = 0.0;
            for i in 0..self.n {
                v += std::f64::consts::SQRT_2 * db[i] * ev[(i, mu)];
            }
            for (c, bc) in beta.iter().enumerate() {
                if *bc != 0.0 {
                    v += dt * bc * ev[(c, mu)];
                }
            }
            *o = v;
        }
        Ok(out)
    }

    /// Transport generators `(full, skew)` at `x` for the increments
    /// `dchi_a = sqrt(2) db_a + beta_a dt`.
    fn generators(
        &self,
        x: &[f64],
        db: &[f64],
        dt: f64,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>), OpError> {
        let frozen_local;
        let f: &Frozen = match self.structure {
            Structure::Constant(f) => f,
            Structure::Varying => {
                let g = Geometry::new(self.model, x, 2)?;
                frozen_local = local_frozen(&g, self.eps);
                &frozen_local
            }
        };
        let mut skew = DMatrix::zeros(self.d, self.d);
        for a in 0..self.n {
            let dchi = std::f64::consts::SQRT_2 * db[a] + f.beta[a] * dt;
            skew += f.cm[a].scale(-dchi);
        }
        let full = &skew - f.rmat.scale(dt);
        Ok((full, skew))
    }
}

/// Advance every path of the bundle; deterministic for fixed parameters
/// regardless of thread count (each path owns stream `j + 1` of the seed
/// and the reduction order is by path index).
pub(crate) fn run_paths(
    model: &Arc<FoliationModel>,
    params: &DiffusionParams,
    spec: &RunSpec<'_>,
) -> Result<Vec<PathOutcome>, OpError> {
    params.validate()?;
    if spec.starts.is_empty() {
        return Err(OpError::InvalidParameter {
            param: "starts",
            message: "need at least one starting point".to_string(),
        });
    }
    if !(spec.t > 0.0) {
        return Err(OpError::InvalidParameter {
            param: "t",
            message: format!("horizon must be positive, got {}", spec.t),
        });
    }
    for s in spec.starts {
        model.check_point(s)?;
    }
    let (structure, _) = probe_structure(model, params.eps)?;
    let n = model.horizontal_rank();
    let d = model.dim();
    let steps = (spec.t / params.dt).round().max(1.0) as usize;
    let dt = spec.t / steps as f64;
    let stepper = Stepper {
        model,
        structure: &structure,
        eps: params.eps,
        n,
        d,
    };

    (0..params.n_paths)
        .into_par_iter()
        .map(|j| -> Result<PathOutcome, OpError> {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(j as u64 + 1);
            let mut xs: Vec<Vec<f64>> = spec.starts.to_vec();
            let mut tau = spec.transport.then(|| DMatrix::identity(d, d));
            let mut theta = spec.transport.then(|| DMatrix::identity(d, d));
            let mut retained = true;
            let mut db = vec![0.0; n];
            let sqrt_dt = dt.sqrt();
            'time: for _ in 0..steps {
                for b in db.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *b = sqrt_dt * z;
                }
                for s in 0..xs.len() {
                    let x = &xs[s];
                    let k1 = stepper.increment(x, &db, dt)?;
                    let xm: Vec<f64> = x.iter().zip(&k1).map(|(a, b)| a + b).collect();
                    if !stepper.model.contains(&xm) {
                        retained = false;
                        break 'time;
                    }
                    let k2 = stepper.increment(&xm, &db, dt)?;
                    let xn: Vec<f64> = x
                        .iter()
                        .zip(k1.iter().zip(&k2))
                        .map(|(a, (b, c))| a + 0.5 * (b + c))
                        .collect();
                    if !stepper.model.contains(&xn) {
                        retained = false;
                        break 'time;
                    }
                    if s == 0 {
                        if let (Some(u), Some(th)) = (tau.as_mut(), theta.as_mut()) {
                            let (g0, s0) = stepper.generators(x, &db, dt)?;
                            let (g1, s1) = stepper.generators(&xm, &db, dt)?;
                            let gbar = (g0 + g1).scale(0.5);
                            let sbar = (s0 + s1).scale(0.5);
                            *u *= expm(&gbar);
                            *th *= expm(&sbar);
                        }
                    }
                    xs[s] = xn;
                }
            }
            Ok(PathOutcome {
                finals: xs,
                retained,
                tau,
                theta,
            })
        })
        .collect()
}

/// `P_t f (x0)`: the mean of `f` at time `t` over retained paths from `x0`.
pub fn heat_semigroup(
    model: &Arc<FoliationModel>,
    params: &DiffusionParams,
    t: f64,
    x0: &[f64],
    f: &ScalarField,
) -> Result<Estimate, OpError> {
    let starts = [x0.to_vec()];
    let spec = RunSpec {
        starts: &starts,
        t,
        transport: false,
    };
    let outcomes = run_paths(model, params, &spec)?;
    let mut values = Vec::with_capacity(outcomes.len());
    for o in &outcomes {
        if o.retained {
            values.push(f.value(&o.finals[0])?);
        }
    }
    Ok(Estimate::from_values(&values, outcomes.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{heisenberg_model, load_model, su2_model};

    fn small(n_paths: usize) -> DiffusionParams {
        DiffusionParams {
            n_paths,
            ..DiffusionParams::default()
        }
    }

    #[test]
    fn catalog_models_probe_constant() {
        for model in [heisenberg_model(1).unwrap(), su2_model(1.0).unwrap()] {
            let (s, _) = probe_structure(&model, 1.0).unwrap();
            assert!(matches!(s, Structure::Constant(_)), "{}", model.name());
        }
    }

    #[test]
    fn twisted_fixture_probes_varying() {
        let text = r#"{
            "name": "twisted",
            "n": 2, "m": 1,
            "domain": [[-2.0, 2.0], [-2.0, 2.0], [-2.0, 2.0]],
            "horizontal_frame": [["1", "0", "0"], ["0", "1", "sin(x1)"]],
            "vertical_frame": [["0", "0", "1"]]
        }"#;
        let model = load_model(text).unwrap();
        let (s, _) = probe_structure(&model, 1.0).unwrap();
        assert!(matches!(s, Structure::Varying));
    }

    #[test]
    fn constant_function_is_preserved_exactly() {
        let model = heisenberg_model(1).unwrap().into_shared();
        let one = ScalarField::constant(1.0);
        let est = heat_semigroup(&model, &small(500), 0.05, &[0.0; 3], &one).unwrap();
        assert_eq!(est.value, 1.0);
        assert_eq!(est.std_error, 0.0);
        assert_eq!(est.exit_fraction(), 0.0);
    }

    #[test]
    fn drift_direction_matches_the_connection() {
        // Frame X_1 = d1, X_2 = exp(x1) d2 has grad_{X_2} X_2 = X_1, so the
        // drift is -X_1 and E[x1(t)] = -t exactly (x1 is Brownian with
        // constant drift -1).
        let text = r#"{
            "name": "exp-frame",
            "n": 2, "m": 1,
            "domain": [[-4.0, 4.0], [-6.0, 6.0], [-4.0, 4.0]],
            "horizontal_frame": [["1", "0", "0"], ["0", "exp(x1)", "0"]],
            "vertical_frame": [["0", "0", "1"]]
        }"#;
        let model = load_model(text).unwrap().into_shared();
        let f = ScalarField::coordinate(0);
        let params = DiffusionParams {
            n_paths: 2000,
            seed: 31,
            ..DiffusionParams::default()
        };
        let t = 0.1;
        let est = heat_semigroup(&model, &params, t, &[0.0; 3], &f).unwrap();
        assert!(est.exit_fraction() < 0.01, "exit {}", est.exit_fraction());
        assert!(
            (est.value + t).abs() < 3.5 * est.std_error,
            "drift estimate {} +- {} vs expected {}",
            est.value,
            est.std_error,
            -t
        );
    }

    #[test]
    fn heisenberg_vertical_moment_is_unbiased() {
        // On the Heisenberg group z(t) is a martingale from the origin:
        // L z = 0, so E[z(t)] = 0.
        let model = heisenberg_model(1).unwrap().into_shared();
        let f = ScalarField::coordinate(2);
        let params = DiffusionParams {
            n_paths: 2000,
            seed: 77,
            ..DiffusionParams::default()
        };
        let est = heat_semigroup(&model, &params, 0.1, &[0.0; 3], &f).unwrap();
        assert!(est.value.abs() < 3.5 * est.std_error.max(1e-9));
    }

    #[test]
    fn estimates_are_deterministic_for_a_seed() {
        let model = su2_model(1.0).unwrap().into_shared();
        let f = ScalarField::parse("x1^2 + x2^2").unwrap();
        let params = small(300);
        let a = heat_semigroup(&model, &params, 0.05, &[0.1, 0.0, 0.0], &f).unwrap();
        let b = heat_semigroup(&model, &params, 0.05, &[0.1, 0.0, 0.0], &f).unwrap();
        assert_eq!(a.value, b.value);
        assert_eq!(a.n_retained, b.n_retained);
    }

    #[test]
    fn theta_factor_is_an_isometry() {
        let model = su2_model(1.0).unwrap().into_shared();
        let params = DiffusionParams {
            n_paths: 40,
            eps: 0.5,
            ..DiffusionParams::default()
        };
        let starts = [vec![0.2, -0.1, 0.3]];
        let spec = RunSpec {
            starts: &starts,
            t: 0.05,
            transport: true,
        };
        let d = 3;
        let w = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0, 0.5]));
        for o in run_paths(&model, &params, &spec).unwrap() {
            if !o.retained {
                continue;
            }
            let th = o.theta.unwrap();
            let resid = (th.transpose() * &w * &th - &w).amax();
            assert!(resid < 1e-12, "isometry defect {resid:.3e}");
            assert!((o.tau.unwrap() - DMatrix::identity(d, d)).amax() > 1e-6);
        }
    }

    #[test]
    fn starts_outside_the_domain_are_rejected() {
        let model = heisenberg_model(1).unwrap().into_shared();
        let one = ScalarField::constant(1.0);
        assert!(heat_semigroup(&model, &small(10), 0.01, &[9.0, 0.0, 0.0], &one).is_err());
    }
}
