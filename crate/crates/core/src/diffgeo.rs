//! Per-point differential geometry of a foliated chart.
//!
//! Everything is computed in components of the adapted orthonormal frame
//! `e_1..e_{n+m}` (horizontal `X_i` first, then vertical `Z_l`). The central
//! object is [`Geometry`]: one point's worth of structure coefficients,
//! connection coefficients (Levi-Civita and Bott), torsion, the skew maps
//! `J_z`, horizontal Ricci curvature, and the torsion divergences — all as
//! jets where derivatives of them are later needed, with plain values
//! cached alongside.
//!
//! Conventions (fixed throughout the crate):
//!
//! * structure coefficients `c_ab^c` satisfy `[e_a, e_b] = sum_c c_ab^c e_c`;
//! * `gamma_ij^l := c_ij^{n+l}` are the vertical components of horizontal
//!   brackets;
//! * the Bott connection is `pi_H grad^R` on (H,H), `pi_H [.,.]` on (V,H),
//!   `pi_V [.,.]` on (H,V) and `pi_V grad^R` on (V,V), where `grad^R` is
//!   Levi-Civita;
//! * its torsion `T(e_a, e_b) = grad_a e_b - grad_b e_a - [e_a, e_b]` is
//!   vertical-valued on H x H and vanishes on mixed and vertical pairs;
//! * `J_z` is defined by `<J_z X_i, X_j> = <z, T(X_i, X_j)>` on horizontal
//!   vectors and extended by zero on vertical ones, so as a matrix
//!   `(J_l)_{ij} = gamma_ij^l`;
//! * one-forms use the same matrices as vectors: in an orthonormal frame the
//!   musical isomorphisms are the identity on components.

use std::sync::Arc;

use dashmap::DashMap;
use nalgebra::{DMatrix, DVector};

use crate::fields::OneFormField;
use crate::jet::Jet;
use crate::models::FoliationModel;
use crate::OpError;

/// Default frame-jet order for geometry construction: enough for curvature
/// values and for assembling every second-order operator in the crate.
pub const DEFAULT_ORDER: u8 = 2;

/// LU factorization of the transposed frame matrix, in jets, for solving
/// `sum_c x_c E_{c mu} = w_mu` (expressing coordinate vectors in the frame).
struct JetLu {
    d: usize,
    lu: Vec<Jet>,
    inv_diag: Vec<Jet>,
    perm: Vec<usize>,
}

impl JetLu {
    fn factor(frame: &[Vec<Jet>], point: &[f64]) -> Result<JetLu, OpError> {
        let d = frame.len();
        // a[mu][c] = E_{c mu}
        let mut a: Vec<Jet> = Vec::with_capacity(d * d);
        for mu in 0..d {
            for c in 0..d {
                a.push(frame[c][mu].clone());
            }
        }
        let mut perm: Vec<usize> = (0..d).collect();
        let mut inv_diag = Vec::with_capacity(d);
        for k in 0..d {
            let (piv, best) = (k..d)
                .map(|r| (r, a[r * d + k].value().abs()))
                .max_by(|x, y| x.1.total_cmp(&y.1))
                .expect("nonempty pivot range");
            if best < 1e-14 {
                return Err(OpError::SingularFrame {
                    point: point.to_vec(),
                    pivot: best,
                });
            }
            if piv != k {
                for col in 0..d {
                    a.swap(k * d + col, piv * d + col);
                }
                perm.swap(k, piv);
            }
            let inv = a[k * d + k].try_recip().map_err(|_| OpError::SingularFrame {
                point: point.to_vec(),
                pivot: a[k * d + k].value().abs(),
            })?;
            for r in (k + 1)..d {
                let mult = &a[r * d + k] * &inv;
                for col in (k + 1)..d {
                    a[r * d + col] = &a[r * d + col] - &(&mult * &a[k * d + col]);
                }
                a[r * d + k] = mult;
            }
            inv_diag.push(inv);
        }
        Ok(JetLu {
            d,
            lu: a,
            inv_diag,
            perm,
        })
    }

    fn solve(&self, rhs: &[Jet]) -> Vec<Jet> {
        let d = self.d;
        let mut y: Vec<Jet> = self.perm.iter().map(|&r| rhs[r].clone()).collect();
        for r in 1..d {
            for c in 0..r {
                y[r] = &y[r] - &(&self.lu[r * d + c] * &y[c]);
            }
        }
        for r in (0..d).rev() {
            for c in (r + 1)..d {
                let t = &self.lu[r * d + c] * &y[c];
                y[r] = &y[r] - &t;
            }
            y[r] = &y[r] * &self.inv_diag[r];
        }
        y
    }
}

/// Frame-component differential geometry at a single chart point.
pub struct Geometry {
    n: usize,
    m: usize,
    dim: usize,
    point: Vec<f64>,
    frame_ord: u8,
    frame: Vec<Vec<Jet>>,
    frame_values: DMatrix<f64>,
    /// Structure coefficients `c_ab^c` as jets, flat index `(a d + b) d + c`,
    /// exactly antisymmetric in `(a, b)` by construction.
    c: Vec<Jet>,
    /// Levi-Civita connection coefficients `<grad^R_{e_a} e_b, e_c>`.
    lc: Vec<Jet>,
    /// Bott connection coefficients.
    bott: Vec<Jet>,
    /// Bott torsion `T^c_{ab}`, exactly antisymmetric in `(a, b)`.
    tor: Vec<Jet>,
    lc_val: Vec<f64>,
    bott_val: Vec<f64>,
    tor_val: Vec<f64>,
    /// `J_l` matrices, one per vertical direction (zero outside the
    /// horizontal block).
    j_mats: Vec<DMatrix<f64>>,
    j_squared: DMatrix<f64>,
    ricci_h: DMatrix<f64>,
    delta_ht: DMatrix<f64>,
    delta_ht_star: DMatrix<f64>,
}

#[inline]
fn idx(d: usize, a: usize, b: usize, c: usize) -> usize {
    (a * d + b) * d + c
}

impl Geometry {
    /// Build the geometry at `p` from frame jets of order `ord >= 2`.
    pub fn new(model: &FoliationModel, p: &[f64], ord: u8) -> Result<Geometry, OpError> {
        assert!(ord >= 2, "geometry needs frame jets of order >= 2, got {ord}");
        model.check_point(p)?;
        let n = model.horizontal_rank();
        let m = model.vertical_rank();
        let d = n + m;
        let frame = model.frame_jets(p, ord)?;
        let frame_values = model.frame_values(p)?;
        let lu = JetLu::factor(&frame, p)?;

        // Structure coefficients: [e_a, e_b]^mu = sum_nu (E_a^nu d_nu E_b^mu
        // - E_b^nu d_nu E_a^mu), then solve the frame system; fill (b, a) by
        // exact negation.
        let zero = Jet::constant(d, ord.saturating_sub(1), 0.0);
        let mut c = vec![zero.clone(); d * d * d];
        for a in 0..d {
            for b in (a + 1)..d {
                let mut w = Vec::with_capacity(d);
                for mu in 0..d {
                    let mut acc = Jet::constant(d, ord - 1, 0.0);
                    for nu in 0..d {
                        acc = &acc + &(&frame[a][nu] * &frame[b][mu].derivative(nu));
                        acc = &acc - &(&frame[b][nu] * &frame[a][mu].derivative(nu));
                    }
                    w.push(acc);
                }
                let x = lu.solve(&w);
                for (cc, xi) in x.into_iter().enumerate() {
                    c[idx(d, b, a, cc)] = -&xi;
                    c[idx(d, a, b, cc)] = xi;
                }
            }
        }

        // Levi-Civita by the Koszul formula for an orthonormal frame:
        // <grad_a e_b, e_c> = (c_ab^c - c_ac^b - c_bc^a) / 2.
        let mut lc = Vec::with_capacity(d * d * d);
        for a in 0..d {
            for b in 0..d {
                for cc in 0..d {
                    let s = &(&c[idx(d, a, b, cc)] - &c[idx(d, a, cc, b)]) - &c[idx(d, b, cc, a)];
                    lc.push(s.scale(0.5));
                }
            }
        }

        // Bott connection: projected Levi-Civita on (H,H) and (V,V),
        // projected brackets on mixed pairs.
        let mut bott = vec![zero.clone(); d * d * d];
        for a in 0..d {
            for b in 0..d {
                for cc in 0..d {
                    let k = idx(d, a, b, cc);
                    let keep = match (a < n, b < n) {
                        (true, true) => cc < n,   // pi_H grad^R_X Y
                        (false, false) => cc >= n, // pi_V grad^R_Z W
                        _ => false,
                    };
                    if keep {
                        bott[k] = lc[k].clone();
                    } else if a >= n && b < n && cc < n {
                        bott[k] = c[k].clone(); // pi_H [Z, X]
                    } else if a < n && b >= n && cc >= n {
                        bott[k] = c[k].clone(); // pi_V [X, Z]
                    }
                }
            }
        }

        // Torsion of the Bott connection; exact antisymmetry by negation.
        let mut tor = vec![zero.clone(); d * d * d];
        for a in 0..d {
            for b in (a + 1)..d {
                for cc in 0..d {
                    let t = &(&bott[idx(d, a, b, cc)] - &bott[idx(d, b, a, cc)]) - &c[idx(d, a, b, cc)];
                    tor[idx(d, b, a, cc)] = -&t;
                    tor[idx(d, a, b, cc)] = t;
                }
            }
        }

        let lc_val: Vec<f64> = lc.iter().map(Jet::value).collect();
        let bott_val: Vec<f64> = bott.iter().map(Jet::value).collect();
        let tor_val: Vec<f64> = tor.iter().map(Jet::value).collect();

        // J_l from the torsion: (J_l)_{ij} = <Z_l, T(X_i, X_j)> read through
        // <J_z X_i, X_j> = <z, T(X_i, X_j)>, i.e. (J_l)_{ij} = gamma_ij^l
        // = -T^{n+l}_{ij}.
        let mut j_mats = Vec::with_capacity(m);
        for l in 0..m {
            let mut jm = DMatrix::zeros(d, d);
            for i in 0..n {
                for j in 0..n {
                    jm[(i, j)] = -tor_val[idx(d, i, j, n + l)];
                }
            }
            j_mats.push(jm);
        }
        let mut j_squared = DMatrix::zeros(d, d);
        for jm in &j_mats {
            j_squared += jm * jm;
        }

        // Horizontal Ricci: Ric(e_b, e_c) = sum_i <R(X_i, e_b) e_c, X_i> for
        // the Bott connection, with
        // R^d_{abc} = e_a G^d_{bc} - e_b G^d_{ac}
        //           + sum_e (G^e_{bc} G^d_{ae} - G^e_{ac} G^d_{be})
        //           - sum_e c_ab^e G^d_{ec},
        // then symmetrized and restricted to the horizontal block.
        let e_dir_val = |a: usize, jet: &Jet| -> f64 {
            (0..d).map(|mu| frame_values[(a, mu)] * jet.partial(mu)).sum()
        };
        let mut ricci = DMatrix::zeros(d, d);
        for b in 0..n {
            for cc in 0..n {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += e_dir_val(i, &bott[idx(d, b, cc, i)]);
                    acc -= e_dir_val(b, &bott[idx(d, i, cc, i)]);
                    for e in 0..d {
                        acc += bott_val[idx(d, b, cc, e)] * bott_val[idx(d, i, e, i)];
                        acc -= bott_val[idx(d, i, cc, e)] * bott_val[idx(d, b, e, i)];
                        acc -= c[idx(d, i, b, e)].value() * bott_val[idx(d, e, cc, i)];
                    }
                }
                ricci[(b, cc)] = acc;
            }
        }
        let mut ricci_h = DMatrix::zeros(d, d);
        for b in 0..n {
            for cc in 0..n {
                ricci_h[(b, cc)] = 0.5 * (ricci[(b, cc)] + ricci[(cc, b)]);
            }
        }

        // Torsion divergence delta_H T(e_b) = -sum_i (grad_{X_i} T)(e_b, X_i)
        // with (grad_i T)^c_{ab} = e_i T^c_{ab} - G^e_{ia} T^c_{eb}
        //                        - G^e_{ib} T^c_{ae} + G^c_{ie} T^e_{ab}.
        let mut delta_ht = DMatrix::zeros(d, d);
        for cc in 0..d {
            for b in 0..d {
                let mut acc = 0.0;
                for i in 0..n {
                    let mut nabla = e_dir_val(i, &tor[idx(d, b, i, cc)]);
                    for e in 0..d {
                        nabla -= bott_val[idx(d, i, b, e)] * tor_val[idx(d, e, i, cc)];
                        nabla -= bott_val[idx(d, i, i, e)] * tor_val[idx(d, b, e, cc)];
                        nabla += bott_val[idx(d, i, e, cc)] * tor_val[idx(d, b, i, e)];
                    }
                    acc -= nabla;
                }
                delta_ht[(cc, b)] = acc;
            }
        }
        let delta_ht_star = delta_ht.transpose();

        Ok(Geometry {
            n,
            m,
            dim: d,
            point: p.to_vec(),
            frame_ord: ord,
            frame,
            frame_values,
            c,
            lc,
            bott,
            tor,
            lc_val,
            bott_val,
            tor_val,
            j_mats,
            j_squared,
            ricci_h,
            delta_ht,
            delta_ht_star,
        })
    }

    pub fn horizontal_rank(&self) -> usize {
        self.n
    }

    pub fn vertical_rank(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self) -> &[f64] {
        &self.point
    }

    pub fn frame_order(&self) -> u8 {
        self.frame_ord
    }

    pub fn frame_jets(&self) -> &[Vec<Jet>] {
        &self.frame
    }

    pub fn frame_values(&self) -> &DMatrix<f64> {
        &self.frame_values
    }

    /// Structure coefficient `c_ab^c` as a jet (order one below the frame).
    pub fn c_jet(&self, a: usize, b: usize, c: usize) -> &Jet {
        &self.c[idx(self.dim, a, b, c)]
    }

    pub fn c_val(&self, a: usize, b: usize, c: usize) -> f64 {
        self.c[idx(self.dim, a, b, c)].value()
    }

    /// `gamma_ij^l`: vertical component `l` of the horizontal bracket
    /// `[X_i, X_j]`.
    pub fn gamma_coeff(&self, i: usize, j: usize, l: usize) -> f64 {
        debug_assert!(i < self.n && j < self.n && l < self.m);
        self.c_val(i, j, self.n + l)
    }

    pub fn lc_jet(&self, a: usize, b: usize, c: usize) -> &Jet {
        &self.lc[idx(self.dim, a, b, c)]
    }

    pub fn lc_val(&self, a: usize, b: usize, c: usize) -> f64 {
        self.lc_val[idx(self.dim, a, b, c)]
    }

    pub fn bott_jet(&self, a: usize, b: usize, c: usize) -> &Jet {
        &self.bott[idx(self.dim, a, b, c)]
    }

    pub fn bott_val(&self, a: usize, b: usize, c: usize) -> f64 {
        self.bott_val[idx(self.dim, a, b, c)]
    }

    pub fn torsion_jet(&self, a: usize, b: usize, c: usize) -> &Jet {
        &self.tor[idx(self.dim, a, b, c)]
    }

    pub fn torsion_val(&self, a: usize, b: usize, c: usize) -> f64 {
        self.tor_val[idx(self.dim, a, b, c)]
    }

    /// The matrix of `J_{Z_{l+1}}` (zero outside the horizontal block).
    pub fn j_matrix(&self, l: usize) -> &DMatrix<f64> {
        &self.j_mats[l]
    }

    /// `J_z` for a vertical vector given by components `z` (length `m`).
    pub fn j_map(&self, z: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for (l, &zl) in z.iter().enumerate() {
            out += self.j_mats[l].scale(zl);
        }
        out
    }

    /// `sum_l J_l^2`, a negative-semidefinite horizontal matrix.
    pub fn j_squared(&self) -> &DMatrix<f64> {
        &self.j_squared
    }

    /// Symmetrized horizontal Ricci curvature of the Bott connection (zero
    /// outside the horizontal block); acts identically on vectors and forms.
    pub fn ricci_h(&self) -> &DMatrix<f64> {
        &self.ricci_h
    }

    /// Horizontal divergence of the torsion, as a matrix on frame
    /// components (vertical rows, horizontal columns populated).
    pub fn delta_ht(&self) -> &DMatrix<f64> {
        &self.delta_ht
    }

    /// Its metric adjoint (plain transpose in an orthonormal frame).
    pub fn delta_ht_star(&self) -> &DMatrix<f64> {
        &self.delta_ht_star
    }

    /// Matrix of the damping map `T^eps_v` on one-form components:
    /// horizontal rows `j` carry `-T^{n+l}_{ij} v^i` against vertical
    /// components, vertical rows `k` carry `(1/eps) T^{n+k}_{ij} v^i`
    /// against horizontal ones. Only the horizontal part of `v`
    /// contributes (the map vanishes for vertical directions).
    pub fn t_eps_matrix(&self, v: &[f64], eps: f64) -> DMatrix<f64> {
        let d = self.dim;
        let mut out = DMatrix::zeros(d, d);
        for i in 0..self.n {
            let vi = v[i];
            if vi == 0.0 {
                continue;
            }
            for j in 0..self.n {
                for l in 0..self.m {
                    let t = self.tor_val[idx(d, i, j, self.n + l)];
                    out[(j, self.n + l)] -= vi * t;
                    out[(self.n + l, j)] += vi * t / eps;
                }
            }
        }
        out
    }

    /// Directional derivative of a jet along frame field `a`, as a jet one
    /// order lower.
    pub fn e_dir(&self, a: usize, jet: &Jet) -> Jet {
        let mut acc = &self.frame[a][0] * &jet.derivative(0);
        for mu in 1..self.dim {
            acc = &acc + &(&self.frame[a][mu] * &jet.derivative(mu));
        }
        acc
    }

    /// Value of the directional derivative along frame field `a`.
    pub fn e_dir_value(&self, a: usize, jet: &Jet) -> f64 {
        (0..self.dim)
            .map(|mu| self.frame_values[(a, mu)] * jet.partial(mu))
            .sum()
    }

    /// Curvature component `<R(e_a, e_b) e_c, e^dd>` of the Bott connection:
    ///
    /// ```text
    /// e_a G^dd_{bc} - e_b G^dd_{ac}
    ///   + sum_e (G^e_{bc} G^dd_{ae} - G^e_{ac} G^dd_{be} - c_ab^e G^dd_{ec}).
    /// ```
    pub fn bott_curvature(&self, a: usize, b: usize, c: usize, dd: usize) -> f64 {
        let d = self.dim;
        let mut v = self.e_dir_value(a, &self.bott[idx(d, b, c, dd)])
            - self.e_dir_value(b, &self.bott[idx(d, a, c, dd)]);
        for e in 0..d {
            v += self.bott_val(b, c, e) * self.bott_val(a, e, dd)
                - self.bott_val(a, c, e) * self.bott_val(b, e, dd)
                - self.c_val(a, b, e) * self.bott_val(e, c, dd);
        }
        v
    }
}

/// Concurrent per-point geometry memo for one model at a fixed jet order.
pub struct GeometryCache {
    model: Arc<FoliationModel>,
    ord: u8,
    map: DashMap<Vec<u64>, Arc<Geometry>>,
}

impl GeometryCache {
    pub fn new(model: Arc<FoliationModel>, ord: u8) -> GeometryCache {
        GeometryCache {
            model,
            ord,
            map: DashMap::new(),
        }
    }

    pub fn model(&self) -> &Arc<FoliationModel> {
        &self.model
    }

    /// Geometry at `p`, computed once per distinct point (bit-exact key).
    pub fn at(&self, p: &[f64]) -> Result<Arc<Geometry>, OpError> {
        let key: Vec<u64> = p.iter().map(|x| x.to_bits()).collect();
        if let Some(g) = self.map.get(&key) {
            return Ok(Arc::clone(&g));
        }
        let g = Arc::new(Geometry::new(&self.model, p, self.ord)?);
        Ok(self.map.entry(key).or_insert(g).clone())
    }
}

/// Frame components of the Lie bracket `[e_a, e_b]` at `p`.
pub fn bracket(model: &FoliationModel, p: &[f64], a: usize, b: usize) -> Result<Vec<f64>, OpError> {
    let g = Geometry::new(model, p, DEFAULT_ORDER)?;
    Ok((0..g.dim()).map(|c| g.c_val(a, b, c)).collect())
}

/// All connection coefficients at a point, flat layout `(a d + b) d + c`.
#[derive(Debug, Clone)]
pub struct Coeffs3 {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Coeffs3 {
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[idx(self.dim, a, b, c)]
    }
}

/// Levi-Civita coefficients `<grad^R_{e_a} e_b, e_c>` at `p`.
pub fn levi_civita(model: &FoliationModel, p: &[f64]) -> Result<Coeffs3, OpError> {
    let g = Geometry::new(model, p, DEFAULT_ORDER)?;
    Ok(Coeffs3 {
        dim: g.dim(),
        data: g.lc_val.clone(),
    })
}

/// Bott connection coefficients at `p`.
pub fn bott_connection(model: &FoliationModel, p: &[f64]) -> Result<Coeffs3, OpError> {
    let g = Geometry::new(model, p, DEFAULT_ORDER)?;
    Ok(Coeffs3 {
        dim: g.dim(),
        data: g.bott_val.clone(),
    })
}

/// Bott torsion components `T^c_{ab}` at `p`.
pub fn torsion(model: &FoliationModel, p: &[f64]) -> Result<Coeffs3, OpError> {
    let g = Geometry::new(model, p, DEFAULT_ORDER)?;
    Ok(Coeffs3 {
        dim: g.dim(),
        data: g.tor_val.clone(),
    })
}

/// Matrix of `J_z` at `p` for vertical components `z` (length `m`).
pub fn j_map(model: &FoliationModel, p: &[f64], z: &[f64]) -> Result<DMatrix<f64>, OpError> {
    if z.len() != model.vertical_rank() {
        return Err(OpError::InvalidParameter {
            param: "z",
            message: format!(
                "expected {} vertical components, got {}",
                model.vertical_rank(),
                z.len()
            ),
        });
    }
    let g = Geometry::new(model, p, DEFAULT_ORDER)?;
    Ok(g.j_map(z))
}

/// `sum_l J_l^2` at `p`.
pub fn j_squared(model: &FoliationModel, p: &[f64]) -> Result<DMatrix<f64>, OpError> {
    let g = Geometry::new(model, p, DEFAULT_ORDER)?;
    Ok(g.j_squared.clone())
}

/// Symmetrized horizontal Ricci matrix at `p`.
pub fn horizontal_ricci(model: &FoliationModel, p: &[f64]) -> Result<DMatrix<f64>, OpError> {
    let g = Geometry::new(model, p, DEFAULT_ORDER)?;
    Ok(g.ricci_h.clone())
}

/// The pair `(delta_H T, delta_H^* T)` as matrices on frame components.
pub fn delta_ht(model: &FoliationModel, p: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>), OpError> {
    let g = Geometry::new(model, p, DEFAULT_ORDER)?;
    Ok((g.delta_ht.clone(), g.delta_ht_star.clone()))
}

/// Matrix of the damping map `T^eps_v` at `p` for a frame-component
/// direction `v`.
pub fn t_epsilon_map(
    model: &FoliationModel,
    p: &[f64],
    v: &[f64],
    eps: f64,
) -> Result<DMatrix<f64>, OpError> {
    if !(eps > 0.0) {
        return Err(OpError::InvalidParameter {
            param: "eps",
            message: format!("must be positive, got {eps}"),
        });
    }
    let g = Geometry::new(model, p, DEFAULT_ORDER)?;
    Ok(g.t_eps_matrix(v, eps))
}

/// The horizontal one-form `J(eta) = -sum_l J_{Z_l} (i_{Z_l} d(eta_V))`
/// evaluated at `p` (frame components; vertical entries are zero).
pub fn fraktur_j(
    model: &FoliationModel,
    eta: &OneFormField,
    p: &[f64],
) -> Result<DVector<f64>, OpError> {
    let g = Geometry::new(model, p, DEFAULT_ORDER)?;
    let jets = eta.eval(p, 1)?;
    Ok(fraktur_j_at(&g, &jets))
}

/// `fraktur_j` from precomputed geometry and component jets (order >= 1).
pub fn fraktur_j_at(g: &Geometry, eta_jets: &[Jet]) -> DVector<f64> {
    let (n, m, d) = (g.n, g.m, g.dim);
    let mut out = DVector::zeros(d);
    // w^l_j = (d eta_V)(Z_l, X_j) = -X_j(g_l) - sum_k c_{(n+l) j}^{n+k} g_k,
    // using that the horizontal components of eta_V vanish identically.
    for l in 0..m {
        for j in 0..n {
            let mut w = -g.e_dir_value(j, &eta_jets[n + l]);
            for k in 0..m {
                w -= g.c_val(n + l, j, n + k) * eta_jets[n + k].value();
            }
            // (J(eta))_i -= (J_l)_{ij} w^l_j
            for i in 0..n {
                out[i] -= g.j_mats[l][(i, j)] * w;
            }
        }
    }
    out
}

/// The vertical one-form `T(F)` of a horizontal two-form given by an
/// antisymmetric component matrix `F`:
/// `nu_l`-component `-1/2 sum_{ij} F_{ij} gamma_ij^l`. Mixed and vertical
/// parts of `F` are ignored (the map vanishes there).
pub fn cal_t_map(model: &FoliationModel, p: &[f64], f2: &DMatrix<f64>) -> Result<DVector<f64>, OpError> {
    let g = Geometry::new(model, p, DEFAULT_ORDER)?;
    Ok(cal_t_map_at(&g, f2))
}

/// `cal_t_map` from precomputed geometry.
pub fn cal_t_map_at(g: &Geometry, f2: &DMatrix<f64>) -> DVector<f64> {
    let (n, m, d) = (g.n, g.m, g.dim);
    let mut out = DVector::zeros(d);
    for l in 0..m {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += f2[(i, j)] * g.gamma_coeff(i, j, l);
            }
        }
        out[n + l] = -0.5 * acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{heisenberg_model, load_model, product_model, su2_model};
    use approx::assert_abs_diff_eq;

    fn geom(model: &FoliationModel, p: &[f64]) -> Geometry {
        Geometry::new(model, p, DEFAULT_ORDER).unwrap()
    }

    #[test]
    fn heisenberg_brackets() {
        let model = heisenberg_model(1).unwrap();
        let p = [0.7, -0.4, 0.2];
        // [X, Y] = Z and all other brackets vanish.
        let c = bracket(&model, &p, 0, 1).unwrap();
        assert_abs_diff_eq!(c[0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c[1], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c[2], 1.0, epsilon = 1e-14);
        for (a, b) in [(0, 2), (1, 2)] {
            let c = bracket(&model, &p, a, b).unwrap();
            assert!(c.iter().all(|v| v.abs() < 1e-14));
        }
    }

    #[test]
    fn heisenberg_levi_civita_and_bott() {
        let model = heisenberg_model(1).unwrap();
        let g = geom(&model, &[0.3, 0.1, -0.5]);
        // Koszul: <grad_X Y, Z> = 1/2, <grad_X Z, Y> = -1/2, <grad_Z X, Y> = -1/2.
        assert_abs_diff_eq!(g.lc_val(0, 1, 2), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(g.lc_val(0, 2, 1), -0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(g.lc_val(2, 0, 1), -0.5, epsilon = 1e-14);
        // The Bott connection vanishes identically on the Heisenberg frame.
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    assert_abs_diff_eq!(g.bott_val(a, b, c), 0.0, epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn heisenberg_torsion_and_j() {
        let model = heisenberg_model(1).unwrap();
        let g = geom(&model, &[1.1, 0.2, 0.0]);
        // T(X, Y) = -[X, Y] = -Z.
        assert_abs_diff_eq!(g.torsion_val(0, 1, 2), -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g.torsion_val(1, 0, 2), 1.0, epsilon = 1e-14);
        // Mixed and vertical torsion vanish.
        for a in 0..3 {
            for c in 0..3 {
                assert_abs_diff_eq!(g.torsion_val(a, 2, c), 0.0, epsilon = 1e-14);
            }
        }
        // J_Z is the rotation generator on the horizontal plane.
        let j = g.j_matrix(0);
        assert_abs_diff_eq!(j[(0, 1)], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(j[(1, 0)], -1.0, epsilon = 1e-14);
        let j2 = g.j_squared();
        assert_abs_diff_eq!(j2[(0, 0)], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(j2[(1, 1)], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(j2[(2, 2)], 0.0, epsilon = 1e-14);
        // Flat horizontal Ricci and Yang-Mills torsion.
        assert!(g.ricci_h().amax() < 1e-13);
        assert!(g.delta_ht().amax() < 1e-13);
    }

    #[test]
    fn su2_brackets_and_ricci() {
        for lambda in [1.0, 2.0] {
            let model = su2_model(lambda).unwrap();
            for p in [[0.0, 0.0, 0.0], [0.4, -0.9, 1.3]] {
                let g = geom(&model, &p);
                // [X_1, X_2] = lambda Z
                assert_abs_diff_eq!(g.c_val(0, 1, 2), lambda, epsilon = 1e-11);
                assert_abs_diff_eq!(g.c_val(0, 1, 0), 0.0, epsilon = 1e-11);
                assert_abs_diff_eq!(g.c_val(0, 1, 1), 0.0, epsilon = 1e-11);
                // [X_2, Z] = X_1 / lambda, [Z, X_1] = X_2 / lambda
                assert_abs_diff_eq!(g.c_val(1, 2, 0), 1.0 / lambda, epsilon = 1e-11);
                assert_abs_diff_eq!(g.c_val(2, 0, 1), 1.0 / lambda, epsilon = 1e-11);
                // Horizontal Ricci is the identity for every lambda.
                assert_abs_diff_eq!(g.ricci_h()[(0, 0)], 1.0, epsilon = 1e-10);
                assert_abs_diff_eq!(g.ricci_h()[(1, 1)], 1.0, epsilon = 1e-10);
                assert_abs_diff_eq!(g.ricci_h()[(0, 1)], 0.0, epsilon = 1e-10);
                // J = lambda * rotation, so J^2 = -lambda^2 I.
                assert_abs_diff_eq!(g.j_squared()[(0, 0)], -lambda * lambda, epsilon = 1e-10);
                // Yang-Mills: the torsion divergence vanishes.
                assert!(g.delta_ht().amax() < 1e-10);
            }
        }
    }

    #[test]
    fn ricci_is_symmetrized_curvature_trace() {
        // ricci_h must agree with the symmetrized horizontal trace of the
        // Bott curvature tensor computed through the public accessor.
        let model = su2_model(1.5).unwrap();
        for p in [[0.0, 0.0, 0.0], [0.6, -0.2, 1.1]] {
            let g = geom(&model, &p);
            let n = 2;
            for b in 0..n {
                for c in 0..n {
                    let raw_bc: f64 = (0..n).map(|i| g.bott_curvature(i, b, c, i)).sum();
                    let raw_cb: f64 = (0..n).map(|i| g.bott_curvature(i, c, b, i)).sum();
                    assert_abs_diff_eq!(
                        g.ricci_h()[(b, c)],
                        0.5 * (raw_bc + raw_cb),
                        epsilon = 1e-11
                    );
                }
            }
        }
    }

    #[test]
    fn product_geometry_is_flat() {
        let model = product_model(2, 1).unwrap();
        let g = geom(&model, &[0.2, 0.4, -1.0]);
        assert!(g.j_squared().amax() < 1e-14);
        assert!(g.ricci_h().amax() < 1e-14);
        assert!(g.tor_val.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn twisted_fixture_pins_torsion_divergence_sign() {
        // X_1 = d1, X_2 = d2 + sin(x1) d3, Z = d3: gamma_12^1 = cos(x1), so
        // delta_H T maps X_2 to sin(x1) Z and its adjoint maps Z to sin(x1) X_2.
        let cfg = serde_json::json!({
            "name": "twisted",
            "n": 2, "m": 1,
            "domain": [[-2.0, 2.0], [-2.0, 2.0], [-2.0, 2.0]],
            "horizontal_frame": [["1", "0", "0"], ["0", "1", "sin(x1)"]],
            "vertical_frame": [["0", "0", "1"]]
        })
        .to_string();
        let model = load_model(&cfg).unwrap();
        let p = [0.8, 0.3, -0.2];
        let g = geom(&model, &p);
        assert_abs_diff_eq!(g.gamma_coeff(0, 1, 0), 0.8f64.cos(), epsilon = 1e-13);
        let (dt, dts) = delta_ht(&model, &p).unwrap();
        assert_abs_diff_eq!(dt[(2, 1)], 0.8f64.sin(), epsilon = 1e-13);
        assert_abs_diff_eq!(dt[(2, 0)], 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(dts[(1, 2)], 0.8f64.sin(), epsilon = 1e-13);
    }

    #[test]
    fn t_eps_matrix_is_skew_for_the_weighted_metric() {
        let model = su2_model(1.4).unwrap();
        let g = geom(&model, &[0.5, 0.2, -0.7]);
        for eps in [0.25, 1.0, 4.0] {
            for v in [[1.0, 0.0], [0.3, -1.2]] {
                let mm = g.t_eps_matrix(&v, eps);
                // G_eps M + M^T G_eps = 0 with G_eps = diag(1, 1, eps) on forms.
                let w = [1.0, 1.0, eps];
                for a in 0..3 {
                    for b in 0..3 {
                        let s = w[a] * mm[(a, b)] + w[b] * mm[(b, a)];
                        assert_abs_diff_eq!(s, 0.0, epsilon = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn cal_t_contracts_against_gamma() {
        let model = heisenberg_model(1).unwrap();
        let p = [0.1, 0.9, 0.0];
        let mut f2 = DMatrix::zeros(3, 3);
        f2[(0, 1)] = 2.0;
        f2[(1, 0)] = -2.0;
        let v = cal_t_map(&model, &p, &f2).unwrap();
        // -1/2 (F_01 gamma_01 + F_10 gamma_10) = -1/2 (2 + 2) = -2.
        assert_abs_diff_eq!(v[2], -2.0, epsilon = 1e-13);
        assert_abs_diff_eq!(v[0], 0.0);
    }

    #[test]
    fn outside_domain_is_rejected() {
        let model = heisenberg_model(1).unwrap();
        let err = match Geometry::new(&model, &[5.0, 0.0, 0.0], 2) {
            Err(e) => e,
            Ok(_) => panic!("exterior point accepted"),
        };
        assert!(matches!(err, OpError::OutsideDomain { .. }));
    }

    #[test]
    fn geometry_cache_reuses_points() {
        let model = heisenberg_model(1).unwrap().into_shared();
        let cache = GeometryCache::new(Arc::clone(&model), 2);
        let p = [0.1, 0.2, 0.3];
        let a = cache.at(&p).unwrap();
        let b = cache.at(&p).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
    }
}
