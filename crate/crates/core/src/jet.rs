//! Truncated multivariate Taylor arithmetic ("jets").
//!
//! A [`Jet`] stores the Taylor coefficients `c_alpha = d^alpha f(p) / alpha!`
//! of a scalar quantity at a chart point, for every multi-index `alpha` with
//! `|alpha| <= MAX_ORDER`. Arithmetic on jets is truncated polynomial
//! arithmetic, so values and derivatives propagate through +, -, *, /, sin,
//! cos, exp exactly (to roundoff) — in particular a polynomial of degree
//! `<= MAX_ORDER` evaluated through jets yields its exact derivatives.
//!
//! Every jet carries a *valid order* `ord`: the highest derivative order that
//! is trustworthy. Taking a derivative lowers it by one, binary operations
//! take the minimum, and reading a derivative beyond the valid order is a
//! panic (a programming error, not a data error).

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, OnceLock, RwLock};

/// Highest derivative order tracked by the tables.
pub const MAX_ORDER: usize = 4;

/// Errors from jet arithmetic that depend on runtime data.
#[derive(Debug, Clone, thiserror::Error)]
pub enum JetError {
    #[error("division by a jet whose value is zero (|value| = {0:e})")]
    DivisionByZero(f64),
}

/// Per-dimension lookup tables: multi-index enumeration, product pairs and
/// derivative shift maps. Built once per chart dimension and shared.
pub struct JetTable {
    dim: usize,
    /// Multi-indices in graded order; within a degree class the first
    /// coordinate carries the highest exponent first, so positions
    /// `1..=dim` are exactly the unit indices `e_1, ..., e_dim`.
    indices: Vec<Vec<u8>>,
    pos: HashMap<Vec<u8>, usize>,
    degree: Vec<u8>,
    /// alpha! for converting stored coefficients to derivative values.
    alpha_factorial: Vec<f64>,
    /// Ordered coefficient pairs `(i, j, k)` with `alpha_i + alpha_j = alpha_k`,
    /// sorted by `|alpha_i| + |alpha_j|`.
    products: Vec<(u32, u32, u32)>,
    /// `products[..product_cutoff[o]]` holds the pairs of total degree `<= o`.
    product_cutoff: [usize; MAX_ORDER + 1],
    /// For each coordinate `a`: entries `(src, dst, factor)` realizing
    /// `c_beta(df/dx_a) = (beta_a + 1) * c_{beta + e_a}(f)`.
    deriv: Vec<Vec<(u32, u32, f64)>>,
}

fn enumerate_degree(dim: usize, deg: u8, prefix: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if prefix.len() == dim - 1 {
        prefix.push(deg);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=deg).rev() {
        prefix.push(first);
        enumerate_degree(dim, deg - first, prefix, out);
        prefix.pop();
    }
}

impl JetTable {
    fn build(dim: usize) -> JetTable {
        assert!(dim >= 1, "jet dimension must be at least 1");
        let mut indices = Vec::new();
        for deg in 0..=MAX_ORDER as u8 {
            let mut prefix = Vec::new();
            enumerate_degree(dim, deg, &mut prefix, &mut indices);
        }
        let pos: HashMap<Vec<u8>, usize> = indices
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();
        let degree: Vec<u8> = indices.iter().map(|a| a.iter().sum()).collect();
        let alpha_factorial: Vec<f64> = indices
            .iter()
            .map(|a| a.iter().map(|&e| FACTORIAL[e as usize]).product())
            .collect();

        let mut products = Vec::new();
        for (i, ai) in indices.iter().enumerate() {
            for (j, aj) in indices.iter().enumerate() {
                let total = degree[i] + degree[j];
                if total as usize > MAX_ORDER {
                    continue;
                }
                let sum: Vec<u8> = ai.iter().zip(aj).map(|(x, y)| x + y).collect();
                products.push((total, i as u32, j as u32, pos[&sum] as u32));
            }
        }
        products.sort_by_key(|&(total, i, j, _)| (total, i, j));
        let mut product_cutoff = [0usize; MAX_ORDER + 1];
        for o in 0..=MAX_ORDER {
            product_cutoff[o] = products.iter().take_while(|p| p.0 as usize <= o).count();
        }
        let products: Vec<(u32, u32, u32)> = products.into_iter().map(|(_, i, j, k)| (i, j, k)).collect();

        let mut deriv = Vec::with_capacity(dim);
        for a in 0..dim {
            let mut map = Vec::new();
            for (dst, beta) in indices.iter().enumerate() {
                if degree[dst] as usize >= MAX_ORDER {
                    continue;
                }
                let mut shifted = beta.clone();
                shifted[a] += 1;
                let src = pos[&shifted];
                map.push((src as u32, dst as u32, (beta[a] + 1) as f64));
            }
            deriv.push(map);
        }

        JetTable {
            dim,
            indices,
            pos,
            degree,
            alpha_factorial,
            products,
            product_cutoff,
            deriv,
        }
    }

    /// Number of multi-indices of order `<= MAX_ORDER` in `dim` variables.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    /// All tracked multi-indices (per-coordinate exponents) in graded order.
    pub fn multi_indices(&self) -> &[Vec<u8>] {
        &self.indices
    }
}

const FACTORIAL: [f64; MAX_ORDER + 1] = [1.0, 1.0, 2.0, 6.0, 24.0];

fn table_registry() -> &'static RwLock<HashMap<usize, Arc<JetTable>>> {
    static REG: OnceLock<RwLock<HashMap<usize, Arc<JetTable>>>> = OnceLock::new();
    REG.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Fetch (building lazily) the shared table for a chart dimension.
pub fn table(dim: usize) -> Arc<JetTable> {
    // Recover from poisoning: the map is never left half-written (the
    // entry is inserted only after `build` returns), so a panic elsewhere
    // must not take every later jet construction down with it.
    let reg = table_registry();
    {
        let r = reg.read().unwrap_or_else(|e| e.into_inner());
        if let Some(t) = r.get(&dim) {
            return Arc::clone(t);
        }
    }
    let mut w = reg.write().unwrap_or_else(|e| e.into_inner());
    Arc::clone(w.entry(dim).or_insert_with(|| Arc::new(JetTable::build(dim))))
}

/// Truncated Taylor expansion of a scalar at a point.
#[derive(Clone)]
pub struct Jet {
    tbl: Arc<JetTable>,
    /// Valid derivative order: coefficients of degree `> ord` are unspecified.
    ord: u8,
    coeffs: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Jet(dim={}, ord={}, value={})", self.tbl.dim, self.ord, self.value())
    }
}

impl Jet {
    pub fn constant(dim: usize, ord: u8, v: f64) -> Jet {
        let tbl = table(dim);
        let mut coeffs = vec![0.0; tbl.len()];
        coeffs[0] = v;
        Jet { tbl, ord, coeffs }
    }

    /// The coordinate function `x_a` expanded at a point where it takes value `v`.
    pub fn variable(dim: usize, ord: u8, a: usize, v: f64) -> Jet {
        assert!(a < dim, "variable index {a} out of range for dimension {dim}");
        let tbl = table(dim);
        let mut coeffs = vec![0.0; tbl.len()];
        coeffs[0] = v;
        if ord >= 1 {
            coeffs[1 + a] = 1.0;
        }
        Jet { tbl, ord, coeffs }
    }

    /// Coordinate jets for a whole point.
    pub fn variables(p: &[f64], ord: u8) -> Vec<Jet> {
        (0..p.len()).map(|a| Jet::variable(p.len(), ord, a, p[a])).collect()
    }

    pub fn dim(&self) -> usize {
        self.tbl.dim
    }

    pub fn order(&self) -> u8 {
        self.ord
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// First partial derivative along coordinate `a`.
    pub fn partial(&self, a: usize) -> f64 {
        assert!(self.ord >= 1, "jet holds no first derivatives (ord = {})", self.ord);
        self.coeffs[1 + a]
    }

    /// Derivative for an arbitrary multi-index given as per-coordinate exponents.
    pub fn partial_multi(&self, exponents: &[u8]) -> f64 {
        let total: u8 = exponents.iter().sum();
        assert!(
            total <= self.ord,
            "requested order-{total} derivative from a jet valid to order {}",
            self.ord
        );
        let idx = self.tbl.pos[&exponents.to_vec()];
        self.coeffs[idx] * self.tbl.alpha_factorial[idx]
    }

    /// Second partial derivative `d^2 f / dx_a dx_b`.
    pub fn partial2(&self, a: usize, b: usize) -> f64 {
        let mut e = vec![0u8; self.tbl.dim];
        e[a] += 1;
        e[b] += 1;
        self.partial_multi(&e)
    }

    /// Directional derivative along a coordinate vector.
    pub fn directional(&self, v: &[f64]) -> f64 {
        assert!(self.ord >= 1, "jet holds no first derivatives");
        v.iter()
            .enumerate()
            .map(|(a, &va)| va * self.coeffs[1 + a])
            .sum()
    }

    /// The jet of `df/dx_a`, valid to one order less.
    pub fn derivative(&self, a: usize) -> Jet {
        assert!(self.ord >= 1, "cannot differentiate a jet of order 0");
        let mut coeffs = vec![0.0; self.tbl.len()];
        for &(src, dst, factor) in &self.tbl.deriv[a] {
            if self.tbl.degree[src as usize] <= self.ord {
                coeffs[dst as usize] = factor * self.coeffs[src as usize];
            }
        }
        Jet {
            tbl: Arc::clone(&self.tbl),
            ord: self.ord - 1,
            coeffs,
        }
    }

    pub fn scale(&self, s: f64) -> Jet {
        let mut out = self.clone();
        for c in &mut out.coeffs {
            *c *= s;
        }
        out
    }

    fn mul_impl(&self, rhs: &Jet) -> Jet {
        assert_eq!(self.tbl.dim, rhs.tbl.dim, "jet dimension mismatch");
        let ord = self.ord.min(rhs.ord);
        let mut coeffs = vec![0.0; self.tbl.len()];
        let cut = self.tbl.product_cutoff[ord as usize];
        for &(i, j, k) in &self.tbl.products[..cut] {
            coeffs[k as usize] += self.coeffs[i as usize] * rhs.coeffs[j as usize];
        }
        Jet {
            tbl: Arc::clone(&self.tbl),
            ord,
            coeffs,
        }
    }

    /// Compose with a univariate function given its derivative values
    /// `g_k = g^(k)(self.value())` for `k = 0..=self.ord`.
    pub fn compose(&self, g_derivs: &[f64]) -> Jet {
        let ord = self.ord as usize;
        assert!(g_derivs.len() > ord, "need {} derivative values, got {}", ord + 1, g_derivs.len());
        let mut w = self.clone();
        w.coeffs[0] = 0.0;
        // Horner evaluation of sum_k g_k / k! * w^k in the truncated ring.
        let mut acc = Jet::constant(self.tbl.dim, self.ord, g_derivs[ord] / FACTORIAL[ord]);
        for k in (0..ord).rev() {
            acc = acc.mul_impl(&w) + Jet::constant(self.tbl.dim, self.ord, g_derivs[k] / FACTORIAL[k]);
        }
        acc
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        self.compose(&[s, c, -s, -c, s])
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        self.compose(&[c, -s, -c, s, c])
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        self.compose(&[e, e, e, e, e])
    }

    /// Reciprocal; fails when the value is (numerically) zero.
    pub fn try_recip(&self) -> Result<Jet, JetError> {
        let c0 = self.value();
        if c0 == 0.0 || !c0.is_finite() {
            return Err(JetError::DivisionByZero(c0.abs()));
        }
        // g(u) = 1/u: g^(k)(c0) = (-1)^k k! / c0^(k+1)
        let mut g = [0.0; MAX_ORDER + 1];
        let mut p = 1.0 / c0;
        for k in 0..=MAX_ORDER {
            g[k] = if k % 2 == 0 { p * FACTORIAL[k] } else { -p * FACTORIAL[k] };
            p /= c0;
        }
        Ok(self.compose(&g))
    }

    pub fn try_div(&self, rhs: &Jet) -> Result<Jet, JetError> {
        Ok(self.mul_impl(&rhs.try_recip()?))
    }

    /// Non-negative integer power by repeated multiplication.
    pub fn powi(&self, mut k: u32) -> Jet {
        let mut acc = Jet::constant(self.tbl.dim, self.ord, 1.0);
        let mut base = self.clone();
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul_impl(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul_impl(&base);
            }
        }
        acc
    }
}

impl std::ops::Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        assert_eq!(self.tbl.dim, rhs.tbl.dim, "jet dimension mismatch");
        let mut out = self.clone();
        for (c, r) in out.coeffs.iter_mut().zip(&rhs.coeffs) {
            *c += r;
        }
        out.ord = self.ord.min(rhs.ord);
        out
    }
}

impl std::ops::Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        assert_eq!(self.tbl.dim, rhs.tbl.dim, "jet dimension mismatch");
        let mut out = self.clone();
        for (c, r) in out.coeffs.iter_mut().zip(&rhs.coeffs) {
            *c -= r;
        }
        out.ord = self.ord.min(rhs.ord);
        out
    }
}

impl std::ops::Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        self.mul_impl(rhs)
    }
}

impl std::ops::Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

macro_rules! owned_ops {
    ($($trait:ident :: $method:ident),*) => {$(
        impl std::ops::$trait for Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                std::ops::$trait::$method(&self, &rhs)
            }
        }
    )*};
}
owned_ops!(Add::add, Sub::sub, Mul::mul);

impl std::ops::Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn table_sizes_match_binomial_counts() {
        // C(dim + 4, 4)
        assert_eq!(table(1).len(), 5);
        assert_eq!(table(3).len(), 35);
        assert_eq!(table(5).len(), 126);
    }

    #[test]
    fn unit_indices_sit_right_after_the_constant() {
        let t = table(3);
        assert_eq!(t.indices[0], vec![0, 0, 0]);
        assert_eq!(t.indices[1], vec![1, 0, 0]);
        assert_eq!(t.indices[2], vec![0, 1, 0]);
        assert_eq!(t.indices[3], vec![0, 0, 1]);
    }

    #[test]
    fn polynomial_derivatives_are_exact() {
        // f(x, y) = x^3 y - 2 x y + 7 at (2, -1)
        let p = [2.0, -1.0];
        let v = Jet::variables(&p, 4);
        let f = v[0].powi(3) * v[1].clone() - v[0].scale(2.0) * v[1].clone()
            + Jet::constant(2, 4, 7.0);
        assert_relative_eq!(f.value(), -8.0 + 4.0 + 7.0, epsilon = 1e-12);
        // df/dx = 3x^2 y - 2y, df/dy = x^3 - 2x
        assert_relative_eq!(f.partial(0), -12.0 + 2.0, epsilon = 1e-12);
        assert_relative_eq!(f.partial(1), 8.0 - 4.0, epsilon = 1e-12);
        // d2f/dxdy = 3x^2 - 2, d3f/dx^2dy = 6x
        assert_relative_eq!(f.partial2(0, 1), 10.0, epsilon = 1e-12);
        assert_relative_eq!(f.partial_multi(&[2, 1]), 12.0, epsilon = 1e-12);
        // d4f/dx^3dy = 6
        assert_relative_eq!(f.partial_multi(&[3, 1]), 6.0, epsilon = 1e-12);
    }

    #[test]
    fn transcendental_jets_match_known_series() {
        let x = Jet::variable(1, 4, 0, 0.7);
        let s = x.sin();
        assert_relative_eq!(s.value(), 0.7f64.sin(), epsilon = 1e-15);
        assert_relative_eq!(s.partial(0), 0.7f64.cos(), epsilon = 1e-15);
        assert_relative_eq!(s.partial_multi(&[2]), -0.7f64.sin(), epsilon = 1e-15);
        assert_relative_eq!(s.partial_multi(&[3]), -0.7f64.cos(), epsilon = 1e-15);

        let e = x.exp();
        for k in 0..=4u8 {
            assert_relative_eq!(e.partial_multi(&[k]), 0.7f64.exp(), epsilon = 1e-13);
        }
    }

    #[test]
    fn division_inverts_multiplication() {
        let p = [0.4, -1.3, 2.2];
        let v = Jet::variables(&p, 4);
        let f = v[0].clone() * v[1].clone() + v[2].powi(2) + Jet::constant(3, 4, 0.5);
        let g = v[2].clone() + Jet::constant(3, 4, 3.0);
        let h = f.try_div(&g).unwrap() * g.clone();
        for (a, b) in h.coeffs.iter().zip(&f.coeffs) {
            assert_relative_eq!(a, b, epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    #[test]
    fn division_by_zero_value_is_reported() {
        let z = Jet::variable(2, 4, 0, 0.0);
        assert!(matches!(z.try_recip(), Err(JetError::DivisionByZero(_))));
    }

    #[test]
    fn derivative_jet_lowers_order_and_shifts_coefficients() {
        let p = [1.5, -0.5];
        let v = Jet::variables(&p, 4);
        let f = v[0].powi(2) * v[1].powi(2);
        let fx = f.derivative(0); // 2 x y^2
        assert_eq!(fx.order(), 3);
        assert_relative_eq!(fx.value(), 2.0 * 1.5 * 0.25, epsilon = 1e-12);
        assert_relative_eq!(fx.partial(0), 2.0 * 0.25, epsilon = 1e-12);
        assert_relative_eq!(fx.partial(1), 2.0 * 1.5 * 2.0 * -0.5, epsilon = 1e-12);
    }

    #[test]
    #[should_panic(expected = "valid to order")]
    fn reading_past_the_valid_order_panics() {
        let x = Jet::variable(1, 4, 0, 1.0);
        let d = x.powi(4).derivative(0).derivative(0).derivative(0);
        let _ = d.partial_multi(&[2]); // d has ord = 1
    }

    proptest! {
        /// Leibniz rule: differentiating a product of random quadratics through
        /// jets agrees with the product rule applied to individual jets.
        #[test]
        fn product_rule_holds(coeffs_f in proptest::collection::vec(-2.0..2.0f64, 6),
                              coeffs_g in proptest::collection::vec(-2.0..2.0f64, 6),
                              px in -2.0..2.0f64, py in -2.0..2.0f64) {
            let quad = |c: &[f64], v: &[Jet]| {
                Jet::constant(2, 4, c[0])
                    + v[0].scale(c[1]) + v[1].scale(c[2])
                    + v[0].powi(2).scale(c[3]) + (v[0].clone() * v[1].clone()).scale(c[4])
                    + v[1].powi(2).scale(c[5])
            };
            let v = Jet::variables(&[px, py], 4);
            let f = quad(&coeffs_f, &v);
            let g = quad(&coeffs_g, &v);
            let prod = f.clone() * g.clone();
            for a in 0..2 {
                let lhs = prod.derivative(a);
                let rhs = f.derivative(a) * g.clone() + f.clone() * g.derivative(a);
                prop_assert!((lhs.value() - rhs.value()).abs() < 1e-10);
                for b in 0..2 {
                    prop_assert!((lhs.partial(b) - rhs.partial(b)).abs() < 1e-10);
                }
            }
        }
    }
}
