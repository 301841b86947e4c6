//! Scalar and one-form fields as jet-valued closures.
//!
//! A field is anything that can report its Taylor jet at a chart point; the
//! operator modules only ever consume jets, so fields built from parsed
//! expressions, random polynomials, and composite constructions (like the
//! differential of a scalar) all flow through the same interface.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::expr::Expr;
use crate::jet::{table, Jet};
use crate::OpError;

type ScalarFn = dyn Fn(&[f64], u8) -> Result<Jet, OpError> + Send + Sync;
type CompsFn = dyn Fn(&[f64], u8) -> Result<Vec<Jet>, OpError> + Send + Sync;

/// A real-valued function on the chart, evaluable as a jet of any order.
#[derive(Clone)]
pub struct ScalarField {
    name: String,
    f: Arc<ScalarFn>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarField({})", self.name)
    }
}

impl ScalarField {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(&[f64], u8) -> Result<Jet, OpError> + Send + Sync + 'static,
    ) -> ScalarField {
        ScalarField {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    /// Field computing the given expression in the chart coordinates.
    pub fn from_expr(e: &Expr) -> ScalarField {
        let name = e.to_string();
        let e = e.clone();
        ScalarField::new(name, move |p, ord| {
            let vars = Jet::variables(p, ord);
            Ok(e.eval(&vars)?)
        })
    }

    /// Parse `src` and wrap it as a field.
    pub fn parse(src: &str) -> Result<ScalarField, OpError> {
        Ok(ScalarField::from_expr(&Expr::parse(src)?))
    }

    /// The coordinate function `x_{index+1}`.
    pub fn coordinate(index: usize) -> ScalarField {
        ScalarField::new(format!("x{}", index + 1), move |p, ord| {
            Ok(Jet::variable(p.len(), ord, index, p[index]))
        })
    }

    pub fn constant(c: f64) -> ScalarField {
        ScalarField::new(format!("{c}"), move |p, ord| {
            Ok(Jet::constant(p.len(), ord, c))
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, p: &[f64], ord: u8) -> Result<Jet, OpError> {
        (self.f)(p, ord)
    }

    pub fn value(&self, p: &[f64]) -> Result<f64, OpError> {
        Ok(self.eval(p, 0)?.value())
    }
}

/// A polynomial in the chart coordinates, stored as (exponents, coefficient)
/// terms; the workhorse field family for randomized identity grids.
#[derive(Debug, Clone)]
pub struct Polynomial {
    dim: usize,
    terms: Vec<(Vec<u8>, f64)>,
}

impl Polynomial {
    /// Uniformly random coefficients in `[-1, 1]` over all monomials of
    /// total degree at most `max_degree`.
    pub fn random(dim: usize, max_degree: u8, rng: &mut impl Rng) -> Polynomial {
        let tbl = table(dim);
        let terms = tbl
            .multi_indices()
            .iter()
            .filter(|alpha| alpha.iter().map(|&e| e as u32).sum::<u32>() <= max_degree as u32)
            .map(|alpha| (alpha.clone(), rng.random::<f64>() * 2.0 - 1.0))
            .collect();
        Polynomial { dim, terms }
    }

    pub fn eval_jet(&self, p: &[f64], ord: u8) -> Jet {
        let vars = Jet::variables(p, ord);
        let mut acc = Jet::constant(self.dim, ord, 0.0);
        for (alpha, coeff) in &self.terms {
            let mut term = Jet::constant(self.dim, ord, *coeff);
            for (a, &e) in alpha.iter().enumerate() {
                if e > 0 {
                    term = &term * &vars[a].powi(e as u32);
                }
            }
            acc = &acc + &term;
        }
        acc
    }

    pub fn into_field(self, name: impl Into<String>) -> ScalarField {
        let name = name.into();
        ScalarField::new(name, move |p, ord| Ok(self.eval_jet(p, ord)))
    }
}

/// Draw `count` random polynomial fields of total degree `<= max_degree`.
pub fn random_polynomials(
    dim: usize,
    max_degree: u8,
    count: usize,
    rng: &mut impl Rng,
) -> Vec<ScalarField> {
    (0..count)
        .map(|k| Polynomial::random(dim, max_degree, rng).into_field(format!("poly{k}")))
        .collect()
}

/// A one-form on the chart, reported through its frame components
/// `(f_1..f_n, g_1..g_m)` — horizontal first — as jets.
#[derive(Clone)]
pub struct OneFormField {
    name: String,
    comps: Arc<CompsFn>,
    dim: usize,
}

impl fmt::Debug for OneFormField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "OneFormField({})", self.name)
    }
}

impl OneFormField {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        comps: impl Fn(&[f64], u8) -> Result<Vec<Jet>, OpError> + Send + Sync + 'static,
    ) -> OneFormField {
        OneFormField {
            name: name.into(),
            dim,
            comps: Arc::new(comps),
        }
    }

    /// Assemble a one-form from per-component scalar fields (frame
    /// components, horizontal first).
    pub fn from_components(name: impl Into<String>, comps: Vec<ScalarField>) -> OneFormField {
        let dim = comps.len();
        OneFormField::new(name, dim, move |p, ord| {
            comps.iter().map(|c| c.eval(p, ord)).collect()
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of frame components `n + m`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Frame-component jets at `p`, each valid to order `ord`.
    pub fn eval(&self, p: &[f64], ord: u8) -> Result<Vec<Jet>, OpError> {
        let out = (self.comps)(p, ord)?;
        debug_assert_eq!(out.len(), self.dim);
        Ok(out)
    }

    /// Frame-component values at `p`.
    pub fn values(&self, p: &[f64]) -> Result<Vec<f64>, OpError> {
        Ok(self.eval(p, 0)?.iter().map(Jet::value).collect())
    }
}

/// The squared epsilon-norm of one-form components: horizontal parts at
/// weight 1, vertical parts at weight `eps`.
pub fn eps_norm_sq(comps: &[f64], n: usize, eps: f64) -> f64 {
    let h: f64 = comps[..n].iter().map(|c| c * c).sum();
    let v: f64 = comps[n..].iter().map(|c| c * c).sum();
    h + eps * v
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn expression_fields_differentiate() {
        let f = ScalarField::parse("x1^2 * x2 + sin(x2)").unwrap();
        let j = f.eval(&[2.0, 0.5], 2).unwrap();
        assert_abs_diff_eq!(j.value(), 4.0 * 0.5 + 0.5f64.sin(), epsilon = 1e-15);
        assert_abs_diff_eq!(j.partial(0), 2.0 * 2.0 * 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(j.partial(1), 4.0 + 0.5f64.cos(), epsilon = 1e-15);
    }

    #[test]
    fn random_polynomials_are_seeded_and_bounded_degree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = Polynomial::random(3, 3, &mut rng);
        assert!(p.terms.iter().all(|(a, _)| a.iter().map(|&e| e as u32).sum::<u32>() <= 3));
        // 3 variables, degree <= 3: C(6,3) = 20 monomials.
        assert_eq!(p.terms.len(), 20);

        let mut rng2 = ChaCha8Rng::seed_from_u64(11);
        let q = Polynomial::random(3, 3, &mut rng2);
        let x = [0.3, -0.7, 1.1];
        assert_eq!(p.eval_jet(&x, 1).value(), q.eval_jet(&x, 1).value());
    }

    #[test]
    fn polynomial_jets_match_manual_derivatives() {
        // p = 2 x1 x2^2 - x3
        let p = Polynomial {
            dim: 3,
            terms: vec![(vec![1, 2, 0], 2.0), (vec![0, 0, 1], -1.0)],
        };
        let j = p.eval_jet(&[1.5, -2.0, 0.25], 2);
        assert_abs_diff_eq!(j.value(), 2.0 * 1.5 * 4.0 - 0.25);
        assert_abs_diff_eq!(j.partial(0), 8.0);
        assert_abs_diff_eq!(j.partial(1), 2.0 * 1.5 * 2.0 * -2.0);
        assert_abs_diff_eq!(j.partial(2), -1.0);
        assert_abs_diff_eq!(j.partial2(0, 1), 2.0 * 2.0 * -2.0);
    }

    #[test]
    fn one_forms_report_components() {
        let eta = OneFormField::from_components(
            "test",
            vec![
                ScalarField::coordinate(1),
                ScalarField::constant(3.0),
                ScalarField::parse("x1 * x2").unwrap(),
            ],
        );
        let v = eta.values(&[2.0, 5.0, 0.0]).unwrap();
        assert_eq!(v, vec![5.0, 3.0, 10.0]);
    }

    #[test]
    fn eps_norm_weights_vertical_components() {
        let comps = [3.0, 4.0, 2.0];
        assert_abs_diff_eq!(eps_norm_sq(&comps, 2, 1.0), 29.0);
        assert_abs_diff_eq!(eps_norm_sq(&comps, 2, 0.25), 26.0);
    }
}
