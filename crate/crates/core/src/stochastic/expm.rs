//! Dense matrix exponential by scaling and squaring with a Taylor core.
//!
//! The transport recursions exponentiate small (dimension <= 10 or so)
//! generators whose norm is of order `sqrt(dt)`, so after scaling the norm
//! below 1/2 a short Taylor sum reaches machine precision; squaring then
//! undoes the scaling.

use nalgebra::DMatrix;

/// Row-sum (infinity) norm.
fn inf_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(a)` for a square matrix.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let d = a.nrows();
    assert_eq!(d, a.ncols(), "expm needs a square matrix");
    let norm = inf_norm(a);
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let b = a.scale(0.5f64.powi(s as i32));
    let mut term = DMatrix::identity(d, d);
    let mut sum = DMatrix::identity(d, d);
    for k in 1..=24u32 {
        term = (&term * &b).scale(1.0 / f64::from(k));
        sum += &term;
        if inf_norm(&term) <= 1e-17 * inf_norm(&sum) {
            break;
        }
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exponential_of_zero_is_identity() {
        let z = DMatrix::<f64>::zeros(4, 4);
        assert_eq!(expm(&z), DMatrix::identity(4, 4));
    }

    #[test]
    fn planar_rotation() {
        for theta in [0.3, 2.0, 10.0, -7.5] {
            let a = DMatrix::from_row_slice(2, 2, &[0.0, -theta, theta, 0.0]);
            let e = expm(&a);
            assert_abs_diff_eq!(e[(0, 0)], theta.cos(), epsilon = 1e-13);
            assert_abs_diff_eq!(e[(1, 0)], theta.sin(), epsilon = 1e-13);
            assert_abs_diff_eq!(e[(0, 1)], -theta.sin(), epsilon = 1e-13);
        }
    }

    #[test]
    fn nilpotent_block() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = expm(&a);
        assert_abs_diff_eq!(e[(0, 1)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e[(0, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e[(1, 0)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn inverse_is_exponential_of_negation() {
        let a = DMatrix::from_row_slice(
            3,
            3,
            &[0.1, -0.7, 0.3, 0.2, 0.05, -0.4, -0.6, 0.9, 0.2],
        );
        let prod = expm(&a) * expm(&a.scale(-1.0));
        assert!((prod - DMatrix::identity(3, 3)).amax() < 1e-13);
    }

    #[test]
    fn skew_exponentials_are_orthogonal() {
        let a = DMatrix::from_row_slice(
            3,
            3,
            &[0.0, 1.3, -0.2, -1.3, 0.0, 0.8, 0.2, -0.8, 0.0],
        );
        let e = expm(&a);
        assert!((e.transpose() * &e - DMatrix::identity(3, 3)).amax() < 1e-13);
    }
}
