//! Affine variational inequalities over the nonnegative orthant, i.e. the
//! LCP `a >= 0, Ma + r >= 0, a'(Ma + r) = 0`, solved by projected gradient.

use crate::error::{check_dim, Error, Result};
use crate::numkit::{ensure_finite, power_iteration, Matrix, Vector};

#[derive(Debug, Clone)]
pub struct InnerViSolution {
    pub a_star: Vector,
    /// Natural-map residual `||a - max(a - Phi(a), 0)||` at `a_star`.
    pub residual: f64,
    pub iterations: usize,
}

pub fn natural_map_residual(a: &Vector, phi: &Vector) -> f64 {
    a.iter()
        .zip(phi.iter())
        .map(|(&ai, &pi)| {
            let d = ai - (ai - pi).max(0.0);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Projected gradient `a <- max(a - Phi(a)/lambda_max, 0)` for
/// `Phi(a) = Ma + r` with `M` symmetric PSD given as an operator.
///
/// Stops when the natural-map residual drops to `tol`.
pub fn solve_orthant_affine_vi<Op>(
    apply_m: Op,
    r: &Vector,
    lambda_max: f64,
    start: Option<&Vector>,
    tol: f64,
    max_iter: usize,
) -> Result<InnerViSolution>
where
    Op: Fn(&Vector, &mut Vector),
{
    if !(lambda_max > 0.0) || !lambda_max.is_finite() {
        return Err(Error::invalid("lambda_max", "must be positive and finite"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "must be positive"));
    }
    ensure_finite(r, "affine VI offset")?;
    let n = r.len();
    let mut a = match start {
        Some(s) => {
            check_dim("affine VI warm start", n, s.len())?;
            s.map(|v| v.max(0.0))
        }
        None => Vector::zeros(n),
    };
    let step = 1.0 / lambda_max;
    let mut phi = Vector::zeros(n);
    let mut residual = f64::INFINITY;
    for it in 0..max_iter {
        apply_m(&a, &mut phi);
        phi += r;
        residual = natural_map_residual(&a, &phi);
        if !residual.is_finite() {
            return Err(Error::NonFinite {
                context: "affine VI iteration".into(),
            });
        }
        if residual <= tol {
            return Ok(InnerViSolution {
                a_star: a,
                residual,
                iterations: it,
            });
        }
        for i in 0..n {
            a[i] = (a[i] - step * phi[i]).max(0.0);
        }
    }
    Err(Error::IterationLimit {
        what: "inner equilibrium solve",
        iterations: max_iter,
        residual,
    })
}

/// Dense convenience wrapper: checks symmetry and estimates `lambda_max` by
/// power iteration.
pub fn solve_dense_affine_vi(m: &Matrix, r: &Vector, tol: f64, max_iter: usize) -> Result<InnerViSolution> {
    check_dim("affine VI matrix", r.len(), m.nrows())?;
    let lambda_max = power_iteration(m, 1e-12 * m.amax().max(1.0))?.value;
    solve_orthant_affine_vi(
        |a, out| out.copy_from(&(m * a)),
        r,
        lambda_max,
        None,
        tol,
        max_iter,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_cases() {
        let m = Matrix::identity(4, 4);
        let e = Vector::from_element(4, 1.0);
        let sol = solve_dense_affine_vi(&m, &(-&e), 1e-12, 1000).unwrap();
        assert!((sol.a_star - &e).amax() < 1e-12);
        let sol = solve_dense_affine_vi(&m, &e, 1e-12, 1000).unwrap();
        assert_eq!(sol.a_star, Vector::zeros(4));
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn iteration_limit_carries_residual() {
        let m = Matrix::from_diagonal(&Vector::from_row_slice(&[1.0, 1e-3]));
        let r = Vector::from_row_slice(&[-1.0, -1.0]);
        match solve_dense_affine_vi(&m, &r, 1e-12, 5) {
            Err(Error::IterationLimit { residual, .. }) => assert!((residual - 0.999f64.powi(4)).abs() < 1e-12, "{residual}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn warm_start_is_projected() {
        let m = Matrix::identity(2, 2);
        let r = Vector::from_row_slice(&[-2.0, 3.0]);
        let start = Vector::from_row_slice(&[-5.0, 1.0]);
        let sol = solve_orthant_affine_vi(
            |a, out| out.copy_from(&(&m * a)),
            &r,
            1.0,
            Some(&start),
            1e-12,
            100,
        )
        .unwrap();
        assert_eq!(sol.a_star, Vector::from_row_slice(&[2.0, 0.0]));
    }

    #[test]
    fn residual_is_zero_at_complementary_point() {
        let a = Vector::from_row_slice(&[0.0, 2.0]);
        let phi = Vector::from_row_slice(&[3.0, 0.0]);
        assert_eq!(natural_map_residual(&a, &phi), 0.0);
    }
}
