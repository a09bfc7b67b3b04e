use crate::feasible::{BoxSet, FeasibleSet};
use crate::numkit::{Matrix, Vector};
use crate::oracle::{AdditiveGaussianOracle, AffineMap, MeanMap, NoiseSampling};
use crate::solver::gap;

use super::SiviProblem;

/// The three-dimensional affine test problem `G(x, xi) = Ax + b + xi` on `[-1, 10]^3`.
pub struct Example1Spec;

impl Example1Spec {
    pub const MATRIX: [[f64; 3]; 3] = [[5.0, 2.0, 1.0], [2.0, 5.0, 0.0], [1.0, 0.0, 6.0]];
    pub const OFFSET: [f64; 3] = [0.0, -3.0, -5.5];
    pub const LOWER: f64 = -1.0;
    pub const UPPER: f64 = 10.0;
    pub const SOLUTION: [f64; 3] = [0.0, 0.4, 0.75];

    pub fn matrix() -> Matrix {
        Matrix::from_fn(3, 3, |i, j| Self::MATRIX[i][j])
    }

    pub fn offset() -> Vector {
        Vector::from_row_slice(&Self::OFFSET)
    }

    pub fn solution() -> Vector {
        Vector::from_row_slice(&Self::SOLUTION)
    }

    pub fn feasible_set() -> FeasibleSet {
        FeasibleSet::Box(BoxSet::uniform(3, Self::LOWER, Self::UPPER).expect("valid box"))
    }

    pub fn mean_map() -> AffineMap {
        AffineMap::new(Self::matrix(), Self::offset()).expect("3x3 affine map")
    }
}

pub fn build_example1() -> SiviProblem {
    build_example1_with_noise(1.0)
}

/// Example 1 with the Gaussian noise scaled by `noise_scale`; zero gives the
/// deterministic variant.
pub fn build_example1_with_noise(noise_scale: f64) -> SiviProblem {
    build_example1_with(noise_scale, NoiseSampling::default())
}

pub fn build_example1_with(noise_scale: f64, sampling: NoiseSampling) -> SiviProblem {
    let a = Example1Spec::matrix();
    assert!(a.clone().cholesky().is_some(), "example matrix must be positive definite");
    let set = Example1Spec::feasible_set();
    let x_star = Example1Spec::solution();
    let f_star = Example1Spec::mean_map().eval(&x_star).expect("3-vector");
    let (_, residual) = gap(&x_star, 1.0, &f_star, &set).expect("box projection");
    assert!(residual <= 1e-12, "stored solution has gap {residual}");

    let oracle = AdditiveGaussianOracle::new(Example1Spec::mean_map(), noise_scale)
        .expect("noise scale must be finite and nonnegative")
        .with_sampling(sampling);
    SiviProblem::new("example1", Box::new(oracle), set, Vector::zeros(3), Some(x_star))
        .expect("consistent example dimensions")
}
