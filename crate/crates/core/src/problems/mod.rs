//! Problem instances: the generic container plus builders for the two
//! reference experiments.

mod example1;
mod inner;
mod network;

pub use example1::{build_example1, build_example1_with, build_example1_with_noise, Example1Spec};
pub use inner::{natural_map_residual, solve_dense_affine_vi, solve_orthant_affine_vi, InnerViSolution};
pub use network::{
    build_example2, inner_equilibrium_solve, inner_equilibrium_solve_from, InnerSign, NetworkMap, NetworkModel, NetworkOptions,
    NetworkParameters, DEFAULT_INNER_MAX_ITER, DEFAULT_INNER_TOL, MODEL_STREAM,
};

use crate::error::{check_dim, Result};
use crate::feasible::FeasibleSet;
use crate::numkit::{ensure_finite, Vector};
use crate::oracle::StochasticOracle;

/// A stochastic inverse VI: find `x` with `F(x) in X` and
/// `<y - F(x), x> >= 0` for all `y in X`, where `F = E[G(., xi)]`.
pub struct SiviProblem {
    pub name: String,
    pub oracle: Box<dyn StochasticOracle>,
    pub set: FeasibleSet,
    /// Starting point. It need not lie in `X`: iterates are never projected.
    pub x0: Vector,
    pub x_star: Option<Vector>,
}

impl std::fmt::Debug for SiviProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SiviProblem")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("x0", &self.x0)
            .field("x_star", &self.x_star)
            .finish_non_exhaustive()
    }
}

impl SiviProblem {
    pub fn new(
        name: impl Into<String>,
        oracle: Box<dyn StochasticOracle>,
        set: FeasibleSet,
        x0: Vector,
        x_star: Option<Vector>,
    ) -> Result<Self> {
        let n = oracle.dim();
        check_dim("feasible set", n, set.dim())?;
        check_dim("starting point", n, x0.len())?;
        ensure_finite(&x0, "starting point")?;
        if let Some(xs) = &x_star {
            check_dim("known solution", n, xs.len())?;
        }
        let name = name.into();
        if !set.contains(&x0, 0.0) {
            log::warn!("{name}: starting point lies outside the feasible set");
        }
        Ok(Self {
            name,
            oracle,
            set,
            x0,
            x_star,
        })
    }

    pub fn dim(&self) -> usize {
        self.oracle.dim()
    }
}
