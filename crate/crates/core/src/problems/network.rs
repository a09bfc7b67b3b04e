//! Network equilibrium control: taxes on `m` supply and `n` demand markets
//! steer the spatial price equilibrium of the shipments between them.
//!
//! Shipments are stored supply-major: `a[j * n + i]` is the flow from supply
//! market `j` to demand market `i`. With this layout the aggregation `A`
//! (supply totals) sums contiguous blocks and `B` (demand totals) sums strided
//! entries; neither is ever formed densely on the hot path.
//!
//! For a control `x = [x1; x2]` the shipments `a*(x)` solve the affine VI over
//! `a >= 0` with operator `Phi(a) = Ma + r(x)`,
//!
//! ```text
//! M    = diag(c) + A' diag(a_coef) A + B' diag(rho) B
//! r(x) = tau + A'(a0 + alpha - x1) - B'(rho0 - beta + x2)
//! ```
//!
//! so demand prices fall with the delivered quantity and the control acts as
//! a price reduction (a tax is a negative control). Under this convention
//! `F(x) = [A a*(x); B a*(x)]` is co-coercive. [`InnerSign::Literal`] keeps
//! the demand price increasing in shipments and the control as a surcharge;
//! its `M` is indefinite and the model refuses to build.

use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use nalgebra::SymmetricEigen;

use crate::error::{check_dim, Error, Result};
use crate::feasible::{BoxSet, FeasibleSet, PolyhedronSet};
use crate::numkit::{Matrix, RngStream, Vector};
use crate::oracle::{AdditiveGaussianOracle, MeanMap, NoiseSampling};

use super::inner::{solve_orthant_affine_vi, InnerViSolution};
use super::SiviProblem;

pub const DEFAULT_INNER_TOL: f64 = 1e-9;
pub const DEFAULT_INNER_MAX_ITER: usize = 2_000_000;
/// Stream id used for drawing model parameters; replications use small ids.
pub const MODEL_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InnerSign {
    #[default]
    Standard,
    Literal,
}

impl fmt::Display for InnerSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InnerSign::Standard => "standard",
            InnerSign::Literal => "literal",
        })
    }
}

impl FromStr for InnerSign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(InnerSign::Standard),
            "literal" => Ok(InnerSign::Literal),
            _ => Err(Error::Parse(format!("inner sign `{s}` (expected standard or literal)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NetworkOptions {
    pub m: usize,
    pub n: usize,
    pub q: usize,
    pub sign: InnerSign,
    /// Base supply taxes; zero when `None`.
    pub alpha: Option<Vector>,
    /// Base demand taxes; zero when `None`.
    pub beta: Option<Vector>,
}

impl Default for NetworkOptions {
    fn default() -> Self {
        Self {
            m: 10,
            n: 30,
            q: 2,
            sign: InnerSign::Standard,
            alpha: None,
            beta: None,
        }
    }
}

/// Raw model data. Everything needed to rebuild a [`NetworkModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParameters {
    pub m: usize,
    pub n: usize,
    /// Transaction cost `l(a) = diag(c) a + tau`.
    pub c: Vector,
    pub tau: Vector,
    /// Supply price `g(a) = diag(a_coef) A a + a0`.
    pub a_coef: Vector,
    pub a0: Vector,
    /// Demand price coefficients.
    pub rho: Vector,
    pub rho0: Vector,
    pub alpha: Vector,
    pub beta: Vector,
    /// Halfspaces `Lx <= b` on the control.
    pub l: Matrix,
    pub b: Vector,
    pub f_min: Vector,
    pub f_max: Vector,
    pub sign: InnerSign,
}

impl NetworkParameters {
    /// Draws the cost and price coefficients from the seed. `L` has i.i.d.
    /// `U[0,1]` entries and `b = L f_min + (L (f_max - f_min)) / 2`.
    pub fn generate(seed: u64, opts: &NetworkOptions) -> Result<Self> {
        let (m, n) = (opts.m, opts.n);
        if m == 0 || n == 0 {
            return Err(Error::invalid("m/n", "market counts must be positive"));
        }
        let mut rng = RngStream::new(seed, MODEL_STREAM);
        let mn = m * n;
        let c = rng.uniform_vector(mn, 0.1, 0.2);
        let tau = rng.uniform_vector(mn, 1.0, 2.0);
        let a_coef = rng.uniform_vector(m, 1.0, 2.0);
        let a0 = rng.uniform_vector(m, 270.0, 370.0);
        let rho = rng.uniform_vector(n, 1.0, 2.0);
        let rho0 = rng.uniform_vector(n, 620.0, 720.0);
        let dim = m + n;
        let l = Matrix::from_row_iterator(opts.q, dim, (0..opts.q * dim).map(|_| rng.uniform(0.0, 1.0)));
        let f_min = Vector::from_fn(dim, |k, _| if k < m { 0.0 } else { 20.0 });
        let f_max = Vector::from_fn(dim, |k, _| if k < m { 160.0 } else { 60.0 });
        let b = &l * &f_min + 0.5 * (&l * (&f_max - &f_min));
        let alpha = opts.alpha.clone().unwrap_or_else(|| Vector::zeros(m));
        let beta = opts.beta.clone().unwrap_or_else(|| Vector::zeros(n));
        Ok(Self {
            m,
            n,
            c,
            tau,
            a_coef,
            a0,
            rho,
            rho0,
            alpha,
            beta,
            l,
            b,
            f_min,
            f_max,
            sign: opts.sign,
        })
    }

    fn validate(&self) -> Result<()> {
        let (m, n) = (self.m, self.n);
        if m == 0 || n == 0 {
            return Err(Error::invalid("m/n", "market counts must be positive"));
        }
        check_dim("c", m * n, self.c.len())?;
        check_dim("tau", m * n, self.tau.len())?;
        check_dim("a_coef", m, self.a_coef.len())?;
        check_dim("a0", m, self.a0.len())?;
        check_dim("alpha", m, self.alpha.len())?;
        check_dim("rho", n, self.rho.len())?;
        check_dim("rho0", n, self.rho0.len())?;
        check_dim("beta", n, self.beta.len())?;
        check_dim("L columns", m + n, self.l.ncols())?;
        check_dim("b", self.l.nrows(), self.b.len())?;
        check_dim("f_min", m + n, self.f_min.len())?;
        check_dim("f_max", m + n, self.f_max.len())?;
        let all = [
            &self.c, &self.tau, &self.a_coef, &self.a0, &self.rho, &self.rho0, &self.alpha, &self.beta,
            &self.b, &self.f_min, &self.f_max,
        ];
        if all.iter().any(|v| v.iter().any(|x| !x.is_finite())) || self.l.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: "network parameters".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct NetworkModel {
    params: NetworkParameters,
    lambda_min: f64,
    lambda_max: f64,
}

impl NetworkModel {
    /// Validates the parameters and checks that the inner matrix is PSD.
    pub fn new(params: NetworkParameters) -> Result<Self> {
        params.validate()?;
        let mut model = Self {
            params,
            lambda_min: 0.0,
            lambda_max: 1.0,
        };
        let eig = SymmetricEigen::new(model.dense_inner_matrix());
        let lambda_min = eig.eigenvalues.min();
        let lambda_max = eig.eigenvalues.max();
        if !(lambda_max > 0.0) || lambda_min < -1e-10 * lambda_max {
            return Err(Error::Model(format!(
                "inner matrix is not positive semidefinite (eigenvalues in [{lambda_min:e}, {lambda_max:e}], {} sign)",
                model.params.sign
            )));
        }
        model.lambda_min = lambda_min;
        model.lambda_max = lambda_max;
        Ok(model)
    }

    pub fn generate(seed: u64, opts: &NetworkOptions) -> Result<Self> {
        Self::new(NetworkParameters::generate(seed, opts)?)
    }

    pub fn params(&self) -> &NetworkParameters {
        &self.params
    }

    pub fn m(&self) -> usize {
        self.params.m
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn shipments(&self) -> usize {
        self.params.m * self.params.n
    }

    pub fn control_dim(&self) -> usize {
        self.params.m + self.params.n
    }

    pub fn inner_lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn inner_lambda_min(&self) -> f64 {
        self.lambda_min
    }

    /// `A a`: total shipped out of each supply market.
    pub fn supply_totals(&self, a: &Vector) -> Vector {
        let n = self.params.n;
        Vector::from_fn(self.params.m, |j, _| a.rows(j * n, n).sum())
    }

    /// `B a`: total received by each demand market.
    pub fn demand_totals(&self, a: &Vector) -> Vector {
        let (m, n) = (self.params.m, self.params.n);
        Vector::from_fn(n, |i, _| (0..m).map(|j| a[j * n + i]).sum())
    }

    /// Dense `A` (m x mn), for checks and export.
    pub fn aggregation_a(&self) -> Matrix {
        let (m, n) = (self.params.m, self.params.n);
        Matrix::from_fn(m, m * n, |j, k| if k / n == j { 1.0 } else { 0.0 })
    }

    /// Dense `B` (n x mn).
    pub fn aggregation_b(&self) -> Matrix {
        let (m, n) = (self.params.m, self.params.n);
        Matrix::from_fn(n, m * n, |i, k| if k % n == i { 1.0 } else { 0.0 })
    }

    fn demand_sign(&self) -> f64 {
        match self.params.sign {
            InnerSign::Standard => 1.0,
            InnerSign::Literal => -1.0,
        }
    }

    /// `out = M a` without forming `M`.
    pub fn apply_inner(&self, a: &Vector, out: &mut Vector) {
        let p = &self.params;
        let n = p.n;
        let supply = self.supply_totals(a).component_mul(&p.a_coef);
        let demand = self.demand_totals(a).component_mul(&p.rho) * self.demand_sign();
        for j in 0..p.m {
            for i in 0..n {
                let k = j * n + i;
                out[k] = p.c[k] * a[k] + supply[j] + demand[i];
            }
        }
    }

    /// `r(x)` for the control `x = [x1; x2]`.
    pub fn inner_offset(&self, x: &Vector) -> Result<Vector> {
        check_dim("network control", self.control_dim(), x.len())?;
        let p = &self.params;
        let (m, n) = (p.m, p.n);
        let control = -self.demand_sign();
        let supply = Vector::from_fn(m, |j, _| p.a0[j] + p.alpha[j] + control * x[j]);
        let demand = Vector::from_fn(n, |i, _| p.rho0[i] - p.beta[i] - control * x[m + i]);
        Ok(Vector::from_fn(m * n, |k, _| p.tau[k] + supply[k / n] - demand[k % n]))
    }

    pub fn dense_inner_matrix(&self) -> Matrix {
        let mn = self.shipments();
        let mut out = Matrix::zeros(mn, mn);
        let mut e = Vector::zeros(mn);
        let mut col = Vector::zeros(mn);
        for k in 0..mn {
            e[k] = 1.0;
            self.apply_inner(&e, &mut col);
            out.set_column(k, &col);
            e[k] = 0.0;
        }
        out
    }

    /// `F(x)` given the equilibrium shipments at `x`.
    pub fn aggregate(&self, a: &Vector) -> Vector {
        let supply = self.supply_totals(a);
        let demand = self.demand_totals(a);
        Vector::from_iterator(self.control_dim(), supply.iter().chain(demand.iter()).copied())
    }

    pub fn feasible_set(&self) -> Result<PolyhedronSet> {
        let p = &self.params;
        let bounds = BoxSet::new(p.f_min.clone(), p.f_max.clone())?;
        PolyhedronSet::new(bounds, p.l.clone(), p.b.clone(), None)
    }

    /// The SIVI with `G(x, xi) = [A a*(x); B a*(x)] + noise_scale * xi`,
    /// started from the zero control.
    pub fn problem(&self, noise_scale: f64) -> Result<SiviProblem> {
        self.problem_with(noise_scale, NoiseSampling::default())
    }

    pub fn problem_with(&self, noise_scale: f64, sampling: NoiseSampling) -> Result<SiviProblem> {
        let set = FeasibleSet::Polyhedron(self.feasible_set()?);
        let oracle = AdditiveGaussianOracle::new(NetworkMap::new(self.clone()), noise_scale)?.with_sampling(sampling);
        SiviProblem::new("example2", Box::new(oracle), set, Vector::zeros(self.control_dim()), None)
    }
}

/// Solves for the equilibrium shipments `a*(x)` from a cold start.
pub fn inner_equilibrium_solve(
    model: &NetworkModel,
    x: &Vector,
    tol: f64,
    max_iter: usize,
) -> Result<InnerViSolution> {
    inner_equilibrium_solve_from(model, x, None, tol, max_iter)
}

pub fn inner_equilibrium_solve_from(
    model: &NetworkModel,
    x: &Vector,
    start: Option<&Vector>,
    tol: f64,
    max_iter: usize,
) -> Result<InnerViSolution> {
    let r = model.inner_offset(x)?;
    solve_orthant_affine_vi(
        |a, out| model.apply_inner(a, out),
        &r,
        model.inner_lambda_max(),
        start,
        tol,
        max_iter,
    )
}

/// `x -> [A a*(x); B a*(x)]`. Keeps the last solve: repeated calls at the
/// same `x` reuse it and a new `x` warm-starts from it.
#[derive(Debug)]
pub struct NetworkMap {
    model: NetworkModel,
    tol: f64,
    max_iter: usize,
    last: Mutex<Option<(Vector, Vector)>>,
}

impl NetworkMap {
    pub fn new(model: NetworkModel) -> Self {
        Self::with_tolerance(model, DEFAULT_INNER_TOL, DEFAULT_INNER_MAX_ITER)
    }

    pub fn with_tolerance(model: NetworkModel, tol: f64, max_iter: usize) -> Self {
        Self {
            model,
            tol,
            max_iter,
            last: Mutex::new(None),
        }
    }

    pub fn model(&self) -> &NetworkModel {
        &self.model
    }

    pub fn shipments(&self, x: &Vector) -> Result<Vector> {
        let mut last = self.last.lock().unwrap_or_else(|e| e.into_inner());
        if let Some((cached_x, a)) = last.as_ref() {
            if cached_x == x {
                return Ok(a.clone());
            }
        }
        let start = last.as_ref().map(|(_, a)| a);
        let sol = inner_equilibrium_solve_from(&self.model, x, start, self.tol, self.max_iter)?;
        *last = Some((x.clone(), sol.a_star.clone()));
        Ok(sol.a_star)
    }
}

impl MeanMap for NetworkMap {
    fn dim(&self) -> usize {
        self.model.control_dim()
    }

    fn eval(&self, x: &Vector) -> Result<Vector> {
        let a = self.shipments(x)?;
        Ok(self.model.aggregate(&a))
    }
}

/// Draws a model from `seed` and wraps it as a unit-noise SIVI.
pub fn build_example2(seed: u64, opts: &NetworkOptions) -> Result<(SiviProblem, NetworkModel)> {
    let model = NetworkModel::generate(seed, opts)?;
    let problem = model.problem(1.0)?;
    Ok((problem, model))
}
