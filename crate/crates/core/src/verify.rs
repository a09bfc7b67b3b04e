//! Runtime self-checks behind `sivi verify`. The reference solvers here are
//! brute-force active-set enumerations, unrelated to the iterative methods
//! they check, and only practical in small dimensions.

use std::fmt;

use crate::error::{Error, Result};
use crate::feasible::{BoxSet, FeasibleSet, PolyhedronSet};
use crate::numkit::{Matrix, RngStream, Vector};
use crate::oracle::{verify_variance_decay, BatchSchedule};
use crate::problems::{build_example1_with_noise, natural_map_residual, solve_dense_affine_vi, Example1Spec};
use crate::solver::{check_one_step_descent, estimate_cocoercivity_linear, sampled_ivi_residual, solve, SolverConfig};

const ACTIVE_TOL: f64 = 1e-9;
const VERIFY_SEED: u64 = 20_240_917;

/// Euclidean projection of `u` onto `{y : G y <= h}` by enumerating every
/// candidate active set of at most `dim` rows. Returns `None` when no
/// candidate satisfies the KKT conditions (empty set).
pub fn enumerate_projection(u: &Vector, g: &Matrix, h: &Vector) -> Option<Vector> {
    let (rows, dim) = g.shape();
    assert!(rows < 32, "enumeration is limited to fewer than 32 constraints");
    let feasible = |y: &Vector| (g * y - h).iter().all(|&s| s <= ACTIVE_TOL);
    if feasible(u) {
        return Some(u.clone());
    }
    let mut best: Option<(f64, Vector)> = None;
    for mask in 1u32..(1u32 << rows) {
        let active: Vec<usize> = (0..rows).filter(|i| mask & (1 << i) != 0).collect();
        if active.len() > dim {
            continue;
        }
        let ga = Matrix::from_fn(active.len(), dim, |i, j| g[(active[i], j)]);
        let ha = Vector::from_fn(active.len(), |i, _| h[active[i]]);
        let gram = &ga * ga.transpose();
        let Some(lambda) = gram.lu().solve(&(&ga * u - ha)) else {
            continue;
        };
        if lambda.iter().any(|&l| l < -ACTIVE_TOL) {
            continue;
        }
        let y = u - ga.transpose() * lambda;
        if !feasible(&y) {
            continue;
        }
        let d = (&y - u).norm_squared();
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, y));
        }
    }
    best.map(|(_, y)| y)
}

/// Stacks a box and extra halfspaces into `G y <= h`, skipping infinite bounds.
pub fn box_and_halfspaces(bounds: &BoxSet, l: &Matrix, b: &Vector) -> (Matrix, Vector) {
    let n = bounds.dim();
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..n {
        let mut e = vec![0.0; n];
        if bounds.hi()[i].is_finite() {
            e[i] = 1.0;
            rows.push((e.clone(), bounds.hi()[i]));
        }
        if bounds.lo()[i].is_finite() {
            e[i] = -1.0;
            rows.push((e, -bounds.lo()[i]));
        }
    }
    for i in 0..l.nrows() {
        rows.push((l.row(i).iter().copied().collect(), b[i]));
    }
    let g = Matrix::from_fn(rows.len(), n, |i, j| rows[i].0[j]);
    let h = Vector::from_fn(rows.len(), |i, _| rows[i].1);
    (g, h)
}

/// Solves the LCP `a >= 0, Ma + r >= 0, a'(Ma + r) = 0` by enumerating
/// supports. Returns the first solution found.
pub fn enumerate_lcp(m: &Matrix, r: &Vector) -> Option<Vector> {
    let n = r.len();
    assert!(n < 24, "enumeration is limited to fewer than 24 variables");
    for mask in 0u32..(1u32 << n) {
        let support: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let mut a = Vector::zeros(n);
        if !support.is_empty() {
            let mss = Matrix::from_fn(support.len(), support.len(), |i, j| m[(support[i], support[j])]);
            let rs = Vector::from_fn(support.len(), |i, _| -r[support[i]]);
            let Some(sol) = mss.lu().solve(&rs) else {
                continue;
            };
            if sol.iter().any(|&v| v < -ACTIVE_TOL) {
                continue;
            }
            for (k, &i) in support.iter().enumerate() {
                a[i] = sol[k].max(0.0);
            }
        }
        let w = m * &a + r;
        if w.iter().all(|&v| v >= -ACTIVE_TOL) {
            return Some(a);
        }
    }
    None
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &'static str, outcome: Result<(bool, String)>) {
        let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        self.checks.push(Check { name, passed, detail });
    }
}

pub fn run_all() -> VerifyReport {
    let mut report = VerifyReport::default();
    report.push("box projection", check_box_projection());
    report.push("polyhedral projection", check_polyhedral_projection());
    report.push("inner affine VI", check_inner_vi());
    report.push("variance decay", check_variance_decay());
    report.push("deterministic recovery", check_deterministic_recovery());
    report.push("solution residual", check_solution_residual());
    report
}

fn check_box_projection() -> Result<(bool, String)> {
    let set = Example1Spec::feasible_set();
    let mut rng = RngStream::new(VERIFY_SEED, 0);
    let mut worst_obtuse = f64::NEG_INFINITY;
    let mut worst_idem = 0.0f64;
    let mut worst_expansion = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let u = rng.uniform_vector(3, -20.0, 20.0);
        let v = rng.uniform_vector(3, -20.0, 20.0);
        let pu = set.project(&u)?;
        let pv = set.project(&v)?;
        if !set.contains(&pu, 0.0) {
            return Ok((false, format!("projection of {u:?} left the box")));
        }
        worst_idem = worst_idem.max((set.project(&pu)? - &pu).amax());
        worst_expansion = worst_expansion.max((&pu - &pv).norm() - (&u - &v).norm());
        let y = set.random_point(&mut rng)?;
        worst_obtuse = worst_obtuse.max((&u - &pu).dot(&(y - &pu)));
    }
    let passed = worst_idem == 0.0 && worst_expansion <= 1e-12 && worst_obtuse <= 1e-9;
    Ok((
        passed,
        format!("idempotence {worst_idem:.1e}, expansion {worst_expansion:.1e}, obtuse {worst_obtuse:.1e}"),
    ))
}

fn check_polyhedral_projection() -> Result<(bool, String)> {
    let mut rng = RngStream::new(VERIFY_SEED, 1);
    let bounds = BoxSet::uniform(3, -1.0, 2.0)?;
    let l = Matrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 1.0, -2.0, 0.5]);
    let b = Vector::from_row_slice(&[2.0, 1.0]);
    let set = PolyhedronSet::new(bounds.clone(), l.clone(), b.clone(), None)?;
    let (g, h) = box_and_halfspaces(&bounds, &l, &b);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let u = rng.uniform_vector(3, -5.0, 5.0);
        let reference = enumerate_projection(&u, &g, &h)
            .ok_or_else(|| Error::EmptySet("reference projection found no KKT point".into()))?;
        worst = worst.max((set.project(&u)? - reference).amax());
    }
    Ok((worst <= 1e-8, format!("max deviation from enumeration {worst:.2e}")))
}

fn random_psd(rng: &mut RngStream, n: usize) -> Matrix {
    let q = Matrix::from_fn(n, n, |_, _| rng.uniform(-1.0, 1.0));
    &q * q.transpose() + Matrix::identity(n, n) * 0.1
}

fn check_inner_vi() -> Result<(bool, String)> {
    let mut rng = RngStream::new(VERIFY_SEED, 2);
    let mut worst_dev = 0.0f64;
    let mut worst_res = 0.0f64;
    for _ in 0..50 {
        let m = random_psd(&mut rng, 6);
        let r = rng.uniform_vector(6, -2.0, 2.0);
        let sol = solve_dense_affine_vi(&m, &r, 1e-11, 1_000_000)?;
        let reference =
            enumerate_lcp(&m, &r).ok_or_else(|| Error::Model("reference LCP has no solution".into()))?;
        worst_dev = worst_dev.max((&sol.a_star - reference).amax());
        worst_res = worst_res.max(natural_map_residual(&sol.a_star, &(&m * &sol.a_star + &r)));
    }
    Ok((
        worst_dev <= 1e-8 && worst_res <= 1e-10,
        format!("max deviation {worst_dev:.2e}, max residual {worst_res:.2e}"),
    ))
}

fn check_variance_decay() -> Result<(bool, String)> {
    let problem = build_example1_with_noise(1.0);
    let mut rng = RngStream::new(VERIFY_SEED, 3);
    let decay = verify_variance_decay(
        problem.oracle.as_ref(),
        &Vector::zeros(3),
        &[10, 100, 1000, 10_000],
        100,
        &mut rng,
    )?;
    let passed = (decay.slope + 1.0).abs() <= 0.1;
    Ok((passed, format!("log-log slope {:.3}, nu estimate {:.3}", decay.slope, decay.nu_estimate())))
}

fn check_deterministic_recovery() -> Result<(bool, String)> {
    let problem = build_example1_with_noise(0.0);
    let mu = estimate_cocoercivity_linear(&Example1Spec::matrix())?;
    let config = SolverConfig::new(4.0, 200, BatchSchedule::new(0.5, Some(1))?);
    let trace = solve(&problem, &config)?;
    let last = trace.last().ok_or_else(|| Error::Model("empty trace".into()))?;
    let err = last.err.unwrap_or(f64::INFINITY);
    let descent = check_one_step_descent(&trace, 4.0, mu)?;
    Ok((
        err <= 1e-6 && descent <= 1e-10,
        format!("final error {err:.2e}, worst descent violation {descent:.2e}"),
    ))
}

fn check_solution_residual() -> Result<(bool, String)> {
    let set: FeasibleSet = Example1Spec::feasible_set();
    let x_star = Example1Spec::solution();
    let f = Example1Spec::matrix() * &x_star + Example1Spec::offset();
    let mut rng = RngStream::new(VERIFY_SEED, 4);
    let worst = sampled_ivi_residual(&set, &x_star, &f, 10_000, &mut rng)?;
    Ok((
        set.contains(&f, 1e-12) && worst >= -1e-12,
        format!("min <y - F(x*), x*> over 10000 samples {worst:.3e}"),
    ))
}
