//! Closed convex feasible sets and Euclidean projection onto them.
//!
//! Boxes are projected exactly by clamping. Polyhedra (a box intersected with
//! halfspaces `Lx <= b`) are projected with Dykstra's algorithm, which cycles
//! through the exact projections onto each piece while carrying a correction
//! term per piece, and converges to the projection onto the intersection.

use crate::error::{check_dim, Error, Result};
use crate::numkit::{Matrix, RngStream, Vector};

pub const DEFAULT_PROJECTION_TOL: f64 = 1e-10;
pub const DEFAULT_PROJECTION_MAX_ITER: usize = 10_000;
/// Minimum slack of the stored interior point against every constraint.
pub const FEASIBILITY_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    lo: Vector,
    hi: Vector,
}

impl BoxSet {
    pub fn new(lo: Vector, hi: Vector) -> Result<Self> {
        check_dim("box bounds", lo.len(), hi.len())?;
        for i in 0..lo.len() {
            if lo[i].is_nan() || hi[i].is_nan() {
                return Err(Error::invalid("box", format!("NaN bound at index {i}")));
            }
            if lo[i] > hi[i] {
                return Err(Error::invalid(
                    "box",
                    format!("lo[{i}] = {} exceeds hi[{i}] = {}", lo[i], hi[i]),
                ));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn uniform(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(Vector::from_element(n, lo), Vector::from_element(n, hi))
    }

    /// The nonnegative orthant.
    pub fn orthant(n: usize) -> Self {
        Self {
            lo: Vector::zeros(n),
            hi: Vector::from_element(n, f64::INFINITY),
        }
    }

    pub fn whole_space(n: usize) -> Self {
        Self {
            lo: Vector::from_element(n, f64::NEG_INFINITY),
            hi: Vector::from_element(n, f64::INFINITY),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &Vector {
        &self.lo
    }

    pub fn hi(&self) -> &Vector {
        &self.hi
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.iter().chain(self.hi.iter()).all(|v| v.is_finite())
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .enumerate()
                .all(|(i, &v)| v >= self.lo[i] - tol && v <= self.hi[i] + tol)
    }

    pub fn project(&self, u: &Vector) -> Result<Vector> {
        check_dim("box projection", self.dim(), u.len())?;
        Ok(self.clamp(u))
    }

    fn clamp(&self, u: &Vector) -> Vector {
        Vector::from_fn(u.len(), |i, _| u[i].max(self.lo[i]).min(self.hi[i]))
    }

    fn clamp_in_place(&self, u: &mut Vector) {
        for i in 0..u.len() {
            u[i] = u[i].max(self.lo[i]).min(self.hi[i]);
        }
    }

    /// Largest amount by which `x` leaves the box.
    fn violation(&self, x: &Vector) -> f64 {
        x.iter()
            .enumerate()
            .map(|(i, &v)| (self.lo[i] - v).max(v - self.hi[i]).max(0.0))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct PolyhedronSet {
    bounds: BoxSet,
    l: Matrix,
    b: Vector,
    row_norms_sq: Vec<f64>,
    interior: Vector,
    tol: f64,
    max_iter: usize,
}

impl PolyhedronSet {
    /// Builds `{x : lo <= x <= hi, Lx <= b}`.
    ///
    /// When `interior` is `None` a point is searched for by clamping the box
    /// centre and then shifting it through the tightened halfspaces. Either
    /// way the stored point must have slack at least [`FEASIBILITY_MARGIN`].
    pub fn new(bounds: BoxSet, l: Matrix, b: Vector, interior: Option<Vector>) -> Result<Self> {
        check_dim("halfspace matrix columns", bounds.dim(), l.ncols())?;
        check_dim("halfspace rhs", l.nrows(), b.len())?;
        if l.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "halfspace data".into(),
            });
        }
        let row_norms_sq: Vec<f64> = (0..l.nrows()).map(|j| l.row(j).norm_squared()).collect();
        for (j, &nsq) in row_norms_sq.iter().enumerate() {
            if nsq == 0.0 && b[j] < 0.0 {
                return Err(Error::EmptySet(format!("row {j} reads 0 <= {}", b[j])));
            }
        }
        let mut set = Self {
            bounds,
            l,
            b,
            row_norms_sq,
            interior: Vector::zeros(0),
            tol: DEFAULT_PROJECTION_TOL,
            max_iter: DEFAULT_PROJECTION_MAX_ITER,
        };
        let point = match interior {
            Some(p) => {
                check_dim("interior point", set.dim(), p.len())?;
                p
            }
            None => set.find_interior_point().ok_or_else(|| {
                Error::EmptySet("no interior point found by clamp-then-shift search".into())
            })?,
        };
        let slack = set.min_slack(&point);
        if !(slack >= FEASIBILITY_MARGIN) {
            return Err(Error::EmptySet(format!(
                "interior point slack {slack:e} is below the margin {FEASIBILITY_MARGIN:e}"
            )));
        }
        set.interior = point;
        Ok(set)
    }

    pub fn with_tolerance(mut self, tol: f64, max_iter: usize) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::invalid("tol", "must be positive"));
        }
        if max_iter == 0 {
            return Err(Error::invalid("max_iter", "must be at least 1"));
        }
        self.tol = tol;
        self.max_iter = max_iter;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn bounds(&self) -> &BoxSet {
        &self.bounds
    }

    pub fn halfspace_matrix(&self) -> &Matrix {
        &self.l
    }

    pub fn halfspace_rhs(&self) -> &Vector {
        &self.b
    }

    pub fn interior_point(&self) -> &Vector {
        &self.interior
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn max_iter(&self) -> usize {
        self.max_iter
    }

    /// Smallest slack over finite box bounds and halfspaces (negative when violated).
    pub fn min_slack(&self, x: &Vector) -> f64 {
        let mut slack = f64::INFINITY;
        for i in 0..x.len() {
            slack = slack.min(x[i] - self.bounds.lo[i]).min(self.bounds.hi[i] - x[i]);
        }
        for j in 0..self.l.nrows() {
            if self.row_norms_sq[j] > 0.0 {
                slack = slack.min(self.b[j] - self.l.row(j).transpose().dot(x));
            }
        }
        slack
    }

    pub fn violation(&self, x: &Vector) -> f64 {
        let mut worst = self.bounds.violation(x);
        for j in 0..self.l.nrows() {
            worst = worst.max(self.l.row(j).transpose().dot(x) - self.b[j]);
        }
        worst.max(0.0)
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        x.len() == self.dim() && self.violation(x) <= tol
    }

    pub fn project(&self, u: &Vector) -> Result<Vector> {
        project_polyhedron(u, self, self.tol, self.max_iter)
    }

    fn project_halfspace(&self, j: usize, v: &mut Vector, rhs: f64) {
        let nsq = self.row_norms_sq[j];
        if nsq == 0.0 {
            return;
        }
        let row = self.l.row(j);
        let excess = row.transpose().dot(v) - rhs;
        if excess > 0.0 {
            v.axpy(-excess / nsq, &row.transpose(), 1.0);
        }
    }

    fn find_interior_point(&self) -> Option<Vector> {
        let shrink = 2.0 * FEASIBILITY_MARGIN;
        let n = self.dim();
        let lo = &self.bounds.lo;
        let hi = &self.bounds.hi;
        let mut inner_lo = Vector::zeros(n);
        let mut inner_hi = Vector::zeros(n);
        for i in 0..n {
            if hi[i] - lo[i] <= 2.0 * shrink {
                return None;
            }
            inner_lo[i] = lo[i] + shrink;
            inner_hi[i] = hi[i] - shrink;
        }
        let inner = BoxSet {
            lo: inner_lo,
            hi: inner_hi,
        };
        let mut x = Vector::from_fn(n, |i, _| match (lo[i].is_finite(), hi[i].is_finite()) {
            (true, true) => 0.5 * (lo[i] + hi[i]),
            _ => 0.0,
        });
        inner.clamp_in_place(&mut x);
        for _ in 0..1000 {
            for j in 0..self.l.nrows() {
                // rows of zeros with b >= 0 impose nothing
                self.project_halfspace(j, &mut x, self.b[j] - shrink * self.row_norms_sq[j].sqrt());
            }
            inner.clamp_in_place(&mut x);
            if self.min_slack(&x) >= FEASIBILITY_MARGIN {
                return Some(x);
            }
        }
        None
    }
}

/// Projection onto `set` by Dykstra's algorithm.
///
/// Terminates when one full sweep moves the iterate by at most `tol`, the
/// correction terms have settled to within `tol`, and the constraint violation
/// is at most `tol`.
pub fn project_polyhedron(u: &Vector, set: &PolyhedronSet, tol: f64, max_iter: usize) -> Result<Vector> {
    check_dim("polyhedron projection", set.dim(), u.len())?;
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "must be positive"));
    }
    let q = set.l.nrows();
    if q == 0 {
        return Ok(set.bounds.clamp(u));
    }
    let n = set.dim();
    let mut x = u.clone();
    // one correction per piece: index 0 is the box, 1..=q the halfspaces
    let mut corrections = vec![Vector::zeros(n); q + 1];
    let mut prev = x.clone();
    let mut work = Vector::zeros(n);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        prev.copy_from(&x);
        let mut correction_shift = 0.0;

        work.copy_from(&x);
        work += &corrections[0];
        let mut y = work.clone();
        set.bounds.clamp_in_place(&mut y);
        let next = &work - &y;
        correction_shift += (&next - &corrections[0]).norm_squared();
        corrections[0] = next;
        x.copy_from(&y);

        for j in 0..q {
            work.copy_from(&x);
            work += &corrections[j + 1];
            y.copy_from(&work);
            set.project_halfspace(j, &mut y, set.b[j]);
            let next = &work - &y;
            correction_shift += (&next - &corrections[j + 1]).norm_squared();
            corrections[j + 1] = next;
            x.copy_from(&y);
        }

        let step = (&x - &prev).norm();
        if !step.is_finite() {
            return Err(Error::NonFinite {
                context: "Dykstra projection".into(),
            });
        }
        residual = step.max(correction_shift.sqrt()).max(set.violation(&x));
        if residual <= tol {
            return Ok(polish_active_set(u, set, &x, tol).unwrap_or(x));
        }
    }
    Err(Error::IterationLimit {
        what: "Dykstra projection",
        iterations: max_iter,
        residual,
    })
}

/// Dykstra converges linearly, so its output is only accurate to about the
/// stopping tolerance. This reads the active bounds and halfspaces off the
/// approximate projection `x`, solves the KKT system of that active set
/// exactly and returns the result if it satisfies every KKT condition, which
/// certifies it as the projection. `None` keeps `x`.
fn polish_active_set(u: &Vector, set: &PolyhedronSet, x: &Vector, tol: f64) -> Option<Vector> {
    const ACTIVE: f64 = 1e-7;
    let n = set.dim();
    let scale = 1.0 + u.amax().max(x.amax());
    let (lo, hi) = (&set.bounds.lo, &set.bounds.hi);
    // 0 free, 1 at the lower bound, 2 at the upper bound
    let fixed: Vec<u8> = (0..n)
        .map(|i| {
            if x[i] - lo[i] <= ACTIVE * (1.0 + lo[i].abs()) {
                1
            } else if hi[i] - x[i] <= ACTIVE * (1.0 + hi[i].abs()) {
                2
            } else {
                0
            }
        })
        .collect();
    let active: Vec<usize> = (0..set.l.nrows())
        .filter(|&j| {
            let nrm = set.row_norms_sq[j].sqrt();
            nrm > 0.0 && set.b[j] - set.l.row(j).transpose().dot(x) <= ACTIVE * nrm * scale
        })
        .collect();

    let mut y = Vector::from_fn(n, |i, _| match fixed[i] {
        1 => lo[i],
        2 => hi[i],
        _ => u[i],
    });
    let mut shift = Vector::zeros(n);
    let mut lambda = Vector::zeros(active.len());
    if !active.is_empty() {
        let free_rows = Matrix::from_fn(active.len(), n, |r, i| if fixed[i] == 0 { set.l[(active[r], i)] } else { 0.0 });
        let gram = &free_rows * free_rows.transpose();
        let rhs = Vector::from_fn(active.len(), |r, _| set.l.row(active[r]).transpose().dot(&y) - set.b[active[r]]);
        lambda = gram.cholesky()?.solve(&rhs);
        shift = Matrix::from_fn(n, active.len(), |i, r| set.l[(active[r], i)]) * &lambda;
        for i in 0..n {
            if fixed[i] == 0 {
                y[i] -= shift[i];
            }
        }
    }

    let kkt_tol = tol * scale;
    let multipliers_ok = lambda.iter().all(|&v| v >= -kkt_tol);
    let bounds_ok = (0..n).all(|i| {
        let unconstrained = u[i] - shift[i];
        match fixed[i] {
            1 => unconstrained <= lo[i] + kkt_tol,
            2 => unconstrained >= hi[i] - kkt_tol,
            _ => y[i] >= lo[i] - kkt_tol && y[i] <= hi[i] + kkt_tol,
        }
    });
    let halfspaces_ok = (0..set.l.nrows()).all(|j| set.l.row(j).transpose().dot(&y) <= set.b[j] + kkt_tol);
    if !(multipliers_ok && bounds_ok && halfspaces_ok) || !y.iter().all(|v| v.is_finite()) {
        return None;
    }
    set.bounds.clamp_in_place(&mut y);
    Some(y)
}

pub fn project_box(u: &Vector, set: &BoxSet) -> Result<Vector> {
    set.project(u)
}

/// The feasible set `X` of a problem.
#[derive(Debug, Clone)]
pub enum FeasibleSet {
    Box(BoxSet),
    Polyhedron(PolyhedronSet),
}

impl FeasibleSet {
    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::Box(b) => b.dim(),
            FeasibleSet::Polyhedron(p) => p.dim(),
        }
    }

    pub fn project(&self, u: &Vector) -> Result<Vector> {
        match self {
            FeasibleSet::Box(b) => b.project(u),
            FeasibleSet::Polyhedron(p) => p.project(u),
        }
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        match self {
            FeasibleSet::Box(b) => b.contains(x, tol),
            FeasibleSet::Polyhedron(p) => p.contains(x, tol),
        }
    }

    pub fn bounds(&self) -> &BoxSet {
        match self {
            FeasibleSet::Box(b) => b,
            FeasibleSet::Polyhedron(p) => p.bounds(),
        }
    }

    /// A random point of the set, for sampled residual checks. Requires a
    /// bounded box. Polyhedra are sampled by rejection from their box.
    pub fn random_point(&self, rng: &mut RngStream) -> Result<Vector> {
        let bounds = self.bounds();
        if !bounds.is_bounded() {
            return Err(Error::Unsupported("sampling from an unbounded set".into()));
        }
        let draw = |rng: &mut RngStream| {
            Vector::from_fn(bounds.dim(), |i, _| rng.uniform(bounds.lo[i], bounds.hi[i]))
        };
        match self {
            FeasibleSet::Box(_) => Ok(draw(rng)),
            FeasibleSet::Polyhedron(p) => {
                for _ in 0..10_000 {
                    let x = draw(rng);
                    if p.violation(&x) == 0.0 {
                        return Ok(x);
                    }
                }
                // thin polyhedron: pull a box sample towards the interior point
                let x = draw(rng);
                let mut t = 0.5;
                loop {
                    let y = p.interior_point() + t * (&x - p.interior_point());
                    if p.violation(&y) == 0.0 {
                        return Ok(y);
                    }
                    t *= 0.5;
                }
            }
        }
    }
}
