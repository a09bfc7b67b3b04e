//! Dense linear algebra aliases, the seeded random stream, and spectral helpers.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::{SplitMix64, Xoshiro256PlusPlus};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Identifies the generator pipeline. Bumped whenever the sample sequence
/// produced for a given `(master_seed, stream_id)` changes.
pub const RNG_VERSION: &str = "xoshiro256++/splitmix64-seeded/ziggurat-normal v1";

/// Relative asymmetry tolerated before a matrix is rejected as non-symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// A deterministic random stream addressed by `(master_seed, stream_id, lane)`.
///
/// Streams with different addresses are seeded through a SplitMix64 chain, so
/// they are statistically independent. `scalars_drawn` counts every scalar
/// handed out, which is the position used to reason about reproducibility.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: Xoshiro256PlusPlus,
    master_seed: u64,
    stream_id: u64,
    lane: u64,
    scalars_drawn: u64,
}

fn splitmix_step(state: u64) -> u64 {
    let mut sm = SplitMix64::seed_from_u64(state);
    sm.next_u64()
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self::with_lane(master_seed, stream_id, 0)
    }

    /// A stream for an auxiliary purpose (e.g. gap estimation) that must not
    /// share draws with the main stream of the same replication.
    pub fn with_lane(master_seed: u64, stream_id: u64, lane: u64) -> Self {
        let mut state = splitmix_step(master_seed);
        state = splitmix_step(state ^ stream_id);
        state = splitmix_step(state ^ lane.rotate_left(32));
        Self {
            rng: Xoshiro256PlusPlus::seed_from_u64(state),
            master_seed,
            stream_id,
            lane,
            scalars_drawn: 0,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn lane(&self) -> u64 {
        self.lane
    }

    pub fn scalars_drawn(&self) -> u64 {
        self.scalars_drawn
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.scalars_drawn += 1;
        self.rng.sample(StandardNormal)
    }

    /// Uniform draw on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.scalars_drawn += 1;
        let u: f64 = self.rng.random();
        lo + (hi - lo) * u
    }

    pub fn uniform_vector(&mut self, n: usize, lo: f64, hi: f64) -> Vector {
        Vector::from_fn(n, |_, _| self.uniform(lo, hi))
    }

    /// Adds `acc.len()` standard normal draws into `acc`, in order.
    pub fn accumulate_gaussian(&mut self, acc: &mut [f64]) {
        self.accumulate_gaussian_rounds(acc, 1);
    }

    /// Same as calling [`accumulate_gaussian`](Self::accumulate_gaussian)
    /// `rounds` times, i.e. `rounds * acc.len()` draws in order.
    pub fn accumulate_gaussian_rounds(&mut self, acc: &mut [f64], rounds: u64) {
        // a local copy keeps the generator state in registers
        let mut rng = self.rng.clone();
        for _ in 0..rounds {
            for slot in acc.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *slot += z;
            }
        }
        self.rng = rng;
        self.scalars_drawn += rounds * acc.len() as u64;
    }
}

impl RngStream {
    /// One draw distributed exactly as the sum of `count` independent
    /// standard normals, `sqrt(count) * z`. It stands in for `count` scalars,
    /// so `scalars_drawn` advances by `count`.
    pub fn gaussian_sum(&mut self, count: u64) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        self.scalars_drawn += count;
        if count == 1 {
            z
        } else {
            (count as f64).sqrt() * z
        }
    }
}

/// `n` i.i.d. standard normal draws.
pub fn gaussian_vector(rng: &mut RngStream, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.standard_normal())
}

pub fn ensure_finite(v: &Vector, context: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            context: context.to_string(),
        })
    }
}

pub fn check_symmetric(m: &Matrix) -> Result<()> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs() / scale);
        }
    }
    if worst > SYMMETRY_TOL {
        Err(Error::NotSymmetric { asymmetry: worst })
    } else {
        Ok(())
    }
}

/// Result of [`power_iteration`]: the eigenvalue estimate and unit direction.
#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: Vector,
    pub iterations: usize,
}

/// Power iteration for the largest eigenvalue of a symmetric matrix.
///
/// Starts from `e/sqrt(n)` so the result is deterministic. When Gershgorin
/// discs reach below zero, the matrix is shifted to be PSD first, so the
/// dominant eigenvalue found is the largest one rather than the largest in
/// magnitude. Stops once `||Mv - lambda v|| <= tol`.
pub fn power_iteration(m: &Matrix, tol: f64) -> Result<Eigenpair> {
    check_symmetric(m)?;
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "must be positive"));
    }
    let n = m.nrows();
    if n == 0 {
        return Err(Error::invalid("matrix", "must be non-empty"));
    }

    let gershgorin_low = (0..n)
        .map(|i| {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum();
            m[(i, i)] - off
        })
        .fold(f64::INFINITY, f64::min);
    let shift = (-gershgorin_low).max(0.0);

    let max_iter = 200 * n;
    let mut v = Vector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let mv = m * &v;
        let lambda = v.dot(&mv);
        residual = (&mv - lambda * &v).norm();
        if !residual.is_finite() {
            return Err(Error::NonFinite {
                context: "power iteration".into(),
            });
        }
        if residual <= tol {
            return Ok(Eigenpair {
                value: lambda,
                vector: v,
                iterations: it,
            });
        }
        let shifted = mv + shift * &v;
        let norm = shifted.norm();
        if norm == 0.0 {
            // v lies in the null space of a PSD matrix with zero shift
            return Ok(Eigenpair {
                value: 0.0,
                vector: v,
                iterations: it,
            });
        }
        v = shifted / norm;
    }
    Err(Error::IterationLimit {
        what: "power iteration",
        iterations: max_iter,
        residual,
    })
}

pub fn largest_eigenvalue(m: &Matrix, tol: f64) -> Result<f64> {
    power_iteration(m, tol).map(|p| p.value)
}

/// Least-squares line through `(x, y)`; returns `(slope, intercept)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("points", "need at least two paired points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("points", "abscissae are all equal"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}
