//! Stochastic first-order oracles, mini-batch averaging and the increasing
//! batch-size schedule.

use std::fmt;
use std::str::FromStr;

use crate::error::{check_dim, Error, Result};
use crate::numkit::{ensure_finite, linear_fit, Matrix, RngStream, Vector};

/// One noisy evaluation `G(x, xi)` per call, optionally with the exact mean
/// map `F(x) = E[G(x, xi)]`.
pub trait StochasticOracle: Send + Sync {
    fn dim(&self) -> usize;

    /// A single draw `G(x, xi)`.
    fn sample(&self, x: &Vector, rng: &mut RngStream) -> Result<Vector>;

    /// `F(x)` when it is available in closed form (or by a deterministic solve).
    fn exact_mean(&self, _x: &Vector) -> Option<Result<Vector>> {
        None
    }

    fn has_exact_mean(&self) -> bool;

    /// Average of `n` independent draws. Implementations must consume the
    /// same random scalars as `n` consecutive calls to [`sample`](Self::sample).
    fn batch_mean(&self, x: &Vector, n: u64, rng: &mut RngStream) -> Result<Vector> {
        let mut sum = Vector::zeros(self.dim());
        for draw in 0..n {
            let g = self.sample(x, rng)?;
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("oracle draw {draw}"),
                });
            }
            sum += g;
        }
        Ok(sum / n as f64)
    }
}

/// A deterministic map `F`, evaluated exactly.
pub trait MeanMap: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &Vector) -> Result<Vector>;
}

/// `F(x) = Mx + d`.
#[derive(Debug, Clone)]
pub struct AffineMap {
    pub matrix: Matrix,
    pub offset: Vector,
}

impl AffineMap {
    pub fn new(matrix: Matrix, offset: Vector) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::NotSquare {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
            });
        }
        check_dim("affine offset", matrix.nrows(), offset.len())?;
        Ok(Self { matrix, offset })
    }
}

impl MeanMap for AffineMap {
    fn dim(&self) -> usize {
        self.offset.len()
    }

    fn eval(&self, x: &Vector) -> Result<Vector> {
        check_dim("affine map argument", self.dim(), x.len())?;
        Ok(&self.matrix * x + &self.offset)
    }
}

/// How an additive Gaussian oracle produces the noise of a batch mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseSampling {
    /// Sums `N * n` individual standard normal draws.
    PerDraw,
    /// Draws the per-coordinate sum of the `N` normals directly as
    /// `sqrt(N) * z`. Same distribution as `PerDraw`, O(n) instead of O(N n);
    /// identical to it when `N = 1`.
    #[default]
    Aggregated,
}

impl fmt::Display for NoiseSampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseSampling::PerDraw => "per-draw",
            NoiseSampling::Aggregated => "aggregated",
        })
    }
}

impl FromStr for NoiseSampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-draw" => Ok(NoiseSampling::PerDraw),
            "aggregated" => Ok(NoiseSampling::Aggregated),
            _ => Err(Error::Parse(format!("sampling `{s}` (expected per-draw or aggregated)"))),
        }
    }
}

/// `G(x, xi) = F(x) + scale * xi` with `xi` standard Gaussian. A zero scale
/// gives the noise-free oracle, which never touches the random stream.
#[derive(Debug, Clone)]
pub struct AdditiveGaussianOracle<F> {
    mean: F,
    noise_scale: f64,
    sampling: NoiseSampling,
}

impl<F: MeanMap> AdditiveGaussianOracle<F> {
    pub fn new(mean: F, noise_scale: f64) -> Result<Self> {
        if !(noise_scale >= 0.0) || !noise_scale.is_finite() {
            return Err(Error::invalid("noise_scale", "must be finite and nonnegative"));
        }
        Ok(Self {
            mean,
            noise_scale,
            sampling: NoiseSampling::default(),
        })
    }

    pub fn with_sampling(mut self, sampling: NoiseSampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn sampling(&self) -> NoiseSampling {
        self.sampling
    }

    pub fn mean_map(&self) -> &F {
        &self.mean
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }
}

impl<F: MeanMap> StochasticOracle for AdditiveGaussianOracle<F> {
    fn dim(&self) -> usize {
        self.mean.dim()
    }

    fn sample(&self, x: &Vector, rng: &mut RngStream) -> Result<Vector> {
        let mut g = self.mean.eval(x)?;
        if self.noise_scale > 0.0 {
            for v in g.iter_mut() {
                *v += self.noise_scale * rng.standard_normal();
            }
        }
        Ok(g)
    }

    fn exact_mean(&self, x: &Vector) -> Option<Result<Vector>> {
        Some(self.mean.eval(x))
    }

    fn has_exact_mean(&self) -> bool {
        true
    }

    // F is evaluated once; the noise is summed in draw order or drawn as a sum.
    fn batch_mean(&self, x: &Vector, n: u64, rng: &mut RngStream) -> Result<Vector> {
        let mean = self.mean.eval(x)?;
        ensure_finite(&mean, "oracle mean")?;
        if self.noise_scale == 0.0 || n == 0 {
            return Ok(mean);
        }
        let mut noise = vec![0.0; mean.len()];
        match self.sampling {
            NoiseSampling::PerDraw => rng.accumulate_gaussian_rounds(&mut noise, n),
            NoiseSampling::Aggregated => noise.iter_mut().for_each(|v| *v = rng.gaussian_sum(n)),
        }
        let factor = self.noise_scale / n as f64;
        Ok(Vector::from_fn(mean.len(), |i, _| mean[i] + factor * noise[i]))
    }
}

/// `N_k = min(cap, ceil((k+1)^(2+2 delta)))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchSchedule {
    delta: f64,
    cap: Option<u64>,
}

impl BatchSchedule {
    pub fn new(delta: f64, cap: Option<u64>) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::invalid("delta", "must be positive and finite"));
        }
        if cap == Some(0) {
            return Err(Error::invalid("cap", "must be at least 1"));
        }
        Ok(Self { delta, cap })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn cap(&self) -> Option<u64> {
        self.cap
    }

    pub fn exponent(&self) -> f64 {
        2.0 + 2.0 * self.delta
    }

    pub fn batch_size(&self, k: usize) -> u64 {
        let base = (k + 1) as f64;
        let p = self.exponent();
        let raw = base.powf(p);
        // integral powers should not pick up a spurious +1 from rounding
        let nearest = raw.round();
        let size = if (raw - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest
        } else {
            raw.ceil()
        };
        let size = if size >= u64::MAX as f64 { u64::MAX } else { size as u64 };
        match self.cap {
            Some(cap) => size.min(cap),
            None => size,
        }
    }
}

pub fn batch_size(schedule: &BatchSchedule, k: usize) -> u64 {
    schedule.batch_size(k)
}

pub fn batch_mean(
    oracle: &dyn StochasticOracle,
    x: &Vector,
    n: u64,
    rng: &mut RngStream,
) -> Result<Vector> {
    if n == 0 {
        return Err(Error::invalid("N", "batch size must be at least 1"));
    }
    check_dim("batch mean argument", oracle.dim(), x.len())?;
    let g = oracle.batch_mean(x, n, rng)?;
    ensure_finite(&g, "batch mean")?;
    Ok(g)
}

/// Empirical check that the batch-mean error decays like `nu^2 / N`.
#[derive(Debug, Clone)]
pub struct VarianceDecay {
    pub batch_sizes: Vec<u64>,
    /// Mean squared deviation of the batch mean from the exact mean, per size.
    pub mean_sq_dev: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Set when every deviation is zero; slope and intercept are then NaN.
    pub degenerate: bool,
}

impl VarianceDecay {
    /// `nu` such that `E||w||^2 ~ nu^2 / N`, read off the fitted intercept.
    pub fn nu_estimate(&self) -> f64 {
        if self.degenerate {
            0.0
        } else {
            (0.5 * self.intercept).exp()
        }
    }
}

pub fn verify_variance_decay(
    oracle: &dyn StochasticOracle,
    x: &Vector,
    batch_sizes: &[u64],
    reps: usize,
    rng: &mut RngStream,
) -> Result<VarianceDecay> {
    if !oracle.has_exact_mean() {
        return Err(Error::Unsupported(
            "variance decay check needs the exact mean map".into(),
        ));
    }
    if batch_sizes.len() < 3 || batch_sizes.windows(2).any(|w| w[0] >= w[1]) || batch_sizes[0] == 0 {
        return Err(Error::invalid(
            "Ns",
            "need at least three strictly increasing positive batch sizes",
        ));
    }
    if reps < 30 {
        return Err(Error::invalid("reps", "need at least 30 repetitions"));
    }
    let exact = oracle
        .exact_mean(x)
        .ok_or_else(|| Error::Unsupported("exact mean unavailable".into()))??;
    let mut msd = Vec::with_capacity(batch_sizes.len());
    for &n in batch_sizes {
        let mut acc = 0.0;
        for _ in 0..reps {
            let g = batch_mean(oracle, x, n, rng)?;
            acc += (g - &exact).norm_squared();
        }
        msd.push(acc / reps as f64);
    }
    if msd.iter().all(|&d| d == 0.0) {
        return Ok(VarianceDecay {
            batch_sizes: batch_sizes.to_vec(),
            mean_sq_dev: msd,
            slope: f64::NAN,
            intercept: f64::NAN,
            degenerate: true,
        });
    }
    if msd.iter().any(|&d| d <= 0.0) {
        return Err(Error::Unsupported(
            "some batch sizes produced zero deviation; log fit undefined".into(),
        ));
    }
    let lx: Vec<f64> = batch_sizes.iter().map(|&n| (n as f64).ln()).collect();
    let ly: Vec<f64> = msd.iter().map(|d| d.ln()).collect();
    let (slope, intercept) = linear_fit(&lx, &ly)?;
    Ok(VarianceDecay {
        batch_sizes: batch_sizes.to_vec(),
        mean_sq_dev: msd,
        slope,
        intercept,
        degenerate: false,
    })
}
