//! The variance-reduced inverse projected gradient iteration (VR-IPG), the
//! gap function used to monitor it, and diagnostics derived from the
//! convergence theory.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{check_dim, Error, Result};
use crate::feasible::FeasibleSet;
use crate::numkit::{check_symmetric, ensure_finite, power_iteration, Matrix, RngStream, Vector};
use crate::oracle::{batch_mean, BatchSchedule};
use crate::problems::SiviProblem;

/// Iterates whose norm exceeds this are treated as diverged.
pub const DIVERGENCE_NORM: f64 = 1e12;
/// Random-stream lane reserved for Monte Carlo gap estimates.
pub const GAP_LANE: u64 = 1;

/// How `F(x_k)` is obtained when the gap is recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapEvalMode {
    /// Use the oracle's exact mean; falls back to a Monte Carlo batch of
    /// the default size when the oracle has none.
    ExactMean,
    /// A fresh batch, independent of the update batches. `None` means
    /// `10 * N_k`. The plug-in gap from this estimate is biased by O(1/sqrt(M)).
    MonteCarlo(Option<u64>),
}

impl fmt::Display for GapEvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GapEvalMode::ExactMean => f.write_str("exact"),
            GapEvalMode::MonteCarlo(None) => f.write_str("mc"),
            GapEvalMode::MonteCarlo(Some(m)) => write!(f, "mc:{m}"),
        }
    }
}

impl FromStr for GapEvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(GapEvalMode::ExactMean),
            "mc" => Ok(GapEvalMode::MonteCarlo(None)),
            _ => {
                let m = s
                    .strip_prefix("mc:")
                    .and_then(|m| m.parse::<u64>().ok())
                    .filter(|&m| m > 0)
                    .ok_or_else(|| Error::Parse(format!("gap mode `{s}` (expected exact, mc or mc:M)")))?;
                Ok(GapEvalMode::MonteCarlo(Some(m)))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Constant step parameter; the update moves by `1/eta` times the residual.
    pub eta: f64,
    /// Number of iterations T. Zero only records the starting point.
    pub horizon: usize,
    pub schedule: BatchSchedule,
    pub master_seed: u64,
    /// Replication index; selects an independent random stream.
    pub stream_id: u64,
    pub gap_eval_mode: GapEvalMode,
    pub record_every: usize,
}

impl SolverConfig {
    pub fn new(eta: f64, horizon: usize, schedule: BatchSchedule) -> Self {
        Self {
            eta,
            horizon,
            schedule,
            master_seed: 0,
            stream_id: 0,
            gap_eval_mode: GapEvalMode::ExactMean,
            record_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::invalid("eta", "must be positive and finite"));
        }
        if self.record_every == 0 {
            return Err(Error::invalid("record_every", "must be at least 1"));
        }
        Ok(())
    }

    /// Iterations at which the trace records, always including 0 and T.
    pub fn recorded_iterations(&self) -> Vec<usize> {
        let mut ks: Vec<usize> = (0..=self.horizon).step_by(self.record_every.max(1)).collect();
        if ks.last() != Some(&self.horizon) {
            ks.push(self.horizon);
        }
        ks
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub k: usize,
    pub x: Vector,
    pub gap_norm: f64,
    pub err: Option<f64>,
    pub cumulative_samples: u64,
    /// Seconds since the solve started; not part of any exported file.
    pub wall_time: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<Record>,
}

impl Trace {
    pub fn last(&self) -> Option<&Record> {
        self.records.last()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }
}

/// `H(x, eta) = (F(x) - P_X(F(x) - eta x)) / eta` and its Euclidean norm.
pub fn gap(x: &Vector, eta: f64, f_of_x: &Vector, set: &FeasibleSet) -> Result<(Vector, f64)> {
    if !(eta > 0.0) {
        return Err(Error::invalid("eta", "must be positive"));
    }
    check_dim("gap argument", set.dim(), x.len())?;
    check_dim("gap map value", set.dim(), f_of_x.len())?;
    let projected = set.project(&(f_of_x - eta * x))?;
    let h = (f_of_x - projected) / eta;
    let norm = h.norm();
    Ok((h, norm))
}

/// One VR-IPG update from the batch mean `g_bar` at `x`.
///
/// Returns `(z, x_next)` with `z = P_X(g_bar - eta x)` and
/// `x_next = x - (g_bar - z) / eta`.
pub fn vr_ipg_step(x: &Vector, g_bar: &Vector, eta: f64, set: &FeasibleSet) -> Result<(Vector, Vector)> {
    if !(eta > 0.0) {
        return Err(Error::invalid("eta", "must be positive"));
    }
    check_dim("step iterate", set.dim(), x.len())?;
    check_dim("step batch mean", set.dim(), g_bar.len())?;
    let z = set.project(&(g_bar - eta * x))?;
    let x_next = x - (g_bar - &z) / eta;
    Ok((z, x_next))
}

pub fn solve(problem: &SiviProblem, config: &SolverConfig) -> Result<Trace> {
    config.validate()?;
    let n = problem.dim();
    check_dim("starting point", n, problem.x0.len())?;
    ensure_finite(&problem.x0, "starting point")?;

    let oracle = problem.oracle.as_ref();
    let set = &problem.set;
    let mut rng = RngStream::new(config.master_seed, config.stream_id);
    let mut gap_rng = RngStream::with_lane(config.master_seed, config.stream_id, GAP_LANE);
    let started = Instant::now();

    let mut x = problem.x0.clone();
    let mut samples: u64 = 0;
    let mut trace = Trace::default();
    let every = config.record_every;

    for k in 0..=config.horizon {
        if k % every == 0 || k == config.horizon {
            let f = match config.gap_eval_mode {
                GapEvalMode::ExactMean if oracle.has_exact_mean() => oracle
                    .exact_mean(&x)
                    .ok_or_else(|| Error::Unsupported("oracle lost its exact mean".into()))??,
                mode => {
                    let m = match mode {
                        GapEvalMode::MonteCarlo(Some(m)) => m,
                        _ => config.schedule.batch_size(k).saturating_mul(10),
                    };
                    samples = samples.saturating_add(m);
                    batch_mean(oracle, &x, m, &mut gap_rng)?
                }
            };
            let (_, gap_norm) = gap(&x, config.eta, &f, set)?;
            trace.records.push(Record {
                k,
                x: x.clone(),
                gap_norm,
                err: problem.x_star.as_ref().map(|xs| (&x - xs).norm()),
                cumulative_samples: samples,
                wall_time: started.elapsed().as_secs_f64(),
            });
        }
        if k == config.horizon {
            break;
        }

        let batch = config.schedule.batch_size(k);
        let g_bar = batch_mean(oracle, &x, batch, &mut rng)?;
        let (_, next) = vr_ipg_step(&x, &g_bar, config.eta, set)?;
        samples = samples.saturating_add(batch);
        let norm = next.norm();
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            return Err(Error::Diverged {
                iteration: k + 1,
                norm,
            });
        }
        x = next;
    }
    Ok(trace)
}

/// Upper bound on `min_k E||H(x_k, eta)||^2` over the first `T` iterations
/// for the schedule `N_k = ceil((k+1)^(2+2 delta))`.
pub fn theoretical_rate_bound(
    horizon: usize,
    eta: f64,
    mu: f64,
    nu: f64,
    delta: f64,
    dist0_sq: f64,
    xstar_norm: f64,
) -> Result<f64> {
    if horizon == 0 {
        return Err(Error::invalid("T", "must be at least 1"));
    }
    if !(mu > 0.0) || !(eta > 0.0) {
        return Err(Error::invalid("eta/mu", "must be positive"));
    }
    if !(eta > 1.0 / (2.0 * mu)) {
        return Err(Error::invalid(
            "eta",
            format!("bound needs eta > 1/(2 mu) = {}", 1.0 / (2.0 * mu)),
        ));
    }
    if !(delta > 0.0) {
        return Err(Error::invalid("delta", "must be positive"));
    }
    if !(nu >= 0.0) || !(dist0_sq >= 0.0) || !(xstar_norm >= 0.0) {
        return Err(Error::invalid("nu/dist0_sq/xstar_norm", "must be nonnegative"));
    }
    let pi_sq = std::f64::consts::PI * std::f64::consts::PI;
    let numerator =
        dist0_sq + pi_sq * nu * nu / (eta * eta) + 2.0 * nu * xstar_norm * (1.0 + 1.0 / delta) / eta;
    Ok(numerator / (horizon as f64 * (1.0 - 1.0 / (2.0 * eta * mu))))
}

/// Largest violation of the noise-free one-step descent inequality
/// `||x_{k+1}-x*||^2 <= ||x_k-x*||^2 - (1 - 1/(2 eta mu)) ||H(x_k)||^2`
/// along a trace recorded at every iteration.
pub fn check_one_step_descent(trace: &Trace, eta: f64, mu: f64) -> Result<f64> {
    if !(mu > 0.0) || !(eta > 1.0 / (2.0 * mu)) {
        return Err(Error::invalid("eta", "descent check needs eta > 1/(2 mu)"));
    }
    let coef = 1.0 - 1.0 / (2.0 * eta * mu);
    let mut worst = f64::NEG_INFINITY;
    for pair in trace.records.windows(2) {
        let (cur, next) = (&pair[0], &pair[1]);
        if next.k != cur.k + 1 {
            return Err(Error::Unsupported(
                "descent check needs a trace recorded at every iteration".into(),
            ));
        }
        let (Some(e0), Some(e1)) = (cur.err, next.err) else {
            return Err(Error::Unsupported("trace carries no distance to a known solution".into()));
        };
        worst = worst.max(e1 * e1 - e0 * e0 + coef * cur.gap_norm * cur.gap_norm);
    }
    if worst == f64::NEG_INFINITY {
        if trace.records.first().is_some_and(|r| r.err.is_none()) {
            return Err(Error::Unsupported("trace carries no distance to a known solution".into()));
        }
        worst = 0.0;
    }
    Ok(worst)
}

/// Co-coercivity modulus `1/lambda_max(A)` of `x -> Ax + d` for symmetric PSD `A`.
pub fn estimate_cocoercivity_linear(a: &Matrix) -> Result<f64> {
    check_symmetric(a)?;
    let tol = 1e-12 * a.amax().max(1.0);
    let top = power_iteration(a, tol)?.value;
    if top <= 0.0 {
        // constant maps are co-coercive with every modulus
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / top)
}

/// `min` over `samples` random `y in X` of `<y - F(x), x>`. Nonnegative
/// (up to sampling) exactly when `x` solves the inverse VI and `F(x) in X`.
pub fn sampled_ivi_residual(
    set: &FeasibleSet,
    x: &Vector,
    f_of_x: &Vector,
    samples: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let y = set.random_point(rng)?;
        worst = worst.min((y - f_of_x).dot(x));
    }
    Ok(worst)
}
