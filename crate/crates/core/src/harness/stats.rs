use std::fmt;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::problems::SiviProblem;
use crate::solver::{solve, SolverConfig, Trace};

/// Quantities summarised across replications at each recorded iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    GapNorm,
    GapSq,
    Err,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::GapNorm, Metric::GapSq, Metric::Err];

    pub fn name(self) -> &'static str {
        match self {
            Metric::GapNorm => "gap_norm",
            Metric::GapSq => "gap_sq",
            Metric::Err => "err",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation across replications.
    pub std: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsRow {
    pub k: usize,
    pub cum_samples: u64,
    pub metrics: Vec<(Metric, Summary)>,
}

impl StatsRow {
    pub fn get(&self, metric: Metric) -> Option<&Summary> {
        self.metrics.iter().find(|(m, _)| *m == metric).map(|(_, s)| s)
    }
}

/// Per-iteration means with two-sided 95% Student-t intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationStats {
    pub reps: usize,
    pub t_multiplier: f64,
    pub rows: Vec<StatsRow>,
}

impl ReplicationStats {
    pub fn row(&self, k: usize) -> Option<&StatsRow> {
        self.rows.iter().find(|r| r.k == k)
    }

    pub fn summary(&self, k: usize, metric: Metric) -> Option<&Summary> {
        self.row(k).and_then(|r| r.get(metric))
    }
}

/// `t_{0.975}(dof)`, the multiplier of a two-sided 95% interval.
pub fn t_quantile_975(dof: usize) -> Result<f64> {
    if dof == 0 {
        return Err(Error::invalid("dof", "need at least one degree of freedom"));
    }
    let dist = StudentsT::new(0.0, 1.0, dof as f64)
        .map_err(|e| Error::invalid("dof", e.to_string()))?;
    Ok(dist.inverse_cdf(0.975))
}

fn summarize(values: &[f64], t: f64) -> Summary {
    let r = values.len() as f64;
    // shifting by the first value keeps the mean exact for constant samples
    let shift = values[0];
    let mean = shift + values.iter().map(|v| v - shift).sum::<f64>() / r;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
    let std = var.sqrt();
    let half = t * std / r.sqrt();
    Summary {
        mean,
        std,
        ci_low: mean - half,
        ci_high: mean + half,
    }
}

/// Summarises traces that share their recorded iterations.
pub fn summarize_traces(traces: &[&Trace]) -> Result<ReplicationStats> {
    let reps = traces.len();
    if reps < 2 {
        return Err(Error::invalid("reps", "need at least two completed replications"));
    }
    let t = t_quantile_975(reps - 1)?;
    let first = traces[0];
    for tr in traces {
        if tr.len() != first.len() || tr.records.iter().zip(&first.records).any(|(a, b)| a.k != b.k) {
            return Err(Error::invalid("traces", "replications recorded different iterations"));
        }
    }
    let mut rows = Vec::with_capacity(first.len());
    for (idx, rec) in first.records.iter().enumerate() {
        let column = |f: &dyn Fn(&crate::solver::Record) -> Option<f64>| -> Option<Vec<f64>> {
            traces.iter().map(|tr| f(&tr.records[idx])).collect()
        };
        let mut metrics = Vec::new();
        for metric in Metric::ALL {
            let values = match metric {
                Metric::GapNorm => column(&|r| Some(r.gap_norm)),
                Metric::GapSq => column(&|r| Some(r.gap_norm * r.gap_norm)),
                Metric::Err => column(&|r| r.err),
            };
            if let Some(values) = values {
                metrics.push((metric, summarize(&values, t)));
            }
        }
        rows.push(StatsRow {
            k: rec.k,
            cum_samples: rec.cumulative_samples,
            metrics,
        });
    }
    Ok(ReplicationStats {
        reps,
        t_multiplier: t,
        rows,
    })
}

#[derive(Debug, Clone)]
pub struct ReplicationFailure {
    pub rep: usize,
    pub master_seed: u64,
    pub stream_id: u64,
    pub message: String,
}

impl fmt::Display for ReplicationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "replication {} (seed {}, stream {}): {}",
            self.rep, self.master_seed, self.stream_id, self.message
        )
    }
}

#[derive(Debug, Clone)]
pub struct ReplicationOutcome {
    pub stats: ReplicationStats,
    /// Completed traces indexed by replication; `None` for failed ones.
    pub traces: Vec<Option<Trace>>,
    pub failures: Vec<ReplicationFailure>,
}

/// Runs `reps` independent solves. Replication `r` uses random stream `r` of
/// the configured master seed and a problem freshly built by `builder(r)`.
pub fn run_replications<B>(builder: B, config: &SolverConfig, reps: usize) -> Result<ReplicationOutcome>
where
    B: Fn(usize) -> Result<SiviProblem> + Sync,
{
    if reps < 2 {
        return Err(Error::invalid("reps", "need at least two replications"));
    }
    let results: Vec<Result<Result<Trace>>> = (0..reps)
        .into_par_iter()
        .map(|rep| run_one(&builder, config, rep))
        .collect();
    collect(config, results)
}

/// Same as [`run_replications`], executing replications sequentially in
/// `order`. Results are merged by replication index.
pub fn run_replications_in_order<B>(builder: B, config: &SolverConfig, order: &[usize]) -> Result<ReplicationOutcome>
where
    B: Fn(usize) -> Result<SiviProblem>,
{
    let reps = order.len();
    let mut seen = vec![false; reps];
    for &r in order {
        if r >= reps || std::mem::replace(&mut seen[r], true) {
            return Err(Error::invalid("order", "must be a permutation of 0..reps"));
        }
    }
    if reps < 2 {
        return Err(Error::invalid("reps", "need at least two replications"));
    }
    let mut results: Vec<Option<Result<Result<Trace>>>> = (0..reps).map(|_| None).collect();
    for &rep in order {
        results[rep] = Some(run_one(&builder, config, rep));
    }
    collect(config, results.into_iter().map(|r| r.expect("every index visited")).collect())
}

/// Outer error: the problem could not be built. Inner error: the solve failed.
fn run_one<B>(builder: &B, config: &SolverConfig, rep: usize) -> Result<Result<Trace>>
where
    B: Fn(usize) -> Result<SiviProblem>,
{
    let problem = builder(rep)?;
    let mut cfg = config.clone();
    cfg.stream_id = rep as u64;
    Ok(solve(&problem, &cfg))
}

fn collect(config: &SolverConfig, results: Vec<Result<Result<Trace>>>) -> Result<ReplicationOutcome> {
    let mut traces = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (rep, res) in results.into_iter().enumerate() {
        match res? {
            Ok(trace) => traces.push(Some(trace)),
            Err(e) => {
                failures.push(ReplicationFailure {
                    rep,
                    master_seed: config.master_seed,
                    stream_id: rep as u64,
                    message: e.to_string(),
                });
                traces.push(None);
            }
        }
    }
    let done: Vec<&Trace> = traces.iter().flatten().collect();
    if done.len() < 2 {
        let detail: Vec<String> = failures.iter().map(|f| f.to_string()).collect();
        return Err(Error::invalid(
            "replications",
            format!("fewer than two replications completed: {}", detail.join("; ")),
        ));
    }
    let stats = summarize_traces(&done)?;
    Ok(ReplicationOutcome {
        stats,
        traces,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Vector;
    use crate::solver::Record;

    fn trace(values: &[(usize, f64)]) -> Trace {
        Trace {
            records: values
                .iter()
                .map(|&(k, g)| Record {
                    k,
                    x: Vector::zeros(1),
                    gap_norm: g,
                    err: None,
                    cumulative_samples: k as u64,
                    wall_time: 0.0,
                })
                .collect(),
        }
    }

    #[test]
    fn identical_replications_have_degenerate_interval() {
        let a = trace(&[(0, 3.0), (1, 0.1)]);
        let stats = summarize_traces(&[&a, &a.clone(), &a.clone()]).unwrap();
        for row in &stats.rows {
            let s = row.get(Metric::GapNorm).unwrap();
            assert_eq!(s.ci_low, s.mean);
            assert_eq!(s.ci_high, s.mean);
            assert!(row.get(Metric::Err).is_none());
        }
    }

    #[test]
    fn two_replications_use_t_with_one_dof() {
        let a = trace(&[(0, 1.0)]);
        let b = trace(&[(0, 3.0)]);
        let stats = summarize_traces(&[&a, &b]).unwrap();
        assert!((stats.t_multiplier - 12.706).abs() < 5e-4);
        let s = stats.summary(0, Metric::GapNorm).unwrap();
        // mean 2, sd sqrt(2), half width t * sqrt(2) / sqrt(2)
        assert!((s.mean - 2.0).abs() < 1e-15);
        assert!((s.ci_high - s.mean - stats.t_multiplier).abs() < 1e-12);
        let sq = stats.summary(0, Metric::GapSq).unwrap();
        assert!((sq.mean - 5.0).abs() < 1e-15);
    }

    #[test]
    fn mismatched_traces_are_rejected() {
        let a = trace(&[(0, 1.0), (1, 1.0)]);
        let b = trace(&[(0, 1.0), (2, 1.0)]);
        assert!(summarize_traces(&[&a, &b]).is_err());
        assert!(summarize_traces(&[&a]).is_err());
    }

    #[test]
    fn metric_names_round_trip() {
        for m in Metric::ALL {
            assert_eq!(Metric::from_name(m.name()), Some(m));
        }
        assert_eq!(Metric::from_name("bogus"), None);
    }
}
