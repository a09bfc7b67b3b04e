//! A complete, serialisable description of an experiment and its execution.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{check_dim, Error, Result};
use crate::feasible::{BoxSet, FeasibleSet, PolyhedronSet};
use crate::numkit::{Matrix, Vector, RNG_VERSION};
use crate::oracle::{AdditiveGaussianOracle, AffineMap, BatchSchedule, NoiseSampling};
use crate::problems::{build_example1_with, InnerSign, NetworkModel, NetworkParameters, SiviProblem};
use crate::solver::{solve, GapEvalMode, SolverConfig, Trace};

use super::csv::{export_stats_csv, export_trace_csv};
use super::metadata::KeyValues;
use super::stats::{run_replications, Metric, ReplicationFailure, ReplicationStats};

pub const METADATA_FILE: &str = "metadata.txt";
pub const STATS_FILE: &str = "stats.csv";

pub fn trace_file_name(rep: usize) -> String {
    format!("trace_rep{rep:03}.csv")
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineProblemSpec {
    pub matrix: Matrix,
    pub offset: Vector,
    pub noise_scale: f64,
    pub lower: Vector,
    pub upper: Vector,
    /// `(L, b)` for extra halfspaces `Lx <= b`.
    pub halfspaces: Option<(Matrix, Vector)>,
    pub x0: Vector,
    pub x_star: Option<Vector>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Example1 {
        noise_scale: f64,
    },
    Example2 {
        model_seed: u64,
        params: Box<NetworkParameters>,
        noise_scale: f64,
    },
    Affine(Box<AffineProblemSpec>),
}

impl ProblemSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemSpec::Example1 { .. } => "example1",
            ProblemSpec::Example2 { .. } => "example2",
            ProblemSpec::Affine(_) => "affine",
        }
    }

    /// Returns a builder producing a fresh problem per replication (each with
    /// its own inner-solver cache).
    pub fn builder(&self, sampling: NoiseSampling) -> Result<Box<dyn Fn(usize) -> Result<SiviProblem> + Sync>> {
        match self {
            ProblemSpec::Example1 { noise_scale } => {
                if !(*noise_scale >= 0.0) || !noise_scale.is_finite() {
                    return Err(Error::invalid("noise_scale", "must be finite and nonnegative"));
                }
                let scale = *noise_scale;
                Ok(Box::new(move |_| Ok(build_example1_with(scale, sampling))))
            }
            ProblemSpec::Example2 {
                params, noise_scale, ..
            } => {
                let model = NetworkModel::new((**params).clone())?;
                let scale = *noise_scale;
                model.problem_with(scale, sampling)?;
                Ok(Box::new(move |_| model.problem_with(scale, sampling)))
            }
            ProblemSpec::Affine(spec) => {
                let spec = (**spec).clone();
                build_affine(&spec, sampling)?;
                Ok(Box::new(move |_| build_affine(&spec, sampling)))
            }
        }
    }
}

fn build_affine(spec: &AffineProblemSpec, sampling: NoiseSampling) -> Result<SiviProblem> {
    let map = AffineMap::new(spec.matrix.clone(), spec.offset.clone())?;
    let oracle = AdditiveGaussianOracle::new(map, spec.noise_scale)?.with_sampling(sampling);
    let bounds = BoxSet::new(spec.lower.clone(), spec.upper.clone())?;
    let set = match &spec.halfspaces {
        Some((l, b)) if l.nrows() > 0 => {
            FeasibleSet::Polyhedron(PolyhedronSet::new(bounds, l.clone(), b.clone(), None)?)
        }
        _ => FeasibleSet::Box(bounds),
    };
    SiviProblem::new("affine", Box::new(oracle), set, spec.x0.clone(), spec.x_star.clone())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub problem: ProblemSpec,
    pub eta: f64,
    pub delta: f64,
    pub cap: Option<u64>,
    pub iters: usize,
    pub reps: usize,
    pub seed: u64,
    pub record_every: usize,
    pub gap_mode: GapEvalMode,
    pub sampling: NoiseSampling,
}

impl RunSpec {
    pub fn solver_config(&self) -> Result<SolverConfig> {
        let schedule = BatchSchedule::new(self.delta, self.cap)?;
        let mut cfg = SolverConfig::new(self.eta, self.iters, schedule);
        cfg.master_seed = self.seed;
        cfg.record_every = self.record_every;
        cfg.gap_eval_mode = self.gap_mode;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_metadata(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("version", concat!("sivi-core ", env!("CARGO_PKG_VERSION")));
        kv.set("rng", RNG_VERSION);
        kv.set("problem", self.problem.name());
        kv.set_real("eta", self.eta);
        kv.set_real("delta", self.delta);
        kv.set("cap", self.cap.map_or_else(|| "none".to_string(), |c| c.to_string()));
        kv.set("schedule", "N_k = min(cap, ceil((k+1)^(2+2*delta)))");
        kv.set("iters", self.iters.to_string());
        kv.set("reps", self.reps.to_string());
        kv.set("seed", self.seed.to_string());
        kv.set("record_every", self.record_every.to_string());
        kv.set("gap_mode", self.gap_mode.to_string());
        kv.set("sampling", self.sampling.to_string());
        match &self.problem {
            ProblemSpec::Example1 { noise_scale } => {
                kv.set_real("noise_scale", *noise_scale);
            }
            ProblemSpec::Example2 {
                model_seed,
                params,
                noise_scale,
            } => {
                kv.set_real("noise_scale", *noise_scale);
                kv.set("model_seed", model_seed.to_string());
                kv.set("inner_sign", params.sign.to_string());
                kv.set("m", params.m.to_string());
                kv.set("n", params.n.to_string());
                kv.set("q", params.l.nrows().to_string());
                kv.set_vector("c", &params.c);
                kv.set_vector("tau", &params.tau);
                kv.set_vector("a_coef", &params.a_coef);
                kv.set_vector("a0", &params.a0);
                kv.set_vector("rho", &params.rho);
                kv.set_vector("rho0", &params.rho0);
                kv.set_vector("alpha", &params.alpha);
                kv.set_vector("beta", &params.beta);
                kv.set_matrix("halfspace_matrix", &params.l);
                kv.set_vector("halfspace_rhs", &params.b);
                kv.set_vector("lower", &params.f_min);
                kv.set_vector("upper", &params.f_max);
            }
            ProblemSpec::Affine(spec) => {
                kv.set_real("noise_scale", spec.noise_scale);
                kv.set("dim", spec.offset.len().to_string());
                kv.set_matrix("matrix", &spec.matrix);
                kv.set_vector("offset", &spec.offset);
                kv.set_vector("lower", &spec.lower);
                kv.set_vector("upper", &spec.upper);
                if let Some((l, b)) = &spec.halfspaces {
                    kv.set_matrix("halfspace_matrix", l);
                    kv.set_vector("halfspace_rhs", b);
                }
                kv.set_vector("x0", &spec.x0);
                if let Some(xs) = &spec.x_star {
                    kv.set_vector("x_star", xs);
                }
            }
        }
        kv
    }

    /// Inverse of [`to_metadata`](Self::to_metadata). Solver keys fall back to
    /// defaults so hand-written problem files can stay short.
    pub fn from_metadata(kv: &KeyValues) -> Result<Self> {
        let problem_name = kv.require("problem")?;
        let noise_scale = if kv.contains("noise_scale") { kv.real("noise_scale")? } else { 1.0 };
        let problem = match problem_name {
            "example1" => ProblemSpec::Example1 { noise_scale },
            "example2" => {
                let m: usize = kv.parse("m")?;
                let n: usize = kv.parse("n")?;
                let sign: InnerSign = kv.parse_or("inner_sign", InnerSign::Standard)?;
                let l = halfspace_matrix(kv, m + n)?;
                let params = NetworkParameters {
                    m,
                    n,
                    c: kv.vector("c")?,
                    tau: kv.vector("tau")?,
                    a_coef: kv.vector("a_coef")?,
                    a0: kv.vector("a0")?,
                    rho: kv.vector("rho")?,
                    rho0: kv.vector("rho0")?,
                    alpha: kv.vector("alpha")?,
                    beta: kv.vector("beta")?,
                    l,
                    b: kv.vector("halfspace_rhs")?,
                    f_min: kv.vector("lower")?,
                    f_max: kv.vector("upper")?,
                    sign,
                };
                ProblemSpec::Example2 {
                    model_seed: kv.parse_or("model_seed", 0)?,
                    params: Box::new(params),
                    noise_scale,
                }
            }
            "affine" => {
                let matrix = kv.matrix("matrix")?;
                let dim = matrix.nrows();
                let offset = kv.vector("offset")?;
                check_dim("offset", dim, offset.len())?;
                let halfspaces = if kv.contains("halfspace_matrix") {
                    Some((halfspace_matrix(kv, dim)?, kv.vector("halfspace_rhs")?))
                } else {
                    None
                };
                let x0 = if kv.contains("x0") { kv.vector("x0")? } else { Vector::zeros(dim) };
                let x_star = if kv.contains("x_star") { Some(kv.vector("x_star")?) } else { None };
                ProblemSpec::Affine(Box::new(AffineProblemSpec {
                    matrix,
                    offset,
                    noise_scale,
                    lower: kv.vector("lower")?,
                    upper: kv.vector("upper")?,
                    halfspaces,
                    x0,
                    x_star,
                }))
            }
            other => return Err(Error::Parse(format!("unknown problem `{other}`"))),
        };
        let cap = match kv.get("cap") {
            None | Some("none") => None,
            Some(_) => Some(kv.parse::<u64>("cap")?),
        };
        Ok(Self {
            problem,
            eta: if kv.contains("eta") { kv.real("eta")? } else { 1.0 },
            delta: if kv.contains("delta") { kv.real("delta")? } else { 0.5 },
            cap,
            iters: kv.parse_or("iters", 100)?,
            reps: kv.parse_or("reps", 20)?,
            seed: kv.parse_or("seed", 1)?,
            record_every: kv.parse_or("record_every", 1)?,
            gap_mode: kv.parse_or("gap_mode", GapEvalMode::ExactMean)?,
            sampling: kv.parse_or("sampling", NoiseSampling::default())?,
        })
    }

    /// Runs every replication and writes `metadata.txt`, `stats.csv` (two or
    /// more replications) and one trace CSV per completed replication.
    pub fn execute(&self, out_dir: &Path) -> Result<RunReport> {
        let config = self.solver_config()?;
        if self.reps == 0 {
            return Err(Error::invalid("reps", "must be at least 1"));
        }
        let builder = self.problem.builder(self.sampling)?;
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        self.to_metadata().write(&out_dir.join(METADATA_FILE))?;

        let (traces, stats, failures) = if self.reps == 1 {
            let problem = builder(0)?;
            let trace = solve(&problem, &config)?;
            (vec![Some(trace)], None, Vec::new())
        } else {
            let outcome = run_replications(builder, &config, self.reps)?;
            (outcome.traces, Some(outcome.stats), outcome.failures)
        };

        let mut files = vec![out_dir.join(METADATA_FILE)];
        if let Some(stats) = &stats {
            let path = out_dir.join(STATS_FILE);
            export_stats_csv(stats, &path)?;
            files.push(path);
        }
        for (rep, trace) in traces.iter().enumerate() {
            if let Some(trace) = trace {
                let path = out_dir.join(trace_file_name(rep));
                export_trace_csv(trace, &path)?;
                files.push(path);
            }
        }
        Ok(RunReport {
            traces,
            stats,
            failures,
            files,
        })
    }
}

fn halfspace_matrix(kv: &KeyValues, dim: usize) -> Result<Matrix> {
    let l = kv.matrix("halfspace_matrix")?;
    if l.nrows() == 0 {
        return Ok(Matrix::zeros(0, dim));
    }
    check_dim("halfspace matrix columns", dim, l.ncols())?;
    Ok(l)
}

#[derive(Debug)]
pub struct RunReport {
    pub traces: Vec<Option<Trace>>,
    pub stats: Option<ReplicationStats>,
    pub failures: Vec<ReplicationFailure>,
    pub files: Vec<PathBuf>,
}

impl RunReport {
    /// One-line description of the last recorded iteration.
    pub fn summary_line(&self) -> String {
        if let Some(stats) = &self.stats {
            if let Some(row) = stats.rows.last() {
                let mut line = format!("k={} cum_samples={}", row.k, row.cum_samples);
                for metric in [Metric::GapNorm, Metric::Err] {
                    if let Some(s) = row.get(metric) {
                        line.push_str(&format!(
                            " {metric}: mean={:.6e} ci=[{:.6e}, {:.6e}]",
                            s.mean, s.ci_low, s.ci_high
                        ));
                    }
                }
                return line;
            }
        }
        match self.traces.iter().flatten().next().and_then(|t| t.last()) {
            Some(r) => {
                let mut line = format!("k={} cum_samples={} gap_norm={:.6e}", r.k, r.cumulative_samples, r.gap_norm);
                if let Some(e) = r.err {
                    line.push_str(&format!(" err={e:.6e}"));
                }
                line
            }
            None => "no completed replications".to_string(),
        }
    }
}
