//! Command-line front end. `run_cli` returns the process exit code:
//! 0 on success, 1 on a numerical or partial failure, 2 on a usage error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::oracle::NoiseSampling;
use crate::problems::{InnerSign, NetworkOptions, NetworkParameters};
use crate::solver::GapEvalMode;
use crate::verify;

use super::metadata::KeyValues;
use super::run::{ProblemSpec, RunSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sivi", version, about = "Variance-reduced solver for stochastic inverse variational inequalities")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Three-dimensional affine test problem on a box.
    Example1(Example1Args),
    /// Randomly generated transportation network with tax control.
    Example2(Example2Args),
    /// Runs the experiment described by a metadata or problem file.
    Solve(SolveArgs),
    /// Runs the built-in correctness checks and prints one line per check.
    Verify,
}

/// Batch-size cap; `none` disables it.
#[derive(Debug, Clone, Copy)]
struct Cap(Option<u64>);

fn parse_cap(s: &str) -> std::result::Result<Cap, String> {
    if s == "none" {
        return Ok(Cap(None));
    }
    match s.parse::<u64>() {
        Ok(c) if c > 0 => Ok(Cap(Some(c))),
        _ => Err(format!("`{s}` is not a positive integer or `none`")),
    }
}

fn parse_gap_mode(s: &str) -> std::result::Result<GapEvalMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_sampling(s: &str) -> std::result::Result<NoiseSampling, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_sign(s: &str) -> std::result::Result<InnerSign, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Step parameter [default: 4 for example1, 1 for example2].
    #[arg(long)]
    eta: Option<f64>,
    /// Batch growth exponent offset: N_k = ceil((k+1)^(2+2*delta)).
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    /// Independent replications.
    #[arg(long, default_value_t = 20)]
    reps: usize,
    /// Number of iterations T [default: 200 for example1, 100 for example2].
    #[arg(long)]
    iters: Option<usize>,
    /// Master seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Upper bound on the batch size, or `none`.
    #[arg(long, default_value = "none", value_parser = parse_cap)]
    cap: Cap,
    /// Switch the noise off (G = F).
    #[arg(long)]
    deterministic: bool,
    /// Noise standard deviation per coordinate.
    #[arg(long, default_value_t = 1.0)]
    noise_scale: f64,
    /// Record every this many iterations (the last one is always recorded).
    #[arg(long, default_value_t = 1)]
    record_every: usize,
    /// How F(x_k) is evaluated for the recorded gap: exact, mc or mc:M.
    #[arg(long, default_value = "exact", value_parser = parse_gap_mode)]
    gap_mode: GapEvalMode,
    /// Noise of a batch mean: `aggregated` draws the sum of the N normals of
    /// each coordinate directly (same distribution); `per-draw` sums N draws.
    #[arg(long, default_value = "aggregated", value_parser = parse_sampling)]
    sampling: NoiseSampling,
    /// Output directory [default: runs/<problem>].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Example1Args {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct Example2Args {
    #[command(flatten)]
    common: CommonArgs,
    /// Seed for the random network data.
    #[arg(long, default_value_t = 1)]
    model_seed: u64,
    /// Number of supply markets.
    #[arg(long, default_value_t = 10)]
    m: usize,
    /// Number of demand markets.
    #[arg(long, default_value_t = 30)]
    n: usize,
    /// Number of coupling halfspaces.
    #[arg(long, default_value_t = 2)]
    q: usize,
    /// Sign convention of the control in the inner problem: standard or literal.
    #[arg(long, default_value = "standard", value_parser = parse_sign)]
    inner_sign: InnerSign,
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// Metadata file of an earlier run, or a hand-written problem file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

impl CommonArgs {
    fn into_spec(self, problem: ProblemSpec, default_eta: f64, default_iters: usize) -> (RunSpec, PathBuf) {
        let out = self.out.unwrap_or_else(|| Path::new("runs").join(problem.name()));
        let spec = RunSpec {
            problem,
            eta: self.eta.unwrap_or(default_eta),
            delta: self.delta,
            cap: self.cap.0,
            iters: self.iters.unwrap_or(default_iters),
            reps: self.reps,
            seed: self.seed,
            record_every: self.record_every,
            gap_mode: self.gap_mode,
            sampling: self.sampling,
        };
        (spec, out)
    }

    fn noise(&self) -> f64 {
        if self.deterministic {
            0.0
        } else {
            self.noise_scale
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(sink, "{}", rendered.ansi());
            return code;
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if matches!(e, Error::InvalidParameter { .. } | Error::Parse(_) | Error::Io { .. }) {
                EXIT_USAGE
            } else {
                EXIT_FAILURE
            }
        }
    }
}

fn dispatch(command: Command, stdout: &mut dyn Write) -> Result<i32> {
    let (spec, out) = match command {
        Command::Example1(a) => {
            let noise_scale = a.common.noise();
            a.common.into_spec(ProblemSpec::Example1 { noise_scale }, 4.0, 200)
        }
        Command::Example2(a) => {
            let noise_scale = a.common.noise();
            let opts = NetworkOptions {
                m: a.m,
                n: a.n,
                q: a.q,
                sign: a.inner_sign,
                ..Default::default()
            };
            let params = NetworkParameters::generate(a.model_seed, &opts)?;
            let problem = ProblemSpec::Example2 {
                model_seed: a.model_seed,
                params: Box::new(params),
                noise_scale,
            };
            a.common.into_spec(problem, 1.0, 100)
        }
        Command::Solve(a) => {
            let spec = RunSpec::from_metadata(&KeyValues::read(&a.config)?)?;
            (spec, a.out)
        }
        Command::Verify => {
            let report = verify::run_all();
            for check in &report.checks {
                let _ = writeln!(stdout, "{check}");
            }
            return Ok(if report.all_passed() { EXIT_OK } else { EXIT_FAILURE });
        }
    };

    let report = spec.execute(&out)?;
    let _ = writeln!(stdout, "{}", report.summary_line());
    let _ = writeln!(stdout, "wrote {} files to {}", report.files.len(), out.display());
    if report.failures.is_empty() {
        Ok(EXIT_OK)
    } else {
        for f in &report.failures {
            let _ = writeln!(stdout, "failed: {f}");
        }
        Ok(EXIT_FAILURE)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_cli(std::iter::once("sivi").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn no_arguments_prints_help_with_usage_code() {
        let (code, out, err) = run(&[]);
        assert_eq!(code, EXIT_USAGE);
        assert!(format!("{out}{err}").contains("Usage"));
    }

    #[test]
    fn bad_flags_are_usage_errors() {
        assert_eq!(run(&["example1", "--cap", "zero"]).0, EXIT_USAGE);
        assert_eq!(run(&["example1", "--gap-mode", "mc:0"]).0, EXIT_USAGE);
        assert_eq!(run(&["example2", "--inner-sign", "upside"]).0, EXIT_USAGE);
        assert_eq!(run(&["example1", "--eta", "-1", "--out", "/nonexistent/x"]).0, EXIT_USAGE);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn small_run_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("ex1");
        let (code, stdout, stderr) = run(&[
            "example1", "--iters", "4", "--reps", "3", "--cap", "50", "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_OK, "{stderr}");
        assert!(stdout.contains("k=4"));
        assert!(out.join("metadata.txt").exists());
        assert!(out.join("stats.csv").exists());
        assert!(out.join("trace_rep002.csv").exists());
    }

    #[test]
    fn literal_sign_is_a_numerical_failure() {
        let dir = tempfile::tempdir().unwrap();
        let (code, _, stderr) = run(&[
            "example2", "--inner-sign", "literal", "--m", "2", "--n", "3", "--out", dir.path().to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_FAILURE);
        assert!(stderr.contains("literal"), "{stderr}");
    }
}
