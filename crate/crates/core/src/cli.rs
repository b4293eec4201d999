//! Command line front end. Exit codes: 0 verdict, 1 usage or input error,
//! 2 inconclusive.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::normality::{block_rho_ranks, full_check, subgroup_span_check};
use crate::ranklab::Tolerances;
use crate::report::{
    CheckReport, DualSigma, DualSpanReport, Hypothesis, InconclusiveReport, JsonFloatOwned, SpanReport,
    TolerancesOut,
};
use crate::torus::{
    descent_data, factorial, generate_subgroup, sample_tau, PolarizationType, RiemannMatrix, TorsionPoint,
};

pub const EXIT_VERDICT: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;

/// Directory for reports when neither `--out` nor `--json` is given.
pub const OUT_DIR_ENV: &str = "THETANORMAL_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "thetanormal", version, about = "Projective normality checks via theta functions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample a Riemann matrix and write it as JSON.
    SampleTau(SampleTauArgs),
    /// Run the full normality pipeline for one polarization type.
    Check(CheckArgs),
    /// Test whether a finite subgroup spans a linear system.
    Span(SpanArgs),
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// Write the JSON report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON destination; `-` streams to standard output.
    #[arg(long)]
    pub json: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct ToleranceArgs {
    #[arg(long = "theta-eps", default_value_t = 1e-12)]
    pub theta_eps: f64,
    #[arg(long = "rank-tol", default_value_t = 1e-8)]
    pub rank_tol: f64,
    #[arg(long = "zero-tol", default_value_t = 1e-6)]
    pub zero_tol: f64,
}

impl ToleranceArgs {
    fn to_tolerances(&self) -> Result<Tolerances> {
        let t = Tolerances {
            theta_eps: self.theta_eps,
            rank_rel_tol: self.rank_tol,
            zero_tol: self.zero_tol,
            zero_guard: Tolerances::default().zero_guard.max(self.zero_tol),
            ..Tolerances::default()
        };
        t.validate()?;
        Ok(t)
    }
}

#[derive(Args, Debug)]
pub struct SampleTauArgs {
    #[arg(long)]
    pub g: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[arg(long)]
    pub g: usize,
    /// Elementary divisors, e.g. `1,9`.
    #[arg(long = "type")]
    pub ptype: String,
    /// Riemann matrix file; without it tau is sampled from `--seed`.
    #[arg(long)]
    pub tau: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Multiplication degrees to test, e.g. `2,3`.
    #[arg(long = "r", default_value = "2")]
    pub r: String,
    #[command(flatten)]
    pub tolerances: ToleranceArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct SpanArgs {
    #[arg(long)]
    pub g: usize,
    /// Elementary divisors; defaults to principal.
    #[arg(long = "type")]
    pub ptype: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub level: u64,
    /// Subgroup generator as rational lattice coordinates: `g` values for the
    /// real direction, or `2g` values `p..., q...`. Repeatable.
    #[arg(long = "subgroup", conflicts_with = "subgroup_dual")]
    pub subgroup: Vec<String>,
    /// Use the dual subgroup H' on the principally polarized quotient.
    #[arg(long = "subgroup-dual")]
    pub subgroup_dual: bool,
    #[arg(long)]
    pub tau: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub tolerances: ToleranceArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Where tau comes from. Exactly one source per run.
#[derive(Clone, Debug, PartialEq)]
pub enum TauSource {
    File(PathBuf),
    Seed(u64),
}

impl TauSource {
    fn describe(&self) -> String {
        match self {
            TauSource::File(p) => format!("file:{}", p.display()),
            TauSource::Seed(s) => format!("seed:{s}"),
        }
    }

    fn load(&self, g: usize) -> Result<RiemannMatrix> {
        let tau = match self {
            TauSource::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Error::InvalidInput(format!("cannot read tau file {}: {e}", path.display()))
                })?;
                RiemannMatrix::from_json(&text)?
            }
            TauSource::Seed(seed) => sample_tau(g, *seed, 1.0)?,
        };
        if tau.g() != g {
            return Err(Error::InvalidInput(format!("tau is {}x{} but --g is {g}", tau.g(), tau.g())));
        }
        Ok(tau)
    }
}

/// Validated configuration of a `check` run.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub g: usize,
    pub ptype: PolarizationType,
    pub tau_source: TauSource,
    pub r_list: Vec<usize>,
    pub tolerances: Tolerances,
    pub seed: u64,
}

impl RunConfig {
    pub fn from_check(args: &CheckArgs) -> Result<Self> {
        let ptype = parse_type(&args.ptype, args.g)?;
        let r_list = args
            .r
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidParameter(format!("bad --r entry {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            g: args.g,
            ptype,
            tau_source: match &args.tau {
                Some(p) => TauSource::File(p.clone()),
                None => TauSource::Seed(args.seed),
            },
            r_list,
            tolerances: args.tolerances.to_tolerances()?,
            seed: args.seed,
        })
    }
}

fn parse_type(s: &str, g: usize) -> Result<PolarizationType> {
    if g == 0 {
        return Err(Error::InvalidParameter("--g must be >= 1".into()));
    }
    let t: PolarizationType = s.parse()?;
    if t.g() != g {
        return Err(Error::InvalidParameter(format!("type {t} has length {} but --g is {g}", t.g())));
    }
    Ok(t)
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Inconclusive { .. } | Error::Consistency(_) => EXIT_INCONCLUSIVE,
        _ => EXIT_USAGE,
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn run_from<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_VERDICT };
            if e.use_stderr() {
                let _ = write!(stderr, "{e}");
            } else {
                let _ = write!(stdout, "{e}");
            }
            return code;
        }
    };
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(&cli, stdout, stderr)));
    match outcome {
        Ok(Ok(code)) => code,
        Ok(Err(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
        // No verdict was produced; the exit code contract has no other slot.
        Err(_) => EXIT_INCONCLUSIVE,
    }
}

pub fn run(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::SampleTau(a) => cmd_sample_tau(a, stdout),
        Command::Check(a) => cmd_check(a, stdout, stderr),
        Command::Span(a) => cmd_span(a, stdout, stderr),
    }
}

/// Resolves the JSON destination: `Some(None)` means standard output.
fn json_target(out: &OutputArgs, default_name: &str) -> Option<Option<PathBuf>> {
    if let Some(j) = &out.json {
        return Some(if j == "-" { None } else { Some(PathBuf::from(j)) });
    }
    if let Some(p) = &out.out {
        return Some(Some(p.clone()));
    }
    std::env::var_os(OUT_DIR_ENV).map(|dir| Some(Path::new(&dir).join(default_name)))
}

fn emit_json(
    target: &Option<Option<PathBuf>>,
    json: &str,
    stdout: &mut dyn Write,
) -> Result<()> {
    match target {
        Some(Some(path)) => {
            let mut body = json.to_string();
            body.push('\n');
            std::fs::write(path, body)?;
        }
        Some(None) => writeln!(stdout, "{json}")?,
        None => {}
    }
    Ok(())
}

/// Human summary goes to stdout unless stdout carries the JSON stream.
fn summary_sink<'a>(
    target: &Option<Option<PathBuf>>,
    stdout: &'a mut dyn Write,
    stderr: &'a mut dyn Write,
) -> &'a mut dyn Write {
    if matches!(target, Some(None)) {
        stderr
    } else {
        stdout
    }
}

pub fn cmd_sample_tau(args: &SampleTauArgs, stdout: &mut dyn Write) -> Result<i32> {
    let tau = sample_tau(args.g, args.seed, args.scale)?;
    let json = tau.to_json()?;
    match json_target(&args.output, "tau.json") {
        Some(target) => emit_json(&Some(target), &json, stdout)?,
        None => writeln!(stdout, "{json}")?,
    }
    Ok(EXIT_VERDICT)
}

pub fn cmd_check(args: &CheckArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let cfg = RunConfig::from_check(args)?;
    let tau = Arc::new(cfg.tau_source.load(cfg.g)?);
    let target = json_target(&args.output, "check-report.json");
    match full_check(&cfg.ptype, &tau, &cfg.r_list, &cfg.tolerances, cfg.seed) {
        Ok(verdict) => {
            let report = CheckReport::new(&verdict, cfg.tau_source.describe());
            emit_json(&target, &serde_json::to_string_pretty(&report)?, stdout)?;
            write!(summary_sink(&target, stdout, stderr), "{}", report.summary())?;
            Ok(EXIT_VERDICT)
        }
        Err(e @ (Error::Inconclusive { .. } | Error::Consistency(_))) => {
            let report = InconclusiveReport::new(&cfg.ptype, e.to_string(), cfg.seed);
            emit_json(&target, &serde_json::to_string_pretty(&report)?, stdout)?;
            writeln!(stderr, "inconclusive: {e}")?;
            Ok(EXIT_INCONCLUSIVE)
        }
        Err(e) => Err(e),
    }
}

pub fn cmd_span(args: &SpanArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let ptype = match &args.ptype {
        Some(s) => parse_type(s, args.g)?,
        None => {
            if args.g == 0 {
                return Err(Error::InvalidParameter("--g must be >= 1".into()));
            }
            PolarizationType::principal(args.g)
        }
    };
    let tol = args.tolerances.to_tolerances()?;
    let source = match &args.tau {
        Some(p) => TauSource::File(p.clone()),
        None => TauSource::Seed(args.seed),
    };
    let tau = Arc::new(source.load(args.g)?);
    let target = json_target(&args.output, "span-report.json");

    let (json, summary) = if args.subgroup_dual {
        let dd = descent_data(&ptype, &tau)?;
        let blocks = block_rho_ranks(&ptype, &tau, &tol, args.seed)?;
        let principal = PolarizationType::principal(args.g);
        let direct = subgroup_span_check(&principal, &tau, 2, &dd.h_prime, &tol, args.seed)?;
        let order = dd.h_prime.len();
        let rhs = (1u64 << args.g) * factorial(args.g as u64);
        let sigma: Vec<DualSigma> = blocks
            .iter()
            .map(|b| DualSigma {
                sigma_index: b.sigma_index,
                sigma: b.sigma.to_string(),
                rank: b.report.rank,
                expected: b.report.expected,
                margin: JsonFloatOwned(b.report.margin),
                spanning: b.is_full(),
            })
            .collect();
        let spanning_all = sigma.iter().all(|s| s.spanning);
        let report = DualSpanReport {
            g: args.g,
            ptype: ptype.divisors().to_vec(),
            subgroup_order: order,
            hypothesis: Hypothesis {
                lhs: order as u64,
                rhs,
                holds: order as u64 > rhs,
            },
            out_of_hypothesis: order as u64 <= rhs,
            sigma,
            direct_sigma0: SpanReport::new(&principal, 2, &direct, &tol, args.seed),
            spanning_all,
            tolerances: TolerancesOut::from(&tol),
            seed: args.seed,
        };
        let summary = format!(
            "H' of order {order} in |t_sigma^* M^2| (dim {}): spanning for {}/{} sigma\n",
            1u64 << args.g,
            report.sigma.iter().filter(|s| s.spanning).count(),
            report.sigma.len()
        );
        (serde_json::to_string_pretty(&report)?, summary)
    } else {
        if args.subgroup.is_empty() {
            return Err(Error::InvalidParameter("give --subgroup generators or --subgroup-dual".into()));
        }
        let gens = args
            .subgroup
            .iter()
            .flat_map(|s| s.split(';'))
            .map(|s| TorsionPoint::parse(s, args.g))
            .collect::<Result<Vec<_>>>()?;
        let group = generate_subgroup(&gens, args.g)?;
        let span = subgroup_span_check(&ptype, &tau, args.level, &group, &tol, args.seed)?;
        let report = SpanReport::new(&ptype, args.level, &span, &tol, args.seed);
        let summary = format!(
            "subgroup of order {} in P H^0 (h0 = {}): rank {} -> {}{}\n",
            span.order,
            span.h0,
            span.report.rank,
            if span.spanning { "spanning" } else { "not spanning" },
            if span.hypothesis_holds { "" } else { " (out of hypothesis: order <= h0 g!)" }
        );
        (serde_json::to_string_pretty(&report)?, summary)
    };
    emit_json(&target, &json, stdout)?;
    write!(summary_sink(&target, stdout, stderr), "{summary}")?;
    Ok(EXIT_VERDICT)
}
