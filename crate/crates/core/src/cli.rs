//! `pencil` command-line driver.
//!
//! Exit codes: 0 pass, 1 conditions fail or structural failure,
//! 2 precondition violated, 3 I/O, parse or numerical error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::charpoly::{kth_power_test_with, sub_seeds, KPowerOptions, KPowerVerdict, DEFAULT_LINES};
use crate::conditions::{analyze, check_admissibility, sample_admissible, AnalyzeOptions, ConditionReport, Overall, WordMode, DEFAULT_MAX_TRIES, DEFAULT_WORD_CAP};
use crate::config::Tolerances;
use crate::decomposer::{decompose_with, verify_decomposition, CyclePhase, DecompositionResult, VerificationReport};
use crate::error::{PencilError, Result};
use crate::instances::{generate, Family};
use crate::io::{matrix_to_data, write_json_atomic, MatrixData, TupleFile, TupleMetadata, REPORT_VERSION};
use crate::linalg::{eigendecompose_clustered, frobenius, identity, CMat, HermitianTuple};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_PRECONDITION: i32 = 2;
pub const EXIT_ERROR: i32 = 3;

/// Cap on the number of monomials in corollary mode.
pub const MONOMIAL_CAP: u128 = 5_000;

#[derive(Debug, Parser)]
#[command(name = "pencil", version, about = "Test whether a Hermitian matrix tuple splits into k identical copies, and split it")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the spectral test and write a condition report.
    Analyze(AnalyzeArgs),
    /// Build the reducing unitary and the reduced tuple.
    Decompose(DecomposeArgs),
    /// Line test on the family of all short monomials in the generators.
    Corollary(CorollaryArgs),
    /// Write a generated instance to a tuple file.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Tuple file.
    pub input: PathBuf,
    /// Number of identical copies sought.
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Tolerance override `key=value`; repeatable.
    #[arg(long = "tol", value_name = "KEY=VALUE")]
    pub tol: Vec<String>,
    /// Report path; defaults to standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Load matrices without enforcing Hermiticity.
    #[arg(long)]
    pub allow_nonhermitian: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    All,
    ProofCore,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value = "all")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = DEFAULT_LINES)]
    pub lines: usize,
    /// Maximum number of words tested.
    #[arg(long, default_value_t = DEFAULT_WORD_CAP)]
    pub cap: usize,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CorollaryArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Largest monomial degree; capped at n² − n + 1.
    #[arg(long)]
    pub max_degree: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_LINES)]
    pub lines: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FamilyArg {
    Decomposable,
    ConjugateNegative,
    Commuting,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Decomposable => Family::Decomposable,
            FamilyArg::ConjugateNegative => Family::ConjugateNegative,
            FamilyArg::Commuting => Family::Commuting,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub family: FamilyArg,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Inputs echoed into every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputEcho {
    pub path: String,
    pub dim: usize,
    pub m: usize,
    pub k: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportFile<T> {
    pub version: String,
    pub command: String,
    pub timestamp_unix: u64,
    pub input: InputEcho,
    pub tolerances: Tolerances,
    pub exit_code: i32,
    pub result: T,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorInfo {
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycle: Option<Vec<usize>>,
}

impl From<&PencilError> for ErrorInfo {
    fn from(e: &PencilError) -> Self {
        Self {
            kind: e.kind().into(),
            message: e.to_string(),
            cycle: match e {
                PencilError::CycleInconsistency { cycle, .. } => Some(cycle.clone()),
                _ => None,
            },
        }
    }
}

/// Serializable form of a successful decomposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRecord {
    pub n: usize,
    pub k: usize,
    pub basis: MatrixData,
    pub block_unitary: MatrixData,
    pub permutation: Vec<usize>,
    pub reduced: Vec<MatrixData>,
    pub partition: Vec<Vec<usize>>,
    pub cycle_phases: Vec<CyclePhase>,
    pub residuals: Vec<f64>,
    pub residual: f64,
    pub verification: VerificationReport,
}

impl DecompositionRecord {
    pub fn new(result: &DecompositionResult, verification: VerificationReport) -> Self {
        Self {
            n: result.n,
            k: result.k,
            basis: matrix_to_data(&result.basis),
            block_unitary: matrix_to_data(&result.block_unitary),
            permutation: result.permutation.clone(),
            reduced: result.reduced.iter().map(matrix_to_data).collect(),
            partition: result.partition.iter().map(|b| b.iter().map(|i| i + 1).collect()).collect(),
            cycle_phases: result.cycle_phases.clone(),
            residuals: result.residuals.clone(),
            residual: result.residual,
            verification,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecomposeOutcome {
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<DecompositionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorollaryOutcome {
    pub status: String,
    pub degree: usize,
    pub monomial_count: u128,
    /// Graded-lexicographic monomial order, e.g. `A1`, `A2`, `A1A1`, `A1A2`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub monomials: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<KPowerVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
}

pub fn exit_code_for_error(e: &PencilError) -> i32 {
    if e.is_structural() {
        EXIT_FAIL
    } else if e.is_precondition() {
        EXIT_PRECONDITION
    } else {
        EXIT_ERROR
    }
}

pub fn exit_code_for_report(report: &ConditionReport) -> i32 {
    match report.overall {
        Overall::Pass => EXIT_PASS,
        Overall::PreconditionViolated => EXIT_PRECONDITION,
        Overall::Fail if !report.errors.is_empty() => EXIT_ERROR,
        Overall::Fail => EXIT_FAIL,
    }
}

fn tolerances(overrides: &[String]) -> Result<Tolerances> {
    let mut tol = Tolerances::default();
    for o in overrides {
        tol.apply(o)?;
    }
    Ok(tol)
}

fn load(common: &CommonArgs) -> Result<HermitianTuple> {
    TupleFile::load(&common.input)?.to_tuple(common.allow_nonhermitian)
}

fn echo(common: &CommonArgs, tuple: &HermitianTuple) -> InputEcho {
    InputEcho {
        path: common.input.display().to_string(),
        dim: tuple.dim(),
        m: tuple.len(),
        k: common.k,
        seed: common.seed,
    }
}

/// Pretty JSON to `out`, or to standard output when `out` is `None`.
fn emit<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(path) => write_json_atomic(path, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn report<T>(command: &str, input: InputEcho, tolerances: Tolerances, exit_code: i32, result: T) -> ReportFile<T> {
    ReportFile {
        version: REPORT_VERSION.into(),
        command: command.into(),
        timestamp_unix: now(),
        input,
        tolerances,
        exit_code,
        result,
    }
}

/// Builds the analyze report without writing it.
pub fn analyze_report(tuple: &HermitianTuple, input: InputEcho, options: &AnalyzeOptions) -> ReportFile<ConditionReport> {
    let result = analyze(tuple, input.k, options);
    let code = exit_code_for_report(&result);
    report("analyze", input, options.tolerances, code, result)
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<i32> {
    let c = &args.common;
    let tol = tolerances(&c.tol)?;
    let tuple = load(c)?;
    let options = AnalyzeOptions {
        mode: match args.mode {
            ModeArg::All => WordMode::All,
            ModeArg::ProofCore => WordMode::ProofCore,
        },
        cap: args.cap,
        lines: args.lines,
        seed: c.seed,
        max_tries: DEFAULT_MAX_TRIES,
        tolerances: tol,
    };
    let file = analyze_report(&tuple, echo(c, &tuple), &options);
    for w in &file.result.failing_words {
        eprintln!("failing word: {w}");
    }
    if let Some(d) = &file.result.precondition_detail {
        eprintln!("precondition violated: {d}");
    }
    for e in &file.result.errors {
        eprintln!("error: {e}");
    }
    emit(c.out.as_deref(), &file)?;
    Ok(file.exit_code)
}

/// Builds the decompose report without writing it.
pub fn decompose_report(tuple: &HermitianTuple, input: InputEcho, tol: &Tolerances) -> ReportFile<DecomposeOutcome> {
    let (code, outcome) = match decompose_with(tuple, input.k, input.seed, tol) {
        Ok(result) => {
            let verification = verify_decomposition(tuple, &result);
            (
                EXIT_PASS,
                DecomposeOutcome {
                    status: "pass".into(),
                    decomposition: Some(DecompositionRecord::new(&result, verification)),
                    error: None,
                },
            )
        }
        Err(e) => {
            let code = exit_code_for_error(&e);
            let status = match code {
                EXIT_FAIL => "fail",
                EXIT_PRECONDITION => "precondition_violated",
                _ => "error",
            };
            (
                code,
                DecomposeOutcome {
                    status: status.into(),
                    decomposition: None,
                    error: Some(ErrorInfo::from(&e)),
                },
            )
        }
    };
    report("decompose", input, *tol, code, outcome)
}

pub fn cmd_decompose(args: &DecomposeArgs) -> Result<i32> {
    let c = &args.common;
    let tol = tolerances(&c.tol)?;
    let tuple = load(c)?;
    let file = decompose_report(&tuple, echo(c, &tuple), &tol);
    if let Some(e) = &file.result.error {
        eprintln!("{}: {}", e.kind, e.message);
    }
    emit(c.out.as_deref(), &file)?;
    Ok(file.exit_code)
}

/// `Σ_{d=1}^{degree} m^d`, saturating.
pub fn monomial_count(m: usize, degree: usize) -> u128 {
    let mut total: u128 = 0;
    let mut power: u128 = 1;
    for _ in 0..degree {
        power = power.saturating_mul(m as u128);
        total = total.saturating_add(power);
    }
    total
}

/// All words of length `1..=degree` over `0..m`, shortest first, then
/// lexicographic.
pub fn graded_lex_words(m: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut layer: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..degree {
        layer = layer
            .iter()
            .flat_map(|w| {
                (0..m).map(move |s| {
                    let mut next = w.clone();
                    next.push(s);
                    next
                })
            })
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

/// Line test on all monomials of degree at most `min(max_degree, n²−n+1)`
/// in an admissibly transformed tuple, each scaled to unit norm.
pub fn corollary(
    tuple: &HermitianTuple,
    k: usize,
    max_degree: Option<usize>,
    lines: usize,
    seed: u64,
    tol: &Tolerances,
) -> (i32, CorollaryOutcome) {
    let mut outcome = CorollaryOutcome {
        status: "error".into(),
        degree: 0,
        monomial_count: 0,
        monomials: Vec::new(),
        transform: None,
        verdict: None,
        error: None,
    };
    let fail = |mut outcome: CorollaryOutcome, e: PencilError| {
        let code = exit_code_for_error(&e);
        outcome.status = if code == EXIT_PRECONDITION { "precondition_violated" } else { "error" }.into();
        outcome.error = Some(ErrorInfo::from(&e));
        (code, outcome)
    };
    let dim = tuple.dim();
    if k == 0 || dim % k != 0 {
        let found = eigendecompose_clustered(tuple.get(0), tol.gap_tol).map(|s| s.multiplicities).unwrap_or_default();
        return fail(outcome, PencilError::SpectrumPatternViolation { n: 0, k, found });
    }
    let n = dim / k;
    let bound = n * n - n + 1;
    let degree = max_degree.map_or(bound, |d| d.min(bound));
    outcome.degree = degree;
    let count = monomial_count(tuple.len(), degree);
    outcome.monomial_count = count;
    if count > MONOMIAL_CAP {
        return fail(outcome, PencilError::MonomialBlowup { count, cap: MONOMIAL_CAP });
    }
    if degree == 0 {
        return fail(outcome, PencilError::InvalidArgument("max degree must be at least 1".into()));
    }
    let seeds = sub_seeds(seed, 2);
    let (shifted, _) = tuple.shifted_invertible();
    let working = if check_admissibility(&shifted, k, tol).admissible {
        outcome.transform = Some(identity_rows(tuple.len()));
        shifted
    } else {
        match sample_admissible(&shifted, k, tol, seeds[0], DEFAULT_MAX_TRIES) {
            Ok((c, t)) => {
                outcome.transform = Some(c.row_iter().map(|r| r.iter().copied().collect()).collect());
                t
            }
            Err(e) => return fail(outcome, e),
        }
    };
    let words = graded_lex_words(working.len(), degree);
    outcome.monomials = words
        .iter()
        .map(|w| w.iter().map(|s| format!("A{}", s + 1)).collect::<String>())
        .collect();
    let family: Vec<CMat> = words
        .iter()
        .map(|w| {
            let mut acc = identity(dim);
            for &s in w {
                acc *= working.get(s);
            }
            let norm = frobenius(&acc);
            if norm > 0.0 {
                acc.unscale(norm)
            } else {
                acc
            }
        })
        .collect();
    let opts = KPowerOptions {
        lines,
        cluster_rel_tol: tol.cluster_rel_tol,
    };
    match kth_power_test_with(&family, k, n, &opts, seeds[1]) {
        Ok(v) => {
            let pass = v.is_kth_power;
            outcome.status = if pass { "pass" } else { "fail" }.into();
            outcome.verdict = Some(v);
            (if pass { EXIT_PASS } else { EXIT_FAIL }, outcome)
        }
        Err(e) => fail(outcome, e),
    }
}

fn identity_rows(m: usize) -> Vec<Vec<f64>> {
    (0..m).map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

pub fn cmd_corollary(args: &CorollaryArgs) -> Result<i32> {
    let c = &args.common;
    let tol = tolerances(&c.tol)?;
    let tuple = load(c)?;
    let (code, outcome) = corollary(&tuple, c.k, args.max_degree, args.lines, c.seed, &tol);
    if let Some(e) = &outcome.error {
        eprintln!("{}: {}", e.kind, e.message);
    }
    let file = report("corollary", echo(c, &tuple), tol, code, outcome);
    emit(c.out.as_deref(), &file)?;
    Ok(code)
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<i32> {
    let (tuple, descriptor) = generate(args.family.into(), args.n, args.k, args.m, args.seed)?;
    let file = TupleFile::from_tuple(
        &tuple,
        TupleMetadata {
            descriptor: Some(descriptor),
            shifts: Vec::new(),
        },
    );
    file.save(&args.out)?;
    Ok(EXIT_PASS)
}

fn configure_threads() {
    if let Some(threads) = std::env::var("PENCIL_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // A second initialization in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build_global();
    }
}

/// Parses `args` and runs the selected command, returning the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_PASS };
        }
    };
    configure_threads();
    let outcome = match &cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Decompose(a) => cmd_decompose(a),
        Command::Corollary(a) => cmd_corollary(a),
        Command::Generate(a) => cmd_generate(a),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        EXIT_ERROR
    })
}
