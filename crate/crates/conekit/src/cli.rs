//! Command-line front end.
//!
//! Five subcommands: `constants` prints the constants table, `check`
//! evaluates index conditions, `certify` runs a ladder and decides the
//! multiplicity certificate, `solve` locates fixed points, `report` runs the
//! whole pipeline. Every subcommand emits a [`RunReport`]; `--format`
//! selects pretty JSON or a plain-text table.
//!
//! Exit codes are a stable contract:
//!   0  success
//!   1  I/O failure
//!   2  validation failure or malformed request
//!   3  numerical failure (including universal divergence in `solve`)
//!   4  certificate not established at the requested count

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::constants::{compute_all, ConstError, TheoryConstants};
use crate::index::{
    self, AutoOptions, ConditionKind, IndexError, LadderEntry, MultiplicityVerdict, RhoCondition,
};
use crate::problem::{LoadError, ProblemDef};
use crate::report::RunReport;
use crate::scalar::{parse_rational, Scalar};
use crate::solver::{multistart, Operator, PicardOptions, SolveError, SolveResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_NOT_ESTABLISHED: i32 = 4;

// ---------------------------------------------------------------------------
// argument grammar

#[derive(Parser)]
#[command(name = "conekit", version, about = "Cone-theoretic existence and \
multiplicity certificates for coupled perturbed Hammerstein systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute and print the constants table for a problem file.
    Constants(ConstantsArgs),
    /// Evaluate one index condition, or every rung of a ladder, at fixed radii.
    Check(CheckArgs),
    /// Evaluate a ladder and decide how many positive solutions it certifies.
    Certify(CertifyArgs),
    /// Locate fixed points by damped Picard iteration from several seeds.
    Solve(SolveArgs),
    /// Full pipeline: constants, optional ladder verdict, optional solve.
    Report(ReportArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Args)]
struct CommonArgs {
    /// Problem file (JSON).
    problem: PathBuf,
    /// Output format.
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Absolute tolerance for adaptive quadrature (default from the file,
    /// falling back to 1e-10).
    #[arg(long, value_name = "TOL")]
    tol_quad: Option<f64>,
}

#[derive(Args)]
struct ConstantsArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Radius to test (rational like 1/8, decimal, or float).
    #[arg(long, requires = "kind")]
    rho: Option<String>,
    /// Condition kind: one (index 1 on the ball), zero (index 0, both
    /// equations), or star (index 0, either equation).
    #[arg(long, requires = "rho")]
    kind: Option<String>,
    /// Ladder spec, inline ("0.125:star,1:one,11:zero") or a file path;
    /// every rung is checked independently.
    #[arg(long, conflicts_with_all = ["rho", "kind"])]
    ladder: Option<String>,
    /// Sample points per axis when no exact extremum override applies.
    #[arg(long, value_name = "N")]
    f_grid: Option<usize>,
}

#[derive(Args)]
struct CertifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Ladder spec, inline or a file path.
    #[arg(long, required_unless_present = "auto")]
    ladder: Option<String>,
    /// Minimum number of certified solutions for exit code 0.
    #[arg(long, default_value_t = 1)]
    at_least: usize,
    /// Search for a ladder automatically instead of taking --ladder.
    #[arg(long)]
    auto: bool,
    /// Sample points per axis when no exact extremum override applies.
    #[arg(long, value_name = "N")]
    f_grid: Option<usize>,
}

#[derive(Args)]
struct SolveOpts {
    /// Interpolation nodes (default from the file, falling back to 257).
    #[arg(long)]
    nodes: Option<usize>,
    /// Picard damping factor in (0, 1].
    #[arg(long)]
    damping: Option<f64>,
    /// Stop when the sup-norm update falls below this.
    #[arg(long, value_name = "TOL")]
    tol_picard: Option<f64>,
    /// Iteration budget per seed.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Norm brackets to seed from, e.g. "0:1,5:20". Seeds are constant
    /// starting iterates spread inside each bracket.
    #[arg(long)]
    brackets: Option<String>,
    /// Upper norm of the default bracket [0, SEED_NORM] used when
    /// --brackets is absent.
    #[arg(long, default_value_t = 1.0)]
    seed_norm: f64,
    /// Constant starting iterates per bracket.
    #[arg(long, default_value_t = 3)]
    seeds: usize,
    /// Directory the per-solution CSV files and the JSON summary go to.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    opts: SolveOpts,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Ladder spec to certify, inline or a file path.
    #[arg(long)]
    ladder: Option<String>,
    /// Sample points per axis when no exact extremum override applies.
    #[arg(long, value_name = "N")]
    f_grid: Option<usize>,
    /// Also run the solver and include solution summaries.
    #[arg(long)]
    solve: bool,
    #[command(flatten)]
    opts: SolveOpts,
}

// ---------------------------------------------------------------------------
// error -> exit code mapping

#[derive(Debug)]
struct CmdError {
    code: i32,
    msg: String,
}

impl CmdError {
    fn validation(msg: impl Into<String>) -> Self {
        CmdError {
            code: EXIT_VALIDATION,
            msg: msg.into(),
        }
    }
}

impl From<LoadError> for CmdError {
    fn from(e: LoadError) -> Self {
        let code = match &e {
            LoadError::Io { .. } => EXIT_IO,
            LoadError::Schema(_) | LoadError::Invalid(_) => EXIT_VALIDATION,
            LoadError::Numeric(_) => EXIT_NUMERICAL,
        };
        CmdError {
            code,
            msg: e.to_string(),
        }
    }
}

impl From<ConstError> for CmdError {
    fn from(e: ConstError) -> Self {
        let code = match &e {
            ConstError::Invariant(_) => EXIT_VALIDATION,
            ConstError::Quad(_) | ConstError::Eval(_) => EXIT_NUMERICAL,
        };
        CmdError {
            code,
            msg: e.to_string(),
        }
    }
}

impl From<IndexError> for CmdError {
    fn from(e: IndexError) -> Self {
        let code = match &e {
            IndexError::Request(_) | IndexError::Ladder(_) => EXIT_VALIDATION,
            IndexError::Eval(_) => EXIT_NUMERICAL,
        };
        CmdError {
            code,
            msg: e.to_string(),
        }
    }
}

impl From<SolveError> for CmdError {
    fn from(e: SolveError) -> Self {
        let code = match &e {
            SolveError::Request(_) | SolveError::MissingFn(..) => EXIT_VALIDATION,
            SolveError::Eval(_) | SolveError::Quad(_) | SolveError::Diverged { .. } => {
                EXIT_NUMERICAL
            }
        };
        CmdError {
            code,
            msg: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CmdError {
    fn from(e: std::io::Error) -> Self {
        CmdError {
            code: EXIT_IO,
            msg: e.to_string(),
        }
    }
}

// ---------------------------------------------------------------------------
// entry point

/// Parse the process arguments, run, and return the exit code.
pub fn main_entry() -> i32 {
    if let Ok(raw) = std::env::var("CONEKIT_THREADS") {
        match raw.parse::<usize>() {
            Ok(n) if n >= 1 => {
                // ignore the error from a second initialization
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
            _ => {
                eprintln!("error: CONEKIT_THREADS must be a positive integer, got `{raw}`");
                return EXIT_VALIDATION;
            }
        }
    }
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.msg);
            e.code
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32, CmdError> {
    match cmd {
        Command::Constants(a) => cmd_constants(a),
        Command::Check(a) => cmd_check(a),
        Command::Certify(a) => cmd_certify(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn load(common: &CommonArgs, f_grid: Option<usize>) -> Result<ProblemDef, CmdError> {
    let mut p = ProblemDef::load(&common.problem)?;
    if let Some(tol) = common.tol_quad {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(CmdError::validation("--tol-quad must be positive"));
        }
        p.options.quad_tol = tol;
    }
    if let Some(n) = f_grid {
        p.options.f_grid = n;
    }
    Ok(p)
}

fn emit(rep: &mut RunReport, started: Instant, format: Format, table: String) {
    rep.wall_time_ms = Some(started.elapsed().as_secs_f64() * 1e3);
    rep.finalize();
    match format {
        Format::Json => print!("{}", rep.to_json()),
        Format::Table => print!("{table}"),
    }
}

// ---------------------------------------------------------------------------
// subcommands

fn cmd_constants(a: ConstantsArgs) -> Result<i32, CmdError> {
    let started = Instant::now();
    let p = load(&a.common, None)?;
    let k = compute_all(&p)?;
    let mut rep = RunReport::new(&p.digest);
    rep.set_constants(&k);
    emit(&mut rep, started, a.common.format, render_constants(&k));
    Ok(EXIT_OK)
}

fn cmd_check(a: CheckArgs) -> Result<i32, CmdError> {
    let started = Instant::now();
    let p = load(&a.common, a.f_grid)?;
    let k = compute_all(&p)?;
    let conditions: Vec<RhoCondition> = match (&a.ladder, &a.rho, &a.kind) {
        (Some(spec), None, None) => {
            let ladder = parse_ladder_arg(spec)?;
            ladder
                .iter()
                .map(|e| index::check(&p, &k, e.kind, &e.rho))
                .collect::<Result<_, _>>()?
        }
        (None, Some(rho), Some(kind)) => {
            let rho = parse_scalar(rho)?;
            let kind: ConditionKind = kind.parse().map_err(CmdError::validation)?;
            vec![index::check(&p, &k, kind, &rho)?]
        }
        _ => {
            return Err(CmdError::validation(
                "check needs either --rho with --kind, or --ladder",
            ))
        }
    };
    let mut rep = RunReport::new(&p.digest);
    rep.set_constants(&k);
    let mut table = String::new();
    for c in &conditions {
        rep.push_condition(c);
        render_condition(&mut table, c);
    }
    emit(&mut rep, started, a.common.format, table);
    Ok(EXIT_OK)
}

fn cmd_certify(a: CertifyArgs) -> Result<i32, CmdError> {
    let started = Instant::now();
    let p = load(&a.common, a.f_grid)?;
    let k = compute_all(&p)?;
    let verdict = if a.auto {
        match index::propose_ladder(&p, &k, &AutoOptions::default())? {
            Some(v) => v,
            None => {
                eprintln!("no ladder with an established certificate found in the scanned range");
                return Ok(EXIT_NOT_ESTABLISHED);
            }
        }
    } else {
        let ladder = parse_ladder_arg(a.ladder.as_deref().expect("clap enforces"))?;
        index::multiplicity(&p, &k, &ladder)?
    };
    let mut rep = RunReport::new(&p.digest);
    rep.set_constants(&k);
    rep.set_verdict(&verdict);
    emit(&mut rep, started, a.common.format, render_verdict(&verdict));
    if verdict.guaranteed_count >= a.at_least {
        Ok(EXIT_OK)
    } else {
        eprintln!(
            "certificate guarantees {} solution(s), {} requested",
            verdict.guaranteed_count, a.at_least
        );
        Ok(EXIT_NOT_ESTABLISHED)
    }
}

fn run_solve(
    p: &ProblemDef,
    k: &TheoryConstants,
    o: &SolveOpts,
) -> Result<(Vec<SolveResult>, Vec<String>), CmdError> {
    let brackets = match &o.brackets {
        Some(spec) => parse_brackets(spec)?,
        None => {
            if !(o.seed_norm > 0.0 && o.seed_norm.is_finite()) {
                return Err(CmdError::validation("--seed-norm must be positive"));
            }
            vec![(0.0, o.seed_norm)]
        }
    };
    let op = Operator::new(p, k, o.nodes.unwrap_or(p.options.nodes))?;
    let mut opts = PicardOptions::from_problem(p);
    if let Some(d) = o.damping {
        opts.damping = d;
    }
    if let Some(t) = o.tol_picard {
        opts.tol = t;
    }
    if let Some(n) = o.max_iters {
        opts.max_iters = n;
    }
    let results = multistart(&op, &brackets, o.seeds, &opts)?;
    std::fs::create_dir_all(&o.out_dir)?;
    let mut csvs = Vec::new();
    for (idx, r) in results.iter().enumerate() {
        let name = format!("solution_{}.csv", idx + 1);
        std::fs::write(o.out_dir.join(&name), solution_csv(r))?;
        csvs.push(name);
    }
    Ok((results, csvs))
}

fn cmd_solve(a: SolveArgs) -> Result<i32, CmdError> {
    let started = Instant::now();
    let p = load(&a.common, None)?;
    let k = compute_all(&p)?;
    let (results, csvs) = run_solve(&p, &k, &a.opts)?;
    let mut rep = RunReport::new(&p.digest);
    let mut table = String::new();
    for (r, csv) in results.iter().zip(&csvs) {
        rep.push_solve(r, Some(csv.clone()));
        render_solve(&mut table, rep.solves.len(), r, csv);
    }
    rep.wall_time_ms = Some(started.elapsed().as_secs_f64() * 1e3);
    rep.finalize();
    std::fs::write(a.opts.out_dir.join("solutions.json"), rep.to_json())?;
    match a.common.format {
        Format::Json => print!("{}", rep.to_json()),
        Format::Table => print!("{table}"),
    }
    if results.iter().any(|r| r.converged) {
        Ok(EXIT_OK)
    } else {
        Err(CmdError {
            code: EXIT_NUMERICAL,
            msg: "no seed produced a convergent iteration".into(),
        })
    }
}

fn cmd_report(a: ReportArgs) -> Result<i32, CmdError> {
    let started = Instant::now();
    let p = load(&a.common, a.f_grid)?;
    let k = compute_all(&p)?;
    let mut rep = RunReport::new(&p.digest);
    rep.set_constants(&k);
    let mut table = render_constants(&k);
    if let Some(spec) = &a.ladder {
        let ladder = parse_ladder_arg(spec)?;
        let verdict = index::multiplicity(&p, &k, &ladder)?;
        rep.set_verdict(&verdict);
        table.push('\n');
        table.push_str(&render_verdict(&verdict));
    }
    if a.solve {
        let (results, csvs) = run_solve(&p, &k, &a.opts)?;
        table.push('\n');
        for (r, csv) in results.iter().zip(&csvs) {
            rep.push_solve(r, Some(csv.clone()));
            render_solve(&mut table, rep.solves.len(), r, csv);
        }
    }
    emit(&mut rep, started, a.common.format, table);
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------------------
// request parsing

fn parse_scalar(text: &str) -> Result<Scalar, CmdError> {
    if let Some(r) = parse_rational(text) {
        return Ok(Scalar::Exact(r));
    }
    match text.trim().parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(Scalar::Float(x)),
        _ => Err(CmdError::validation(format!("cannot parse number `{text}`"))),
    }
}

fn parse_ladder_text(text: &str) -> Result<Vec<LadderEntry>, CmdError> {
    let mut out = Vec::new();
    for tok in text.split([',', '\n']) {
        let tok = tok.trim();
        if tok.is_empty() || tok.starts_with('#') {
            continue;
        }
        let (rho, kind) = tok.split_once(':').ok_or_else(|| {
            CmdError::validation(format!("bad ladder entry `{tok}`, expected RHO:KIND"))
        })?;
        out.push(LadderEntry {
            rho: parse_scalar(rho)?,
            kind: kind.parse().map_err(CmdError::validation)?,
        });
    }
    if out.is_empty() {
        return Err(CmdError::validation("empty ladder"));
    }
    Ok(out)
}

/// Inline spec or, when the argument names an existing file, its contents
/// (one or more RHO:KIND entries separated by commas or newlines).
fn parse_ladder_arg(spec: &str) -> Result<Vec<LadderEntry>, CmdError> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = std::fs::read_to_string(path)?;
        parse_ladder_text(&text)
    } else {
        parse_ladder_text(spec)
    }
}

fn parse_brackets(spec: &str) -> Result<Vec<(f64, f64)>, CmdError> {
    let mut out = Vec::new();
    for tok in spec.split(',') {
        let tok = tok.trim();
        if tok.is_empty() {
            continue;
        }
        let (lo, hi) = tok.split_once(':').ok_or_else(|| {
            CmdError::validation(format!("bad bracket `{tok}`, expected LO:HI"))
        })?;
        let lo: f64 = lo.trim().parse().map_err(|_| {
            CmdError::validation(format!("bad bracket bound `{lo}`"))
        })?;
        let hi: f64 = hi.trim().parse().map_err(|_| {
            CmdError::validation(format!("bad bracket bound `{hi}`"))
        })?;
        out.push((lo, hi));
    }
    if out.is_empty() {
        return Err(CmdError::validation("empty bracket list"));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// rendering

fn fmt_scalar(s: &Scalar) -> String {
    match s {
        Scalar::Exact(r) if r.is_integer() => s.to_string(),
        Scalar::Exact(_) => format!("{s} ({:.6})", s.to_f64()),
        Scalar::Float(x) => format!("{x}"),
    }
}

fn solution_csv(r: &SolveResult) -> String {
    let mut out = String::from("t,u,v\n");
    for (k, &t) in r.u.nodes().iter().enumerate() {
        let _ = writeln!(out, "{t},{},{}", r.u.values()[k], r.v.values()[k]);
    }
    out
}

fn render_constants(k: &TheoryConstants) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "{:<16}{:<26}{}", "per equation", "eq 1", "eq 2");
    let rows: [(&str, fn(&crate::constants::PerEquation) -> Scalar); 6] = [
        ("c_kernel", |e| e.c_kernel.clone()),
        ("tilde_c", |e| e.tilde_c.clone()),
        ("m", |e| e.m.clone()),
        ("M", |e| e.m_big.clone()),
        ("D", |e| e.d.clone()),
        ("D_under", |e| e.d_under.clone()),
    ];
    for (name, get) in rows {
        let _ = writeln!(
            t,
            "{:<16}{:<26}{}",
            name,
            fmt_scalar(&get(&k.per_equation[0])),
            fmt_scalar(&get(&k.per_equation[1]))
        );
    }
    for idx in 0..4 {
        let _ = writeln!(
            t,
            "{:<16}{:<26}{}",
            format!("theta_{}", idx + 1),
            fmt_scalar(&k.per_equation[0].theta[idx]),
            fmt_scalar(&k.per_equation[1].theta[idx])
        );
    }
    for idx in 0..4 {
        let _ = writeln!(
            t,
            "{:<16}{:<26}{}",
            format!("theta_under_{}", idx + 1),
            fmt_scalar(&k.per_equation[0].theta_under[idx]),
            fmt_scalar(&k.per_equation[1].theta_under[idx])
        );
    }
    let _ = writeln!(
        t,
        "{:<16}{:<26}{}",
        "Q",
        fmt_scalar(&k.per_equation[0].q),
        fmt_scalar(&k.per_equation[1].q)
    );
    let _ = writeln!(
        t,
        "{:<16}{:<26}{}",
        "S",
        fmt_scalar(&k.per_equation[0].s),
        fmt_scalar(&k.per_equation[1].s)
    );
    let _ = writeln!(t);
    let _ = writeln!(
        t,
        "{:<16}{:<24}{:<24}{:<24}{}",
        "per term", "(1,1)", "(1,2)", "(2,1)", "(2,2)"
    );
    let term_rows: [(&str, fn(&crate::constants::PerTerm) -> Scalar); 6] = [
        ("gamma_sup", |x| x.gamma_sup.clone()),
        ("c_gamma", |x| x.c_gamma.clone()),
        ("beta[gamma_1]", |x| x.beta_gamma[0].clone()),
        ("beta[gamma_2]", |x| x.beta_gamma[1].clone()),
        ("delta[1]", |x| x.delta_one.clone()),
        ("K integral", |x| x.kernel_functional_full.clone()),
    ];
    for (name, get) in term_rows {
        let _ = writeln!(
            t,
            "{:<16}{:<24}{:<24}{:<24}{}",
            name,
            fmt_scalar(&get(&k.per_term[0][0])),
            fmt_scalar(&get(&k.per_term[0][1])),
            fmt_scalar(&get(&k.per_term[1][0])),
            fmt_scalar(&get(&k.per_term[1][1]))
        );
    }
    let _ = writeln!(
        t,
        "{:<16}{:<24}{:<24}{:<24}{}",
        "K on [a,b]",
        fmt_scalar(&k.per_term[0][0].kernel_functional_ab),
        fmt_scalar(&k.per_term[0][1].kernel_functional_ab),
        fmt_scalar(&k.per_term[1][0].kernel_functional_ab),
        fmt_scalar(&k.per_term[1][1].kernel_functional_ab)
    );
    let _ = writeln!(t);
    let _ = writeln!(t, "c = {}", fmt_scalar(&k.c));
    t
}

fn render_condition(t: &mut String, c: &RhoCondition) {
    let _ = writeln!(
        t,
        "condition {} at rho = {}: {} (margin {:+.6})",
        c.kind,
        fmt_scalar(&c.rho),
        if c.satisfied { "SATISFIED" } else { "not satisfied" },
        c.margin
    );
    for (i, e) in c.per_equation.iter().enumerate() {
        let x = &e.f_extremum;
        let provenance = match x.grid {
            0 => x.source.to_string(),
            g => format!("{}, grid {g}", x.source),
        };
        let _ = writeln!(
            t,
            "  eq {}: lhs {} vs 1, threshold {}, f-extremum {} [{provenance}], {}",
            i + 1,
            fmt_scalar(&e.lhs),
            fmt_scalar(&e.threshold),
            fmt_scalar(&x.value),
            if e.satisfied { "satisfied" } else { "not satisfied" }
        );
    }
}

fn render_verdict(v: &MultiplicityVerdict) -> String {
    let mut t = String::new();
    for c in &v.conditions {
        render_condition(&mut t, c);
    }
    if !v.gap_checks.is_empty() {
        let _ = writeln!(t, "gap checks:");
        for g in &v.gap_checks {
            let _ = writeln!(
                t,
                "  {}: {} < {}  {}",
                g.constraint,
                fmt_scalar(&g.lhs),
                fmt_scalar(&g.rhs),
                if g.satisfied { "ok" } else { "VIOLATED" }
            );
        }
    }
    let _ = writeln!(
        t,
        "verdict: clause {}, {}, guaranteed count {}",
        v.clause,
        if v.established {
            "established"
        } else {
            "NOT established"
        },
        v.guaranteed_count
    );
    t
}

fn render_solve(t: &mut String, idx: usize, r: &SolveResult, csv: &str) {
    let cone = |b: bool| if b { "yes" } else { "no" };
    let bracket = match r.bracket {
        Some((lo, hi)) => format!(", bracket [{lo}, {hi}]"),
        None => String::new(),
    };
    let _ = writeln!(
        t,
        "solution {idx}: norm {:.6}, residual {:.3e} (probed {:.3e}), {} iterations, \
         {}, in cone [u {}, v {}]{bracket}, csv {csv}",
        r.norm,
        r.residual,
        r.residual_probed,
        r.iterations,
        if r.converged { "converged" } else { "NOT converged" },
        cone(r.in_cone[0]),
        cone(r.in_cone[1]),
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_specs_parse_inline_and_reject_garbage() {
        let l = parse_ladder_text("0.125:star, 1:one, 11:zero").unwrap();
        assert_eq!(l.len(), 3);
        assert_eq!(l[0].rho, Scalar::ratio(1, 8));
        assert_eq!(l[0].kind, ConditionKind::Index0Star);
        assert_eq!(l[1].kind, ConditionKind::Index1);
        assert_eq!(l[2].rho, Scalar::from_int(11));

        assert_eq!(parse_ladder_text("").unwrap_err().code, EXIT_VALIDATION);
        assert_eq!(parse_ladder_text("1").unwrap_err().code, EXIT_VALIDATION);
        assert_eq!(
            parse_ladder_text("1:sideways").unwrap_err().code,
            EXIT_VALIDATION
        );
        // newline separated with comments, as a ladder file would hold
        let l = parse_ladder_text("# stages\n1/8:star\n1:one\n").unwrap();
        assert_eq!(l.len(), 2);
    }

    #[test]
    fn bracket_specs_parse() {
        assert_eq!(
            parse_brackets("0:1, 5:20").unwrap(),
            vec![(0.0, 1.0), (5.0, 20.0)]
        );
        assert_eq!(parse_brackets("").unwrap_err().code, EXIT_VALIDATION);
        assert_eq!(parse_brackets("3").unwrap_err().code, EXIT_VALIDATION);
        assert_eq!(parse_brackets("a:b").unwrap_err().code, EXIT_VALIDATION);
    }

    #[test]
    fn scalars_parse_rational_first() {
        assert_eq!(parse_scalar("1/8").unwrap(), Scalar::ratio(1, 8));
        assert_eq!(parse_scalar("0.125").unwrap(), Scalar::ratio(1, 8));
        assert_eq!(parse_scalar("1e-3").unwrap(), Scalar::ratio(1, 1000));
        assert!(parse_scalar("eleven").is_err());
    }

    #[test]
    fn error_codes_follow_the_contract() {
        let e: CmdError = LoadError::Schema("x".into()).into();
        assert_eq!(e.code, EXIT_VALIDATION);
        let e: CmdError = ConstError::Invariant("D_1 = 0 must be > 0".into()).into();
        assert_eq!(e.code, EXIT_VALIDATION);
        let e: CmdError = IndexError::Ladder("empty".into()).into();
        assert_eq!(e.code, EXIT_VALIDATION);
        let e: CmdError = SolveError::Diverged {
            norm: 1e9,
            ceiling: 1e8,
            iteration: 7,
        }
        .into();
        assert_eq!(e.code, EXIT_NUMERICAL);
        let e: CmdError = SolveError::MissingFn(1, 1, "H").into();
        assert_eq!(e.code, EXIT_VALIDATION);
    }

    #[test]
    fn cli_grammar_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
