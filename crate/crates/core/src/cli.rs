//! Command-line front end: argument parsing, command execution and the
//! JSON/CSV report writers.
//!
//! Exit codes: 0 when every verdict passes (or an expected violation is
//! found), 1 when a proven inequality appears violated or a sharpness limit
//! is missed, 2 on numerical failure, invalid usage or I/O errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::families::{
    find_counterexample, geometric_schedule, make_profile, sharpness_sweep, CounterexampleOutcome,
    CounterexampleReport, FamilyId, SharpnessReport,
};
use crate::functionals::{
    inequality_margin, ExponentConfig, InequalityId, Margin, Regime, SharpnessForm, ZonalProfile,
};
use crate::geometry::{
    verify_identities_with, IdentityReport, IdentityTolerances, SamplingOptions,
};
use crate::quadrature::QuadratureSpec;

pub const THREADS_ENV: &str = "HARDY_SPHERE_THREADS";
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_SAMPLES: usize = 200;
/// Relative slack before a negative margin counts as a violation.
pub const DEFAULT_MARGIN_TOL: f64 = 1e-9;
/// Relative distance between an extrapolated limit and its target.
pub const DEFAULT_LIMIT_TOL: f64 = 0.01;

#[derive(Debug, Parser)]
#[command(
    name = "hardy-sphere",
    version,
    about = "Numerical checks of sharp Hardy inequalities on the unit sphere"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Finite-difference check of the geometric identities.
    VerifyLemmas(Flags),
    /// Inequality margins over a suite of zonal profiles.
    Check(Flags),
    /// Sharpness ratio along an extremal family as ε → 0.
    Sweep(Flags),
    /// Scan for violations of the strengthened inequality.
    Counterexample(Flags),
    /// Every check at fixed representative configurations.
    ReportAll(Flags),
}

#[derive(Debug, Args)]
struct Flags {
    /// Ambient dimension N of S^{N−1} ⊂ R^N.
    #[arg(long = "n")]
    n: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, value_enum)]
    regime: Option<RegimeArg>,
    #[arg(long)]
    ineq: Option<String>,
    /// `shrp1`..`shrp3` together with `--ineq`, or a full name such as `f3shrp3`.
    #[arg(long)]
    form: Option<String>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long, default_value_t = 0.2)]
    eps_start: f64,
    #[arg(long, default_value_t = 0.5)]
    eps_factor: f64,
    #[arg(long, default_value_t = 8)]
    steps: usize,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RegimeArg {
    Sub,
    Crit,
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::Sub => Regime::Sub,
            RegimeArg::Crit => Regime::Crit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    VerifyLemmas,
    Check,
    Sweep,
    Counterexample,
    ReportAll,
}

/// What to run, validated.
#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    /// Dimensions to check; `N = 2..=6` unless `--n` is given.
    Lemmas {
        dims: Vec<usize>,
        tolerances: IdentityTolerances,
    },
    Check {
        inequality: InequalityId,
        config: ExponentConfig,
        tol: f64,
    },
    Sweep {
        form: SharpnessForm,
        family: FamilyId,
        config: ExponentConfig,
        tol: f64,
    },
    Counterexample {
        config: ExponentConfig,
    },
    ReportAll {
        tolerances: IdentityTolerances,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: CommandKind,
    pub task: Task,
    pub schedule: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub format: OutputFormat,
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum ParseError {
    /// Help or version output requested; not an error.
    Display(String),
    Usage(String),
}

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParseError::Display(s) | ParseError::Usage(s) => f.write_str(s),
        }
    }
}

fn usage(msg: impl Into<String>) -> ParseError {
    ParseError::Usage(msg.into())
}

fn from_lib(e: Error) -> ParseError {
    match e {
        Error::InvalidInput(m) | Error::Domain(m) => ParseError::Usage(m),
        other => ParseError::Usage(other.to_string()),
    }
}

/// `argv[0]` is the program name.
pub fn parse_args<I, T>(argv: I) -> std::result::Result<RunConfig, ParseError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            ParseError::Display(e.to_string())
        }
        _ => ParseError::Usage(e.render().to_string()),
    })?;
    let (command, flags) = match cli.command {
        Cmd::VerifyLemmas(f) => (CommandKind::VerifyLemmas, f),
        Cmd::Check(f) => (CommandKind::Check, f),
        Cmd::Sweep(f) => (CommandKind::Sweep, f),
        Cmd::Counterexample(f) => (CommandKind::Counterexample, f),
        Cmd::ReportAll(f) => (CommandKind::ReportAll, f),
    };
    if !(flags.eps_start > 0.0)
        || !(flags.eps_factor > 0.0 && flags.eps_factor < 1.0)
        || flags.steps == 0
    {
        return Err(usage(
            "the ε schedule needs --eps-start > 0, 0 < --eps-factor < 1 and --steps >= 1",
        ));
    }
    if let Some(t) = flags.tol {
        if !(t > 0.0) {
            return Err(usage(format!("--tol must be positive, got {t}")));
        }
    }
    if flags.samples == 0 {
        return Err(usage("--samples must be at least 1"));
    }
    let schedule = geometric_schedule(flags.eps_start, flags.eps_factor, flags.steps);
    let identity_tols = || {
        flags
            .tol
            .map(IdentityTolerances::uniform)
            .unwrap_or_default()
    };

    let task = match command {
        CommandKind::VerifyLemmas => {
            let dims = match flags.n {
                Some(n) if n < 2 => {
                    return Err(usage(format!("verify-lemmas requires N >= 2, got N = {n}")))
                }
                Some(n) => vec![n],
                None => (2..=6).collect(),
            };
            Task::Lemmas {
                dims,
                tolerances: identity_tols(),
            }
        }
        CommandKind::Check => {
            let inequality = InequalityId::parse(
                flags
                    .ineq
                    .as_deref()
                    .ok_or_else(|| usage("check requires --ineq"))?,
            )
            .map_err(from_lib)?;
            let config = config_for(&flags, inequality.regime())?;
            inequality.check_config(&config).map_err(from_lib)?;
            Task::Check {
                inequality,
                config,
                tol: flags.tol.unwrap_or(DEFAULT_MARGIN_TOL),
            }
        }
        CommandKind::Sweep => {
            let form_arg = flags
                .form
                .as_deref()
                .ok_or_else(|| usage("sweep requires --form"))?;
            let name = match (&flags.ineq, form_arg.starts_with('f')) {
                (_, true) => form_arg.to_string(),
                (Some(i), false) => format!("{i}{form_arg}"),
                (None, false) => return Err(usage("a short --form needs --ineq")),
            };
            let form = SharpnessForm::parse(&name).map_err(from_lib)?;
            if let Some(i) = &flags.ineq {
                if InequalityId::parse(i).map_err(from_lib)? != form.inequality() {
                    return Err(usage(format!(
                        "form {} does not belong to inequality {i}",
                        form.name()
                    )));
                }
            }
            let family = match &flags.family {
                Some(f) => FamilyId::parse(f).map_err(from_lib)?,
                None => FamilyId::for_form(form),
            };
            if family != FamilyId::for_form(form) {
                return Err(usage(format!(
                    "{} is paired with family {}, not {}",
                    form.name(),
                    FamilyId::for_form(form).name(),
                    family.name()
                )));
            }
            let config = config_for(&flags, form.inequality().regime())?;
            form.check_config(&config).map_err(from_lib)?;
            Task::Sweep {
                form,
                family,
                config,
                tol: flags.tol.unwrap_or(DEFAULT_LIMIT_TOL),
            }
        }
        CommandKind::Counterexample => {
            if flags.tol.is_some() {
                return Err(usage(
                    "counterexample takes no --tol; the violation threshold is fixed",
                ));
            }
            Task::Counterexample {
                config: config_for(&flags, Regime::Sub)?,
            }
        }
        CommandKind::ReportAll => {
            if flags.n.is_some()
                || flags.p.is_some()
                || flags.ineq.is_some()
                || flags.form.is_some()
            {
                return Err(usage(
                    "report-all runs fixed configurations; drop --n/--p/--ineq/--form",
                ));
            }
            if flags.format == OutputFormat::Csv {
                return Err(usage("report-all writes JSON only"));
            }
            Task::ReportAll {
                tolerances: identity_tols(),
            }
        }
    };
    Ok(RunConfig {
        command,
        task,
        schedule,
        samples: flags.samples,
        seed: flags.seed,
        format: flags.format,
        out: flags.out,
    })
}

fn config_for(flags: &Flags, implied: Regime) -> std::result::Result<ExponentConfig, ParseError> {
    let regime: Regime = flags.regime.map(Into::into).unwrap_or(implied);
    if regime != implied {
        return Err(usage(format!(
            "this command needs --regime {}",
            regime_name(implied)
        )));
    }
    let n = flags.n.ok_or_else(|| usage("--n is required"))?;
    let cfg = match (regime, flags.p) {
        (Regime::Crit, None) => ExponentConfig::critical(n),
        (_, Some(p)) => ExponentConfig::new(n, p, regime),
        (Regime::Sub, None) => return Err(usage("--p is required in the subcritical regime")),
    };
    cfg.map_err(from_lib)
}

fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::Sub => "sub",
        Regime::Crit => "crit",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass = 0,
    Violation = 1,
    Failure = 2,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaBlock {
    pub ambient_dim: usize,
    pub identities: Vec<IdentityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    pub samples: usize,
    pub seed: u64,
    pub tolerances: IdentityTolerances,
    pub dimensions: Vec<LemmaBlock>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    #[serde(flatten)]
    pub margin: Margin,
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Skipped {
    pub profile: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub inequality: InequalityId,
    pub proven: bool,
    pub config: ExponentConfig,
    pub tolerance: f64,
    pub rows: Vec<CheckRow>,
    pub skipped: Vec<Skipped>,
    pub violations: usize,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FullReport {
    pub lemmas: LemmaReport,
    pub checks: Vec<CheckReport>,
    pub sweeps: Vec<SharpnessReport>,
    pub counterexamples: Vec<CounterexampleReport>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Report {
    Lemmas(LemmaReport),
    Check(CheckReport),
    Sweep(SharpnessReport),
    Counterexample(CounterexampleReport),
    All(FullReport),
}

pub fn run_lemmas(
    dims: &[usize],
    samples: usize,
    tolerances: &IdentityTolerances,
    seed: u64,
) -> Result<LemmaReport> {
    let mut blocks = Vec::new();
    for &n in dims {
        let identities =
            verify_identities_with(n, samples, tolerances, &SamplingOptions::default(), seed)?;
        blocks.push(LemmaBlock {
            ambient_dim: n,
            identities,
        });
    }
    let passed = blocks.iter().all(|b| b.identities.iter().all(|r| r.passed));
    Ok(LemmaReport {
        samples,
        seed,
        tolerances: *tolerances,
        dimensions: blocks,
        passed,
    })
}

/// Constants, `cos d` polynomials up to degree 4, and the extremal families
/// of the regime at the first three admissible ε of the schedule.
pub fn check_profiles(cfg: &ExponentConfig, schedule: &[f64]) -> Vec<ZonalProfile> {
    let mut out = vec![
        ZonalProfile::constant(1.0),
        ZonalProfile::constant(2.5),
        ZonalProfile::cos_polynomial(vec![0.0, 1.0]),
        ZonalProfile::cos_polynomial(vec![1.0, 0.0, 1.0]),
        ZonalProfile::cos_polynomial(vec![0.5, -1.0, 0.0, 2.0]),
        ZonalProfile::cos_polynomial(vec![1.0, 0.3, -2.0, 0.0, 1.5]),
        ZonalProfile::cos_polynomial(vec![0.0, 0.0, 0.0, 0.0, 1.0]),
    ];
    for fam in FamilyId::ALL
        .into_iter()
        .filter(|f| f.regime() == cfg.regime())
    {
        for &eps in schedule
            .iter()
            .filter(|&&e| make_profile(fam, cfg, e).is_ok())
            .take(3)
        {
            out.push(make_profile(fam, cfg, eps).expect("filtered on success"));
        }
    }
    out
}

pub fn run_check(
    id: InequalityId,
    cfg: &ExponentConfig,
    schedule: &[f64],
    tol: f64,
    spec: &QuadratureSpec,
) -> Result<CheckReport> {
    id.check_config(cfg)?;
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for u in check_profiles(cfg, schedule) {
        match inequality_margin(id, &u, cfg, spec) {
            Ok(margin) => {
                let violation = margin.is_violation(tol);
                rows.push(CheckRow { margin, violation });
            }
            // Profiles outside the domain of a functional are not counterexamples.
            Err(Error::Domain(reason)) => skipped.push(Skipped {
                profile: u.label.clone(),
                reason,
            }),
            Err(e) => return Err(e),
        }
    }
    let violations = rows.iter().filter(|r| r.violation).count();
    let note = (id == InequalityId::Inqfls).then(|| {
        if cfg.p() < cfg.n() / 2.0 {
            "the constant profile is expected to violate for 1 < p < N/2".to_string()
        } else {
            "no violation is predicted by the constant profile for p >= N/2".to_string()
        }
    });
    Ok(CheckReport {
        inequality: id,
        proven: id.is_proven(),
        config: *cfg,
        tolerance: tol,
        rows,
        skipped,
        violations,
        note,
    })
}

impl CheckReport {
    pub fn status(&self) -> Status {
        if self.proven {
            if self.violations == 0 {
                Status::Pass
            } else {
                Status::Violation
            }
        } else {
            let expected = self.config.p() < self.config.n() / 2.0;
            let one = ZonalProfile::constant(1.0).label;
            let constant_violates = self
                .rows
                .iter()
                .any(|r| r.margin.profile == one && r.violation);
            if !expected || constant_violates {
                Status::Pass
            } else {
                Status::Violation
            }
        }
    }
}

fn sweep_status(r: &SharpnessReport) -> Status {
    if r.verdict {
        Status::Pass
    } else {
        Status::Violation
    }
}

fn counterexample_status(r: &CounterexampleReport) -> Status {
    match r.outcome {
        CounterexampleOutcome::Missed { .. } => Status::Violation,
        _ => Status::Pass,
    }
}

/// Fixed configurations exercised by `report-all`.
pub fn report_all(
    schedule: &[f64],
    samples: usize,
    tolerances: &IdentityTolerances,
    seed: u64,
    spec: &QuadratureSpec,
) -> Result<(FullReport, Status)> {
    let mut status = Status::Pass;
    let mut failures = Vec::new();
    let lemmas = run_lemmas(&[2, 3, 4, 5, 6], samples, tolerances, seed)?;
    if !lemmas.passed {
        status = status.max(Status::Violation);
    }
    let sub = |n, p| ExponentConfig::subcritical(n, p).expect("fixed admissible configuration");
    let crit = |n| ExponentConfig::critical(n).expect("fixed admissible configuration");

    let mut checks = Vec::new();
    for (id, cfg) in [
        (InequalityId::F1, sub(5, 2.0)),
        (InequalityId::F1, sub(7, 3.0)),
        (InequalityId::F3, sub(5, 2.0)),
        (InequalityId::F3, sub(6, 2.5)),
        (InequalityId::Fc1, crit(3)),
        (InequalityId::Fc1, crit(4)),
        (InequalityId::Fc2, crit(3)),
        (InequalityId::Fc2, crit(4)),
        (InequalityId::Inqfls, sub(7, 2.0)),
    ] {
        match run_check(id, &cfg, schedule, DEFAULT_MARGIN_TOL, spec) {
            Ok(r) => {
                status = status.max(r.status());
                checks.push(r);
            }
            Err(e) => {
                status = status.max(Status::Failure);
                failures.push(format!(
                    "check {} N = {}: {e}",
                    id.name(),
                    cfg.ambient_dim()
                ));
            }
        }
    }

    let mut sweeps = Vec::new();
    for form in SharpnessForm::ALL {
        let cfg = match (form.inequality().regime(), form) {
            (Regime::Crit, _) => crit(3),
            (_, SharpnessForm::F1shrp3) => sub(7, 2.0),
            _ => sub(5, 2.0),
        };
        match sharpness_sweep(
            form,
            FamilyId::for_form(form),
            &cfg,
            schedule,
            spec,
            DEFAULT_LIMIT_TOL,
        ) {
            Ok(r) => {
                status = status.max(sweep_status(&r));
                sweeps.push(r);
            }
            Err(e) => {
                status = status.max(Status::Failure);
                failures.push(format!("sweep {}: {e}", form.name()));
            }
        }
    }

    let mut counterexamples = Vec::new();
    for cfg in [sub(7, 2.0), sub(4, 2.0)] {
        match find_counterexample(&cfg, schedule, spec) {
            Ok(r) => {
                status = status.max(counterexample_status(&r));
                counterexamples.push(r);
            }
            Err(e) => {
                status = status.max(Status::Failure);
                failures.push(format!("counterexample N = {}: {e}", cfg.ambient_dim()));
            }
        }
    }
    Ok((
        FullReport {
            lemmas,
            checks,
            sweeps,
            counterexamples,
            failures,
        },
        status,
    ))
}

/// Runs the configured command and returns the report with its exit status.
pub fn execute(cfg: &RunConfig) -> Result<(Report, Status)> {
    let spec = QuadratureSpec::default();
    Ok(match &cfg.task {
        Task::Lemmas { dims, tolerances } => {
            let r = run_lemmas(dims, cfg.samples, tolerances, cfg.seed)?;
            let s = if r.passed {
                Status::Pass
            } else {
                Status::Violation
            };
            (Report::Lemmas(r), s)
        }
        Task::Check {
            inequality,
            config,
            tol,
        } => {
            let r = run_check(*inequality, config, &cfg.schedule, *tol, &spec)?;
            let s = r.status();
            (Report::Check(r), s)
        }
        Task::Sweep {
            form,
            family,
            config,
            tol,
        } => {
            let r = sharpness_sweep(*form, *family, config, &cfg.schedule, &spec, *tol)?;
            let s = sweep_status(&r);
            (Report::Sweep(r), s)
        }
        Task::Counterexample { config } => {
            let r = find_counterexample(config, &cfg.schedule, &spec)?;
            let s = counterexample_status(&r);
            (Report::Counterexample(r), s)
        }
        Task::ReportAll { tolerances } => {
            let (r, s) = report_all(&cfg.schedule, cfg.samples, tolerances, cfg.seed, &spec)?;
            (Report::All(r), s)
        }
    })
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Renders a report in the requested format.
pub fn render(report: &Report, format: OutputFormat) -> Result<String> {
    if format == OutputFormat::Json {
        let mut s = serde_json::to_string_pretty(report)
            .map_err(|e| Error::InvalidInput(format!("serialisation failed: {e}")))?;
        s.push('\n');
        return Ok(s);
    }
    let mut s = String::new();
    match report {
        Report::Sweep(r) => {
            s.push_str("eps,ratio_quadrature,ratio_closed_form,rel_gap,target\n");
            for row in &r.rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    num(row.eps),
                    num(row.ratio_quadrature),
                    opt(row.ratio_closed_form),
                    opt(row.rel_gap),
                    num(r.target)
                );
            }
            let _ = writeln!(
                s,
                "{},{},,{},{}",
                num(0.0),
                num(r.extrapolated_limit),
                num(r.relative_gap),
                num(r.target)
            );
        }
        Report::Lemmas(r) => {
            s.push_str("n,identity,samples,excluded,max_deviation,tolerance,passed\n");
            for b in &r.dimensions {
                for i in &b.identities {
                    let _ = writeln!(
                        s,
                        "{},{:?},{},{},{},{},{}",
                        b.ambient_dim,
                        i.identity,
                        i.sample_count,
                        i.excluded,
                        num(i.max_deviation),
                        num(i.tolerance),
                        i.passed
                    );
                }
            }
        }
        Report::Check(r) => {
            s.push_str("profile,lhs,rhs,margin,violation\n");
            for row in &r.rows {
                let m = &row.margin;
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    csv_field(&m.profile),
                    num(m.lhs),
                    num(m.rhs),
                    num(m.margin),
                    row.violation
                );
            }
        }
        Report::Counterexample(r) => {
            s.push_str("eps,excess_quadrature,excess_closed_form,rel_gap,violates\n");
            for row in &r.rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    num(row.eps),
                    num(row.excess_quadrature),
                    num(row.excess_closed_form),
                    num(row.rel_gap),
                    row.violates
                );
            }
        }
        Report::All(_) => return Err(Error::InvalidInput("report-all writes JSON only".into())),
    }
    Ok(s)
}

/// One-line summary for stderr.
pub fn summary(report: &Report, status: Status) -> String {
    let tail = match status {
        Status::Pass => "pass",
        Status::Violation => "VIOLATION",
        Status::Failure => "FAILURE",
    };
    let head = match report {
        Report::Lemmas(r) => format!(
            "verify-lemmas: {} dimension(s), {} samples",
            r.dimensions.len(),
            r.samples
        ),
        Report::Check(r) => format!(
            "check {}: {} profiles, {} skipped, {} violation(s)",
            r.inequality.name(),
            r.rows.len(),
            r.skipped.len(),
            r.violations
        ),
        Report::Sweep(r) => format!(
            "sweep {}: limit {:.10} target {:.10} gap {:.2e}",
            r.form.name(),
            r.extrapolated_limit,
            r.target,
            r.relative_gap
        ),
        Report::Counterexample(r) => match &r.outcome {
            CounterexampleOutcome::Found { eps, excess } => {
                format!("counterexample: found at eps = {eps}, excess {excess:.6e}")
            }
            CounterexampleOutcome::Undetermined { note } => {
                format!("counterexample: undetermined ({note})")
            }
            CounterexampleOutcome::NotFound { note } => format!("counterexample: none ({note})"),
            CounterexampleOutcome::Missed { note } => format!("counterexample: missed ({note})"),
        },
        Report::All(r) => format!(
            "report-all: {} checks, {} sweeps, {} scans, {} failure(s)",
            r.checks.len(),
            r.sweeps.len(),
            r.counterexamples.len(),
            r.failures.len()
        ),
    };
    format!("{head}: {tail}")
}

/// Caps the rayon pool from [`THREADS_ENV`] (`0` or unset means automatic).
pub fn configure_threads() -> std::result::Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("{THREADS_ENV} must be a non-negative integer, got '{raw}'"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| format!("cannot configure thread pool: {e}"))?;
    }
    Ok(())
}

/// Parses, executes, writes the report and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cfg = match parse_args(argv) {
        Ok(c) => c,
        Err(ParseError::Display(s)) => {
            print!("{s}");
            return 0;
        }
        Err(ParseError::Usage(s)) => {
            eprintln!("{}", s.trim_end());
            return Status::Failure as i32;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("{e}");
        return Status::Failure as i32;
    }
    let (report, status) = match execute(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return Status::Failure as i32;
        }
    };
    let text = match render(&report, cfg.format) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return Status::Failure as i32;
        }
    };
    let written = match &cfg.out {
        Some(path) => {
            std::fs::write(path, &text).map_err(|e| format!("cannot write {}: {e}", path.display()))
        }
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| format!("cannot write to stdout: {e}"))
        }
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return Status::Failure as i32;
    }
    eprintln!("{}", summary(&report, status));
    status as i32
}
