//! Command-line harness.
//!
//! | subcommand       | output                                                  |
//! |------------------|---------------------------------------------------------|
//! | `mms-demo`       | branch table for one generalized measurement of a qubit |
//! | `collapse-sweep` | `theta,N,S_total,S_binom,S0,fraction`                   |
//! | `nstar`          | `theta,n_star_fit,n_star_asymptotic,rel_err`            |
//! | `history-run`    | history density matrix, branches, conditionals          |
//!
//! Numbers are printed with 12 significant digits. Exit codes: 2 for
//! usage and spec-file errors, 3 for numeric-domain errors, 4 for I/O.

pub mod parse;

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::collapse::{default_theta_grid, estimate_nstar, extraction_curve, nstar_asymptotic, theta_grid};
use crate::error::Error;
use crate::gates::RotationParams;
use crate::history::{
    apply_mms_to_history, conditional_probability, history_density_matrix, index_bits,
    BranchTree, HistoryDensityMatrix,
};
use crate::mms::{mms_measure, sample_outcome, ReadoutMode};
use crate::qstate::{QubitLabel, Register, StateVector, Tensor, C64};

pub use parse::{parse_history_spec, serialize_spec, ParseError, ParseErrorKind, SpecDocument};

pub const DEFAULT_SEED: u64 = 20_240_601;

/// Upper bound on the automatic `N` range of `nstar`.
pub const NSTAR_AUTO_CAP: usize = 100_000;

#[derive(Debug, Parser)]
#[command(name = "mms", version, about = "Measurement-scheme simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Write output here instead of stdout.
    #[arg(short, long, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Branch table for one generalized measurement of a single qubit.
    MmsDemo(DemoArgs),
    /// Extraction curves over a theta grid.
    CollapseSweep(SweepArgs),
    /// Fitted against asymptotic N* over a theta grid.
    Nstar(NstarArgs),
    /// History density matrix and branches for a spec file.
    HistoryRun(HistoryArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum ModeArg {
    #[default]
    ExplicitX,
    Dephase,
}

impl From<ModeArg> for ReadoutMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::ExplicitX => ReadoutMode::ExplicitX,
            ModeArg::Dephase => ReadoutMode::Dephase,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DemoArgs {
    /// Probability of |0>.
    #[arg(long, default_value_t = 0.5)]
    pub c0_sq: f64,
    /// Relative phase of the |1> amplitude.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub phase: f64,
    #[arg(long, default_value_t = 0.3, allow_hyphen_values = true)]
    pub theta: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub phi: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::ExplicitX)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[arg(long, default_value_t = 0.02)]
    pub theta_start: f64,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_2 - 0.02)]
    pub theta_stop: f64,
    #[arg(long, default_value_t = 0.02)]
    pub theta_step: f64,
    /// Skip grid points closer than this to pi/4.
    #[arg(long, default_value_t = 0.0)]
    pub exclude: f64,
    /// Probability of |0> in the initial state.
    #[arg(long, default_value_t = 0.5)]
    pub c0_sq: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 200)]
    pub n_max: usize,
}

#[derive(Debug, Clone, Args)]
pub struct NstarArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Curve length; by default `10 N*` for each theta.
    #[arg(long)]
    pub n_max: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct HistoryArgs {
    pub spec: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}:{source}")]
    Parse { path: String, source: ParseError },
    #[error("invalid argument: {0}")]
    Usage(String),
    #[error(transparent)]
    Numeric(#[from] Error),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Usage(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

/// Validated sweep grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub thetas: Vec<f64>,
    pub c0_sq: f64,
}

impl RunConfig {
    pub fn from_grid(g: &GridArgs) -> Result<Self, CliError> {
        let finite = [g.theta_start, g.theta_stop, g.theta_step, g.exclude, g.c0_sq];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(CliError::Usage("non-finite grid parameter".into()));
        }
        if g.theta_step <= 0.0 {
            return Err(CliError::Usage(format!("theta step {} must be positive", g.theta_step)));
        }
        if g.theta_stop < g.theta_start {
            return Err(CliError::Usage("theta range is empty".into()));
        }
        if !(0.0..=1.0).contains(&g.c0_sq) {
            return Err(CliError::Usage(format!("c0-sq {} outside [0, 1]", g.c0_sq)));
        }
        let thetas = theta_grid(g.theta_start, g.theta_stop, g.theta_step, g.exclude);
        if thetas.is_empty() {
            return Err(CliError::Usage("every grid point is excluded".into()));
        }
        Ok(Self {
            thetas,
            c0_sq: g.c0_sq,
        })
    }

    pub fn default_grid(exclude: f64) -> Self {
        Self {
            thetas: default_theta_grid(exclude),
            c0_sq: 0.5,
        }
    }
}

/// `%.12g`-style formatting.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mant.to_string()), exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn bits(b: &[u8]) -> String {
    if b.is_empty() {
        "-".into()
    } else {
        b.iter().map(|x| char::from(b'0' + x)).collect()
    }
}

fn mms_demo(a: &DemoArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if ![a.c0_sq, a.phase, a.theta, a.phi].iter().all(|x| x.is_finite()) {
        return Err(CliError::Usage("non-finite parameter".into()));
    }
    if !(0.0..=1.0).contains(&a.c0_sq) {
        return Err(CliError::Usage(format!("c0-sq {} outside [0, 1]", a.c0_sq)));
    }
    let c0 = C64::new(a.c0_sq.sqrt(), 0.0);
    let c1 = C64::from_polar((1.0 - a.c0_sq).sqrt(), a.phase);
    let s = QubitLabel::System(0);
    let anc = QubitLabel::A(1);
    let sys = StateVector::qubit(s, c0, c1)?;
    let premeasured = crate::mms::premeasure(
        &sys.tensor(&StateVector::zeros(Register::new([anc])?))?,
        s,
        anc,
        None,
    )?;
    let outcome = mms_measure(&premeasured, anc, RotationParams::new(a.theta, a.phi), a.mode.into())?;
    writeln!(out, "r,p_r,post1_re,post1_im,post0_re,post0_im")?;
    for b in &outcome.branches {
        let (p1, p0) = (b.post_state.amplitude(1), b.post_state.amplitude(0));
        writeln!(
            out,
            "{},{},{},{},{},{}",
            b.r,
            fmt_num(b.probability),
            fmt_num(p1.re),
            fmt_num(p1.im),
            fmt_num(p0.re),
            fmt_num(p0.im)
        )?;
    }
    let sampled = sample_outcome(&outcome.branches, a.seed)?;
    writeln!(out, "sampled_r,seed")?;
    writeln!(out, "{},{}", sampled.r, a.seed)?;
    Ok(())
}

fn collapse_sweep(a: &SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = RunConfig::from_grid(&a.grid)?;
    if a.n_max == 0 {
        return Err(CliError::Usage("n-max must be positive".into()));
    }
    let blocks: Vec<Result<String, Error>> = cfg
        .thetas
        .par_iter()
        .map(|&th| {
            let c = extraction_curve(cfg.c0_sq, 1.0 - cfg.c0_sq, th, a.n_max)?;
            let mut s = String::new();
            for p in &c.points {
                s.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    fmt_num(th),
                    p.n,
                    fmt_num(p.s_total),
                    fmt_num(p.s_binom),
                    fmt_num(c.s0),
                    fmt_num(p.fraction)
                ));
            }
            Ok(s)
        })
        .collect();
    writeln!(out, "theta,N,S_total,S_binom,S0,fraction")?;
    for b in blocks {
        out.write_all(b?.as_bytes())?;
    }
    Ok(())
}

/// Default curve length for `theta`: ten asymptotic collapse scales.
pub fn auto_n_max(theta: f64) -> usize {
    let n = (10.0 * nstar_asymptotic(theta)).ceil();
    if n.is_finite() {
        (n as usize).clamp(50, NSTAR_AUTO_CAP)
    } else {
        NSTAR_AUTO_CAP
    }
}

fn nstar(a: &NstarArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = RunConfig::from_grid(&a.grid)?;
    if a.n_max == Some(0) {
        return Err(CliError::Usage("n-max must be positive".into()));
    }
    let rows: Vec<Result<String, Error>> = cfg
        .thetas
        .par_iter()
        .map(|&th| {
            let n_max = a.n_max.unwrap_or_else(|| auto_n_max(th));
            let c = extraction_curve(cfg.c0_sq, 1.0 - cfg.c0_sq, th, n_max)?;
            let asym = nstar_asymptotic(th);
            let (fit, rel) = match estimate_nstar(&c) {
                Ok(e) => (e.n_star_fit, e.relative_error()),
                Err(Error::InsufficientData(_)) => (f64::NAN, f64::NAN),
                Err(e) => return Err(e),
            };
            Ok(format!("{},{},{},{}\n", fmt_num(th), fmt_num(fit), fmt_num(asym), fmt_num(rel)))
        })
        .collect();
    writeln!(out, "theta,n_star_fit,n_star_asymptotic,rel_err")?;
    for r in rows {
        out.write_all(r?.as_bytes())?;
    }
    Ok(())
}

/// Writes the history report for an already parsed spec.
pub fn write_history_report(
    d: &HistoryDensityMatrix,
    tree: &BranchTree,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let n = d.n();
    writeln!(out, "# events: {}", d.labels.join(" "))?;
    writeln!(out, "alpha,alpha_prime,re,im")?;
    for i in 0..d.entries.nrows() {
        for j in 0..d.entries.ncols() {
            let z = d.entries[(i, j)];
            writeln!(
                out,
                "{},{},{},{}",
                bits(&index_bits(i, n)),
                bits(&index_bits(j, n)),
                fmt_num(z.re),
                fmt_num(z.im)
            )?;
        }
    }
    writeln!(out, "# measured: {}", tree.measured.join(" "))?;
    writeln!(out, "# unmeasured: {}", tree.unmeasured.join(" "))?;
    let k = tree.unmeasured.len();
    for b in &tree.branches {
        writeln!(out, "beta,p_beta")?;
        writeln!(out, "{},{}", bits(&b.beta), fmt_num(b.probability))?;
        writeln!(out, "gamma,gamma_prime,re,im")?;
        for g in 0..b.residual.nrows() {
            for h in 0..b.residual.ncols() {
                let z = b.residual[(g, h)];
                writeln!(
                    out,
                    "{},{},{},{}",
                    bits(&index_bits(g, k)),
                    bits(&index_bits(h, k)),
                    fmt_num(z.re),
                    fmt_num(z.im)
                )?;
            }
        }
    }
    for p in &tree.pruned {
        writeln!(out, "# pruned beta {}", bits(p))?;
    }
    writeln!(out, "beta,gamma,p_gamma_given_beta")?;
    for b in &tree.branches {
        for g in 0..1usize << k {
            let gamma = index_bits(g, k);
            let p = conditional_probability(tree, &b.beta, &gamma)?;
            writeln!(out, "{},{},{}", bits(&b.beta), bits(&gamma), fmt_num(p))?;
        }
    }
    Ok(())
}

fn history_run(a: &HistoryArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let text = fs::read_to_string(&a.spec)?;
    let doc = SpecDocument::parse(&text).map_err(|source| CliError::Parse {
        path: a.spec.display().to_string(),
        source,
    })?;
    let d = history_density_matrix(&doc.spec)?;
    let tree = apply_mms_to_history(&d, &doc.spec.measured)?;
    write_history_report(&d, &tree, out)
}

/// Runs one subcommand, writing its output to `out`.
pub fn execute(command: &Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::MmsDemo(a) => mms_demo(a, out),
        Command::CollapseSweep(a) => collapse_sweep(a, out),
        Command::Nstar(a) => nstar(a, out),
        Command::HistoryRun(a) => history_run(a, out),
    }
}

/// Runs the parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let mut buf = Vec::new();
    let result = execute(&cli.command, &mut buf).and_then(|()| match &cli.output {
        Some(p) => fs::write(p, &buf).map_err(CliError::from),
        None => io::stdout().write_all(&buf).map_err(CliError::from),
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
