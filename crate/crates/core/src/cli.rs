//! Command-line front end: `bounds`, `verify`, `solve`, `quadrature` and
//! `dump-matrix`.

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::bounds::{bounds_for, classical_bounds, element_equivalence_oracle, SpectralBounds};
use crate::config::{ExperimentConfig, LoadedCase, MuSource};
use crate::eigsolve::{
    cg_iteration_bound, extreme_eigs, extreme_eigs_generalized, pcg, EigEstimate, LanczosOptions,
    DEFAULT_SEED,
};
use crate::error::{Error, Result};
use crate::fem::{compute_mu, load_vector, mu_sup, Mesh};
use crate::operator::{DiscreteProblem, Preconditioner, PreconditionerKind};
use crate::orthopoly::{d_inverse_by_quadrature, d_sequence, gauss_rule, Family};
use crate::report::{Cell, Format, Provenance, ResultTable};
use crate::sparse::CsrMatrix;
use crate::stochastic_basis::{assemble_g, assemble_g_tilde, MultiIndexSet, SplitVariant};

/// Sub-cells per element and axis for `mu_source = sup`.
pub const MU_SUP_REFINE: usize = 16;

/// Slack for comparisons between closed-form constants.
const BOUND_SLACK: f64 = 1e-8;
/// Slack for comparisons involving iterative eigenvalue estimates.
const EIG_SLACK: f64 = 1e-6;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_ENCLOSURE: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "sgp", version, about = "Stochastic Galerkin preconditioners and their spectral bounds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,

    /// Seed for Lanczos start vectors.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "SGP_THREADS")]
    pub threads: Option<usize>,

    /// Overrides the config's solver tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Md,
    Raw,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Md => Format::Markdown,
            FormatArg::Raw => Format::Raw,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MatrixArg {
    /// Stochastic matrix `G_k`.
    G,
    /// Split stochastic matrix `G̃_k`.
    GTilde,
    /// Finite element matrix `F_k`.
    F,
    /// Full Galerkin matrix `Σ G_k ⊗ F_k`.
    A,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Closed-form and classical bounds only (no assembly).
    Bounds {
        #[arg(long)]
        config: PathBuf,
    },
    /// Assemble, estimate extreme eigenvalues and check the enclosures.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
    /// PCG with every configured preconditioner.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Gauss rule and d-sequence of one family.
    Quadrature {
        #[arg(long, default_value = "legendre")]
        family: String,
        /// Gegenbauer parameter.
        #[arg(long)]
        gamma: Option<f64>,
        /// Number of nodes.
        #[arg(long)]
        s: usize,
        #[arg(long, default_value_t = 0.0)]
        mu: f64,
    },
    /// Write a matrix in MatrixMarket coordinate form.
    DumpMatrix {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = MatrixArg::A)]
        which: MatrixArg,
        /// Expansion index for g, g-tilde and f.
        #[arg(long, default_value_t = 0)]
        k: usize,
        /// Polynomial degree (defaults to the first configured one).
        #[arg(long)]
        degree: Option<usize>,
        /// Case label (defaults to the first case).
        #[arg(long)]
        case: Option<String>,
    },
}

pub fn parse_family(name: &str, gamma: Option<f64>) -> Result<Family> {
    let f = match name {
        "legendre" => Family::Legendre,
        "hermite" => Family::Hermite,
        "chebyshev-u" => Family::ChebyshevU,
        "gegenbauer" => {
            let g = gamma.ok_or_else(|| Error::Usage("gegenbauer needs --gamma".into()))?;
            return Family::gegenbauer(g);
        }
        _ => return Err(Error::Usage(format!("unknown family '{name}'"))),
    };
    if gamma.is_some() {
        return Err(Error::Usage("--gamma is only valid for gegenbauer".into()));
    }
    Ok(f)
}

/// One (case, degree) row before any assembly.
struct Row {
    case: LoadedCase,
    degree: usize,
    set: MultiIndexSet,
    mu: f64,
    mu_class: f64,
}

fn rows(cfg: &ExperimentConfig, mesh: &Mesh) -> Result<Vec<Row>> {
    let mut out = Vec::new();
    for case in &cfg.cases {
        let loaded = cfg.load_case(case, mesh)?;
        let (mut mu, mu_class) = compute_mu(&loaded.field);
        if cfg.mu_source == MuSource::Sup {
            let exprs = loaded.exprs.as_ref().ok_or_else(|| {
                Error::Usage(format!("case '{}': mu_source = sup needs expressions", case.label))
            })?;
            mu = mu.max(mu_sup(exprs, mesh, MU_SUP_REFINE)?);
        }
        for &degree in &cfg.row_degrees() {
            let set = MultiIndexSet::new(cfg.basis_kind(degree, loaded.field.k()))?;
            out.push(Row {
                case: loaded.clone(),
                degree,
                set,
                mu,
                mu_class,
            });
        }
    }
    Ok(out)
}

fn key_cells(r: &Row, mesh: &Mesh) -> Vec<(String, Cell)> {
    vec![
        ("case".into(), Cell::key(r.case.label.clone())),
        ("degree".into(), Cell::key_int(r.degree)),
        ("K".into(), Cell::key_int(r.case.field.k())),
        ("N_P".into(), Cell::key_int(r.set.len())),
        ("N".into(), Cell::key_int(r.set.len() * mesh.num_dofs())),
        ("mu".into(), Cell::num(r.mu, Provenance::Sampled)),
        ("mu_class".into(), Cell::num(r.mu_class, Provenance::Sampled)),
    ]
}

fn ratio_cell(b: f64, vacuous: bool) -> Cell {
    Cell::num(b, if vacuous { Provenance::Vacuous } else { Provenance::Analytic })
}

fn bound_cells(kind: PreconditionerKind, b: &SpectralBounds) -> Vec<(String, Cell)> {
    let n = kind.name();
    let a = Provenance::Analytic;
    if kind == PreconditionerKind::GaussSeidel2 {
        return vec![
            (format!("{n}.kappa_bound"), Cell::num(b.gs2_kappa_bound.unwrap_or(f64::NAN), a)),
            (format!("{n}.t"), Cell::int(b.t_arg.unwrap_or(0), a)),
        ];
    }
    let mut out = vec![
        (format!("{n}.c_lower"), Cell::num(b.c_lower, a)),
        (format!("{n}.c_upper"), Cell::num(b.c_upper, a)),
        (format!("{n}.ratio"), ratio_cell(b.kappa_bound, b.vacuous)),
    ];
    if let (Some(g), Some(t)) = (b.gs2_kappa_bound, b.t_arg) {
        out.push((format!("{n}.inv_d"), Cell::num(g, a)));
        out.push((format!("{n}.t"), Cell::int(t, a)));
    }
    out
}

fn classical_cells(cfg: &ExperimentConfig, r: &Row) -> Result<Vec<(String, Cell)>> {
    if !cfg.preconditioners.contains(&PreconditionerKind::MeanBased) {
        return Ok(Vec::new());
    }
    let c = classical_bounds(cfg.family, r.set.kind(), r.mu_class)?;
    let a = Provenance::Analytic;
    Ok(vec![
        ("class.c_lower".into(), Cell::num(c.c_lower, a)),
        ("class.c_upper".into(), Cell::num(c.c_upper, a)),
        ("class.ratio".into(), ratio_cell(c.kappa_bound, c.vacuous)),
    ])
}

fn table_from(title: &str, rows: Vec<Vec<(String, Cell)>>) -> ResultTable {
    let columns: Vec<&str> = rows
        .first()
        .map(|r| r.iter().map(|(c, _)| c.as_str()).collect())
        .unwrap_or_default();
    let mut t = ResultTable::new(title, &columns);
    for r in &rows {
        t.push(r.iter().map(|(_, c)| c.clone()).collect());
    }
    t
}

/// Analytic and classical bounds for every row.
pub fn cmd_bounds(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let mesh = cfg.mesh.build()?;
    let mut out = Vec::new();
    for r in rows(cfg, &mesh)? {
        let mut cells = key_cells(&r, &mesh);
        for &p in &cfg.preconditioners {
            let b = bounds_for(p, cfg.family, r.set.kind(), r.mu)?;
            cells.extend(bound_cells(p, &b));
        }
        cells.extend(classical_cells(cfg, &r)?);
        out.push(cells);
    }
    Ok(table_from("bounds", out))
}

/// Table plus every enclosure that failed.
#[derive(Clone, Debug)]
pub struct Verification {
    pub table: ResultTable,
    pub violations: Vec<String>,
}

fn eig_tag(e: &EigEstimate) -> Provenance {
    if e.dense {
        Provenance::Dense
    } else {
        Provenance::Lanczos
    }
}

fn verify_row(
    cfg: &ExperimentConfig,
    mesh: &Mesh,
    r: Row,
    opts: LanczosOptions,
) -> Result<(Vec<(String, Cell)>, Vec<String>)> {
    let mut cells = key_cells(&r, mesh);
    let mut bad = Vec::new();
    let ctx = format!("case {} degree {}", r.case.label, r.degree);
    let mut check = |ok: bool, what: String| {
        if !ok {
            bad.push(format!("{ctx}: {what}"));
        }
    };
    let class = classical_bounds(cfg.family, r.set.kind(), r.mu_class)?;
    let problem = DiscreteProblem::assemble(mesh.clone(), r.case.field.clone(), cfg.family, r.set.clone())?;

    let ka = extreme_eigs(&problem.operator, opts)?;
    cells.push(("kappa_A".into(), Cell::num(ka.condition(), eig_tag(&ka))));

    for &p in &cfg.preconditioners {
        let n = p.name();
        let b = bounds_for(p, cfg.family, r.set.kind(), r.mu)?;
        cells.extend(bound_cells(p, &b));
        let m = Preconditioner::build(&problem, p)?;
        let e = extreme_eigs_generalized(&problem.operator, &m, opts)?;
        let tag = eig_tag(&e);
        cells.push((format!("{n}.lambda_min"), Cell::num(e.lambda_min, tag)));
        cells.push((format!("{n}.lambda_max"), Cell::num(e.lambda_max, tag)));
        cells.push((format!("{n}.kappa"), Cell::num(e.condition(), tag)));

        if p == PreconditionerKind::GaussSeidel2 {
            let g = b.gs2_kappa_bound.unwrap_or(f64::INFINITY);
            check(
                e.condition() <= g * (1.0 + EIG_SLACK),
                format!("{n}: kappa {} exceeds bound {g}", e.condition()),
            );
            continue;
        }
        check(
            b.c_lower <= e.lambda_min + EIG_SLACK,
            format!("{n}: lambda_min {} below c_lower {}", e.lambda_min, b.c_lower),
        );
        check(
            e.lambda_max <= b.c_upper + EIG_SLACK,
            format!("{n}: lambda_max {} above c_upper {}", e.lambda_max, b.c_upper),
        );
        if p == PreconditionerKind::MeanBased && !class.vacuous {
            check(
                class.c_lower <= b.c_lower + BOUND_SLACK && b.c_upper <= class.c_upper + BOUND_SLACK,
                format!("{n}: bounds not inside the classical ones"),
            );
        }
        if cfg.oracle {
            let o = element_equivalence_oracle(cfg.family, &r.set, &r.case.field, p)?;
            cells.push((format!("{n}.oracle_min"), Cell::num(o.c_lower, Provenance::Dense)));
            cells.push((format!("{n}.oracle_max"), Cell::num(o.c_upper, Provenance::Dense)));
            check(
                b.c_lower <= o.c_lower + BOUND_SLACK && o.c_upper <= b.c_upper + BOUND_SLACK,
                format!("{n}: oracle [{}, {}] outside the bounds", o.c_lower, o.c_upper),
            );
            check(
                o.c_lower <= e.lambda_min + EIG_SLACK && e.lambda_max <= o.c_upper + EIG_SLACK,
                format!("{n}: eigenvalues outside the oracle constants"),
            );
        }
    }
    if cfg.preconditioners.contains(&PreconditionerKind::MeanBased) {
        let a = Provenance::Analytic;
        cells.push(("class.c_lower".into(), Cell::num(class.c_lower, a)));
        cells.push(("class.c_upper".into(), Cell::num(class.c_upper, a)));
        cells.push(("class.ratio".into(), ratio_cell(class.kappa_bound, class.vacuous)));
    }
    Ok((cells, bad))
}

/// Assembles every row, estimates the extreme eigenvalues and checks
/// `c̲_class ≤ c̲ ≤ λ_min ≤ λ_max ≤ c̄ ≤ c̄_class` (plus the oracle and
/// Gauss–Seidel bounds when applicable).
pub fn cmd_verify(cfg: &ExperimentConfig, opts: LanczosOptions) -> Result<Verification> {
    let mesh = cfg.mesh.build()?;
    let results: Vec<Result<(Vec<(String, Cell)>, Vec<String>)>> = rows(cfg, &mesh)?
        .into_par_iter()
        .map(|r| verify_row(cfg, &mesh, r, opts))
        .collect();
    let mut table_rows = Vec::new();
    let mut violations = Vec::new();
    for res in results {
        let (cells, bad) = res?;
        table_rows.push(cells);
        violations.extend(bad);
    }
    Ok(Verification {
        table: table_from("verify", table_rows),
        violations,
    })
}

/// PCG from a zero start with the load in the mean block.
pub fn cmd_solve(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let mesh = cfg.mesh.build()?;
    let f = load_vector(&mesh, &cfg.load)?;
    let mut out = Vec::new();
    for r in rows(cfg, &mesh)? {
        let mut cells = key_cells(&r, &mesh);
        let problem =
            DiscreteProblem::assemble(mesh.clone(), r.case.field.clone(), cfg.family, r.set.clone())?;
        let mut b = vec![0.0; problem.dim()];
        b[..f.len()].copy_from_slice(&f);
        for &p in &cfg.preconditioners {
            let n = p.name();
            let bound = bounds_for(p, cfg.family, r.set.kind(), r.mu)?;
            let kappa = match p {
                PreconditionerKind::GaussSeidel2 => bound.gs2_kappa_bound.unwrap_or(f64::INFINITY),
                _ => bound.kappa_bound,
            };
            let start = Instant::now();
            let m = Preconditioner::build(&problem, p)?;
            let res = pcg(&problem.operator, &m, &b, cfg.tol, cfg.max_iter)?;
            let ms = start.elapsed().as_secs_f64() * 1e3;
            let meas = Provenance::Measured;
            cells.push((format!("{n}.iterations"), Cell::int(res.iterations, meas)));
            cells.push((
                format!("{n}.residual"),
                Cell::num(*res.residual_history.last().unwrap_or(&0.0), meas),
            ));
            cells.push((format!("{n}.time_ms"), Cell::num(ms, meas)));
            cells.push((format!("{n}.kappa_bound"), ratio_cell(kappa, !kappa.is_finite())));
            let cg = if kappa.is_finite() {
                cg_iteration_bound(kappa, cfg.tol)
            } else {
                0
            };
            let tag = if kappa.is_finite() {
                Provenance::Analytic
            } else {
                Provenance::Vacuous
            };
            cells.push((format!("{n}.cg_bound"), Cell::int(cg, tag)));
        }
        out.push(cells);
    }
    Ok(table_from("solve", out))
}

/// Nodes, weights and `d_i` for `i = 1..s`.
pub fn cmd_quadrature(family: Family, s: usize, mu: f64) -> Result<ResultTable> {
    let rule = gauss_rule(family, s)?;
    let d = d_sequence(family, mu, s)?;
    let dq = d_inverse_by_quadrature(family, mu, s)?;
    let title = format!(
        "{} s={s} mu={mu}: 1/d_s = {:.12} (recursion), {:.12} (quadrature)",
        family.name(),
        1.0 / d.last(),
        dq
    );
    let a = Provenance::Analytic;
    let rows = (0..s)
        .map(|i| {
            vec![
                ("i".to_string(), Cell::key_int(i + 1)),
                ("node".to_string(), Cell::num(rule.nodes[i], a)),
                ("weight".to_string(), Cell::num(rule.weights[i], a)),
                ("d".to_string(), Cell::num(d.d(i + 1), a)),
            ]
        })
        .collect();
    Ok(table_from(&title, rows))
}

/// `Σ_k G_k ⊗ F_k` as an explicit sparse matrix.
pub fn assemble_global(problem: &DiscreteProblem) -> Result<CsrMatrix> {
    let n = problem.dim();
    let mut trip = Vec::new();
    for t in problem.operator.terms() {
        trip.extend(t.g.matrix.kron(&t.f).iter());
    }
    CsrMatrix::from_triplets(n, n, &trip, false)
}

pub fn dump_matrix(
    cfg: &ExperimentConfig,
    which: MatrixArg,
    k: usize,
    degree: Option<usize>,
    case: Option<&str>,
) -> Result<String> {
    let mesh = cfg.mesh.build()?;
    let c = match case {
        None => &cfg.cases[0],
        Some(l) => cfg
            .cases
            .iter()
            .find(|c| c.label == l)
            .ok_or_else(|| Error::Usage(format!("no case '{l}'")))?,
    };
    let loaded = cfg.load_case(c, &mesh)?;
    let kk = loaded.field.k();
    let degree = degree.unwrap_or(cfg.row_degrees()[0]);
    let set = MultiIndexSet::new(cfg.basis_kind(degree, kk))?;
    if k > kk && which != MatrixArg::A {
        return Err(Error::Usage(format!("k = {k} exceeds K = {kk}")));
    }
    let m = match which {
        MatrixArg::G => assemble_g(cfg.family, &set, k)?.matrix,
        MatrixArg::GTilde => {
            let v = if set.kind().is_tensor() {
                SplitVariant::SplitTp
            } else {
                SplitVariant::SplitComplete
            };
            assemble_g_tilde(cfg.family, &set, k, v)?.matrix
        }
        MatrixArg::F => crate::fem::assemble_f(&mesh, &loaded.field, k)?,
        MatrixArg::A => {
            let problem = DiscreteProblem::assemble(mesh, loaded.field, cfg.family, set)?;
            assemble_global(&problem)?
        }
    };
    Ok(m.to_matrix_market())
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_VALIDATION
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn load_config(path: &PathBuf, tol: Option<f64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_file(path)?;
    if let Some(t) = tol {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::Usage(format!("--tol must lie in (0, 1), got {t}")));
        }
        cfg.tol = t;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<i32> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Usage("--threads must be positive".into()));
        }
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let format: Format = cli.format.into();
    match &cli.command {
        Command::Bounds { config } => {
            let cfg = load_config(config, cli.tol)?;
            emit(&cli.out, &cmd_bounds(&cfg)?.render(format))?;
        }
        Command::Verify { config } => {
            let cfg = load_config(config, cli.tol)?;
            let opts = LanczosOptions {
                tol: cfg.tol,
                max_iter: cfg.max_iter,
                seed: cli.seed,
            };
            let v = cmd_verify(&cfg, opts)?;
            emit(&cli.out, &v.table.render(format))?;
            if !v.violations.is_empty() {
                for msg in &v.violations {
                    eprintln!("enclosure violated: {msg}");
                }
                return Ok(EXIT_ENCLOSURE);
            }
        }
        Command::Solve { config } => {
            let cfg = load_config(config, cli.tol)?;
            emit(&cli.out, &cmd_solve(&cfg)?.render(format))?;
        }
        Command::Quadrature { family, gamma, s, mu } => {
            let fam = parse_family(family, *gamma)?;
            let t = cmd_quadrature(fam, *s, *mu)?;
            let mut text = t.render(format);
            if format != Format::Markdown {
                text = format!("# {}\n{text}", t.title);
            }
            emit(&cli.out, &text)?;
        }
        Command::DumpMatrix {
            config,
            which,
            k,
            degree,
            case,
        } => {
            let cfg = load_config(config, cli.tol)?;
            emit(&cli.out, &dump_matrix(&cfg, *which, *k, *degree, case.as_deref())?)?;
        }
    }
    Ok(EXIT_OK)
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
