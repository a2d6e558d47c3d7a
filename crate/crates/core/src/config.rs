//! Experiment configs in the `sgp-config v1` text format.
//!
//! ```text
//! sgp-config v1
//! # piecewise constant coefficients on thirds of the interval
//! [problem]
//! family = legendre
//! basis = complete
//! degrees = 1, 2, 6, 7
//!
//! [mesh]
//! dim = 1
//! elements = 30
//!
//! [run]
//! preconditioners = mean
//!
//! [coefficients setting-2]
//! a0 = 1
//! a1 = 0.5*chi(0, 1/3)
//! a2 = 0.3*chi(1/3, 2/3)
//! a3 = 0.1*chi(2/3, 1)
//! ```
//!
//! Blank lines and `#` comments are ignored. Every `[coefficients LABEL]`
//! section is a case; each case is run once per entry of `degrees`.
//! A case may point at a coefficient table (`table = path`, relative to the
//! config file) instead of listing expressions.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::coeff_dsl::{parse, CoeffExpr};
use crate::error::{Error, Result};
use crate::fem::{CoefficientField, ElementKind, Mesh};
use crate::operator::PreconditionerKind;
use crate::orthopoly::Family;
use crate::stochastic_basis::IndexSetKind;

pub const HEADER: &str = "sgp-config v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisChoice {
    Complete,
    Tensor,
}

/// Where the dominance constant `μ` used by the analytic bounds comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MuSource {
    /// Element-midpoint samples (the coefficients the operator sees).
    Midpoint,
    /// Dense sampling of the expressions; never below the midpoint value.
    Sup,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CoefficientSource {
    /// `a_0, …, a_K`.
    Expressions(Vec<CoeffExpr>),
    Table(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientCase {
    pub label: String,
    pub source: CoefficientSource,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshSpec {
    pub dim: usize,
    pub nx: usize,
    /// Ignored in 1D.
    pub ny: usize,
    pub element: ElementKind,
}

impl MeshSpec {
    pub fn build(&self) -> Result<Mesh> {
        match self.dim {
            1 => Mesh::interval(self.nx),
            _ => Mesh::square(self.nx, self.ny, self.element),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub family: Family,
    pub basis: BasisChoice,
    /// Polynomial degrees to sweep: total degree `s − 1` for complete bases,
    /// the common per-variable degree for tensor bases.
    pub degrees: Vec<usize>,
    /// Per-variable degrees for a single anisotropic tensor basis.
    pub tensor_degrees: Option<Vec<usize>>,
    pub mesh: MeshSpec,
    pub cases: Vec<CoefficientCase>,
    pub preconditioners: Vec<PreconditionerKind>,
    pub mu_source: MuSource,
    pub tol: f64,
    pub max_iter: usize,
    /// Run the per-element oracle in `verify`.
    pub oracle: bool,
    /// Right-hand side `f(x)` for `solve`.
    pub load: CoeffExpr,
    /// Directory that relative table paths are resolved against.
    pub base_dir: Option<PathBuf>,
}

/// A resolved case: the field plus the expressions when available.
#[derive(Clone, Debug)]
pub struct LoadedCase {
    pub label: String,
    pub exprs: Option<Vec<CoeffExpr>>,
    pub field: CoefficientField,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    /// Basis for one row. `k` is the number of random variables.
    pub fn basis_kind(&self, degree: usize, k: usize) -> IndexSetKind {
        match (self.basis, &self.tensor_degrees) {
            (BasisChoice::Complete, _) => IndexSetKind::Complete { k, s: degree + 1 },
            (BasisChoice::Tensor, Some(d)) => {
                IndexSetKind::TensorProduct(d.iter().map(|x| x + 1).collect())
            }
            (BasisChoice::Tensor, None) => IndexSetKind::TensorProduct(vec![degree + 1; k]),
        }
    }

    /// Row degrees; a single anisotropic tensor basis yields one row keyed by
    /// its largest degree.
    pub fn row_degrees(&self) -> Vec<usize> {
        match &self.tensor_degrees {
            Some(d) => vec![d.iter().copied().max().unwrap_or(0)],
            None => self.degrees.clone(),
        }
    }

    pub fn load_case(&self, case: &CoefficientCase, mesh: &Mesh) -> Result<LoadedCase> {
        let (exprs, field) = match &case.source {
            CoefficientSource::Expressions(e) => {
                (Some(e.clone()), crate::fem::sample_coefficients(e, mesh)?)
            }
            CoefficientSource::Table(p) => {
                let path = match &self.base_dir {
                    Some(dir) if p.is_relative() => dir.join(p),
                    _ => p.clone(),
                };
                let text = std::fs::read_to_string(&path)?;
                (None, CoefficientField::from_table(&text)?)
            }
        };
        crate::fem::check_field(mesh, &field)?;
        if let Some(d) = &self.tensor_degrees {
            if d.len() != field.k() {
                return Err(Error::Usage(format!(
                    "case '{}' has K = {} but tensor_degrees lists {} variables",
                    case.label,
                    field.k(),
                    d.len()
                )));
            }
        }
        Ok(LoadedCase {
            label: case.label.clone(),
            exprs,
            field,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Parser::default().run(text)
    }

    /// Canonical text; `parse(serialize(c)) == c` up to `base_dir`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let join = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        };
        writeln!(out, "{HEADER}").unwrap();
        writeln!(out, "\n[problem]").unwrap();
        match self.family {
            Family::Gegenbauer { gamma } => {
                writeln!(out, "family = gegenbauer\ngamma = {gamma:?}").unwrap()
            }
            f => writeln!(out, "family = {}", f.name()).unwrap(),
        }
        let basis = match self.basis {
            BasisChoice::Complete => "complete",
            BasisChoice::Tensor => "tensor",
        };
        writeln!(out, "basis = {basis}").unwrap();
        match &self.tensor_degrees {
            Some(d) => writeln!(out, "tensor_degrees = {}", join(d)).unwrap(),
            None => writeln!(out, "degrees = {}", join(&self.degrees)).unwrap(),
        }

        writeln!(out, "\n[mesh]\ndim = {}", self.mesh.dim).unwrap();
        if self.mesh.dim == 1 {
            writeln!(out, "elements = {}", self.mesh.nx).unwrap();
        } else {
            let el = match self.mesh.element {
                ElementKind::SplitTriangles => "p1",
                _ => "q1",
            };
            writeln!(out, "elements = {}x{}\nelement = {el}", self.mesh.nx, self.mesh.ny).unwrap();
        }

        writeln!(out, "\n[run]").unwrap();
        let names: Vec<_> = self.preconditioners.iter().map(|p| p.name()).collect();
        writeln!(out, "preconditioners = {}", names.join(", ")).unwrap();
        let mu = match self.mu_source {
            MuSource::Midpoint => "midpoint",
            MuSource::Sup => "sup",
        };
        writeln!(out, "mu_source = {mu}").unwrap();
        writeln!(out, "tol = {:?}", self.tol).unwrap();
        writeln!(out, "max_iter = {}", self.max_iter).unwrap();
        writeln!(out, "oracle = {}", self.oracle).unwrap();
        writeln!(out, "load = {}", self.load).unwrap();

        for case in &self.cases {
            writeln!(out, "\n[coefficients {}]", case.label).unwrap();
            match &case.source {
                CoefficientSource::Expressions(e) => {
                    for (k, ex) in e.iter().enumerate() {
                        writeln!(out, "a{k} = {ex}").unwrap();
                    }
                }
                CoefficientSource::Table(p) => {
                    writeln!(out, "table = {}", p.display()).unwrap()
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Problem,
    Mesh,
    Run,
    Coefficients,
}

#[derive(Default)]
struct Parser {
    /// Raw values with their line numbers, per section (and per case).
    problem: BTreeMap<String, (usize, String)>,
    mesh: BTreeMap<String, (usize, String)>,
    run: BTreeMap<String, (usize, String)>,
    cases: Vec<(usize, String, BTreeMap<String, (usize, String)>)>,
}

fn cfg_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Config {
        line,
        msg: msg.into(),
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| cfg_err(line, format!("'{key}': cannot parse '{v}'")))
}

fn parse_list(line: usize, key: &str, v: &str) -> Result<Vec<usize>> {
    let out: Vec<usize> = v
        .split(',')
        .map(|x| parse_num(line, key, x.trim()))
        .collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(cfg_err(line, format!("'{key}' is empty")));
    }
    Ok(out)
}

const PROBLEM_KEYS: [&str; 5] = ["family", "gamma", "basis", "degrees", "tensor_degrees"];
const MESH_KEYS: [&str; 3] = ["dim", "elements", "element"];
const RUN_KEYS: [&str; 6] = ["preconditioners", "mu_source", "tol", "max_iter", "oracle", "load"];

impl Parser {
    fn run(mut self, text: &str) -> Result<ExperimentConfig> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let header = lines
            .by_ref()
            .find(|(_, l)| {
                let t = l.trim();
                !t.is_empty() && !t.starts_with('#')
            })
            .ok_or_else(|| cfg_err(1, "empty config"))?;
        if header.1.trim() != HEADER {
            return Err(cfg_err(
                header.0,
                format!("expected header '{HEADER}', found '{}'", header.1.trim()),
            ));
        }

        let mut section: Option<Section> = None;
        let mut labels = HashSet::new();
        for (n, raw) in lines {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(inner) = line.strip_prefix('[') {
                let inner = inner
                    .strip_suffix(']')
                    .ok_or_else(|| cfg_err(n, "unterminated section header"))?
                    .trim();
                let mut parts = inner.splitn(2, char::is_whitespace);
                let name = parts.next().unwrap_or("");
                let label = parts.next().map(str::trim);
                section = Some(match (name, label) {
                    ("problem", None) => Section::Problem,
                    ("mesh", None) => Section::Mesh,
                    ("run", None) => Section::Run,
                    ("coefficients", l) => {
                        let l = l.unwrap_or("default").to_string();
                        if l.contains(char::is_whitespace) {
                            return Err(cfg_err(n, "case labels cannot contain spaces"));
                        }
                        if !labels.insert(l.clone()) {
                            return Err(cfg_err(n, format!("duplicate case '{l}'")));
                        }
                        self.cases.push((n, l, BTreeMap::new()));
                        Section::Coefficients
                    }
                    _ => return Err(cfg_err(n, format!("unknown section '[{inner}]'"))),
                });
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(n, format!("expected 'key = value', found '{line}'")))?;
            let (key, value) = (key.trim().to_string(), value.trim().to_string());
            let (map, known): (&mut BTreeMap<_, _>, bool) = match section {
                None => return Err(cfg_err(n, "key outside of any section")),
                Some(Section::Problem) => (&mut self.problem, PROBLEM_KEYS.contains(&key.as_str())),
                Some(Section::Mesh) => (&mut self.mesh, MESH_KEYS.contains(&key.as_str())),
                Some(Section::Run) => (&mut self.run, RUN_KEYS.contains(&key.as_str())),
                Some(Section::Coefficients) => {
                    let ok = key == "table"
                        || key
                            .strip_prefix('a')
                            .is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()));
                    (&mut self.cases.last_mut().unwrap().2, ok)
                }
            };
            if !known {
                return Err(cfg_err(n, format!("unknown key '{key}'")));
            }
            if map.contains_key(&key) {
                return Err(cfg_err(n, format!("duplicate key '{key}'")));
            }
            map.insert(key, (n, value));
        }
        self.build()
    }

    fn build(self) -> Result<ExperimentConfig> {
        let get = |m: &BTreeMap<String, (usize, String)>, k: &str| m.get(k).cloned();

        // [problem]
        let family = match get(&self.problem, "family") {
            None => Family::Legendre,
            Some((n, v)) => match v.as_str() {
                "legendre" => Family::Legendre,
                "hermite" => Family::Hermite,
                "chebyshev-u" => Family::ChebyshevU,
                "gegenbauer" => {
                    let (gn, g) = get(&self.problem, "gamma")
                        .ok_or_else(|| cfg_err(n, "gegenbauer needs 'gamma'"))?;
                    let gamma: f64 = parse_num(gn, "gamma", &g)?;
                    Family::gegenbauer(gamma).map_err(|e| cfg_err(gn, e.to_string()))?
                }
                _ => return Err(cfg_err(n, format!("unknown family '{v}'"))),
            },
        };
        if let Some((n, _)) = get(&self.problem, "gamma") {
            if !matches!(family, Family::Gegenbauer { .. }) {
                return Err(cfg_err(n, "'gamma' is only valid for gegenbauer"));
            }
        }
        let basis = match get(&self.problem, "basis") {
            None => BasisChoice::Complete,
            Some((n, v)) => match v.as_str() {
                "complete" => BasisChoice::Complete,
                "tensor" => BasisChoice::Tensor,
                _ => return Err(cfg_err(n, format!("unknown basis '{v}'"))),
            },
        };
        let (degrees, tensor_degrees) = match (
            get(&self.problem, "degrees"),
            get(&self.problem, "tensor_degrees"),
        ) {
            (Some((n, v)), None) => (parse_list(n, "degrees", &v)?, None),
            (None, Some((n, v))) => {
                if basis != BasisChoice::Tensor {
                    return Err(cfg_err(n, "'tensor_degrees' needs 'basis = tensor'"));
                }
                (Vec::new(), Some(parse_list(n, "tensor_degrees", &v)?))
            }
            (Some((n, _)), Some(_)) => {
                return Err(cfg_err(n, "give either 'degrees' or 'tensor_degrees'"))
            }
            (None, None) => return Err(cfg_err(0, "[problem] needs 'degrees'")),
        };

        // [mesh]
        let (dn, dim) = get(&self.mesh, "dim").ok_or_else(|| cfg_err(0, "[mesh] needs 'dim'"))?;
        let dim: usize = parse_num(dn, "dim", &dim)?;
        if dim != 1 && dim != 2 {
            return Err(cfg_err(dn, format!("dim must be 1 or 2, got {dim}")));
        }
        let (en, el) = get(&self.mesh, "elements")
            .ok_or_else(|| cfg_err(0, "[mesh] needs 'elements'"))?;
        let (nx, ny) = match el.split_once('x') {
            Some((a, b)) if dim == 2 => (
                parse_num(en, "elements", a.trim())?,
                parse_num(en, "elements", b.trim())?,
            ),
            Some(_) => return Err(cfg_err(en, "1D meshes take a single element count")),
            None => {
                let n: usize = parse_num(en, "elements", &el)?;
                (n, if dim == 2 { n } else { 0 })
            }
        };
        let element = match (dim, get(&self.mesh, "element")) {
            (1, None) => ElementKind::Linear,
            (1, Some((n, _))) => return Err(cfg_err(n, "'element' applies to 2D meshes")),
            (_, None) => ElementKind::Bilinear,
            (_, Some((n, v))) => match v.as_str() {
                "q1" => ElementKind::Bilinear,
                "p1" => ElementKind::SplitTriangles,
                _ => return Err(cfg_err(n, format!("unknown element '{v}' (q1 | p1)"))),
            },
        };
        let mesh = MeshSpec { dim, nx, ny, element };
        mesh.build().map_err(|e| cfg_err(en, e.to_string()))?;

        // [run]
        let preconditioners = match get(&self.run, "preconditioners") {
            None => vec![PreconditionerKind::MeanBased],
            Some((n, v)) => {
                let mut out = Vec::new();
                for name in v.split(',').map(str::trim) {
                    let p = PreconditionerKind::from_name(name)
                        .ok_or_else(|| cfg_err(n, format!("unknown preconditioner '{name}'")))?;
                    if out.contains(&p) {
                        return Err(cfg_err(n, format!("preconditioner '{name}' listed twice")));
                    }
                    out.push(p);
                }
                out
            }
        };
        let mu_source = match get(&self.run, "mu_source") {
            None => MuSource::Midpoint,
            Some((n, v)) => match v.as_str() {
                "midpoint" => MuSource::Midpoint,
                "sup" => MuSource::Sup,
                _ => return Err(cfg_err(n, format!("unknown mu_source '{v}' (midpoint | sup)"))),
            },
        };
        let tol = match get(&self.run, "tol") {
            None => 1e-8,
            Some((n, v)) => {
                let t: f64 = parse_num(n, "tol", &v)?;
                if !(t > 0.0 && t < 1.0) {
                    return Err(cfg_err(n, format!("tol must lie in (0, 1), got {t}")));
                }
                t
            }
        };
        let max_iter = match get(&self.run, "max_iter") {
            None => 1000,
            Some((n, v)) => {
                let m: usize = parse_num(n, "max_iter", &v)?;
                if m == 0 {
                    return Err(cfg_err(n, "max_iter must be positive"));
                }
                m
            }
        };
        let oracle = match get(&self.run, "oracle") {
            None => false,
            Some((n, v)) => parse_num(n, "oracle", &v)?,
        };
        let load = match get(&self.run, "load") {
            None => CoeffExpr::Num(1.0),
            Some((n, v)) => parse(&v).map_err(|e| cfg_err(n, format!("'load': {e}")))?,
        };
        if let Some((n, _)) = get(&self.run, "load") {
            if dim == 1 && load.uses_x2() {
                return Err(cfg_err(n, "'load' uses x2 on a 1D mesh"));
            }
        }

        // [coefficients ...]
        if self.cases.is_empty() {
            return Err(cfg_err(0, "no [coefficients] section"));
        }
        let mut cases = Vec::new();
        let mut k_seen: Option<(usize, usize)> = None;
        for (sn, label, map) in &self.cases {
            let source = if let Some((n, p)) = map.get("table") {
                if map.len() > 1 {
                    return Err(cfg_err(*n, "'table' cannot be combined with expressions"));
                }
                CoefficientSource::Table(PathBuf::from(p))
            } else {
                let mut exprs = Vec::new();
                for k in 0..map.len() {
                    let (n, v) = map.get(&format!("a{k}")).ok_or_else(|| {
                        cfg_err(*sn, format!("case '{label}': missing 'a{k}'"))
                    })?;
                    let e = parse(v).map_err(|e| cfg_err(*n, format!("'a{k}': {e}")))?;
                    if dim == 1 && e.uses_x2() {
                        return Err(cfg_err(*n, format!("'a{k}' uses x2 on a 1D mesh")));
                    }
                    exprs.push(e);
                }
                if exprs.is_empty() {
                    return Err(cfg_err(*sn, format!("case '{label}' has no coefficients")));
                }
                let k = exprs.len() - 1;
                if let Some(d) = &tensor_degrees {
                    if d.len() != k {
                        return Err(cfg_err(
                            *sn,
                            format!("case '{label}' has K = {k} but tensor_degrees has {}", d.len()),
                        ));
                    }
                }
                k_seen.get_or_insert((k, *sn));
                CoefficientSource::Expressions(exprs)
            };
            cases.push(CoefficientCase {
                label: label.clone(),
                source,
            });
        }

        let cfg = ExperimentConfig {
            family,
            basis,
            degrees,
            tensor_degrees,
            mesh,
            cases,
            preconditioners,
            mu_source,
            tol,
            max_iter,
            oracle,
            load,
            base_dir: None,
        };
        let line = get(&self.run, "preconditioners").map_or(0, |x| x.0);
        for p in &cfg.preconditioners {
            let probe = cfg.basis_kind(1, k_seen.map_or(1, |x| x.0.max(1)));
            if !p.applies_to(&probe) {
                return Err(cfg_err(
                    line,
                    format!("preconditioner '{}' does not apply to a {:?} basis", p.name(), cfg.basis),
                ));
            }
        }
        Ok(cfg)
    }
}
