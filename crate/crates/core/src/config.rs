//! Sectioned `key = value` run configuration.
//!
//! ```text
//! [meta]
//! dim = 1
//!
//! [pde.velocity]
//! expression = "1."
//!
//! [boundary_conditions]
//! implementation_types = natural, strong
//! function_names = parsed, constant
//! function_double_arguments = -2.
//!
//! [boundary_conditions.parsed_function]
//! constants = "alpha=2, v=-5, g=-2, beta=10"
//! expression = "(g*v*(exp(-beta*t^2) - 1))/
//!   (exp(v/alpha) - 1)"
//! ```
//!
//! Values are numbers, booleans, comma lists or double-quoted strings, which
//! may span lines. `#` starts a comment outside quotes. Unknown sections and
//! keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::coupling::{CouplingConfig, FluxSchedule};
use crate::exprfn::{Bindings, ExprError};
use crate::functions::{SpaceTimeFn, VelocityFn};
use crate::linsolve::SolverOptions;
use crate::mesh::{generate, refine_boundary, refine_global, GridName, GridSpec, Mesh, MeshError};
use crate::pde::{AmbientProblem, BoundaryCondition, InitialValues};
use crate::rbd::{BodyGeometry, RbdError, RbdProblem, RbdTolerances, RigidState};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
    #[error("{key}: {source}")]
    Expr { key: String, source: ExprError },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Rbd(#[from] RbdError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ConfigError>;

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

/// Raw value with the line it started on.
#[derive(Debug, Clone)]
struct Entry {
    value: String,
    quoted: bool,
    line: usize,
}

type Document = BTreeMap<String, BTreeMap<String, Entry>>;

fn strip_comment(line: &str) -> &str {
    let mut in_quote = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quote = !in_quote,
            '#' if !in_quote => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_document(text: &str) -> Result<Document> {
    let mut doc = Document::new();
    let mut section: Option<String> = None;
    let mut lines = text.lines().enumerate();
    while let Some((i, raw)) = lines.next() {
        let line_no = i + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let perr = |message: &str| ConfigError::Parse {
            line: line_no,
            message: message.to_string(),
        };
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| perr("unterminated section header"))?.trim();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
                return Err(perr("invalid section name"));
            }
            if doc.contains_key(name) {
                return Err(perr(&format!("duplicate section [{}]", name)));
            }
            doc.insert(name.to_string(), BTreeMap::new());
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| perr("expected `key = value`"))?;
        let key = key.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(perr("invalid key"));
        }
        let sec = section.as_ref().ok_or_else(|| perr("key outside of any section"))?;
        let value = value.trim();
        let entry = if let Some(body) = value.strip_prefix('"') {
            let mut text = body.to_string();
            loop {
                if let Some(end) = text.find('"') {
                    if !text[end + 1..].trim().is_empty() {
                        return Err(perr("text after closing quote"));
                    }
                    text.truncate(end);
                    break;
                }
                match lines.next() {
                    Some((_, more)) => {
                        text.push('\n');
                        text.push_str(more);
                    }
                    None => return Err(perr("unterminated string")),
                }
            }
            Entry {
                value: text,
                quoted: true,
                line: line_no,
            }
        } else {
            Entry {
                value: value.to_string(),
                quoted: false,
                line: line_no,
            }
        };
        let map = doc.get_mut(sec).unwrap();
        if map.insert(key.to_string(), entry).is_some() {
            return Err(perr(&format!("duplicate key `{}`", key)));
        }
    }
    Ok(doc)
}

/// Typed access to one section; remembers which keys were read.
struct Section<'a> {
    name: &'a str,
    entries: Option<&'a BTreeMap<String, Entry>>,
    used: Vec<&'static str>,
}

impl<'a> Section<'a> {
    fn new(doc: &'a Document, name: &'a str) -> Self {
        Section {
            name,
            entries: doc.get(name),
            used: Vec::new(),
        }
    }

    fn present(&self) -> bool {
        self.entries.is_some()
    }

    fn key(&self, k: &str) -> String {
        format!("{}.{}", self.name, k)
    }

    fn raw(&mut self, k: &'static str) -> Option<&'a Entry> {
        self.used.push(k);
        self.entries.and_then(|e| e.get(k))
    }

    fn parse_err(&self, e: &Entry, k: &str, what: &str) -> ConfigError {
        ConfigError::Parse {
            line: e.line,
            message: format!("{}: expected {}, got `{}`", self.key(k), what, e.value),
        }
    }

    fn number(&mut self, k: &'static str) -> Result<Option<f64>> {
        match self.raw(k) {
            None => Ok(None),
            Some(e) => e
                .value
                .trim()
                .parse::<f64>()
                .map(Some)
                .map_err(|_| self.parse_err(e, k, "a number")),
        }
    }

    fn required_number(&mut self, k: &'static str) -> Result<f64> {
        self.number(k)?.ok_or_else(|| invalid(&self.key(k), "missing required value"))
    }

    fn integer(&mut self, k: &'static str) -> Result<Option<usize>> {
        match self.raw(k) {
            None => Ok(None),
            Some(e) => e
                .value
                .trim()
                .parse::<usize>()
                .map(Some)
                .map_err(|_| self.parse_err(e, k, "a non-negative integer")),
        }
    }

    fn boolean(&mut self, k: &'static str) -> Result<Option<bool>> {
        match self.raw(k) {
            None => Ok(None),
            Some(e) => match e.value.trim() {
                "true" => Ok(Some(true)),
                "false" => Ok(Some(false)),
                _ => Err(self.parse_err(e, k, "true or false")),
            },
        }
    }

    fn string(&mut self, k: &'static str) -> Option<String> {
        self.raw(k).map(|e| if e.quoted { e.value.clone() } else { e.value.trim().to_string() })
    }

    fn words(&mut self, k: &'static str) -> Option<Vec<String>> {
        self.raw(k).map(|e| {
            e.value
                .split(',')
                .map(|w| w.trim().to_string())
                .filter(|w| !w.is_empty())
                .collect()
        })
    }

    fn numbers(&mut self, k: &'static str) -> Result<Option<Vec<f64>>> {
        let Some(e) = self.raw(k) else { return Ok(None) };
        e.value
            .split(',')
            .map(str::trim)
            .filter(|w| !w.is_empty())
            .map(|w| w.parse::<f64>().map_err(|_| self.parse_err(e, k, "a list of numbers")))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn integers(&mut self, k: &'static str) -> Result<Option<Vec<usize>>> {
        let Some(e) = self.raw(k) else { return Ok(None) };
        e.value
            .split(',')
            .map(str::trim)
            .filter(|w| !w.is_empty())
            .map(|w| w.parse::<usize>().map_err(|_| self.parse_err(e, k, "a list of integers")))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn finish(self) -> Result<()> {
        if let Some(entries) = self.entries {
            for (k, e) in entries {
                if !self.used.contains(&k.as_str()) {
                    return Err(ConfigError::Parse {
                        line: e.line,
                        message: format!("unknown key `{}` in [{}]", k, self.name),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Expression with its named constants.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionSpec {
    pub constants: String,
    pub expression: String,
}

impl FunctionSpec {
    pub fn new(expression: &str) -> Self {
        FunctionSpec {
            constants: String::new(),
            expression: expression.to_string(),
        }
    }

    pub fn with_constants(constants: &str, expression: &str) -> Self {
        FunctionSpec {
            constants: constants.to_string(),
            expression: expression.to_string(),
        }
    }

    fn bindings(&self, key: &str) -> Result<Bindings> {
        Bindings::parse_list(&self.constants).map_err(|source| ConfigError::Expr {
            key: format!("{}.constants", key),
            source,
        })
    }

    pub fn scalar(&self, key: &str) -> Result<SpaceTimeFn> {
        SpaceTimeFn::parsed(&self.expression, &self.bindings(key)?).map_err(|source| ConfigError::Expr {
            key: format!("{}.expression", key),
            source,
        })
    }

    pub fn vector(&self, key: &str, dim: usize) -> Result<VelocityFn> {
        let v = VelocityFn::parsed(&self.expression, &self.bindings(key)?).map_err(|source| ConfigError::Expr {
            key: format!("{}.expression", key),
            source,
        })?;
        let n = self.expression.split(';').count();
        if n != dim {
            return Err(invalid(
                &format!("{}.expression", key),
                format!("expected {} component(s), got {}", dim, n),
            ));
        }
        Ok(v)
    }

    fn read(s: &mut Section, default: &str) -> FunctionSpec {
        FunctionSpec {
            constants: s.string("constants").unwrap_or_default(),
            expression: s.string("expression").unwrap_or_else(|| default.to_string()),
        }
    }

    fn write(&self, out: &mut String, section: &str) {
        writeln!(out, "[{}]", section).unwrap();
        if !self.constants.is_empty() {
            writeln!(out, "constants = \"{}\"", self.constants).unwrap();
        }
        writeln!(out, "expression = \"{}\"\n", self.expression).unwrap();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcKind {
    Natural,
    Strong,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionName {
    Constant,
    Parsed,
}

impl FunctionName {
    fn from_word(w: &str) -> Option<Self> {
        match w {
            "constant" => Some(FunctionName::Constant),
            "parsed" => Some(FunctionName::Parsed),
            _ => None,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            FunctionName::Constant => "constant",
            FunctionName::Parsed => "parsed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySpec {
    pub implementation_types: Vec<BcKind>,
    pub function_names: Vec<FunctionName>,
    /// Values of the `constant` boundaries, in order.
    pub function_double_arguments: Vec<f64>,
    pub parsed_function: FunctionSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    Constant(f64),
    Parsed(FunctionSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementSpec {
    pub initial_global_cycles: usize,
    pub boundaries_to_refine: Vec<usize>,
    pub initial_boundary_cycles: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BodySpec {
    /// `circle` or `sphere-cylinder`.
    pub geometry_name: String,
    pub sizes: Vec<f64>,
    pub hull_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbdSpec {
    pub gravity: [f64; 2],
    pub melting_temperature: f64,
    /// `(x, y, θ)` bounds per step.
    pub max_change: [f64; 3],
    /// `(x, y, θ)` starting pose.
    pub initial_state: [f64; 3],
    pub feasibility_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSpec {
    pub interval: f64,
    pub inner_steps: usize,
    pub outer_steps: usize,
    /// Natural boundary whose constant flux follows the schedule.
    pub flux_boundary: Option<usize>,
    /// Outer steps at which the flux is multiplied by the matching factor.
    pub flux_change_steps: Vec<usize>,
    pub flux_change_factors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub write_vtk: bool,
    pub every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub dim: usize,
    pub grid_name: GridName,
    pub sizes: Vec<f64>,
    pub velocity: FunctionSpec,
    pub diffusivity: FunctionSpec,
    pub source: FunctionSpec,
    pub initial: InitialSpec,
    pub boundary: BoundarySpec,
    pub refinement: RefinementSpec,
    pub end_time: f64,
    pub step_size: f64,
    pub theta: f64,
    pub exact_solution: Option<FunctionSpec>,
    pub solver: SolverOptions,
    pub output: OutputSpec,
    pub body: Option<BodySpec>,
    pub rbd: Option<RbdSpec>,
    pub coupling: Option<CouplingSpec>,
}

const SECTIONS: &[&str] = &[
    "meta",
    "geometry",
    "pde.velocity",
    "pde.diffusivity",
    "pde.source",
    "initial_values",
    "initial_values.parsed_function",
    "boundary_conditions",
    "boundary_conditions.parsed_function",
    "refinement",
    "time",
    "verification",
    "verification.exact_solution",
    "solver",
    "output",
    "body",
    "rbd",
    "coupling",
];

fn triple(s: &mut Section, k: &'static str, default: [f64; 3]) -> Result<[f64; 3]> {
    match s.numbers(k)? {
        None => Ok(default),
        Some(v) if v.len() == 3 => Ok([v[0], v[1], v[2]]),
        Some(_) => Err(invalid(&s.key(k), "expected three values (x, y, theta)")),
    }
}

pub fn parse_config(text: &str) -> Result<Config> {
    let doc = parse_document(text)?;
    if let Some(name) = doc.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
        return Err(invalid(name, "unknown section"));
    }

    let mut meta = Section::new(&doc, "meta");
    let dim = meta.integer("dim")?.unwrap_or(2);
    meta.finish()?;
    if !(1..=2).contains(&dim) {
        return Err(invalid("meta.dim", "must be 1 or 2"));
    }

    let mut geo = Section::new(&doc, "geometry");
    let grid_name = match geo.string("grid_name") {
        None => GridName::HyperCube,
        Some(n) => GridName::from_name(&n).ok_or_else(|| invalid("geometry.grid_name", format!("unknown grid `{}`", n)))?,
    };
    let sizes = geo.numbers("sizes")?.unwrap_or_else(|| vec![0.0, 1.0]);
    geo.finish()?;

    let zero_velocity = if dim == 1 { "0" } else { "0; 0" };
    let read_fn = |name: &'static str, default: &str| -> Result<FunctionSpec> {
        let mut s = Section::new(&doc, name);
        let f = FunctionSpec::read(&mut s, default);
        s.finish()?;
        Ok(f)
    };
    let velocity = read_fn("pde.velocity", zero_velocity)?;
    let diffusivity = read_fn("pde.diffusivity", "1")?;
    let source = read_fn("pde.source", "0")?;

    let mut iv = Section::new(&doc, "initial_values");
    let iv_name = iv.string("function_name");
    let iv_args = iv.numbers("function_double_arguments")?;
    iv.finish()?;
    let iv_parsed = read_fn("initial_values.parsed_function", "0")?;
    let initial = match iv_name.as_deref() {
        None | Some("parsed") => InitialSpec::Parsed(iv_parsed),
        Some("constant") => match iv_args.as_deref() {
            Some([v]) => InitialSpec::Constant(*v),
            _ => return Err(invalid("initial_values.function_double_arguments", "expected one value")),
        },
        Some(other) => return Err(invalid("initial_values.function_name", format!("unknown function `{}`", other))),
    };

    let mut bc = Section::new(&doc, "boundary_conditions");
    let types = bc
        .words("implementation_types")
        .ok_or_else(|| invalid("boundary_conditions.implementation_types", "missing required value"))?
        .iter()
        .map(|w| match w.as_str() {
            "natural" => Ok(BcKind::Natural),
            "strong" => Ok(BcKind::Strong),
            _ => Err(invalid("boundary_conditions.implementation_types", format!("unknown type `{}`", w))),
        })
        .collect::<Result<Vec<_>>>()?;
    let names = match bc.words("function_names") {
        None => vec![FunctionName::Parsed; types.len()],
        Some(ws) => ws
            .iter()
            .map(|w| {
                FunctionName::from_word(w)
                    .ok_or_else(|| invalid("boundary_conditions.function_names", format!("unknown function `{}`", w)))
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let args = bc.numbers("function_double_arguments")?.unwrap_or_default();
    bc.finish()?;
    let bc_parsed = read_fn("boundary_conditions.parsed_function", "0")?;
    let boundary = BoundarySpec {
        implementation_types: types,
        function_names: names,
        function_double_arguments: args,
        parsed_function: bc_parsed,
    };

    let mut refine = Section::new(&doc, "refinement");
    let refinement = RefinementSpec {
        initial_global_cycles: refine.integer("initial_global_cycles")?.unwrap_or(0),
        boundaries_to_refine: refine.integers("boundaries_to_refine")?.unwrap_or_default(),
        initial_boundary_cycles: refine.integer("initial_boundary_cycles")?.unwrap_or(0),
    };
    refine.finish()?;

    let mut time = Section::new(&doc, "time");
    let end_time = time.required_number("end_time")?;
    let step_size = time.required_number("step_size")?;
    let theta = time.number("semi_implicit_theta")?.unwrap_or(0.5);
    time.finish()?;

    let mut ver = Section::new(&doc, "verification");
    let enabled = ver.boolean("enabled")?.unwrap_or(false);
    ver.finish()?;
    let exact = read_fn("verification.exact_solution", "0")?;
    let exact_solution = enabled.then_some(exact);

    let mut sol = Section::new(&doc, "solver");
    let d = SolverOptions::default();
    let solver = SolverOptions {
        tol: sol.number("tolerance")?.unwrap_or(d.tol),
        max_iter: sol.integer("max_iterations")?.unwrap_or(d.max_iter),
        jacobi: sol.boolean("jacobi")?.unwrap_or(d.jacobi),
        banded: sol.boolean("banded")?.unwrap_or(d.banded),
    };
    sol.finish()?;

    let mut out = Section::new(&doc, "output");
    let output = OutputSpec {
        write_vtk: out.boolean("write_vtk")?.unwrap_or(true),
        every: out.integer("every")?.unwrap_or(1),
    };
    out.finish()?;

    let mut b = Section::new(&doc, "body");
    let body = if b.present() {
        Some(BodySpec {
            geometry_name: b.string("geometry_name").unwrap_or_else(|| "circle".into()),
            sizes: b.numbers("sizes")?.unwrap_or_else(|| vec![1.0]),
            hull_samples: b.integer("hull_samples")?.unwrap_or(32),
        })
    } else {
        None
    };
    b.finish()?;

    let mut r = Section::new(&doc, "rbd");
    let rbd = if r.present() {
        let g = r.numbers("gravity")?.unwrap_or_else(|| vec![0.0, -1.0]);
        if g.len() != 2 {
            return Err(invalid("rbd.gravity", "expected two values"));
        }
        Some(RbdSpec {
            gravity: [g[0], g[1]],
            melting_temperature: r.number("melting_temperature")?.unwrap_or(0.0),
            max_change: triple(&mut r, "max_change", [0.0, 0.5, 0.0])?,
            initial_state: triple(&mut r, "initial_state", [0.0; 3])?,
            feasibility_tolerance: r
                .number("feasibility_tolerance")?
                .unwrap_or(RbdTolerances::default().feasibility),
        })
    } else {
        None
    };
    r.finish()?;

    let mut c = Section::new(&doc, "coupling");
    let coupling = if c.present() {
        Some(CouplingSpec {
            interval: c.number("interval")?.unwrap_or(1.0),
            inner_steps: c.integer("inner_steps")?.unwrap_or(5),
            outer_steps: c.integer("outer_steps")?.unwrap_or(1),
            flux_boundary: c.integer("flux_boundary")?,
            flux_change_steps: c.integers("flux_change_steps")?.unwrap_or_default(),
            flux_change_factors: c.numbers("flux_change_factors")?.unwrap_or_default(),
        })
    } else {
        None
    };
    c.finish()?;

    let cfg = Config {
        dim,
        grid_name,
        sizes,
        velocity,
        diffusivity,
        source,
        initial,
        boundary,
        refinement,
        end_time,
        step_size,
        theta,
        exact_solution,
        solver,
        output,
        body,
        rbd,
        coupling,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<Config> {
    parse_config(&std::fs::read_to_string(path)?)
}

fn list<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

fn nums(v: &[f64]) -> String {
    v.iter().map(|x| format!("{:?}", x)).collect::<Vec<_>>().join(", ")
}

pub fn write_config(c: &Config) -> String {
    let mut s = String::new();
    writeln!(s, "[meta]\ndim = {}\n", c.dim).unwrap();
    writeln!(s, "[geometry]\ngrid_name = {}\nsizes = {}\n", c.grid_name.as_str(), nums(&c.sizes)).unwrap();
    c.velocity.write(&mut s, "pde.velocity");
    c.diffusivity.write(&mut s, "pde.diffusivity");
    c.source.write(&mut s, "pde.source");
    match &c.initial {
        InitialSpec::Constant(v) => {
            writeln!(s, "[initial_values]\nfunction_name = constant\nfunction_double_arguments = {:?}\n", v).unwrap()
        }
        InitialSpec::Parsed(f) => {
            writeln!(s, "[initial_values]\nfunction_name = parsed\n").unwrap();
            f.write(&mut s, "initial_values.parsed_function");
        }
    }
    let b = &c.boundary;
    let types: Vec<&str> = b
        .implementation_types
        .iter()
        .map(|k| match k {
            BcKind::Natural => "natural",
            BcKind::Strong => "strong",
        })
        .collect();
    let names: Vec<&str> = b.function_names.iter().map(|n| n.as_str()).collect();
    writeln!(
        s,
        "[boundary_conditions]\nimplementation_types = {}\nfunction_names = {}",
        types.join(", "),
        names.join(", ")
    )
    .unwrap();
    if !b.function_double_arguments.is_empty() {
        writeln!(s, "function_double_arguments = {}", nums(&b.function_double_arguments)).unwrap();
    }
    s.push('\n');
    b.parsed_function.write(&mut s, "boundary_conditions.parsed_function");
    let r = &c.refinement;
    writeln!(s, "[refinement]\ninitial_global_cycles = {}", r.initial_global_cycles).unwrap();
    if !r.boundaries_to_refine.is_empty() {
        writeln!(s, "boundaries_to_refine = {}", list(&r.boundaries_to_refine)).unwrap();
    }
    writeln!(s, "initial_boundary_cycles = {}\n", r.initial_boundary_cycles).unwrap();
    writeln!(
        s,
        "[time]\nend_time = {:?}\nstep_size = {:?}\nsemi_implicit_theta = {:?}\n",
        c.end_time, c.step_size, c.theta
    )
    .unwrap();
    writeln!(s, "[verification]\nenabled = {}\n", c.exact_solution.is_some()).unwrap();
    if let Some(e) = &c.exact_solution {
        e.write(&mut s, "verification.exact_solution");
    }
    writeln!(
        s,
        "[solver]\ntolerance = {:?}\nmax_iterations = {}\njacobi = {}\nbanded = {}\n",
        c.solver.tol, c.solver.max_iter, c.solver.jacobi, c.solver.banded
    )
    .unwrap();
    writeln!(s, "[output]\nwrite_vtk = {}\nevery = {}\n", c.output.write_vtk, c.output.every).unwrap();
    if let Some(b) = &c.body {
        writeln!(
            s,
            "[body]\ngeometry_name = {}\nsizes = {}\nhull_samples = {}\n",
            b.geometry_name,
            nums(&b.sizes),
            b.hull_samples
        )
        .unwrap();
    }
    if let Some(r) = &c.rbd {
        writeln!(
            s,
            "[rbd]\ngravity = {}\nmelting_temperature = {:?}\nmax_change = {}\ninitial_state = {}\nfeasibility_tolerance = {:?}\n",
            nums(&r.gravity),
            r.melting_temperature,
            nums(&r.max_change),
            nums(&r.initial_state),
            r.feasibility_tolerance
        )
        .unwrap();
    }
    if let Some(k) = &c.coupling {
        writeln!(
            s,
            "[coupling]\ninterval = {:?}\ninner_steps = {}\nouter_steps = {}",
            k.interval, k.inner_steps, k.outer_steps
        )
        .unwrap();
        if let Some(b) = k.flux_boundary {
            writeln!(s, "flux_boundary = {}", b).unwrap();
        }
        if !k.flux_change_steps.is_empty() {
            writeln!(s, "flux_change_steps = {}", list(&k.flux_change_steps)).unwrap();
            writeln!(s, "flux_change_factors = {}", nums(&k.flux_change_factors)).unwrap();
        }
        s.push('\n');
    }
    s
}

impl Config {
    pub fn grid_spec(&self) -> GridSpec {
        GridSpec::new(self.grid_name, &self.sizes, self.dim)
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.boundary;
        let n = b.implementation_types.len();
        if b.function_names.len() != n {
            return Err(invalid(
                "boundary_conditions.function_names",
                format!("{} names for {} boundaries", b.function_names.len(), n),
            ));
        }
        let n_const = b.function_names.iter().filter(|&&f| f == FunctionName::Constant).count();
        if b.function_double_arguments.len() != n_const {
            return Err(invalid(
                "boundary_conditions.function_double_arguments",
                format!("{} values for {} constant boundaries", b.function_double_arguments.len(), n_const),
            ));
        }
        if !(self.step_size > 0.0) {
            return Err(invalid("time.step_size", "must be positive"));
        }
        if !(self.end_time > 0.0) {
            return Err(invalid("time.end_time", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(invalid("time.semi_implicit_theta", "must lie in [0, 1]"));
        }
        if self.output.every == 0 {
            return Err(invalid("output.every", "must be positive"));
        }
        let mesh = self.base_mesh()?;
        let ids = mesh.boundary_ids();
        if ids.len() != n {
            return Err(invalid(
                "boundary_conditions.implementation_types",
                format!("grid has {} boundaries but {} types were given", ids.len(), n),
            ));
        }
        for &id in &self.refinement.boundaries_to_refine {
            if id >= n {
                return Err(invalid("refinement.boundaries_to_refine", format!("no boundary {}", id)));
            }
        }
        self.velocity.vector("pde.velocity", self.dim)?;
        self.diffusivity.scalar("pde.diffusivity")?;
        self.source.scalar("pde.source")?;
        if let InitialSpec::Parsed(f) = &self.initial {
            f.scalar("initial_values.parsed_function")?;
        }
        b.parsed_function.scalar("boundary_conditions.parsed_function")?;
        if let Some(e) = &self.exact_solution {
            e.scalar("verification.exact_solution")?;
        }
        if let Some(c) = &self.coupling {
            if c.flux_change_steps.len() != c.flux_change_factors.len() {
                return Err(invalid("coupling.flux_change_factors", "one factor per change step"));
            }
            if let Some(fb) = c.flux_boundary {
                let ok = fb < n
                    && b.implementation_types[fb] == BcKind::Natural
                    && b.function_names[fb] == FunctionName::Constant;
                if !ok {
                    return Err(invalid("coupling.flux_boundary", "must be a natural boundary with a constant value"));
                }
            }
            if c.inner_steps == 0 || c.outer_steps == 0 || !(c.interval > 0.0) {
                return Err(invalid("coupling", "step counts and interval must be positive"));
            }
        }
        if let Some(body) = &self.body {
            self.body_geometry_of(body)?;
        }
        Ok(())
    }

    fn base_mesh(&self) -> Result<Mesh> {
        generate(&self.grid_spec()).map_err(|e| invalid("geometry", e.to_string()))
    }

    /// Generated and refined mesh.
    pub fn mesh(&self) -> Result<Mesh> {
        let r = &self.refinement;
        let mut m = refine_global(&self.base_mesh()?, r.initial_global_cycles)?;
        for &id in &r.boundaries_to_refine {
            m = refine_boundary(&m, id as u32, r.initial_boundary_cycles)?;
        }
        Ok(m)
    }

    /// Value of the `constant` boundary `id`, if it is one.
    pub fn constant_boundary_value(&self, id: usize) -> Option<f64> {
        let names = &self.boundary.function_names;
        if names.get(id) != Some(&FunctionName::Constant) {
            return None;
        }
        let k = names[..id].iter().filter(|&&f| f == FunctionName::Constant).count();
        self.boundary.function_double_arguments.get(k).copied()
    }

    pub fn boundary_conditions(&self) -> Result<Vec<BoundaryCondition>> {
        let parsed = self.boundary.parsed_function.scalar("boundary_conditions.parsed_function")?;
        Ok(self
            .boundary
            .implementation_types
            .iter()
            .enumerate()
            .map(|(id, kind)| {
                let f = match self.constant_boundary_value(id) {
                    Some(v) => SpaceTimeFn::Constant(v),
                    None => parsed.clone(),
                };
                match kind {
                    BcKind::Natural => BoundaryCondition::Natural(f),
                    BcKind::Strong => BoundaryCondition::Strong(f),
                }
            })
            .collect())
    }

    pub fn ambient_problem(&self) -> Result<AmbientProblem> {
        self.ambient_problem_on(Arc::new(self.mesh()?))
    }

    pub fn ambient_problem_on(&self, mesh: Arc<Mesh>) -> Result<AmbientProblem> {
        let initial = match &self.initial {
            InitialSpec::Constant(v) => InitialValues::Function(SpaceTimeFn::Constant(*v)),
            InitialSpec::Parsed(f) => InitialValues::Function(f.scalar("initial_values.parsed_function")?),
        };
        Ok(AmbientProblem {
            mesh,
            velocity: self.velocity.vector("pde.velocity", self.dim)?,
            diffusivity: self.diffusivity.scalar("pde.diffusivity")?,
            source: self.source.scalar("pde.source")?,
            boundary_conditions: self.boundary_conditions()?,
            initial,
            theta: self.theta,
            step_size: self.step_size,
            start_time: 0.0,
            end_time: self.end_time,
            solver: self.solver,
        })
    }

    pub fn exact(&self) -> Result<Option<SpaceTimeFn>> {
        self.exact_solution
            .as_ref()
            .map(|e| e.scalar("verification.exact_solution"))
            .transpose()
    }

    fn body_geometry_of(&self, b: &BodySpec) -> Result<BodyGeometry> {
        let size = |i: usize| {
            b.sizes
                .get(i)
                .copied()
                .ok_or_else(|| invalid("body.sizes", format!("missing size {}", i)))
        };
        Ok(match b.geometry_name.as_str() {
            "circle" => BodyGeometry::circle(size(0)?, b.hull_samples)?,
            "sphere-cylinder" => BodyGeometry::sphere_cylinder(size(0)?, size(1)?, b.hull_samples)?,
            other => return Err(invalid("body.geometry_name", format!("unknown body `{}`", other))),
        })
    }

    pub fn body_geometry(&self) -> Result<BodyGeometry> {
        let b = self.body.as_ref().ok_or_else(|| invalid("body", "section required"))?;
        self.body_geometry_of(b)
    }

    /// Rigid-body problem with a placeholder sampler and the starting pose.
    pub fn rbd_problem(&self) -> Result<(RbdProblem, RigidState)> {
        let r = self.rbd.as_ref().ok_or_else(|| invalid("rbd", "section required"))?;
        let [mx, my, mt] = r.max_change;
        let [x, y, th] = r.initial_state;
        let problem = RbdProblem {
            body: self.body_geometry()?,
            gravity: r.gravity,
            melting_temperature: r.melting_temperature,
            max_change: RigidState::new(mt, mx, my),
            tolerances: RbdTolerances {
                feasibility: r.feasibility_tolerance,
                ..RbdTolerances::default()
            },
            sampler: Arc::new(|_| f64::INFINITY),
        };
        Ok((problem, RigidState::new(th, x, y)))
    }

    pub fn coupling_config(&self) -> Result<(CouplingConfig, RigidState)> {
        let c = self.coupling.as_ref().ok_or_else(|| invalid("coupling", "section required"))?;
        if self.dim != 2 {
            return Err(invalid("meta.dim", "trajectories need dim = 2"));
        }
        let (rbd, start) = self.rbd_problem()?;
        let flux = c.flux_boundary.map(|id| {
            let base = self.constant_boundary_value(id).unwrap_or(0.0);
            let mut levels = vec![(1, base)];
            let mut value = base;
            for (&step, &factor) in c.flux_change_steps.iter().zip(&c.flux_change_factors) {
                value *= factor;
                levels.push((step, value));
            }
            FluxSchedule {
                boundary: id as u32,
                levels,
            }
        });
        let cfg = CouplingConfig {
            ambient: self.ambient_problem()?,
            rbd,
            interval: c.interval,
            inner_steps: c.inner_steps,
            outer_steps: c.outer_steps,
            flux,
        };
        cfg.validate().map_err(|e| invalid("coupling", e.to_string()))?;
        Ok((cfg, start))
    }
}
