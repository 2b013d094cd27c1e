//! Finite element fields: point evaluation, nearest-boundary-vertex
//! extrapolation, checkpoints, VTK export and isoline extraction.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use thiserror::Error;

use crate::assembly::{q1_jacobian, q1_map, q1_shape};
use crate::functions::Point;
use crate::mesh::{BoundaryFace, GridFamily, GridLayout, Manifold, Mesh, MeshError};
use crate::rbd::RigidState;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("point ({}, {}) is outside the mesh", .0[0], .0[1])]
    PointNotFound(Point),
    #[error("dof count {found} does not match node count {expected}")]
    DofCount { expected: usize, found: usize },
    #[error("non-finite nodal value at node {0}")]
    NonFinite(usize),
    #[error("unsupported checkpoint version: {0}")]
    Version(String),
    #[error("malformed checkpoint at line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("malformed VTK file: {0}")]
    Vtk(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, FieldError>;

/// Uniform bucket grid over cell bounding boxes.
#[derive(Debug)]
struct Locator {
    lo: Point,
    inv_size: Point,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
    boundary_vertices: Vec<usize>,
}

impl Locator {
    fn new(mesh: &Mesh) -> Self {
        let (mut lo, mut hi) = mesh.bounding_box();
        let pad = 1e-9 * (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1.0);
        for k in 0..2 {
            lo[k] -= pad;
            hi[k] += pad;
        }
        let n = (mesh.n_cells() as f64).sqrt().ceil().max(1.0) as usize;
        let (nx, ny) = if mesh.dim() == 1 { (mesh.n_cells().max(1), 1) } else { (n, n) };
        let inv_size = [nx as f64 / (hi[0] - lo[0]), ny as f64 / (hi[1] - lo[1])];
        let mut buckets = vec![Vec::new(); nx * ny];
        let mut loc = Locator {
            lo,
            inv_size,
            nx,
            ny,
            buckets: Vec::new(),
            boundary_vertices: mesh.boundary_vertices(),
        };
        for c in 0..mesh.n_cells() {
            let p = mesh.cell_points(c);
            let k = mesh.nodes_per_cell();
            let mut clo = [f64::INFINITY; 2];
            let mut chi = [f64::NEG_INFINITY; 2];
            for q in &p[..k] {
                for d in 0..2 {
                    clo[d] = clo[d].min(q[d]);
                    chi[d] = chi[d].max(q[d]);
                }
            }
            let (i0, j0) = loc.bucket(clo);
            let (i1, j1) = loc.bucket(chi);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(c as u32);
                }
            }
        }
        loc.buckets = buckets;
        loc
    }

    fn bucket(&self, p: Point) -> (usize, usize) {
        let f = |v: f64, lo: f64, inv: f64, n: usize| {
            let i = ((v - lo) * inv).floor();
            if i < 0.0 {
                0
            } else {
                (i as usize).min(n - 1)
            }
        };
        (
            f(p[0], self.lo[0], self.inv_size[0], self.nx),
            f(p[1], self.lo[1], self.inv_size[1], self.ny),
        )
    }

    fn candidates(&self, p: Point) -> &[u32] {
        let outside = (p[0] - self.lo[0]) * self.inv_size[0] < 0.0
            || (p[0] - self.lo[0]) * self.inv_size[0] > self.nx as f64
            || (p[1] - self.lo[1]) * self.inv_size[1] < 0.0
            || (p[1] - self.lo[1]) * self.inv_size[1] > self.ny as f64;
        if outside {
            return &[];
        }
        let (i, j) = self.bucket(p);
        &self.buckets[j * self.nx + i]
    }
}

/// Location of a point inside a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellPoint {
    pub cell: usize,
    pub reference: Point,
}

/// Inverts the bilinear map of a quad by Newton iteration.
pub fn inverse_bilinear(p: &[Point; 4], x: Point) -> Option<Point> {
    let mut r = [0.0, 0.0];
    for _ in 0..40 {
        let m = q1_map(p, r[0], r[1]);
        let res = [x[0] - m[0], x[1] - m[1]];
        let (j, det) = q1_jacobian(p, r[0], r[1]);
        if det <= 0.0 {
            return None;
        }
        let d = [
            (j[1][1] * res[0] - j[0][1] * res[1]) / det,
            (-j[1][0] * res[0] + j[0][0] * res[1]) / det,
        ];
        r[0] += d[0];
        r[1] += d[1];
        if d[0].abs().max(d[1].abs()) < 1e-12 {
            return Some(r);
        }
        if r[0].abs() > 10.0 || r[1].abs() > 10.0 {
            return None;
        }
    }
    None
}

/// A mesh plus one nodal value per node.
#[derive(Debug, Clone)]
pub struct FeField {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
    locator: Arc<OnceLock<Locator>>,
}

impl PartialEq for FeField {
    fn eq(&self, other: &Self) -> bool {
        self.mesh == other.mesh && self.values == other.values
    }
}

impl FeField {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_nodes() {
            return Err(FieldError::DofCount {
                expected: mesh.n_nodes(),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FieldError::NonFinite(i));
        }
        Ok(FeField {
            mesh,
            values,
            locator: Arc::new(OnceLock::new()),
        })
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(mesh: Arc<Mesh>, f: impl Fn(Point) -> f64) -> Result<Self> {
        let values = mesh.nodes().iter().map(|&p| f(p)).collect();
        Self::new(mesh, values)
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    fn locator(&self) -> &Locator {
        self.locator.get_or_init(|| Locator::new(&self.mesh))
    }

    /// Finds the cell containing `x`, or `None` outside the mesh.
    pub fn locate(&self, x: Point) -> Option<CellPoint> {
        let mesh = &*self.mesh;
        let tol = 1e-10;
        for &c in self.locator().candidates(x) {
            let c = c as usize;
            let p = mesh.cell_points(c);
            if mesh.dim() == 1 {
                let (a, b) = (p[0][0], p[1][0]);
                let xi = (2.0 * x[0] - a - b) / (b - a);
                if xi.abs() <= 1.0 + tol {
                    return Some(CellPoint {
                        cell: c,
                        reference: [xi.clamp(-1.0, 1.0), 0.0],
                    });
                }
                continue;
            }
            let mut lo = [f64::INFINITY; 2];
            let mut hi = [f64::NEG_INFINITY; 2];
            for q in &p {
                for d in 0..2 {
                    lo[d] = lo[d].min(q[d]);
                    hi[d] = hi[d].max(q[d]);
                }
            }
            let slack = tol * (hi[0] - lo[0]).max(hi[1] - lo[1]);
            if x[0] < lo[0] - slack || x[0] > hi[0] + slack || x[1] < lo[1] - slack || x[1] > hi[1] + slack {
                continue;
            }
            if let Some(r) = inverse_bilinear(&p, x) {
                if r[0].abs() <= 1.0 + tol && r[1].abs() <= 1.0 + tol {
                    return Some(CellPoint {
                        cell: c,
                        reference: [r[0].clamp(-1.0, 1.0), r[1].clamp(-1.0, 1.0)],
                    });
                }
            }
        }
        None
    }

    fn eval_in(&self, loc: CellPoint, x: Point) -> f64 {
        let cell = self.mesh.cell(loc.cell);
        for &n in cell {
            if self.mesh.node(n) == x {
                return self.values[n];
            }
        }
        if self.mesh.dim() == 1 {
            let xi = loc.reference[0];
            return 0.5 * (1.0 - xi) * self.values[cell[0]] + 0.5 * (1.0 + xi) * self.values[cell[1]];
        }
        let (n, _) = q1_shape(loc.reference[0], loc.reference[1]);
        (0..4).map(|a| n[a] * self.values[cell[a]]).sum()
    }

    /// Value at `x`; fails outside the mesh.
    pub fn eval(&self, x: Point) -> Result<f64> {
        let loc = self.locate(x).ok_or(FieldError::PointNotFound(x))?;
        Ok(self.eval_in(loc, x))
    }

    /// Boundary vertex nearest to `x`, lowest index on ties.
    pub fn nearest_boundary_vertex(&self, x: Point) -> usize {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for &n in &self.locator().boundary_vertices {
            let p = self.mesh.node(n);
            let d = (p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2);
            if d < best_d {
                best_d = d;
                best = n;
            }
        }
        best
    }

    /// Value at `x`, or at the nearest boundary vertex when `x` is outside.
    pub fn eval_extrapolated(&self, x: Point) -> f64 {
        match self.locate(x) {
            Some(loc) => self.eval_in(loc, x),
            None => self.values[self.nearest_boundary_vertex(x)],
        }
    }

    /// M-weighted integral of the field over the mesh.
    pub fn integral(&self) -> f64 {
        let sp = crate::assembly::FeSpace::new(self.mesh.clone());
        let mut qp = Vec::new();
        let mut total = 0.0;
        for c in 0..self.mesh.n_cells() {
            sp.quadrature(c, 2, &mut qp);
            let cell = self.mesh.cell(c);
            for q in &qp {
                let u: f64 = cell.iter().enumerate().map(|(a, &n)| q.phi[a] * self.values[n]).sum();
                total += u * q.jxw;
            }
        }
        total
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Samples `old` (with extrapolation) at every node of `mesh`.
pub fn init_from_field(mesh: Arc<Mesh>, old: &FeField) -> FeField {
    let values: Vec<f64> = mesh.nodes().par_iter().map(|&p| old.eval_extrapolated(p)).collect();
    FeField::new(mesh, values).expect("extrapolated values are finite")
}

/// Everything needed to restart a coupled run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub field: FeField,
    pub state: RigidState,
    pub rate: RigidState,
    pub aux: RigidState,
    pub time: f64,
    pub step: usize,
}

const CHECKPOINT_HEADER: &str = "meltsim-checkpoint v1";

fn manifold_line(m: &Manifold) -> String {
    match m {
        Manifold::Flat => "flat".into(),
        Manifold::Circle { center } => format!("circle {:e} {:e}", center[0], center[1]),
        Manifold::Cylinder {
            axis_point,
            direction,
        } => format!(
            "cylinder {:e} {:e} {:e} {:e}",
            axis_point[0], axis_point[1], direction[0], direction[1]
        ),
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{:e}", x)).collect::<Vec<_>>().join(" ")
}

fn layout_lines(l: &GridLayout) -> Vec<String> {
    let family = match l.family {
        GridFamily::Interval { a, b } => format!("interval {:e} {:e}", a, b),
        GridFamily::Rectangle { lo, hi } => {
            format!("rectangle {:e} {:e} {:e} {:e}", lo[0], lo[1], hi[0], hi[1])
        }
        GridFamily::Shell { inner, outer } => format!("shell {:e} {:e}", inner, outer),
        GridFamily::SphereCylinder {
            r_nose,
            r_outer,
            l_body,
            l_outer,
        } => format!(
            "sphere_cylinder {:e} {:e} {:e} {:e}",
            r_nose, r_outer, l_body, l_outer
        ),
    };
    vec![
        family,
        format!("u {}", join(&l.u_breaks)),
        format!("v {}", join(&l.v_breaks)),
        format!("placement {:e} {:e} {:e}", l.theta, l.offset[0], l.offset[1]),
    ]
}

pub fn checkpoint_to_string(c: &Checkpoint) -> String {
    let mesh = c.field.mesh();
    let mut s = String::new();
    writeln!(s, "{}", CHECKPOINT_HEADER).unwrap();
    writeln!(s, "NODES {} {}", mesh.n_nodes(), mesh.dim()).unwrap();
    for p in mesh.nodes() {
        writeln!(s, "{:e} {:e}", p[0], p[1]).unwrap();
    }
    writeln!(s, "CELLS {} {}", mesh.n_cells(), mesh.nodes_per_cell()).unwrap();
    for cell in mesh.cells() {
        let line: Vec<String> = cell.iter().map(|n| n.to_string()).collect();
        writeln!(s, "{}", line.join(" ")).unwrap();
    }
    writeln!(s, "BOUNDARY {}", mesh.boundary().len()).unwrap();
    for f in mesh.boundary() {
        writeln!(s, "{} {} {}", f.cell, f.face, f.id).unwrap();
    }
    writeln!(s, "MANIFOLD {} {}", mesh.manifolds().len(), mesh.n_cells()).unwrap();
    for m in mesh.manifolds() {
        writeln!(s, "{}", manifold_line(m)).unwrap();
    }
    for t in mesh.cell_manifold_tags() {
        writeln!(s, "{}", t).unwrap();
    }
    writeln!(s, "DOFS {}", c.field.values().len()).unwrap();
    for v in c.field.values() {
        writeln!(s, "{:e}", v).unwrap();
    }
    writeln!(s, "RIGID_STATE 3").unwrap();
    for (name, r) in [("pose", c.state), ("rate", c.rate), ("aux", c.aux)] {
        writeln!(s, "{} {:e} {:e} {:e}", name, r.theta, r.r0, r.r1).unwrap();
    }
    writeln!(s, "TIME 2").unwrap();
    writeln!(s, "time {:e}", c.time).unwrap();
    writeln!(s, "step {}", c.step).unwrap();
    match mesh.layout() {
        Some(l) => {
            let lines = layout_lines(l);
            writeln!(s, "GRID {}", lines.len()).unwrap();
            for line in lines {
                writeln!(s, "{}", line).unwrap();
            }
        }
        None => writeln!(s, "GRID 0").unwrap(),
    }
    writeln!(s, "END").unwrap();
    s
}

pub fn write_checkpoint(c: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, checkpoint_to_string(c))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    parse_checkpoint(&fs::read_to_string(path)?)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l.trim())
            }
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn err(&self, message: impl Into<String>) -> FieldError {
        FieldError::Malformed {
            line: self.line,
            message: message.into(),
        }
    }

    fn section(&mut self, name: &str) -> Result<Vec<usize>> {
        let l = self.next()?;
        let mut parts = l.split_whitespace();
        if parts.next() != Some(name) {
            return Err(self.err(format!("expected section {}", name)));
        }
        parts
            .map(|p| p.parse::<usize>().map_err(|_| self.err(format!("bad count `{}`", p))))
            .collect()
    }

    fn floats(&mut self, expect: usize) -> Result<Vec<f64>> {
        let l = self.next()?;
        self.parse_floats(l.split_whitespace(), Some(expect))
    }

    fn parse_floats<'b>(&self, parts: impl Iterator<Item = &'b str>, expect: Option<usize>) -> Result<Vec<f64>> {
        let v = parts
            .map(|p| p.parse::<f64>().map_err(|_| self.err(format!("bad number `{}`", p))))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(n) = expect {
            if v.len() != n {
                return Err(self.err(format!("expected {} values, got {}", n, v.len())));
            }
        }
        Ok(v)
    }

    fn ints(&mut self, expect: usize) -> Result<Vec<usize>> {
        let l = self.next()?;
        let v = l
            .split_whitespace()
            .map(|p| p.parse::<usize>().map_err(|_| self.err(format!("bad integer `{}`", p))))
            .collect::<Result<Vec<usize>>>()?;
        if v.len() != expect {
            return Err(self.err(format!("expected {} integers, got {}", expect, v.len())));
        }
        Ok(v)
    }

    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let l = self.next()?;
        l.strip_prefix(key)
            .map(str::trim)
            .ok_or_else(|| self.err(format!("expected `{}`", key)))
    }
}

fn count(v: &[usize], n: usize, lines: &Lines) -> Result<()> {
    if v.len() != n {
        return Err(lines.err("wrong number of section counts"));
    }
    Ok(())
}

pub fn parse_checkpoint(text: &str) -> Result<Checkpoint> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let header = lines.next()?;
    if header != CHECKPOINT_HEADER {
        if header.starts_with("meltsim-checkpoint") {
            return Err(FieldError::Version(header.to_string()));
        }
        return Err(lines.err("missing checkpoint header"));
    }
    let c = lines.section("NODES")?;
    count(&c, 2, &lines)?;
    let (n_nodes, dim) = (c[0], c[1]);
    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let v = lines.floats(2)?;
        nodes.push([v[0], v[1]]);
    }
    let c = lines.section("CELLS")?;
    count(&c, 2, &lines)?;
    let mut cell_nodes = Vec::with_capacity(c[0] * c[1]);
    for _ in 0..c[0] {
        cell_nodes.extend(lines.ints(c[1])?);
    }
    let c = lines.section("BOUNDARY")?;
    count(&c, 1, &lines)?;
    let mut boundary = Vec::with_capacity(c[0]);
    for _ in 0..c[0] {
        let v = lines.ints(3)?;
        boundary.push(BoundaryFace {
            cell: v[0],
            face: v[1],
            id: v[2] as u32,
        });
    }
    let c = lines.section("MANIFOLD")?;
    count(&c, 2, &lines)?;
    let mut manifolds = Vec::with_capacity(c[0]);
    for _ in 0..c[0] {
        let l = lines.next()?;
        let mut parts = l.split_whitespace();
        let kind = parts.next().unwrap_or("");
        let m = match kind {
            "flat" => {
                lines.parse_floats(parts, Some(0))?;
                Manifold::Flat
            }
            "circle" => {
                let v = lines.parse_floats(parts, Some(2))?;
                Manifold::Circle { center: [v[0], v[1]] }
            }
            "cylinder" => {
                let v = lines.parse_floats(parts, Some(4))?;
                Manifold::Cylinder {
                    axis_point: [v[0], v[1]],
                    direction: [v[2], v[3]],
                }
            }
            other => return Err(lines.err(format!("unknown manifold `{}`", other))),
        };
        manifolds.push(m);
    }
    let mut tags = Vec::with_capacity(c[1]);
    for _ in 0..c[1] {
        tags.push(lines.ints(1)?[0] as u32);
    }
    let c = lines.section("DOFS")?;
    count(&c, 1, &lines)?;
    let mut values = Vec::with_capacity(c[0]);
    for _ in 0..c[0] {
        values.push(lines.floats(1)?[0]);
    }
    let c = lines.section("RIGID_STATE")?;
    if c != [3] {
        return Err(lines.err("RIGID_STATE must hold pose, rate and aux"));
    }
    let mut states = [RigidState::default(); 3];
    for (s, key) in states.iter_mut().zip(["pose", "rate", "aux"]) {
        let rest = lines.keyed(key)?;
        let v = lines.parse_floats(rest.split_whitespace(), Some(3))?;
        *s = RigidState::new(v[0], v[1], v[2]);
    }
    let c = lines.section("TIME")?;
    if c != [2] {
        return Err(lines.err("TIME must hold time and step"));
    }
    let rest = lines.keyed("time")?;
    let time = lines.parse_floats(rest.split_whitespace(), Some(1))?[0];
    let rest = lines.keyed("step")?;
    let step = rest.parse::<usize>().map_err(|_| lines.err("bad step"))?;
    let c = lines.section("GRID")?;
    count(&c, 1, &lines)?;
    let layout = match c[0] {
        0 => None,
        4 => Some(parse_layout(&mut lines)?),
        _ => return Err(lines.err("GRID must have 0 or 4 lines")),
    };
    if lines.next()? != "END" {
        return Err(lines.err("expected END"));
    }
    let mesh = Mesh::from_parts(dim, nodes, cell_nodes, boundary, manifolds, tags, layout)?;
    let field = FeField::new(Arc::new(mesh), values)?;
    Ok(Checkpoint {
        field,
        state: states[0],
        rate: states[1],
        aux: states[2],
        time,
        step,
    })
}

fn parse_layout(lines: &mut Lines) -> Result<GridLayout> {
    let l = lines.next()?;
    let mut parts = l.split_whitespace();
    let kind = parts.next().unwrap_or("");
    let family = match kind {
        "interval" => {
            let v = lines.parse_floats(parts, Some(2))?;
            GridFamily::Interval { a: v[0], b: v[1] }
        }
        "rectangle" => {
            let v = lines.parse_floats(parts, Some(4))?;
            GridFamily::Rectangle {
                lo: [v[0], v[1]],
                hi: [v[2], v[3]],
            }
        }
        "shell" => {
            let v = lines.parse_floats(parts, Some(2))?;
            GridFamily::Shell {
                inner: v[0],
                outer: v[1],
            }
        }
        "sphere_cylinder" => {
            let v = lines.parse_floats(parts, Some(4))?;
            GridFamily::SphereCylinder {
                r_nose: v[0],
                r_outer: v[1],
                l_body: v[2],
                l_outer: v[3],
            }
        }
        other => return Err(lines.err(format!("unknown grid family `{}`", other))),
    };
    let rest = lines.keyed("u")?;
    let u_breaks = lines.parse_floats(rest.split_whitespace(), None)?;
    let rest = lines.keyed("v")?;
    let v_breaks = lines.parse_floats(rest.split_whitespace(), None)?;
    let rest = lines.keyed("placement")?;
    let p = lines.parse_floats(rest.split_whitespace(), Some(3))?;
    Ok(GridLayout {
        family,
        u_breaks,
        v_breaks,
        theta: p[0],
        offset: [p[1], p[2]],
    })
}

/// Legacy ASCII VTK text. `comment` goes into the title line.
pub fn vtk_string(f: &FeField, t: f64, comment: Option<&str>) -> String {
    let mesh = f.mesh();
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 2.0\n");
    match comment {
        Some(c) => writeln!(s, "meltsim field u {}", c).unwrap(),
        None => s.push_str("meltsim field u\n"),
    }
    s.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    writeln!(s, "FIELD FieldData 1\nTIME 1 1 double\n{:e}", t).unwrap();
    writeln!(s, "POINTS {} double", mesh.n_nodes()).unwrap();
    for p in mesh.nodes() {
        writeln!(s, "{:e} {:e} 0", p[0], p[1]).unwrap();
    }
    let k = mesh.nodes_per_cell();
    writeln!(s, "CELLS {} {}", mesh.n_cells(), mesh.n_cells() * (k + 1)).unwrap();
    for cell in mesh.cells() {
        let ids: Vec<String> = cell.iter().map(|n| n.to_string()).collect();
        writeln!(s, "{} {}", k, ids.join(" ")).unwrap();
    }
    writeln!(s, "CELL_TYPES {}", mesh.n_cells()).unwrap();
    let ty = if mesh.dim() == 1 { "3" } else { "9" };
    for _ in 0..mesh.n_cells() {
        writeln!(s, "{}", ty).unwrap();
    }
    writeln!(s, "POINT_DATA {}\nSCALARS u double 1\nLOOKUP_TABLE default", mesh.n_nodes()).unwrap();
    for v in f.values() {
        writeln!(s, "{:e}", v).unwrap();
    }
    s
}

pub fn export_vtk(f: &FeField, path: &Path, t: f64, comment: Option<&str>) -> Result<()> {
    fs::write(path, vtk_string(f, t, comment))?;
    Ok(())
}

/// Contents of a legacy VTK file written by [`export_vtk`].
#[derive(Debug, Clone, PartialEq)]
pub struct VtkData {
    pub time: f64,
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<Vec<usize>>,
    pub cell_types: Vec<u8>,
    pub values: Vec<f64>,
}

struct Tokens<'a> {
    inner: Box<dyn Iterator<Item = &'a str> + 'a>,
}

impl<'a> Tokens<'a> {
    fn next(&mut self) -> Result<&'a str> {
        self.inner
            .next()
            .ok_or_else(|| FieldError::Vtk("unexpected end of file".into()))
    }

    fn expect(&mut self, want: &str) -> Result<()> {
        let got = self.next()?;
        if got == want {
            Ok(())
        } else {
            Err(FieldError::Vtk(format!("expected `{}`, got `{}`", want, got)))
        }
    }

    fn num(&mut self) -> Result<f64> {
        let s = self.next()?;
        s.parse().map_err(|_| FieldError::Vtk(format!("bad number `{}`", s)))
    }

    fn int(&mut self) -> Result<usize> {
        let s = self.next()?;
        s.parse().map_err(|_| FieldError::Vtk(format!("bad integer `{}`", s)))
    }
}

pub fn parse_vtk(text: &str) -> Result<VtkData> {
    let mut tk = Tokens {
        inner: Box::new(text.lines().skip(2).flat_map(str::split_whitespace)),
    };
    for w in ["ASCII", "DATASET", "UNSTRUCTURED_GRID", "FIELD", "FieldData", "1", "TIME", "1", "1", "double"] {
        tk.expect(w)?;
    }
    let time = tk.num()?;
    tk.expect("POINTS")?;
    let n = tk.int()?;
    tk.expect("double")?;
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        points.push([tk.num()?, tk.num()?, tk.num()?]);
    }
    tk.expect("CELLS")?;
    let nc = tk.int()?;
    let _size = tk.int()?;
    let mut cells = Vec::with_capacity(nc);
    for _ in 0..nc {
        let k = tk.int()?;
        cells.push((0..k).map(|_| tk.int()).collect::<Result<Vec<_>>>()?);
    }
    tk.expect("CELL_TYPES")?;
    if tk.int()? != nc {
        return Err(FieldError::Vtk("cell type count mismatch".into()));
    }
    let cell_types = (0..nc)
        .map(|_| tk.int().map(|v| v as u8))
        .collect::<Result<Vec<_>>>()?;
    tk.expect("POINT_DATA")?;
    if tk.int()? != n {
        return Err(FieldError::Vtk("point data count mismatch".into()));
    }
    for w in ["SCALARS", "u", "double", "1", "LOOKUP_TABLE", "default"] {
        tk.expect(w)?;
    }
    let values = (0..n).map(|_| tk.num()).collect::<Result<Vec<_>>>()?;
    Ok(VtkData {
        time,
        points,
        cells,
        cell_types,
        values,
    })
}

pub type Polyline = Vec<Point>;

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Level-set polylines of a 2D field by marching squares with bilinear edge
/// crossings. Saddle cells are resolved by the cell-centre mean. Closed
/// curves repeat their first point at the end.
pub fn extract_isoline(f: &FeField, level: f64) -> Vec<Polyline> {
    let mesh = f.mesh();
    if mesh.dim() != 2 {
        return Vec::new();
    }
    let u = f.values();
    let mut points: HashMap<(usize, usize), Point> = HashMap::new();
    let mut segments: Vec<[(usize, usize); 2]> = Vec::new();
    for cell in mesh.cells() {
        let above: Vec<bool> = cell.iter().map(|&n| u[n] > level).collect();
        let mut crossings = Vec::with_capacity(4);
        for e in 0..4 {
            if above[e] != above[(e + 1) % 4] {
                let key = edge_key(cell[e], cell[(e + 1) % 4]);
                points.entry(key).or_insert_with(|| {
                    let (a, b) = key;
                    let s = (level - u[a]) / (u[b] - u[a]);
                    let pa = mesh.node(a);
                    let pb = mesh.node(b);
                    [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])]
                });
                crossings.push((e, key));
            }
        }
        match crossings.len() {
            2 => segments.push([crossings[0].1, crossings[1].1]),
            4 => {
                let center = cell.iter().map(|&n| u[n]).sum::<f64>() / 4.0 > level;
                let key = |e: usize| edge_key(cell[e], cell[(e + 1) % 4]);
                // Corner k sits between edges k-1 and k; cut off the corners
                // whose state differs from the centre.
                for k in 0..4 {
                    if above[k] != center {
                        segments.push([key((k + 3) % 4), key(k)]);
                    }
                }
            }
            _ => {}
        }
    }
    chain(&segments)
        .into_iter()
        .map(|keys| keys.iter().map(|k| points[k]).collect())
        .collect()
}

fn chain(segments: &[[(usize, usize); 2]]) -> Vec<Vec<(usize, usize)>> {
    let mut adj: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (i, s) in segments.iter().enumerate() {
        adj.entry(s[0]).or_default().push(i);
        adj.entry(s[1]).or_default().push(i);
    }
    let mut used = vec![false; segments.len()];
    let mut out = Vec::new();
    let walk = |start_seg: usize, start_key: (usize, usize), used: &mut Vec<bool>| {
        let mut line = vec![start_key];
        let mut seg = start_seg;
        let mut at = start_key;
        loop {
            used[seg] = true;
            let s = segments[seg];
            let next = if s[0] == at { s[1] } else { s[0] };
            line.push(next);
            at = next;
            match adj[&at].iter().find(|&&j| !used[j]) {
                Some(&j) => seg = j,
                None => break,
            }
        }
        line
    };
    let mut ends: Vec<(usize, usize)> = adj
        .iter()
        .filter(|(_, v)| v.len() == 1)
        .map(|(k, _)| *k)
        .collect();
    ends.sort_unstable();
    for k in ends {
        let seg = adj[&k][0];
        if !used[seg] {
            out.push(walk(seg, k, &mut used));
        }
    }
    for i in 0..segments.len() {
        if !used[i] {
            out.push(walk(i, segments[i][0], &mut used));
        }
    }
    out
}

/// CSV with columns `polyline,x,y`.
pub fn isolines_csv(lines: &[Polyline]) -> String {
    let mut s = String::from("polyline,x,y\n");
    for (i, l) in lines.iter().enumerate() {
        for p in l {
            writeln!(s, "{},{:e},{:e}", i, p[0], p[1]).unwrap();
        }
    }
    s
}
