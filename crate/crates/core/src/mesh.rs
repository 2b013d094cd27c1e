//! Line and quadrilateral meshes for the interval, rectangle, annular shell
//! and sphere-cylinder shell domains.
//!
//! Every generated mesh is a mapped tensor-product grid: a family map from
//! reference coordinates `(u, v) ∈ [0,1]²` to physical space, a list of `u`
//! break points (the boundary-normal direction) and `v` break points (the
//! tangential direction, periodic for shells), and a rigid placement. Global
//! refinement bisects every interval; boundary refinement bisects only the
//! interval adjacent to the requested boundary, which grades the mesh
//! anisotropically while keeping it conforming. New nodes are always placed
//! through the family map, so nodes on circular boundaries land exactly on
//! the circle.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use thiserror::Error;

use crate::assembly::{q1_jacobian, GAUSS2};
use crate::functions::Point;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error("invalid sizes for {name}: {reason}")]
    InvalidSizes { name: String, reason: String },
    #[error("unknown boundary id {0}")]
    UnknownBoundary(u32),
    #[error("boundary id {id} is not refinable for this mesh: {reason}")]
    NotRefinable { id: u32, reason: String },
    #[error("cell {cell} has non-positive Jacobian {det:e}")]
    Degenerate { cell: usize, det: f64 },
    #[error("mesh is not conforming: {0}")]
    NonConforming(String),
    #[error("mesh has no tensor-product layout and cannot be refined")]
    NoLayout,
    #[error("rotation of a 1D mesh is not defined")]
    Rotation1d,
}

pub type Result<T> = std::result::Result<T, MeshError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridName {
    HyperCube,
    HyperRectangle,
    HyperShell,
    HemisphereCylinderShell,
}

impl GridName {
    pub fn as_str(self) -> &'static str {
        match self {
            GridName::HyperCube => "hyper_cube",
            GridName::HyperRectangle => "hyper_rectangle",
            GridName::HyperShell => "hyper_shell",
            GridName::HemisphereCylinderShell => "hemisphere_cylinder_shell",
        }
    }

    pub fn from_name(name: &str) -> Option<GridName> {
        Some(match name {
            "hyper_cube" => GridName::HyperCube,
            "hyper_rectangle" => GridName::HyperRectangle,
            "hyper_shell" => GridName::HyperShell,
            "hemisphere_cylinder_shell" => GridName::HemisphereCylinderShell,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub name: GridName,
    pub sizes: Vec<f64>,
    pub dim: usize,
    /// Coarse cell count around shells.
    pub angular_cells: usize,
}

impl GridSpec {
    pub fn new(name: GridName, sizes: &[f64], dim: usize) -> Self {
        GridSpec {
            name,
            sizes: sizes.to_vec(),
            dim,
            angular_cells: 8,
        }
    }

    pub fn interval(a: f64, b: f64) -> Self {
        Self::new(GridName::HyperCube, &[a, b], 1)
    }

    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::new(GridName::HyperRectangle, &[x0, y0, x1, y1], 2)
    }

    pub fn shell(inner: f64, outer: f64) -> Self {
        Self::new(GridName::HyperShell, &[inner, outer], 2)
    }

    pub fn sphere_cylinder(r_nose: f64, r_outer: f64, l_body: f64, l_outer: f64) -> Self {
        Self::new(
            GridName::HemisphereCylinderShell,
            &[r_nose, r_outer, l_body, l_outer],
            2,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Manifold {
    Flat,
    Circle { center: Point },
    Cylinder { axis_point: Point, direction: Point },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridFamily {
    Interval { a: f64, b: f64 },
    Rectangle { lo: Point, hi: Point },
    Shell { inner: f64, outer: f64 },
    SphereCylinder { r_nose: f64, r_outer: f64, l_body: f64, l_outer: f64 },
}

impl GridFamily {
    fn periodic(&self) -> bool {
        matches!(self, GridFamily::Shell { .. } | GridFamily::SphereCylinder { .. })
    }

    /// Reference-frame position, before rigid placement.
    pub fn map(&self, u: f64, v: f64) -> Point {
        match *self {
            GridFamily::Interval { a, b } => [a + u * (b - a), 0.0],
            GridFamily::Rectangle { lo, hi } => {
                [lo[0] + u * (hi[0] - lo[0]), lo[1] + v * (hi[1] - lo[1])]
            }
            GridFamily::Shell { inner, outer } => {
                let r = inner + u * (outer - inner);
                let phi = 2.0 * PI * v;
                [r * phi.cos(), r * phi.sin()]
            }
            GridFamily::SphereCylinder {
                r_nose,
                r_outer,
                l_body,
                l_outer,
            } => {
                let tau = 8.0 * v.rem_euclid(1.0);
                let a = hull_point(tau, r_nose, l_body);
                let b = hull_point(tau, r_outer, l_outer);
                [(1.0 - u) * a[0] + u * b[0], (1.0 - u) * a[1] + u * b[1]]
            }
        }
    }
}

/// Point on a nose-down sphere-cylinder outline with the nose centre at the
/// origin. `tau ∈ [0, 8)` runs counterclockwise from the bottom of the nose.
pub fn hull_point(tau: f64, radius: f64, length: f64) -> Point {
    if tau < 2.0 {
        let phi = -FRAC_PI_2 + tau * FRAC_PI_4;
        [radius * phi.cos(), radius * phi.sin()]
    } else if tau < 3.0 {
        [radius, (tau - 2.0) * length]
    } else if tau < 5.0 {
        [radius - (tau - 3.0) * radius, length]
    } else if tau < 6.0 {
        [-radius, length - (tau - 5.0) * length]
    } else {
        let phi = PI + (tau - 6.0) * FRAC_PI_4;
        [radius * phi.cos(), radius * phi.sin()]
    }
}

/// Inner-hull segment id of a sphere-cylinder shell for parameter `tau`.
fn sphere_cylinder_segment(tau: f64) -> u32 {
    match tau {
        t if t < 2.0 => 0,
        t if t < 3.0 => 1,
        t if t < 5.0 => 2,
        t if t < 6.0 => 3,
        _ => 4,
    }
}

/// Tensor-product description a mesh was generated from.
#[derive(Debug, Clone, PartialEq)]
pub struct GridLayout {
    pub family: GridFamily,
    pub u_breaks: Vec<f64>,
    pub v_breaks: Vec<f64>,
    /// Rigid placement `x = R(theta) x_ref + offset`.
    pub theta: f64,
    pub offset: Point,
}

impl GridLayout {
    fn place(&self, p: Point) -> Point {
        let (s, c) = self.theta.sin_cos();
        [
            c * p[0] - s * p[1] + self.offset[0],
            s * p[0] + c * p[1] + self.offset[1],
        ]
    }

    fn place_manifold(&self, m: Manifold) -> Manifold {
        let (s, c) = self.theta.sin_cos();
        match m {
            Manifold::Flat => Manifold::Flat,
            Manifold::Circle { center } => Manifold::Circle {
                center: self.place(center),
            },
            Manifold::Cylinder {
                axis_point,
                direction,
            } => Manifold::Cylinder {
                axis_point: self.place(axis_point),
                direction: [
                    c * direction[0] - s * direction[1],
                    s * direction[0] + c * direction[1],
                ],
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryFace {
    pub cell: usize,
    /// Local face: quads 0..4 with face `f` joining local nodes `f` and
    /// `(f+1) % 4`; lines 0 (left node) and 1 (right node).
    pub face: usize,
    pub id: u32,
}

/// A boundary face with its geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceGeom {
    pub cell: usize,
    pub face: usize,
    /// Endpoints; both equal in 1D.
    pub nodes: [usize; 2],
    pub normal: Point,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    dim: usize,
    nodes: Vec<Point>,
    cell_nodes: Vec<usize>,
    boundary: Vec<BoundaryFace>,
    manifolds: Vec<Manifold>,
    cell_manifold: Vec<u32>,
    layout: Option<GridLayout>,
}

impl Mesh {
    /// Assembles a mesh from raw parts and validates it.
    pub fn from_parts(
        dim: usize,
        nodes: Vec<Point>,
        cell_nodes: Vec<usize>,
        boundary: Vec<BoundaryFace>,
        manifolds: Vec<Manifold>,
        cell_manifold: Vec<u32>,
        layout: Option<GridLayout>,
    ) -> Result<Mesh> {
        let mesh = Mesh {
            dim,
            nodes,
            cell_nodes,
            boundary,
            manifolds,
            cell_manifold,
            layout,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes_per_cell(&self) -> usize {
        if self.dim == 1 {
            2
        } else {
            4
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cell_nodes.len() / self.nodes_per_cell()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> Point {
        self.nodes[i]
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let k = self.nodes_per_cell();
        &self.cell_nodes[c * k..(c + 1) * k]
    }

    pub fn cells(&self) -> impl Iterator<Item = &[usize]> {
        self.cell_nodes.chunks(self.nodes_per_cell())
    }

    pub fn cell_nodes_flat(&self) -> &[usize] {
        &self.cell_nodes
    }

    pub fn cell_points(&self, c: usize) -> [Point; 4] {
        let cell = self.cell(c);
        let mut out = [[0.0; 2]; 4];
        for (o, &n) in out.iter_mut().zip(cell) {
            *o = self.nodes[n];
        }
        out
    }

    pub fn boundary(&self) -> &[BoundaryFace] {
        &self.boundary
    }

    pub fn manifolds(&self) -> &[Manifold] {
        &self.manifolds
    }

    pub fn cell_manifold(&self, c: usize) -> Manifold {
        self.manifolds[self.cell_manifold[c] as usize]
    }

    pub fn cell_manifold_tags(&self) -> &[u32] {
        &self.cell_manifold
    }

    pub fn layout(&self) -> Option<&GridLayout> {
        self.layout.as_ref()
    }

    /// Sorted distinct boundary ids.
    pub fn boundary_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.boundary.iter().map(|f| f.id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn face_nodes(&self, cell: usize, face: usize) -> [usize; 2] {
        let c = self.cell(cell);
        if self.dim == 1 {
            [c[face], c[face]]
        } else {
            [c[face], c[(face + 1) % 4]]
        }
    }

    /// Faces on boundary `id` with outward unit normals.
    pub fn boundary_faces(&self, id: u32) -> Result<Vec<FaceGeom>> {
        let faces: Vec<FaceGeom> = self
            .boundary
            .iter()
            .filter(|f| f.id == id)
            .map(|f| self.face_geom(f))
            .collect();
        if faces.is_empty() {
            return Err(MeshError::UnknownBoundary(id));
        }
        Ok(faces)
    }

    fn face_geom(&self, f: &BoundaryFace) -> FaceGeom {
        let nodes = self.face_nodes(f.cell, f.face);
        if self.dim == 1 {
            let normal = if f.face == 0 { [-1.0, 0.0] } else { [1.0, 0.0] };
            return FaceGeom {
                cell: f.cell,
                face: f.face,
                nodes,
                normal,
                length: 1.0,
            };
        }
        let a = self.nodes[nodes[0]];
        let b = self.nodes[nodes[1]];
        let d = [b[0] - a[0], b[1] - a[1]];
        let length = d[0].hypot(d[1]);
        FaceGeom {
            cell: f.cell,
            face: f.face,
            nodes,
            normal: [d[1] / length, -d[0] / length],
            length,
        }
    }

    /// Sorted indices of nodes lying on any boundary face.
    pub fn boundary_vertices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .boundary
            .iter()
            .flat_map(|f| self.face_nodes(f.cell, f.face))
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Sorted indices of nodes on boundary `id`.
    pub fn boundary_nodes(&self, id: u32) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .boundary
            .iter()
            .filter(|f| f.id == id)
            .flat_map(|f| self.face_nodes(f.cell, f.face))
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn cell_center(&self, c: usize) -> Point {
        let cell = self.cell(c);
        let k = cell.len() as f64;
        let mut s = [0.0; 2];
        for &n in cell {
            s[0] += self.nodes[n][0];
            s[1] += self.nodes[n][1];
        }
        [s[0] / k, s[1] / k]
    }

    /// Length (1D) or straight-edged area (2D) of a cell.
    pub fn cell_measure(&self, c: usize) -> f64 {
        let p = self.cell_points(c);
        if self.dim == 1 {
            return (p[1][0] - p[0][0]).abs();
        }
        0.5 * (0..4)
            .map(|i| {
                let j = (i + 1) % 4;
                p[i][0] * p[j][1] - p[j][0] * p[i][1]
            })
            .sum::<f64>()
    }

    pub fn measure(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.cell_measure(c)).sum()
    }

    /// Longest cell edge or diagonal.
    pub fn cell_diameter(&self, c: usize) -> f64 {
        let p = self.cell_points(c);
        let k = self.nodes_per_cell();
        let mut d: f64 = 0.0;
        for i in 0..k {
            for j in i + 1..k {
                d = d.max((p[i][0] - p[j][0]).hypot(p[i][1] - p[j][1]));
            }
        }
        d
    }

    pub fn max_cell_diameter(&self) -> f64 {
        (0..self.n_cells())
            .map(|c| self.cell_diameter(c))
            .fold(0.0, f64::max)
    }

    /// Bounding box `(min, max)` of all nodes.
    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.nodes {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    /// Checks connectivity, Jacobian positivity, conformity and that the
    /// boundary ids are contiguous from 0.
    pub fn validate(&self) -> Result<()> {
        let k = self.nodes_per_cell();
        if self.dim != 1 && self.dim != 2 {
            return Err(MeshError::NonConforming(format!("dimension {}", self.dim)));
        }
        if self.cell_nodes.len() % k != 0 || self.cell_nodes.is_empty() {
            return Err(MeshError::NonConforming("ragged cell list".into()));
        }
        if let Some(&n) = self.cell_nodes.iter().find(|&&n| n >= self.nodes.len()) {
            return Err(MeshError::NonConforming(format!("node index {} out of range", n)));
        }
        if self.cell_manifold.len() != self.n_cells()
            || self
                .cell_manifold
                .iter()
                .any(|&m| m as usize >= self.manifolds.len())
        {
            return Err(MeshError::NonConforming("bad manifold tags".into()));
        }
        for c in 0..self.n_cells() {
            let p = self.cell_points(c);
            if self.dim == 1 {
                let det = p[1][0] - p[0][0];
                if det <= 0.0 {
                    return Err(MeshError::Degenerate { cell: c, det });
                }
                continue;
            }
            for &xi in &GAUSS2 {
                for &eta in &GAUSS2 {
                    let det = q1_jacobian(&p, xi, eta).1;
                    if det <= 0.0 || !det.is_finite() {
                        return Err(MeshError::Degenerate { cell: c, det });
                    }
                }
            }
        }

        let mut faces: HashMap<[usize; 2], usize> = HashMap::new();
        let n_faces = if self.dim == 1 { 2 } else { 4 };
        for c in 0..self.n_cells() {
            for f in 0..n_faces {
                let mut key = self.face_nodes(c, f);
                key.sort_unstable();
                *faces.entry(key).or_default() += 1;
            }
        }
        if let Some((key, n)) = faces.iter().find(|(_, &n)| n > 2) {
            return Err(MeshError::NonConforming(format!(
                "face {:?} shared by {} cells",
                key, n
            )));
        }
        let mut seen = HashMap::new();
        for bf in &self.boundary {
            if bf.cell >= self.n_cells() || bf.face >= n_faces {
                return Err(MeshError::NonConforming("boundary face out of range".into()));
            }
            let mut key = self.face_nodes(bf.cell, bf.face);
            key.sort_unstable();
            if faces.get(&key) != Some(&1) {
                return Err(MeshError::NonConforming(format!(
                    "boundary face {:?} is not on the boundary",
                    key
                )));
            }
            if seen.insert(key, bf.id).is_some() {
                return Err(MeshError::NonConforming(format!(
                    "boundary face {:?} listed twice",
                    key
                )));
            }
        }
        let open = faces.values().filter(|&&n| n == 1).count();
        if open != self.boundary.len() {
            return Err(MeshError::NonConforming(format!(
                "{} open faces but {} tagged boundary faces",
                open,
                self.boundary.len()
            )));
        }
        let ids = self.boundary_ids();
        if ids.iter().enumerate().any(|(i, &id)| i as u32 != id) {
            return Err(MeshError::NonConforming(format!(
                "boundary ids {:?} are not contiguous from 0",
                ids
            )));
        }
        Ok(())
    }
}

fn invalid(spec: &GridSpec, reason: impl Into<String>) -> MeshError {
    MeshError::InvalidSizes {
        name: spec.name.as_str().to_string(),
        reason: reason.into(),
    }
}

fn uniform(n: usize) -> Vec<f64> {
    (0..=n).map(|i| i as f64 / n as f64).collect()
}

/// Coarse mesh for `spec`.
pub fn generate(spec: &GridSpec) -> Result<Mesh> {
    let s = &spec.sizes;
    if s.iter().any(|v| !v.is_finite()) {
        return Err(invalid(spec, "non-finite size"));
    }
    let expect = |n: usize| -> Result<()> {
        if s.len() != n {
            Err(invalid(spec, format!("expected {} sizes, got {}", n, s.len())))
        } else {
            Ok(())
        }
    };
    let (family, v_cells) = match (spec.name, spec.dim) {
        (GridName::HyperCube | GridName::HyperRectangle, 1) => {
            expect(2)?;
            if s[1] <= s[0] {
                return Err(invalid(spec, "interval end must exceed start"));
            }
            (GridFamily::Interval { a: s[0], b: s[1] }, 0)
        }
        (GridName::HyperCube, 2) => {
            expect(2)?;
            if s[1] <= s[0] {
                return Err(invalid(spec, "upper corner must exceed lower corner"));
            }
            (
                GridFamily::Rectangle {
                    lo: [s[0], s[0]],
                    hi: [s[1], s[1]],
                },
                1,
            )
        }
        (GridName::HyperRectangle, 2) => {
            expect(4)?;
            if s[2] <= s[0] || s[3] <= s[1] {
                return Err(invalid(spec, "upper corner must exceed lower corner"));
            }
            (
                GridFamily::Rectangle {
                    lo: [s[0], s[1]],
                    hi: [s[2], s[3]],
                },
                1,
            )
        }
        (GridName::HyperShell, 2) => {
            expect(2)?;
            if !(s[0] > 0.0 && s[0] < s[1]) {
                return Err(invalid(spec, "need 0 < inner radius < outer radius"));
            }
            if spec.angular_cells < 3 {
                return Err(invalid(spec, "need at least 3 angular cells"));
            }
            (
                GridFamily::Shell {
                    inner: s[0],
                    outer: s[1],
                },
                spec.angular_cells,
            )
        }
        (GridName::HemisphereCylinderShell, 2) => {
            expect(4)?;
            if !(s[0] > 0.0 && s[0] < s[1] && s[2] > 0.0 && s[2] < s[3]) {
                return Err(invalid(
                    spec,
                    "need 0 < R_nose < R_outer and 0 < L_body < L_outer",
                ));
            }
            (
                GridFamily::SphereCylinder {
                    r_nose: s[0],
                    r_outer: s[1],
                    l_body: s[2],
                    l_outer: s[3],
                },
                8,
            )
        }
        (_, d) => return Err(invalid(spec, format!("unsupported dimension {}", d))),
    };
    let layout = GridLayout {
        family,
        u_breaks: uniform(1),
        v_breaks: if v_cells == 0 { Vec::new() } else { uniform(v_cells) },
        theta: 0.0,
        offset: [0.0, 0.0],
    };
    build(layout)
}

/// Builds the mesh described by a layout.
pub fn build(layout: GridLayout) -> Result<Mesh> {
    let nu = layout.u_breaks.len() - 1;
    if let GridFamily::Interval { .. } = layout.family {
        let nodes: Vec<Point> = layout
            .u_breaks
            .iter()
            .map(|&u| layout.place(layout.family.map(u, 0.0)))
            .collect();
        let cell_nodes: Vec<usize> = (0..nu).flat_map(|i| [i, i + 1]).collect();
        let boundary = vec![
            BoundaryFace {
                cell: 0,
                face: 0,
                id: 0,
            },
            BoundaryFace {
                cell: nu - 1,
                face: 1,
                id: 1,
            },
        ];
        return Mesh::from_parts(
            1,
            nodes,
            cell_nodes,
            boundary,
            vec![Manifold::Flat],
            vec![0; nu],
            Some(layout),
        );
    }

    let periodic = layout.family.periodic();
    let nv = layout.v_breaks.len() - 1;
    let nv_nodes = if periodic { nv } else { nv + 1 };
    let idx = |i: usize, j: usize| (j % nv_nodes) * (nu + 1) + i;
    let mut nodes = Vec::with_capacity((nu + 1) * nv_nodes);
    for j in 0..nv_nodes {
        for i in 0..=nu {
            let p = layout.family.map(layout.u_breaks[i], layout.v_breaks[j]);
            nodes.push(layout.place(p));
        }
    }

    let (manifolds, tag_of): (Vec<Manifold>, Box<dyn Fn(f64) -> u32>) = match layout.family {
        GridFamily::Rectangle { .. } | GridFamily::Interval { .. } => {
            (vec![Manifold::Flat], Box::new(|_| 0))
        }
        GridFamily::Shell { .. } => (
            vec![layout.place_manifold(Manifold::Circle { center: [0.0, 0.0] })],
            Box::new(|_| 0),
        ),
        GridFamily::SphereCylinder { .. } => (
            vec![
                layout.place_manifold(Manifold::Circle { center: [0.0, 0.0] }),
                layout.place_manifold(Manifold::Cylinder {
                    axis_point: [0.0, 0.0],
                    direction: [0.0, 1.0],
                }),
            ],
            Box::new(|tau| if !(2.0..6.0).contains(&tau) { 0 } else { 1 }),
        ),
    };

    let mut cell_nodes = Vec::with_capacity(4 * nu * nv);
    let mut cell_manifold = Vec::with_capacity(nu * nv);
    let mut boundary = Vec::new();
    for j in 0..nv {
        let tau = 4.0 * (layout.v_breaks[j] + layout.v_breaks[j + 1]);
        for i in 0..nu {
            let c = j * nu + i;
            cell_nodes.extend_from_slice(&[idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            cell_manifold.push(tag_of(tau));
            let mut tag = |face: usize, id: u32| boundary.push(BoundaryFace { cell: c, face, id });
            match layout.family {
                GridFamily::Rectangle { .. } => {
                    if i == 0 {
                        tag(3, 0);
                    }
                    if i == nu - 1 {
                        tag(1, 1);
                    }
                    if j == 0 {
                        tag(0, 2);
                    }
                    if j == nv - 1 {
                        tag(2, 3);
                    }
                }
                GridFamily::Shell { .. } => {
                    if i == 0 {
                        tag(3, 0);
                    }
                    if i == nu - 1 {
                        tag(1, 1);
                    }
                }
                GridFamily::SphereCylinder { .. } => {
                    if i == 0 {
                        tag(3, sphere_cylinder_segment(tau));
                    }
                    if i == nu - 1 {
                        tag(1, 5);
                    }
                }
                GridFamily::Interval { .. } => unreachable!(),
            }
        }
    }
    Mesh::from_parts(
        2,
        nodes,
        cell_nodes,
        boundary,
        manifolds,
        cell_manifold,
        Some(layout),
    )
}

fn bisect_all(breaks: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * breaks.len());
    for w in breaks.windows(2) {
        out.push(w[0]);
        out.push(0.5 * (w[0] + w[1]));
    }
    if let Some(&last) = breaks.last() {
        out.push(last);
    }
    out
}

/// Bisects every cell in every direction `cycles` times.
pub fn refine_global(m: &Mesh, cycles: usize) -> Result<Mesh> {
    if cycles == 0 {
        return Ok(m.clone());
    }
    let mut layout = m.layout.clone().ok_or(MeshError::NoLayout)?;
    for _ in 0..cycles {
        layout.u_breaks = bisect_all(&layout.u_breaks);
        if !layout.v_breaks.is_empty() {
            layout.v_breaks = bisect_all(&layout.v_breaks);
        }
    }
    build(layout)
}

#[derive(Clone, Copy)]
enum Side {
    UFirst,
    ULast,
    VFirst,
    VLast,
}

fn refinable_side(layout: &GridLayout, id: u32) -> Result<Side> {
    let not = |reason: &str| MeshError::NotRefinable {
        id,
        reason: reason.to_string(),
    };
    Ok(match (layout.family, id) {
        (GridFamily::Interval { .. }, 0) => Side::UFirst,
        (GridFamily::Interval { .. }, 1) => Side::ULast,
        (GridFamily::Rectangle { .. }, 0) => Side::UFirst,
        (GridFamily::Rectangle { .. }, 1) => Side::ULast,
        (GridFamily::Rectangle { .. }, 2) => Side::VFirst,
        (GridFamily::Rectangle { .. }, 3) => Side::VLast,
        (GridFamily::Shell { .. }, 0) => Side::UFirst,
        (GridFamily::Shell { .. }, 1) => Side::ULast,
        (GridFamily::SphereCylinder { .. }, 0..=4) => Side::UFirst,
        (GridFamily::SphereCylinder { .. }, 5) => Side::ULast,
        _ => return Err(not("no such boundary on this grid family")),
    })
}

/// Bisects, in the boundary-normal direction only, the cell layer touching
/// boundary `id`, `cycles` times.
pub fn refine_boundary(m: &Mesh, id: u32, cycles: usize) -> Result<Mesh> {
    let mut layout = m.layout.clone().ok_or(MeshError::NoLayout)?;
    let side = refinable_side(&layout, id)?;
    if cycles == 0 {
        return Ok(m.clone());
    }
    for _ in 0..cycles {
        let breaks = match side {
            Side::UFirst | Side::ULast => &mut layout.u_breaks,
            Side::VFirst | Side::VLast => &mut layout.v_breaks,
        };
        match side {
            Side::UFirst | Side::VFirst => {
                let mid = 0.5 * (breaks[0] + breaks[1]);
                breaks.insert(1, mid);
            }
            Side::ULast | Side::VLast => {
                let n = breaks.len();
                let mid = 0.5 * (breaks[n - 2] + breaks[n - 1]);
                breaks.insert(n - 1, mid);
            }
        }
    }
    build(layout)
}

fn rotate(p: Point, s: f64, c: f64) -> Point {
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

/// Maps every node `x ↦ R(dtheta)(x − pivot) + pivot + dr`.
pub fn transform_rigid(m: &Mesh, dtheta: f64, dr: Point, pivot: Point) -> Result<Mesh> {
    if m.dim == 1 && dtheta != 0.0 {
        return Err(MeshError::Rotation1d);
    }
    if dtheta == 0.0 && dr == [0.0, 0.0] {
        return Ok(m.clone());
    }
    let (s, c) = dtheta.sin_cos();
    let map = |p: Point| {
        let q = rotate([p[0] - pivot[0], p[1] - pivot[1]], s, c);
        [q[0] + pivot[0] + dr[0], q[1] + pivot[1] + dr[1]]
    };
    let mut out = m.clone();
    for p in &mut out.nodes {
        *p = map(*p);
    }
    for man in &mut out.manifolds {
        *man = match *man {
            Manifold::Flat => Manifold::Flat,
            Manifold::Circle { center } => Manifold::Circle { center: map(center) },
            Manifold::Cylinder {
                axis_point,
                direction,
            } => Manifold::Cylinder {
                axis_point: map(axis_point),
                direction: rotate(direction, s, c),
            },
        };
    }
    if let Some(layout) = &mut out.layout {
        layout.theta += dtheta;
        layout.offset = map(layout.offset);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn thicknesses(m: &Mesh) -> Vec<f64> {
        m.layout().unwrap().u_breaks.windows(2).map(|w| w[1] - w[0]).collect()
    }

    #[test]
    fn interval() {
        let m = generate(&GridSpec::interval(0.0, 1.0)).unwrap();
        assert_eq!(m.n_cells(), 1);
        assert_eq!(m.nodes(), &[[0.0, 0.0], [1.0, 0.0]]);
        assert_eq!(m.boundary_nodes(0), vec![0]);
        assert_eq!(m.boundary_nodes(1), vec![1]);
        let f = m.boundary_faces(0).unwrap();
        assert_eq!(f[0].normal, [-1.0, 0.0]);
        let r = refine_global(&m, 3).unwrap();
        assert_eq!(r.n_cells(), 8);
        assert_abs_diff_eq!(r.max_cell_diameter(), 0.125);
    }

    #[test]
    fn interval_boundary_grading() {
        let m = refine_global(&generate(&GridSpec::interval(0.0, 1.0)).unwrap(), 3).unwrap();
        let r = refine_boundary(&m, 0, 3).unwrap();
        let t = thicknesses(&r);
        assert_eq!(&t[..4], &[1.0 / 64.0, 1.0 / 64.0, 1.0 / 32.0, 1.0 / 16.0]);
        assert!(t[4..].iter().all(|&h| h == 0.125));
        assert_eq!(refine_boundary(&m, 1, 0).unwrap(), m);
    }

    #[test]
    fn shell() {
        let m = generate(&GridSpec::shell(1.0, 2.0)).unwrap();
        assert_eq!(m.n_cells(), 8);
        for n in m.boundary_nodes(0) {
            let p = m.node(n);
            assert_abs_diff_eq!(p[0].hypot(p[1]), 1.0, epsilon = 1e-14);
        }
        let r = refine_global(&m, 1).unwrap();
        assert_eq!(r.n_cells(), 32);
        for n in r.boundary_nodes(0) {
            let p = r.node(n);
            assert_abs_diff_eq!(p[0].hypot(p[1]), 1.0, epsilon = 1e-14);
        }
        for f in r.boundary_faces(0).unwrap() {
            let a = r.node(f.nodes[0]);
            let b = r.node(f.nodes[1]);
            let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
            assert!(f.normal[0] * mid[0] + f.normal[1] * mid[1] < 0.0);
        }
        let b = refine_boundary(&m, 0, 2).unwrap();
        assert_eq!(thicknesses(&b), vec![0.25, 0.25, 0.5]);
    }

    #[test]
    fn rectangle() {
        let m = generate(&GridSpec::rectangle(0.0, 0.0, 1.0, 1.0)).unwrap();
        assert_eq!(m.n_cells(), 1);
        assert_eq!(m.measure(), 1.0);
        let f = m.boundary_faces(1).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].normal, [1.0, 0.0]);
        assert_eq!(m.boundary_ids(), vec![0, 1, 2, 3]);
        assert!(m.boundary_faces(4).is_err());
        let r = refine_boundary(&refine_global(&m, 2).unwrap(), 3, 2).unwrap();
        let v = &r.layout().unwrap().v_breaks;
        assert_eq!(v[v.len() - 4..], [0.75, 0.875, 0.9375, 1.0]);
        r.validate().unwrap();
    }

    #[test]
    fn sphere_cylinder() {
        let m = generate(&GridSpec::sphere_cylinder(1.0, 2.0, 2.0, 4.0)).unwrap();
        assert_eq!(m.boundary_ids(), vec![0, 1, 2, 3, 4, 5]);
        let r = refine_global(&m, 2).unwrap();
        r.validate().unwrap();
        for id in [0, 4] {
            for n in r.boundary_nodes(id) {
                let p = r.node(n);
                assert_abs_diff_eq!(p[0].hypot(p[1]), 1.0, epsilon = 1e-14);
            }
        }
        assert!(refine_boundary(&r, 2, 1).is_ok());
        assert!(generate(&GridSpec::sphere_cylinder(2.0, 1.0, 2.0, 4.0)).is_err());
    }

    #[test]
    fn rigid_transforms() {
        let m = refine_global(&generate(&GridSpec::shell(1.0, 2.0)).unwrap(), 1).unwrap();
        let id = transform_rigid(&m, 0.0, [0.0, 0.0], [0.3, 0.1]).unwrap();
        assert_eq!(id.nodes(), m.nodes());
        let r = transform_rigid(&m, FRAC_PI_2, [0.0, 0.0], [0.0, 0.0]).unwrap();
        let k = m.nodes().iter().position(|p| *p == [1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(r.node(k)[0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r.node(k)[1], 1.0, epsilon = 1e-14);
        assert!(transform_rigid(&generate(&GridSpec::interval(0.0, 1.0)).unwrap(), 0.1, [0.0; 2], [0.0; 2]).is_err());
    }

    #[test]
    fn refinement_after_transform_keeps_placement() {
        let m = generate(&GridSpec::shell(1.0, 2.0)).unwrap();
        let t = transform_rigid(&m, 0.4, [1.0, -2.0], [0.5, 0.5]).unwrap();
        let rt = refine_global(&t, 1).unwrap();
        let tr = transform_rigid(&refine_global(&m, 1).unwrap(), 0.4, [1.0, -2.0], [0.5, 0.5]).unwrap();
        for (a, b) in rt.nodes().iter().zip(tr.nodes()) {
            assert_abs_diff_eq!(a[0], b[0], epsilon = 1e-12);
            assert_abs_diff_eq!(a[1], b[1], epsilon = 1e-12);
        }
        assert_eq!(rt.manifolds().len(), tr.manifolds().len());
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&GridSpec::shell(2.0, 1.0)).is_err());
        assert!(generate(&GridSpec::interval(1.0, 0.0)).is_err());
        assert!(generate(&GridSpec::new(GridName::HyperRectangle, &[0.0, 0.0, 1.0], 2)).is_err());
        assert!(generate(&GridSpec::new(GridName::HyperShell, &[1.0, 2.0], 1)).is_err());
    }
}
