//! Element-wise assembly of the mass matrix, the fused convection-diffusion
//! matrix and the load vector on P1 lines / Q1 quadrilaterals, plus
//! Dirichlet lifting by symmetric elimination.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::functions::{Point, SpaceTimeFn, VelocityFn};
use crate::linsolve::CsrMatrix;
use crate::mesh::{Mesh, MeshError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssemblyError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("non-finite {what} at ({}, {})", point[0], point[1])]
    NonFinite { what: &'static str, point: Point },
    #[error("diffusivity must be positive, got {value} at ({}, {})", point[0], point[1])]
    NonPositiveDiffusivity { value: f64, point: Point },
    #[error("boundary {0} is both Dirichlet and Neumann")]
    ConflictingBoundary(u32),
}

pub type Result<T> = std::result::Result<T, AssemblyError>;

const SQRT_THIRD: f64 = 0.577_350_269_189_625_8;

/// Two-point Gauss-Legendre abscissae on `[-1, 1]` (unit weights).
pub const GAUSS2: [f64; 2] = [-SQRT_THIRD, SQRT_THIRD];

/// Three-point Gauss-Legendre rule on `[-1, 1]`.
pub const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

const Q1_NODES: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

/// Bilinear shape values and reference gradients at `(xi, eta)`.
#[inline]
pub fn q1_shape(xi: f64, eta: f64) -> ([f64; 4], [[f64; 2]; 4]) {
    let mut n = [0.0; 4];
    let mut g = [[0.0; 2]; 4];
    for (a, r) in Q1_NODES.iter().enumerate() {
        n[a] = 0.25 * (1.0 + r[0] * xi) * (1.0 + r[1] * eta);
        g[a] = [
            0.25 * r[0] * (1.0 + r[1] * eta),
            0.25 * r[1] * (1.0 + r[0] * xi),
        ];
    }
    (n, g)
}

/// Jacobian `∂x/∂ξ` (row `i` = component `x_i`) and its determinant.
#[inline]
pub fn q1_jacobian(p: &[Point; 4], xi: f64, eta: f64) -> ([[f64; 2]; 2], f64) {
    let (_, g) = q1_shape(xi, eta);
    let mut j = [[0.0; 2]; 2];
    for a in 0..4 {
        for i in 0..2 {
            for k in 0..2 {
                j[i][k] += p[a][i] * g[a][k];
            }
        }
    }
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    (j, det)
}

pub fn q1_map(p: &[Point; 4], xi: f64, eta: f64) -> Point {
    let (n, _) = q1_shape(xi, eta);
    let mut x = [0.0; 2];
    for a in 0..4 {
        x[0] += n[a] * p[a][0];
        x[1] += n[a] * p[a][1];
    }
    x
}

/// Physical quantities at one quadrature point of one cell. Unused shape
/// slots (lines have two) are zero.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub x: Point,
    pub jxw: f64,
    pub phi: [f64; 4],
    pub grad: [Point; 4],
}

/// Continuous piecewise (bi)linear space with one dof per mesh node.
#[derive(Debug, Clone)]
pub struct FeSpace {
    mesh: Arc<Mesh>,
    pattern: Arc<CsrMatrix>,
}

impl FeSpace {
    pub fn new(mesh: Arc<Mesh>) -> Self {
        let n = mesh.n_nodes();
        let mut rows = vec![Vec::new(); n];
        for cell in mesh.cells() {
            for &a in cell {
                rows[a].extend_from_slice(cell);
            }
        }
        let pattern = Arc::new(CsrMatrix::from_pattern(n, rows));
        FeSpace { mesh, pattern }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn n_dofs(&self) -> usize {
        self.mesh.n_nodes()
    }

    /// All-zero matrix with the space's sparsity pattern.
    pub fn zero_matrix(&self) -> CsrMatrix {
        (*self.pattern).clone()
    }

    /// Gauss points of cell `c`: `order` points per direction (2 or 3).
    pub fn quadrature(&self, c: usize, order: usize, out: &mut Vec<QuadPoint>) {
        out.clear();
        let p = self.mesh.cell_points(c);
        let rule: &[(f64, f64)] = match order {
            3 => &GAUSS3,
            _ => &[(-SQRT_THIRD, 1.0), (SQRT_THIRD, 1.0)],
        };
        if self.mesh.dim() == 1 {
            let h = p[1][0] - p[0][0];
            for &(xi, w) in rule {
                let phi = [0.5 * (1.0 - xi), 0.5 * (1.0 + xi), 0.0, 0.0];
                out.push(QuadPoint {
                    x: [phi[0] * p[0][0] + phi[1] * p[1][0], 0.0],
                    jxw: 0.5 * h * w,
                    phi,
                    grad: [[-1.0 / h, 0.0], [1.0 / h, 0.0], [0.0; 2], [0.0; 2]],
                });
            }
            return;
        }
        for &(eta, we) in rule {
            for &(xi, wx) in rule {
                let (n, g) = q1_shape(xi, eta);
                let (j, det) = q1_jacobian(&p, xi, eta);
                let inv = [[j[1][1] / det, -j[0][1] / det], [-j[1][0] / det, j[0][0] / det]];
                let mut grad = [[0.0; 2]; 4];
                for a in 0..4 {
                    grad[a] = [
                        g[a][0] * inv[0][0] + g[a][1] * inv[1][0],
                        g[a][0] * inv[0][1] + g[a][1] * inv[1][1],
                    ];
                }
                out.push(QuadPoint {
                    x: q1_map(&p, xi, eta),
                    jxw: det * wx * we,
                    phi: n,
                    grad,
                });
            }
        }
    }

    /// Assembles per-cell dense blocks produced by `local` into the global
    /// pattern. Blocks are computed in parallel, then summed in cell order.
    fn assemble<F>(&self, local: F) -> Result<CsrMatrix>
    where
        F: Fn(&[QuadPoint], &mut [[f64; 4]; 4]) -> Result<()> + Sync,
    {
        let mesh = &self.mesh;
        let blocks: Vec<[[f64; 4]; 4]> = (0..mesh.n_cells())
            .into_par_iter()
            .map_init(Vec::new, |qp, c| {
                self.quadrature(c, 2, qp);
                let mut k = [[0.0; 4]; 4];
                local(qp, &mut k)?;
                Ok(k)
            })
            .collect::<Result<_>>()?;
        let mut a = self.zero_matrix();
        let np = mesh.nodes_per_cell();
        for (c, k) in blocks.iter().enumerate() {
            let cell = mesh.cell(c);
            for i in 0..np {
                for j in 0..np {
                    a.add(cell[i], cell[j], k[i][j]);
                }
            }
        }
        Ok(a)
    }
}

/// `M_ab = ∫ φ_a φ_b`.
pub fn build_mass(sp: &FeSpace) -> CsrMatrix {
    sp.assemble(|qps, k| {
        for q in qps {
            for a in 0..4 {
                for b in 0..4 {
                    k[a][b] += q.phi[a] * q.phi[b] * q.jxw;
                }
            }
        }
        Ok(())
    })
    .expect("mass assembly has no fallible coefficients")
}

/// Fused `C + K` with `C_ab = ∫ φ_a v·∇φ_b` and `K_ab = ∫ α ∇φ_a·∇φ_b`.
pub fn build_convection_diffusion(
    sp: &FeSpace,
    v: &VelocityFn,
    alpha: &SpaceTimeFn,
) -> Result<CsrMatrix> {
    let zero_v = v.is_zero();
    sp.assemble(|qps, k| {
        for q in qps {
            let al = alpha.value(q.x, 0.0);
            if !al.is_finite() {
                return Err(AssemblyError::NonFinite {
                    what: "diffusivity",
                    point: q.x,
                });
            }
            if al <= 0.0 {
                return Err(AssemblyError::NonPositiveDiffusivity {
                    value: al,
                    point: q.x,
                });
            }
            let vel = if zero_v { [0.0; 2] } else { v.value(q.x) };
            if !(vel[0].is_finite() && vel[1].is_finite()) {
                return Err(AssemblyError::NonFinite {
                    what: "velocity",
                    point: q.x,
                });
            }
            for a in 0..4 {
                for b in 0..4 {
                    let gg = q.grad[a][0] * q.grad[b][0] + q.grad[a][1] * q.grad[b][1];
                    let vg = vel[0] * q.grad[b][0] + vel[1] * q.grad[b][1];
                    k[a][b] += (al * gg + q.phi[a] * vg) * q.jxw;
                }
            }
        }
        Ok(())
    })
}

/// `f_a = ∫ φ_a s + Σ ∫_{Γ_N} φ_a h` at time `t`.
pub fn build_rhs(
    sp: &FeSpace,
    s: &SpaceTimeFn,
    neumann: &[(u32, SpaceTimeFn)],
    t: f64,
) -> Result<Vec<f64>> {
    let mesh = sp.mesh();
    let mut f = vec![0.0; sp.n_dofs()];
    if !s.is_zero() {
        let blocks: Vec<[f64; 4]> = (0..mesh.n_cells())
            .into_par_iter()
            .map_init(Vec::new, |qp, c| {
                sp.quadrature(c, 2, qp);
                let mut fe = [0.0; 4];
                for q in qp.iter() {
                    let sv = s.value(q.x, t);
                    if !sv.is_finite() {
                        return Err(AssemblyError::NonFinite {
                            what: "source",
                            point: q.x,
                        });
                    }
                    for a in 0..4 {
                        fe[a] += q.phi[a] * sv * q.jxw;
                    }
                }
                Ok(fe)
            })
            .collect::<Result<_>>()?;
        let np = mesh.nodes_per_cell();
        for (c, fe) in blocks.iter().enumerate() {
            for (a, &n) in mesh.cell(c).iter().enumerate().take(np) {
                f[n] += fe[a];
            }
        }
    }
    for (id, h) in neumann {
        let faces = mesh.boundary_faces(*id)?;
        if h.is_zero() {
            continue;
        }
        for face in faces {
            if mesh.dim() == 1 {
                let x = mesh.node(face.nodes[0]);
                f[face.nodes[0]] += finite(h.value(x, t), "Neumann value", x)?;
                continue;
            }
            let a = mesh.node(face.nodes[0]);
            let b = mesh.node(face.nodes[1]);
            for xi in GAUSS2 {
                let w = 0.5 * (1.0 + xi);
                let x = [a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])];
                let hv = finite(h.value(x, t), "Neumann value", x)? * 0.5 * face.length;
                f[face.nodes[0]] += (1.0 - w) * hv;
                f[face.nodes[1]] += w * hv;
            }
        }
    }
    Ok(f)
}

fn finite(v: f64, what: &'static str, point: Point) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(AssemblyError::NonFinite { what, point })
    }
}

/// Prescribed nodal values, sorted by dof.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DirichletValues {
    pub dofs: Vec<usize>,
    pub values: Vec<f64>,
}

impl DirichletValues {
    /// Samples `g` at the nodes of each listed boundary. A node shared by two
    /// strong boundaries takes the value from the later one.
    pub fn sample(mesh: &Mesh, strong: &[(u32, SpaceTimeFn)], t: f64) -> Result<Self> {
        let mut map = std::collections::BTreeMap::new();
        for (id, g) in strong {
            mesh.boundary_faces(*id)?;
            for n in mesh.boundary_nodes(*id) {
                let x = mesh.node(n);
                map.insert(n, finite(g.value(x, t), "Dirichlet value", x)?);
            }
        }
        Ok(DirichletValues {
            dofs: map.keys().copied().collect(),
            values: map.values().copied().collect(),
        })
    }

    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &d in &self.dofs {
            m[d] = true;
        }
        m
    }

    /// Overwrites the constrained entries of `u`.
    pub fn impose(&self, u: &mut [f64]) {
        for (&d, &v) in self.dofs.iter().zip(&self.values) {
            u[d] = v;
        }
    }
}

/// Zeroes constrained rows and columns, keeping the original diagonal.
pub fn eliminate(a: &CsrMatrix, mask: &[bool]) -> CsrMatrix {
    let mut out = a.clone();
    let n = a.n();
    let (ptr, cols) = (a.row_ptr().to_vec(), a.col_idx().to_vec());
    let vals = out.values_mut();
    for i in 0..n {
        for k in ptr[i]..ptr[i + 1] {
            let j = cols[k];
            if (mask[i] || mask[j]) && i != j {
                vals[k] = 0.0;
            }
        }
    }
    out
}

/// Moves the known columns to the right-hand side (`f ← f − A·G̃` on free
/// rows) and sets constrained rows to `a_dd·g_d`, so that solving with the
/// eliminated matrix returns `g_d` exactly at constrained dofs.
pub fn lift_rhs(a: &CsrMatrix, rhs: &mut [f64], d: &DirichletValues) {
    let n = a.n();
    let mut g = vec![0.0; n];
    let mask = d.mask(n);
    d.impose(&mut g);
    for i in 0..n {
        if mask[i] {
            continue;
        }
        let (cols, vals) = a.row(i);
        let mut s = 0.0;
        for (&j, &v) in cols.iter().zip(vals) {
            if mask[j] {
                s += v * g[j];
            }
        }
        rhs[i] -= s;
    }
    for (&dof, &v) in d.dofs.iter().zip(&d.values) {
        rhs[dof] = a.get(dof, dof) * v;
    }
}

/// Assembled matrix, right-hand side and the prescribed values it carries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub dirichlet: DirichletValues,
}

/// Applies strong conditions `g` on `strong` boundaries by lifting. Returns
/// an error if any of them is also listed in `natural`.
pub fn apply_dirichlet_lifting(
    sys: SparseSystem,
    mesh: &Mesh,
    strong: &[(u32, SpaceTimeFn)],
    natural: &[u32],
    t: f64,
) -> Result<SparseSystem> {
    if let Some((id, _)) = strong.iter().find(|(id, _)| natural.contains(id)) {
        return Err(AssemblyError::ConflictingBoundary(*id));
    }
    let d = DirichletValues::sample(mesh, strong, t)?;
    let mut rhs = sys.rhs;
    lift_rhs(&sys.matrix, &mut rhs, &d);
    let matrix = eliminate(&sys.matrix, &d.mask(mesh.n_nodes()));
    Ok(SparseSystem {
        matrix,
        rhs,
        dirichlet: d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsolve::direct_solve_dense;
    use crate::mesh::{generate, refine_global, GridSpec};
    use approx::assert_abs_diff_eq;

    fn space(spec: GridSpec, cycles: usize) -> FeSpace {
        let m = refine_global(&generate(&spec).unwrap(), cycles).unwrap();
        FeSpace::new(Arc::new(m))
    }

    #[test]
    fn line_mass_and_stiffness() {
        let sp = space(GridSpec::interval(0.0, 0.5), 0);
        let h = 0.5;
        let m = build_mass(&sp).to_dense();
        assert_abs_diff_eq!(m[0][0], h / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m[0][1], h / 6.0, epsilon = 1e-15);
        let (v, al) = (3.0, 0.7);
        let ck = build_convection_diffusion(&sp, &VelocityFn::Constant([v, 0.0]), &al.into())
            .unwrap()
            .to_dense();
        let expect = [
            [-v / 2.0 + al / h, v / 2.0 - al / h],
            [-v / 2.0 - al / h, v / 2.0 + al / h],
        ];
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(ck[i][j], expect[i][j], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn unit_square_mass() {
        let sp = space(GridSpec::rectangle(0.0, 0.0, 1.0, 1.0), 0);
        let m = build_mass(&sp).to_dense();
        let e = [
            [4.0, 2.0, 2.0, 1.0],
            [2.0, 4.0, 1.0, 2.0],
            [2.0, 1.0, 4.0, 2.0],
            [1.0, 2.0, 2.0, 4.0],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert_abs_diff_eq!(m[i][j], e[i][j] / 36.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn rhs_examples() {
        let sp = space(GridSpec::interval(0.0, 0.25), 0);
        let f = build_rhs(&sp, &1.0.into(), &[], 0.0).unwrap();
        assert_abs_diff_eq!(f[0], 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(f[1], 0.125, epsilon = 1e-15);
        let f = build_rhs(&sp, &0.0.into(), &[(0, 2.5.into())], 0.0).unwrap();
        assert_eq!(f, vec![2.5, 0.0]);
        assert!(build_rhs(&sp, &0.0.into(), &[(7, 1.0.into())], 0.0).is_err());
    }

    #[test]
    fn two_element_poisson() {
        let sp = space(GridSpec::interval(0.0, 1.0), 1);
        let k = build_convection_diffusion(&sp, &VelocityFn::zero(), &1.0.into()).unwrap();
        let sys = SparseSystem {
            matrix: k,
            rhs: vec![0.0; 3],
            dirichlet: DirichletValues::default(),
        };
        let sys = apply_dirichlet_lifting(
            sys,
            sp.mesh(),
            &[(0, 0.0.into()), (1, 1.0.into())],
            &[],
            0.0,
        )
        .unwrap();
        let u = direct_solve_dense(&sys.matrix.to_dense(), &sys.rhs).unwrap();
        assert_abs_diff_eq!(u[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(u[1], 0.5, epsilon = 1e-15);
        assert_eq!(u[2], 1.0);
    }

    #[test]
    fn conflicting_boundary() {
        let sp = space(GridSpec::interval(0.0, 1.0), 1);
        let sys = SparseSystem {
            matrix: build_mass(&sp),
            rhs: vec![0.0; 3],
            dirichlet: DirichletValues::default(),
        };
        assert_eq!(
            apply_dirichlet_lifting(sys, sp.mesh(), &[(0, 0.0.into())], &[0], 0.0),
            Err(AssemblyError::ConflictingBoundary(0))
        );
    }

    #[test]
    fn shell_area() {
        let sp = space(GridSpec::shell(1.0, 2.0), 3);
        let m = build_mass(&sp);
        let total: f64 = m.values().iter().sum();
        assert!((total - 3.0 * std::f64::consts::PI).abs() < 0.005 * 3.0 * std::f64::consts::PI);
    }

    #[test]
    fn nonpositive_diffusivity_rejected() {
        let sp = space(GridSpec::interval(0.0, 1.0), 1);
        assert!(matches!(
            build_convection_diffusion(&sp, &VelocityFn::zero(), &0.0.into()),
            Err(AssemblyError::NonPositiveDiffusivity { .. })
        ));
    }
}
