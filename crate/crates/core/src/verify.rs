//! Exact and manufactured solutions, L2 errors and observed orders.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::assembly::FeSpace;
use crate::exprfn::{Bindings, ExprError};
use crate::field::FeField;
use crate::functions::{SpaceTimeFn, VelocityFn};
use crate::linsolve::SolverOptions;
use crate::mesh::{generate, refine_global, GridSpec, Mesh, MeshError};
use crate::pde::{run_unsteady, AmbientProblem, BoundaryCondition, InitialValues, PdeError};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("invalid parameters: {0}")]
    Invalid(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Pde(#[from] PdeError),
}

pub type Result<T> = std::result::Result<T, VerifyError>;

fn no_drift(v: f64, alpha: f64) -> bool {
    (v / alpha).abs() < 1e-12
}

/// Steady solution on `[0, 1]` with `u(0) = 0`, `u(1) = g`.
pub fn exact_steady_1d(v: f64, alpha: f64, g: f64, x: f64) -> f64 {
    if no_drift(v, alpha) {
        g * x
    } else {
        g * (v * x / alpha).exp_m1() / (v / alpha).exp_m1()
    }
}

/// Neumann value at `x = 0` that keeps [`exact_steady_1d`] steady.
pub fn neumann_steady(v: f64, alpha: f64, g: f64) -> f64 {
    if no_drift(v, alpha) {
        -g * alpha
    } else {
        -v * g / (v / alpha).exp_m1()
    }
}

/// Manufactured-solution parameters. `v` is the 1D speed or the 2D `v_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmsParams {
    pub v: f64,
    pub alpha: f64,
    pub g: f64,
    pub beta: f64,
}

impl MmsParams {
    pub fn new(v: f64, alpha: f64, g: f64) -> Self {
        MmsParams {
            v,
            alpha,
            g,
            beta: 10.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(VerifyError::Invalid(format!("alpha {} must be positive", self.alpha)));
        }
        if !(self.beta > 0.0) {
            return Err(VerifyError::Invalid(format!("beta {} must be positive", self.beta)));
        }
        if ![self.v, self.g].iter().all(|x| x.is_finite()) {
            return Err(VerifyError::Invalid("non-finite parameter".into()));
        }
        Ok(())
    }
}

/// Expression sources of a manufactured solution.
#[derive(Debug, Clone, PartialEq)]
pub struct MmsExpressions {
    pub constants: String,
    pub exact: String,
    pub velocity: String,
    pub source: String,
    /// Shared by every natural boundary.
    pub flux: String,
}

#[derive(Debug, Clone)]
pub struct MmsCase {
    pub dim: usize,
    pub params: MmsParams,
    pub expressions: MmsExpressions,
    pub exact: SpaceTimeFn,
    pub velocity: VelocityFn,
    pub source: SpaceTimeFn,
    pub boundary_conditions: Vec<BoundaryCondition>,
}

impl MmsCase {
    fn build(dim: usize, params: MmsParams, e: MmsExpressions, strong: usize, n_bc: usize) -> Result<Self> {
        let b = Bindings::parse_list(&e.constants)?;
        let flux = SpaceTimeFn::parsed(&e.flux, &b)?;
        let g = SpaceTimeFn::Constant(params.g);
        let boundary_conditions = (0..n_bc)
            .map(|id| {
                if id == strong {
                    BoundaryCondition::Strong(g.clone())
                } else {
                    BoundaryCondition::Natural(flux.clone())
                }
            })
            .collect();
        Ok(MmsCase {
            dim,
            params,
            exact: SpaceTimeFn::parsed(&e.exact, &b)?,
            velocity: VelocityFn::parsed(&e.velocity, &b)?,
            source: SpaceTimeFn::parsed(&e.source, &b)?,
            expressions: e,
            boundary_conditions,
        })
    }

    pub fn base_mesh(&self) -> Result<Mesh> {
        Ok(generate(&if self.dim == 1 {
            GridSpec::interval(0.0, 1.0)
        } else {
            GridSpec::rectangle(0.0, 0.0, 1.0, 1.0)
        })?)
    }

    /// Problem on the base mesh refined `cycles` times, run to `end_time`.
    pub fn problem(&self, cycles: usize, theta: f64, step_size: f64, end_time: f64) -> Result<AmbientProblem> {
        let mesh = Arc::new(refine_global(&self.base_mesh()?, cycles)?);
        Ok(AmbientProblem {
            mesh,
            velocity: self.velocity.clone(),
            diffusivity: self.params.alpha.into(),
            source: self.source.clone(),
            boundary_conditions: self.boundary_conditions.clone(),
            initial: InitialValues::Function(self.exact.clone()),
            theta,
            step_size,
            start_time: 0.0,
            end_time,
            solver: SolverOptions {
                tol: 1e-12,
                max_iter: 20000,
                jacobi: true,
                banded: true,
            },
        })
    }
}

fn constants(p: &MmsParams, name: &str) -> String {
    format!(
        "epsilon=1.e-14, alpha={:?}, {}={:?}, g={:?}, beta={:?}",
        p.alpha, name, p.v, p.g, p.beta
    )
}

/// `u = g(1 + (w − 1)(1 − exp(−βt²)))` on `[0, 1]`, natural at `x = 0`
/// (id 0), strong `u = g` at `x = 1` (id 1).
pub fn mms1d(p: MmsParams) -> Result<MmsCase> {
    p.validate()?;
    let e = "exp(-beta*t^2)";
    let (w, flux) = if no_drift(p.v, p.alpha) {
        ("x".to_string(), format!("g*alpha*({} - 1)", e))
    } else {
        (
            "(exp(v*x/alpha) - 1)/(exp(v/alpha) - 1)".to_string(),
            format!("g*v*({} - 1)/(exp(v/alpha) - 1)", e),
        )
    };
    let ex = MmsExpressions {
        constants: constants(&p, "v"),
        exact: format!("g*(1 + ({w} - 1)*(1 - {e}))"),
        velocity: "v".into(),
        source: format!("2*beta*g*t*{e}*({w} - 1)"),
        flux,
    };
    MmsCase::build(1, p, ex, 1, 2)
}

/// `u = g(1 + (1 − w)(exp(−βt²) − 1))`, `w = (e^{a x y} − 1)/(e^{a y} − 1)`,
/// `a = v_max/α`, with `v = (v_max y, 0)` on the unit square. Strong at
/// `x = 1` (id 1), natural on ids 0, 2, 3.
pub fn mms2d(p: MmsParams) -> Result<MmsCase> {
    p.validate()?;
    if no_drift(p.v, p.alpha) {
        return Err(VerifyError::Invalid("vmax must be non-zero".into()));
    }
    let e = "exp(-beta*t^2)";
    let ey = "exp(vmax*y/alpha)";
    let exy = "exp(vmax*x*y/alpha)";
    let w = format!("({exy} - 1)/({ey} - 1)");
    let wyy = format!(
        "vmax^2*(x^2*({ey} - 1)^2*{exy} - 2*x*({ey} - 1)*exp(vmax*y*(x + 1)/alpha) \
         + ({ey} + 1)*({exy} - 1)*{ey})/(alpha^2*({ey} - 1)^3)"
    );
    let exact = format!(
        "if(y < epsilon, g + (g - g*x)*({e} - 1), g + (g - g*{w})*({e} - 1))"
    );
    let source = format!(
        "if(y < epsilon, g*(2*beta*t*(x - 1)*{e} + vmax^2*x*(2*x^2 - 3*x + 1)*({e} - 1)/(6*alpha)), \
         -2*beta*t*{e}*g*(1 - {w}) + alpha*g*({e} - 1)*{wyy})"
    );
    let flux = format!(
        "if(x < epsilon, if(y < epsilon, g*alpha*({e} - 1), g*vmax*y*({e} - 1)/({ey} - 1)), \
         if(y < epsilon, g*vmax*x*(x - 1)*({e} - 1)/2, \
         g*vmax*({e} - 1)*((exp(vmax*x/alpha) - 1)*exp(vmax/alpha) \
         - x*(exp(vmax/alpha) - 1)*exp(vmax*x/alpha))/(exp(vmax/alpha) - 1)^2))"
    );
    let ex = MmsExpressions {
        constants: constants(&p, "vmax"),
        exact,
        velocity: "vmax*y; 0".into(),
        source,
        flux,
    };
    MmsCase::build(2, p, ex, 1, 4)
}

/// `‖u_h − u‖_{L2}` at time `t` with 3-point Gauss rules.
pub fn l2_error(f: &FeField, exact: &SpaceTimeFn, t: f64) -> f64 {
    let space = FeSpace::new(f.mesh().clone());
    let mesh = f.mesh();
    let u = f.values();
    let sum: f64 = (0..mesh.n_cells())
        .into_par_iter()
        .map_init(Vec::new, |qp, c| {
            space.quadrature(c, 3, qp);
            let cell = mesh.cell(c);
            qp.iter()
                .map(|q| {
                    let uh: f64 = cell.iter().zip(&q.phi).map(|(&n, &p)| u[n] * p).sum();
                    let d = uh - exact.value(q.x, t);
                    d * d * q.jxw
                })
                .sum::<f64>()
        })
        .sum();
    sum.sqrt()
}

/// Least-squares slope of `log(error)` against `log(scale)`.
pub fn observed_order(levels: &[(f64, f64)]) -> Result<f64> {
    if levels.len() < 2 {
        return Err(VerifyError::Invalid("need at least two levels".into()));
    }
    if levels.iter().any(|&(h, e)| !(h > 0.0) || !(e > 0.0)) {
        return Err(VerifyError::Invalid("scales and errors must be positive".into()));
    }
    let pts: Vec<(f64, f64)> = levels.iter().map(|&(h, e)| (h.ln(), e.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyMode {
    Spatial,
    Temporal,
}

impl StudyMode {
    pub fn as_str(self) -> &'static str {
        match self {
            StudyMode::Spatial => "spatial",
            StudyMode::Temporal => "temporal",
        }
    }
}

/// Refinement schedule of a convergence study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyPlan {
    /// Global cycles of the coarsest spatial level.
    pub spatial_cycles: usize,
    pub levels: usize,
    /// `Δt = courant · h` in spatial mode.
    pub courant: f64,
    /// Global cycles of the fixed mesh in temporal mode.
    pub temporal_cycles: usize,
    /// Coarsest step in temporal mode.
    pub coarse_step: f64,
    pub end_time: f64,
    pub temporal_error: TemporalError,
}

/// What temporal-mode errors are measured against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TemporalError {
    Exact,
    /// Same mesh, step `finest / factor`: removes the spatial error floor.
    SemiDiscrete { factor: usize },
}

impl StudyPlan {
    pub fn for_dim(dim: usize) -> Self {
        if dim == 1 {
            StudyPlan {
                spatial_cycles: 3,
                levels: 5,
                courant: 0.25,
                temporal_cycles: 14,
                coarse_step: 1.0 / 16.0,
                end_time: 1.0,
                temporal_error: TemporalError::Exact,
            }
        } else {
            StudyPlan {
                spatial_cycles: 2,
                levels: 5,
                courant: 0.25,
                temporal_cycles: 6,
                coarse_step: 1.0 / 8.0,
                end_time: 1.0,
                temporal_error: TemporalError::SemiDiscrete { factor: 8 },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub mode: StudyMode,
    pub params: MmsParams,
    /// `(scale, error)` per level, coarse first.
    pub levels: Vec<(f64, f64)>,
    pub order: f64,
}

impl ConvergenceReport {
    /// CSV with columns `level,scale,error,local_order`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,scale,error,local_order\n");
        for (i, &(h, e)) in self.levels.iter().enumerate() {
            let local = if i == 0 {
                String::new()
            } else {
                let (h0, e0) = self.levels[i - 1];
                format!("{:.4}", (e0 / e).ln() / (h0 / h).ln())
            };
            writeln!(s, "{},{:e},{:e},{}", i, h, e, local).unwrap();
        }
        s
    }
}

fn solve_at(case: &MmsCase, cycles: usize, dt: f64, tf: f64) -> Result<FeField> {
    let p = case.problem(cycles, 0.5, dt, tf)?;
    Ok(run_unsteady(&p, &mut |_| Ok(()))?.field)
}

/// Spatial mode: Crank-Nicolson with `Δt = C·h` over successive global
/// refinements. Temporal mode: fixed mesh, halving `Δt`.
pub fn run_convergence_study(case: &MmsCase, mode: StudyMode, plan: &StudyPlan) -> Result<ConvergenceReport> {
    if plan.levels < 3 {
        return Err(VerifyError::Invalid("need at least three levels".into()));
    }
    let tf = plan.end_time;
    let step = |k: usize| plan.coarse_step * 0.5f64.powi(k as i32);
    let reference = match (mode, plan.temporal_error) {
        (StudyMode::Temporal, TemporalError::SemiDiscrete { factor }) => Some(solve_at(
            case,
            plan.temporal_cycles,
            step(plan.levels - 1) / factor.max(2) as f64,
            tf,
        )?),
        _ => None,
    };
    let levels = (0..plan.levels)
        .into_par_iter()
        .map(|k| match mode {
            StudyMode::Spatial => {
                let cycles = plan.spatial_cycles + k;
                let h = 0.5f64.powi(cycles as i32);
                let f = solve_at(case, cycles, plan.courant * h, tf)?;
                Ok((h, l2_error(&f, &case.exact, tf)))
            }
            StudyMode::Temporal => {
                let dt = step(k);
                let f = solve_at(case, plan.temporal_cycles, dt, tf)?;
                let e = match &reference {
                    Some(r) => l2_distance(&f, r),
                    None => l2_error(&f, &case.exact, tf),
                };
                Ok((dt, e))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceReport {
        mode,
        params: case.params,
        order: observed_order(&levels)?,
        levels,
    })
}

/// `‖a − b‖_{L2}` for two fields on the same mesh.
pub fn l2_distance(a: &FeField, b: &FeField) -> f64 {
    let d: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
    let diff = FeField::new(a.mesh().clone(), d).expect("finite difference field");
    l2_error(&diff, &SpaceTimeFn::Constant(0.0), 0.0)
}

/// Parameter rows of the 1D table: `v ∈ {−5, −1, 0}`, `α ∈ {2, 1}`, `g ∈ {−2, −1}`.
pub fn table_1d_rows() -> Vec<MmsParams> {
    let mut rows = Vec::new();
    for v in [-5.0, -1.0, 0.0] {
        for alpha in [2.0, 1.0] {
            for g in [-2.0, -1.0] {
                rows.push(MmsParams::new(v, alpha, g));
            }
        }
    }
    rows
}

/// Parameter rows of the 2D table: `α ∈ {2, 1}`, `v_max ∈ {−5, −1}`, `g ∈ {−2, −1}`.
pub fn table_2d_rows() -> Vec<MmsParams> {
    let mut rows = Vec::new();
    for alpha in [2.0, 1.0] {
        for v in [-5.0, -1.0] {
            for g in [-2.0, -1.0] {
                rows.push(MmsParams::new(v, alpha, g));
            }
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub params: MmsParams,
    pub p: f64,
    pub q: f64,
}

/// Runs both studies for every row.
pub fn convergence_table(dim: usize, rows: &[MmsParams], plan: &StudyPlan) -> Result<Vec<TableRow>> {
    rows.par_iter()
        .map(|&params| {
            let case = if dim == 1 { mms1d(params)? } else { mms2d(params)? };
            let (p, q) = rayon::join(
                || run_convergence_study(&case, StudyMode::Spatial, plan),
                || run_convergence_study(&case, StudyMode::Temporal, plan),
            );
            Ok(TableRow {
                params,
                p: p?.order,
                q: q?.order,
            })
        })
        .collect()
}

/// CSV with columns `v,alpha,g,p,q` (`vmax` in 2D).
pub fn table_csv(dim: usize, rows: &[TableRow]) -> String {
    let mut s = String::from(if dim == 1 { "v,alpha,g,p,q\n" } else { "vmax,alpha,g,p,q\n" });
    for r in rows {
        writeln!(
            s,
            "{},{},{},{:.3},{:.3}",
            r.params.v, r.params.alpha, r.params.g, r.p, r.q
        )
        .unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn steady_values() {
        assert_abs_diff_eq!(exact_steady_1d(1.0, 1.0, 1.0, 0.5), 0.377541, epsilon = 1e-6);
        assert_eq!(exact_steady_1d(0.0, 1.0, -2.0, 0.25), -0.5);
        assert_abs_diff_eq!(exact_steady_1d(-3.0, 0.5, 2.0, 1.0), 2.0, epsilon = 1e-14);
        assert_eq!(exact_steady_1d(-3.0, 0.5, 2.0, 0.0), 0.0);
        assert_abs_diff_eq!(neumann_steady(1.0, 1.0, 1.0), -0.581977, epsilon = 1e-6);
        assert_eq!(neumann_steady(0.0, 2.0, -1.0), 2.0);
        assert_abs_diff_eq!(neumann_steady(1e-9, 1.0, 1.0), -1.0, epsilon = 1e-8);
    }

    #[test]
    fn orders() {
        assert_abs_diff_eq!(observed_order(&[(1.0, 0.04), (0.5, 0.01)]).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(observed_order(&[(1.0, 0.3), (0.5, 0.3)]).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            observed_order(&[(0.4, 0.08), (0.2, 0.02), (0.1, 0.005)]).unwrap(),
            2.0,
            epsilon = 1e-12
        );
        assert!(observed_order(&[(1.0, 0.0), (0.5, 0.1)]).is_err());
    }

    #[test]
    fn mms1d_initial_and_steady_limits() {
        for p in table_1d_rows() {
            let c = mms1d(p).unwrap();
            for x in [0.0, 0.3, 1.0] {
                assert_abs_diff_eq!(c.exact.value([x, 0.0], 0.0), p.g, epsilon = 1e-14);
                assert_eq!(c.source.value([x, 0.0], 0.0), 0.0);
            }
            assert_eq!(c.exact.value([1.0, 0.0], 0.7), p.g);
            let h = match &c.boundary_conditions[0] {
                BoundaryCondition::Natural(h) => h.clone(),
                _ => unreachable!(),
            };
            assert_eq!(h.value([0.0, 0.0], 0.0), 0.0);
            assert_abs_diff_eq!(h.value([0.0, 0.0], 50.0), neumann_steady(p.v, p.alpha, p.g), epsilon = 1e-12);
            for x in [0.1, 0.5, 0.9] {
                assert!(c.source.value([x, 0.0], 1.0).abs() < 1e-3 * p.g.abs());
            }
        }
    }

    #[test]
    fn mms2d_bottom_edge_is_continuous() {
        let c = mms2d(MmsParams::new(-5.0, 2.0, -2.0)).unwrap();
        for x in [0.2, 0.6] {
            for t in [0.1, 0.4] {
                let a = c.exact.value([x, 0.0], t);
                let b = c.exact.value([x, 1e-6], t);
                assert_abs_diff_eq!(a, b, epsilon = 1e-5);
                let a = c.source.value([x, 0.0], t);
                let b = c.source.value([x, 1e-3], t);
                assert_abs_diff_eq!(a, b, epsilon = 1e-2);
            }
        }
        assert!(mms2d(MmsParams::new(0.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn l2_examples() {
        let m = Arc::new(refine_global(&generate(&GridSpec::interval(0.0, 1.0)).unwrap(), 3).unwrap());
        let f = FeField::interpolate(m.clone(), |p| p[0]).unwrap();
        assert!(l2_error(&f, &SpaceTimeFn::native(|p, _| p[0]), 0.0) < 1e-14);
        let g = FeField::interpolate(m.clone(), |p| p[0] + 0.25).unwrap();
        assert_abs_diff_eq!(l2_error(&g, &SpaceTimeFn::native(|p, _| p[0]), 0.0), 0.25, epsilon = 1e-14);
        let one = Arc::new(generate(&GridSpec::interval(0.0, 1.0)).unwrap());
        let f = FeField::interpolate(one, |p| p[0]).unwrap();
        assert_abs_diff_eq!(
            l2_error(&f, &SpaceTimeFn::native(|p, _| p[0] * p[0]), 0.0),
            1.0 / 30f64.sqrt(),
            epsilon = 1e-14
        );
    }
}
