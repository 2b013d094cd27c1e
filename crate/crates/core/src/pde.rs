//! θ-scheme time stepping of the convection-diffusion problem
//!
//! ```text
//! u_t + v·∇u − ∇·(α∇u) = s   in Ω
//! u = g on Γ_D,   α ∂u/∂n = h on Γ_N,   u(·,0) = u0
//! ```
//!
//! plus melt-film flux helpers and Peclet numbers.

use std::sync::Arc;

use thiserror::Error;

use crate::assembly::{
    self, build_convection_diffusion, build_mass, build_rhs, eliminate, lift_rhs, AssemblyError,
    DirichletValues, FeSpace,
};
use crate::field::{FeField, FieldError};
use crate::functions::{Point, SpaceTimeFn, VelocityFn};
use crate::linsolve::{
    bicgstab_solve, cg_solve, BandedLu, CsrMatrix, SolveError, SolveStats, SolverOptions,
};
use crate::mesh::Mesh;

#[derive(Debug, Error)]
pub enum PdeError {
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error("linear solve failed at t = {time}: {source}")]
    Solve { time: f64, source: SolveError },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("observer failed: {0}")]
    Observer(String),
}

pub type Result<T> = std::result::Result<T, PdeError>;

#[derive(Debug, Clone)]
pub enum BoundaryCondition {
    /// Dirichlet `u = g`.
    Strong(SpaceTimeFn),
    /// Neumann `α ∂u/∂n = h` with outward normal.
    Natural(SpaceTimeFn),
}

#[derive(Debug, Clone)]
pub enum InitialValues {
    Function(SpaceTimeFn),
    Nodal(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct AmbientProblem {
    pub mesh: Arc<Mesh>,
    pub velocity: VelocityFn,
    pub diffusivity: SpaceTimeFn,
    pub source: SpaceTimeFn,
    /// Indexed by boundary id.
    pub boundary_conditions: Vec<BoundaryCondition>,
    pub initial: InitialValues,
    pub theta: f64,
    pub step_size: f64,
    pub start_time: f64,
    pub end_time: f64,
    pub solver: SolverOptions,
}

impl AmbientProblem {
    pub fn validate(&self) -> Result<()> {
        let ids = self.mesh.boundary_ids();
        if ids.len() != self.boundary_conditions.len() {
            return Err(PdeError::Invalid(format!(
                "mesh has {} boundaries but {} boundary conditions were given",
                ids.len(),
                self.boundary_conditions.len()
            )));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(PdeError::Invalid(format!("theta {} outside [0, 1]", self.theta)));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(PdeError::Invalid(format!("step size {} must be positive", self.step_size)));
        }
        if !(self.end_time > self.start_time) {
            return Err(PdeError::Invalid(format!(
                "end time {} must exceed start time {}",
                self.end_time, self.start_time
            )));
        }
        if let InitialValues::Nodal(v) = &self.initial {
            if v.len() != self.mesh.n_nodes() {
                return Err(PdeError::Invalid("initial nodal values do not match mesh".into()));
            }
        }
        Ok(())
    }

    fn split_bcs(&self) -> (Vec<(u32, SpaceTimeFn)>, Vec<(u32, SpaceTimeFn)>) {
        let mut strong = Vec::new();
        let mut natural = Vec::new();
        for (id, bc) in self.boundary_conditions.iter().enumerate() {
            match bc {
                BoundaryCondition::Strong(g) => strong.push((id as u32, g.clone())),
                BoundaryCondition::Natural(h) => natural.push((id as u32, h.clone())),
            }
        }
        (strong, natural)
    }

    /// Initial nodal vector with strong values imposed at the start time.
    pub fn initial_vector(&self) -> Result<Vec<f64>> {
        let mut u = match &self.initial {
            InitialValues::Function(f) => self
                .mesh
                .nodes()
                .iter()
                .map(|&p| {
                    f.try_value(p, self.start_time)
                        .map_err(|e| PdeError::Invalid(format!("initial values: {}", e)))
                })
                .collect::<Result<Vec<_>>>()?,
            InitialValues::Nodal(v) => v.clone(),
        };
        let (strong, _) = self.split_bcs();
        DirichletValues::sample(&self.mesh, &strong, self.start_time)?.impose(&mut u);
        Ok(u)
    }
}

/// Number of steps from `t0` to `tf`: exact when `(tf − t0)/dt` is an
/// integer to 1e-9, otherwise one extra shortened step.
pub fn step_count(t0: f64, tf: f64, dt: f64) -> usize {
    let r = (tf - t0) / dt;
    if (r - r.round()).abs() < 1e-9 {
        r.round().max(1.0) as usize
    } else {
        r.ceil() as usize
    }
}

/// Band storage limit, in entries, for the optional direct solver.
const BANDED_LIMIT: usize = 40_000_000;

struct System {
    dt: f64,
    full: CsrMatrix,
    reduced: CsrMatrix,
    lu: Option<BandedLu>,
}

/// Reusable state for repeated θ-steps on one problem.
pub struct ThetaStepper {
    mesh: Arc<Mesh>,
    space: FeSpace,
    mass: CsrMatrix,
    ck: CsrMatrix,
    source: SpaceTimeFn,
    strong: Vec<(u32, SpaceTimeFn)>,
    natural: Vec<(u32, SpaceTimeFn)>,
    theta: f64,
    solver: SolverOptions,
    symmetric: bool,
    mask: Vec<bool>,
    system: Option<System>,
    load: Option<(f64, Vec<f64>)>,
}

impl ThetaStepper {
    pub fn new(p: &AmbientProblem) -> Result<Self> {
        p.validate()?;
        let space = FeSpace::new(p.mesh.clone());
        let mass = build_mass(&space);
        let ck = build_convection_diffusion(&space, &p.velocity, &p.diffusivity)?;
        let (strong, natural) = p.split_bcs();
        let mask = DirichletValues::sample(&p.mesh, &strong, p.start_time)?.mask(p.mesh.n_nodes());
        Ok(ThetaStepper {
            mesh: p.mesh.clone(),
            space,
            mass,
            ck,
            source: p.source.clone(),
            strong,
            natural,
            theta: p.theta,
            solver: p.solver,
            symmetric: p.velocity.is_zero(),
            mask,
            system: None,
            load: None,
        })
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn convection_diffusion(&self) -> &CsrMatrix {
        &self.ck
    }

    /// Replaces a Neumann function, e.g. for a flux schedule.
    pub fn set_natural(&mut self, id: u32, h: SpaceTimeFn) -> Result<()> {
        let slot = self
            .natural
            .iter_mut()
            .find(|(i, _)| *i == id)
            .ok_or_else(|| PdeError::Invalid(format!("boundary {} is not natural", id)))?;
        slot.1 = h;
        self.load = None;
        Ok(())
    }

    fn load(&mut self, t: f64) -> Result<Vec<f64>> {
        if let Some((tc, f)) = &self.load {
            if *tc == t {
                return Ok(f.clone());
            }
        }
        Ok(build_rhs(&self.space, &self.source, &self.natural, t)?)
    }

    /// Advances `u` (at time `t`) by `dt`.
    pub fn step(&mut self, u: &[f64], t: f64, dt: f64) -> Result<(Vec<f64>, SolveStats)> {
        let th = self.theta;
        if self.system.as_ref().map(|s| s.dt) != Some(dt) {
            let full = self.mass.linear_combination(1.0, &self.ck, dt * th);
            let reduced = eliminate(&full, &self.mask);
            let lu = if self.solver.banded && BandedLu::storage(&reduced) <= BANDED_LIMIT {
                Some(BandedLu::factor(&reduced).map_err(|source| PdeError::Solve { time: t + dt, source })?)
            } else {
                None
            };
            self.system = Some(System {
                dt,
                full,
                reduced,
                lu,
            });
        }
        let t1 = t + dt;
        let f0 = if th < 1.0 { Some(self.load(t)?) } else { None };
        let f1 = if th > 0.0 { Some(self.load(t1)?) } else { None };

        let mu = self.mass.matvec(u);
        let mut rhs = mu;
        if th < 1.0 {
            let cku = self.ck.matvec(u);
            for (r, v) in rhs.iter_mut().zip(&cku) {
                *r -= dt * (1.0 - th) * v;
            }
        }
        if let Some(f) = &f0 {
            for (r, v) in rhs.iter_mut().zip(f) {
                *r += dt * (1.0 - th) * v;
            }
        }
        if let Some(f) = &f1 {
            for (r, v) in rhs.iter_mut().zip(f) {
                *r += dt * th * v;
            }
        }
        let d = DirichletValues::sample(&self.mesh, &self.strong, t1)?;
        let sys = self.system.as_ref().unwrap();
        lift_rhs(&sys.full, &mut rhs, &d);
        let mut x = u.to_vec();
        d.impose(&mut x);
        let stats = match &sys.lu {
            Some(lu) => lu.solve(&rhs).map(|v| {
                x = v;
                SolveStats {
                    iterations: 0,
                    residual: 0.0,
                }
            }),
            None if self.symmetric => cg_solve(&sys.reduced, &rhs, &mut x, &self.solver),
            None => bicgstab_solve(&sys.reduced, &rhs, &mut x, &self.solver),
        }
        .map_err(|source| PdeError::Solve { time: t1, source })?;
        d.impose(&mut x);
        if let Some(f) = f1 {
            self.load = Some((t1, f));
        }
        Ok((x, stats))
    }
}

/// One θ-step of `p` from `u_j` at `t_j`.
pub fn step_theta(p: &AmbientProblem, u_j: &[f64], t_j: f64, dt: f64) -> Result<Vec<f64>> {
    Ok(ThetaStepper::new(p)?.step(u_j, t_j, dt)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Passed to observers after every step, and once for the initial state.
pub struct StepView<'a> {
    pub step: usize,
    pub time: f64,
    pub mesh: &'a Arc<Mesh>,
    pub values: &'a [f64],
}

pub type Observer<'a> = dyn FnMut(&StepView) -> std::result::Result<(), String> + 'a;

pub struct RunOutcome {
    pub field: FeField,
    pub history: Vec<StepRecord>,
}

/// Steps from `start_time` to `end_time`, shortening the last step so it
/// lands on `end_time`.
pub fn run_unsteady(p: &AmbientProblem, observer: &mut Observer) -> Result<RunOutcome> {
    let mut stepper = ThetaStepper::new(p)?;
    let mut u = p.initial_vector()?;
    let n = step_count(p.start_time, p.end_time, p.step_size);
    let mut t = p.start_time;
    observer(&StepView {
        step: 0,
        time: t,
        mesh: &p.mesh,
        values: &u,
    })
    .map_err(PdeError::Observer)?;
    let mut history = Vec::with_capacity(n);
    for k in 1..=n {
        let t_next = if k == n {
            p.end_time
        } else {
            p.start_time + k as f64 * p.step_size
        };
        let dt = if k == n { t_next - t } else { p.step_size };
        let (un, stats) = stepper.step(&u, t, dt)?;
        u = un;
        t = t_next;
        history.push(StepRecord {
            step: k,
            time: t,
            iterations: stats.iterations,
            residual: stats.residual,
        });
        observer(&StepView {
            step: k,
            time: t,
            mesh: &p.mesh,
            values: &u,
        })
        .map_err(PdeError::Observer)?;
    }
    Ok(RunOutcome {
        field: FeField::new(p.mesh.clone(), u)?,
        history,
    })
}

/// `Pe_h = v h / (2α)`.
pub fn local_peclet(v_mag: f64, h_cell: f64, alpha: f64) -> f64 {
    v_mag * h_cell / (2.0 * alpha)
}

/// `Pe = v L / α`.
pub fn global_peclet(v_mag: f64, length: f64, alpha: f64) -> f64 {
    v_mag * length / alpha
}

/// Largest local Peclet number over the cells of `mesh`.
pub fn max_local_peclet(mesh: &Mesh, v: &VelocityFn, alpha: &SpaceTimeFn) -> f64 {
    (0..mesh.n_cells())
        .map(|c| {
            let x = mesh.cell_center(c);
            let vel = v.value(x);
            local_peclet(vel[0].hypot(vel[1]), mesh.cell_diameter(c), alpha.value(x, 0.0))
        })
        .fold(0.0, f64::max)
}

/// Material data of a melt film between a heated wall and solid material.
#[derive(Debug, Clone)]
pub struct StefanFilmParams {
    /// Liquid conductivity, W/(m·K).
    pub k_l: f64,
    /// Solid conductivity, W/(m·K).
    pub k_s: f64,
    /// Solid density, kg/m³.
    pub rho_s: f64,
    /// Solid heat capacity, J/(kg·K).
    pub cp_s: f64,
    /// Latent heat, J/kg.
    pub h_m: f64,
    /// Melting temperature, °C.
    pub t_m: f64,
    pub wall_temperature: SpaceTimeFn,
    /// Film thickness, m.
    pub film_thickness: SpaceTimeFn,
}

impl StefanFilmParams {
    /// Ice near 0 °C with the given wall temperature and film thickness.
    pub fn ice(wall_temperature: f64, film_thickness: f64) -> Self {
        StefanFilmParams {
            k_l: 0.5611,
            k_s: 2.14,
            rho_s: 917.0,
            cp_s: 2110.0,
            h_m: 3.34e6,
            t_m: 0.0,
            wall_temperature: wall_temperature.into(),
            film_thickness: film_thickness.into(),
        }
    }

    pub fn solid_diffusivity(&self) -> f64 {
        self.k_s / (self.rho_s * self.cp_s)
    }

    /// Heat flux into the solid, W/m².
    pub fn heat_flux(&self, v: f64, x: Point) -> f64 {
        let tw = self.wall_temperature.value(x, 0.0);
        let delta = self.film_thickness.value(x, 0.0);
        -self.k_l * (self.t_m - tw) / delta - self.rho_s * self.h_m * v
    }

    /// Interface speed at which the film conducts exactly the latent heat.
    pub fn equilibrium_velocity(&self, x: Point) -> f64 {
        let tw = self.wall_temperature.value(x, 0.0);
        let delta = self.film_thickness.value(x, 0.0);
        -self.k_l * (self.t_m - tw) / (delta * self.rho_s * self.h_m)
    }

    /// Interface speed at which the film flux also heats solid arriving at
    /// `t_far` up to `t_m`, i.e. `stefan_flux(v) = v (t_m − t_far)`.
    pub fn steady_velocity(&self, x: Point, t_far: f64) -> f64 {
        let tw = self.wall_temperature.value(x, 0.0);
        let delta = self.film_thickness.value(x, 0.0);
        -self.k_l * (self.t_m - tw) / (delta * self.rho_s * (self.h_m + self.cp_s * (self.t_m - t_far)))
    }
}

/// Neumann value `h = q⁺ / (ρ c_p)` for interface speed `v`.
pub fn stefan_flux(p: &StefanFilmParams, v: f64, x: Point) -> f64 {
    p.heat_flux(v, x) / (p.rho_s * p.cp_s)
}

/// [`stefan_flux`] as a boundary function.
pub fn stefan_flux_fn(p: &StefanFilmParams, v: f64) -> SpaceTimeFn {
    let p = p.clone();
    SpaceTimeFn::native(move |x, _| stefan_flux(&p, v, x))
}

/// `Ste = c_p (T_h − T_m) / h_m`.
pub fn stefan_number(cp_s: f64, t_h: f64, t_m: f64, h_m: f64) -> f64 {
    cp_s * (t_h - t_m) / h_m
}

pub use assembly::SparseSystem;
