//! Split-operator trajectory driver: `n` ambient θ-steps per rigid-body step.

use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use thiserror::Error;

use crate::field::{
    self, extract_isoline, init_from_field, isolines_csv, Checkpoint, FeField, FieldError,
};
use crate::functions::{Point, SpaceTimeFn, VelocityFn};
use crate::mesh::{transform_rigid, MeshError};
use crate::pde::{run_unsteady, AmbientProblem, BoundaryCondition, InitialValues, PdeError};
use crate::rbd::{self, minimize_state, MinimizeOutcome, MinimizeStatus, RbdProblem, RigidState};

#[derive(Debug, Error)]
pub enum CouplingError {
    #[error("invalid coupling setup: {0}")]
    Invalid(String),
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CouplingError>;

/// `v(x) = −(ṙ + θ̇·perp(x − c))` with `perp(a, b) = (−b, a)`.
pub fn convection_from_rate(rate: RigidState, center: Point) -> VelocityFn {
    if rate == RigidState::default() {
        return VelocityFn::zero();
    }
    if rate.theta == 0.0 {
        return VelocityFn::Constant([-rate.r0, -rate.r1]);
    }
    VelocityFn::native(move |x| {
        let d = [x[0] - center[0], x[1] - center[1]];
        [-(rate.r0 - rate.theta * d[1]), -(rate.r1 + rate.theta * d[0])]
    })
}

fn add_velocity(a: &VelocityFn, b: VelocityFn) -> VelocityFn {
    if a.is_zero() {
        return b;
    }
    if b.is_zero() {
        return a.clone();
    }
    let a = a.clone();
    VelocityFn::native(move |x| {
        let (p, q) = (a.value(x), b.value(x));
        [p[0] + q[0], p[1] + q[1]]
    })
}

/// Piecewise-constant Neumann flux on one boundary, switched between outer
/// steps.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxSchedule {
    pub boundary: u32,
    /// `(first outer step, flux)` pairs sorted by step; outer steps count from 1.
    pub levels: Vec<(usize, f64)>,
}

impl FluxSchedule {
    pub fn constant(boundary: u32, flux: f64) -> Self {
        FluxSchedule {
            boundary,
            levels: vec![(1, flux)],
        }
    }

    /// Flux in effect during outer step `step`.
    pub fn flux_at(&self, step: usize) -> f64 {
        self.levels
            .iter()
            .take_while(|(s, _)| *s <= step.max(1))
            .last()
            .or(self.levels.first())
            .map_or(0.0, |l| l.1)
    }
}

#[derive(Debug, Clone)]
pub struct CouplingConfig {
    /// Template for every interval; its mesh, times and initial values are
    /// replaced by the trajectory state, its velocity is a background flow.
    pub ambient: AmbientProblem,
    /// Sampler is replaced by the current field each step.
    pub rbd: RbdProblem,
    pub interval: f64,
    pub inner_steps: usize,
    pub outer_steps: usize,
    pub flux: Option<FluxSchedule>,
}

impl CouplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.inner_steps == 0 || self.outer_steps == 0 {
            return Err(CouplingError::Invalid("step counts must be positive".into()));
        }
        if !(self.interval > 0.0 && self.interval.is_finite()) {
            return Err(CouplingError::Invalid(format!("interval {} must be positive", self.interval)));
        }
        if self.ambient.mesh.dim() != 2 {
            return Err(CouplingError::Invalid("trajectories need a 2D mesh".into()));
        }
        if let Some(f) = &self.flux {
            match self.ambient.boundary_conditions.get(f.boundary as usize) {
                Some(BoundaryCondition::Natural(_)) => {}
                _ => {
                    return Err(CouplingError::Invalid(format!(
                        "flux boundary {} is not a natural boundary",
                        f.boundary
                    )))
                }
            }
            if f.levels.is_empty() || f.levels.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(CouplingError::Invalid("flux levels must be sorted by step".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryState {
    pub step: usize,
    pub time: f64,
    pub state: RigidState,
    pub rate: RigidState,
    pub aux: RigidState,
    pub field: FeField,
}

impl TrajectoryState {
    /// Starts from the template's initial values at rest.
    pub fn initial(cfg: &CouplingConfig, state: RigidState) -> Result<Self> {
        cfg.validate()?;
        let mut p = cfg.ambient.clone();
        p.boundary_conditions = boundary_conditions(cfg, 1);
        let u = p.initial_vector()?;
        Ok(TrajectoryState {
            step: 0,
            time: p.start_time,
            state,
            rate: RigidState::default(),
            aux: state,
            field: FeField::new(p.mesh.clone(), u)?,
        })
    }

    pub fn from_checkpoint(c: Checkpoint) -> Self {
        TrajectoryState {
            step: c.step,
            time: c.time,
            state: c.state,
            rate: c.rate,
            aux: c.aux,
            field: c.field,
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            field: self.field.clone(),
            state: self.state,
            rate: self.rate,
            aux: self.aux,
            time: self.time,
            step: self.step,
        }
    }
}

fn boundary_conditions(cfg: &CouplingConfig, step: usize) -> Vec<BoundaryCondition> {
    let mut bcs = cfg.ambient.boundary_conditions.clone();
    if let Some(f) = &cfg.flux {
        bcs[f.boundary as usize] = BoundaryCondition::Natural(SpaceTimeFn::Constant(f.flux_at(step)));
    }
    bcs
}

fn field_sampler(f: &FeField) -> rbd::Sampler {
    let f = f.clone();
    Arc::new(move |x| f.eval_extrapolated(x))
}

/// Rigid-body problem constrained by the melt in `f`.
pub fn rbd_for_field(cfg: &CouplingConfig, f: &FeField) -> RbdProblem {
    RbdProblem {
        sampler: field_sampler(f),
        ..cfg.rbd.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub step: usize,
    pub time: f64,
    pub state: RigidState,
    pub rate: RigidState,
    pub aux: RigidState,
    pub flux: f64,
    pub status: Option<MinimizeStatus>,
}

impl TrajectoryRecord {
    fn of(ts: &TrajectoryState, flux: f64, status: Option<MinimizeStatus>) -> Self {
        TrajectoryRecord {
            step: ts.step,
            time: ts.time,
            state: ts.state,
            rate: ts.rate,
            aux: ts.aux,
            flux,
            status,
        }
    }
}

/// One outer step: ambient solve, minimization, rate and pose updates, mesh
/// transform and field transfer.
pub fn trajectory_step(ts: &TrajectoryState, cfg: &CouplingConfig) -> Result<(TrajectoryState, MinimizeOutcome)> {
    let step = ts.step + 1;
    let dt = cfg.interval;
    let mesh = ts.field.mesh().clone();
    let p = AmbientProblem {
        mesh: mesh.clone(),
        velocity: add_velocity(&cfg.ambient.velocity, convection_from_rate(ts.rate, ts.state.translation())),
        boundary_conditions: boundary_conditions(cfg, step),
        initial: InitialValues::Nodal(ts.field.values().to_vec()),
        step_size: dt / cfg.inner_steps as f64,
        start_time: ts.time,
        end_time: ts.time + dt,
        ..cfg.ambient.clone()
    };
    let field = run_unsteady(&p, &mut |_| Ok(()))?.field;

    let outcome = minimize_state(&rbd_for_field(cfg, &field), ts.state);
    let s_star = outcome.state;
    let delta = s_star - ts.state;
    let rate = ts.rate + delta * (1.0 / dt);
    let aux = ts.aux + delta + ts.rate * dt;

    let moved = Arc::new(transform_rigid(&mesh, delta.theta, delta.translation(), ts.state.translation())?);
    let field = if Arc::ptr_eq(&moved, &mesh) || delta == RigidState::default() {
        field
    } else {
        init_from_field(moved, &field)
    };
    Ok((
        TrajectoryState {
            step,
            time: cfg.ambient.start_time + step as f64 * dt,
            state: s_star,
            rate,
            aux,
            field,
        },
        outcome,
    ))
}

/// Per-step files: `trajectory.csv`, `step_%04d.vtk`, `step_%04d_pci.csv`.
#[derive(Debug, Clone)]
pub struct TrajectoryOutput {
    pub dir: PathBuf,
    pub deterministic: bool,
}

impl TrajectoryOutput {
    fn write_step(&self, ts: &TrajectoryState, level: f64) -> Result<()> {
        let comment = if self.deterministic {
            None
        } else {
            Some(timestamp())
        };
        field::export_vtk(
            &ts.field,
            &self.dir.join(format!("step_{:04}.vtk", ts.step)),
            ts.time,
            comment.as_deref(),
        )?;
        fs::write(
            self.dir.join(format!("step_{:04}_pci.csv", ts.step)),
            isolines_csv(&extract_isoline(&ts.field, level)),
        )?;
        Ok(())
    }
}

pub(crate) fn timestamp() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    format!("written at unix time {}", secs)
}

pub const TRAJECTORY_HEADER: &str =
    "step,time,theta,r0,r1,theta_dot,r0_dot,r1_dot,theta_V,r0_V,r1_V,flux";

pub fn trajectory_csv(records: &[TrajectoryRecord]) -> String {
    let mut s = String::from(TRAJECTORY_HEADER);
    s.push('\n');
    for r in records {
        let v = [
            r.time,
            r.state.theta,
            r.state.r0,
            r.state.r1,
            r.rate.theta,
            r.rate.r0,
            r.rate.r1,
            r.aux.theta,
            r.aux.r0,
            r.aux.r1,
            r.flux,
        ];
        s.push_str(&r.step.to_string());
        for x in v {
            s.push_str(&format!(",{:e}", x));
        }
        s.push('\n');
    }
    s
}

pub struct TrajectoryRun {
    pub records: Vec<TrajectoryRecord>,
    pub last: TrajectoryState,
}

/// Runs outer steps until `cfg.outer_steps` is reached, starting from `ts`
/// (which may come from a checkpoint).
pub fn run_trajectory(
    cfg: &CouplingConfig,
    ts: TrajectoryState,
    output: Option<&TrajectoryOutput>,
) -> Result<TrajectoryRun> {
    cfg.validate()?;
    let flux = |k: usize| cfg.flux.as_ref().map_or(0.0, |f| f.flux_at(k));
    let level = cfg.rbd.melting_temperature;
    if let Some(out) = output {
        fs::create_dir_all(&out.dir)?;
    }
    let mut records = vec![TrajectoryRecord::of(&ts, flux(ts.step), None)];
    if let Some(out) = output {
        out.write_step(&ts, level)?;
    }
    let mut ts = ts;
    while ts.step < cfg.outer_steps {
        let (next, outcome) = trajectory_step(&ts, cfg)?;
        ts = next;
        records.push(TrajectoryRecord::of(&ts, flux(ts.step), Some(outcome.status)));
        if let Some(out) = output {
            out.write_step(&ts, level)?;
        }
    }
    if let Some(out) = output {
        fs::write(out.dir.join("trajectory.csv"), trajectory_csv(&records))?;
        field::write_checkpoint(&ts.checkpoint(), &out.dir.join("checkpoint.txt"))?;
    }
    Ok(TrajectoryRun { records, last: ts })
}

/// Mean of the last three values of `v`, if they agree within `rel`.
pub fn plateau(v: &[f64], rel: f64) -> Option<f64> {
    if v.len() < 4 {
        return None;
    }
    let k = v.len() - 1;
    let vk = v[k];
    if vk != 0.0 && (vk - v[k - 3]).abs() < rel * vk.abs() {
        Some(vk)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsolve::SolverOptions;
    use crate::mesh::{generate, refine_global, GridSpec};
    use crate::rbd::{BodyGeometry, RbdTolerances};
    use approx::assert_abs_diff_eq;

    #[test]
    fn convection_examples() {
        let v = convection_from_rate(RigidState::new(0.0, 0.0, 0.5), [3.0, 4.0]);
        assert_eq!(v.value([7.0, -2.0]), [0.0, -0.5]);
        let v = convection_from_rate(RigidState::new(1.0, 0.0, 0.0), [0.0, 0.0]);
        assert_eq!(v.value([0.0, 1.0]), [1.0, 0.0]);
        assert_eq!(v.value([1.0, 0.0]), [0.0, -1.0]);
        assert_eq!(v.value([2.0, 3.0]), [3.0, -2.0]);
        assert!(convection_from_rate(RigidState::default(), [1.0, 1.0]).is_zero());
    }

    #[test]
    fn schedule_lookup() {
        let s = FluxSchedule {
            boundary: 0,
            levels: vec![(1, 2.0), (11, 2.4)],
        };
        assert_eq!(s.flux_at(0), 2.0);
        assert_eq!(s.flux_at(10), 2.0);
        assert_eq!(s.flux_at(11), 2.4);
        assert_eq!(s.flux_at(50), 2.4);
    }

    fn frozen_config() -> CouplingConfig {
        let mesh = Arc::new(refine_global(&generate(&GridSpec::shell(1.0, 2.0)).unwrap(), 1).unwrap());
        let ambient = AmbientProblem {
            mesh,
            velocity: VelocityFn::zero(),
            diffusivity: 1.0.into(),
            source: 0.0.into(),
            boundary_conditions: vec![
                BoundaryCondition::Natural(0.0.into()),
                BoundaryCondition::Strong((-1.0).into()),
            ],
            initial: InitialValues::Function((-1.0).into()),
            theta: 1.0,
            step_size: 0.2,
            start_time: 0.0,
            end_time: 1.0,
            solver: SolverOptions::default(),
        };
        let rbd = RbdProblem {
            body: BodyGeometry::circle(1.0, 16).unwrap(),
            gravity: [0.0, -1.0],
            melting_temperature: 0.0,
            max_change: RigidState::new(0.0, 0.0, 0.5),
            tolerances: RbdTolerances::default(),
            sampler: Arc::new(|_| 0.0),
        };
        CouplingConfig {
            ambient,
            rbd,
            interval: 1.0,
            inner_steps: 5,
            outer_steps: 3,
            flux: None,
        }
    }

    #[test]
    fn frozen_ambient_keeps_body_still() {
        let cfg = frozen_config();
        let ts = TrajectoryState::initial(&cfg, RigidState::default()).unwrap();
        let run = run_trajectory(&cfg, ts, None).unwrap();
        assert_eq!(run.records.len(), 4);
        for (i, r) in run.records.iter().enumerate() {
            assert_eq!(r.state, RigidState::default());
            assert_eq!(r.rate, RigidState::default());
            assert_abs_diff_eq!(r.time, i as f64, epsilon = 1e-12);
        }
        assert!(run.records[1..]
            .iter()
            .all(|r| r.status == Some(MinimizeStatus::InfeasibleStart)));
    }

    #[test]
    fn rate_and_aux_updates() {
        let cfg = CouplingConfig {
            interval: 0.2,
            ..frozen_config()
        };
        let ts = TrajectoryState {
            rate: RigidState::new(0.0, 0.0, 0.5),
            aux: RigidState::default(),
            ..TrajectoryState::initial(&cfg, RigidState::default()).unwrap()
        };
        let (next, _) = trajectory_step(&ts, &cfg).unwrap();
        assert_eq!(next.rate, ts.rate);
        assert_abs_diff_eq!(next.aux.r1, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn csv_layout() {
        let r = TrajectoryRecord {
            step: 3,
            time: 0.6,
            state: RigidState::new(0.0, 1.0, -0.5),
            rate: RigidState::default(),
            aux: RigidState::default(),
            flux: 2.0,
            status: None,
        };
        let csv = trajectory_csv(&[r]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), TRAJECTORY_HEADER);
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 12);
        assert_eq!(row[0], "3");
        assert_eq!(row[4].parse::<f64>().unwrap(), -0.5);
    }

    #[test]
    fn plateau_detection() {
        assert_eq!(plateau(&[0.1, 0.5, 1.0, 1.01, 1.015, 1.02], 0.05), Some(1.02));
        assert_eq!(plateau(&[0.1, 0.5, 0.9, 1.0], 0.05), None);
        assert_eq!(plateau(&[1.0, 1.0], 0.05), None);
    }
}
