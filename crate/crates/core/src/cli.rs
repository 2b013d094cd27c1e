//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for invalid input, 2 when a numerical step
//! (linear solve, field evaluation) fails.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{load_config, Config, ConfigError};
use crate::coupling::{run_trajectory, timestamp, CouplingError, TrajectoryOutput, TrajectoryState};
use crate::field::{self, read_checkpoint, Checkpoint, FeField, FieldError};
use crate::pde::{run_unsteady, step_count, InitialValues, PdeError, StepView};
use crate::rbd::{energy_landscape, RbdProblem, RigidState};
use crate::verify::{
    convergence_table, l2_error, mms1d, mms2d, run_convergence_study, table_1d_rows, table_2d_rows, table_csv,
    MmsParams, StudyMode, StudyPlan, TableRow, VerifyError,
};

#[derive(Debug, Parser)]
#[command(name = "meltsim", version, about = "Melting heat-source trajectories and solver verification")]
pub struct Cli {
    /// Directory for generated files.
    #[arg(long, short, global = true, default_value = "output")]
    pub output: PathBuf,
    /// Omit timestamps from VTK headers.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the convection-diffusion problem of a config file.
    Solve { config: PathBuf },
    /// Run convergence studies and write a table of observed orders.
    Verify {
        case: VerifyCase,
        /// 1D advection speed.
        #[arg(long, allow_hyphen_values = true)]
        v: Option<f64>,
        /// 2D peak speed.
        #[arg(long, allow_hyphen_values = true)]
        vmax: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        g: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        beta: Option<f64>,
        /// Number of refinement levels per study.
        #[arg(long)]
        levels: Option<usize>,
    },
    /// Run a coupled melting trajectory.
    Simulate { config: PathBuf },
    /// Continue a run from a checkpoint file.
    Resume { checkpoint: PathBuf, config: PathBuf },
    /// Write slices of the body's potential energy through its start pose.
    Landscape {
        config: PathBuf,
        #[arg(long, default_value_t = 101)]
        samples: usize,
        #[arg(long, default_value_t = 0.5)]
        half_width: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VerifyCase {
    Mms1d,
    Mms2d,
    Table1d,
    Table2d,
}

#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Invalid(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Invalid(format!("i/o error: {}", e))
    }
}

impl From<FieldError> for CliError {
    fn from(e: FieldError) -> Self {
        match e {
            FieldError::Io(_) | FieldError::Version(_) | FieldError::Malformed { .. } | FieldError::Vtk(_) => CliError::Invalid(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<PdeError> for CliError {
    fn from(e: PdeError) -> Self {
        match e {
            PdeError::Solve { .. } | PdeError::Field(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<CouplingError> for CliError {
    fn from(e: CouplingError) -> Self {
        match e {
            CouplingError::Pde(p) => p.into(),
            CouplingError::Field(f) => f.into(),
            CouplingError::Mesh(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::Pde(p) => p.into(),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name) and runs the command.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    limit_threads();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn limit_threads() {
    if let Some(n) = std::env::var("MELTSIM_THREADS").ok().and_then(|s| s.trim().parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let out = &cli.output;
    match &cli.command {
        Command::Solve { config } => {
            let cfg = load_config(config)?;
            fs::create_dir_all(out)?;
            solve(&cfg, None, out, cli.deterministic)
        }
        Command::Verify {
            case,
            v,
            vmax,
            alpha,
            g,
            beta,
            levels,
        } => {
            let csv = verify(*case, [*v, *vmax, *alpha, *g, *beta], *levels)?;
            fs::create_dir_all(out)?;
            fs::write(out.join("convergence.csv"), &csv)?;
            print!("{}", csv);
            Ok(())
        }
        Command::Simulate { config } => {
            let cfg = load_config(config)?;
            let (coupling, start) = cfg.coupling_config()?;
            let ts = TrajectoryState::initial(&coupling, start)?;
            trajectory(&coupling, ts, out, cli.deterministic)
        }
        Command::Resume { checkpoint, config } => {
            let cfg = load_config(config)?;
            let ck = read_checkpoint(checkpoint)?;
            if cfg.coupling.is_some() {
                let (coupling, _) = cfg.coupling_config()?;
                trajectory(&coupling, TrajectoryState::from_checkpoint(ck), out, cli.deterministic)
            } else {
                fs::create_dir_all(out)?;
                solve(&cfg, Some(ck), out, cli.deterministic)
            }
        }
        Command::Landscape {
            config,
            samples,
            half_width,
        } => {
            let cfg = load_config(config)?;
            let (problem, start) = landscape_problem(&cfg)?;
            let csv = energy_landscape(&problem, start, *samples, *half_width).to_csv();
            fs::create_dir_all(out)?;
            fs::write(out.join("landscape.csv"), csv)?;
            Ok(())
        }
    }
}

fn trajectory(cfg: &crate::coupling::CouplingConfig, ts: TrajectoryState, out: &Path, deterministic: bool) -> CliResult<()> {
    let output = TrajectoryOutput {
        dir: out.to_path_buf(),
        deterministic,
    };
    let run = run_trajectory(cfg, ts, Some(&output))?;
    let last = run.last;
    println!(
        "step {} t = {} state ({}, {}, {}) rate ({}, {}, {})",
        last.step, last.time, last.state.theta, last.state.r0, last.state.r1, last.rate.theta, last.rate.r0, last.rate.r1
    );
    Ok(())
}

/// Runs the ambient problem, from `restart` if given, writing
/// `solution_%04d.vtk`, `checkpoint.txt` and, with an exact solution,
/// `errors.csv`.
pub fn solve(cfg: &Config, restart: Option<Checkpoint>, out: &Path, deterministic: bool) -> CliResult<()> {
    let mut p = cfg.ambient_problem()?;
    let (offset, state) = match restart {
        Some(ck) => {
            p.mesh = ck.field.mesh().clone();
            p.start_time = ck.time;
            p.initial = InitialValues::Nodal(ck.field.into_values());
            (ck.step, ck.state)
        }
        None => (0, RigidState::default()),
    };
    if p.start_time >= p.end_time {
        return Err(CliError::Invalid(format!(
            "start time {} is not before end_time {}",
            p.start_time, p.end_time
        )));
    }
    let exact = cfg.exact()?;
    let n = step_count(p.start_time, p.end_time, p.step_size);
    let every = cfg.output.every;
    let write_vtk = cfg.output.write_vtk;
    let comment = (!deterministic).then(timestamp);
    let mut errors = String::from("step,time,l2_error\n");
    let mut observer = |s: &StepView| -> Result<(), String> {
        let f = FeField::new(s.mesh.clone(), s.values.to_vec()).map_err(|e| e.to_string())?;
        let step = offset + s.step;
        if write_vtk && (s.step % every == 0 || s.step == n) {
            field::export_vtk(&f, &out.join(format!("solution_{:04}.vtk", step)), s.time, comment.as_deref())
                .map_err(|e| e.to_string())?;
        }
        if let Some(e) = &exact {
            writeln!(errors, "{},{:e},{:e}", step, s.time, l2_error(&f, e, s.time)).unwrap();
        }
        Ok(())
    };
    let outcome = run_unsteady(&p, &mut observer)?;
    if exact.is_some() {
        fs::write(out.join("errors.csv"), &errors)?;
    }
    let ck = Checkpoint {
        field: outcome.field,
        state,
        rate: RigidState::default(),
        aux: state,
        time: p.end_time,
        step: offset + n,
    };
    field::write_checkpoint(&ck, &out.join("checkpoint.txt"))?;
    println!(
        "{} steps to t = {}: min {:e}, max {:e}",
        n,
        p.end_time,
        ck.field.min(),
        ck.field.max()
    );
    Ok(())
}

fn verify(case: VerifyCase, overrides: [Option<f64>; 5], levels: Option<usize>) -> CliResult<String> {
    let [v, vmax, alpha, g, beta] = overrides;
    let dim = match case {
        VerifyCase::Mms1d | VerifyCase::Table1d => 1,
        VerifyCase::Mms2d | VerifyCase::Table2d => 2,
    };
    let mut plan = StudyPlan::for_dim(dim);
    if let Some(l) = levels {
        if l < 3 {
            return Err(CliError::Invalid("--levels must be at least 3".into()));
        }
        plan.levels = l;
    }
    let rows = match case {
        VerifyCase::Table1d => table_1d_rows(),
        VerifyCase::Table2d => table_2d_rows(),
        VerifyCase::Mms1d | VerifyCase::Mms2d => {
            let speed = if dim == 1 { v.or(vmax) } else { vmax.or(v) };
            let mut p = MmsParams::new(speed.unwrap_or(-5.0), alpha.unwrap_or(2.0), g.unwrap_or(-2.0));
            if let Some(b) = beta {
                p.beta = b;
            }
            let case = if dim == 1 { mms1d(p)? } else { mms2d(p)? };
            let spatial = run_convergence_study(&case, StudyMode::Spatial, &plan)?;
            let temporal = run_convergence_study(&case, StudyMode::Temporal, &plan)?;
            eprint!("{}{}", spatial.to_csv(), temporal.to_csv());
            return Ok(table_csv(
                dim,
                &[TableRow {
                    params: p,
                    p: spatial.order,
                    q: temporal.order,
                }],
            ));
        }
    };
    Ok(table_csv(dim, &convergence_table(dim, &rows, &plan)?))
}

/// Rigid-body problem sampling the config's initial temperature field.
pub fn landscape_problem(cfg: &Config) -> CliResult<(RbdProblem, RigidState)> {
    let (mut problem, start) = cfg.rbd_problem()?;
    let p = cfg.ambient_problem()?;
    let f = FeField::new(p.mesh.clone(), p.initial_vector()?)?;
    problem.sampler = Arc::new(move |x| f.eval_extrapolated(x));
    Ok((problem, start))
}
