//! Force assembly, boundary conditions and the explicit time loop.

pub mod boundary;
pub mod forces;
pub mod initial;
pub mod integrator;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{accumulate_plastic_strains, second_order_work};
use crate::error::{KinematicsError, PlasticityError, SimulationError};
use crate::lattice::{Family, Mat2, PointSet, Shape, Vec2};
use crate::plasticity::{invariants, kirchhoff_from_be, return_map, DruckerPrager, ElasticModuli};
use crate::scenario_io::{Checkpoint, Snapshot};
use crate::tensor::{embed, in_plane, Mat3};

pub use boundary::{
    frictional_base, loaded_faces, pressure_force, BaseContact, BoundaryCondition, BoundaryKind, Component,
    LoadedFace, Schedule, Selector,
};
pub use forces::{
    force_state, internal_force_at, internal_forces, nonaffine, stabilization_force_at, stabilization_forces,
    Stabilization,
};
pub use initial::{geostatic_stress, initial_cauchy_stress, prestrain, InitialStress};
pub use integrator::{critical_time_step, newmark_step, NewmarkError, NewmarkState, NEWMARK_BETA, NEWMARK_GAMMA};

/// Solid constitutive description. `yield_law = None` is purely elastic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub moduli: ElasticModuli,
    pub yield_law: Option<DruckerPrager>,
}

/// Loading-phase time integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewmarkConfig {
    pub dt: f64,
    pub end_time: f64,
    /// Local non-viscous damping coefficient (0 for dynamic runs).
    pub damping: f64,
}

impl NewmarkConfig {
    pub fn steps(&self) -> u64 {
        (self.end_time / self.dt).round() as u64
    }
}

/// Damped dynamic relaxation that equilibrates the initial state before
/// loading starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Relaxation {
    pub dt: f64,
    pub damping: f64,
    /// Stop once kinetic energy falls below this fraction of its peak.
    pub tolerance: f64,
    pub max_steps: u64,
    /// Let points yield during relaxation (frozen by default).
    pub plastic: bool,
}

impl Default for Relaxation {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            damping: 0.8,
            tolerance: 1e-6,
            max_steps: 200_000,
            plastic: false,
        }
    }
}

/// Everything needed to build a simulation.
#[derive(Debug, Clone)]
pub struct ModelSetup {
    pub points: PointSet,
    pub family: Family,
    /// Body outline, used for depths of the geostatic state.
    pub outline: Shape,
    pub material: Material,
    pub gravity: Vec2,
    pub stabilization: Stabilization,
    pub boundaries: Vec<BoundaryCondition>,
    pub initial_stress: InitialStress,
    pub relaxation: Option<Relaxation>,
    pub integrator: NewmarkConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Relaxation,
    Loading,
}

#[derive(Debug, Clone)]
enum Load {
    Pressure {
        pressure: f64,
        follower: bool,
        schedule: Option<Schedule>,
    },
    Retaining {
        release: f64,
        ramp: f64,
    },
}

impl Load {
    fn scale(&self, t: f64) -> f64 {
        match self {
            Load::Pressure { schedule, .. } => schedule.as_ref().map_or(1.0, |s| s.value(t)),
            Load::Retaining { release, ramp } => {
                if t < *release {
                    1.0
                } else if *ramp > 0.0 {
                    (1.0 - (t - release) / ramp).max(0.0)
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct FaceLoad {
    load: usize,
    area: Vec2,
    /// Full-magnitude force of a retaining face.
    force: Vec2,
}

#[derive(Debug, Clone)]
struct Constraint {
    point: usize,
    component: usize,
    schedule: Option<Schedule>,
}

/// Displacement-driven boundary whose reaction is reported.
#[derive(Debug, Clone)]
pub struct Drive {
    pub points: Vec<usize>,
    pub component: Component,
    pub schedule: Schedule,
}

impl Drive {
    /// Unit vector along the imposed motion.
    fn direction(&self) -> Vec2 {
        let last = self.schedule.knots.last().map_or(0.0, |k| k[1]);
        let s = if last < 0.0 { -1.0 } else { 1.0 };
        let mut d = Vec2::zeros();
        d[self.component.index()] = s;
        d
    }
}

/// One sample of the loading curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub time: f64,
    /// Magnitude of the imposed displacement.
    pub displacement: f64,
    /// Reaction on the driven points, compression positive (N per unit
    /// thickness).
    pub reaction: f64,
}

/// One run-log line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEntry {
    pub phase: Phase,
    pub step: u64,
    pub time: f64,
    pub kinetic_energy: f64,
    pub max_eps_ps: f64,
    pub wall_seconds: f64,
}

/// Outcome of the relaxation phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationReport {
    pub steps: u64,
    pub peak_kinetic_energy: f64,
    pub final_kinetic_energy: f64,
}

/// Output cadence of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputPlan {
    /// Snapshot interval (s); 0 disables snapshots except the first and last.
    pub interval: f64,
    /// Loading-curve sampling interval (s).
    pub curve_interval: f64,
    /// Run-log interval in steps.
    pub log_every: u64,
    /// Checkpoint interval (s); `None` disables checkpoints.
    pub checkpoint_every: Option<f64>,
}

impl Default for OutputPlan {
    fn default() -> Self {
        Self {
            interval: 0.0,
            curve_interval: 0.0,
            log_every: 1000,
            checkpoint_every: None,
        }
    }
}

/// Receives the products of a run. All methods default to doing nothing.
pub trait Observer {
    fn snapshot(&mut self, _snapshot: &Snapshot) -> Result<(), SimulationError> {
        Ok(())
    }
    fn curve(&mut self, _sample: CurveSample) -> Result<(), SimulationError> {
        Ok(())
    }
    fn log(&mut self, _entry: LogEntry) -> Result<(), SimulationError> {
        Ok(())
    }
    fn checkpoint(&mut self, _checkpoint: &Checkpoint) -> Result<(), SimulationError> {
        Ok(())
    }
    /// Called with the last good state when the run aborts on a non-finite
    /// value; returns where the dump was written.
    fn dump(&mut self, _checkpoint: &Checkpoint) -> Option<std::path::PathBuf> {
        None
    }
}

/// Observer that ignores everything.
pub struct NullObserver;

impl Observer for NullObserver {}

/// Per-point constitutive state.
#[derive(Debug, Clone, PartialEq)]
pub struct PointFields {
    pub f: Vec<Mat2>,
    pub be: Vec<Mat3>,
    pub tau: Vec<Mat3>,
    pub zeta: Vec<f64>,
    pub cohesion: Vec<f64>,
    pub dgamma: Vec<f64>,
    pub eps_ps: Vec<f64>,
    pub eps_pv: Vec<f64>,
}

impl PointFields {
    fn new(n: usize, cohesion: f64) -> Self {
        Self {
            f: vec![Mat2::identity(); n],
            be: vec![Mat3::identity(); n],
            tau: vec![Mat3::zeros(); n],
            zeta: vec![0.0; n],
            cohesion: vec![cohesion; n],
            dgamma: vec![0.0; n],
            eps_ps: vec![0.0; n],
            eps_pv: vec![0.0; n],
        }
    }

    /// First Piola stress, in-plane block.
    pub fn piola(&self, i: usize) -> Mat2 {
        let f_inv_t = self.f[i].try_inverse().unwrap_or_else(Mat2::zeros).transpose();
        in_plane(&self.tau[i]) * f_inv_t
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct PointUpdate {
    f: Mat2,
    be: Mat3,
    tau: Mat3,
    /// `P̄ 𝒦⁻¹`.
    a: Mat2,
    zeta: f64,
    cohesion: f64,
    dgamma: f64,
    d_eps_ps: f64,
    d_eps_pv: f64,
}

#[derive(Debug, Clone)]
enum PointFailure {
    Kinematics(KinematicsError),
    Plasticity(PlasticityError),
}

/// A built model and its evolving state.
pub struct Simulation {
    pub points: PointSet,
    pub family: Family,
    pub outline: Shape,
    pub material: Material,
    pub gravity: Vec2,
    pub stabilization: Stabilization,
    pub initial_stress: InitialStress,
    pub relaxation: Option<Relaxation>,
    pub integrator: NewmarkConfig,
    pub contact: Option<BaseContact>,
    pub drive: Option<Drive>,
    pub warnings: Vec<String>,

    pub state: NewmarkState,
    pub fields: PointFields,
    pub phase: Phase,
    /// Steps taken in the current phase.
    pub step: u64,
    pub plastic: bool,

    masses: Vec<f64>,
    loads: Vec<Load>,
    face_offsets: Vec<usize>,
    faces: Vec<FaceLoad>,
    constraints: Vec<Constraint>,
    constrained: Vec<[bool; 2]>,
    /// Displacements at the start of the loading phase.
    base_displacement: Vec<Vec2>,
    /// `(P̄, F)` at the last snapshot, for the second-order work.
    work_reference: Option<(Vec<Mat2>, Vec<Mat2>)>,

    updates: Vec<Result<PointUpdate, PointFailure>>,
    stress_shape: Vec<Mat2>,
    gradients: Vec<Mat2>,
    accelerations: Vec<Vec2>,
    internal: Vec<Vec2>,
}

impl Simulation {
    pub fn new(setup: ModelSetup) -> Result<Self, SimulationError> {
        let ModelSetup {
            points,
            family,
            outline,
            material,
            gravity,
            stabilization,
            boundaries,
            initial_stress,
            relaxation,
            integrator,
        } = setup;
        family.ensure_regular()?;
        let n = points.len();
        if !(integrator.dt > 0.0 && integrator.end_time >= 0.0) {
            return Err(SimulationError::Config(format!(
                "time step must be positive and end time non-negative (dt = {}, end = {})",
                integrator.dt, integrator.end_time
            )));
        }

        let mut warnings = Vec::new();
        let rho_min = points.densities_partial.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(rho_min > 0.0) {
            return Err(SimulationError::Config("partial densities must be positive".into()));
        }
        let dt_crit = critical_time_step(points.spacing, material.moduli.p_wave(), rho_min);
        let mut check_dt = |label: &str, dt: f64| {
            if dt > 0.8 * dt_crit {
                warnings.push(format!(
                    "{label} time step {dt:e} s exceeds 0.8 of the wave-speed limit {dt_crit:e} s"
                ));
            }
        };
        check_dt("loading", integrator.dt);
        if let Some(r) = &relaxation {
            check_dt("relaxation", r.dt);
        }

        let mut loads = Vec::new();
        let mut per_point: Vec<Vec<FaceLoad>> = vec![Vec::new(); n];
        let mut constraints = Vec::new();
        let mut contact = None;
        let mut drive = None;
        let sigma0 = initial_cauchy_stress(&points, &outline, gravity.norm(), initial_stress);
        for (k, bc) in boundaries.iter().enumerate() {
            let selected = bc.selector.resolve(&points);
            let needs_points = !matches!(bc.kind, BoundaryKind::FrictionalBase { .. } | BoundaryKind::RetainingForce { .. });
            if selected.is_empty() && needs_points {
                return Err(SimulationError::Config(format!(
                    "boundary condition {} selects no points",
                    k + 1
                )));
            }
            match &bc.kind {
                BoundaryKind::PrescribedDisplacement { component, schedule } => {
                    for &i in &selected {
                        constraints.push(Constraint {
                            point: i,
                            component: component.index(),
                            schedule: Some(schedule.clone()),
                        });
                    }
                    if drive.is_none() {
                        drive = Some(Drive {
                            points: selected.clone(),
                            component: *component,
                            schedule: schedule.clone(),
                        });
                    }
                }
                BoundaryKind::Fixed { components } => {
                    for &i in &selected {
                        for c in components {
                            constraints.push(Constraint {
                                point: i,
                                component: c.index(),
                                schedule: None,
                            });
                        }
                    }
                }
                BoundaryKind::ConstantTraction {
                    pressure,
                    follower,
                    schedule,
                } => {
                    let faces = loaded_faces(&points, &bc.selector, &selected, false);
                    if faces.is_empty() {
                        return Err(SimulationError::Config(format!(
                            "traction condition {} has no exposed faces",
                            k + 1
                        )));
                    }
                    let id = loads.len();
                    loads.push(Load::Pressure {
                        pressure: *pressure,
                        follower: *follower,
                        schedule: schedule.clone(),
                    });
                    for face in faces {
                        per_point[face.point].push(FaceLoad {
                            load: id,
                            area: face.area,
                            force: Vec2::zeros(),
                        });
                    }
                }
                BoundaryKind::FrictionalBase {
                    friction,
                    penalty,
                    stick_velocity,
                    level,
                } => {
                    let (lo, _) = points.bounding_box();
                    contact = Some(BaseContact {
                        friction: *friction,
                        penalty: penalty.unwrap_or(10.0 * material.moduli.bulk / points.spacing),
                        stick_velocity: *stick_velocity,
                        level: level.unwrap_or(lo[1] - 0.5 * points.spacing),
                    });
                }
                BoundaryKind::RetainingForce { release, ramp } => {
                    let faces = loaded_faces(&points, &bc.selector, &selected, true);
                    let id = loads.len();
                    loads.push(Load::Retaining {
                        release: *release,
                        ramp: *ramp,
                    });
                    for face in faces {
                        let s = in_plane(&sigma0[face.point]);
                        per_point[face.point].push(FaceLoad {
                            load: id,
                            area: face.area,
                            force: s * face.area,
                        });
                    }
                }
            }
        }
        let mut face_offsets = Vec::with_capacity(n + 1);
        let mut faces = Vec::new();
        face_offsets.push(0);
        for list in per_point {
            faces.extend(list);
            face_offsets.push(faces.len());
        }
        let mut constrained = vec![[false; 2]; n];
        for c in &constraints {
            constrained[c.point][c.component] = true;
        }

        let c0 = material.yield_law.map_or(0.0, |y| y.c0);
        let masses = points.masses();
        Ok(Self {
            state: NewmarkState::zeros(n),
            fields: PointFields::new(n, c0),
            phase: Phase::Relaxation,
            step: 0,
            plastic: false,
            masses,
            loads,
            face_offsets,
            faces,
            constraints,
            constrained,
            base_displacement: vec![Vec2::zeros(); n],
            work_reference: None,
            updates: vec![Ok(PointUpdate::default()); n],
            stress_shape: vec![Mat2::zeros(); n],
            gradients: vec![Mat2::identity(); n],
            accelerations: vec![Vec2::zeros(); n],
            internal: vec![Vec2::zeros(); n],
            points,
            family,
            outline,
            material,
            gravity,
            stabilization,
            initial_stress,
            relaxation,
            integrator,
            contact,
            drive,
            warnings,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Wave-speed time-step limit of the lattice.
    pub fn critical_time_step(&self) -> f64 {
        let rho = self.points.densities_partial.iter().cloned().fold(f64::INFINITY, f64::min);
        critical_time_step(self.points.spacing, self.material.moduli.p_wave(), rho)
    }

    /// Loading-phase time.
    pub fn time(&self) -> f64 {
        match self.phase {
            Phase::Loading => self.step as f64 * self.integrator.dt,
            Phase::Relaxation => 0.0,
        }
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.state.kinetic_energy(&self.masses)
    }

    /// Internal force densities of the last step (stabilization included).
    pub fn internal_forces(&self) -> &[Vec2] {
        &self.internal
    }

    /// Installs the initial stress field, runs the relaxation phase if one
    /// is configured, and arms the loading phase.
    pub fn initialize(&mut self, observer: &mut dyn Observer) -> Result<Option<RelaxationReport>, SimulationError> {
        let sigma = initial_cauchy_stress(&self.points, &self.outline, self.gravity.norm(), self.initial_stress);
        let moduli = self.material.moduli;
        for (i, s) in sigma.iter().enumerate() {
            let be = prestrain(s, &moduli);
            self.fields.be[i] = be;
            self.fields.tau[i] = kirchhoff_from_be(&be, &moduli).map_err(|source| SimulationError::Plasticity {
                step: 0,
                time: 0.0,
                point: i,
                source,
            })?;
        }
        self.phase = Phase::Relaxation;
        self.step = 0;
        self.refresh_accelerations()?;

        let report = match self.relaxation {
            Some(relax) => {
                // points resting on a frictional base are held in x while
                // the initial stress relaxes
                let saved = (self.constraints.len(), self.constrained.clone());
                for i in self.base_points() {
                    if !self.constrained[i][0] {
                        self.constraints.push(Constraint {
                            point: i,
                            component: 0,
                            schedule: None,
                        });
                        self.constrained[i][0] = true;
                        self.state.a[i].x = 0.0;
                    }
                }
                let report = self.relax(relax, observer);
                self.constraints.truncate(saved.0);
                self.constrained = saved.1;
                Some(report?)
            }
            None => None,
        };

        self.phase = Phase::Loading;
        self.step = 0;
        self.plastic = self.material.yield_law.is_some();
        self.state.v.iter_mut().for_each(|v| *v = Vec2::zeros());
        self.base_displacement = self.state.u.clone();
        self.refresh_accelerations()?;
        self.work_reference = None;
        Ok(report)
    }

    fn relax(&mut self, relax: Relaxation, observer: &mut dyn Observer) -> Result<RelaxationReport, SimulationError> {
        let started = Instant::now();
        self.plastic = relax.plastic && self.material.yield_law.is_some();
        let mut peak = 0.0f64;
        let mut trace = Vec::new();
        let mut ke = 0.0;
        for step in 1..=relax.max_steps {
            self.advance(relax.dt, relax.damping, 0.0, observer)?;
            self.step = step;
            ke = self.kinetic_energy();
            peak = peak.max(ke);
            if step % 100 == 0 || step == 1 {
                trace.push(ke);
            }
            if step % 1000 == 0 {
                observer.log(LogEntry {
                    phase: Phase::Relaxation,
                    step,
                    time: step as f64 * relax.dt,
                    kinetic_energy: ke,
                    max_eps_ps: self.max_eps_ps(),
                    wall_seconds: started.elapsed().as_secs_f64(),
                })?;
            }
            if peak == 0.0 || (step >= 10 && ke < relax.tolerance * peak) {
                return Ok(RelaxationReport {
                    steps: step,
                    peak_kinetic_energy: peak,
                    final_kinetic_energy: ke,
                });
            }
        }
        Err(SimulationError::Relaxation {
            steps: relax.max_steps,
            ratio: if peak > 0.0 { ke / peak } else { 0.0 },
            trace,
        })
    }

    /// Points whose lower cell face starts on the base plane.
    fn base_points(&self) -> Vec<usize> {
        let Some(c) = &self.contact else {
            return Vec::new();
        };
        let h = self.points.spacing;
        (0..self.len())
            .filter(|&i| self.points.positions[i].y - 0.5 * h <= c.level + 1e-9 * h)
            .collect()
    }

    fn max_eps_ps(&self) -> f64 {
        self.fields.eps_ps.iter().cloned().fold(0.0, f64::max)
    }

    /// Accelerations of the current configuration without advancing (used
    /// after initialization so the first predictor sees consistent forces).
    fn refresh_accelerations(&mut self) -> Result<(), SimulationError> {
        let plastic = self.plastic;
        self.plastic = false;
        let result = self.compute_updates(0.0);
        self.plastic = plastic;
        result?;
        let t = self.load_time(self.time());
        self.assemble(t, self.integrator.dt, 0.0);
        self.apply_constraint_accelerations();
        self.state.a.copy_from_slice(&self.accelerations);
        Ok(())
    }

    /// Advances one loading step.
    pub fn step(&mut self, observer: &mut dyn Observer) -> Result<(), SimulationError> {
        self.phase = Phase::Loading;
        self.advance(self.integrator.dt, self.integrator.damping, self.integrator.dt, observer)?;
        self.step += 1;
        Ok(())
    }

    /// One explicit step of size `dt`; `time_step` is the amount the
    /// loading clock moves (0 while relaxing).
    fn advance(&mut self, dt: f64, damping: f64, time_step: f64, observer: &mut dyn Observer) -> Result<(), SimulationError> {
        let t_new = self.time() + time_step;
        let backup = self.state.clone();
        integrator::predict(&mut self.state, dt);
        self.apply_constraint_displacements(t_new);

        if let Err(e) = self.compute_updates(t_new) {
            self.state = backup;
            return Err(e);
        }
        self.assemble(self.load_time(t_new), dt, damping);
        self.apply_constraint_accelerations();

        if let Some(point) = self
            .accelerations
            .iter()
            .position(|a| !(a.x.is_finite() && a.y.is_finite()))
        {
            self.state = backup;
            let dump = observer.dump(&self.checkpoint());
            return Err(SimulationError::NonFinite {
                step: self.step + 1,
                time: t_new,
                point,
                dump,
            });
        }

        integrator::correct(&mut self.state, &self.accelerations, dt);
        self.apply_constraint_velocities(t_new);
        self.commit();
        Ok(())
    }

    fn apply_constraint_displacements(&mut self, t: f64) {
        for c in &self.constraints {
            let base = self.base_displacement[c.point][c.component];
            let offset = match (&c.schedule, self.phase) {
                (Some(s), Phase::Loading) => s.value(t),
                _ => 0.0,
            };
            self.state.u[c.point][c.component] = base + offset;
        }
    }

    /// Time seen by the load schedules; loads are held at their initial
    /// values while relaxing.
    fn load_time(&self, t: f64) -> f64 {
        match self.phase {
            Phase::Relaxation => f64::NEG_INFINITY,
            Phase::Loading => t,
        }
    }

    fn apply_constraint_accelerations(&mut self) {
        // schedules are piecewise linear: zero acceleration between knots
        for c in &self.constraints {
            self.accelerations[c.point][c.component] = 0.0;
        }
    }

    fn apply_constraint_velocities(&mut self, t: f64) {
        for c in &self.constraints {
            let rate = match (&c.schedule, self.phase) {
                (Some(s), Phase::Loading) => s.rate(t),
                _ => 0.0,
            };
            self.state.v[c.point][c.component] = rate;
        }
    }

    /// Pass 1: kinematics and stress update of every point into `updates`.
    fn compute_updates(&mut self, t: f64) -> Result<(), SimulationError> {
        let family = &self.family;
        let u = &self.state.u;
        let fields = &self.fields;
        let moduli = self.material.moduli;
        let law = if self.plastic { self.material.yield_law } else { None };
        self.updates.par_iter_mut().enumerate().for_each(|(i, slot)| {
            *slot = update_point(family, i, u, fields, &moduli, law.as_ref());
        });
        if let Some((point, failure)) = self
            .updates
            .iter()
            .enumerate()
            .find_map(|(i, r)| r.as_ref().err().map(|e| (i, e.clone())))
        {
            let step = self.step + 1;
            return Err(match failure {
                PointFailure::Kinematics(source) => SimulationError::Kinematics { step, time: t, source },
                PointFailure::Plasticity(source) => SimulationError::Plasticity {
                    step,
                    time: t,
                    point,
                    source,
                },
            });
        }
        for (i, r) in self.updates.iter().enumerate() {
            let p = r.as_ref().expect("checked");
            self.stress_shape[i] = p.a;
            self.gradients[i] = p.f;
        }
        Ok(())
    }

    /// Pass 2: force densities and accelerations from `updates`.
    fn assemble(&mut self, t: f64, dt: f64, damping: f64) {
        let family = &self.family;
        let points = &self.points;
        let u = &self.state.u;
        let v = &self.state.v;
        let a_old = &self.state.a;
        let a = &self.stress_shape;
        let grads = &self.gradients;
        let stab = self.stabilization;
        let gravity = self.gravity;
        let contact = self.contact;
        let loads = &self.loads;
        let scales: Vec<f64> = loads.iter().map(|l| l.scale(t)).collect();
        let faces = &self.faces;
        let offsets = &self.face_offsets;
        let constrained = &self.constrained;
        let half = points.spacing * 0.5;

        self.accelerations
            .par_iter_mut()
            .zip(self.internal.par_iter_mut())
            .enumerate()
            .for_each(|(i, (acc, internal))| {
                let rho = points.densities_partial[i];
                let vol = points.volumes[i];
                let mut f_int = internal_force_at(family, i, a);
                if stab.is_active() {
                    f_int += stabilization_force_at(family, i, u, grads, &stab);
                }
                *internal = f_int;
                let mut f = f_int + rho * gravity;
                for face in &faces[offsets[i]..offsets[i + 1]] {
                    let s = scales[face.load];
                    if s == 0.0 {
                        continue;
                    }
                    let force = match &loads[face.load] {
                        Load::Pressure { pressure, follower, .. } => {
                            pressure_force(s * pressure, &face.area, follower.then_some(&grads[i]))
                        }
                        Load::Retaining { .. } => s * face.force,
                    };
                    f += force / vol;
                }
                if let Some(c) = &contact {
                    let bottom = points.positions[i].y + u[i].y - half;
                    if bottom < c.level {
                        let required = vol * (rho * (-2.0 * v[i].x / dt - a_old[i].x) - f.x);
                        let fc = frictional_base(bottom, points.spacing, v[i].x, required, c);
                        f += fc / vol;
                    }
                }
                if damping > 0.0 {
                    let vm = v[i] + 0.5 * dt * a_old[i];
                    for k in 0..2 {
                        f[k] -= damping * f[k].abs() * sign(vm[k]);
                    }
                }
                let mut acc_i = f / rho;
                for k in 0..2 {
                    if constrained[i][k] {
                        acc_i[k] = 0.0;
                    }
                }
                *acc = acc_i;
            });
    }

    /// Moves `updates` into the point fields.
    fn commit(&mut self) {
        let fields = &mut self.fields;
        for (i, r) in self.updates.iter().enumerate() {
            let p = r.as_ref().expect("checked");
            fields.f[i] = p.f;
            fields.be[i] = p.be;
            fields.tau[i] = p.tau;
            fields.zeta[i] = p.zeta;
            fields.cohesion[i] = p.cohesion;
            fields.dgamma[i] = p.dgamma;
            fields.eps_ps[i] += p.d_eps_ps;
            fields.eps_pv[i] += p.d_eps_pv;
        }
    }

    /// Loading-phase driver: steps to the end time, emitting snapshots,
    /// curve samples, log lines and checkpoints.
    pub fn run(&mut self, plan: &OutputPlan, observer: &mut dyn Observer) -> Result<RunSummary, SimulationError> {
        let started = Instant::now();
        let dt = self.integrator.dt;
        let total = self.integrator.steps();
        let every = |interval: f64| -> Option<u64> {
            (interval > 0.0).then(|| ((interval / dt).round() as u64).max(1))
        };
        let snap_every = every(plan.interval);
        let curve_every = every(plan.curve_interval).or(snap_every);
        let ckpt_every = plan.checkpoint_every.and_then(every);
        let mut snapshots = 0usize;

        if self.step == 0 {
            observer.snapshot(&self.snapshot())?;
            snapshots += 1;
            if curve_every.is_some() {
                observer.curve(self.curve_sample())?;
            }
        }
        while self.step < total {
            self.step(observer)?;
            let s = self.step;
            let last = s == total;
            if last || snap_every.is_some_and(|k| s.is_multiple_of(k)) {
                observer.snapshot(&self.snapshot())?;
                snapshots += 1;
            }
            if curve_every.is_some_and(|k| s.is_multiple_of(k)) || (last && curve_every.is_some()) {
                observer.curve(self.curve_sample())?;
            }
            if plan.log_every > 0 && (s.is_multiple_of(plan.log_every) || last) {
                observer.log(LogEntry {
                    phase: Phase::Loading,
                    step: s,
                    time: self.time(),
                    kinetic_energy: self.kinetic_energy(),
                    max_eps_ps: self.max_eps_ps(),
                    wall_seconds: started.elapsed().as_secs_f64(),
                })?;
            }
            if ckpt_every.is_some_and(|k| s.is_multiple_of(k)) && !last {
                observer.checkpoint(&self.checkpoint())?;
            }
        }
        Ok(RunSummary {
            steps: self.step,
            time: self.time(),
            snapshots,
            wall_seconds: started.elapsed().as_secs_f64(),
        })
    }

    /// Reaction on the driven boundary, compression positive.
    pub fn reaction(&self) -> f64 {
        let Some(drive) = &self.drive else { return 0.0 };
        let dir = drive.direction();
        let total: Vec2 = drive
            .points
            .iter()
            .map(|&i| self.internal[i] * self.points.volumes[i])
            .sum();
        -total.dot(&dir)
    }

    pub fn curve_sample(&self) -> CurveSample {
        let t = self.time();
        CurveSample {
            time: t,
            displacement: self.drive.as_ref().map_or(0.0, |d| d.schedule.value(t).abs()),
            reaction: self.reaction(),
        }
    }

    /// Current snapshot; the second-order work is taken against the
    /// previous snapshot (zero for the first one).
    pub fn snapshot(&mut self) -> Snapshot {
        let n = self.len();
        let piola: Vec<Mat2> = (0..n).map(|i| self.fields.piola(i)).collect();
        let w2 = match &self.work_reference {
            Some((p0, f0)) => (0..n)
                .map(|i| second_order_work(&p0[i], &piola[i], &f0[i], &self.fields.f[i]))
                .collect(),
            None => vec![0.0; n],
        };
        self.work_reference = Some((piola, self.fields.f.clone()));
        let (mean_stress, q): (Vec<f64>, Vec<f64>) = self.fields.tau.iter().map(invariants).unzip();
        Snapshot {
            time: self.time(),
            step: self.step,
            reference: self.points.positions.iter().map(|x| [x.x, x.y]).collect(),
            displacement: self.state.u.iter().map(|u| [u.x, u.y]).collect(),
            eps_ps: self.fields.eps_ps.clone(),
            eps_pv: self.fields.eps_pv.clone(),
            w2,
            mean_stress,
            q,
            cohesion: self.fields.cohesion.clone(),
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            step: self.step,
            time: self.time(),
            plastic: self.plastic,
            state: self.state.clone(),
            fields: self.fields.clone(),
            base_displacement: self.base_displacement.clone(),
            work_reference: self.work_reference.clone(),
        }
    }

    /// Resumes the loading phase from a checkpoint of the same model.
    pub fn restore(&mut self, ckpt: Checkpoint) -> Result<(), SimulationError> {
        let n = self.len();
        if ckpt.state.len() != n || ckpt.fields.f.len() != n {
            return Err(SimulationError::Config(format!(
                "checkpoint has {} points, model has {n}",
                ckpt.state.len()
            )));
        }
        self.phase = Phase::Loading;
        self.step = ckpt.step;
        self.plastic = ckpt.plastic;
        self.state = ckpt.state;
        self.fields = ckpt.fields;
        self.base_displacement = ckpt.base_displacement;
        self.work_reference = ckpt.work_reference;
        Ok(())
    }
}

/// Totals of a finished run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: u64,
    pub time: f64,
    pub snapshots: usize,
    pub wall_seconds: f64,
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn update_point(
    family: &Family,
    i: usize,
    u: &[Vec2],
    fields: &PointFields,
    moduli: &ElasticModuli,
    law: Option<&DruckerPrager>,
) -> Result<PointUpdate, PointFailure> {
    let f2 = crate::kinematics::deformation_gradient_at(family, i, u);
    let det = f2.determinant();
    if !(det > 0.0) || !det.is_finite() {
        return Err(PointFailure::Kinematics(KinematicsError::Inversion { point: i, det }));
    }
    let f_old = fields.f[i];
    let be_n = fields.be[i];
    // relative gradient f = F_{n+1} F_n⁻¹ (F₃₃ = 1)
    let f_old_inv = f_old.try_inverse().ok_or(PointFailure::Kinematics(KinematicsError::Inversion {
        point: i,
        det: f_old.determinant(),
    }))?;
    let rel = embed(&(f2 * f_old_inv), 1.0);
    let be_trial = rel * be_n * rel.transpose();
    let (tau, be, zeta, cohesion, dgamma, d_ps, d_pv) = match law {
        Some(law) => {
            let rm = return_map(&be_trial, fields.zeta[i], moduli, law).map_err(PointFailure::Plasticity)?;
            let (d_ps, d_pv) = accumulate_plastic_strains(rm.dgamma, &rm.flow);
            (rm.tau, rm.be, rm.zeta, rm.cohesion, rm.dgamma, d_ps, d_pv)
        }
        None => {
            let tau = kirchhoff_from_be(&be_trial, moduli).map_err(PointFailure::Plasticity)?;
            (tau, be_trial, fields.zeta[i], fields.cohesion[i], 0.0, 0.0, 0.0)
        }
    };
    let f_inv_t = (f2.try_inverse().expect("det > 0")).transpose();
    let piola = in_plane(&tau) * f_inv_t;
    Ok(PointUpdate {
        f: f2,
        be,
        tau,
        a: piola * family.shape_inv[i],
        zeta,
        cohesion,
        dgamma,
        d_eps_ps: d_ps,
        d_eps_pv: d_pv,
    })
}
