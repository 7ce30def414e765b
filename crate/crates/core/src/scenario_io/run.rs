//! Running a scenario into a run directory.

use std::path::Path;

use crate::dynamics::{OutputPlan, RelaxationReport, RunSummary, Simulation};
use crate::error::SimulationError;

use super::config::{write_scenario, Scenario};
use super::output::{DirectoryObserver, Manifest};
use super::Checkpoint;

/// Progress messages of [`run_scenario`].
#[derive(Debug, Clone, PartialEq)]
pub enum RunEvent {
    Started {
        name: String,
        points: usize,
        bonds: usize,
        dt: f64,
        steps: u64,
    },
    Warning(String),
    Relaxed(RelaxationReport),
    Finished(RunSummary),
}

/// Builds the simulation, writes the manifest, scenario copy and lattice
/// report, initializes (or restores `resume`) and runs to the end time.
/// `resumed_from` is recorded in the manifest.
pub fn run_scenario(
    scenario: &Scenario,
    dir: &Path,
    plan: &OutputPlan,
    resume: Option<(Checkpoint, String)>,
    progress: &mut dyn FnMut(RunEvent),
) -> Result<RunSummary, SimulationError> {
    let setup = scenario.build()?;
    let mut sim = Simulation::new(setup)?;
    for w in &sim.warnings {
        progress(RunEvent::Warning(w.clone()));
    }
    let (lo, hi) = sim.points.bounding_box();
    let h = sim.points.spacing;
    let manifest = Manifest {
        scenario: scenario.name.clone(),
        points: sim.len(),
        spacing: h,
        bounds: [[lo[0] - 0.5 * h, lo[1] - 0.5 * h], [hi[0] + 0.5 * h, hi[1] + 0.5 * h]],
        crest: scenario.geometry.crest(),
        snapshots: vec![],
        checkpoints: vec![],
        loading_curve: String::new(),
        run_log: String::new(),
        resumed_from: resume.as_ref().map(|(_, from)| from.clone()),
    };
    let mut obs = DirectoryObserver::create(dir, manifest)?;
    obs.write_text("scenario.toml", &write_scenario(scenario))?;
    if scenario.output.lattice_report {
        obs.write_text("lattice_report.txt", &sim.family.report(&sim.points).to_string())?;
    }
    progress(RunEvent::Started {
        name: scenario.name.clone(),
        points: sim.len(),
        bonds: sim.family.neighbors.len(),
        dt: scenario.integrator.dt,
        steps: scenario.integrator.steps(),
    });
    match resume {
        Some((ckpt, _)) => sim.restore(ckpt)?,
        None => {
            if let Some(r) = sim.initialize(&mut obs)? {
                progress(RunEvent::Relaxed(r));
            }
        }
    }
    let summary = sim.run(plan, &mut obs);
    obs.flush()?;
    let summary = summary?;
    progress(RunEvent::Finished(summary));
    Ok(summary)
}
