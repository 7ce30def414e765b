//! Scenario files, snapshot and curve writers, checkpoints and run
//! directories.

pub mod checkpoint;
pub mod config;
pub mod output;
pub mod report;
pub mod run;
pub mod vtk;

use serde::{Deserialize, Serialize};

use crate::dynamics::{NewmarkState, PointFields};
use crate::lattice::Mat2;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use config::{parse_scenario, write_scenario, Density, Discretization, Geometry, MaterialSpec, Moduli, OutputSpec, Scenario};
pub use output::{DirectoryObserver, Manifest, MemoryObserver, SnapshotEntry};
pub use report::{report_run, BandMetrics, ReportOptions, RunReport};
pub use run::{run_scenario, RunEvent};
pub use vtk::{read_snapshot, write_snapshot};

/// Point fields at one output time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub step: u64,
    pub reference: Vec<[f64; 2]>,
    pub displacement: Vec<[f64; 2]>,
    pub eps_ps: Vec<f64>,
    pub eps_pv: Vec<f64>,
    /// Second-order work since the previous snapshot.
    pub w2: Vec<f64>,
    /// Mean Kirchhoff stress, compression negative.
    pub mean_stress: Vec<f64>,
    pub q: Vec<f64>,
    pub cohesion: Vec<f64>,
}

impl Snapshot {
    pub fn len(&self) -> usize {
        self.reference.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reference.is_empty()
    }

    /// Deformed positions.
    pub fn positions(&self) -> Vec<[f64; 2]> {
        self.reference
            .iter()
            .zip(&self.displacement)
            .map(|(x, u)| [x[0] + u[0], x[1] + u[1]])
            .collect()
    }

    pub fn displacement_magnitude(&self) -> Vec<f64> {
        self.displacement.iter().map(|u| u[0].hypot(u[1])).collect()
    }
}

/// Complete dynamic state of a loading-phase run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub time: f64,
    pub plastic: bool,
    pub state: NewmarkState,
    pub fields: PointFields,
    pub base_displacement: Vec<crate::lattice::Vec2>,
    pub work_reference: Option<(Vec<Mat2>, Vec<Mat2>)>,
}
