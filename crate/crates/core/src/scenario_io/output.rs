//! Run directories: snapshots, curves, run log, checkpoints and manifest.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/scenario.toml
//! <dir>/lattice_report.txt
//! <dir>/loading_curve.csv
//! <dir>/run_log.csv
//! <dir>/snapshots/snapshot_000000.vtk
//! <dir>/checkpoints/checkpoint_00001000.bin
//! ```

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{CurveSample, LogEntry, Observer};
use crate::error::{IoError, SimulationError};

use super::{checkpoint::write_checkpoint, vtk::write_snapshot, Checkpoint, Snapshot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub file: String,
    pub step: u64,
    pub time: f64,
}

/// Index of a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: String,
    pub points: usize,
    pub spacing: f64,
    /// Reference bounding box of the lattice.
    pub bounds: [[f64; 2]; 2],
    /// Crest of the outline (top right corner of the highest edge).
    pub crest: [f64; 2],
    pub snapshots: Vec<SnapshotEntry>,
    pub checkpoints: Vec<SnapshotEntry>,
    pub loading_curve: String,
    pub run_log: String,
    pub resumed_from: Option<String>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self, IoError> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| IoError::new(format!("reading {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| {
            IoError::new(
                format!("parsing {}", path.display()),
                std::io::Error::new(std::io::ErrorKind::InvalidData, e),
            )
        })
    }
}

fn io(ctx: &Path) -> impl Fn(std::io::Error) -> IoError + '_ {
    move |e| IoError::new(format!("writing {}", ctx.display()), e)
}

/// Writes every product of a run below one directory.
pub struct DirectoryObserver {
    dir: PathBuf,
    manifest: Manifest,
    curve: BufWriter<File>,
    log: BufWriter<File>,
}

impl DirectoryObserver {
    pub fn create(dir: &Path, mut manifest: Manifest) -> Result<Self, IoError> {
        for sub in ["snapshots", "checkpoints"] {
            std::fs::create_dir_all(dir.join(sub)).map_err(io(dir))?;
        }
        manifest.snapshots.clear();
        manifest.checkpoints.clear();
        manifest.loading_curve = "loading_curve.csv".into();
        manifest.run_log = "run_log.csv".into();
        let open = |name: &str, header: &str| -> Result<BufWriter<File>, IoError> {
            let path = dir.join(name);
            let mut w = BufWriter::new(File::create(&path).map_err(io(&path))?);
            writeln!(w, "{header}").map_err(io(&path))?;
            Ok(w)
        };
        let curve = open("loading_curve.csv", "time,displacement,reaction")?;
        let log = open("run_log.csv", "phase,step,time,kinetic_energy,max_eps_ps,wall_seconds")?;
        let obs = Self {
            dir: dir.to_path_buf(),
            manifest,
            curve,
            log,
        };
        obs.write_manifest()?;
        Ok(obs)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<(), IoError> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(io(&path))
    }

    fn write_manifest(&self) -> Result<(), IoError> {
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes") + "\n";
        self.write_text("manifest.json", &text)
    }

    pub fn flush(&mut self) -> Result<(), IoError> {
        let dir = self.dir.clone();
        self.curve.flush().map_err(io(&dir))?;
        self.log.flush().map_err(io(&dir))
    }
}

impl Observer for DirectoryObserver {
    fn snapshot(&mut self, s: &Snapshot) -> Result<(), SimulationError> {
        let file = format!("snapshots/snapshot_{:06}.vtk", self.manifest.snapshots.len());
        write_snapshot(s, &self.dir.join(&file))?;
        self.manifest.snapshots.push(SnapshotEntry {
            file,
            step: s.step,
            time: s.time,
        });
        self.flush()?;
        self.write_manifest()?;
        Ok(())
    }

    fn curve(&mut self, c: CurveSample) -> Result<(), SimulationError> {
        writeln!(self.curve, "{:.10e},{:.10e},{:.10e}", c.time, c.displacement, c.reaction)
            .map_err(io(&self.dir.join("loading_curve.csv")))?;
        Ok(())
    }

    fn log(&mut self, e: LogEntry) -> Result<(), SimulationError> {
        let phase = match e.phase {
            crate::dynamics::Phase::Relaxation => "relaxation",
            crate::dynamics::Phase::Loading => "loading",
        };
        writeln!(
            self.log,
            "{phase},{},{:.10e},{:.10e},{:.10e},{:.3}",
            e.step, e.time, e.kinetic_energy, e.max_eps_ps, e.wall_seconds
        )
        .map_err(io(&self.dir.join("run_log.csv")))?;
        Ok(())
    }

    fn checkpoint(&mut self, c: &Checkpoint) -> Result<(), SimulationError> {
        let file = format!("checkpoints/checkpoint_{:08}.bin", c.step);
        write_checkpoint(c, &self.dir.join(&file))?;
        self.manifest.checkpoints.push(SnapshotEntry {
            file,
            step: c.step,
            time: c.time,
        });
        self.write_manifest()?;
        Ok(())
    }

    fn dump(&mut self, c: &Checkpoint) -> Option<PathBuf> {
        let path = self.dir.join("dump.bin");
        write_checkpoint(c, &path).ok().map(|_| path)
    }
}

/// Keeps every product in memory.
#[derive(Debug, Default)]
pub struct MemoryObserver {
    pub snapshots: Vec<Snapshot>,
    pub curve: Vec<CurveSample>,
    pub log: Vec<LogEntry>,
    pub checkpoints: Vec<Checkpoint>,
    pub dumps: Vec<Checkpoint>,
}

impl Observer for MemoryObserver {
    fn snapshot(&mut self, s: &Snapshot) -> Result<(), SimulationError> {
        self.snapshots.push(s.clone());
        Ok(())
    }
    fn curve(&mut self, c: CurveSample) -> Result<(), SimulationError> {
        self.curve.push(c);
        Ok(())
    }
    fn log(&mut self, e: LogEntry) -> Result<(), SimulationError> {
        self.log.push(e);
        Ok(())
    }
    fn checkpoint(&mut self, c: &Checkpoint) -> Result<(), SimulationError> {
        self.checkpoints.push(c.clone());
        Ok(())
    }
    fn dump(&mut self, c: &Checkpoint) -> Option<PathBuf> {
        self.dumps.push(c.clone());
        None
    }
}

/// Reads `time,displacement,reaction` rows.
pub fn read_curve(path: &Path) -> Result<Vec<CurveSample>, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::new(format!("reading {}", path.display()), e))?;
    let bad = |l: &str| {
        IoError::new(
            format!("reading {}", path.display()),
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("bad row {l:?}")),
        )
    };
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|x| x.trim().parse()).collect::<Result<_, _>>().map_err(|_| bad(l))?;
            match v[..] {
                [time, displacement, reaction] => Ok(CurveSample {
                    time,
                    displacement,
                    reaction,
                }),
                _ => Err(bad(l)),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_directory_layout() {
        let tmp = tempfile::tempdir().unwrap();
        let manifest = Manifest {
            scenario: "t".into(),
            points: 1,
            spacing: 1.0,
            bounds: [[0.0, 0.0], [1.0, 1.0]],
            crest: [1.0, 1.0],
            snapshots: vec![],
            checkpoints: vec![],
            loading_curve: String::new(),
            run_log: String::new(),
            resumed_from: None,
        };
        let mut obs = DirectoryObserver::create(tmp.path(), manifest).unwrap();
        let snap = Snapshot {
            time: 0.0,
            step: 0,
            reference: vec![[0.5, 0.5]],
            displacement: vec![[0.0, 0.0]],
            eps_ps: vec![0.0],
            eps_pv: vec![0.0],
            w2: vec![0.0],
            mean_stress: vec![0.0],
            q: vec![0.0],
            cohesion: vec![1.0],
        };
        obs.snapshot(&snap).unwrap();
        obs.curve(CurveSample {
            time: 0.0,
            displacement: 0.0,
            reaction: 2.5,
        })
        .unwrap();
        obs.flush().unwrap();
        let m = Manifest::read(tmp.path()).unwrap();
        assert_eq!(m.snapshots.len(), 1);
        assert!(tmp.path().join(&m.snapshots[0].file).exists());
        let curve = read_curve(&tmp.path().join("loading_curve.csv")).unwrap();
        assert_eq!(curve[0].reaction, 2.5);
    }
}
