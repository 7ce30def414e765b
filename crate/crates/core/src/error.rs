use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("lattice spacing must be positive and finite, got {0}")]
    InvalidSpacing(f64),
    #[error("empty region: {0}")]
    EmptyRegion(String),
    #[error("horizon {horizon} is smaller than the lattice spacing {spacing}")]
    InvalidHorizon { horizon: f64, spacing: f64 },
    #[error("singular shape tensor: {0}")]
    SingularShape(String),
    #[error("point {point} has a degenerate family ({count} degenerate points in total)")]
    DegenerateShape { point: usize, count: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("point {point}: deformation gradient not invertible (det F = {det:e})")]
    Inversion { point: usize, det: f64 },
    #[error("point {point}: tensor lost positive definiteness ({what})")]
    NotPositiveDefinite { point: usize, what: &'static str },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlasticityError {
    #[error("invalid material parameters: {0}")]
    InvalidParameters(String),
    #[error("elastic left Cauchy-Green trial tensor is not positive definite")]
    NotPositiveDefinite,
    #[error("apex return undefined: {0}")]
    DegenerateApex(String),
    #[error("return mapping failed: {0}")]
    NoConvergence(String),
}

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("step {step} (t = {time:.6} s): {source}")]
    Kinematics {
        step: u64,
        time: f64,
        #[source]
        source: KinematicsError,
    },
    #[error("step {step} (t = {time:.6} s), point {point}: {source}")]
    Plasticity {
        step: u64,
        time: f64,
        point: usize,
        #[source]
        source: PlasticityError,
    },
    #[error("step {step} (t = {time:.6} s): non-finite state at point {point}; last good state dumped to {dump:?}")]
    NonFinite {
        step: u64,
        time: f64,
        point: usize,
        dump: Option<PathBuf>,
    },
    #[error("gravity relaxation did not converge in {steps} steps (kinetic energy ratio {ratio:e})")]
    Relaxation { steps: u64, ratio: f64, trace: Vec<f64> },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Error)]
#[error("{context}: {source}")]
pub struct IoError {
    pub context: String,
    #[source]
    pub source: std::io::Error,
}

impl IoError {
    pub fn new(context: impl Into<String>, source: std::io::Error) -> Self {
        Self {
            context: context.into(),
            source,
        }
    }
}

/// One problem found while validating a scenario file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    /// Dotted field path, e.g. `material.cohesion`.
    pub field: String,
    /// 1-based line in the source text when known.
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

/// All issues found in a scenario file (validation is not fail-fast).
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{} scenario error(s):\n{}", .0.len(), .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
pub struct ConfigErrors(pub Vec<ConfigIssue>);
