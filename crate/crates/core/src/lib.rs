//! Nonlocal correspondence simulator for large-deformation elastoplastic
//! failure of dry porous geomaterials.
// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod kinematics;
pub mod lattice;
pub mod plasticity;
pub mod scenario_io;
pub mod tensor;
pub mod verify;
