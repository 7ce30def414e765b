//! Explicit Newmark time stepping (β = 0, γ = ½) on lumped point masses.

use crate::lattice::Vec2;

pub const NEWMARK_BETA: f64 = 0.0;
pub const NEWMARK_GAMMA: f64 = 0.5;

/// Displacement, velocity and acceleration of every point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NewmarkState {
    pub u: Vec<Vec2>,
    pub v: Vec<Vec2>,
    pub a: Vec<Vec2>,
}

impl NewmarkState {
    pub fn zeros(n: usize) -> Self {
        Self {
            u: vec![Vec2::zeros(); n],
            v: vec![Vec2::zeros(); n],
            a: vec![Vec2::zeros(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn kinetic_energy(&self, masses: &[f64]) -> f64 {
        self.v
            .iter()
            .zip(masses)
            .map(|(v, m)| 0.5 * m * v.norm_squared())
            .sum()
    }
}

/// Displacement predictor `u ← u + Δt v + ½Δt² a`.
pub fn predict(state: &mut NewmarkState, dt: f64) {
    let half_dt2 = 0.5 * dt * dt * (1.0 - 2.0 * NEWMARK_BETA);
    for ((u, v), a) in state.u.iter_mut().zip(&state.v).zip(&state.a) {
        *u += dt * v + half_dt2 * a;
    }
}

/// Mid-step velocity `v + Δt(1 − γ) a`, used for rate terms and damping.
pub fn predicted_velocity(state: &NewmarkState, dt: f64) -> Vec<Vec2> {
    state
        .v
        .iter()
        .zip(&state.a)
        .map(|(v, a)| v + dt * (1.0 - NEWMARK_GAMMA) * a)
        .collect()
}

/// Velocity corrector `v ← v + Δt[(1 − γ) aₙ + γ aₙ₊₁]`, then `a ← aₙ₊₁`.
pub fn correct(state: &mut NewmarkState, a_new: &[Vec2], dt: f64) {
    for ((v, a), an) in state.v.iter_mut().zip(&state.a).zip(a_new) {
        *v += dt * ((1.0 - NEWMARK_GAMMA) * a + NEWMARK_GAMMA * an);
    }
    state.a.copy_from_slice(a_new);
}

/// One full step for a force law given as accelerations of the predicted
/// displacements. Rejects non-finite accelerations.
pub fn newmark_step<E>(
    state: &mut NewmarkState,
    dt: f64,
    accelerations: impl FnOnce(&[Vec2]) -> Result<Vec<Vec2>, E>,
) -> Result<(), NewmarkError<E>> {
    predict(state, dt);
    let a_new = accelerations(&state.u).map_err(NewmarkError::Force)?;
    if let Some(point) = a_new.iter().position(|a| !(a.x.is_finite() && a.y.is_finite())) {
        return Err(NewmarkError::NonFinite { point });
    }
    correct(state, &a_new, dt);
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum NewmarkError<E> {
    Force(E),
    NonFinite { point: usize },
}

/// Longitudinal wave-speed limit `Δx / √(M/ρ)` with `M = K + 4G/3`.
pub fn critical_time_step(spacing: f64, p_wave_modulus: f64, density: f64) -> f64 {
    spacing / (p_wave_modulus / density).sqrt()
}
