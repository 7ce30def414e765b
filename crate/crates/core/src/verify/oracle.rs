//! Reference stress update by explicit sub-stepping of the plastic flow
//! rule, used to check the closed-form return mapping.
//!
//! The flow `dε/dΓ = −∂𝒢/∂τ` is integrated with forward Euler in principal
//! logarithmic strain space, and the total multiplier `Γ` is found by
//! bisection on the end-of-path yield value.

use nalgebra::SymmetricEigen;

use crate::plasticity::{DruckerPrager, ElasticModuli};
use crate::tensor::Mat3;

/// `(p̄, q, ζ)` after the update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleState {
    pub p: f64,
    pub q: f64,
    pub zeta: f64,
    pub multiplier: f64,
}

fn cohesion(dp: &DruckerPrager, zeta: f64) -> f64 {
    let c = dp.c0 + dp.h * zeta;
    if dp.h < 0.0 && c < dp.c_r {
        dp.c_r
    } else {
        c
    }
}

fn stress_invariants(eps: &[f64; 3], m: &ElasticModuli) -> (f64, f64) {
    let tr = eps[0] + eps[1] + eps[2];
    let dev = eps.map(|e| e - tr / 3.0);
    let norm = (dev[0] * dev[0] + dev[1] * dev[1] + dev[2] * dev[2]).sqrt();
    (m.bulk * tr, 1.5f64.sqrt() * 2.0 * m.shear * norm)
}

/// Integrates `substeps` forward-Euler steps of total length `gamma`.
fn integrate(eps0: &[f64; 3], zeta0: f64, gamma: f64, substeps: usize, dp: &DruckerPrager) -> ([f64; 3], f64) {
    let [_, _, a3, a4] = dp.alpha;
    let d = gamma / substeps as f64;
    let mut eps = *eps0;
    let mut zeta = zeta0;
    for _ in 0..substeps {
        let tr = eps[0] + eps[1] + eps[2];
        let mut dev = eps.map(|e| e - tr / 3.0);
        let norm = (dev[0] * dev[0] + dev[1] * dev[1] + dev[2] * dev[2]).sqrt();
        // the deviatoric flow √(3/2) n̂ shrinks ‖dev ε‖ at rate √(3/2)
        let shrink = 1.5f64.sqrt() * d;
        if norm > shrink {
            let s = 1.0 - shrink / norm;
            dev = dev.map(|x| x * s);
        } else {
            dev = [0.0; 3];
        }
        let tr_new = tr - a3 * d;
        eps = dev.map(|x| x + tr_new / 3.0);
        zeta += a4 * d;
    }
    (eps, zeta)
}

/// Oracle update of a trial `bᵉ` (any symmetric positive-definite 3×3).
pub fn substep_return(
    be_trial: &Mat3,
    zeta_n: f64,
    moduli: &ElasticModuli,
    dp: &DruckerPrager,
    substeps: usize,
) -> OracleState {
    let eig = SymmetricEigen::new(*be_trial);
    let eps0 = [0, 1, 2].map(|k| 0.5 * eig.eigenvalues[k].ln());
    let [a1, a2, ..] = dp.alpha;
    let yield_at = |gamma: f64| {
        let (eps, zeta) = integrate(&eps0, zeta_n, gamma, substeps, dp);
        let (p, q) = stress_invariants(&eps, moduli);
        (q + a1 * p - a2 * cohesion(dp, zeta), p, q, zeta)
    };
    let (f0, p0, q0, _) = yield_at(0.0);
    let tol = 1e-8 * (moduli.bulk + moduli.shear);
    if f0 <= tol {
        return OracleState {
            p: p0,
            q: q0,
            zeta: zeta_n,
            multiplier: 0.0,
        };
    }
    let mut hi = f0 / (3.0 * moduli.shear + moduli.bulk * a1 * dp.alpha[2]).max(1e-300);
    while yield_at(hi).0 > 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if yield_at(mid).0 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let gamma = 0.5 * (lo + hi);
    let (_, p, q, zeta) = yield_at(gamma);
    OracleState {
        p,
        q,
        zeta,
        multiplier: gamma,
    }
}
