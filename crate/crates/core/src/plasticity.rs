//! Finite-strain Drucker–Prager stress-point kernel.
//!
//! Elasticity is Hencky (logarithmic) in the principal elastic stretches, so
//! the return mapping is carried out on the principal logarithmic strains of
//! the elastic left Cauchy–Green tensor (exponential-map return). The yield
//! surface is `ℱ = q + α₁p̄ − α₂c` and the non-associated potential is
//! `𝒢 = q + α₃p̄ − α₄c` with a piecewise-linear cohesion law
//! `c = max(c₀ + hζ, c_r)`.

use serde::{Deserialize, Serialize};

use crate::error::{KinematicsError, PlasticityError};
use crate::tensor::{deviator, from_spectral, symmetric_spectral, Mat3};

const SQRT_3_2: f64 = 1.224_744_871_391_589;

/// Isotropic elastic moduli.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticModuli {
    pub bulk: f64,
    pub shear: f64,
}

impl ElasticModuli {
    pub fn new(bulk: f64, shear: f64) -> Result<Self, PlasticityError> {
        if !(bulk > 0.0 && shear > 0.0 && bulk.is_finite() && shear.is_finite()) {
            return Err(PlasticityError::InvalidParameters(format!(
                "bulk ({bulk}) and shear ({shear}) moduli must be positive"
            )));
        }
        Ok(Self { bulk, shear })
    }

    pub fn from_young_poisson(young: f64, poisson: f64) -> Result<Self, PlasticityError> {
        if !(young > 0.0 && poisson > -1.0 && poisson < 0.5) {
            return Err(PlasticityError::InvalidParameters(format!(
                "need E > 0 and -1 < ν < 0.5, got E = {young}, ν = {poisson}"
            )));
        }
        Self::new(
            young / (3.0 * (1.0 - 2.0 * poisson)),
            young / (2.0 * (1.0 + poisson)),
        )
    }

    /// First Lamé constant `λ = K − 2G/3`.
    pub fn lambda(&self) -> f64 {
        self.bulk - 2.0 * self.shear / 3.0
    }

    pub fn young(&self) -> f64 {
        9.0 * self.bulk * self.shear / (3.0 * self.bulk + self.shear)
    }

    pub fn poisson(&self) -> f64 {
        (3.0 * self.bulk - 2.0 * self.shear) / (2.0 * (3.0 * self.bulk + self.shear))
    }

    /// P-wave modulus `K + 4G/3`.
    pub fn p_wave(&self) -> f64 {
        self.bulk + 4.0 * self.shear / 3.0
    }
}

/// How the cone constants are matched to Mohr–Coulomb.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConeFit {
    /// Outer cone through the triaxial-compression meridian.
    #[default]
    Compression,
    /// Plane-strain collapse match.
    PlaneStrain,
}

/// `(α₁, α₂, α₃, α₄)` from the friction and dilatancy angles (degrees) with
/// the compression-cone fit.
pub fn alpha_coefficients(friction_deg: f64, dilatancy_deg: f64) -> [f64; 4] {
    alpha_coefficients_with(ConeFit::Compression, friction_deg, dilatancy_deg)
}

pub fn alpha_coefficients_with(fit: ConeFit, friction_deg: f64, dilatancy_deg: f64) -> [f64; 4] {
    let pair = |angle_deg: f64| -> (f64, f64) {
        let a = angle_deg.to_radians();
        match fit {
            ConeFit::Compression => {
                let (s, c) = a.sin_cos();
                (6.0 * s / (3.0 - s), 6.0 * c / (3.0 - s))
            }
            ConeFit::PlaneStrain => {
                let t = a.tan();
                let root = (9.0 + 12.0 * t * t).sqrt();
                let k = 3f64.sqrt();
                (k * 3.0 * t / root, k * 3.0 / root)
            }
        }
    };
    let (a1, a2) = pair(friction_deg);
    let (a3, a4) = pair(dilatancy_deg);
    [a1, a2, a3, a4]
}

/// Drucker–Prager parameters with cohesion softening.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DruckerPrager {
    pub c0: f64,
    pub c_r: f64,
    /// Hardening (h > 0) or softening (h < 0) modulus.
    pub h: f64,
    pub friction_angle: f64,
    pub dilatancy_angle: f64,
    pub alpha: [f64; 4],
}

impl DruckerPrager {
    pub fn new(
        c0: f64,
        c_r: f64,
        h: f64,
        friction_angle: f64,
        dilatancy_angle: f64,
        fit: ConeFit,
    ) -> Result<Self, PlasticityError> {
        let mut problems = Vec::new();
        if !(c0 > 0.0) {
            problems.push(format!("initial cohesion must be positive, got {c0}"));
        }
        if !(c_r >= 0.0 && c_r <= c0) {
            problems.push(format!("residual cohesion must lie in [0, c0], got {c_r}"));
        }
        if !(0.0..=50.0).contains(&friction_angle) {
            problems.push(format!("friction angle must be in [0°, 50°], got {friction_angle}"));
        }
        if !(dilatancy_angle >= 0.0 && dilatancy_angle <= friction_angle) {
            problems.push(format!(
                "dilatancy angle must be in [0°, friction angle], got {dilatancy_angle}"
            ));
        }
        if !h.is_finite() {
            problems.push("hardening modulus must be finite".into());
        }
        if !problems.is_empty() {
            return Err(PlasticityError::InvalidParameters(problems.join("; ")));
        }
        Ok(Self {
            c0,
            c_r,
            h,
            friction_angle,
            dilatancy_angle,
            alpha: alpha_coefficients_with(fit, friction_angle, dilatancy_angle),
        })
    }

    /// `c = max(c₀ + hζ, c_r)`; hardening (h ≥ 0) is unbounded above.
    pub fn harden(&self, zeta: f64) -> f64 {
        let c = self.c0 + self.h * zeta;
        if self.h < 0.0 {
            c.max(self.c_r)
        } else {
            c
        }
    }

    /// Hardening variable at which the softening law meets the floor.
    fn floor_zeta(&self) -> f64 {
        if self.h < 0.0 {
            (self.c_r - self.c0) / self.h
        } else {
            f64::INFINITY
        }
    }

    pub fn yield_value(&self, tau: &Mat3, cohesion: f64) -> f64 {
        yield_value(tau, cohesion, self.alpha[0], self.alpha[1])
    }
}

/// Mean stress `p̄ = tr τ / 3` and `q = √(3/2)‖s‖`.
pub fn invariants(tau: &Mat3) -> (f64, f64) {
    let p = tau.trace() / 3.0;
    let s = deviator(tau);
    (p, SQRT_3_2 * s.norm())
}

/// `ℱ = q + α₁p̄ − α₂c`.
pub fn yield_value(tau: &Mat3, cohesion: f64, alpha1: f64, alpha2: f64) -> f64 {
    let (p, q) = invariants(tau);
    q + alpha1 * p - alpha2 * cohesion
}

/// Stress measures of one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StressState {
    pub tau: Mat3,
    pub tau_corot: Mat3,
    pub s: Mat3,
    pub p_bar: f64,
    pub q: f64,
    pub pbar: Mat3,
}

impl StressState {
    pub fn new(point: usize, tau: Mat3, r: &Mat3, f: &Mat3) -> Result<Self, KinematicsError> {
        let (tau_corot, pbar) = corotate_and_piola(point, &tau, r, f)?;
        let p_bar = tau_corot.trace() / 3.0;
        let s = tau_corot - Mat3::identity() * p_bar;
        Ok(Self {
            tau,
            tau_corot,
            s,
            p_bar,
            q: SQRT_3_2 * s.norm(),
            pbar,
        })
    }
}

/// Internal variables of one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlasticState {
    pub zeta: f64,
    pub c_current: f64,
    pub dgamma: f64,
    pub eps_ps: f64,
    pub eps_pv: f64,
}

impl PlasticState {
    pub fn virgin(params: &DruckerPrager) -> Self {
        Self {
            zeta: 0.0,
            c_current: params.c0,
            dgamma: 0.0,
            eps_ps: 0.0,
            eps_pv: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Elastic,
    Cone,
    Apex,
}

/// Outcome of one stress-point update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnMapping {
    /// Kirchhoff stress, coaxial with `be`.
    pub tau: Mat3,
    pub be: Mat3,
    pub zeta: f64,
    pub cohesion: f64,
    pub dgamma: f64,
    /// Principal plastic flow direction; the principal logarithmic plastic
    /// strain increment is `dgamma · flow`.
    pub flow: [f64; 3],
    pub regime: Regime,
}

/// Yield tolerance scaled by the moduli.
pub fn yield_tolerance(moduli: &ElasticModuli) -> f64 {
    1e-8 * (moduli.shear + moduli.bulk)
}

/// Hencky Kirchhoff stress `τ = λ tr(εᵉ) 1 + 2G εᵉ` with `εᵉ = ½ ln be`.
pub fn kirchhoff_from_be(be: &Mat3, moduli: &ElasticModuli) -> Result<Mat3, PlasticityError> {
    let (b, vecs) = symmetric_spectral(be);
    if b.iter().any(|&x| !(x > 0.0)) {
        return Err(PlasticityError::NotPositiveDefinite);
    }
    let eps = b.map(|x| 0.5 * x.ln());
    Ok(from_spectral(principal_stress(&eps, moduli), &vecs))
}

/// Inverse of the Hencky law: the elastic `be` that carries Kirchhoff
/// stress `tau`.
pub fn be_from_kirchhoff(tau: &Mat3, moduli: &ElasticModuli) -> Mat3 {
    let (t, vecs) = symmetric_spectral(tau);
    let tr_eps = (t[0] + t[1] + t[2]) / (3.0 * moduli.bulk);
    let lambda = moduli.lambda();
    let b = t.map(|ta| (2.0 * (ta - lambda * tr_eps) / (2.0 * moduli.shear)).exp());
    from_spectral(b, &vecs)
}

#[inline]
fn principal_stress(eps: &[f64; 3], moduli: &ElasticModuli) -> [f64; 3] {
    let lt = moduli.lambda() * (eps[0] + eps[1] + eps[2]);
    let g2 = 2.0 * moduli.shear;
    [lt + g2 * eps[0], lt + g2 * eps[1], lt + g2 * eps[2]]
}

/// Elastic predictor / plastic corrector on `beᵗʳ`.
pub fn return_map(
    be_trial: &Mat3,
    zeta_n: f64,
    moduli: &ElasticModuli,
    params: &DruckerPrager,
) -> Result<ReturnMapping, PlasticityError> {
    let (b, vecs) = symmetric_spectral(be_trial);
    if b.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(PlasticityError::NotPositiveDefinite);
    }
    let eps_tr = b.map(|x| 0.5 * x.ln());
    let (k, g) = (moduli.bulk, moduli.shear);
    let [a1, a2, a3, a4] = params.alpha;

    let tr = eps_tr[0] + eps_tr[1] + eps_tr[2];
    let dev = eps_tr.map(|e| e - tr / 3.0);
    let dev_norm = (dev[0] * dev[0] + dev[1] * dev[1] + dev[2] * dev[2]).sqrt();
    let p_tr = k * tr;
    let q_tr = SQRT_3_2 * 2.0 * g * dev_norm;
    let c_n = params.harden(zeta_n);
    let f_tr = q_tr + a1 * p_tr - a2 * c_n;

    if f_tr <= yield_tolerance(moduli) {
        return Ok(ReturnMapping {
            tau: from_spectral(principal_stress(&eps_tr, moduli), &vecs),
            be: *be_trial,
            zeta: zeta_n,
            cohesion: c_n,
            dgamma: 0.0,
            flow: [0.0; 3],
            regime: Regime::Elastic,
        });
    }

    let floor = params.floor_zeta();
    let cone = if dev_norm > 0.0 {
        // F(Δγ) = F_tr − (3G + Kα₁α₃)Δγ − α₂(c(ζₙ + α₄Δγ) − cₙ)
        let stiff = 3.0 * g + k * a1 * a3;
        let dgamma = if zeta_n >= floor {
            f_tr / stiff
        } else {
            let denom = stiff + params.h * a2 * a4;
            if !(denom > 0.0) {
                return Err(PlasticityError::NoConvergence(format!(
                    "softening too steep for a unique return (3G + Kα₁α₃ + hα₂α₄ = {denom:e})"
                )));
            }
            let linear = f_tr / denom;
            if zeta_n + a4 * linear > floor {
                (f_tr - a2 * (params.c_r - c_n)) / stiff
            } else {
                linear
            }
        };
        Some(dgamma).filter(|dg| q_tr - 3.0 * g * dg >= 0.0)
    } else {
        None
    };

    if let Some(dgamma) = cone {
        let zeta = zeta_n + a4 * dgamma;
        let unit = dev.map(|d| d / dev_norm);
        let flow = [
            SQRT_3_2 * unit[0] + a3 / 3.0,
            SQRT_3_2 * unit[1] + a3 / 3.0,
            SQRT_3_2 * unit[2] + a3 / 3.0,
        ];
        let eps = [
            eps_tr[0] - dgamma * flow[0],
            eps_tr[1] - dgamma * flow[1],
            eps_tr[2] - dgamma * flow[2],
        ];
        return Ok(finish(eps, &vecs, moduli, params, zeta, dgamma, flow, Regime::Cone));
    }

    // apex: q = 0, p̄ = α₂c/α₁
    if a1 <= 0.0 {
        return Err(PlasticityError::DegenerateApex(
            "cone return overshoots but the yield surface has no apex (α₁ = 0)".into(),
        ));
    }
    if a3 <= 0.0 {
        return Err(PlasticityError::DegenerateApex(format!(
            "trial state beyond the apex (p̄ = {p_tr:e}) with a non-dilatant potential (α₃ = 0)"
        )));
    }
    let ratio = a2 / a1;
    let dgamma = if zeta_n >= floor {
        (p_tr - ratio * c_n) / (k * a3)
    } else {
        let denom = k * a3 + ratio * params.h * a4;
        if !(denom > 0.0) {
            return Err(PlasticityError::NoConvergence(format!(
                "softening too steep for the apex return (Kα₃ + α₂hα₄/α₁ = {denom:e})"
            )));
        }
        let linear = (p_tr - ratio * c_n) / denom;
        if zeta_n + a4 * linear > floor {
            (p_tr - ratio * params.c_r) / (k * a3)
        } else {
            linear
        }
    };
    if !(dgamma >= 0.0) {
        return Err(PlasticityError::DegenerateApex(format!(
            "negative apex multiplier {dgamma:e}"
        )));
    }
    let zeta = zeta_n + a4 * dgamma;
    let tr_new = tr - a3 * dgamma;
    let eps = [tr_new / 3.0; 3];
    let flow = if dgamma > 0.0 {
        [
            (eps_tr[0] - eps[0]) / dgamma,
            (eps_tr[1] - eps[1]) / dgamma,
            (eps_tr[2] - eps[2]) / dgamma,
        ]
    } else {
        [0.0; 3]
    };
    Ok(finish(eps, &vecs, moduli, params, zeta, dgamma, flow, Regime::Apex))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    eps: [f64; 3],
    vecs: &Mat3,
    moduli: &ElasticModuli,
    params: &DruckerPrager,
    zeta: f64,
    dgamma: f64,
    flow: [f64; 3],
    regime: Regime,
) -> ReturnMapping {
    ReturnMapping {
        tau: from_spectral(principal_stress(&eps, moduli), vecs),
        be: from_spectral(eps.map(|e| (2.0 * e).exp()), vecs),
        zeta,
        cohesion: params.harden(zeta),
        dgamma,
        flow,
        regime,
    }
}

/// `τ̄ = Rᵀ τ R` and the first Piola stress `P̄ = τ F⁻ᵀ`.
pub fn corotate_and_piola(point: usize, tau: &Mat3, r: &Mat3, f: &Mat3) -> Result<(Mat3, Mat3), KinematicsError> {
    let det = f.determinant();
    let f_inv = f
        .try_inverse()
        .filter(|_| det > 0.0)
        .ok_or(KinematicsError::Inversion { point, det })?;
    Ok((r.transpose() * tau * r, tau * f_inv.transpose()))
}

/// `∂𝒢/∂τ = √(3/2) s/‖s‖ + (α₃/3) 1` evaluated at `tau` (deviatoric part
/// dropped at the apex).
pub fn potential_gradient(tau: &Mat3, alpha3: f64) -> Mat3 {
    let s = deviator(tau);
    let n = s.norm();
    let dev = if n > 0.0 { s * (SQRT_3_2 / n) } else { Mat3::zeros() };
    dev + Mat3::identity() * (alpha3 / 3.0)
}
