//! Nonlocal deformation and velocity gradients, polar decomposition and the
//! elastic left Cauchy–Green predictor.
//!
//! All in-plane reconstruction is done on the 2×2 block; tensors are then
//! embedded into 3×3 plane-strain form (`F₃₃ = 1`, no out-of-plane shear).

use crate::error::KinematicsError;
use crate::lattice::{Family, Mat2, Vec2};
use crate::tensor::{eigen_sym2, embed, Mat3};

/// Per-bond displacement, deformation and velocity states.
#[derive(Debug, Clone, Default)]
pub struct StateVectors {
    /// `U = u′ − u`
    pub displacement: Vec<Vec2>,
    /// `Y = y′ − y = ξ + U`
    pub deformation: Vec<Vec2>,
    /// `U̇ = v′ − v`
    pub velocity: Vec<Vec2>,
}

/// Per-point kinematic quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicState {
    pub f: Mat3,
    pub f_dot: Mat3,
    pub l: Mat3,
    pub d: Mat3,
    pub r: Mat3,
    pub v_stretch: Mat3,
    pub b: Mat3,
    pub be: Mat3,
    pub jdet: f64,
}

impl Default for KinematicState {
    fn default() -> Self {
        let i = Mat3::identity();
        Self {
            f: i,
            f_dot: Mat3::zeros(),
            l: Mat3::zeros(),
            d: Mat3::zeros(),
            r: i,
            v_stretch: i,
            b: i,
            be: i,
            jdet: 1.0,
        }
    }
}

impl KinematicState {
    /// Derives `L`, `d`, `R`, `V`, `b` and `det F` from `F` and `Ḟ`; `be` is
    /// carried over from the plastic state.
    pub fn from_gradients(point: usize, f: Mat3, f_dot: Mat3, be: Mat3) -> Result<Self, KinematicsError> {
        let jdet = f.determinant();
        if !(jdet > 0.0) {
            return Err(KinematicsError::Inversion { point, det: jdet });
        }
        let l = velocity_gradient(point, &f_dot, &f)?;
        let (r, v_stretch) = polar_rotation(point, &f)?;
        Ok(Self {
            f,
            f_dot,
            l,
            d: rate_of_deformation(&l),
            r,
            v_stretch,
            b: f * f.transpose(),
            be,
            jdet,
        })
    }
}

pub fn deformation_states(family: &Family, displacements: &[Vec2], velocities: &[Vec2]) -> StateVectors {
    let nb = family.neighbors.len();
    let mut out = StateVectors {
        displacement: Vec::with_capacity(nb),
        deformation: Vec::with_capacity(nb),
        velocity: Vec::with_capacity(nb),
    };
    for i in 0..family.len() {
        for b in family.range(i) {
            let j = family.neighbors[b] as usize;
            let u = displacements[j] - displacements[i];
            out.displacement.push(u);
            out.deformation.push(family.bonds[b] + u);
            out.velocity.push(velocities[j] - velocities[i]);
        }
    }
    out
}

/// `Σ w (s ⊗ ξ) 𝒦⁻¹` over the family of `i`, where `s` is any per-bond state.
#[inline]
fn reconstruct(family: &Family, i: usize, state: impl Fn(usize) -> Vec2) -> Mat2 {
    let mut m = Mat2::zeros();
    for b in family.range(i) {
        let s = state(b);
        let xi = family.bonds[b];
        let w = family.weights[b];
        m[(0, 0)] += w * s.x * xi.x;
        m[(0, 1)] += w * s.x * xi.y;
        m[(1, 0)] += w * s.y * xi.x;
        m[(1, 1)] += w * s.y * xi.y;
    }
    m * family.shape_inv[i]
}

/// In-plane nonlocal deformation gradient of point `i` straight from the
/// displacement field (the fused form used in the time loop).
#[inline]
pub fn deformation_gradient_at(family: &Family, i: usize, displacements: &[Vec2]) -> Mat2 {
    let ui = displacements[i];
    reconstruct(family, i, |b| {
        family.bonds[b] + displacements[family.neighbors[b] as usize] - ui
    })
}

/// In-plane nonlocal `Ḟ` of point `i` from the velocity field.
#[inline]
pub fn deformation_rate_at(family: &Family, i: usize, velocities: &[Vec2]) -> Mat2 {
    let vi = velocities[i];
    reconstruct(family, i, |b| velocities[family.neighbors[b] as usize] - vi)
}

/// `F = (Σ ω (Y ⊗ ξ) V) 𝒦⁻¹` for every point, embedded with `F₃₃ = 1`.
pub fn nonlocal_f(family: &Family, states: &StateVectors) -> Result<Vec<Mat3>, KinematicsError> {
    (0..family.len())
        .map(|i| {
            let f = embed(&reconstruct(family, i, |b| states.deformation[b]), 1.0);
            let det = f.determinant();
            if det > 0.0 {
                Ok(f)
            } else {
                Err(KinematicsError::Inversion { point: i, det })
            }
        })
        .collect()
}

/// `Ḟ = (Σ ω (U̇ ⊗ ξ) V) 𝒦⁻¹` for every point.
pub fn nonlocal_fdot(family: &Family, states: &StateVectors) -> Vec<Mat3> {
    (0..family.len())
        .map(|i| embed(&reconstruct(family, i, |b| states.velocity[b]), 0.0))
        .collect()
}

/// `L = Ḟ F⁻¹`.
pub fn velocity_gradient(point: usize, f_dot: &Mat3, f: &Mat3) -> Result<Mat3, KinematicsError> {
    let det = f.determinant();
    let inv = f
        .try_inverse()
        .filter(|_| det > 0.0)
        .ok_or(KinematicsError::Inversion { point, det })?;
    Ok(f_dot * inv)
}

/// `d = sym(L)`.
pub fn rate_of_deformation(l: &Mat3) -> Mat3 {
    0.5 * (l + l.transpose())
}

/// Left polar decomposition `F = V R`: `V = √(F Fᵀ)` from the closed-form
/// eigensolve of the in-plane block, `R = V⁻¹ F`.
pub fn polar_rotation(point: usize, f: &Mat3) -> Result<(Mat3, Mat3), KinematicsError> {
    let det = f.determinant();
    if !(det > 0.0) {
        return Err(KinematicsError::Inversion { point, det });
    }
    let b = f * f.transpose();
    let (l1, l2, c, s) = eigen_sym2(b[(0, 0)], 0.5 * (b[(0, 1)] + b[(1, 0)]), b[(1, 1)]);
    if !(l1 > 0.0 && l2 > 0.0 && b[(2, 2)] > 0.0) {
        return Err(KinematicsError::NotPositiveDefinite { point, what: "b = F Fᵀ" });
    }
    let (s1, s2) = (l1.sqrt(), l2.sqrt());
    let v = Mat2::new(
        s1 * c * c + s2 * s * s,
        (s1 - s2) * c * s,
        (s1 - s2) * c * s,
        s1 * s * s + s2 * c * c,
    );
    let v_inv = Mat2::new(
        c * c / s1 + s * s / s2,
        (1.0 / s1 - 1.0 / s2) * c * s,
        (1.0 / s1 - 1.0 / s2) * c * s,
        s * s / s1 + c * c / s2,
    );
    let szz = b[(2, 2)].sqrt();
    let v3 = embed(&v, szz);
    let v3_inv = embed(&v_inv, 1.0 / szz);
    Ok((v3_inv * f, v3))
}

/// Elastic predictor `beᵗʳ = f beₙ fᵀ` with the relative gradient
/// `f = Fₙ₊₁ Fₙ⁻¹`.
pub fn trial_elastic_be(point: usize, be_n: &Mat3, f_rel: &Mat3) -> Result<Mat3, KinematicsError> {
    let det = f_rel.determinant();
    if !(det > 0.0) {
        return Err(KinematicsError::Inversion { point, det });
    }
    let be = f_rel * be_n * f_rel.transpose();
    if !is_spd_plane(&be) {
        return Err(KinematicsError::NotPositiveDefinite { point, what: "trial be" });
    }
    Ok(be)
}

/// Relative deformation gradient between two configurations.
pub fn relative_gradient(point: usize, f_new: &Mat3, f_old: &Mat3) -> Result<Mat3, KinematicsError> {
    let det = f_old.determinant();
    f_old
        .try_inverse()
        .filter(|_| det > 0.0)
        .map(|inv| f_new * inv)
        .ok_or(KinematicsError::Inversion { point, det })
}

fn is_spd_plane(m: &Mat3) -> bool {
    let a = m[(0, 0)];
    let det2 = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    a > 0.0 && det2 > 0.0 && m.determinant() > 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_families, build_grid, FamilyOptions, PointSet, Region};
    use crate::tensor::rotation_z;
    use approx::assert_relative_eq;

    fn lattice(n: usize) -> (PointSet, Family) {
        let pts = build_grid(&Region::rectangle(n as f64, n as f64), 1.0).unwrap();
        let fam = build_families(&pts, FamilyOptions::new(3.0)).unwrap();
        (pts, fam)
    }

    fn affine(points: &PointSet, a: &Mat2, c: Vec2) -> Vec<Vec2> {
        points.positions.iter().map(|x| a * x + c - x).collect()
    }

    #[test]
    fn undeformed_and_translated_states() {
        let (pts, fam) = lattice(8);
        let zero = vec![Vec2::zeros(); pts.len()];
        let s = deformation_states(&fam, &zero, &zero);
        assert!(s.deformation.iter().zip(&fam.bonds).all(|(y, xi)| y == xi));
        let shifted = vec![Vec2::new(0.3, -1.7); pts.len()];
        let s = deformation_states(&fam, &shifted, &zero);
        assert!(s.displacement.iter().all(|u| u.norm() == 0.0));
        assert!(s.deformation.iter().zip(&fam.bonds).all(|(y, xi)| y == xi));
    }

    #[test]
    fn affine_state_is_linear_in_bond() {
        let (pts, fam) = lattice(8);
        let a = Mat2::new(1.1, 0.2, -0.1, 0.9);
        let u = affine(&pts, &a, Vec2::new(0.5, 0.25));
        let s = deformation_states(&fam, &u, &u);
        for (y, xi) in s.deformation.iter().zip(&fam.bonds) {
            assert_relative_eq!(*y, a * xi, epsilon = 1e-12);
        }
    }

    #[test]
    fn identity_and_stretch_gradients() {
        let (pts, fam) = lattice(10);
        let zero = vec![Vec2::zeros(); pts.len()];
        let f = nonlocal_f(&fam, &deformation_states(&fam, &zero, &zero)).unwrap();
        assert!(f.iter().all(|f| (f - Mat3::identity()).norm() < 1e-12));
        let a = Mat2::new(1.1, 0.0, 0.0, 0.9);
        let u = affine(&pts, &a, Vec2::zeros());
        let f = nonlocal_f(&fam, &deformation_states(&fam, &u, &zero)).unwrap();
        // affine fields are reproduced at every point, boundary included
        for fi in &f {
            assert_relative_eq!(*fi, embed(&a, 1.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn rigid_rotation_gradient() {
        let (pts, fam) = lattice(10);
        let q = rotation_z(30f64.to_radians());
        let u = affine(&pts, &crate::tensor::in_plane(&q), Vec2::new(2.0, 1.0));
        let zero = vec![Vec2::zeros(); pts.len()];
        let f = nonlocal_f(&fam, &deformation_states(&fam, &u, &zero)).unwrap();
        for fi in &f {
            assert!((fi - q).abs().max() < 1e-12);
            assert_relative_eq!(fi.determinant(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn inverted_gradient_is_fatal() {
        let (pts, fam) = lattice(6);
        let a = Mat2::new(-1.0, 0.0, 0.0, 1.0);
        let u = affine(&pts, &a, Vec2::zeros());
        let zero = vec![Vec2::zeros(); pts.len()];
        let err = nonlocal_f(&fam, &deformation_states(&fam, &u, &zero)).unwrap_err();
        assert!(matches!(err, KinematicsError::Inversion { point: 0, .. }));
    }

    #[test]
    fn velocity_gradients() {
        let (pts, fam) = lattice(10);
        let zero = vec![Vec2::zeros(); pts.len()];
        let fd = nonlocal_fdot(&fam, &deformation_states(&fam, &zero, &zero));
        assert!(fd.iter().all(|m| m.norm() == 0.0));

        let bmat = Mat2::new(0.3, -0.2, 0.1, 0.05);
        let v: Vec<Vec2> = pts.positions.iter().map(|x| bmat * x).collect();
        let fd = nonlocal_fdot(&fam, &deformation_states(&fam, &zero, &v));
        for m in &fd {
            assert_relative_eq!(*m, embed(&bmat, 0.0), epsilon = 1e-12);
        }

        let omega = Mat2::new(0.0, -0.7, 0.7, 0.0);
        let v: Vec<Vec2> = pts.positions.iter().map(|x| omega * x).collect();
        let fd = nonlocal_fdot(&fam, &deformation_states(&fam, &zero, &v));
        for (i, m) in fd.iter().enumerate() {
            let l = velocity_gradient(i, m, &Mat3::identity()).unwrap();
            assert!((l - embed(&omega, 0.0)).abs().max() < 1e-10);
            assert!(rate_of_deformation(&l).abs().max() < 1e-10);
        }
    }

    #[test]
    fn rate_of_deformation_examples() {
        let f = embed(&Mat2::new(1.2, 0.1, -0.3, 0.8), 1.0);
        let alpha = 0.37;
        let l = velocity_gradient(0, &(alpha * f), &f).unwrap();
        assert_relative_eq!(l, alpha * Mat3::identity(), epsilon = 1e-14);
        assert_relative_eq!(rate_of_deformation(&l), alpha * Mat3::identity(), epsilon = 1e-14);

        let gamma = 0.02;
        let mut fd = Mat3::zeros();
        fd[(0, 1)] = gamma;
        let d = rate_of_deformation(&velocity_gradient(0, &fd, &Mat3::identity()).unwrap());
        assert_relative_eq!(d[(0, 1)], gamma / 2.0);
        assert_relative_eq!(d[(1, 0)], gamma / 2.0);
        assert_eq!(d[(0, 0)], 0.0);
    }

    #[test]
    fn polar_examples() {
        let (r, v) = polar_rotation(0, &Mat3::identity()).unwrap();
        assert_relative_eq!(r, Mat3::identity(), epsilon = 1e-15);
        assert_relative_eq!(v, Mat3::identity(), epsilon = 1e-15);

        let q = rotation_z(0.8);
        let (r, v) = polar_rotation(0, &q).unwrap();
        assert_relative_eq!(r, q, epsilon = 1e-14);
        assert_relative_eq!(v, Mat3::identity(), epsilon = 1e-14);

        let f = Mat3::from_diagonal(&nalgebra::Vector3::new(2.0, 0.5, 1.0));
        let (r, v) = polar_rotation(0, &f).unwrap();
        assert_relative_eq!(r, Mat3::identity(), epsilon = 1e-14);
        assert_relative_eq!(v, f, epsilon = 1e-14);
    }

    #[test]
    fn polar_rotation_is_proper() {
        let f = embed(&Mat2::new(1.3, 0.6, -0.4, 0.7), 1.0);
        let (r, v) = polar_rotation(0, &f).unwrap();
        assert!((r.transpose() * r - Mat3::identity()).abs().max() < 1e-10);
        assert_relative_eq!(r.determinant(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(v * r, f, epsilon = 1e-12);
        assert_relative_eq!(v, v.transpose(), epsilon = 1e-14);
    }

    #[test]
    fn trial_be_examples() {
        let be_n = Mat3::new(1.02, 0.01, 0.0, 0.01, 0.97, 0.0, 0.0, 0.0, 1.01);
        assert_eq!(trial_elastic_be(0, &be_n, &Mat3::identity()).unwrap(), be_n);
        let q = rotation_z(1.1);
        assert_relative_eq!(
            trial_elastic_be(0, &Mat3::identity(), &q).unwrap(),
            Mat3::identity(),
            epsilon = 1e-14
        );
        let eps = 0.01;
        let f = Mat3::from_diagonal(&nalgebra::Vector3::new(1.0 + eps, 1.0, 1.0));
        let be = trial_elastic_be(0, &Mat3::identity(), &f).unwrap();
        assert_relative_eq!(be[(0, 0)], (1.0 + eps).powi(2), epsilon = 1e-15);
        assert_eq!(be[(1, 1)], 1.0);
    }

    #[test]
    fn elastic_be_tracks_jacobian() {
        // purely elastic history: be = F Fᵀ, so det be = (det F)²
        let mut be = Mat3::identity();
        let mut f_old = Mat3::identity();
        for k in 1..=20 {
            let t = k as f64 * 0.01;
            let f_new = embed(&Mat2::new(1.0 + t, 0.3 * t, -0.1 * t, 1.0 - 0.5 * t), 1.0);
            let rel = relative_gradient(0, &f_new, &f_old).unwrap();
            be = trial_elastic_be(0, &be, &rel).unwrap();
            f_old = f_new;
        }
        assert_relative_eq!(be.determinant(), f_old.determinant().powi(2), max_relative = 1e-12);
    }

    #[test]
    fn objectivity_of_rate_of_deformation() {
        let (pts, fam) = lattice(9);
        let bmat = Mat2::new(0.2, 0.05, -0.1, -0.15);
        let q2 = Mat2::new(0.6, -0.8, 0.8, 0.6);
        let zero = vec![Vec2::zeros(); pts.len()];
        let v: Vec<Vec2> = pts.positions.iter().map(|x| bmat * x).collect();
        let vq: Vec<Vec2> = v.iter().map(|w| q2 * w).collect();
        let uq = affine(&pts, &q2, Vec2::zeros());
        let fd = nonlocal_fdot(&fam, &deformation_states(&fam, &zero, &v));
        let fdq = nonlocal_fdot(&fam, &deformation_states(&fam, &uq, &vq));
        let fq = nonlocal_f(&fam, &deformation_states(&fam, &uq, &vq)).unwrap();
        let q = embed(&q2, 1.0);
        for i in 0..pts.len() {
            assert_relative_eq!(fq[i], q, epsilon = 1e-12);
            let d = rate_of_deformation(&velocity_gradient(i, &fd[i], &Mat3::identity()).unwrap());
            let dq = rate_of_deformation(&velocity_gradient(i, &fdq[i], &fq[i]).unwrap());
            assert_relative_eq!(dq, q * d * q.transpose(), epsilon = 1e-12);
        }
    }

    #[test]
    fn kinematic_state_assembly() {
        let f = embed(&Mat2::new(1.1, 0.2, 0.0, 0.95), 1.0);
        let fd = embed(&Mat2::new(0.01, 0.0, 0.02, -0.01), 0.0);
        let k = KinematicState::from_gradients(3, f, fd, Mat3::identity()).unwrap();
        assert_relative_eq!(k.jdet, f.determinant());
        assert_relative_eq!(k.b, f * f.transpose(), epsilon = 1e-15);
        assert_relative_eq!(k.v_stretch * k.r, f, epsilon = 1e-12);
        let bad = KinematicState::from_gradients(3, -f, fd, Mat3::identity());
        assert!(matches!(bad, Err(KinematicsError::Inversion { point: 3, .. })));
    }
}
