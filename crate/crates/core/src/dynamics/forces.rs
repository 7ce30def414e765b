//! Correspondence force states and the zero-energy-mode stabilization.

use std::f64::consts::PI;

use crate::lattice::{Family, Mat2, Vec2};
use crate::tensor::{in_plane, Mat3};

/// `T = ω P̄ 𝒦⁻¹ ξ` for one bond.
#[inline]
pub fn force_state(pbar: &Mat2, k_inv: &Mat2, omega: f64, xi: &Vec2) -> Vec2 {
    omega * (pbar * (k_inv * xi))
}

/// Per-point `P̄ 𝒦⁻¹` (in-plane block), the only stress quantity the bond
/// sums need.
pub fn stress_shape_products(family: &Family, piola: &[Mat3]) -> Vec<Mat2> {
    piola
        .iter()
        .zip(&family.shape_inv)
        .map(|(p, k_inv)| in_plane(p) * k_inv)
        .collect()
}

/// `Σ_j (T_i⟨ξ_ij⟩ − T_j⟨ξ_ji⟩) V_j β_ij` for point `i`, with
/// `a[k] = P̄_k 𝒦_k⁻¹`. Bonds are visited in their stored order.
#[inline]
pub fn internal_force_at(family: &Family, i: usize, a: &[Mat2]) -> Vec2 {
    let ai = a[i];
    let mut f = Vec2::zeros();
    for b in family.range(i) {
        let j = family.neighbors[b] as usize;
        f += family.weights[b] * ((ai + a[j]) * family.bonds[b]);
    }
    f
}

pub fn internal_forces(family: &Family, piola: &[Mat3]) -> Vec<Vec2> {
    let a = stress_shape_products(family, piola);
    (0..family.len()).map(|i| internal_force_at(family, i, &a)).collect()
}

/// Penalty on the non-affine part of the deformation state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stabilization {
    /// Dimensionless magnitude `G_stab`.
    pub coefficient: f64,
    /// Bond micromodulus `C = 9E/(πδ³)` (unit thickness).
    pub micromodulus: f64,
}

impl Stabilization {
    pub fn new(coefficient: f64, young: f64, horizon: f64) -> Self {
        Self {
            coefficient,
            micromodulus: 9.0 * young / (PI * horizon.powi(3)),
        }
    }

    pub fn off() -> Self {
        Self {
            coefficient: 0.0,
            micromodulus: 0.0,
        }
    }

    pub fn is_active(&self) -> bool {
        self.coefficient != 0.0 && self.micromodulus != 0.0
    }
}

/// Non-affine part `z = Y − Fξ` of a bond.
#[inline]
pub fn nonaffine(y: &Vec2, f: &Mat2, xi: &Vec2) -> Vec2 {
    y - f * xi
}

/// Stabilization force on point `i`: every bond contributes
/// `G_stab C ω β V_j (z_ij − z_ji) / (2|ξ|)`, which vanishes for affine
/// motion and is antisymmetric in `(i, j)`.
#[inline]
pub fn stabilization_force_at(
    family: &Family,
    i: usize,
    displacements: &[Vec2],
    gradients: &[Mat2],
    stab: &Stabilization,
) -> Vec2 {
    let k = 0.5 * stab.coefficient * stab.micromodulus;
    let ui = displacements[i];
    let fi = gradients[i];
    let mut f = Vec2::zeros();
    for b in family.range(i) {
        let j = family.neighbors[b] as usize;
        let xi = family.bonds[b];
        let y = xi + displacements[j] - ui;
        // z_ij − z_ji = 2Y − (F_i + F_j)ξ
        let dz = 2.0 * y - (fi + gradients[j]) * xi;
        f += (family.weights[b] / family.lengths[b]) * dz;
    }
    k * f
}

pub fn stabilization_forces(
    family: &Family,
    displacements: &[Vec2],
    gradients: &[Mat2],
    stab: &Stabilization,
) -> Vec<Vec2> {
    (0..family.len())
        .map(|i| stabilization_force_at(family, i, displacements, gradients, stab))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::deformation_gradient_at;
    use crate::lattice::{build_families, build_grid, FamilyOptions, PointSet, Region};
    use crate::tensor::embed;

    fn setup(n: usize) -> (PointSet, Family) {
        let pts = build_grid(&Region::rectangle(n as f64, n as f64), 1.0).unwrap();
        let fam = build_families(&pts, FamilyOptions::new(3.0)).unwrap();
        (pts, fam)
    }

    /// Points whose neighbours all have complete families.
    fn interior(pts: &PointSet, n: i32) -> Vec<usize> {
        (0..pts.len())
            .filter(|&i| {
                let [a, b] = pts.cells[i];
                a >= 6 && b >= 6 && a < n - 6 && b < n - 6
            })
            .collect()
    }

    #[test]
    fn zero_stress_zero_force() {
        let (_, fam) = setup(8);
        let f = internal_forces(&fam, &vec![Mat3::zeros(); fam.len()]);
        assert!(f.iter().all(|v| *v == Vec2::zeros()));
    }

    #[test]
    fn uniform_stress_is_divergence_free_inside() {
        let (pts, fam) = setup(16);
        let sigma = Mat3::new(-3.0e5, 4.0e4, 0.0, 4.0e4, -1.0e5, 0.0, 0.0, 0.0, -2.0e5);
        let f = internal_forces(&fam, &vec![sigma; fam.len()]);
        for i in interior(&pts, 16) {
            assert!(f[i].norm() < 1e-10 * 3.0e5, "{}", f[i]);
        }
    }

    #[test]
    fn linear_stress_gives_its_divergence() {
        let a = 250.0;
        for h in [1.0, 0.5] {
            let n = 16;
            let pts = build_grid(&Region::rectangle(n as f64 * h, n as f64 * h), h).unwrap();
            let fam = build_families(&pts, FamilyOptions::new(3.0 * h)).unwrap();
            let piola: Vec<Mat3> = pts
                .positions
                .iter()
                .map(|x| embed(&Mat2::new(a * x.x, 0.0, 0.0, 0.0), 0.0))
                .collect();
            let f = internal_forces(&fam, &piola);
            for i in interior(&pts, n) {
                assert!((f[i] - Vec2::new(a, 0.0)).norm() < 1e-9 * a, "{}", f[i]);
            }
        }
    }

    #[test]
    fn pairwise_forces_balance() {
        let (pts, fam) = setup(7);
        let piola: Vec<Mat3> = pts
            .positions
            .iter()
            .map(|x| Mat3::new(x.x * x.y, x.y, 0.0, -x.x, x.x * x.x, 0.0, 0.0, 0.0, 1.0))
            .collect();
        let vol = &pts.volumes;
        let total: Vec2 = internal_forces(&fam, &piola)
            .iter()
            .zip(vol)
            .map(|(f, v)| f * *v)
            .sum();
        assert!(total.norm() < 1e-10, "{total}");
    }

    #[test]
    fn affine_motion_has_no_stabilization_force() {
        let (pts, fam) = setup(8);
        let g = Mat2::new(0.02, -0.1, 0.05, -0.03);
        let u: Vec<Vec2> = pts.positions.iter().map(|x| g * x).collect();
        let grads: Vec<Mat2> = (0..fam.len()).map(|i| deformation_gradient_at(&fam, i, &u)).collect();
        let stab = Stabilization::new(0.5, 1.0e6, 3.0);
        for f in stabilization_forces(&fam, &u, &grads, &stab) {
            assert!(f.norm() < 1e-8, "{f}");
        }
    }

    #[test]
    fn checkerboard_is_caught_only_by_stabilization() {
        let n = 12;
        let (pts, fam) = setup(n);
        let u: Vec<Vec2> = pts
            .cells
            .iter()
            .map(|[i, j]| {
                let s = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                Vec2::new(1e-3 * s, 0.0)
            })
            .collect();
        let grads: Vec<Mat2> = (0..fam.len()).map(|i| deformation_gradient_at(&fam, i, &u)).collect();
        let stab = Stabilization::new(0.5, 1.0e6, 3.0);
        let forces = stabilization_forces(&fam, &u, &grads, &stab);
        for i in interior(&pts, n as i32) {
            assert!((grads[i] - Mat2::identity()).norm() < 1e-12);
            assert!(forces[i].norm() > 0.0);
            // restoring: opposes the perturbation
            assert!(forces[i].dot(&u[i]) < 0.0);
        }
        let off = stabilization_forces(&fam, &u, &grads, &Stabilization::off());
        assert!(off.iter().all(|f| *f == Vec2::zeros()));
    }

    #[test]
    fn force_state_example() {
        let t = force_state(&Mat2::new(2.0, 0.0, 0.0, 3.0), &Mat2::identity(), 0.5, &Vec2::new(1.0, 1.0));
        assert_eq!(t, Vec2::new(1.0, 1.5));
    }
}
