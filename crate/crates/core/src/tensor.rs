//! Small fixed-size tensor helpers for plane-strain 3×3 algebra.

use nalgebra::{Matrix2, Matrix3, SymmetricEigen};

pub type Mat3 = Matrix3<f64>;
pub type Mat2 = Matrix2<f64>;

/// Embeds an in-plane block into a 3×3 tensor with the given `(3,3)` entry.
#[inline]
pub fn embed(m: &Mat2, zz: f64) -> Mat3 {
    Mat3::new(
        m[(0, 0)], m[(0, 1)], 0.0,
        m[(1, 0)], m[(1, 1)], 0.0,
        0.0, 0.0, zz,
    )
}

#[inline]
pub fn in_plane(m: &Mat3) -> Mat2 {
    Mat2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
}

#[inline]
pub fn sym(m: &Mat3) -> Mat3 {
    0.5 * (m + m.transpose())
}

#[inline]
pub fn double_dot(a: &Mat3, b: &Mat3) -> f64 {
    a.component_mul(b).sum()
}

#[inline]
pub fn deviator(m: &Mat3) -> Mat3 {
    m - Mat3::identity() * (m.trace() / 3.0)
}

/// Spectral decomposition of a symmetric 3×3 tensor: eigenvalues and the
/// matrix whose columns are the corresponding unit eigenvectors.
///
/// Tensors with vanishing out-of-plane coupling (the plane-strain case) are
/// handled in closed form; anything else falls back to an iterative solve.
pub fn symmetric_spectral(m: &Mat3) -> ([f64; 3], Mat3) {
    let scale = m.abs().max().max(f64::MIN_POSITIVE);
    let coupling = m[(0, 2)].abs() + m[(1, 2)].abs() + m[(2, 0)].abs() + m[(2, 1)].abs();
    if coupling <= 1e-15 * scale {
        let (l1, l2, c, s) = eigen_sym2(m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)]);
        let vecs = Mat3::new(
            c, -s, 0.0,
            s, c, 0.0,
            0.0, 0.0, 1.0,
        );
        ([l1, l2, m[(2, 2)]], vecs)
    } else {
        let eig = SymmetricEigen::new(sym(m));
        (
            [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2]],
            eig.eigenvectors,
        )
    }
}

/// Eigen-decomposition of `[[a, b], [b, d]]`: returns `(λ1, λ2, cos θ, sin θ)`
/// with eigenvector 1 = `(cos θ, sin θ)` and eigenvector 2 = `(−sin θ, cos θ)`.
#[inline]
pub fn eigen_sym2(a: f64, b: f64, d: f64) -> (f64, f64, f64, f64) {
    let mean = 0.5 * (a + d);
    let half_diff = 0.5 * (a - d);
    let radius = half_diff.hypot(b);
    let theta = 0.5 * b.atan2(half_diff);
    let (s, c) = theta.sin_cos();
    (mean + radius, mean - radius, c, s)
}

/// Reassembles `Σ λ_A n_A ⊗ n_A`.
#[inline]
pub fn from_spectral(values: [f64; 3], vecs: &Mat3) -> Mat3 {
    let mut out = Mat3::zeros();
    for (a, &lambda) in values.iter().enumerate() {
        let n = vecs.column(a);
        out += lambda * n * n.transpose();
    }
    out
}

/// Rotation about the out-of-plane axis.
pub fn rotation_z(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn closed_form_matches_reassembly() {
        let m = Mat3::new(3.0, 1.2, 0.0, 1.2, -0.5, 0.0, 0.0, 0.0, 0.7);
        let (vals, vecs) = symmetric_spectral(&m);
        assert_relative_eq!(from_spectral(vals, &vecs), m, epsilon = 1e-14);
        assert_relative_eq!(vecs.transpose() * vecs, Mat3::identity(), epsilon = 1e-14);
    }

    #[test]
    fn general_symmetric_falls_back() {
        let m = Mat3::new(2.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 4.0);
        let (vals, vecs) = symmetric_spectral(&m);
        assert_relative_eq!(from_spectral(vals, &vecs), m, epsilon = 1e-12);
    }

    #[test]
    fn isotropic_block() {
        let (l1, l2, c, s) = eigen_sym2(2.0, 0.0, 2.0);
        assert_eq!((l1, l2), (2.0, 2.0));
        assert_relative_eq!(c * c + s * s, 1.0);
    }
}
