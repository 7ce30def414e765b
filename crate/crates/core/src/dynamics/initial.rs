//! Initial stress fields and their elastic pre-strain.

use serde::{Deserialize, Serialize};

use crate::lattice::{PointSet, Shape};
use crate::plasticity::{be_from_kirchhoff, ElasticModuli};
use crate::tensor::Mat3;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum InitialStress {
    #[default]
    None,
    /// `σ = −p 1`.
    Isotropic { pressure: f64 },
    /// `σ_v = −ρ_s g d`, `σ_h = σ_zz = K₀ σ_v` with depth `d` below the
    /// outline surface above each point.
    Geostatic { k0: f64 },
}

/// Geostatic Cauchy stress at depth `depth` (compression negative).
pub fn geostatic_stress(density: f64, gravity: f64, depth: f64, k0: f64) -> Mat3 {
    let sv = -density * gravity * depth.max(0.0);
    let sh = k0 * sv;
    Mat3::from_diagonal(&nalgebra::Vector3::new(sh, sv, sh))
}

/// Cauchy stress of every point.
pub fn initial_cauchy_stress(points: &PointSet, outline: &Shape, gravity: f64, init: InitialStress) -> Vec<Mat3> {
    match init {
        InitialStress::None => vec![Mat3::zeros(); points.len()],
        InitialStress::Isotropic { pressure } => vec![-pressure * Mat3::identity(); points.len()],
        InitialStress::Geostatic { k0 } => points
            .positions
            .iter()
            .zip(&points.densities_partial)
            .map(|(x, &rho)| {
                let top = outline.top_at(x.x).unwrap_or(x.y);
                geostatic_stress(rho, gravity, top - x.y, k0)
            })
            .collect(),
    }
}

/// Elastic `bᵉ` whose Hencky Kirchhoff stress equals `σ` in the reference
/// configuration (`F = 1`, so `τ = σ`).
pub fn prestrain(sigma: &Mat3, moduli: &ElasticModuli) -> Mat3 {
    be_from_kirchhoff(sigma, moduli)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plasticity::kirchhoff_from_be;
    use approx::assert_relative_eq;

    #[test]
    fn column_example() {
        let s = geostatic_stress(1600.0, 9.81, 10.0, 0.5);
        assert_relative_eq!(s[(1, 1)], -156_960.0, epsilon = 1e-9);
        assert_relative_eq!(s[(0, 0)], -78_480.0, epsilon = 1e-9);
        let iso = geostatic_stress(1600.0, 9.81, 10.0, 1.0);
        assert_eq!(iso[(0, 0)], iso[(1, 1)]);
        assert_eq!(geostatic_stress(1600.0, 0.0, 10.0, 0.5), Mat3::zeros());
    }

    #[test]
    fn prestrain_reproduces_cauchy_stress() {
        let m = ElasticModuli::new(3.8e6, 2.2e6).unwrap();
        let sigma = geostatic_stress(1600.0, 9.81, 17.0, 0.5);
        let tau = kirchhoff_from_be(&prestrain(&sigma, &m), &m).unwrap();
        assert_relative_eq!(tau, sigma, epsilon = 1e-8);
    }

    #[test]
    fn depth_follows_the_outline() {
        use crate::lattice::{build_grid, Region};
        let region = Region::polygon(vec![[0.0, 0.0], [20.0, 0.0], [10.0, 10.0], [0.0, 10.0]]);
        let pts = build_grid(&region, 1.0).unwrap().with_partial_density(1000.0, 0.0);
        let s = initial_cauchy_stress(&pts, &region.shape, 10.0, InitialStress::Geostatic { k0: 0.5 });
        for (x, s) in pts.positions.iter().zip(&s) {
            let top = if x.x <= 10.0 { 10.0 } else { 20.0 - x.x };
            assert_relative_eq!(s[(1, 1)], -1.0e4 * (top - x.y), epsilon = 1e-8);
        }
    }
}
