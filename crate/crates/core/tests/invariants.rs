//! Property tests of the constitutive update, the bond sums and the band
//! bookkeeping.

use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;

use ppm::diagnostics::{upslope_sequence, BandEvent};
use ppm::dynamics::boundary::Schedule;
use ppm::dynamics::forces::{internal_forces, stabilization_forces, Stabilization};
use ppm::kinematics::deformation_gradient_at;
use ppm::lattice::{build_families, build_grid, Family, FamilyOptions, Mat2, PointSet, Region, Vec2};
use ppm::plasticity::{
    be_from_kirchhoff, kirchhoff_from_be, return_map, yield_tolerance, ConeFit, DruckerPrager, ElasticModuli, Regime,
};
use ppm::tensor::{embed, rotation_z, Mat3};

fn patch() -> (PointSet, Family) {
    let points = build_grid(&Region::rectangle(6.0, 6.0), 0.5).unwrap();
    let family = build_families(&points, FamilyOptions::new(1.5)).unwrap();
    (points, family)
}

fn moduli() -> ElasticModuli {
    ElasticModuli::new(3.8e6, 2.2e6).unwrap()
}

fn material() -> impl Strategy<Value = DruckerPrager> {
    (10e3..60e3f64, 0.0..1.0f64, -80e3..40e3f64, 0.0..45.0f64, 0.0..1.0f64, any::<bool>()).prop_map(
        |(c0, r, h, phi, d, plane)| {
            let fit = if plane { ConeFit::PlaneStrain } else { ConeFit::Compression };
            DruckerPrager::new(c0, r * c0, h, phi, d * phi, fit).unwrap()
        },
    )
    .prop_filter("apex return defined", |dp| {
        let [a1, a2, a3, a4] = dp.alpha;
        a1 == 0.0 || moduli().bulk * a3 + a2 * dp.h * a4 / a1 > 0.0
    })
}

/// Symmetric positive definite `be` with in-plane rotation and logarithmic
/// principal stretches up to `reach`.
fn elastic_left_cauchy_green(reach: f64) -> impl Strategy<Value = Mat3> {
    (-reach..reach, -reach..reach, -reach..reach, 0.0..std::f64::consts::PI).prop_map(|(a, b, c, angle)| {
        let q = rotation_z(angle);
        q * Matrix3::from_diagonal(&Vector3::new((2.0 * a).exp(), (2.0 * b).exp(), (2.0 * c).exp())) * q.transpose()
    })
}

fn gradient() -> impl Strategy<Value = Mat2> {
    (-0.3..0.3f64, -0.3..0.3f64, -0.3..0.3f64, -0.3..0.3f64)
        .prop_map(|(a, b, c, d)| Mat2::new(1.0 + a, b, c, 1.0 + d))
        .prop_filter("orientation preserving", |f| f.determinant() > 0.2)
}

fn field(n: usize) -> impl Strategy<Value = Vec<Vec2>> {
    proptest::collection::vec((-0.2..0.2f64, -0.2..0.2f64).prop_map(|(x, y)| Vec2::new(x, y)), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn returned_stress_is_admissible(be in elastic_left_cauchy_green(0.05), zeta in 0.0..0.2f64, dp in material()) {
        let m = moduli();
        let r = return_map(&be, zeta, &m, &dp).unwrap();
        prop_assert!(r.dgamma >= 0.0);
        prop_assert!(r.zeta >= zeta);
        prop_assert!(dp.yield_value(&r.tau, r.cohesion) <= 1e3 * yield_tolerance(&m));
        prop_assert!((r.cohesion - dp.harden(r.zeta)).abs() <= 1e-9 * dp.c0);
        let tau = kirchhoff_from_be(&r.be, &m).unwrap();
        prop_assert!((tau - r.tau).abs().max() <= 1e-6 * (m.bulk + m.shear));
        if r.regime == Regime::Elastic {
            prop_assert_eq!(r.dgamma, 0.0);
            prop_assert_eq!(r.be, be);
        }
    }

    #[test]
    fn return_map_commutes_with_rotation(be in elastic_left_cauchy_green(0.05), angle in 0.0..6.3f64, dp in material()) {
        let m = moduli();
        let q = rotation_z(angle);
        let a = return_map(&be, 0.0, &m, &dp).unwrap();
        let b = return_map(&(q * be * q.transpose()), 0.0, &m, &dp).unwrap();
        let scale = m.bulk + m.shear;
        prop_assert!((b.tau - q * a.tau * q.transpose()).abs().max() <= 1e-7 * scale);
        prop_assert!((b.zeta - a.zeta).abs() <= 1e-9);
    }

    #[test]
    fn hencky_law_round_trips(be in elastic_left_cauchy_green(0.3)) {
        let m = moduli();
        let tau = kirchhoff_from_be(&be, &m).unwrap();
        prop_assert!((be_from_kirchhoff(&tau, &m) - be).abs().max() <= 1e-10);
    }

    #[test]
    fn interior_gradient_is_exact_for_affine_motion(f in gradient(), sx in -3.0..3.0f64, sy in -3.0..3.0f64) {
        let (points, family) = patch();
        let u: Vec<Vec2> = points.positions.iter().map(|x| (f - Mat2::identity()) * x + Vec2::new(sx, sy)).collect();
        for (i, x) in points.positions.iter().enumerate() {
            if x.x > 1.5 && x.x < 4.5 && x.y > 1.5 && x.y < 4.5 {
                prop_assert!((deformation_gradient_at(&family, i, &u) - f).abs().max() <= 1e-12);
            }
        }
    }

    #[test]
    fn internal_forces_carry_no_net_force(stress in proptest::collection::vec(-1e5..1e5f64, 144 * 4)) {
        let (points, family) = patch();
        let piola: Vec<Mat3> = stress.chunks(4).map(|s| embed(&Mat2::new(s[0], s[1], s[2], s[3]), 0.0)).collect();
        prop_assert_eq!(piola.len(), points.len());
        let forces = internal_forces(&family, &piola);
        let net: Vec2 = forces.iter().zip(&points.volumes).map(|(f, v)| f * *v).sum();
        let scale: f64 = forces.iter().zip(&points.volumes).map(|(f, v)| f.norm() * v).sum();
        prop_assert!(net.norm() <= 1e-12 * scale.max(1.0));
    }

    #[test]
    fn stabilization_is_internal(u in field(144)) {
        let (points, family) = patch();
        let grads: Vec<Mat2> = (0..points.len()).map(|i| deformation_gradient_at(&family, i, &u)).collect();
        let stab = Stabilization::new(0.5, 1e6, family.horizon);
        let forces = stabilization_forces(&family, &u, &grads, &stab);
        let net: Vec2 = forces.iter().zip(&points.volumes).map(|(f, v)| f * *v).sum();
        let scale: f64 = forces.iter().zip(&points.volumes).map(|(f, v)| f.norm() * v).sum();
        prop_assert!(net.norm() <= 1e-12 * scale.max(1.0));
    }

    #[test]
    fn stabilization_vanishes_for_affine_motion(f in gradient()) {
        let (points, family) = patch();
        let u: Vec<Vec2> = points.positions.iter().map(|x| (f - Mat2::identity()) * x).collect();
        let grads: Vec<Mat2> = (0..points.len()).map(|i| deformation_gradient_at(&family, i, &u)).collect();
        let stab = Stabilization::new(0.5, 1e6, family.horizon);
        let forces = stabilization_forces(&family, &u, &grads, &stab);
        let interior = (0..points.len()).filter(|&i| {
            family.neighbors_of(i).all(|j| {
                let y = points.positions[j];
                y.x > 1.5 && y.x < 4.5 && y.y > 1.5 && y.y < 4.5
            })
        });
        for i in interior {
            prop_assert!(forces[i].norm() <= 1e-6 * stab.micromodulus);
        }
    }

    #[test]
    fn schedule_stays_within_knot_values(knots in proptest::collection::vec((0.0..1.0f64, -5.0..5.0f64), 1..6), t in -1.0..3.0f64) {
        let mut knots: Vec<[f64; 2]> = knots.into_iter().map(|(a, b)| [a, b]).collect();
        knots.sort_by(|a, b| a[0].total_cmp(&b[0]));
        knots.dedup_by(|a, b| a[0] == b[0]);
        let s = Schedule::new(knots.clone());
        let lo = knots.iter().map(|k| k[1]).fold(f64::INFINITY, f64::min);
        let hi = knots.iter().map(|k| k[1]).fold(f64::NEG_INFINITY, f64::max);
        let v = s.value(t);
        prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
    }

    #[test]
    fn upslope_chain_is_ordered(events in proptest::collection::vec((0.0..10.0f64, 0.0..100.0f64), 0..20)) {
        let events: Vec<BandEvent> = events.into_iter().map(|(time, surface_x)| BandEvent { time, surface_x, angle: 60.0 }).collect();
        let chain = upslope_sequence(&events);
        for w in chain.windows(2) {
            prop_assert!(w[1].time > w[0].time && w[1].surface_x < w[0].surface_x);
        }
        for e in &chain {
            prop_assert!(events.contains(e));
        }
        prop_assert!(events.is_empty() || !chain.is_empty());
    }
}
