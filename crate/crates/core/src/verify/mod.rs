//! Self-checks of the kinematics, constitutive update, integrator and force
//! assembly against independent references. Run by `ppm verify` and by the
//! acceptance tests.

pub mod oracle;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{
    internal_forces, newmark_step, stabilization_forces, InitialStress, Material, ModelSetup, NewmarkConfig,
    NewmarkState, Simulation, Stabilization,
};
use crate::kinematics::deformation_gradient_at;
use crate::lattice::{build_families, build_grid, Family, FamilyOptions, Mat2, PointSet, Region, Shape, Vec2};
use crate::plasticity::{invariants, return_map, ConeFit, DruckerPrager, ElasticModuli};
use crate::tensor::{embed, rotation_z, Mat3};

pub use oracle::{substep_return, OracleState};

/// Outcome of one suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn result(name: &'static str, passed: bool, detail: String) -> SuiteResult {
    SuiteResult { name, passed, detail }
}

/// Material of the biaxial compression scenario.
pub fn biaxial_material() -> (ElasticModuli, DruckerPrager) {
    (
        ElasticModuli::new(3.8e6, 2.2e6).unwrap(),
        DruckerPrager::new(20e3, 8e3, -20e3, 35.0, 15.0, ConeFit::Compression).unwrap(),
    )
}

/// Material of the slope scenario.
pub fn slope_material() -> (ElasticModuli, DruckerPrager) {
    (
        ElasticModuli::from_young_poisson(1.0e6, 0.495).unwrap(),
        DruckerPrager::new(35e3, 10e3, -1e3, 0.0, 0.0, ConeFit::Compression).unwrap(),
    )
}

fn lattice(n: usize, spacing: f64) -> (PointSet, Family) {
    let pts = build_grid(&Region::rectangle(n as f64 * spacing, n as f64 * spacing), spacing).unwrap();
    let fam = build_families(&pts, FamilyOptions::new(3.0 * spacing)).unwrap();
    (pts, fam)
}

/// Points at least `margin` cells from every edge of an `n × n` lattice.
fn interior(pts: &PointSet, n: i32, margin: i32) -> Vec<usize> {
    (0..pts.len())
        .filter(|&i| {
            let [a, b] = pts.cells[i];
            a >= margin && b >= margin && a < n - margin && b < n - margin
        })
        .collect()
}

/// Largest entry error of the nonlocal `F` over `cases` random affine maps,
/// and the wall time.
pub fn affine_exactness(cases: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let started = Instant::now();
    let n = 20;
    let (pts, fam) = lattice(n, 0.75);
    let inner = interior(&pts, n as i32, 3);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let f = loop {
            let f = Mat2::new(
                1.0 + rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
                1.0 + rng.random_range(-0.3..0.3),
            );
            if f.determinant() > 0.2 {
                break f;
            }
        };
        let shift = Vec2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let u: Vec<Vec2> = pts.positions.iter().map(|x| (f - Mat2::identity()) * x + shift).collect();
        for &i in &inner {
            worst = worst.max((deformation_gradient_at(&fam, i, &u) - f).abs().max());
        }
    }
    (worst, started.elapsed().as_secs_f64())
}

/// Statistics of the return mapping against the sub-stepping oracle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReturnMapCheck {
    pub cases: usize,
    pub plastic: usize,
    /// Largest relative error in `(p̄, q, ζ)`.
    pub worst_relative: f64,
    /// Largest `|ℱ| / (G + K)` over plastic returns.
    pub worst_consistency: f64,
    pub errors: usize,
}

/// Random trial states around the yield surface of a material.
pub fn return_map_vs_oracle(moduli: &ElasticModuli, dp: &DruckerPrager, cases: usize, seed: u64) -> ReturnMapCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a2 = dp.alpha[1];
    let yield_strain = a2 * dp.c0 / (3.0 * moduli.shear);
    let floor = if dp.h < 0.0 {
        (dp.c_r - dp.c0) / dp.h
    } else {
        0.1
    };
    let mut out = ReturnMapCheck {
        cases,
        ..Default::default()
    };
    for _ in 0..cases {
        let d = [0, 1].map(|_| rng.random_range(-3.0..3.0) * yield_strain);
        let vol = rng.random_range(-2.0..0.5) * yield_strain;
        let eps = [d[0] + vol / 3.0, d[1] + vol / 3.0, -d[0] - d[1] + vol / 3.0];
        let q = rotation_z(rng.random_range(0.0..std::f64::consts::PI));
        let be = q * Mat3::from_diagonal(&nalgebra::Vector3::from(eps.map(|e| (2.0 * e).exp()))) * q.transpose();
        let zeta_n = rng.random_range(0.0..1.5) * floor;
        let reference = substep_return(&be, zeta_n, moduli, dp, 1000);
        match return_map(&be, zeta_n, moduli, dp) {
            Ok(r) => {
                let (p, qv) = invariants(&r.tau);
                let stress_scale = dp.c0;
                let rel = |a: f64, b: f64, floor: f64| (a - b).abs() / b.abs().max(floor);
                let e = rel(p, reference.p, stress_scale)
                    .max(rel(qv, reference.q, stress_scale))
                    .max(rel(r.zeta, reference.zeta, 1e-6));
                out.worst_relative = out.worst_relative.max(e);
                if r.dgamma > 0.0 {
                    out.plastic += 1;
                    let f = dp.yield_value(&r.tau, r.cohesion);
                    // apex returns with q = 0 sit on the surface exactly
                    out.worst_consistency = out.worst_consistency.max(f.abs() / (moduli.shear + moduli.bulk));
                }
            }
            Err(_) => out.errors += 1,
        }
    }
    out
}

/// Relative error of constant-gravity free fall after `steps` steps.
pub fn free_fall_error(steps: usize) -> f64 {
    let g = -9.81;
    let dt = 1e-3;
    let mut s = NewmarkState::zeros(1);
    s.a[0] = Vec2::new(0.0, g);
    for _ in 0..steps {
        newmark_step::<()>(&mut s, dt, |_| Ok(vec![Vec2::new(0.0, g)])).unwrap();
    }
    let t = steps as f64 * dt;
    let eu = (s.u[0].y - 0.5 * g * t * t).abs() / (0.5 * g * t * t).abs();
    let ev = (s.v[0].y - g * t).abs() / (g * t).abs();
    eu.max(ev)
}

/// Measured angular frequency of two unit masses joined by a spring of
/// stiffness `k`, from the zero crossings of their separation.
pub fn chain_frequency(k: f64, dt: f64, periods: f64) -> f64 {
    let omega = (2.0 * k).sqrt();
    let steps = (periods * 2.0 * std::f64::consts::PI / omega / dt).ceil() as usize;
    let mut s = NewmarkState::zeros(2);
    s.u[0] = Vec2::new(-0.01, 0.0);
    s.u[1] = Vec2::new(0.01, 0.0);
    let force = |u: &[Vec2]| {
        let stretch = u[1].x - u[0].x;
        vec![Vec2::new(k * stretch, 0.0), Vec2::new(-k * stretch, 0.0)]
    };
    s.a = force(&s.u);
    let mut crossings = Vec::new();
    let mut prev = s.u[1].x - s.u[0].x;
    for n in 1..=steps {
        newmark_step::<()>(&mut s, dt, |u| Ok(force(u))).unwrap();
        let x = s.u[1].x - s.u[0].x;
        if (prev > 0.0) != (x > 0.0) {
            let frac = prev / (prev - x);
            crossings.push((n as f64 - 1.0 + frac) * dt);
        }
        prev = x;
    }
    // least-squares slope of crossing time against index: half a period
    let m = crossings.len() as f64;
    let mean_k = (m - 1.0) / 2.0;
    let mean_t = crossings.iter().sum::<f64>() / m;
    let (mut num, mut den) = (0.0, 0.0);
    for (k, t) in crossings.iter().enumerate() {
        num += (k as f64 - mean_k) * (t - mean_t);
        den += (k as f64 - mean_k).powi(2);
    }
    std::f64::consts::PI / (num / den)
}

/// Ratio of frequency errors at `dt` and `dt / 2` (4 for second order).
pub fn chain_error_ratio() -> f64 {
    let k: f64 = 50.0;
    let exact = (2.0 * k).sqrt();
    let dt = 0.02;
    let e1 = (chain_frequency(k, dt, 40.0) - exact).abs();
    let e2 = (chain_frequency(k, dt / 2.0, 40.0) - exact).abs();
    e1 / e2
}

/// Largest interior force density under a uniform stress, relative to the
/// stress magnitude per unit length.
pub fn uniform_stress_nullity() -> f64 {
    let n = 16;
    let (pts, fam) = lattice(n, 1.0);
    let sigma = Mat3::new(-3.0e5, 4.0e4, 0.0, 4.0e4, -1.0e5, 0.0, 0.0, 0.0, -2.0e5);
    let f = internal_forces(&fam, &vec![sigma; fam.len()]);
    interior(&pts, n as i32, 6)
        .into_iter()
        .map(|i| f[i].norm() / 3.0e5)
        .fold(0.0, f64::max)
}

/// Relative change of linear momentum of a free elastoplastic block over
/// `steps` steps with stabilization active.
pub fn momentum_drift(steps: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (moduli, dp) = biaxial_material();
    let region = Region::rectangle(9.0, 6.0);
    let points = build_grid(&region, 0.75).unwrap().with_density(2000.0, 0.2);
    let family = build_families(&points, FamilyOptions::new(2.25)).unwrap();
    let dt = 1e-4;
    let setup = ModelSetup {
        outline: Shape::Rectangle {
            min: [0.0, 0.0],
            max: [9.0, 6.0],
        },
        material: Material {
            moduli,
            yield_law: Some(dp),
        },
        gravity: Vec2::zeros(),
        stabilization: Stabilization::new(0.5, moduli.young(), 2.25),
        boundaries: vec![],
        initial_stress: InitialStress::None,
        relaxation: None,
        integrator: NewmarkConfig {
            dt,
            end_time: steps as f64 * dt,
            damping: 0.0,
        },
        points,
        family,
    };
    let mut sim = Simulation::new(setup).unwrap();
    sim.initialize(&mut crate::dynamics::NullObserver).unwrap();
    for (u, v) in sim.state.u.iter_mut().zip(sim.state.v.iter_mut()) {
        *u = Vec2::new(rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02));
        *v = Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    }
    let momentum = |s: &Simulation| -> Vec2 { s.state.v.iter().zip(s.masses()).map(|(v, m)| v * *m).sum() };
    let scale: f64 = sim.state.v.iter().zip(sim.masses()).map(|(v, m)| v.norm() * m).sum();
    let p0 = momentum(&sim);
    for _ in 0..steps {
        if sim.step(&mut crate::dynamics::NullObserver).is_err() {
            return f64::INFINITY;
        }
    }
    (momentum(&sim) - p0).norm() / scale
}

/// Largest `‖τ(Q bᵉ Qᵀ) − Q τ(bᵉ) Qᵀ‖` over random states and rotations,
/// relative to `G`.
pub fn rotation_conjugation(cases: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, dp) = biaxial_material();
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let a = Mat2::new(
            1.0 + rng.random_range(-0.05..0.05),
            rng.random_range(-0.05..0.05),
            rng.random_range(-0.05..0.05),
            1.0 + rng.random_range(-0.05..0.05),
        );
        let f = embed(&a, 1.0);
        let be = f * f.transpose();
        let zeta = rng.random_range(0.0..0.5);
        let q = rotation_z(rng.random_range(-3.0..3.0));
        let (Ok(r0), Ok(r1)) = (return_map(&be, zeta, &m, &dp), return_map(&(q * be * q.transpose()), zeta, &m, &dp))
        else {
            return f64::INFINITY;
        };
        worst = worst.max((r1.tau - q * r0.tau * q.transpose()).abs().max() / m.shear);
    }
    worst
}

/// Checkerboard displacement: `(max |F − 1|, max correspondence force,
/// min stabilization force)` over interior points.
pub fn checkerboard() -> (f64, f64, f64) {
    let n = 16;
    let (pts, fam) = lattice(n, 1.0);
    let (moduli, _) = biaxial_material();
    let u: Vec<Vec2> = pts
        .cells
        .iter()
        .map(|[i, j]| Vec2::new(if (i + j) % 2 == 0 { 1e-3 } else { -1e-3 }, 0.0))
        .collect();
    let grads: Vec<Mat2> = (0..fam.len()).map(|i| deformation_gradient_at(&fam, i, &u)).collect();
    // Hencky stress of the reconstructed F
    let piola: Vec<Mat3> = grads
        .iter()
        .map(|g| {
            let f = embed(g, 1.0);
            let tau = crate::plasticity::kirchhoff_from_be(&(f * f.transpose()), &moduli).unwrap();
            tau * f.try_inverse().unwrap().transpose()
        })
        .collect();
    let fc = internal_forces(&fam, &piola);
    let fs = stabilization_forces(&fam, &u, &grads, &Stabilization::new(0.5, moduli.young(), 3.0));
    let inner = interior(&pts, n as i32, 6);
    let df = inner.iter().map(|&i| (grads[i] - Mat2::identity()).abs().max()).fold(0.0, f64::max);
    let corr = inner.iter().map(|&i| fc[i].norm()).fold(0.0, f64::max);
    let stab = inner.iter().map(|&i| fs[i].norm()).fold(f64::INFINITY, f64::min);
    (df, corr, stab)
}

/// Runs every suite with pinned tolerances.
pub fn run_all(cases: usize, seed: u64) -> Vec<SuiteResult> {
    let mut out = Vec::new();

    let (err, secs) = affine_exactness(50, seed);
    out.push(result(
        "affine exactness (50 maps)",
        err <= 1e-12 && secs < 5.0,
        format!("max |F - F_affine| = {err:.2e} (tol 1e-12), {secs:.2} s (limit 5 s)"),
    ));

    for (name, (m, dp), s) in [
        ("return map vs oracle (biaxial)", biaxial_material(), seed),
        ("return map vs oracle (slope)", slope_material(), seed + 1),
    ] {
        let c = return_map_vs_oracle(&m, &dp, cases, s);
        out.push(result(
            name,
            c.errors == 0 && c.worst_relative <= 1e-4 && c.worst_consistency <= 1e-8 && c.plastic > 0,
            format!(
                "{} cases, {} plastic, worst rel {:.2e} (tol 1e-4), |F|/(G+K) {:.2e} (tol 1e-8), {} errors",
                c.cases, c.plastic, c.worst_relative, c.worst_consistency, c.errors
            ),
        ));
    }

    let ff = free_fall_error(10_000);
    let ff_tol = 1e4 * f64::EPSILON;
    out.push(result(
        "free fall (1e4 steps)",
        ff <= ff_tol,
        format!("relative error {ff:.2e} (tol {ff_tol:.2e})"),
    ));

    let ratio = chain_error_ratio();
    out.push(result(
        "two-point chain frequency order",
        (ratio - 4.0).abs() <= 0.5,
        format!("error ratio on halving dt {ratio:.3} (expect 4 +/- 0.5)"),
    ));

    let null = uniform_stress_nullity();
    out.push(result(
        "uniform-stress nullity",
        null <= 1e-10,
        format!("max |L| / |sigma| = {null:.2e} (tol 1e-10)"),
    ));

    let drift = momentum_drift(1000, seed);
    out.push(result(
        "momentum conservation (1000 steps)",
        drift <= 1e-10,
        format!("relative drift {drift:.2e} (tol 1e-10)"),
    ));

    let rot = rotation_conjugation(cases, seed);
    out.push(result(
        "rotation conjugation of stress",
        rot <= 1e-9,
        format!("max |tau(Q b Q^T) - Q tau Q^T| / G = {rot:.2e} (tol 1e-9)"),
    ));

    let (df, corr, stab) = checkerboard();
    out.push(result(
        "checkerboard zero-energy mode",
        df <= 1e-12 && corr <= 1e-6 && stab > 0.0,
        format!("|F - 1| {df:.1e}, correspondence force {corr:.1e}, min stabilization force {stab:.3e}"),
    ));
    out
}
