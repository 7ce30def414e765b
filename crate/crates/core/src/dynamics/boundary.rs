//! Boundary conditions: point selectors, load schedules, tractions and the
//! rigid frictional base.

use serde::{Deserialize, Serialize};

use crate::lattice::{Face, Mat2, PointSet, Vec2};

/// Which points a condition acts on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Selector {
    /// The outermost `layers` points of every lattice row (left/right) or
    /// column (bottom/top).
    Side { side: Face, layers: usize },
    /// Points whose reference position lies in the closed box.
    Box { min: [f64; 2], max: [f64; 2] },
    All,
}

impl Selector {
    pub fn side(side: Face) -> Self {
        Selector::Side { side, layers: 1 }
    }

    /// Selected point indices in increasing order.
    pub fn resolve(&self, points: &PointSet) -> Vec<usize> {
        match self {
            Selector::All => (0..points.len()).collect(),
            Selector::Box { min, max } => (0..points.len())
                .filter(|&i| {
                    let x = points.positions[i];
                    x.x >= min[0] && x.x <= max[0] && x.y >= min[1] && x.y <= max[1]
                })
                .collect(),
            Selector::Side { side, layers } => {
                // group by row (left/right) or column (bottom/top), rank along the line
                let (line_axis, rank_axis, descending) = match side {
                    Face::Left => (1, 0, false),
                    Face::Right => (1, 0, true),
                    Face::Bottom => (0, 1, false),
                    Face::Top => (0, 1, true),
                };
                let mut lines: std::collections::BTreeMap<i32, Vec<(i32, usize)>> = Default::default();
                for (i, cell) in points.cells.iter().enumerate() {
                    lines.entry(cell[line_axis]).or_default().push((cell[rank_axis], i));
                }
                let mut out = Vec::new();
                for members in lines.values_mut() {
                    members.sort_unstable();
                    if descending {
                        members.reverse();
                    }
                    out.extend(members.iter().take(*layers).map(|&(_, i)| i));
                }
                out.sort_unstable();
                out
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Component {
    X,
    Y,
}

impl Component {
    pub fn index(self) -> usize {
        match self {
            Component::X => 0,
            Component::Y => 1,
        }
    }
}

/// Piecewise-linear function of time, constant outside its knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub knots: Vec<[f64; 2]>,
}

impl Schedule {
    pub fn new(knots: Vec<[f64; 2]>) -> Self {
        Self { knots }
    }

    /// Linear ramp from 0 at t = 0 to `value` at `duration`, then held.
    pub fn ramp(value: f64, duration: f64) -> Self {
        Self::new(vec![[0.0, 0.0], [duration, value]])
    }

    pub fn constant(value: f64) -> Self {
        Self::new(vec![[0.0, value]])
    }

    /// Knot times must be non-decreasing.
    pub fn is_valid(&self) -> bool {
        !self.knots.is_empty()
            && self.knots.iter().all(|k| k[0].is_finite() && k[1].is_finite())
            && self.knots.windows(2).all(|w| w[1][0] >= w[0][0])
    }

    pub fn value(&self, t: f64) -> f64 {
        let k = &self.knots;
        if t <= k[0][0] {
            return k[0][1];
        }
        for w in k.windows(2) {
            let ([t0, v0], [t1, v1]) = (w[0], w[1]);
            if t <= t1 {
                return if t1 > t0 { v0 + (t - t0) * (v1 - v0) / (t1 - t0) } else { v1 };
            }
        }
        k[k.len() - 1][1]
    }

    /// Right derivative.
    pub fn rate(&self, t: f64) -> f64 {
        for w in self.knots.windows(2) {
            let ([t0, v0], [t1, v1]) = (w[0], w[1]);
            if t >= t0 && t < t1 {
                return (v1 - v0) / (t1 - t0);
            }
        }
        0.0
    }

    pub fn end_time(&self) -> f64 {
        self.knots.last().map_or(0.0, |k| k[0])
    }
}

/// Contact parameters of the rigid base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseContact {
    /// Coulomb friction coefficient.
    pub friction: f64,
    /// Penalty stiffness (Pa/m): contact pressure per unit penetration.
    pub penalty: f64,
    /// Tangential speed below which a point is treated as sticking (m/s).
    pub stick_velocity: f64,
    /// Height of the base plane.
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BoundaryKind {
    /// Displacement component follows `schedule` (relative to the start of
    /// the loading phase).
    PrescribedDisplacement { component: Component, schedule: Schedule },
    /// Components held at their value at the start of the loading phase.
    Fixed { components: Vec<Component> },
    /// Pressure (compression positive) on the exposed faces of the selected
    /// points; `follower` tracks the deformed face normal and area.
    ConstantTraction {
        pressure: f64,
        follower: bool,
        schedule: Option<Schedule>,
    },
    /// Rigid base plane with penalty contact and Coulomb friction. A
    /// `None` penalty means the default `10·K/Δx`.
    FrictionalBase {
        friction: f64,
        penalty: Option<f64>,
        stick_velocity: f64,
        level: Option<f64>,
    },
    /// Initial-stress traction on faces exposed by cut-outs, removed at
    /// `release` over `ramp` seconds.
    RetainingForce { release: f64, ramp: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCondition {
    pub kind: BoundaryKind,
    pub selector: Selector,
}

/// A loaded lattice face of one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadedFace {
    pub point: usize,
    /// Outward reference normal times face length (per unit thickness).
    pub area: Vec2,
}

/// Exposed faces of the selected points. For a side selector only faces
/// pointing out of that side are used.
pub fn loaded_faces(points: &PointSet, selector: &Selector, selected: &[usize], cutout_only: bool) -> Vec<LoadedFace> {
    let faces: Vec<Face> = match selector {
        Selector::Side { side, .. } => vec![*side],
        _ => Face::ALL.to_vec(),
    };
    let mut out = Vec::new();
    for &i in selected {
        let tag = points.tags[i];
        for &face in &faces {
            let hit = if cutout_only { tag.is_cutout(face) } else { tag.is_exposed(face) };
            if hit {
                out.push(LoadedFace {
                    point: i,
                    area: face.normal() * points.spacing,
                });
            }
        }
    }
    out
}

/// Force (per unit thickness) of pressure `p` on a face; the follower form
/// maps the reference area vector by `J F⁻ᵀ`.
#[inline]
pub fn pressure_force(p: f64, area: &Vec2, f: Option<&Mat2>) -> Vec2 {
    match f {
        Some(f) => {
            // J F⁻ᵀ for an in-plane block is its cofactor matrix
            let cof = Mat2::new(f[(1, 1)], -f[(1, 0)], -f[(0, 1)], f[(0, 0)]);
            -p * (cof * area)
        }
        None => -p * area,
    }
}

/// Contact force (per unit thickness) of the rigid base on one point.
///
/// `bottom` is the current height of the point's lower cell face and
/// `face_length` its width. The tangential force is the one that would
/// bring the tangential velocity to rest within the step (`required`),
/// capped at `μ f_n`; above the stick speed a sliding point receives the
/// full kinetic friction unless that would reverse its motion.
#[inline]
pub fn frictional_base(bottom: f64, face_length: f64, tangential_velocity: f64, required: f64, contact: &BaseContact) -> Vec2 {
    let penetration = contact.level - bottom;
    if penetration <= 0.0 {
        return Vec2::zeros();
    }
    let normal = contact.penalty * penetration * face_length;
    let cap = contact.friction * normal;
    let tangential = if tangential_velocity.abs() > contact.stick_velocity {
        let kinetic = -cap * tangential_velocity.signum();
        if kinetic.abs() <= required.abs() && kinetic * required >= 0.0 {
            kinetic
        } else {
            required.clamp(-cap, cap)
        }
    } else {
        required.clamp(-cap, cap)
    };
    Vec2::new(tangential, normal)
}
