//! Reference material-point lattice, horizon families and shape tensors.
//!
//! Points sit at the centres of a uniform `Δx` grid clipped to the scenario
//! region. Each point carries a unit out-of-plane thickness so that volumes
//! are `Δx²·1`. Families are built once in the reference configuration and
//! never rebuilt.

use std::collections::HashMap;
use std::fmt;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::LatticeError;

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

/// Closed polygon given by its vertices in order (either orientation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<[f64; 2]>,
}

impl Polygon {
    pub fn new(vertices: Vec<[f64; 2]>) -> Self {
        Self { vertices }
    }

    /// Even-odd ray casting. Points exactly on an edge are resolved
    /// consistently (half-open in y) so neighbouring polygons never both
    /// claim a cell centre.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let v = &self.vertices;
        let n = v.len();
        if n < 3 {
            return false;
        }
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let (xi, yi) = (v[i][0], v[i][1]);
            let (xj, yj) = (v[j][0], v[j][1]);
            if (yi > p[1]) != (yj > p[1]) {
                let x_cross = xj + (p[1] - yj) * (xi - xj) / (yi - yj);
                if p[0] < x_cross {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    pub fn signed_area(&self) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        let mut a = 0.0;
        for i in 0..n {
            let j = (i + 1) % n;
            a += v[i][0] * v[j][1] - v[j][0] * v[i][1];
        }
        0.5 * a
    }

    /// Highest boundary crossing of the vertical line through `x`.
    pub fn top_at(&self, x: f64) -> Option<f64> {
        let v = &self.vertices;
        let n = v.len();
        let mut top: Option<f64> = None;
        for i in 0..n {
            let (a, b) = (v[i], v[(i + 1) % n]);
            let (lo, hi) = if a[0] <= b[0] { (a, b) } else { (b, a) };
            if x < lo[0] || x > hi[0] {
                continue;
            }
            let y = if hi[0] > lo[0] {
                lo[1] + (x - lo[0]) * (hi[1] - lo[1]) / (hi[0] - lo[0])
            } else {
                lo[1].max(hi[1])
            };
            top = Some(top.map_or(y, |t: f64| t.max(y)));
        }
        top
    }

    pub fn bounding_box(&self) -> Option<([f64; 2], [f64; 2])> {
        let first = self.vertices.first()?;
        let mut lo = *first;
        let mut hi = *first;
        for v in &self.vertices {
            lo[0] = lo[0].min(v[0]);
            lo[1] = lo[1].min(v[1]);
            hi[0] = hi[0].max(v[0]);
            hi[1] = hi[1].max(v[1]);
        }
        Some((lo, hi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Rectangle { min: [f64; 2], max: [f64; 2] },
    Polygon(Polygon),
}

impl Shape {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            // half-open so that abutting rectangles partition the plane
            Shape::Rectangle { min, max } => {
                p[0] >= min[0] && p[0] < max[0] && p[1] >= min[1] && p[1] < max[1]
            }
            Shape::Polygon(poly) => poly.contains(p),
        }
    }

    pub fn bounding_box(&self) -> Option<([f64; 2], [f64; 2])> {
        match self {
            Shape::Rectangle { min, max } => Some((*min, *max)),
            Shape::Polygon(poly) => poly.bounding_box(),
        }
    }

    /// Surface height of the outline above `x`.
    pub fn top_at(&self, x: f64) -> Option<f64> {
        match self {
            Shape::Rectangle { min, max } => (x >= min[0] && x <= max[0]).then_some(max[1]),
            Shape::Polygon(poly) => poly.top_at(x),
        }
    }

    fn is_degenerate(&self) -> bool {
        match self {
            Shape::Rectangle { min, max } => !(max[0] > min[0] && max[1] > min[1]),
            Shape::Polygon(poly) => poly.vertices.len() < 3 || poly.signed_area().abs() <= 0.0,
        }
    }
}

/// Body outline minus any cut-outs (e.g. an eroded toe).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub shape: Shape,
    pub cutouts: Vec<Polygon>,
}

impl Region {
    pub fn rectangle(width: f64, height: f64) -> Self {
        Self {
            shape: Shape::Rectangle {
                min: [0.0, 0.0],
                max: [width, height],
            },
            cutouts: Vec::new(),
        }
    }

    pub fn polygon(vertices: Vec<[f64; 2]>) -> Self {
        Self {
            shape: Shape::Polygon(Polygon::new(vertices)),
            cutouts: Vec::new(),
        }
    }

    pub fn with_cutout(mut self, cutout: Polygon) -> Self {
        self.cutouts.push(cutout);
        self
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.shape.contains(p) && !self.in_cutout(p)
    }

    pub fn in_cutout(&self, p: [f64; 2]) -> bool {
        self.cutouts.iter().any(|c| c.contains(p))
    }
}

/// Lattice face directions, used to describe which cell faces of a point are
/// exposed (free or loaded surface) in the staircase representation of the
/// boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Face {
    Left,
    Right,
    Bottom,
    Top,
}

impl Face {
    pub const ALL: [Face; 4] = [Face::Left, Face::Right, Face::Bottom, Face::Top];

    pub fn bit(self) -> u8 {
        match self {
            Face::Left => 1,
            Face::Right => 2,
            Face::Bottom => 4,
            Face::Top => 8,
        }
    }

    /// Outward unit normal in the reference configuration.
    pub fn normal(self) -> Vec2 {
        match self {
            Face::Left => Vec2::new(-1.0, 0.0),
            Face::Right => Vec2::new(1.0, 0.0),
            Face::Bottom => Vec2::new(0.0, -1.0),
            Face::Top => Vec2::new(0.0, 1.0),
        }
    }

    fn offset(self) -> [i32; 2] {
        match self {
            Face::Left => [-1, 0],
            Face::Right => [1, 0],
            Face::Bottom => [0, -1],
            Face::Top => [0, 1],
        }
    }
}

/// Per-point region labels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointTag {
    /// Faces whose neighbouring lattice cell is not part of the body.
    pub exposed: u8,
    /// Subset of `exposed` where the missing cell lies in a cut-out.
    pub cutout: u8,
    /// Some cell of the 3×3 block around the point is missing.
    pub boundary: bool,
}

impl PointTag {
    pub fn is_exposed(&self, face: Face) -> bool {
        self.exposed & face.bit() != 0
    }

    pub fn is_cutout(&self, face: Face) -> bool {
        self.cutout & face.bit() != 0
    }
}

/// Reference material-point discretization.
#[derive(Debug, Clone)]
pub struct PointSet {
    pub spacing: f64,
    /// Lattice origin: cell `(i, j)` has its centre at
    /// `origin + (i + ½, j + ½)·Δx`.
    pub origin: [f64; 2],
    pub positions: Vec<Vec2>,
    pub cells: Vec<[i32; 2]>,
    pub volumes: Vec<f64>,
    pub densities_partial: Vec<f64>,
    pub porosity0: f64,
    pub tags: Vec<PointTag>,
}

impl PointSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Assigns `ρ_s = (1 − ∅₀)·ρˢ` to every point.
    pub fn with_density(mut self, intrinsic_density: f64, porosity: f64) -> Self {
        let partial = (1.0 - porosity) * intrinsic_density;
        self.porosity0 = porosity;
        self.densities_partial.iter_mut().for_each(|d| *d = partial);
        self
    }

    /// Assigns an already-partial density directly.
    pub fn with_partial_density(mut self, partial: f64, porosity: f64) -> Self {
        self.porosity0 = porosity;
        self.densities_partial.iter_mut().for_each(|d| *d = partial);
        self
    }

    pub fn masses(&self) -> Vec<f64> {
        self.volumes
            .iter()
            .zip(&self.densities_partial)
            .map(|(v, r)| v * r)
            .collect()
    }

    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.positions {
            lo[0] = lo[0].min(p.x);
            lo[1] = lo[1].min(p.y);
            hi[0] = hi[0].max(p.x);
            hi[1] = hi[1].max(p.y);
        }
        (lo, hi)
    }
}

/// Builds the uniform cell-centred lattice clipped to `region`.
///
/// Clipped cells keep their full volume; a cell belongs to the body when
/// its centre does.
pub fn build_grid(region: &Region, spacing: f64) -> Result<PointSet, LatticeError> {
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(LatticeError::InvalidSpacing(spacing));
    }
    if region.shape.is_degenerate() {
        return Err(LatticeError::EmptyRegion(
            "region outline is degenerate".into(),
        ));
    }
    let (lo, hi) = region
        .shape
        .bounding_box()
        .ok_or_else(|| LatticeError::EmptyRegion("region has no vertices".into()))?;
    let origin = lo;
    let nx = ((hi[0] - lo[0]) / spacing).ceil() as i32;
    let ny = ((hi[1] - lo[1]) / spacing).ceil() as i32;
    let center = |i: i32, j: i32| {
        [
            origin[0] + (i as f64 + 0.5) * spacing,
            origin[1] + (j as f64 + 0.5) * spacing,
        ]
    };

    let mut cells = Vec::new();
    let mut positions = Vec::new();
    let mut index = HashMap::new();
    // row-major from the bottom: deterministic point numbering
    for j in 0..ny {
        for i in 0..nx {
            let c = center(i, j);
            if region.contains(c) {
                index.insert([i, j], cells.len());
                cells.push([i, j]);
                positions.push(Vec2::new(c[0], c[1]));
            }
        }
    }
    if cells.is_empty() {
        return Err(LatticeError::EmptyRegion(format!(
            "no lattice cell centre of spacing {spacing} falls inside the region"
        )));
    }

    let tags = cells
        .iter()
        .map(|&[i, j]| {
            let mut tag = PointTag::default();
            for face in Face::ALL {
                let [di, dj] = face.offset();
                let nb = [i + di, j + dj];
                if !index.contains_key(&nb) {
                    tag.exposed |= face.bit();
                    let c = center(nb[0], nb[1]);
                    if region.shape.contains(c) && region.in_cutout(c) {
                        tag.cutout |= face.bit();
                    }
                }
            }
            tag.boundary = (-1..=1)
                .flat_map(|di| (-1..=1).map(move |dj| [i + di, j + dj]))
                .any(|nb| !index.contains_key(&nb));
            tag
        })
        .collect();

    let n = cells.len();
    Ok(PointSet {
        spacing,
        origin,
        positions,
        cells,
        volumes: vec![spacing * spacing; n],
        densities_partial: vec![0.0; n],
        porosity0: 0.0,
        tags,
    })
}

/// Influence function ω(|ξ|).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Influence {
    #[default]
    Constant,
    CubicSpline,
}

impl Influence {
    pub fn eval(self, r: f64, horizon: f64) -> f64 {
        match self {
            Influence::Constant => 1.0,
            Influence::CubicSpline => {
                let q = r / horizon;
                if q <= 0.5 {
                    2.0 / 3.0 - 4.0 * q * q + 4.0 * q * q * q
                } else if q <= 1.0 {
                    4.0 / 3.0 - 4.0 * q + 4.0 * q * q - 4.0 / 3.0 * q * q * q
                } else {
                    0.0
                }
            }
        }
    }
}

/// Partial-volume treatment of bonds that straddle the horizon surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VolumeCorrection {
    None,
    #[default]
    LinearRamp,
}

impl VolumeCorrection {
    pub fn factor(self, r: f64, horizon: f64, spacing: f64) -> f64 {
        match self {
            VolumeCorrection::None => 1.0,
            VolumeCorrection::LinearRamp => {
                ((horizon + 0.5 * spacing - r) / spacing).clamp(0.0, 1.0)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyOptions {
    pub horizon: f64,
    pub influence: Influence,
    pub volume_correction: VolumeCorrection,
}

impl FamilyOptions {
    pub fn new(horizon: f64) -> Self {
        Self {
            horizon,
            influence: Influence::default(),
            volume_correction: VolumeCorrection::default(),
        }
    }
}

/// Shape tensor with its cached inverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeTensor {
    pub k: Mat2,
    pub k_inv: Mat2,
}

/// Horizon families in compressed-row layout.
///
/// Bond `b` in `offsets[i]..offsets[i + 1]` connects point `i` to
/// `neighbors[b]`; `weights[b] = ω·β·V_j` is the quadrature weight used in
/// every bond sum (β is the partial-volume factor).
#[derive(Debug, Clone)]
pub struct Family {
    pub horizon: f64,
    pub offsets: Vec<usize>,
    pub neighbors: Vec<u32>,
    pub bonds: Vec<Vec2>,
    pub lengths: Vec<f64>,
    pub influence: Vec<f64>,
    pub volume_factors: Vec<f64>,
    pub weights: Vec<f64>,
    pub shape: Vec<Mat2>,
    pub shape_inv: Vec<Mat2>,
    /// Points whose shape tensor is singular (empty or collinear family).
    pub degenerate: Vec<usize>,
}

impl Family {
    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn size(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn neighbors_of(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.neighbors[self.range(i)].iter().map(|&j| j as usize)
    }

    /// Fails when any point has a singular shape tensor.
    pub fn ensure_regular(&self) -> Result<(), LatticeError> {
        match self.degenerate.first() {
            Some(&point) => Err(LatticeError::DegenerateShape {
                point,
                count: self.degenerate.len(),
            }),
            None => Ok(()),
        }
    }

    pub fn report(&self, points: &PointSet) -> LatticeReport {
        let mut histogram = std::collections::BTreeMap::new();
        for i in 0..self.len() {
            *histogram.entry(self.size(i)).or_insert(0usize) += 1;
        }
        LatticeReport {
            points: points.len(),
            spacing: points.spacing,
            horizon: self.horizon,
            bonds: self.neighbors.len(),
            histogram,
            degenerate: self.degenerate.clone(),
        }
    }
}

/// Builds reference-configuration families by spatial binning.
pub fn build_families(points: &PointSet, options: FamilyOptions) -> Result<Family, LatticeError> {
    let horizon = options.horizon;
    let dx = points.spacing;
    if !(horizon >= dx * (1.0 - 1e-12)) {
        return Err(LatticeError::InvalidHorizon { horizon, spacing: dx });
    }
    // lattice distances are products of Δx; absorb round-off at |ξ| = δ
    let reach = horizon * (1.0 + 1e-9);
    let reach2 = reach * reach;

    let bin_of = |p: &Vec2| -> (i64, i64) {
        (
            ((p.x - points.origin[0]) / horizon).floor() as i64,
            ((p.y - points.origin[1]) / horizon).floor() as i64,
        )
    };
    let mut bins: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
    for (i, p) in points.positions.iter().enumerate() {
        bins.entry(bin_of(p)).or_default().push(i as u32);
    }

    let n = points.len();
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    let mut neighbors = Vec::new();
    let mut bonds = Vec::new();
    let mut lengths = Vec::new();
    let mut influence = Vec::new();
    let mut volume_factors = Vec::new();
    let mut weights = Vec::new();
    let mut candidates = Vec::new();

    for (i, xi) in points.positions.iter().enumerate() {
        let (bx, by) = bin_of(xi);
        candidates.clear();
        for ox in -1..=1 {
            for oy in -1..=1 {
                if let Some(list) = bins.get(&(bx + ox, by + oy)) {
                    candidates.extend_from_slice(list);
                }
            }
        }
        candidates.sort_unstable();
        for &j in &candidates {
            if j as usize == i {
                continue;
            }
            let xi_vec = points.positions[j as usize] - xi;
            let r2 = xi_vec.norm_squared();
            if r2 > reach2 {
                continue;
            }
            let r = r2.sqrt();
            let w = options.influence.eval(r.min(horizon), horizon);
            let beta = options.volume_correction.factor(r, horizon, dx);
            neighbors.push(j);
            bonds.push(xi_vec);
            lengths.push(r);
            influence.push(w);
            volume_factors.push(beta);
            weights.push(w * beta * points.volumes[j as usize]);
        }
        offsets.push(neighbors.len());
    }

    let mut shape = Vec::with_capacity(n);
    let mut shape_inv = Vec::with_capacity(n);
    let mut degenerate = Vec::new();
    for i in 0..n {
        let r = offsets[i]..offsets[i + 1];
        match shape_tensor(&bonds[r.clone()], &weights[r]) {
            Ok(st) => {
                shape.push(st.k);
                shape_inv.push(st.k_inv);
            }
            Err(_) => {
                degenerate.push(i);
                shape.push(Mat2::zeros());
                shape_inv.push(Mat2::zeros());
            }
        }
    }

    Ok(Family {
        horizon,
        offsets,
        neighbors,
        bonds,
        lengths,
        influence,
        volume_factors,
        weights,
        shape,
        shape_inv,
        degenerate,
    })
}

/// `𝒦 = Σ w (ξ ⊗ ξ)` over one family, where `w` already folds in ω, the
/// partial-volume factor and the neighbour volume.
pub fn shape_tensor(bonds: &[Vec2], weights: &[f64]) -> Result<ShapeTensor, LatticeError> {
    if bonds.is_empty() {
        return Err(LatticeError::SingularShape("empty family".into()));
    }
    let mut k = Mat2::zeros();
    for (xi, &w) in bonds.iter().zip(weights) {
        k += w * xi * xi.transpose();
    }
    // symmetric 2×2 is SPD iff trace > 0 and det > 0; test det relative to
    // trace² so that the check is scale free
    let tr = k.trace();
    let det = k.determinant();
    if !(tr > 0.0) || det <= 1e-12 * tr * tr {
        return Err(LatticeError::SingularShape(format!(
            "shape tensor not positive definite (trace {tr:e}, det {det:e})"
        )));
    }
    let k_inv = Mat2::new(k[(1, 1)], -k[(0, 1)], -k[(1, 0)], k[(0, 0)]) / det;
    Ok(ShapeTensor { k, k_inv })
}

/// Summary of a lattice/family build, written next to run outputs.
#[derive(Debug, Clone)]
pub struct LatticeReport {
    pub points: usize,
    pub spacing: f64,
    pub horizon: f64,
    pub bonds: usize,
    pub histogram: std::collections::BTreeMap<usize, usize>,
    pub degenerate: Vec<usize>,
}

impl fmt::Display for LatticeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "points: {}", self.points)?;
        writeln!(f, "spacing: {}", self.spacing)?;
        writeln!(f, "horizon: {}", self.horizon)?;
        writeln!(f, "bonds: {}", self.bonds)?;
        writeln!(f, "family size histogram:")?;
        for (size, count) in &self.histogram {
            writeln!(f, "  {size:>4} neighbours: {count}")?;
        }
        if self.degenerate.is_empty() {
            writeln!(f, "degenerate points: none")
        } else {
            writeln!(f, "degenerate points: {:?}", self.degenerate)
        }
    }
}
