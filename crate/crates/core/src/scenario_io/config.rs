//! Scenario files: a TOML document describing geometry, material,
//! discretization, loading and outputs.
//!
//! All quantities are SI (m, s, kg/m³, Pa) except angles, which are in
//! degrees. Validation collects every problem it finds; each issue carries
//! the dotted field path and, when the field exists in the text, its line.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::dynamics::{
    BoundaryCondition, BoundaryKind, Component, InitialStress, Material, ModelSetup, NewmarkConfig, OutputPlan,
    Relaxation, Schedule, Selector, Stabilization,
};
use crate::error::{ConfigErrors, ConfigIssue, SimulationError};
use crate::lattice::{build_families, build_grid, Face, FamilyOptions, Influence, Polygon, Region, Shape, Vec2, VolumeCorrection};
use crate::plasticity::{ConeFit, DruckerPrager, ElasticModuli};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Geometry {
    Rectangle {
        origin: [f64; 2],
        width: f64,
        height: f64,
    },
    Polygon {
        outline: Vec<[f64; 2]>,
        cutouts: Vec<Vec<[f64; 2]>>,
    },
}

impl Geometry {
    pub fn region(&self) -> Region {
        match self {
            Geometry::Rectangle { origin, width, height } => Region {
                shape: Shape::Rectangle {
                    min: *origin,
                    max: [origin[0] + width, origin[1] + height],
                },
                cutouts: Vec::new(),
            },
            Geometry::Polygon { outline, cutouts } => Region {
                shape: Shape::Polygon(Polygon::new(outline.clone())),
                cutouts: cutouts.iter().map(|c| Polygon::new(c.clone())).collect(),
            },
        }
    }

    /// Right-most point of the highest part of the outline (the crest of a
    /// slope).
    pub fn crest(&self) -> [f64; 2] {
        match self {
            Geometry::Rectangle { origin, width, height } => [origin[0] + width, origin[1] + height],
            Geometry::Polygon { outline, .. } => {
                let top = outline.iter().map(|v| v[1]).fold(f64::NEG_INFINITY, f64::max);
                let x = outline
                    .iter()
                    .filter(|v| v[1] == top)
                    .map(|v| v[0])
                    .fold(f64::NEG_INFINITY, f64::max);
                [x, top]
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Density {
    /// Intrinsic solid density `ρˢ`; the partial density is `(1 − ∅₀)ρˢ`.
    Intrinsic(f64),
    /// Partial density `ρ_s` given directly.
    Partial(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Moduli {
    BulkShear { bulk: f64, shear: f64 },
    YoungPoisson { young: f64, poisson: f64 },
}

impl Moduli {
    pub fn elastic(&self) -> Result<ElasticModuli, String> {
        match *self {
            Moduli::BulkShear { bulk, shear } => ElasticModuli::new(bulk, shear),
            Moduli::YoungPoisson { young, poisson } => ElasticModuli::from_young_poisson(young, poisson),
        }
        .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialSpec {
    pub density: Density,
    pub porosity: f64,
    pub moduli: Moduli,
    pub cohesion: f64,
    pub residual_cohesion: f64,
    pub softening_modulus: f64,
    pub friction_angle: f64,
    pub dilatancy_angle: f64,
    pub cone_fit: ConeFit,
    /// `false` disables yielding (elastic variant).
    pub plastic: bool,
}

impl MaterialSpec {
    pub fn partial_density(&self) -> f64 {
        match self.density {
            Density::Intrinsic(rho) => (1.0 - self.porosity) * rho,
            Density::Partial(rho) => rho,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub spacing: f64,
    pub horizon_ratio: f64,
    pub influence: Influence,
    pub volume_correction: VolumeCorrection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub interval: f64,
    pub curve_interval: Option<f64>,
    pub log_every: u64,
    pub checkpoint_every: Option<f64>,
    pub directory: Option<String>,
    pub lattice_report: bool,
}

impl OutputSpec {
    pub fn plan(&self) -> OutputPlan {
        OutputPlan {
            interval: self.interval,
            curve_interval: self.curve_interval.unwrap_or(self.interval),
            log_every: self.log_every,
            checkpoint_every: self.checkpoint_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub description: Option<String>,
    pub geometry: Geometry,
    pub material: MaterialSpec,
    pub discretization: Discretization,
    pub stabilization: f64,
    /// Magnitude of gravity, acting along −y (m/s²).
    pub gravity: f64,
    pub initial_stress: InitialStress,
    pub relaxation: Option<Relaxation>,
    pub integrator: NewmarkConfig,
    pub boundaries: Vec<BoundaryCondition>,
    pub output: OutputSpec,
}

impl Scenario {
    pub fn moduli(&self) -> ElasticModuli {
        self.material.moduli.elastic().expect("validated")
    }

    pub fn horizon(&self) -> f64 {
        self.discretization.horizon_ratio * self.discretization.spacing
    }

    /// Builds lattice, families and boundary conditions.
    pub fn build(&self) -> Result<ModelSetup, SimulationError> {
        let region = self.geometry.region();
        let points = build_grid(&region, self.discretization.spacing)?;
        let points = match self.material.density {
            Density::Intrinsic(rho) => points.with_density(rho, self.material.porosity),
            Density::Partial(rho) => points.with_partial_density(rho, self.material.porosity),
        };
        let family = build_families(
            &points,
            FamilyOptions {
                horizon: self.horizon(),
                influence: self.discretization.influence,
                volume_correction: self.discretization.volume_correction,
            },
        )?;
        let moduli = self.material.moduli.elastic().map_err(SimulationError::Config)?;
        let m = &self.material;
        let yield_law = if m.plastic {
            Some(
                DruckerPrager::new(
                    m.cohesion,
                    m.residual_cohesion,
                    m.softening_modulus,
                    m.friction_angle,
                    m.dilatancy_angle,
                    m.cone_fit,
                )
                .map_err(|e| SimulationError::Config(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(ModelSetup {
            points,
            family,
            outline: region.shape.clone(),
            material: Material { moduli, yield_law },
            gravity: Vec2::new(0.0, -self.gravity),
            stabilization: Stabilization::new(self.stabilization, moduli.young(), self.horizon()),
            boundaries: self.boundaries.clone(),
            initial_stress: self.initial_stress,
            relaxation: self.relaxation,
            integrator: self.integrator,
        })
    }
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario, ConfigErrors> {
    let table: Table = match text.parse::<Table>() {
        Ok(t) => t,
        Err(e) => {
            let line = e.span().map(|s| line_of(text, s.start));
            return Err(ConfigErrors(vec![ConfigIssue {
                field: "<document>".into(),
                line,
                message: e.message().to_string(),
            }]));
        }
    };
    let mut cx = Ctx {
        lines: key_lines(text),
        issues: Vec::new(),
    };
    let scenario = read_scenario(&mut cx, &table);
    match scenario {
        Some(s) if cx.issues.is_empty() => Ok(s),
        _ => {
            if cx.issues.is_empty() {
                cx.issues.push(ConfigIssue {
                    field: "<document>".into(),
                    line: None,
                    message: "invalid scenario".into(),
                });
            }
            Err(ConfigErrors(cx.issues))
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Dotted key path → 1-based line of the key.
fn key_lines(text: &str) -> HashMap<String, usize> {
    use toml::de::{DeTable, DeValue};
    fn walk(text: &str, prefix: &str, table: &DeTable<'_>, out: &mut HashMap<String, usize>) {
        for (k, v) in table.iter() {
            let path = if prefix.is_empty() {
                k.get_ref().to_string()
            } else {
                format!("{prefix}.{}", k.get_ref())
            };
            out.entry(path.clone()).or_insert_with(|| line_of(text, k.span().start));
            match v.get_ref() {
                DeValue::Table(t) => walk(text, &path, t, out),
                DeValue::Array(items) => {
                    for (n, item) in items.iter().enumerate() {
                        if let DeValue::Table(t) = item.get_ref() {
                            let p = format!("{path}[{n}]");
                            out.entry(p.clone()).or_insert_with(|| line_of(text, item.span().start));
                            walk(text, &p, t, out);
                        }
                    }
                }
                _ => {}
            }
        }
    }
    let mut out = HashMap::new();
    if let Ok(doc) = DeTable::parse(text) {
        walk(text, "", doc.get_ref(), &mut out);
    }
    out
}

struct Ctx {
    lines: HashMap<String, usize>,
    issues: Vec<ConfigIssue>,
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

impl Ctx {
    fn issue(&mut self, field: &str, message: impl Into<String>) {
        // fall back to the closest enclosing table with a known line
        let mut probe = field.to_string();
        let line = loop {
            if let Some(&l) = self.lines.get(&probe) {
                break Some(l);
            }
            match probe.rfind(['.', '[']) {
                Some(k) => probe.truncate(k),
                None => break None,
            }
        };
        self.issues.push(ConfigIssue {
            field: field.to_string(),
            line,
            message: message.into(),
        });
    }

    fn unknown_keys(&mut self, t: &Table, path: &str, allowed: &[&str]) {
        for k in t.keys() {
            if !allowed.contains(&k.as_str()) {
                self.issue(&join(path, k), format!("unknown key (expected one of: {})", allowed.join(", ")));
            }
        }
    }

    fn opt_num(&mut self, t: &Table, path: &str, key: &str) -> Option<f64> {
        match t.get(key)? {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                self.issue(&join(path, key), "expected a number");
                None
            }
        }
    }

    fn num(&mut self, t: &Table, path: &str, key: &str) -> Option<f64> {
        if !t.contains_key(key) {
            self.issue(&join(path, key), "missing");
            return None;
        }
        self.opt_num(t, path, key)
    }

    /// Required number satisfying `ok`, else an issue with `rule`.
    fn checked(&mut self, t: &Table, path: &str, key: &str, rule: &str, ok: impl Fn(f64) -> bool) -> Option<f64> {
        let x = self.num(t, path, key)?;
        self.check(path, key, x, rule, ok)
    }

    fn opt_checked(&mut self, t: &Table, path: &str, key: &str, rule: &str, ok: impl Fn(f64) -> bool) -> Option<Option<f64>> {
        match self.opt_num(t, path, key) {
            Some(x) => self.check(path, key, x, rule, ok).map(Some),
            None if t.contains_key(key) => None,
            None => Some(None),
        }
    }

    fn check(&mut self, path: &str, key: &str, x: f64, rule: &str, ok: impl Fn(f64) -> bool) -> Option<f64> {
        if x.is_finite() && ok(x) {
            Some(x)
        } else {
            self.issue(&join(path, key), format!("{rule}, got {x}"));
            None
        }
    }

    fn opt_int(&mut self, t: &Table, path: &str, key: &str) -> Option<Option<u64>> {
        match t.get(key) {
            None => Some(None),
            Some(Value::Integer(i)) if *i >= 0 => Some(Some(*i as u64)),
            Some(_) => {
                self.issue(&join(path, key), "expected a non-negative integer");
                None
            }
        }
    }

    fn opt_bool(&mut self, t: &Table, path: &str, key: &str) -> Option<Option<bool>> {
        match t.get(key) {
            None => Some(None),
            Some(Value::Boolean(b)) => Some(Some(*b)),
            Some(_) => {
                self.issue(&join(path, key), "expected true or false");
                None
            }
        }
    }

    fn opt_str<'t>(&mut self, t: &'t Table, path: &str, key: &str) -> Option<Option<&'t str>> {
        match t.get(key) {
            None => Some(None),
            Some(Value::String(s)) => Some(Some(s.as_str())),
            Some(_) => {
                self.issue(&join(path, key), "expected a string");
                None
            }
        }
    }

    fn str<'t>(&mut self, t: &'t Table, path: &str, key: &str) -> Option<&'t str> {
        match self.opt_str(t, path, key)? {
            Some(s) => Some(s),
            None => {
                self.issue(&join(path, key), "missing");
                None
            }
        }
    }

    fn pair(&mut self, v: &Value, field: &str) -> Option<[f64; 2]> {
        let nums = match v {
            Value::Array(a) if a.len() == 2 => a
                .iter()
                .map(|x| match x {
                    Value::Float(f) => Some(*f),
                    Value::Integer(i) => Some(*i as f64),
                    _ => None,
                })
                .collect::<Option<Vec<f64>>>(),
            _ => None,
        };
        match nums {
            Some(n) if n.iter().all(|x| x.is_finite()) => Some([n[0], n[1]]),
            _ => {
                self.issue(field, "expected a pair of numbers [a, b]");
                None
            }
        }
    }

    fn pairs(&mut self, v: &Value, field: &str) -> Option<Vec<[f64; 2]>> {
        match v {
            Value::Array(a) => {
                let mut out = Vec::with_capacity(a.len());
                let mut ok = true;
                for (k, item) in a.iter().enumerate() {
                    match self.pair(item, &format!("{field}[{k}]")) {
                        Some(p) => out.push(p),
                        None => ok = false,
                    }
                }
                ok.then_some(out)
            }
            _ => {
                self.issue(field, "expected an array of [a, b] pairs");
                None
            }
        }
    }

    fn section<'t>(&mut self, t: &'t Table, key: &str, required: bool) -> Option<&'t Table> {
        match t.get(key) {
            Some(Value::Table(s)) => Some(s),
            Some(_) => {
                self.issue(key, "expected a table");
                None
            }
            None => {
                if required {
                    self.issue(key, format!("{key} missing"));
                }
                None
            }
        }
    }
}

fn read_scenario(cx: &mut Ctx, root: &Table) -> Option<Scenario> {
    cx.unknown_keys(
        root,
        "",
        &[
            "name",
            "description",
            "gravity",
            "geometry",
            "material",
            "discretization",
            "stabilization",
            "initial_stress",
            "relaxation",
            "integrator",
            "boundary",
            "output",
        ],
    );
    let name = cx.opt_str(root, "", "name").flatten().unwrap_or("scenario").to_string();
    let description = cx.opt_str(root, "", "description").flatten().map(str::to_string);
    let gravity = cx
        .opt_checked(root, "", "gravity", "gravity must be non-negative (magnitude along -y)", |g| g >= 0.0)
        .map(|g| g.unwrap_or(0.0));

    let geometry = cx.section(root, "geometry", true).and_then(|t| read_geometry(cx, t));
    let material = cx.section(root, "material", true).and_then(|t| read_material(cx, t));
    let discretization = cx
        .section(root, "discretization", true)
        .and_then(|t| read_discretization(cx, t));
    let stabilization = match cx.section(root, "stabilization", false) {
        Some(t) => {
            cx.unknown_keys(t, "stabilization", &["coefficient"]);
            cx.opt_checked(t, "stabilization", "coefficient", "must be non-negative", |x| x >= 0.0)
                .map(|c| c.unwrap_or(0.5))
        }
        None => Some(0.5),
    };
    let initial_stress = match cx.section(root, "initial_stress", false) {
        Some(t) => read_initial_stress(cx, t),
        None => Some(InitialStress::None),
    };
    let relaxation = match cx.section(root, "relaxation", false) {
        Some(t) => read_relaxation(cx, t).map(Some),
        None => Some(None),
    };
    let integrator = cx.section(root, "integrator", true).and_then(|t| read_integrator(cx, t));
    let boundaries = match root.get("boundary") {
        None => Some(Vec::new()),
        Some(Value::Array(items)) => {
            let mut out = Vec::new();
            let mut ok = true;
            for (k, item) in items.iter().enumerate() {
                let path = format!("boundary[{k}]");
                match item {
                    Value::Table(t) => match read_boundary(cx, t, &path) {
                        Some(b) => out.push(b),
                        None => ok = false,
                    },
                    _ => {
                        cx.issue(&path, "expected a table");
                        ok = false;
                    }
                }
            }
            ok.then_some(out)
        }
        Some(_) => {
            cx.issue("boundary", "expected an array of tables ([[boundary]])");
            None
        }
    };
    let output = match cx.section(root, "output", false) {
        Some(t) => read_output(cx, t),
        None => Some(OutputSpec {
            interval: 0.0,
            curve_interval: None,
            log_every: 1000,
            checkpoint_every: None,
            directory: None,
            lattice_report: true,
        }),
    };

    // cross-field checks
    if let (Some(integrator), Some(boundaries)) = (&integrator, &boundaries) {
        for (k, bc) in boundaries.iter().enumerate() {
            let schedule = match &bc.kind {
                BoundaryKind::PrescribedDisplacement { schedule, .. } => Some(schedule),
                BoundaryKind::ConstantTraction { schedule, .. } => schedule.as_ref(),
                _ => None,
            };
            if let Some(s) = schedule {
                if s.knots.iter().any(|k| k[0] < 0.0 || k[0] > integrator.end_time * (1.0 + 1e-12)) {
                    cx.issue(
                        &format!("boundary[{k}].schedule"),
                        format!("schedule times must lie in [0, end_time = {}]", integrator.end_time),
                    );
                }
            }
            if let BoundaryKind::RetainingForce { release, .. } = &bc.kind {
                if *release > integrator.end_time {
                    cx.issue(&format!("boundary[{k}].release"), "release time after end_time");
                }
            }
        }
    }
    if let (Some(Geometry::Rectangle { .. }), Some(b)) = (&geometry, &boundaries) {
        if b.iter().any(|bc| matches!(bc.kind, BoundaryKind::RetainingForce { .. })) {
            cx.issue("boundary", "retaining force needs a polygon geometry with cutouts");
        }
    }

    Some(Scenario {
        name,
        description,
        geometry: geometry?,
        material: material?,
        discretization: discretization?,
        stabilization: stabilization?,
        gravity: gravity?,
        initial_stress: initial_stress?,
        relaxation: relaxation?,
        integrator: integrator?,
        boundaries: boundaries?,
        output: output?,
    })
}

fn read_geometry(cx: &mut Ctx, t: &Table) -> Option<Geometry> {
    let p = "geometry";
    match cx.str(t, p, "kind")? {
        "rectangle" => {
            cx.unknown_keys(t, p, &["kind", "width", "height", "origin"]);
            let width = cx.checked(t, p, "width", "must be positive (m)", |x| x > 0.0);
            let height = cx.checked(t, p, "height", "must be positive (m)", |x| x > 0.0);
            let origin = match t.get("origin") {
                Some(v) => cx.pair(v, "geometry.origin"),
                None => Some([0.0, 0.0]),
            };
            Some(Geometry::Rectangle {
                origin: origin?,
                width: width?,
                height: height?,
            })
        }
        "polygon" => {
            cx.unknown_keys(t, p, &["kind", "outline", "cutouts"]);
            let outline = match t.get("outline") {
                Some(v) => cx.pairs(v, "geometry.outline"),
                None => {
                    cx.issue("geometry.outline", "missing");
                    None
                }
            };
            if let Some(o) = &outline {
                if o.len() < 3 || Polygon::new(o.clone()).signed_area().abs() == 0.0 {
                    cx.issue("geometry.outline", "outline needs at least three non-collinear vertices");
                }
            }
            let cutouts = match t.get("cutouts") {
                None => Some(Vec::new()),
                Some(Value::Array(items)) => {
                    let mut out = Vec::new();
                    let mut ok = true;
                    for (k, item) in items.iter().enumerate() {
                        match cx.pairs(item, &format!("geometry.cutouts[{k}]")) {
                            Some(c) if c.len() >= 3 => out.push(c),
                            Some(_) => {
                                cx.issue(&format!("geometry.cutouts[{k}]"), "a cutout needs at least three vertices");
                                ok = false;
                            }
                            None => ok = false,
                        }
                    }
                    ok.then_some(out)
                }
                Some(_) => {
                    cx.issue("geometry.cutouts", "expected an array of polygons");
                    None
                }
            };
            Some(Geometry::Polygon {
                outline: outline?,
                cutouts: cutouts?,
            })
        }
        other => {
            cx.issue("geometry.kind", format!("unknown geometry kind {other:?} (rectangle, polygon)"));
            None
        }
    }
}

fn read_material(cx: &mut Ctx, t: &Table) -> Option<MaterialSpec> {
    let p = "material";
    cx.unknown_keys(
        t,
        p,
        &[
            "intrinsic_density",
            "partial_density",
            "porosity",
            "bulk_modulus",
            "shear_modulus",
            "young_modulus",
            "poisson_ratio",
            "cohesion",
            "residual_cohesion",
            "softening_modulus",
            "friction_angle",
            "dilatancy_angle",
            "cone_fit",
            "plastic",
        ],
    );
    let porosity = cx
        .opt_checked(t, p, "porosity", "porosity must lie in [0, 1)", |x| (0.0..1.0).contains(&x))
        .map(|x| x.unwrap_or(0.0));
    let density = match (t.contains_key("intrinsic_density"), t.contains_key("partial_density")) {
        (true, false) => cx
            .checked(t, p, "intrinsic_density", "must be positive (kg/m³)", |x| x > 0.0)
            .map(Density::Intrinsic),
        (false, true) => cx
            .checked(t, p, "partial_density", "must be positive (kg/m³)", |x| x > 0.0)
            .map(Density::Partial),
        (true, true) => {
            cx.issue("material.partial_density", "give either intrinsic_density or partial_density, not both");
            None
        }
        (false, false) => {
            cx.issue("material.intrinsic_density", "density missing (intrinsic_density or partial_density)");
            None
        }
    };
    let has_kg = t.contains_key("bulk_modulus") || t.contains_key("shear_modulus");
    let has_en = t.contains_key("young_modulus") || t.contains_key("poisson_ratio");
    let moduli = match (has_kg, has_en) {
        (true, false) => {
            let k = cx.checked(t, p, "bulk_modulus", "must be positive (Pa)", |x| x > 0.0);
            let g = cx.checked(t, p, "shear_modulus", "must be positive (Pa)", |x| x > 0.0);
            Some(Moduli::BulkShear { bulk: k?, shear: g? })
        }
        (false, true) => {
            let e = cx.checked(t, p, "young_modulus", "must be positive (Pa)", |x| x > 0.0);
            let nu = cx.checked(t, p, "poisson_ratio", "must lie in (-1, 0.5)", |x| x > -1.0 && x < 0.5);
            Some(Moduli::YoungPoisson { young: e?, poisson: nu? })
        }
        (true, true) => {
            cx.issue("material.young_modulus", "give moduli as (bulk, shear) or (young, poisson), not both");
            None
        }
        (false, false) => {
            cx.issue("material.bulk_modulus", "elastic moduli missing");
            None
        }
    };
    let plastic = cx.opt_bool(t, p, "plastic").map(|b| b.unwrap_or(true));
    let c0 = cx.checked(t, p, "cohesion", "must be positive (Pa)", |x| x > 0.0);
    let cr = cx.checked(t, p, "residual_cohesion", "must be non-negative (Pa)", |x| x >= 0.0);
    let h = cx.num(t, p, "softening_modulus");
    let phi = cx.checked(t, p, "friction_angle", "must lie in [0, 50] degrees", |x| (0.0..=50.0).contains(&x));
    let psi = cx.checked(t, p, "dilatancy_angle", "must lie in [0, 50] degrees", |x| (0.0..=50.0).contains(&x));
    if let (Some(c0), Some(cr)) = (c0, cr) {
        if cr > c0 {
            cx.issue("material.residual_cohesion", format!("residual cohesion {cr} exceeds the initial cohesion {c0}"));
        }
    }
    if let (Some(phi), Some(psi)) = (phi, psi) {
        if psi > phi {
            cx.issue("material.dilatancy_angle", "dilatancy angle exceeds the friction angle");
        }
    }
    let cone_fit = match cx.opt_str(t, p, "cone_fit")? {
        None | Some("compression") => Some(ConeFit::Compression),
        Some("plane-strain") => Some(ConeFit::PlaneStrain),
        Some(other) => {
            cx.issue("material.cone_fit", format!("unknown cone fit {other:?} (compression, plane-strain)"));
            None
        }
    };
    Some(MaterialSpec {
        density: density?,
        porosity: porosity?,
        moduli: moduli?,
        cohesion: c0?,
        residual_cohesion: cr?,
        softening_modulus: h?,
        friction_angle: phi?,
        dilatancy_angle: psi?,
        cone_fit: cone_fit?,
        plastic: plastic?,
    })
}

fn read_discretization(cx: &mut Ctx, t: &Table) -> Option<Discretization> {
    let p = "discretization";
    cx.unknown_keys(t, p, &["spacing", "horizon_ratio", "influence", "volume_correction"]);
    let spacing = cx.checked(t, p, "spacing", "must be positive (m)", |x| x > 0.0);
    let ratio = cx
        .opt_checked(t, p, "horizon_ratio", "horizon must be at least one spacing", |x| x >= 1.0)
        .map(|r| r.unwrap_or(3.0));
    let influence = match cx.opt_str(t, p, "influence")? {
        None | Some("constant") => Some(Influence::Constant),
        Some("cubic-spline") => Some(Influence::CubicSpline),
        Some(other) => {
            cx.issue("discretization.influence", format!("unknown influence {other:?} (constant, cubic-spline)"));
            None
        }
    };
    let volume_correction = match cx.opt_str(t, p, "volume_correction")? {
        None | Some("linear-ramp") => Some(VolumeCorrection::LinearRamp),
        Some("none") => Some(VolumeCorrection::None),
        Some(other) => {
            cx.issue(
                "discretization.volume_correction",
                format!("unknown volume correction {other:?} (linear-ramp, none)"),
            );
            None
        }
    };
    Some(Discretization {
        spacing: spacing?,
        horizon_ratio: ratio?,
        influence: influence?,
        volume_correction: volume_correction?,
    })
}

fn read_initial_stress(cx: &mut Ctx, t: &Table) -> Option<InitialStress> {
    let p = "initial_stress";
    match cx.str(t, p, "kind")? {
        "none" => {
            cx.unknown_keys(t, p, &["kind"]);
            Some(InitialStress::None)
        }
        "isotropic" => {
            cx.unknown_keys(t, p, &["kind", "pressure"]);
            cx.checked(t, p, "pressure", "must be finite (Pa, compression positive)", |_| true)
                .map(|pressure| InitialStress::Isotropic { pressure })
        }
        "geostatic" => {
            cx.unknown_keys(t, p, &["kind", "k0"]);
            cx.checked(t, p, "k0", "K0 must lie in (0, 1]", |x| x > 0.0 && x <= 1.0)
                .map(|k0| InitialStress::Geostatic { k0 })
        }
        other => {
            cx.issue("initial_stress.kind", format!("unknown kind {other:?} (none, isotropic, geostatic)"));
            None
        }
    }
}

fn read_relaxation(cx: &mut Ctx, t: &Table) -> Option<Relaxation> {
    let p = "relaxation";
    cx.unknown_keys(t, p, &["dt", "damping", "tolerance", "max_steps", "plastic"]);
    let d = Relaxation::default();
    let dt = cx.checked(t, p, "dt", "must be positive (s)", |x| x > 0.0);
    let damping = cx
        .opt_checked(t, p, "damping", "must lie in [0, 1)", |x| (0.0..1.0).contains(&x))
        .map(|x| x.unwrap_or(d.damping));
    let tolerance = cx
        .opt_checked(t, p, "tolerance", "must lie in (0, 1)", |x| x > 0.0 && x < 1.0)
        .map(|x| x.unwrap_or(d.tolerance));
    let max_steps = cx.opt_int(t, p, "max_steps").map(|x| x.unwrap_or(d.max_steps));
    let plastic = cx.opt_bool(t, p, "plastic").map(|x| x.unwrap_or(false));
    Some(Relaxation {
        dt: dt?,
        damping: damping?,
        tolerance: tolerance?,
        max_steps: max_steps?,
        plastic: plastic?,
    })
}

fn read_integrator(cx: &mut Ctx, t: &Table) -> Option<NewmarkConfig> {
    let p = "integrator";
    cx.unknown_keys(t, p, &["dt", "end_time", "damping"]);
    let dt = cx.checked(t, p, "dt", "must be positive (s)", |x| x > 0.0);
    let end = cx.checked(t, p, "end_time", "must be non-negative (s)", |x| x >= 0.0);
    let damping = cx
        .opt_checked(t, p, "damping", "must lie in [0, 1)", |x| (0.0..1.0).contains(&x))
        .map(|x| x.unwrap_or(0.0));
    Some(NewmarkConfig {
        dt: dt?,
        end_time: end?,
        damping: damping?,
    })
}

fn read_side(cx: &mut Ctx, s: &str, field: &str) -> Option<Face> {
    match s {
        "left" => Some(Face::Left),
        "right" => Some(Face::Right),
        "bottom" => Some(Face::Bottom),
        "top" => Some(Face::Top),
        other => {
            cx.issue(field, format!("unknown side {other:?} (left, right, bottom, top)"));
            None
        }
    }
}

fn read_component(cx: &mut Ctx, v: &Value, field: &str) -> Option<Component> {
    match v.as_str() {
        Some("x") => Some(Component::X),
        Some("y") => Some(Component::Y),
        _ => {
            cx.issue(field, "expected \"x\" or \"y\"");
            None
        }
    }
}

fn read_selector(cx: &mut Ctx, t: &Table, path: &str, default_all: bool) -> Option<Selector> {
    let side = cx.opt_str(t, path, "side")?;
    let has_box = t.contains_key("box_min") || t.contains_key("box_max");
    let all = cx.opt_bool(t, path, "all")?.unwrap_or(false);
    let count = side.is_some() as u8 + has_box as u8 + all as u8;
    if count > 1 {
        cx.issue(&join(path, "side"), "give exactly one selector: side, box_min/box_max or all");
        return None;
    }
    if let Some(s) = side {
        let face = read_side(cx, s, &join(path, "side"))?;
        let layers = cx.opt_int(t, path, "layers")?.unwrap_or(1);
        if layers == 0 {
            cx.issue(&join(path, "layers"), "must be at least 1");
            return None;
        }
        return Some(Selector::Side {
            side: face,
            layers: layers as usize,
        });
    }
    if has_box {
        let lo = t.get("box_min").and_then(|v| cx.pair(v, &join(path, "box_min")));
        let hi = t.get("box_max").and_then(|v| cx.pair(v, &join(path, "box_max")));
        return match (lo, hi) {
            (Some(min), Some(max)) => Some(Selector::Box { min, max }),
            _ => {
                cx.issue(&join(path, "box_min"), "box selector needs both box_min and box_max");
                None
            }
        };
    }
    if all || default_all {
        return Some(Selector::All);
    }
    cx.issue(path, "no point selector (side, box_min/box_max or all)");
    None
}

fn read_schedule(cx: &mut Ctx, t: &Table, path: &str, required: bool) -> Option<Option<Schedule>> {
    match t.get("schedule") {
        None => {
            if required {
                cx.issue(&join(path, "schedule"), "missing");
                None
            } else {
                Some(None)
            }
        }
        Some(v) => {
            let knots = cx.pairs(v, &join(path, "schedule"))?;
            let s = Schedule::new(knots);
            if !s.is_valid() {
                cx.issue(&join(path, "schedule"), "schedule needs at least one knot with non-decreasing times");
                return None;
            }
            Some(Some(s))
        }
    }
}

fn read_boundary(cx: &mut Ctx, t: &Table, path: &str) -> Option<BoundaryCondition> {
    const SELECT: [&str; 5] = ["side", "layers", "box_min", "box_max", "all"];
    let with = |extra: &[&'static str]| -> Vec<&'static str> {
        let mut v = vec!["kind"];
        v.extend(SELECT);
        v.extend(extra);
        v
    };
    let kind = match cx.str(t, path, "kind")? {
        "prescribed-displacement" => {
            cx.unknown_keys(t, path, &with(&["component", "schedule"]));
            let component = match t.get("component") {
                Some(v) => read_component(cx, v, &join(path, "component")),
                None => {
                    cx.issue(&join(path, "component"), "missing");
                    None
                }
            };
            let schedule = read_schedule(cx, t, path, true)?;
            BoundaryKind::PrescribedDisplacement {
                component: component?,
                schedule: schedule?,
            }
        }
        "fixed" => {
            cx.unknown_keys(t, path, &with(&["components"]));
            let components = match t.get("components") {
                Some(Value::Array(a)) if !a.is_empty() => {
                    let mut out = Vec::new();
                    for (k, v) in a.iter().enumerate() {
                        out.push(read_component(cx, v, &format!("{path}.components[{k}]"))?);
                    }
                    out
                }
                _ => {
                    cx.issue(&join(path, "components"), "expected a non-empty list such as [\"x\", \"y\"]");
                    return None;
                }
            };
            BoundaryKind::Fixed { components }
        }
        "traction" => {
            cx.unknown_keys(t, path, &with(&["pressure", "follower", "schedule"]));
            let pressure = cx.checked(t, path, "pressure", "must be finite (Pa, compression positive)", |_| true);
            let follower = cx.opt_bool(t, path, "follower").map(|b| b.unwrap_or(false));
            let schedule = read_schedule(cx, t, path, false);
            BoundaryKind::ConstantTraction {
                pressure: pressure?,
                follower: follower?,
                schedule: schedule?,
            }
        }
        "frictional-base" => {
            cx.unknown_keys(t, path, &with(&["friction", "penalty", "stick_velocity", "level"]));
            let friction = cx.checked(t, path, "friction", "must be non-negative", |x| x >= 0.0);
            let penalty = cx.opt_checked(t, path, "penalty", "must be positive (Pa/m)", |x| x > 0.0);
            let stick = cx
                .opt_checked(t, path, "stick_velocity", "must be non-negative (m/s)", |x| x >= 0.0)
                .map(|x| x.unwrap_or(1e-6));
            let level = cx.opt_checked(t, path, "level", "must be finite (m)", |_| true);
            BoundaryKind::FrictionalBase {
                friction: friction?,
                penalty: penalty?,
                stick_velocity: stick?,
                level: level?,
            }
        }
        "retaining-force" => {
            cx.unknown_keys(t, path, &with(&["release", "ramp"]));
            let release = cx.checked(t, path, "release", "must be non-negative (s)", |x| x >= 0.0);
            let ramp = cx
                .opt_checked(t, path, "ramp", "must be non-negative (s)", |x| x >= 0.0)
                .map(|x| x.unwrap_or(0.0));
            BoundaryKind::RetainingForce {
                release: release?,
                ramp: ramp?,
            }
        }
        other => {
            cx.issue(
                &join(path, "kind"),
                format!(
                    "unknown boundary kind {other:?} (prescribed-displacement, fixed, traction, frictional-base, retaining-force)"
                ),
            );
            return None;
        }
    };
    let default_all = matches!(kind, BoundaryKind::FrictionalBase { .. } | BoundaryKind::RetainingForce { .. });
    let selector = read_selector(cx, t, path, default_all)?;
    Some(BoundaryCondition { kind, selector })
}

fn read_output(cx: &mut Ctx, t: &Table) -> Option<OutputSpec> {
    let p = "output";
    cx.unknown_keys(
        t,
        p,
        &["interval", "curve_interval", "log_every", "checkpoint_every", "directory", "lattice_report"],
    );
    let interval = cx
        .opt_checked(t, p, "interval", "must be non-negative (s)", |x| x >= 0.0)
        .map(|x| x.unwrap_or(0.0));
    let curve = cx.opt_checked(t, p, "curve_interval", "must be positive (s)", |x| x > 0.0);
    let log_every = cx.opt_int(t, p, "log_every").map(|x| x.unwrap_or(1000));
    let ckpt = cx.opt_checked(t, p, "checkpoint_every", "must be positive (s)", |x| x > 0.0);
    let directory = cx.opt_str(t, p, "directory").map(|d| d.map(str::to_string));
    let report = cx.opt_bool(t, p, "lattice_report").map(|b| b.unwrap_or(true));
    Some(OutputSpec {
        interval: interval?,
        curve_interval: curve?,
        log_every: log_every?,
        checkpoint_every: ckpt?,
        directory: directory?,
        lattice_report: report?,
    })
}

/// Serializes a scenario back into the file format.
pub fn write_scenario(s: &Scenario) -> String {
    let mut root = Table::new();
    root.insert("name".into(), s.name.clone().into());
    if let Some(d) = &s.description {
        root.insert("description".into(), d.clone().into());
    }
    root.insert("gravity".into(), s.gravity.into());

    let pair = |p: [f64; 2]| Value::Array(vec![p[0].into(), p[1].into()]);
    let pairs = |v: &[[f64; 2]]| Value::Array(v.iter().map(|&p| pair(p)).collect());

    let mut g = Table::new();
    match &s.geometry {
        Geometry::Rectangle { origin, width, height } => {
            g.insert("kind".into(), "rectangle".into());
            g.insert("width".into(), (*width).into());
            g.insert("height".into(), (*height).into());
            g.insert("origin".into(), pair(*origin));
        }
        Geometry::Polygon { outline, cutouts } => {
            g.insert("kind".into(), "polygon".into());
            g.insert("outline".into(), pairs(outline));
            g.insert("cutouts".into(), Value::Array(cutouts.iter().map(|c| pairs(c)).collect()));
        }
    }
    root.insert("geometry".into(), g.into());

    let m = &s.material;
    let mut mt = Table::new();
    match m.density {
        Density::Intrinsic(r) => mt.insert("intrinsic_density".into(), r.into()),
        Density::Partial(r) => mt.insert("partial_density".into(), r.into()),
    };
    mt.insert("porosity".into(), m.porosity.into());
    match m.moduli {
        Moduli::BulkShear { bulk, shear } => {
            mt.insert("bulk_modulus".into(), bulk.into());
            mt.insert("shear_modulus".into(), shear.into());
        }
        Moduli::YoungPoisson { young, poisson } => {
            mt.insert("young_modulus".into(), young.into());
            mt.insert("poisson_ratio".into(), poisson.into());
        }
    }
    mt.insert("cohesion".into(), m.cohesion.into());
    mt.insert("residual_cohesion".into(), m.residual_cohesion.into());
    mt.insert("softening_modulus".into(), m.softening_modulus.into());
    mt.insert("friction_angle".into(), m.friction_angle.into());
    mt.insert("dilatancy_angle".into(), m.dilatancy_angle.into());
    mt.insert(
        "cone_fit".into(),
        match m.cone_fit {
            ConeFit::Compression => "compression",
            ConeFit::PlaneStrain => "plane-strain",
        }
        .into(),
    );
    mt.insert("plastic".into(), m.plastic.into());
    root.insert("material".into(), mt.into());

    let d = &s.discretization;
    let mut dt = Table::new();
    dt.insert("spacing".into(), d.spacing.into());
    dt.insert("horizon_ratio".into(), d.horizon_ratio.into());
    dt.insert(
        "influence".into(),
        match d.influence {
            Influence::Constant => "constant",
            Influence::CubicSpline => "cubic-spline",
        }
        .into(),
    );
    dt.insert(
        "volume_correction".into(),
        match d.volume_correction {
            VolumeCorrection::LinearRamp => "linear-ramp",
            VolumeCorrection::None => "none",
        }
        .into(),
    );
    root.insert("discretization".into(), dt.into());

    let mut st = Table::new();
    st.insert("coefficient".into(), s.stabilization.into());
    root.insert("stabilization".into(), st.into());

    let mut is = Table::new();
    match s.initial_stress {
        InitialStress::None => {
            is.insert("kind".into(), "none".into());
        }
        InitialStress::Isotropic { pressure } => {
            is.insert("kind".into(), "isotropic".into());
            is.insert("pressure".into(), pressure.into());
        }
        InitialStress::Geostatic { k0 } => {
            is.insert("kind".into(), "geostatic".into());
            is.insert("k0".into(), k0.into());
        }
    }
    root.insert("initial_stress".into(), is.into());

    if let Some(r) = &s.relaxation {
        let mut rt = Table::new();
        rt.insert("dt".into(), r.dt.into());
        rt.insert("damping".into(), r.damping.into());
        rt.insert("tolerance".into(), r.tolerance.into());
        rt.insert("max_steps".into(), (r.max_steps as i64).into());
        rt.insert("plastic".into(), r.plastic.into());
        root.insert("relaxation".into(), rt.into());
    }

    let mut it = Table::new();
    it.insert("dt".into(), s.integrator.dt.into());
    it.insert("end_time".into(), s.integrator.end_time.into());
    it.insert("damping".into(), s.integrator.damping.into());
    root.insert("integrator".into(), it.into());

    let comp = |c: Component| -> Value {
        match c {
            Component::X => "x".into(),
            Component::Y => "y".into(),
        }
    };
    let mut bcs = Vec::new();
    for bc in &s.boundaries {
        let mut b = Table::new();
        match &bc.kind {
            BoundaryKind::PrescribedDisplacement { component, schedule } => {
                b.insert("kind".into(), "prescribed-displacement".into());
                b.insert("component".into(), comp(*component));
                b.insert("schedule".into(), pairs(&schedule.knots));
            }
            BoundaryKind::Fixed { components } => {
                b.insert("kind".into(), "fixed".into());
                b.insert("components".into(), Value::Array(components.iter().map(|&c| comp(c)).collect()));
            }
            BoundaryKind::ConstantTraction { pressure, follower, schedule } => {
                b.insert("kind".into(), "traction".into());
                b.insert("pressure".into(), (*pressure).into());
                b.insert("follower".into(), (*follower).into());
                if let Some(s) = schedule {
                    b.insert("schedule".into(), pairs(&s.knots));
                }
            }
            BoundaryKind::FrictionalBase {
                friction,
                penalty,
                stick_velocity,
                level,
            } => {
                b.insert("kind".into(), "frictional-base".into());
                b.insert("friction".into(), (*friction).into());
                if let Some(p) = penalty {
                    b.insert("penalty".into(), (*p).into());
                }
                b.insert("stick_velocity".into(), (*stick_velocity).into());
                if let Some(l) = level {
                    b.insert("level".into(), (*l).into());
                }
            }
            BoundaryKind::RetainingForce { release, ramp } => {
                b.insert("kind".into(), "retaining-force".into());
                b.insert("release".into(), (*release).into());
                b.insert("ramp".into(), (*ramp).into());
            }
        }
        match &bc.selector {
            Selector::Side { side, layers } => {
                let name = match side {
                    Face::Left => "left",
                    Face::Right => "right",
                    Face::Bottom => "bottom",
                    Face::Top => "top",
                };
                b.insert("side".into(), name.into());
                b.insert("layers".into(), (*layers as i64).into());
            }
            Selector::Box { min, max } => {
                b.insert("box_min".into(), pair(*min));
                b.insert("box_max".into(), pair(*max));
            }
            Selector::All => {
                b.insert("all".into(), true.into());
            }
        }
        bcs.push(Value::Table(b));
    }
    if !bcs.is_empty() {
        root.insert("boundary".into(), Value::Array(bcs));
    }

    let o = &s.output;
    let mut ot = Table::new();
    ot.insert("interval".into(), o.interval.into());
    if let Some(c) = o.curve_interval {
        ot.insert("curve_interval".into(), c.into());
    }
    ot.insert("log_every".into(), (o.log_every as i64).into());
    if let Some(c) = o.checkpoint_every {
        ot.insert("checkpoint_every".into(), c.into());
    }
    if let Some(d) = &o.directory {
        ot.insert("directory".into(), d.clone().into());
    }
    ot.insert("lattice_report".into(), o.lattice_report.into());
    root.insert("output".into(), ot.into());

    toml::to_string(&root).expect("scenario tables serialize")
}
