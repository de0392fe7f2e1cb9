//! Image-method specular ray tracer for a rectangular cabin.
//!
//! The cabin is the box `[0, L] x [0, W] x [0, H]` with `x` running from
//! the front panel to the rear end, `y` across the cabin and `z` up. Each of
//! the six faces has its own material. Seats and passengers are modelled as
//! compound axis-aligned boxes that occlude rays; they do not reflect.
//!
//! Specular paths of order `k` are enumerated by mirroring the transmitter
//! through every face sequence of length `k` (no face repeated twice in a
//! row) and walking back from the receiver through the images. A candidate
//! is kept only if every reflection point lands on its face and no segment
//! crosses a blocker.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linksim::LinkBudget;
use crate::pathdata::{Interaction, MultipathComponent, Provenance, RxRecord, ScenarioDataset};
use crate::SPEED_OF_LIGHT;

/// Reflection points may sit this far outside their face and still count.
const FACE_EPS: f64 = 1e-9;
/// Segment parameters closer than this to an endpoint are not tested for
/// blocker hits (endpoints on walls touching a blocker would otherwise count).
const SEGMENT_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("{what} at {point:?} is not strictly inside the cabin {dims:?}")]
    OutsideCabin {
        what: String,
        point: [f64; 3],
        dims: [f64; 3],
    },
    #[error("{what} at {point:?} lies inside blocker {blocker}")]
    InsideBlocker {
        what: String,
        point: [f64; 3],
        blocker: usize,
    },
    #[error("unknown material {0:?}")]
    UnknownMaterial(String),
    #[error("unknown face {0:?}")]
    UnknownFace(String),
    #[error("invalid scene: {0}")]
    Invalid(String),
}

// ---------------------------------------------------------------------------
// Materials and Fresnel reflection
// ---------------------------------------------------------------------------

/// Dielectric material. `permittivity` is `eps' - j eps''` with `eps'' >= 0`,
/// so the stored imaginary part is non-positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub name: String,
    pub permittivity: Complex64,
    /// Layer thickness; informational only, walls are treated as half-spaces.
    pub thickness_cm: Option<f64>,
    pub is_pec: bool,
}

impl Material {
    pub fn new(
        name: &str,
        eps_re: f64,
        eps_im: f64,
        thickness_cm: Option<f64>,
    ) -> Result<Self, GeometryError> {
        let m = Self {
            name: name.to_string(),
            permittivity: Complex64::new(eps_re, eps_im),
            thickness_cm,
            is_pec: false,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn pec() -> Self {
        Self {
            name: "PEC".into(),
            permittivity: Complex64::new(1.0, 0.0),
            thickness_cm: None,
            is_pec: true,
        }
    }

    pub fn glass_carbon() -> Self {
        Self {
            name: "GlassCarbon".into(),
            permittivity: Complex64::new(4.50, -0.05),
            thickness_cm: Some(0.3),
            is_pec: false,
        }
    }

    pub fn human_skin() -> Self {
        Self {
            name: "HumanSkin".into(),
            permittivity: Complex64::new(19.3, -19.5),
            thickness_cm: Some(0.1),
            is_pec: false,
        }
    }

    pub fn nylon() -> Self {
        Self {
            name: "Nylon".into(),
            permittivity: Complex64::new(3.01, -0.021),
            thickness_cm: Some(0.25),
            is_pec: false,
        }
    }

    pub fn glass() -> Self {
        Self {
            name: "Glass".into(),
            permittivity: Complex64::new(6.27, -0.1469),
            thickness_cm: Some(0.3),
            is_pec: false,
        }
    }

    pub fn builtins() -> [Material; 5] {
        [
            Self::pec(),
            Self::glass_carbon(),
            Self::human_skin(),
            Self::nylon(),
            Self::glass(),
        ]
    }

    /// Looks up a built-in material, ignoring case and punctuation.
    pub fn builtin(name: &str) -> Option<Self> {
        match normalize_key(name).as_str() {
            "pec" | "metal" | "metalpec" => Some(Self::pec()),
            "glasscarbon" | "glasscarboncomposite" | "composite" => Some(Self::glass_carbon()),
            "humanskin" | "skin" => Some(Self::human_skin()),
            "nylon" => Some(Self::nylon()),
            "glass" => Some(Self::glass()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.is_pec {
            return Ok(());
        }
        let eps = self.permittivity;
        if !(eps.re.is_finite() && eps.im.is_finite()) || eps.re < 1.0 || eps.im > 0.0 {
            return Err(GeometryError::Invalid(format!(
                "material {}: permittivity {eps} must have Re >= 1 and Im <= 0",
                self.name
            )));
        }
        Ok(())
    }
}

fn normalize_key(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarization {
    /// Electric field perpendicular to the plane of incidence.
    Te,
    /// Electric field in the plane of incidence.
    Tm,
}

/// Fresnel amplitude reflection coefficient at a half-space of `material`
/// for a wave arriving from vacuum at `incidence_rad` from the normal.
///
/// Angles outside `[0, pi/2]` are clamped. PEC returns `-1` (TE) or `+1`
/// (TM).
pub fn fresnel_reflection(
    material: &Material,
    incidence_rad: f64,
    polarization: Polarization,
) -> Complex64 {
    if material.is_pec {
        return match polarization {
            Polarization::Te => Complex64::new(-1.0, 0.0),
            Polarization::Tm => Complex64::new(1.0, 0.0),
        };
    }
    let theta = incidence_rad.clamp(0.0, FRAC_PI_2);
    let (sin, cos) = theta.sin_cos();
    let eps = material.permittivity;
    let root = (eps - sin * sin).sqrt();
    match polarization {
        Polarization::Te => (cos - root) / (cos + root),
        Polarization::Tm => (eps * cos - root) / (eps * cos + root),
    }
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Face {
    /// x = 0
    Front,
    /// x = L
    Back,
    /// y = 0
    Left,
    /// y = W
    Right,
    /// z = 0
    Floor,
    /// z = H
    Ceiling,
}

impl Face {
    pub const ALL: [Face; 6] = [
        Face::Front,
        Face::Back,
        Face::Left,
        Face::Right,
        Face::Floor,
        Face::Ceiling,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn axis(self) -> usize {
        match self {
            Face::Front | Face::Back => 0,
            Face::Left | Face::Right => 1,
            Face::Floor | Face::Ceiling => 2,
        }
    }

    pub fn plane_coord(self, dims: [f64; 3]) -> f64 {
        match self {
            Face::Front | Face::Left | Face::Floor => 0.0,
            Face::Back | Face::Right | Face::Ceiling => dims[self.axis()],
        }
    }

    /// Vertical polarization: horizontal faces see the field in the plane of
    /// incidence, vertical faces across it.
    pub fn polarization(self) -> Polarization {
        match self {
            Face::Floor | Face::Ceiling => Polarization::Tm,
            _ => Polarization::Te,
        }
    }

    pub fn mirror(self, p: [f64; 3], dims: [f64; 3]) -> [f64; 3] {
        let a = self.axis();
        let mut q = p;
        q[a] = 2.0 * self.plane_coord(dims) - p[a];
        q
    }

    pub fn parse(s: &str) -> Result<Face, GeometryError> {
        match normalize_key(s).as_str() {
            "front" => Ok(Face::Front),
            "back" | "rear" => Ok(Face::Back),
            "left" => Ok(Face::Left),
            "right" => Ok(Face::Right),
            "floor" => Ok(Face::Floor),
            "ceiling" | "roof" => Ok(Face::Ceiling),
            _ => Err(GeometryError::UnknownFace(s.to_string())),
        }
    }
}

/// Closed axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        let mut u = *self;
        for a in 0..3 {
            u.min[a] = u.min[a].min(other.min[a]);
            u.max[a] = u.max[a].max(other.max[a]);
        }
        u
    }

    /// Whether the open segment `p + t (q - p)`, `t` in `(eps, 1 - eps)`,
    /// meets the box (slab test).
    pub fn intersects_segment(&self, p: [f64; 3], q: [f64; 3]) -> bool {
        let mut t0 = SEGMENT_EPS;
        let mut t1 = 1.0 - SEGMENT_EPS;
        for a in 0..3 {
            let d = q[a] - p[a];
            if d.abs() < 1e-15 {
                if p[a] < self.min[a] || p[a] > self.max[a] {
                    return false;
                }
                continue;
            }
            let inv = 1.0 / d;
            let mut ta = (self.min[a] - p[a]) * inv;
            let mut tb = (self.max[a] - p[a]) * inv;
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockerKind {
    Seat,
    Human,
}

/// An occluding object made of one or more boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct Blocker {
    pub label: BlockerKind,
    pub material: Material,
    pub parts: Vec<Aabb>,
    bounds: Aabb,
}

impl Blocker {
    pub fn new(
        label: BlockerKind,
        material: Material,
        parts: Vec<Aabb>,
    ) -> Result<Self, GeometryError> {
        let first = *parts
            .first()
            .ok_or_else(|| GeometryError::Invalid("blocker without parts".into()))?;
        for p in &parts {
            if (0..3)
                .any(|a| !(p.min[a] <= p.max[a]) || !p.min[a].is_finite() || !p.max[a].is_finite())
            {
                return Err(GeometryError::Invalid(format!(
                    "degenerate blocker box {p:?}"
                )));
            }
        }
        let bounds = parts.iter().fold(first, |acc, p| acc.union(p));
        Ok(Self {
            label,
            material,
            parts,
            bounds,
        })
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        self.bounds.contains(p) && self.parts.iter().any(|b| b.contains(p))
    }

    pub fn blocks(&self, p: [f64; 3], q: [f64; 3]) -> bool {
        self.bounds.intersects_segment(p, q)
            && self.parts.iter().any(|b| b.intersects_segment(p, q))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub name: String,
    /// (length, width, height)
    pub cabin_dims_m: [f64; 3],
    /// Indexed by [`Face::index`].
    pub wall_materials: [Material; 6],
    pub blockers: Vec<Blocker>,
    pub tx_position_m: [f64; 3],
    pub rx_grid: Vec<[f64; 3]>,
    pub carrier_hz: f64,
    pub max_reflections: u32,
}

impl Scene {
    pub fn wall(&self, face: Face) -> &Material {
        &self.wall_materials[face.index()]
    }

    pub fn count_blockers(&self, label: BlockerKind) -> usize {
        self.blockers.iter().filter(|b| b.label == label).count()
    }

    fn strictly_inside(&self, p: [f64; 3]) -> bool {
        (0..3).all(|a| p[a].is_finite() && p[a] > 0.0 && p[a] < self.cabin_dims_m[a])
    }

    /// Checks that `p` is strictly inside the cabin and outside all blockers.
    pub fn check_point(&self, what: &str, p: [f64; 3]) -> Result<(), GeometryError> {
        if !self.strictly_inside(p) {
            return Err(GeometryError::OutsideCabin {
                what: what.into(),
                point: p,
                dims: self.cabin_dims_m,
            });
        }
        if let Some(i) = self.blockers.iter().position(|b| b.contains(p)) {
            return Err(GeometryError::InsideBlocker {
                what: what.into(),
                point: p,
                blocker: i,
            });
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self
            .cabin_dims_m
            .iter()
            .any(|d| !(d.is_finite() && *d > 0.0))
        {
            return Err(GeometryError::Invalid(format!(
                "cabin dims {:?} must be positive",
                self.cabin_dims_m
            )));
        }
        if !(self.carrier_hz.is_finite() && self.carrier_hz > 0.0) {
            return Err(GeometryError::Invalid(format!(
                "carrier {} Hz must be positive",
                self.carrier_hz
            )));
        }
        for m in &self.wall_materials {
            m.validate()?;
        }
        self.check_point("tx", self.tx_position_m)?;
        for (i, &rx) in self.rx_grid.iter().enumerate() {
            self.check_point(&format!("rx {i}"), rx)?;
        }
        Ok(())
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    fn segment_blocked(&self, p: [f64; 3], q: [f64; 3]) -> bool {
        self.blockers.iter().any(|b| b.blocks(p, q))
    }
}

/// Free-space path loss in dB at distance `d_m` for wavelength `lambda_m`.
pub fn fspl_db(d_m: f64, lambda_m: f64) -> f64 {
    20.0 * (4.0 * PI * d_m / lambda_m).log10()
}

// ---------------------------------------------------------------------------
// Path enumeration
// ---------------------------------------------------------------------------

/// A specular path with its geometry, as found by the tracer.
#[derive(Debug, Clone, PartialEq)]
pub struct TracedPath {
    /// Faces hit, in order from TX to RX. Empty for the direct path.
    pub faces: Vec<Face>,
    /// TX, reflection points, RX.
    pub points: Vec<[f64; 3]>,
    /// Unfolded length, i.e. distance from the last TX image to the RX.
    pub length_m: f64,
    pub component: MultipathComponent,
}

/// All face sequences up to `max_order` without immediate repeats, ordered by
/// length and then lexicographically by face index.
pub fn face_sequences(max_order: u32) -> Vec<Vec<Face>> {
    let mut out: Vec<Vec<Face>> = vec![Vec::new()];
    let mut frontier: Vec<Vec<Face>> = vec![Vec::new()];
    for _ in 0..max_order {
        let mut next = Vec::with_capacity(frontier.len() * 5 + 6);
        for seq in &frontier {
            for f in Face::ALL {
                if seq.last() != Some(&f) {
                    let mut s = seq.clone();
                    s.push(f);
                    next.push(s);
                }
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Azimuth in (-180, 180] and elevation in [-90, 90] of direction `v`, degrees.
pub fn direction_angles_deg(v: [f64; 3]) -> (f64, f64) {
    let mut az = v[1].atan2(v[0]).to_degrees();
    if az <= -180.0 {
        az += 360.0;
    }
    let el = (v[2] / norm(v)).clamp(-1.0, 1.0).asin().to_degrees();
    (az, el)
}

fn trace_sequence(
    scene: &Scene,
    rx: [f64; 3],
    faces: &[Face],
    budget: &LinkBudget,
) -> Option<TracedPath> {
    let dims = scene.cabin_dims_m;
    let tx = scene.tx_position_m;

    let mut images = Vec::with_capacity(faces.len() + 1);
    images.push(tx);
    for f in faces {
        let last = *images.last().unwrap();
        images.push(f.mirror(last, dims));
    }
    let length = norm(sub(*images.last().unwrap(), rx));

    // Walk back from the receiver: the reflection point on face k lies on
    // the segment from the current point toward image k.
    let mut rev_points = Vec::with_capacity(faces.len() + 2);
    rev_points.push(rx);
    let mut current = rx;
    for (k, f) in faces.iter().enumerate().rev() {
        let image = images[k + 1];
        let a = f.axis();
        let denom = image[a] - current[a];
        if denom.abs() < 1e-15 {
            return None;
        }
        let t = (f.plane_coord(dims) - current[a]) / denom;
        if !(t > 0.0 && t < 1.0) {
            return None;
        }
        let mut hit = [0.0; 3];
        for i in 0..3 {
            hit[i] = current[i] + t * (image[i] - current[i]);
        }
        hit[a] = f.plane_coord(dims);
        if (0..3).any(|i| i != a && (hit[i] < -FACE_EPS || hit[i] > dims[i] + FACE_EPS)) {
            return None;
        }
        rev_points.push(hit);
        current = hit;
    }
    rev_points.push(tx);
    rev_points.reverse();
    let points = rev_points;

    if points.windows(2).any(|w| scene.segment_blocked(w[0], w[1])) {
        return None;
    }

    let mut reflection_db = 0.0;
    for (k, f) in faces.iter().enumerate() {
        let incoming = sub(points[k + 1], points[k]);
        let cos_inc = (incoming[f.axis()].abs() / norm(incoming)).clamp(0.0, 1.0);
        let gamma = fresnel_reflection(scene.wall(*f), cos_inc.acos(), f.polarization());
        reflection_db += 20.0 * gamma.norm().log10();
    }

    let power_dbm = budget.tx_power_dbm + budget.gain_tx_dbi + budget.gain_rx_dbi
        - budget.line_loss_db
        - fspl_db(length, scene.wavelength_m())
        + reflection_db;
    if !(power_dbm >= budget.sensitivity_dbm) {
        return None;
    }

    let (aod_az, aod_el) = direction_angles_deg(sub(points[1], points[0]));
    let n = points.len();
    let (aoa_az, aoa_el) = direction_angles_deg(sub(points[n - 2], points[n - 1]));
    let interactions = if faces.is_empty() {
        vec![Interaction::Direct]
    } else {
        vec![Interaction::Reflect; faces.len()]
    };

    Some(TracedPath {
        faces: faces.to_vec(),
        points,
        length_m: length,
        component: MultipathComponent {
            power_dbm,
            delay_ns: length / SPEED_OF_LIGHT * 1e9,
            aod_az_deg: aod_az,
            aod_el_deg: aod_el,
            aoa_az_deg: aoa_az,
            aoa_el_deg: aoa_el,
            interactions,
        },
    })
}

fn trace_with_sequences(
    scene: &Scene,
    rx: [f64; 3],
    budget: &LinkBudget,
    sequences: &[Vec<Face>],
) -> Vec<TracedPath> {
    sequences
        .iter()
        .filter_map(|seq| trace_sequence(scene, rx, seq, budget))
        .collect()
}

/// Traces every specular path from the scene's TX to `rx`, with geometry.
pub fn trace_link_detailed(
    scene: &Scene,
    rx: [f64; 3],
    budget: &LinkBudget,
) -> Result<Vec<TracedPath>, GeometryError> {
    scene.check_point("tx", scene.tx_position_m)?;
    scene.check_point("rx", rx)?;
    let sequences = face_sequences(scene.max_reflections);
    Ok(trace_with_sequences(scene, rx, budget, &sequences))
}

/// Multipath components from the scene's TX to `rx`: the direct path when
/// unobstructed plus every unblocked image path up to `max_reflections`,
/// culled at `budget.sensitivity_dbm`.
pub fn trace_link(
    scene: &Scene,
    rx: [f64; 3],
    budget: &LinkBudget,
) -> Result<Vec<MultipathComponent>, GeometryError> {
    Ok(trace_link_detailed(scene, rx, budget)?
        .into_iter()
        .map(|p| p.component)
        .collect())
}

/// Traces every RX of the grid. Receivers are evaluated in parallel on the
/// current rayon pool; the output order always matches `scene.rx_grid`.
pub fn trace_scenario(
    scene: &Scene,
    budget: &LinkBudget,
) -> Result<ScenarioDataset, GeometryError> {
    scene.validate()?;
    if budget.carrier_hz != scene.carrier_hz {
        return Err(GeometryError::Invalid(format!(
            "link budget carrier {} Hz differs from scene carrier {} Hz",
            budget.carrier_hz, scene.carrier_hz
        )));
    }
    let sequences = face_sequences(scene.max_reflections);
    let records = scene
        .rx_grid
        .par_iter()
        .enumerate()
        .map(|(i, &rx)| {
            let paths = trace_with_sequences(scene, rx, budget, &sequences)
                .into_iter()
                .map(|p| p.component)
                .collect();
            RxRecord::new(i as u32, rx, scene.tx_position_m, paths)
        })
        .collect();
    Ok(ScenarioDataset {
        scenario_name: scene.name.clone(),
        tx_position_m: scene.tx_position_m,
        link_budget: budget.clone(),
        records,
        provenance: Provenance::Synthetic,
    })
}

// ---------------------------------------------------------------------------
// Scenario presets and scene configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioPreset {
    /// Metal fuselage, fully occupied.
    #[serde(rename = "BL")]
    Bl,
    /// Glass-carbon composite fuselage, fully occupied.
    #[serde(rename = "CV")]
    Cv,
    /// Rectangular metal wagon, fully occupied.
    #[serde(rename = "RecV")]
    RecV,
    /// Metal fuselage, seats only.
    #[serde(rename = "EmV")]
    EmV,
}

impl ScenarioPreset {
    pub const ALL: [ScenarioPreset; 4] = [
        ScenarioPreset::Bl,
        ScenarioPreset::Cv,
        ScenarioPreset::RecV,
        ScenarioPreset::EmV,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioPreset::Bl => "BL",
            ScenarioPreset::Cv => "CV",
            ScenarioPreset::RecV => "RecV",
            ScenarioPreset::EmV => "EmV",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match normalize_key(s).as_str() {
            "bl" | "baseline" => Some(ScenarioPreset::Bl),
            "cv" => Some(ScenarioPreset::Cv),
            "recv" => Some(ScenarioPreset::RecV),
            "emv" => Some(ScenarioPreset::EmV),
            _ => None,
        }
    }

    pub fn wall_material(self) -> Material {
        match self {
            ScenarioPreset::Cv => Material::glass_carbon(),
            _ => Material::pec(),
        }
    }

    pub fn has_passengers(self) -> bool {
        self != ScenarioPreset::EmV
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    pub eps_re: f64,
    #[serde(default)]
    pub eps_im: f64,
    #[serde(default)]
    pub pec: bool,
    #[serde(default)]
    pub thickness_cm: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RxGridSpec {
    /// Number of seat rows, one RX surface per row.
    pub rows: Option<usize>,
    pub heights_m: Option<Vec<f64>>,
    pub lateral_step_m: Option<f64>,
}

/// Seat row placement.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutSpec {
    /// x of the front edge of the first seat row.
    pub first_row_m: Option<f64>,
    pub row_pitch_m: Option<f64>,
    /// y of the left edge of each seat in a row.
    pub seat_y_m: Option<Vec<f64>>,
    /// Distance from a seat's rear edge forward to its RX surface.
    pub rx_offset_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockerSpec {
    pub label: BlockerKind,
    pub material: String,
    pub parts: Vec<Aabb>,
}

/// JSON scene configuration; every field overrides the preset default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub preset: Option<String>,
    pub name: Option<String>,
    pub cabin_dims_m: Option<[f64; 3]>,
    /// face -> material name; the key `all` sets every face.
    pub walls: BTreeMap<String, String>,
    /// Extra materials referenced by `walls` or `blockers`.
    pub materials: BTreeMap<String, MaterialSpec>,
    pub tx_m: Option<[f64; 3]>,
    pub rx_grid: RxGridSpec,
    /// Explicit receiver list; replaces the generated grid.
    pub rx_points_m: Option<Vec<[f64; 3]>>,
    pub layout: LayoutSpec,
    /// Explicit blocker list; replaces the generated seats and passengers.
    pub blockers: Option<Vec<BlockerSpec>>,
    pub max_reflections: Option<u32>,
    pub sensitivity_dbm: Option<f64>,
    pub carrier_hz: Option<f64>,
}

pub const DEFAULT_CABIN_DIMS_M: [f64; 3] = [13.5, 4.0, 2.4];
pub const DEFAULT_TX_M: [f64; 3] = [0.1, 1.7, 2.1];
pub const DEFAULT_ROWS: usize = 12;
pub const DEFAULT_RX_HEIGHTS_M: [f64; 5] = [0.6, 0.7, 0.8, 0.9, 1.0];
pub const DEFAULT_LATERAL_STEP_M: f64 = 0.1;
pub const DEFAULT_FIRST_ROW_M: f64 = 1.0;
pub const DEFAULT_ROW_PITCH_M: f64 = 1.0;
pub const DEFAULT_SEAT_Y_M: [f64; 6] = [0.2, 0.7, 1.2, 2.3, 2.8, 3.3];
pub const DEFAULT_RX_OFFSET_M: f64 = 0.75;
pub const DEFAULT_MAX_REFLECTIONS: u32 = 3;

const SEAT_DEPTH_M: f64 = 0.5;
const SEAT_WIDTH_M: f64 = 0.5;
const SEAT_HEIGHT_M: f64 = 1.2;
const CUSHION_HEIGHT_M: f64 = 0.45;
const BACKREST_DEPTH_M: f64 = 0.08;

impl SceneConfig {
    fn resolve_material(&self, name: &str) -> Result<Material, GeometryError> {
        if let Some(spec) = self.materials.get(name) {
            let m = Material {
                name: name.to_string(),
                permittivity: Complex64::new(spec.eps_re, spec.eps_im),
                thickness_cm: spec.thickness_cm,
                is_pec: spec.pec,
            };
            m.validate()?;
            return Ok(m);
        }
        Material::builtin(name).ok_or_else(|| GeometryError::UnknownMaterial(name.to_string()))
    }

    /// Copies link-budget related overrides into `budget`.
    pub fn apply_to_budget(&self, budget: &mut LinkBudget) {
        if let Some(s) = self.sensitivity_dbm {
            budget.sensitivity_dbm = s;
        }
        if let Some(c) = self.carrier_hz {
            budget.carrier_hz = c;
        }
    }
}

/// Seat envelope 0.5 x 0.5 x 1.2 m split into cushion and backrest.
/// `x0` is the front edge, `y0` the left edge; passengers face the front.
fn seat_parts(x0: f64, y0: f64) -> Vec<Aabb> {
    let y1 = y0 + SEAT_WIDTH_M;
    vec![
        Aabb::new([x0, y0, 0.0], [x0 + SEAT_DEPTH_M, y1, CUSHION_HEIGHT_M]),
        Aabb::new(
            [x0 + SEAT_DEPTH_M - BACKREST_DEPTH_M, y0, 0.0],
            [x0 + SEAT_DEPTH_M, y1, SEAT_HEIGHT_M],
        ),
    ]
}

/// Seated passenger: shins, thighs, torso, head.
fn human_parts(x0: f64, y0: f64) -> Vec<Aabb> {
    vec![
        Aabb::new([x0 - 0.18, y0 + 0.10, 0.0], [x0 - 0.08, y0 + 0.40, 0.48]),
        Aabb::new([x0 - 0.15, y0 + 0.08, 0.45], [x0 + 0.35, y0 + 0.42, 0.58]),
        Aabb::new(
            [x0 + 0.18, y0 + 0.05, 0.58],
            [x0 + SEAT_DEPTH_M - BACKREST_DEPTH_M, y0 + 0.45, 1.25],
        ),
        Aabb::new([x0 + 0.22, y0 + 0.15, 1.25], [x0 + 0.40, y0 + 0.35, 1.50]),
    ]
}

/// Builds a scene from a preset with optional overrides.
///
/// Defaults: a 13.5 x 4.0 x 2.4 m cabin, TX 0.1 m behind the front panel at
/// 2.1 m height and 1.7 m from the left wall, 12 rows of 6 nylon seats with
/// a centre aisle, one RX surface per row 0.75 m forward of the seat's rear
/// edge spanning 5 heights (0.6 to 1.0 m) by 40 lateral points (0.1 m
/// pitch), for 2400 receivers.
pub fn build_scenario(preset: ScenarioPreset, cfg: &SceneConfig) -> Result<Scene, GeometryError> {
    let dims = cfg.cabin_dims_m.unwrap_or(DEFAULT_CABIN_DIMS_M);
    let mut walls: [Material; 6] = std::array::from_fn(|_| preset.wall_material());
    if let Some(all) = cfg.walls.get("all") {
        let m = cfg.resolve_material(all)?;
        walls = std::array::from_fn(|_| m.clone());
    }
    for (face, mat) in &cfg.walls {
        if face == "all" {
            continue;
        }
        walls[Face::parse(face)?.index()] = cfg.resolve_material(mat)?;
    }

    let rows = cfg.rx_grid.rows.unwrap_or(DEFAULT_ROWS);
    let first_row = cfg.layout.first_row_m.unwrap_or(DEFAULT_FIRST_ROW_M);
    let pitch = cfg.layout.row_pitch_m.unwrap_or(DEFAULT_ROW_PITCH_M);
    let seat_y = cfg
        .layout
        .seat_y_m
        .clone()
        .unwrap_or_else(|| DEFAULT_SEAT_Y_M.to_vec());
    let rx_offset = cfg.layout.rx_offset_m.unwrap_or(DEFAULT_RX_OFFSET_M);
    let row_x = |r: usize| first_row + r as f64 * pitch;

    let blockers = match &cfg.blockers {
        Some(specs) => specs
            .iter()
            .map(|s| Blocker::new(s.label, cfg.resolve_material(&s.material)?, s.parts.clone()))
            .collect::<Result<Vec<_>, _>>()?,
        None => {
            let mut out = Vec::with_capacity(rows * seat_y.len() * 2);
            for r in 0..rows {
                for &y0 in &seat_y {
                    out.push(Blocker::new(
                        BlockerKind::Seat,
                        Material::nylon(),
                        seat_parts(row_x(r), y0),
                    )?);
                }
            }
            if preset.has_passengers() {
                for r in 0..rows {
                    for &y0 in &seat_y {
                        out.push(Blocker::new(
                            BlockerKind::Human,
                            Material::human_skin(),
                            human_parts(row_x(r), y0),
                        )?);
                    }
                }
            }
            out
        }
    };

    let rx_grid = match &cfg.rx_points_m {
        Some(points) => points.clone(),
        None => {
            let heights = cfg
                .rx_grid
                .heights_m
                .clone()
                .unwrap_or_else(|| DEFAULT_RX_HEIGHTS_M.to_vec());
            let step = cfg.rx_grid.lateral_step_m.unwrap_or(DEFAULT_LATERAL_STEP_M);
            if !(step > 0.0) {
                return Err(GeometryError::Invalid(format!(
                    "lateral step {step} must be positive"
                )));
            }
            let lateral = (dims[1] / step + 1e-9).floor() as usize;
            let mut grid = Vec::with_capacity(rows * heights.len() * lateral);
            for r in 0..rows {
                let x = row_x(r) + SEAT_DEPTH_M - rx_offset;
                for &z in &heights {
                    for j in 0..lateral {
                        grid.push([x, step * (j as f64 + 0.5), z]);
                    }
                }
            }
            grid
        }
    };

    let scene = Scene {
        name: cfg
            .name
            .clone()
            .unwrap_or_else(|| preset.name().to_string()),
        cabin_dims_m: dims,
        wall_materials: walls,
        blockers,
        tx_position_m: cfg.tx_m.unwrap_or(DEFAULT_TX_M),
        rx_grid,
        carrier_hz: cfg.carrier_hz.unwrap_or(LinkBudget::default().carrier_hz),
        max_reflections: cfg.max_reflections.unwrap_or(DEFAULT_MAX_REFLECTIONS),
    };
    scene.validate()?;
    Ok(scene)
}
