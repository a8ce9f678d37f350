//! Model schema, model-file parsing and validation.
//!
//! A model file is a JSON document with the top-level keys `constants`,
//! `materials`, `nodes`, `faces`, `conductors`, `loads`, `orbit` and
//! `rad_couplings`. Units: K, W, m, J; orbit distances in km, angles in
//! degrees. Unknown keys anywhere in the document are rejected.

mod material;
mod mesh;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{PlacedPrimitive, Pose, Primitive, Side};

pub use material::{interpolate, MaterialTable, Property};
pub use mesh::{subdivide_chain, ChainMesh};

/// Stefan-Boltzmann constant, W/(m²·K⁴).
pub const STEFAN_BOLTZMANN: f64 = 5.670374419e-8;

/// Reserved coupling target naming the model's deep-space sink.
pub const SPACE: &str = "space";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: unresolved reference to {kind} '{id}'")]
    UnresolvedReference {
        path: String,
        kind: &'static str,
        id: String,
    },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

impl ModelError {
    fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        ModelError::Invalid {
            path: path.into(),
            message: message.into(),
        }
    }
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Diffusion,
    Boundary,
    Arithmetic,
}

/// Heat capacity of a node: either a fixed m·c in J/K or a mass tied to a
/// material's specific-heat table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Capacity {
    Fixed(f64),
    Material(MaterialCapacity),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialCapacity {
    pub material: String,
    /// kg
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalNode {
    pub id: String,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<Capacity>,
    /// Initial temperature for diffusion nodes, fixed temperature for
    /// boundary nodes, optional starting guess for arithmetic nodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

impl ThermalNode {
    pub fn diffusion(id: &str, capacity: Capacity, temperature: f64) -> Self {
        ThermalNode {
            id: id.into(),
            kind: NodeKind::Diffusion,
            capacity: Some(capacity),
            temperature: Some(temperature),
            group: None,
        }
    }

    pub fn boundary(id: &str, temperature: f64) -> Self {
        ThermalNode {
            id: id.into(),
            kind: NodeKind::Boundary,
            capacity: None,
            temperature: Some(temperature),
            group: None,
        }
    }

    pub fn arithmetic(id: &str) -> Self {
        ThermalNode {
            id: id.into(),
            kind: NodeKind::Arithmetic,
            capacity: None,
            temperature: None,
            group: None,
        }
    }

    pub fn in_group(mut self, group: &str) -> Self {
        self.group = Some(group.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConductorKind {
    Constant,
    Geometric,
}

/// Linear conductive coupling GL between two nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Conductor {
    pub id: String,
    pub node_a: String,
    pub node_b: String,
    pub kind: ConductorKind,
    /// W/K, constant kind only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gl: Option<f64>,
    /// Cross-section S in m², geometric kind only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area: Option<f64>,
    /// Conduction length d in m, geometric kind only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<String>,
}

impl Conductor {
    pub fn constant(id: &str, a: &str, b: &str, gl: f64) -> Self {
        Conductor {
            id: id.into(),
            node_a: a.into(),
            node_b: b.into(),
            kind: ConductorKind::Constant,
            gl: Some(gl),
            area: None,
            length: None,
            material: None,
        }
    }

    pub fn geometric(id: &str, a: &str, b: &str, area: f64, length: f64, material: &str) -> Self {
        Conductor {
            id: id.into(),
            node_a: a.into(),
            node_b: b.into(),
            kind: ConductorKind::Geometric,
            gl: None,
            area: Some(area),
            length: Some(length),
            material: Some(material.into()),
        }
    }

    /// GL in W/K at the mean temperature of the two end nodes.
    ///
    /// `material` must be the table named by the conductor for the geometric
    /// kind; it is ignored for constant conductors.
    pub fn conductance(&self, material: Option<&MaterialTable>, t_mean: f64) -> f64 {
        self.conductance_with_slope(material, t_mean).0
    }

    /// GL and dGL/dT_mean.
    pub fn conductance_with_slope(&self, material: Option<&MaterialTable>, t_mean: f64) -> (f64, f64) {
        match self.kind {
            ConductorKind::Constant => (self.gl.unwrap_or(0.0), 0.0),
            ConductorKind::Geometric => {
                let m = material.expect("geometric conductor evaluated without its material");
                let shape = self.area.unwrap_or(0.0) / self.length.unwrap_or(1.0);
                let (k, dk) = m.eval_with_slope(Property::Conductivity, t_mean);
                (k * shape, dk * shape)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reflection {
    #[default]
    Diffuse,
    Specular,
}

fn default_true() -> bool {
    true
}

fn is_true(v: &bool) -> bool {
    *v
}

fn default_side() -> Side {
    Side::Front
}

fn is_front(s: &Side) -> bool {
    *s == Side::Front
}

/// One side of a placed primitive with gray optical properties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceFace {
    pub id: String,
    pub node: String,
    pub primitive: Primitive,
    #[serde(default, skip_serializing_if = "is_default")]
    pub pose: Pose,
    #[serde(default = "default_side", skip_serializing_if = "is_front")]
    pub side: Side,
    pub alpha: f64,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "is_default")]
    pub reflection: Reflection,
    /// Participates in ray exchange.
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    pub active: bool,
    /// Receives environmental (solar, albedo, planetary) fluxes.
    #[serde(default, skip_serializing_if = "is_default")]
    pub external: bool,
    /// Emits with the high-accuracy ray budget.
    #[serde(default, skip_serializing_if = "is_default")]
    pub high_accuracy: bool,
}

impl SurfaceFace {
    pub fn new(id: &str, node: &str, primitive: Primitive, pose: Pose, side: Side, alpha: f64, epsilon: f64) -> Self {
        SurfaceFace {
            id: id.into(),
            node: node.into(),
            primitive,
            pose,
            side,
            alpha,
            epsilon,
            reflection: Reflection::Diffuse,
            active: true,
            external: false,
            high_accuracy: false,
        }
    }

    pub fn area(&self) -> f64 {
        self.primitive.area()
    }

    pub fn placed(&self) -> Result<PlacedPrimitive, String> {
        PlacedPrimitive::new(self.primitive.clone(), &self.pose)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadKind {
    Constant,
    Sinusoid,
    Timeseries,
}

/// Dissipation applied to a node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatLoad {
    /// Optional label used to address the load in sweeps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub node: String,
    pub kind: LoadKind,
    /// W, constant kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<f64>,
    /// W, sinusoid kind: `mean + amplitude * sin(2π f t)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    /// Hz
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<f64>,
    /// `(t [s], W)` pairs, timeseries kind; linearly interpolated, held at the ends.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<(f64, f64)>>,
}

impl HeatLoad {
    pub fn constant(id: &str, node: &str, power: f64) -> Self {
        HeatLoad {
            id: Some(id.into()),
            node: node.into(),
            kind: LoadKind::Constant,
            power: Some(power),
            mean: None,
            amplitude: None,
            frequency: None,
            samples: None,
        }
    }

    pub fn sinusoid(id: &str, node: &str, mean: f64, amplitude: f64, frequency: f64) -> Self {
        HeatLoad {
            id: Some(id.into()),
            node: node.into(),
            kind: LoadKind::Sinusoid,
            power: None,
            mean: Some(mean),
            amplitude: Some(amplitude),
            frequency: Some(frequency),
            samples: None,
        }
    }

    /// Power in W at time `t`.
    pub fn power_at(&self, t: f64) -> f64 {
        match self.kind {
            LoadKind::Constant => self.power.unwrap_or(0.0),
            LoadKind::Sinusoid => {
                let w = 2.0 * std::f64::consts::PI * self.frequency.unwrap_or(0.0);
                self.mean.unwrap_or(0.0) + self.amplitude.unwrap_or(0.0) * (w * t).sin()
            }
            LoadKind::Timeseries => match self.samples.as_deref() {
                Some(s) if !s.is_empty() => interpolate(s, t).0,
                _ => 0.0,
            },
        }
    }

    /// Time-averaged or nominal power used for steady-state solutions.
    pub fn steady_power(&self) -> f64 {
        match self.kind {
            LoadKind::Constant => self.power.unwrap_or(0.0),
            LoadKind::Sinusoid => self.mean.unwrap_or(0.0),
            LoadKind::Timeseries => self.power_at(0.0),
        }
    }
}

fn default_sigma() -> f64 {
    STEFAN_BOLTZMANN
}
fn default_solar_flux() -> f64 {
    1369.0
}
fn default_albedo() -> f64 {
    0.3
}
fn default_planet_ir() -> f64 {
    257.0
}
fn default_space_node() -> String {
    SPACE.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// W/m² at 1 AU.
    #[serde(default = "default_solar_flux")]
    pub solar_flux: f64,
    #[serde(default = "default_albedo")]
    pub albedo: f64,
    /// K, uniform planetary IR emission temperature (emissivity 1).
    #[serde(default = "default_planet_ir")]
    pub planet_ir_temperature: f64,
    /// Boundary node that receives radiation escaping to space.
    #[serde(default = "default_space_node")]
    pub space_node: String,
}

impl Default for Constants {
    fn default() -> Self {
        Constants {
            sigma: default_sigma(),
            solar_flux: default_solar_flux(),
            albedo: default_albedo(),
            planet_ir_temperature: default_planet_ir(),
            space_node: default_space_node(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attitude {
    /// Body -z axis points at the sun; the instrument side (+z) stays shaded.
    #[default]
    SunOriented,
    /// Body -z axis points at the planet centre.
    Nadir,
    /// Body axes coincide with the inertial frame.
    FixedInertial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum SunModel {
    /// Fixed inertial sun direction.
    Fixed { direction: [f64; 3] },
    /// Sun moving on a circle in the ecliptic, one revolution per year.
    CircularEcliptic {
        #[serde(default)]
        longitude_at_epoch: f64,
        #[serde(default = "default_obliquity")]
        obliquity: f64,
    },
}

fn default_obliquity() -> f64 {
    23.439
}

impl Default for SunModel {
    fn default() -> Self {
        SunModel::Fixed {
            direction: [1.0, 0.0, 0.0],
        }
    }
}

fn default_mu() -> f64 {
    398600.44
}
fn default_radius() -> f64 {
    6371.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CentralBody {
    /// km³/s²
    #[serde(default = "default_mu")]
    pub mu: f64,
    /// km
    #[serde(default = "default_radius")]
    pub radius: f64,
}

impl Default for CentralBody {
    fn default() -> Self {
        CentralBody {
            mu: default_mu(),
            radius: default_radius(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitElements {
    /// km above the body surface.
    pub apogee_altitude: f64,
    pub perigee_altitude: f64,
    /// degrees
    #[serde(default)]
    pub inclination: f64,
    #[serde(default)]
    pub argument_of_periapsis: f64,
    #[serde(default)]
    pub raan: f64,
    #[serde(default)]
    pub true_anomaly_epoch: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitConfig {
    #[serde(default)]
    pub body: CentralBody,
    pub elements: OrbitElements,
    #[serde(default)]
    pub sun: SunModel,
    #[serde(default)]
    pub attitude: Attitude,
}

/// One radiative exchange factor GR in m² between two faces or nodes, or
/// between a face/node and [`SPACE`]. Entries are symmetric: GR(a,b) = GR(b,a).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadEntry {
    pub from: String,
    pub to: String,
    pub gr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadCouplings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Rays emitted per face.
    #[serde(default, skip_serializing_if = "std::collections::BTreeMap::is_empty")]
    pub rays: std::collections::BTreeMap<String, u64>,
    pub entries: Vec<RadEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Model {
    #[serde(default)]
    pub constants: Constants,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub materials: Vec<MaterialTable>,
    pub nodes: Vec<ThermalNode>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub faces: Vec<SurfaceFace>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conductors: Vec<Conductor>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loads: Vec<HeatLoad>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orbit: Option<OrbitConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rad_couplings: Option<RadCouplings>,
}

/// Parses and validates a model file.
pub fn parse_model(text: &str) -> Result<Model, ModelError> {
    let model: Model = serde_json::from_str(text).map_err(|e| ModelError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    model.validate()?;
    Ok(model)
}

impl Model {
    pub fn from_json(text: &str) -> Result<Model, ModelError> {
        parse_model(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization is infallible")
    }

    pub fn node(&self, id: &str) -> Option<&ThermalNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn material(&self, name: &str) -> Option<&MaterialTable> {
        self.materials.iter().find(|m| m.name == name)
    }

    /// Checks every schema invariant and cross-reference.
    pub fn validate(&self) -> Result<(), ModelError> {
        let c = &self.constants;
        for (name, v) in [
            ("sigma", c.sigma),
            ("solar_flux", c.solar_flux),
            ("planet_ir_temperature", c.planet_ir_temperature),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ModelError::invalid(format!("constants.{name}"), "must be > 0"));
            }
        }
        if !(0.0..=1.0).contains(&c.albedo) {
            return Err(ModelError::invalid("constants.albedo", "must lie in [0, 1]"));
        }

        let mut material_names = HashSet::new();
        for m in &self.materials {
            let path = format!("materials[{}]", m.name);
            if !material_names.insert(m.name.as_str()) {
                return Err(ModelError::invalid(path, "duplicate material name"));
            }
            m.check().map_err(|msg| ModelError::invalid(path, msg))?;
        }

        if self.nodes.is_empty() {
            return Err(ModelError::invalid("nodes", "at least one node required"));
        }
        let mut node_kinds: HashMap<&str, NodeKind> = HashMap::new();
        for n in &self.nodes {
            let path = format!("nodes[{}]", n.id);
            if n.id.is_empty() {
                return Err(ModelError::invalid("nodes", "empty node id"));
            }
            if node_kinds.insert(n.id.as_str(), n.kind).is_some() {
                return Err(ModelError::invalid(path, "duplicate node id"));
            }
            if let Some(t) = n.temperature {
                if !(t.is_finite() && t > 0.0) {
                    return Err(ModelError::invalid(format!("{path}.temperature"), "must be > 0 K"));
                }
            }
            match n.kind {
                NodeKind::Diffusion => {
                    match &n.capacity {
                        None => return Err(ModelError::invalid(format!("{path}.capacity"), "diffusion nodes need a capacity")),
                        Some(Capacity::Fixed(v)) => {
                            if !(v.is_finite() && *v > 0.0) {
                                return Err(ModelError::invalid(format!("{path}.capacity"), "must be > 0"));
                            }
                        }
                        Some(Capacity::Material(mc)) => {
                            if !material_names.contains(mc.material.as_str()) {
                                return Err(ModelError::UnresolvedReference {
                                    path: format!("{path}.capacity.material"),
                                    kind: "material",
                                    id: mc.material.clone(),
                                });
                            }
                            if !(mc.mass.is_finite() && mc.mass > 0.0) {
                                return Err(ModelError::invalid(format!("{path}.capacity.mass"), "must be > 0"));
                            }
                        }
                    }
                    if n.temperature.is_none() {
                        return Err(ModelError::invalid(format!("{path}.temperature"), "initial temperature required"));
                    }
                }
                NodeKind::Boundary => {
                    if n.temperature.is_none() {
                        return Err(ModelError::invalid(format!("{path}.temperature"), "boundary temperature required"));
                    }
                    if n.capacity.is_some() {
                        return Err(ModelError::invalid(format!("{path}.capacity"), "boundary nodes carry no capacity"));
                    }
                }
                NodeKind::Arithmetic => {
                    let zero = matches!(n.capacity, None | Some(Capacity::Fixed(0.0)));
                    if !zero {
                        return Err(ModelError::invalid(format!("{path}.capacity"), "arithmetic nodes have zero capacity"));
                    }
                }
            }
        }
        let resolve_node = |path: String, id: &str| -> Result<NodeKind, ModelError> {
            node_kinds
                .get(id)
                .copied()
                .ok_or_else(|| ModelError::UnresolvedReference {
                    path,
                    kind: "node",
                    id: id.to_string(),
                })
        };

        let mut conductor_ids = HashSet::new();
        for cd in &self.conductors {
            let path = format!("conductors[{}]", cd.id);
            if !conductor_ids.insert(cd.id.as_str()) {
                return Err(ModelError::invalid(path, "duplicate conductor id"));
            }
            resolve_node(format!("{path}.node_a"), &cd.node_a)?;
            resolve_node(format!("{path}.node_b"), &cd.node_b)?;
            if cd.node_a == cd.node_b {
                return Err(ModelError::invalid(path, "node_a and node_b must differ"));
            }
            match cd.kind {
                ConductorKind::Constant => {
                    match cd.gl {
                        Some(g) if g.is_finite() && g > 0.0 => {}
                        _ => return Err(ModelError::invalid(format!("{path}.gl"), "constant conductors need gl > 0")),
                    }
                    if cd.area.is_some() || cd.length.is_some() || cd.material.is_some() {
                        return Err(ModelError::invalid(path, "constant conductors take only gl"));
                    }
                }
                ConductorKind::Geometric => {
                    if cd.gl.is_some() {
                        return Err(ModelError::invalid(format!("{path}.gl"), "geometric conductors derive gl from area/length/material"));
                    }
                    for (name, v) in [("area", cd.area), ("length", cd.length)] {
                        match v {
                            Some(x) if x.is_finite() && x > 0.0 => {}
                            _ => return Err(ModelError::invalid(format!("{path}.{name}"), "must be > 0")),
                        }
                    }
                    match &cd.material {
                        None => return Err(ModelError::invalid(format!("{path}.material"), "material required")),
                        Some(m) if !material_names.contains(m.as_str()) => {
                            return Err(ModelError::UnresolvedReference {
                                path: format!("{path}.material"),
                                kind: "material",
                                id: m.clone(),
                            })
                        }
                        Some(_) => {}
                    }
                }
            }
        }

        let mut face_ids = HashSet::new();
        for f in &self.faces {
            let path = format!("faces[{}]", f.id);
            if !face_ids.insert(f.id.as_str()) {
                return Err(ModelError::invalid(path, "duplicate face id"));
            }
            if node_kinds.contains_key(f.id.as_str()) || f.id == SPACE {
                return Err(ModelError::invalid(path, "face ids must not collide with node ids or 'space'"));
            }
            resolve_node(format!("{path}.node"), &f.node)?;
            f.placed()
                .map_err(|msg| ModelError::invalid(format!("{path}.primitive"), msg))?;
            for (name, v) in [("alpha", f.alpha), ("epsilon", f.epsilon)] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(ModelError::invalid(format!("{path}.{name}"), "must lie in [0, 1]"));
                }
            }
        }

        let mut load_ids = HashSet::new();
        for (i, l) in self.loads.iter().enumerate() {
            let path = match &l.id {
                Some(id) => format!("loads[{id}]"),
                None => format!("loads[{i}]"),
            };
            if let Some(id) = &l.id {
                if !load_ids.insert(id.as_str()) {
                    return Err(ModelError::invalid(path, "duplicate load id"));
                }
            }
            resolve_node(format!("{path}.node"), &l.node)?;
            let nonneg = |name: &str, v: Option<f64>| match v {
                Some(x) if x.is_finite() && x >= 0.0 => Ok(()),
                _ => Err(ModelError::invalid(format!("{path}.{name}"), "required and must be >= 0")),
            };
            match l.kind {
                LoadKind::Constant => nonneg("power", l.power)?,
                LoadKind::Sinusoid => {
                    nonneg("mean", l.mean)?;
                    nonneg("amplitude", l.amplitude)?;
                    nonneg("frequency", l.frequency)?;
                }
                LoadKind::Timeseries => match l.samples.as_deref() {
                    Some(s) if !s.is_empty() => {
                        if s.windows(2).any(|w| w[1].0 <= w[0].0) {
                            return Err(ModelError::invalid(format!("{path}.samples"), "times must be strictly increasing"));
                        }
                        if s.iter().any(|&(t, p)| !t.is_finite() || !p.is_finite()) {
                            return Err(ModelError::invalid(format!("{path}.samples"), "samples must be finite"));
                        }
                    }
                    _ => return Err(ModelError::invalid(format!("{path}.samples"), "at least one sample required")),
                },
            }
        }

        let needs_space = self.faces.iter().any(|f| f.active)
            || self
                .rad_couplings
                .as_ref()
                .is_some_and(|rc| rc.entries.iter().any(|e| e.from == SPACE || e.to == SPACE));
        if needs_space {
            match node_kinds.get(c.space_node.as_str()) {
                Some(NodeKind::Boundary) => {}
                Some(_) => {
                    return Err(ModelError::invalid(
                        "constants.space_node",
                        format!("space node '{}' must be a boundary node", c.space_node),
                    ))
                }
                None => {
                    return Err(ModelError::UnresolvedReference {
                        path: "constants.space_node".into(),
                        kind: "node",
                        id: c.space_node.clone(),
                    })
                }
            }
        }

        if let Some(rc) = &self.rad_couplings {
            for (i, e) in rc.entries.iter().enumerate() {
                let path = format!("rad_couplings.entries[{i}]");
                for (field, id) in [("from", &e.from), ("to", &e.to)] {
                    if id != SPACE && !face_ids.contains(id.as_str()) && !node_kinds.contains_key(id.as_str()) {
                        return Err(ModelError::UnresolvedReference {
                            path: format!("{path}.{field}"),
                            kind: "face or node",
                            id: id.clone(),
                        });
                    }
                }
                if !(e.gr.is_finite() && e.gr >= 0.0) {
                    return Err(ModelError::invalid(format!("{path}.gr"), "must be finite and >= 0"));
                }
            }
            for id in rc.rays.keys() {
                if !face_ids.contains(id.as_str()) {
                    return Err(ModelError::UnresolvedReference {
                        path: "rad_couplings.rays".into(),
                        kind: "face",
                        id: id.clone(),
                    });
                }
            }
        }

        if !node_kinds.values().any(|k| *k == NodeKind::Boundary) && self.orbit.is_none() {
            return Err(ModelError::invalid(
                "nodes",
                "at least one boundary node (or an orbit environment) is required",
            ));
        }

        if let Some(o) = &self.orbit {
            let e = &o.elements;
            if !(o.body.mu.is_finite() && o.body.mu > 0.0) {
                return Err(ModelError::invalid("orbit.body.mu", "must be > 0"));
            }
            if !(o.body.radius.is_finite() && o.body.radius > 0.0) {
                return Err(ModelError::invalid("orbit.body.radius", "must be > 0"));
            }
            if !(e.perigee_altitude.is_finite() && e.perigee_altitude >= 0.0) {
                return Err(ModelError::invalid("orbit.elements.perigee_altitude", "must be >= 0"));
            }
            if !(e.apogee_altitude.is_finite() && e.apogee_altitude >= e.perigee_altitude) {
                return Err(ModelError::invalid("orbit.elements.apogee_altitude", "must be >= perigee_altitude"));
            }
            if let SunModel::Fixed { direction } = &o.sun {
                let n = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
                if !(n.is_finite() && n > 0.0) {
                    return Err(ModelError::invalid("orbit.sun.direction", "must be a non-zero vector"));
                }
            }
        }
        Ok(())
    }
}
