//! Scene graph and kinematic simulation.
//!
//! The world is planar: every entity has a yaw-only [`Pose`] and an
//! axis-aligned collision box given by its half extents. Agents are driven
//! by unicycle [`VelocityCommand`]s at a fixed 60 Hz tick, walls and closed
//! doors stop them, and objects can be rigidly attached to an agent.

mod document;
mod geometry;
mod grid;
mod interact;
mod raycast;
mod sim;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use document::{load_scene, scene_hash, DEFAULT_CELL_SIZE};
pub use geometry::Aabb;
pub use grid::{occupancy_grid, occupancy_grid_in, Cell, OccupancyGrid};
pub use interact::{grasp_attach, interact, release};
pub use raycast::{cast_ray, render_first_person, DepthScan, RayHit};
pub use sim::{ActionRequest, SimEvent};

/// Ticks per simulated second.
pub const TICK_HZ: u64 = 60;
/// Fixed simulation timestep in seconds.
pub const DT: f64 = 1.0 / TICK_HZ as f64;
pub const DEFAULT_V_MAX: f64 = 2.0;
pub const DEFAULT_OMEGA_MAX: f64 = PI;
pub const DEFAULT_REACH: f64 = 1.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },
    #[error("static overlap between `{0}` and `{1}`")]
    StaticOverlap(String, String),
    #[error("unknown agent `{0}`")]
    UnknownAgent(String),
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("conflicting duplicate commands for agent `{0}`")]
    DuplicateCommand(String),
    #[error("verb `{verb}` is not applicable to {kind:?} `{target}`")]
    Inapplicable { verb: Verb, kind: EntityKind, target: String },
    #[error("verb `{0}` requires a target")]
    MissingTarget(Verb),
    #[error("hands full: agent `{0}` already holds an object")]
    HandsFull(String),
    #[error("object `{object}` is already attached to `{holder}`")]
    AlreadyAttached { object: String, holder: String },
    #[error("`{target}` is out of reach of `{agent}`")]
    OutOfReach { agent: String, target: String },
    #[error("agent `{0}` is not holding anything")]
    NotHolding(String),
    #[error("invalid sensor request: {0}")]
    InvalidSensor(String),
}

/// Wrap an angle into `[-π, π)`.
pub fn normalize_angle(a: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut r = (a + PI).rem_euclid(two_pi);
    if r >= two_pi {
        r -= two_pi;
    }
    let out = r - PI;
    if out >= PI {
        -PI
    } else {
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw: normalize_angle(yaw) }
    }

    /// `self ∘ local`: express a pose given in this frame in the parent frame.
    pub fn compose(&self, local: &Pose) -> Pose {
        let (s, c) = self.yaw.sin_cos();
        Pose::new(
            self.x + c * local.x - s * local.y,
            self.y + s * local.x + c * local.y,
            self.yaw + local.yaw,
        )
    }

    /// Pose of `other` expressed in this frame (`self⁻¹ ∘ other`).
    pub fn relative(&self, other: &Pose) -> Pose {
        let (s, c) = self.yaw.sin_cos();
        let dx = other.x - self.x;
        let dy = other.y - self.y;
        Pose::new(c * dx + s * dy, -s * dx + c * dy, other.yaw - self.yaw)
    }

    pub fn heading(&self) -> [f64; 2] {
        let (s, c) = self.yaw.sin_cos();
        [c, s]
    }

    pub fn distance_to(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Wall,
    Door,
    Object,
    Agent,
}

/// Time-varying symbolic property of an entity.
#[derive(Debug, Clone, PartialEq)]
pub enum FluentValue {
    Bool(bool),
    /// Scalar with its declared `[lo, hi]` range.
    Scalar { value: f64, lo: f64, hi: f64 },
    Label(String),
}

impl FluentValue {
    pub fn scalar(value: f64, lo: f64, hi: f64) -> Self {
        FluentValue::Scalar { value: value.clamp(lo, hi), lo, hi }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            FluentValue::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            FluentValue::Scalar { value, .. } => Some(*value),
            _ => None,
        }
    }

    pub fn as_label(&self) -> Option<&str> {
        match self {
            FluentValue::Label(s) => Some(s),
            _ => None,
        }
    }

    /// Precondition match: scalars compare by value only.
    fn matches(&self, want: &FluentValue) -> bool {
        match (self, want) {
            (FluentValue::Bool(a), FluentValue::Bool(b)) => a == b,
            (FluentValue::Label(a), FluentValue::Label(b)) => a == b,
            (FluentValue::Scalar { value: a, .. }, FluentValue::Scalar { value: b, .. }) => a == b,
            _ => false,
        }
    }
}

impl Serialize for FluentValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        match self {
            FluentValue::Bool(b) => s.serialize_bool(*b),
            FluentValue::Label(l) => s.serialize_str(l),
            FluentValue::Scalar { value, lo, hi } => {
                if lo.is_infinite() && hi.is_infinite() {
                    return s.serialize_f64(*value);
                }
                let mut m = s.serialize_map(Some(3))?;
                m.serialize_entry("value", value)?;
                m.serialize_entry("lo", lo)?;
                m.serialize_entry("hi", hi)?;
                m.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for FluentValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Ranged {
            value: f64,
            lo: f64,
            hi: f64,
        }
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Bool(bool),
            Num(f64),
            Label(String),
            Ranged(Ranged),
        }
        match Raw::deserialize(d)? {
            Raw::Bool(b) => Ok(FluentValue::Bool(b)),
            Raw::Num(v) => Ok(FluentValue::Scalar { value: v, lo: f64::NEG_INFINITY, hi: f64::INFINITY }),
            Raw::Label(l) => Ok(FluentValue::Label(l)),
            Raw::Ranged(r) => {
                if !(r.lo <= r.hi) || r.value < r.lo || r.value > r.hi {
                    return Err(serde::de::Error::custom(format!(
                        "scalar fluent {} outside its range [{}, {}]",
                        r.value, r.lo, r.hi
                    )));
                }
                Ok(FluentValue::Scalar { value: r.value, lo: r.lo, hi: r.hi })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verb {
    PushDoor,
    TwistDoor,
    PressButton,
    Pour,
    Grasp,
    Release,
    Wave,
    Stretch,
}

impl Verb {
    pub fn needs_target(self) -> bool {
        !matches!(self, Verb::Wave | Verb::Stretch)
    }
}

impl std::fmt::Display for Verb {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned));
        f.write_str(s.as_deref().unwrap_or("?"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    Blocked,
    OutOfRange,
}

/// One row of a fluent transition table: when `verb` is applied to a target
/// whose fluents match `pre`, the fluents in `post` are written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transition {
    pub verb: Verb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_kind: Option<EntityKind>,
    #[serde(default)]
    pub pre: BTreeMap<String, FluentValue>,
    #[serde(default)]
    pub post: BTreeMap<String, FluentValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub kind: EntityKind,
    pub pose: Pose,
    pub half_extents: [f64; 2],
    #[serde(default)]
    pub fluents: BTreeMap<String, FluentValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attached_to: Option<String>,
    /// Object pose in the holder's frame, frozen at attach time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attach_offset: Option<Pose>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transitions: Vec<Transition>,
}

impl Entity {
    pub fn new(id: impl Into<String>, kind: EntityKind, pose: Pose, half_extents: [f64; 2]) -> Self {
        Self {
            id: id.into(),
            kind,
            pose,
            half_extents,
            fluents: BTreeMap::new(),
            attached_to: None,
            attach_offset: None,
            transitions: Vec::new(),
        }
    }

    pub fn with_fluent(mut self, name: &str, value: FluentValue) -> Self {
        self.fluents.insert(name.to_owned(), value);
        self
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::around(self.pose.x, self.pose.y, self.half_extents)
    }

    pub fn fluent(&self, name: &str) -> Option<&FluentValue> {
        self.fluents.get(name)
    }

    /// Doors block motion and sight until their `open` fluent is true.
    pub fn is_open_door(&self) -> bool {
        self.kind == EntityKind::Door && self.fluent("open").and_then(FluentValue::as_bool) == Some(true)
    }

    /// Walls and closed doors.
    pub fn is_static_blocker(&self) -> bool {
        match self.kind {
            EntityKind::Wall => true,
            EntityKind::Door => !self.is_open_door(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub agent_id: String,
    /// Forward speed, m/s.
    pub v: f64,
    /// Yaw rate, rad/s.
    pub omega: f64,
}

impl VelocityCommand {
    pub fn new(agent_id: impl Into<String>, v: f64, omega: f64) -> Self {
        Self { agent_id: agent_id.into(), v, omega }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionEvent {
    pub tick: u64,
    pub agent_id: String,
    pub verb: Verb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_id: Option<String>,
    pub outcome: Outcome,
}

/// Kinematic limits and interaction radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub v_max: f64,
    pub omega_max: f64,
    pub reach: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { v_max: DEFAULT_V_MAX, omega_max: DEFAULT_OMEGA_MAX, reach: DEFAULT_REACH }
    }
}

/// The simulated world state. Entities are keyed and iterated by ascending
/// id, which fixes every tie-break.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub entities: BTreeMap<String, Entity>,
    pub tick: u64,
    pub rng_seed: u64,
    #[serde(default)]
    pub config: SimConfig,
    /// Scene-wide transition table, consulted after entity-local rows.
    #[serde(default)]
    pub transitions: Vec<Transition>,
}

impl SceneGraph {
    pub fn empty() -> Self {
        Self {
            entities: BTreeMap::new(),
            tick: 0,
            rng_seed: 0,
            config: SimConfig::default(),
            transitions: Vec::new(),
        }
    }

    /// Simulated seconds, derived from the tick counter.
    pub fn time(&self) -> f64 {
        self.tick as f64 / TICK_HZ as f64
    }

    pub fn get(&self, id: &str) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut Entity> {
        self.entities.get_mut(id)
    }

    pub fn agent(&self, id: &str) -> Result<&Entity, SceneError> {
        match self.entities.get(id) {
            Some(e) if e.kind == EntityKind::Agent => Ok(e),
            _ => Err(SceneError::UnknownAgent(id.to_owned())),
        }
    }

    pub fn agent_mut(&mut self, id: &str) -> Result<&mut Entity, SceneError> {
        match self.entities.get_mut(id) {
            Some(e) if e.kind == EntityKind::Agent => Ok(e),
            _ => Err(SceneError::UnknownAgent(id.to_owned())),
        }
    }

    pub fn agents(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values().filter(|e| e.kind == EntityKind::Agent)
    }

    pub fn of_kind(&self, kind: EntityKind) -> impl Iterator<Item = &Entity> {
        self.entities.values().filter(move |e| e.kind == kind)
    }

    /// Object currently held by `agent_id`, if any.
    pub fn held_by(&self, agent_id: &str) -> Option<&Entity> {
        self.entities
            .values()
            .find(|e| e.attached_to.as_deref() == Some(agent_id))
    }

    /// Union of all entity boxes; `None` for an empty scene.
    pub fn bounds(&self) -> Option<Aabb> {
        self.entities.values().map(Entity::aabb).reduce(|a, b| a.union(&b))
    }

    /// Canonical JSON snapshot (entities in id order, numbers shortest round-trip).
    pub fn snapshot_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("scene serializes");
        v["time"] = serde_json::json!(self.time());
        v
    }
}
