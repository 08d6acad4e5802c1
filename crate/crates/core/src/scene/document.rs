//! Scene document loading: JSON scene format and ASCII grid maps.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::{
    Entity, EntityKind, FluentValue, Pose, SceneError, SceneGraph, SimConfig, Transition, Verb,
};

pub const DEFAULT_CELL_SIZE: f64 = 1.0;
/// Agent and object footprints relative to the map cell size.
const AGENT_HALF: f64 = 0.25;
const OBJECT_HALF: f64 = 0.15;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    #[serde(default)]
    cell_size: Option<f64>,
    #[serde(default)]
    ascii: Option<Vec<String>>,
    #[serde(default)]
    entities: Vec<EntityDoc>,
    #[serde(default)]
    transitions: Vec<Transition>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    config: Option<SimConfig>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EntityDoc {
    id: String,
    kind: EntityKind,
    pose: Pose,
    half_extents: [f64; 2],
    #[serde(default)]
    fluents: BTreeMap<String, FluentValue>,
    #[serde(default)]
    transitions: Vec<Transition>,
}

/// Hex SHA-256 of the document text; session logs pin replays to it.
pub fn scene_hash(document: &str) -> String {
    Sha256::digest(document.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Parse a scene document. Text starting with `{` is the JSON scene format,
/// anything else is read as a bare ASCII map with 1 m cells.
pub fn load_scene(document: &str) -> Result<SceneGraph, SceneError> {
    let doc = if document.trim_start().starts_with('{') {
        serde_json::from_str::<SceneDoc>(document).map_err(|e| SceneError::Parse {
            path: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })?
    } else {
        SceneDoc {
            cell_size: None,
            ascii: Some(document.lines().map(str::to_owned).collect()),
            entities: Vec::new(),
            transitions: Vec::new(),
            seed: 0,
            config: None,
        }
    };

    let mut scene = SceneGraph::empty();
    scene.rng_seed = doc.seed;
    if let Some(cfg) = doc.config {
        scene.config = cfg;
    }

    let cell = doc.cell_size.unwrap_or(DEFAULT_CELL_SIZE);
    if !(cell.is_finite() && cell > 0.0) {
        return Err(parse_err("cell_size", format!("must be positive, got {cell}")));
    }
    if let Some(rows) = &doc.ascii {
        for e in ascii_entities(rows, cell)? {
            insert_unique(&mut scene, e, "ascii")?;
        }
    }
    for (i, e) in doc.entities.into_iter().enumerate() {
        let path = format!("entities[{i}]");
        let entity = validate_entity(e, &path)?;
        insert_unique(&mut scene, entity, &path)?;
    }

    scene.transitions = doc.transitions;
    scene.transitions.extend(default_transitions());
    check_overlaps(&scene)?;
    Ok(scene)
}

fn parse_err(path: impl Into<String>, message: impl Into<String>) -> SceneError {
    SceneError::Parse { path: path.into(), message: message.into() }
}

fn insert_unique(scene: &mut SceneGraph, e: Entity, path: &str) -> Result<(), SceneError> {
    if scene.entities.contains_key(&e.id) {
        return Err(parse_err(path, format!("duplicate entity id `{}`", e.id)));
    }
    scene.entities.insert(e.id.clone(), e);
    Ok(())
}

fn validate_entity(e: EntityDoc, path: &str) -> Result<Entity, SceneError> {
    if e.id.is_empty() {
        return Err(parse_err(format!("{path}.id"), "empty id"));
    }
    if ![e.pose.x, e.pose.y, e.pose.yaw].iter().all(|v| v.is_finite()) {
        return Err(parse_err(format!("{path}.pose"), "non-finite pose"));
    }
    if !e.half_extents.iter().all(|h| h.is_finite() && *h > 0.0) {
        return Err(parse_err(format!("{path}.half_extents"), "half extents must be positive"));
    }
    let mut entity = Entity::new(e.id, e.kind, Pose::new(e.pose.x, e.pose.y, e.pose.yaw), e.half_extents);
    entity.fluents = e.fluents;
    entity.transitions = e.transitions;
    if entity.kind == EntityKind::Door {
        add_door_fluents(&mut entity);
    }
    Ok(entity)
}

fn add_door_fluents(door: &mut Entity) {
    let open = door.fluent("open").and_then(FluentValue::as_bool).unwrap_or(false);
    door.fluents.entry("open".into()).or_insert(FluentValue::Bool(open));
    let angle = if open { FRAC_PI_2 } else { 0.0 };
    door.fluents.entry("angle".into()).or_insert(FluentValue::scalar(angle, 0.0, FRAC_PI_2));
}

fn ascii_entities(rows: &[String], cell: f64) -> Result<Vec<Entity>, SceneError> {
    let n_rows = rows.len();
    let mut out = Vec::new();
    let mut agents = 0;
    let mut doors = 0;
    let mut letters: BTreeMap<char, usize> = BTreeMap::new();
    for (r, row) in rows.iter().enumerate() {
        for (c, ch) in row.chars().enumerate() {
            // row 0 is the top of the map; y grows upward
            let x = (c as f64 + 0.5) * cell;
            let y = ((n_rows - 1 - r) as f64 + 0.5) * cell;
            let full = [cell / 2.0, cell / 2.0];
            let entity = match ch {
                '.' | ' ' => continue,
                '#' => Entity::new(format!("wall_{r:03}_{c:03}"), EntityKind::Wall, Pose::new(x, y, 0.0), full),
                'D' => {
                    doors += 1;
                    let mut d = Entity::new(format!("door{doors}"), EntityKind::Door, Pose::new(x, y, 0.0), full);
                    add_door_fluents(&mut d);
                    d
                }
                'A' => {
                    agents += 1;
                    let h = AGENT_HALF * cell;
                    Entity::new(format!("agent{agents}"), EntityKind::Agent, Pose::new(x, y, 0.0), [h, h])
                }
                'G' => Entity::new("goal", EntityKind::Object, Pose::new(x, y, 0.0), full)
                    .with_fluent("goal", FluentValue::Bool(true)),
                'a'..='z' => {
                    let n = letters.entry(ch).or_insert(0);
                    *n += 1;
                    let id = if *n == 1 { ch.to_string() } else { format!("{ch}{n}") };
                    let h = OBJECT_HALF * cell;
                    Entity::new(id, EntityKind::Object, Pose::new(x, y, 0.0), [h, h])
                }
                other => {
                    return Err(parse_err(
                        format!("ascii[{r}][{c}]"),
                        format!("unknown map character `{other}`"),
                    ))
                }
            };
            out.push(entity);
        }
    }
    Ok(out)
}

/// Built-in transition rows, consulted after any the document declares.
pub(crate) fn default_transitions() -> Vec<Transition> {
    let b = FluentValue::Bool;
    let open_door = |verb| Transition {
        verb,
        target_kind: Some(EntityKind::Door),
        pre: BTreeMap::from([("open".to_owned(), b(false))]),
        post: BTreeMap::from([
            ("open".to_owned(), b(true)),
            ("angle".to_owned(), FluentValue::scalar(FRAC_PI_2, 0.0, FRAC_PI_2)),
        ]),
    };
    let toggle = |from: bool| Transition {
        verb: Verb::PressButton,
        target_kind: Some(EntityKind::Object),
        pre: BTreeMap::from([("on".to_owned(), b(from))]),
        post: BTreeMap::from([("on".to_owned(), b(!from))]),
    };
    vec![open_door(Verb::PushDoor), open_door(Verb::TwistDoor), toggle(false), toggle(true)]
}

fn check_overlaps(scene: &SceneGraph) -> Result<(), SceneError> {
    let solid: Vec<&Entity> = scene
        .entities
        .values()
        .filter(|e| matches!(e.kind, EntityKind::Wall | EntityKind::Door | EntityKind::Agent))
        .collect();
    for (i, a) in solid.iter().enumerate() {
        let ba = a.aabb();
        for b in &solid[i + 1..] {
            // an open door swings out of the way of agents
            if (a.is_open_door() && b.kind == EntityKind::Agent) || (b.is_open_door() && a.kind == EntityKind::Agent) {
                continue;
            }
            if ba.overlaps(&b.aabb()) {
                return Err(SceneError::StaticOverlap(a.id.clone(), b.id.clone()));
            }
        }
    }
    Ok(())
}
