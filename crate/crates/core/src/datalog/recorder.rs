use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{LogError, LogEvent, LogRecord, Patch, SessionLog, PATCH_U, PATCH_V};
use crate::scene::{
    load_scene, scene_hash, ActionRequest, Entity, Outcome, Pose, SceneGraph, SimEvent, VelocityCommand, Verb,
};

/// Idle agents are still sampled every this many ticks (10 Hz).
pub const IDLE_ODOM_PERIOD: u64 = 6;

/// Drives a scene and logs everything needed to replay it: the commands fed
/// in, and the odometry, actions, contacts and collisions that came out.
#[derive(Debug)]
pub struct Recorder {
    scene: SceneGraph,
    log: SessionLog,
    last_logged: BTreeMap<String, Pose>,
}

impl Recorder {
    /// Start recording; every agent's initial pose is logged.
    pub fn new(scene: SceneGraph, log: SessionLog) -> Result<Self, LogError> {
        let mut r = Self { scene, log, last_logged: BTreeMap::new() };
        let t = r.scene.tick;
        for (agent, pose) in agent_poses(&r.scene) {
            r.log.record(odom_record(t, &agent, pose))?;
            r.last_logged.insert(agent, pose);
        }
        Ok(r)
    }

    pub fn scene(&self) -> &SceneGraph {
        &self.scene
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    pub fn into_parts(self) -> (SceneGraph, SessionLog) {
        (self.scene, self.log)
    }

    pub fn step(&mut self, commands: &[VelocityCommand], actions: &[ActionRequest]) -> Result<Vec<SimEvent>, LogError> {
        let t = self.scene.tick;
        let (next, events) = self.scene.step(commands, actions)?;
        for c in commands {
            self.log.record(LogRecord { t, event: LogEvent::Cmd { agent: c.agent_id.clone(), v: c.v, omega: c.omega } })?;
        }
        let t1 = next.tick;
        for ev in &events {
            match ev {
                SimEvent::Collision { agent_id, other_id, .. } => self.log.record(LogRecord {
                    t: t1,
                    event: LogEvent::Collision { agent: agent_id.clone(), other: other_id.clone() },
                })?,
                SimEvent::Action(a) => {
                    self.log.record(LogRecord {
                        t: t1,
                        event: LogEvent::Action {
                            agent: a.agent_id.clone(),
                            verb: a.verb,
                            target: a.target_id.clone(),
                            outcome: a.outcome,
                        },
                    })?;
                    if a.verb == Verb::Grasp && a.outcome == Outcome::Ok {
                        let object_id = a.target_id.as_deref().unwrap_or_default();
                        if let (Some(agent), Some(object)) = (self.scene.get(&a.agent_id), self.scene.get(object_id)) {
                            let p = contact_patch(agent, object);
                            self.log.record(LogRecord {
                                t: t1,
                                event: LogEvent::Contact {
                                    agent: a.agent_id.clone(),
                                    object: object_id.to_owned(),
                                    face: p.face,
                                    u: p.u,
                                    v: p.v,
                                },
                            })?;
                        }
                    }
                }
            }
        }
        for (agent, pose) in due_odometry(&next, &self.last_logged) {
            self.log.record(odom_record(t1, &agent, pose))?;
            self.last_logged.insert(agent, pose);
        }
        self.scene = next;
        Ok(events)
    }
}

fn agent_poses(scene: &SceneGraph) -> Vec<(String, Pose)> {
    scene.agents().map(|a| (a.id.clone(), a.pose)).collect()
}

fn odom_record(t: u64, agent: &str, p: Pose) -> LogRecord {
    LogRecord { t, event: LogEvent::Odom { agent: agent.to_owned(), x: p.x, y: p.y, yaw: p.yaw } }
}

fn same_bits(a: &Pose, b: &Pose) -> bool {
    a.x.to_bits() == b.x.to_bits() && a.y.to_bits() == b.y.to_bits() && a.yaw.to_bits() == b.yaw.to_bits()
}

/// Agents whose pose changed since their last sample, plus all agents on
/// idle-period ticks.
fn due_odometry(scene: &SceneGraph, last: &BTreeMap<String, Pose>) -> Vec<(String, Pose)> {
    let periodic = scene.tick % IDLE_ODOM_PERIOD == 0;
    agent_poses(scene)
        .into_iter()
        .filter(|(id, pose)| periodic || last.get(id).is_none_or(|p| !same_bits(p, pose)))
        .collect()
}

/// Patch on the object's side face nearest the agent. Faces: 0 = +x, 1 = +y,
/// 2 = -x, 3 = -y. `u` runs along the face, counter-clockwise seen from
/// above; `v` is the mid row since the scene has no height.
pub(crate) fn contact_patch(agent: &Entity, object: &Entity) -> Patch {
    let [hx, hy] = object.half_extents;
    let dx = agent.pose.x - object.pose.x;
    let dy = agent.pose.y - object.pose.y;
    let (face, lateral, half) = if (dx / hx).abs() >= (dy / hy).abs() {
        if dx >= 0.0 {
            (0, dy, hy)
        } else {
            (2, -dy, hy)
        }
    } else if dy >= 0.0 {
        (1, -dx, hx)
    } else {
        (3, dx, hx)
    };
    let frac = ((lateral / half).clamp(-1.0, 1.0) + 1.0) / 2.0;
    let u = ((frac * PATCH_U as f64) as usize).min(PATCH_U - 1);
    Patch { face, u, v: PATCH_V / 2 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub tick: u64,
    pub agent: String,
    /// Re-simulated pose, if the sampling rule produces one at this tick.
    pub expected: Option<Pose>,
    /// Logged pose, if present.
    pub actual: Option<Pose>,
}

#[derive(Debug, Clone)]
pub struct ReplayReport {
    pub final_scene: SceneGraph,
    pub divergences: Vec<Divergence>,
}

impl ReplayReport {
    pub fn is_clean(&self) -> bool {
        self.divergences.is_empty()
    }
}

/// Re-simulate a session's commands and actions against the scene document
/// and compare the odometry stream bitwise.
pub fn replay(session: &SessionLog, document: &str) -> Result<ReplayReport, LogError> {
    let actual_hash = scene_hash(document);
    if actual_hash != session.scene_hash {
        return Err(LogError::SceneHashMismatch { logged: session.scene_hash.clone(), actual: actual_hash });
    }
    let mut scene = load_scene(document)?;
    let records = session.records();
    if records.is_empty() {
        return Ok(ReplayReport { final_scene: scene, divergences: Vec::new() });
    }

    #[derive(Default)]
    struct Tick {
        cmds: Vec<VelocityCommand>,
        actions: Vec<ActionRequest>,
        odom: BTreeMap<String, Pose>,
    }
    let mut ticks: BTreeMap<u64, Tick> = BTreeMap::new();
    for r in records {
        match &r.event {
            LogEvent::Cmd { agent, v, omega } => ticks.entry(r.t).or_default().cmds.push(VelocityCommand::new(agent, *v, *omega)),
            // actions are stamped with the tick they completed on
            LogEvent::Action { agent, verb, target, .. } if r.t > 0 => {
                ticks.entry(r.t - 1).or_default().actions.push(ActionRequest::new(agent, *verb, target.as_deref()))
            }
            LogEvent::Odom { agent, x, y, yaw } => {
                ticks.entry(r.t).or_default().odom.insert(agent.clone(), Pose { x: *x, y: *y, yaw: *yaw });
            }
            _ => {}
        }
    }
    let start = records[0].t;
    let end = session.last_tick().unwrap_or(start);
    scene.tick = start;

    let mut divergences = Vec::new();
    let empty = Tick::default();
    let mut compare = |tick: u64, expected: &[(String, Pose)], logged: &BTreeMap<String, Pose>| {
        let expected: BTreeMap<&str, Pose> = expected.iter().map(|(a, p)| (a.as_str(), *p)).collect();
        let agents: std::collections::BTreeSet<&str> = expected.keys().copied().chain(logged.keys().map(String::as_str)).collect();
        for agent in agents {
            let e = expected.get(agent).copied();
            let a = logged.get(agent).copied();
            let equal = matches!((&e, &a), (Some(x), Some(y)) if same_bits(x, y));
            if !equal {
                divergences.push(Divergence { tick, agent: agent.to_owned(), expected: e, actual: a });
            }
        }
    };

    let initial = agent_poses(&scene);
    compare(start, &initial, &ticks.get(&start).unwrap_or(&empty).odom);
    let mut last: BTreeMap<String, Pose> = initial.into_iter().collect();
    for tick in start..end {
        let cur = ticks.get(&tick).unwrap_or(&empty);
        scene.step_in_place(&cur.cmds, &cur.actions)?;
        let due = due_odometry(&scene, &last);
        compare(tick + 1, &due, &ticks.get(&(tick + 1)).unwrap_or(&empty).odom);
        // follow the log so one tampered row is reported once
        for (agent, pose) in due {
            last.insert(agent, pose);
        }
    }
    Ok(ReplayReport { final_scene: scene, divergences })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::EntityKind;

    const MAP: &str = "#######\n#A...m#\n#.....#\n#######";

    fn recorder() -> Recorder {
        let scene = load_scene(MAP).unwrap();
        Recorder::new(scene, SessionLog::new("s", "subj", scene_hash(MAP))).unwrap()
    }

    #[test]
    fn idle_agent_sampled_every_period() {
        let mut r = recorder();
        for _ in 0..12 {
            r.step(&[], &[]).unwrap();
        }
        let ticks: Vec<u64> = r.log().odometry("agent1").map(|s| s.tick).collect();
        assert_eq!(ticks, vec![0, 6, 12]);
    }

    #[test]
    fn moving_agent_sampled_every_tick_with_monotone_x() {
        let mut r = recorder();
        for _ in 0..30 {
            r.step(&[VelocityCommand::new("agent1", 1.0, 0.0)], &[]).unwrap();
        }
        let xs: Vec<f64> = r.log().odometry("agent1").map(|s| s.pose.x).collect();
        assert_eq!(xs.len(), 31);
        assert!(xs.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn fresh_recording_replays_clean() {
        let mut r = recorder();
        for i in 0..90 {
            let omega = if i % 20 < 10 { 1.0 } else { -0.5 };
            r.step(&[VelocityCommand::new("agent1", 2.0, omega)], &[]).unwrap();
        }
        let rep = replay(r.log(), MAP).unwrap();
        assert!(rep.is_clean(), "{:?}", rep.divergences);
        assert_eq!(&rep.final_scene, r.scene());
    }

    #[test]
    fn tampered_row_diverges_at_its_tick() {
        let mut r = recorder();
        for _ in 0..20 {
            r.step(&[VelocityCommand::new("agent1", 1.0, 0.0)], &[]).unwrap();
        }
        let mut text = String::new();
        for line in r.log().to_jsonl().lines() {
            let mut rec: serde_json::Value = serde_json::from_str(line).unwrap();
            if rec["kind"] == "odom" && rec["t"] == 7 {
                rec["x"] = serde_json::json!(99.0);
            }
            text.push_str(&rec.to_string());
            text.push('\n');
        }
        let log = SessionLog::from_jsonl(text.as_bytes()).unwrap();
        let rep = replay(&log, MAP).unwrap();
        assert_eq!(rep.divergences.len(), 1);
        assert_eq!(rep.divergences[0].tick, 7);
        assert_eq!(rep.divergences[0].actual.unwrap().x, 99.0);
    }

    #[test]
    fn empty_session_and_hash_mismatch() {
        let log = SessionLog::new("s", "p", scene_hash(MAP));
        let rep = replay(&log, MAP).unwrap();
        assert!(rep.is_clean());
        assert!(matches!(replay(&log, "###"), Err(LogError::SceneHashMismatch { .. })));
    }

    #[test]
    fn grasp_logs_contact_and_replays() {
        let mut r = recorder();
        // drive next to the mug at x = 5.5
        while r.scene().agent("agent1").unwrap().pose.x < 4.5 {
            r.step(&[VelocityCommand::new("agent1", 2.0, 0.0)], &[]).unwrap();
        }
        r.step(&[], &[ActionRequest::new("agent1", Verb::Grasp, Some("m"))]).unwrap();
        assert_eq!(r.scene().get("m").unwrap().attached_to.as_deref(), Some("agent1"));
        let contacts: Vec<_> = r.log().contacts().collect();
        assert_eq!(contacts.len(), 1);
        // agent approaches from -x, level with the object center
        assert_eq!(contacts[0].patch, Patch { face: 2, u: 4, v: 4 });
        for _ in 0..10 {
            r.step(&[VelocityCommand::new("agent1", -1.0, 0.5)], &[]).unwrap();
        }
        assert!(replay(r.log(), MAP).unwrap().is_clean());
    }

    #[test]
    fn patch_faces() {
        let obj = Entity::new("o", EntityKind::Object, Pose::new(0.0, 0.0, 0.0), [0.5, 0.5]);
        let at = |x, y| contact_patch(&Entity::new("a", EntityKind::Agent, Pose::new(x, y, 0.0), [0.2, 0.2]), &obj);
        assert_eq!(at(1.0, 0.0).face, 0);
        assert_eq!(at(0.0, 1.0).face, 1);
        assert_eq!(at(-1.0, 0.0).face, 2);
        assert_eq!(at(0.0, -1.0).face, 3);
        assert_eq!(at(1.0, -0.49).u, 0);
        assert_eq!(at(1.0, 0.49).u, 7);
        assert_eq!(at(1.0, 5.0).face, 1);
    }
}
