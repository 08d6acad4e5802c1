use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::geometry::{Aabb, CONTACT_EPS};
use super::interact::apply_request;
use super::{normalize_angle, ActionEvent, EntityKind, SceneError, SceneGraph, VelocityCommand, Verb, DT};

/// An interaction the caller wants performed during a step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRequest {
    pub agent_id: String,
    pub verb: Verb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_id: Option<String>,
}

impl ActionRequest {
    pub fn new(agent_id: impl Into<String>, verb: Verb, target_id: Option<&str>) -> Self {
        Self { agent_id: agent_id.into(), verb, target_id: target_id.map(str::to_owned) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SimEvent {
    /// Agent motion was clamped at contact with `other_id`.
    Collision { tick: u64, agent_id: String, other_id: String },
    Action(ActionEvent),
}

impl SimEvent {
    pub fn tick(&self) -> u64 {
        match self {
            SimEvent::Collision { tick, .. } => *tick,
            SimEvent::Action(a) => a.tick,
        }
    }
}

impl SceneGraph {
    /// Advance one fixed tick. Pure: returns the successor state.
    pub fn step(
        &self,
        commands: &[VelocityCommand],
        actions: &[ActionRequest],
    ) -> Result<(SceneGraph, Vec<SimEvent>), SceneError> {
        let mut next = self.clone();
        let events = next.step_in_place(commands, actions)?;
        Ok((next, events))
    }

    /// In-place variant of [`SceneGraph::step`]. On error the scene is untouched.
    pub fn step_in_place(
        &mut self,
        commands: &[VelocityCommand],
        actions: &[ActionRequest],
    ) -> Result<Vec<SimEvent>, SceneError> {
        let mut by_agent: BTreeMap<&str, &VelocityCommand> = BTreeMap::new();
        for cmd in commands {
            self.agent(&cmd.agent_id)?;
            if let Some(prev) = by_agent.insert(cmd.agent_id.as_str(), cmd) {
                if prev != cmd {
                    return Err(SceneError::DuplicateCommand(cmd.agent_id.clone()));
                }
            }
        }
        for req in actions {
            self.agent(&req.agent_id)?;
        }

        let new_tick = self.tick + 1;
        let mut events = Vec::new();
        for (agent_id, cmd) in by_agent {
            self.move_agent(agent_id, cmd, new_tick, &mut events);
        }
        self.carry_attached();
        self.tick = new_tick;
        for req in actions {
            events.push(SimEvent::Action(apply_request(self, req)));
        }
        Ok(events)
    }

    fn move_agent(&mut self, agent_id: &str, cmd: &VelocityCommand, tick: u64, events: &mut Vec<SimEvent>) {
        let cfg = self.config;
        let v = cmd.v.clamp(-cfg.v_max, cfg.v_max);
        let omega = cmd.omega.clamp(-cfg.omega_max, cfg.omega_max);
        let (v, omega) = (if v.is_finite() { v } else { 0.0 }, if omega.is_finite() { omega } else { 0.0 });

        let blockers: Vec<(&str, Aabb)> = self
            .entities
            .values()
            .filter(|e| e.id != agent_id && (e.is_static_blocker() || e.kind == EntityKind::Agent))
            .map(|e| (e.id.as_str(), e.aabb()))
            .collect();

        let agent = &self.entities[agent_id];
        let half = agent.half_extents;
        let yaw = normalize_angle(agent.pose.yaw + omega * DT);
        let (s, c) = yaw.sin_cos();
        let delta = [v * c * DT, v * s * DT];
        let mut pos = [agent.pose.x, agent.pose.y];
        let mut hits = Vec::new();

        // axis-separated sweep: x first, then y
        for axis in 0..2 {
            if delta[axis] == 0.0 {
                continue;
            }
            let bbox = Aabb::around(pos[0], pos[1], half);
            match sweep_axis(&bbox, axis, delta[axis], &blockers) {
                Some((contact, other)) => {
                    pos[axis] = contact;
                    hits.push(other.to_owned());
                }
                None => pos[axis] += delta[axis],
            }
        }

        let agent = self.entities.get_mut(agent_id).expect("agent exists");
        agent.pose.x = pos[0];
        agent.pose.y = pos[1];
        agent.pose.yaw = yaw;
        for other_id in hits {
            events.push(SimEvent::Collision { tick, agent_id: agent_id.to_owned(), other_id });
        }
    }

    /// Re-pose every attached object from its holder and frozen offset.
    pub(crate) fn carry_attached(&mut self) {
        let updates: Vec<(String, super::Pose)> = self
            .entities
            .values()
            .filter_map(|e| {
                let holder = self.entities.get(e.attached_to.as_deref()?)?;
                Some((e.id.clone(), holder.pose.compose(e.attach_offset.as_ref()?)))
            })
            .collect();
        for (id, pose) in updates {
            if let Some(e) = self.entities.get_mut(&id) {
                e.pose = pose;
            }
        }
    }
}

/// Returns the clamped center coordinate and the first blocker hit, if the
/// move along `axis` is obstructed. Ties go to the earliest id.
fn sweep_axis<'a>(bbox: &Aabb, axis: usize, d: f64, blockers: &[(&'a str, Aabb)]) -> Option<(f64, &'a str)> {
    let other = 1 - axis;
    let half = (bbox.max[axis] - bbox.min[axis]) / 2.0;
    let mut allowed = d.abs();
    let mut hit: Option<(f64, &str)> = None;
    for (id, b) in blockers {
        if !(bbox.min[other] < b.max[other] - CONTACT_EPS && b.min[other] < bbox.max[other] - CONTACT_EPS) {
            continue;
        }
        let (gap, contact) = if d > 0.0 {
            if b.min[axis] < bbox.max[axis] - CONTACT_EPS {
                continue;
            }
            (b.min[axis] - bbox.max[axis], b.min[axis] - half)
        } else {
            if b.max[axis] > bbox.min[axis] + CONTACT_EPS {
                continue;
            }
            (bbox.min[axis] - b.max[axis], b.max[axis] + half)
        };
        let gap = gap.max(0.0);
        if gap < allowed || (hit.is_none() && gap == allowed && gap < d.abs()) {
            allowed = gap;
            hit = Some((contact, id));
        }
    }
    hit
}
